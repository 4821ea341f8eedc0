//! Regression dataset: LHS parameter sets in, pollutant probe values out.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    lhs_sample, solve_sample, AdrError, AdrOptions, AdrParams, Disc, FlowSettings, Grid, ParamRanges,
};
use crate::linalg::RealMatrix;
use crate::trainer::{Split, TrainData, TrainError};

pub const DATASET_VERSION: u32 = 1;

/// Probe placement: a count for the default stratified layout, or explicit points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSpec {
    Count(usize),
    Points(Vec<(f64, f64)>),
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec::Count(120)
    }
}

/// Probe density: uniform background plus bumps around the sources and along the ground.
fn probe_density(grid: &Grid, sources: &[Disc; 2], x: f64, y: f64) -> f64 {
    let near_source: f64 = sources
        .iter()
        .map(|s| {
            let r2 = (x - s.cx).powi(2) + (y - s.cy).powi(2);
            (-r2 / (2.0 * s.radius.max(1e-3).powi(2))).exp()
        })
        .fold(0.0, f64::max);
    let near_ground = (-y / (0.1 * grid.ly)).exp();
    1.0 + 4.0 * near_source + 2.0 * near_ground
}

/// Stratified probe layout with extra density next to the sources and the bottom wall.
///
/// The domain is cut into a 32×16 lattice of cells weighted by the density at
/// their centres; `count` equally spaced quantiles (each jittered inside its
/// stratum) of the cumulative weight select cells, and each probe is placed
/// uniformly inside its cell.
pub fn default_probes(grid: &Grid, sources: &[Disc; 2], count: usize, seed: u64) -> Vec<(f64, f64)> {
    const CX: usize = 32;
    const CY: usize = 16;
    let (hx, hy) = (grid.lx / CX as f64, grid.ly / CY as f64);
    let mut cumulative = Vec::with_capacity(CX * CY);
    let mut total = 0.0;
    for i in 0..CX {
        for j in 0..CY {
            let (x, y) = (grid.x0 + (i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy);
            total += probe_density(grid, sources, x, y);
            cumulative.push(total);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let u = (k as f64 + rng.gen::<f64>()) / count as f64 * total;
            let cell = cumulative.partition_point(|&c| c < u).min(CX * CY - 1);
            let (i, j) = (cell / CY, cell % CY);
            let x = grid.x0 + (i as f64 + rng.gen::<f64>()) * hx;
            let y = (j as f64 + rng.gen::<f64>()) * hy;
            (x, y)
        })
        .collect()
}

/// Bilinear interpolation of a nodal field at `(x, y)`.
pub fn bilinear(grid: &Grid, field: &[f64], x: f64, y: f64) -> Result<f64, AdrError> {
    if !grid.contains(x, y) {
        return Err(AdrError::Dataset(format!("probe ({x}, {y}) outside the domain")));
    }
    let fx = (x - grid.x0) / grid.dx();
    let fy = y / grid.dy();
    let i = (fx.floor() as usize).min(grid.nx - 2);
    let j = (fy.floor() as usize).min(grid.ny - 2);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let at = |ii, jj| field[grid.index(ii, jj)];
    Ok((1.0 - tx) * (1.0 - ty) * at(i, j)
        + tx * (1.0 - ty) * at(i + 1, j)
        + (1.0 - tx) * ty * at(i, j + 1)
        + tx * ty * at(i + 1, j + 1))
}

/// `v ↦ scale·v + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub scale: f64,
    pub offset: f64,
}

impl Affine {
    /// Maps `[min, max]` onto `[lo, hi]`. A constant column maps to `lo`.
    pub fn min_max(min: f64, max: f64, lo: f64, hi: f64) -> Self {
        let scale = if max > min { (hi - lo) / (max - min) } else { 1.0 };
        Self {
            scale,
            offset: lo - min * scale,
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        self.scale * v + self.offset
    }

    pub fn inverse(&self, z: f64) -> f64 {
        (z - self.offset) / self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub grid: Grid,
    pub probes: ProbeSpec,
    pub flow: FlowSettings,
    pub adr: AdrOptions,
    pub ranges: ParamRanges,
    pub train_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            seed: 0,
            grid: Grid::default(),
            probes: ProbeSpec::default(),
            flow: FlowSettings::default(),
            adr: AdrOptions::default(),
            ranges: ParamRanges::default(),
            train_fraction: 0.8,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), AdrError> {
        self.grid.validate()?;
        if self.n_samples < 10 {
            return Err(AdrError::Dataset(format!("need at least 10 samples, got {}", self.n_samples)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(AdrError::Dataset(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        for &(lo, hi) in &self.ranges.0 {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(AdrError::Dataset(format!("bad parameter range ({lo}, {hi})")));
            }
        }
        match &self.probes {
            ProbeSpec::Count(0) => Err(AdrError::Dataset("probe count must be positive".into())),
            ProbeSpec::Points(p) if p.is_empty() => Err(AdrError::Dataset("empty probe list".into())),
            ProbeSpec::Points(p) => match p.iter().find(|&&(x, y)| !self.grid.contains(x, y)) {
                Some((x, y)) => Err(AdrError::Dataset(format!("probe ({x}, {y}) outside the domain"))),
                None => Ok(()),
            },
            ProbeSpec::Count(_) => Ok(()),
        }
    }

    pub fn probe_points(&self) -> Vec<(f64, f64)> {
        match &self.probes {
            ProbeSpec::Count(n) => default_probes(&self.grid, &self.adr.sources, *n, self.seed),
            ProbeSpec::Points(p) => p.clone(),
        }
    }
}

/// Generated regression data with its scaling and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub version: u32,
    pub config: DatasetConfig,
    /// Physical parameters per sample, after any resampling.
    pub params: Vec<[f64; 6]>,
    /// Samples whose first LHS draw failed and were redrawn.
    pub resampled: Vec<usize>,
    /// Inputs normalized to `[-1, 1]` per column.
    pub inputs: Vec<Vec<f64>>,
    /// Pollutant probe values scaled to `[0, 1]`.
    pub outputs: Vec<Vec<f64>>,
    pub probes: Vec<(f64, f64)>,
    pub input_scaling: Vec<Affine>,
    pub output_scaling: Affine,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Max-norm discrete residual of each stored solve.
    pub residuals: Vec<f64>,
    pub picard_iterations: Vec<usize>,
}

struct Solved {
    params: AdrParams,
    resampled: bool,
    probe_values: Vec<f64>,
    residual: f64,
    iterations: usize,
}

fn solve_and_probe(config: &DatasetConfig, params: &AdrParams, probes: &[(f64, f64)]) -> Result<Solved, AdrError> {
    let fields = solve_sample(params, &config.grid, &config.flow, &config.adr)?;
    let probe_values = probes
        .iter()
        .map(|&(x, y)| bilinear(&config.grid, &fields.c3, x, y))
        .collect::<Result<Vec<_>, _>>()?;
    if probe_values.iter().any(|v| !v.is_finite()) {
        return Err(AdrError::Dataset("non-finite probe value".into()));
    }
    Ok(Solved {
        params: *params,
        resampled: false,
        probe_values,
        residual: fields.residual,
        iterations: fields.picard_iterations,
    })
}

fn resample_params(config: &DatasetConfig, index: usize) -> AdrParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0000_0000_0000 ^ index as u64);
    let mut v = [0.0; 6];
    for (k, &(lo, hi)) in config.ranges.0.iter().enumerate() {
        v[k] = lo + (hi - lo) * rng.gen::<f64>();
    }
    AdrParams::from_array(v)
}

/// Samples parameters, solves every case in parallel and assembles the scaled dataset.
///
/// A failed solve is retried once with a fresh uniform draw; a second failure aborts.
pub fn build_dataset(config: &DatasetConfig) -> Result<Dataset, AdrError> {
    config.validate()?;
    let n = config.n_samples;
    let probes = config.probe_points();
    let design = lhs_sample(n, &config.ranges.0, config.seed);

    let solved = (0..n)
        .into_par_iter()
        .map(|index| {
            let row = design.row(index);
            let params = AdrParams::from_array([row[0], row[1], row[2], row[3], row[4], row[5]]);
            match solve_and_probe(config, &params, &probes) {
                Ok(s) => Ok(s),
                Err(first) => {
                    let retry = resample_params(config, index);
                    log::warn!("sample {index} failed ({first}); resampling");
                    match solve_and_probe(config, &retry, &probes) {
                        Ok(mut s) => {
                            s.resampled = true;
                            Ok(s)
                        }
                        Err(second) => Err(AdrError::SampleFailed {
                            index,
                            first: first.to_string(),
                            second: second.to_string(),
                        }),
                    }
                }
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let params: Vec<[f64; 6]> = solved.iter().map(|s| s.params.to_array()).collect();
    let input_scaling: Vec<Affine> = (0..6)
        .map(|k| {
            let (min, max) = params
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[k]), b.max(p[k])));
            Affine::min_max(min, max, -1.0, 1.0)
        })
        .collect();
    let inputs = params
        .iter()
        .map(|p| p.iter().zip(&input_scaling).map(|(v, a)| a.forward(*v)).collect())
        .collect();

    let (min, max) = solved
        .iter()
        .flat_map(|s| s.probe_values.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let output_scaling = Affine::min_max(min, max, 0.0, 1.0);
    let outputs = solved
        .iter()
        .map(|s| s.probe_values.iter().map(|&v| output_scaling.forward(v)).collect())
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1)));
    let n_train = (config.train_fraction * n as f64).floor() as usize;
    let mut train_indices = order[..n_train].to_vec();
    let mut test_indices = order[n_train..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();

    Ok(Dataset {
        version: DATASET_VERSION,
        config: config.clone(),
        resampled: solved.iter().enumerate().filter(|(_, s)| s.resampled).map(|(i, _)| i).collect(),
        residuals: solved.iter().map(|s| s.residual).collect(),
        picard_iterations: solved.iter().map(|s| s.iterations).collect(),
        params,
        inputs,
        outputs,
        probes,
        input_scaling,
        output_scaling,
        train_indices,
        test_indices,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn num_probes(&self) -> usize {
        self.probes.len()
    }

    fn rows(rows: &[Vec<f64>], idx: &[usize]) -> RealMatrix {
        let picked: Vec<&[f64]> = idx.iter().map(|&i| rows[i].as_slice()).collect();
        RealMatrix::from_rows(&picked).expect("dataset rows have equal length")
    }

    pub fn train_data(&self) -> Result<TrainData, TrainError> {
        let train = Split::new(
            Self::rows(&self.inputs, &self.train_indices),
            Self::rows(&self.outputs, &self.train_indices),
        )?;
        let test = if self.test_indices.is_empty() {
            None
        } else {
            Some(Split::new(
                Self::rows(&self.inputs, &self.test_indices),
                Self::rows(&self.outputs, &self.test_indices),
            )?)
        };
        Ok(TrainData { train, test })
    }

    /// Probe values of sample `i` in physical units.
    pub fn raw_outputs(&self, i: usize) -> Vec<f64> {
        self.outputs[i].iter().map(|&z| self.output_scaling.inverse(z)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), AdrError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AdrError> {
        let ds: Dataset = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ds.version != DATASET_VERSION {
            return Err(AdrError::Dataset(format!(
                "unsupported dataset version {} (expected {DATASET_VERSION})",
                ds.version
            )));
        }
        if ds.inputs.len() != ds.outputs.len() || ds.inputs.iter().any(|r| r.len() != 6) {
            return Err(AdrError::Dataset("inconsistent input/output rows".into()));
        }
        if ds.outputs.iter().any(|r| r.len() != ds.probes.len()) {
            return Err(AdrError::Dataset("output width does not match probe count".into()));
        }
        if ds.train_indices.iter().chain(&ds.test_indices).any(|&i| i >= ds.inputs.len()) {
            return Err(AdrError::Dataset("split index out of range".into()));
        }
        Ok(ds)
    }

    /// One row per sample: index, split, normalized inputs, scaled outputs.
    pub fn write_csv(&self, path: &Path) -> Result<(), AdrError> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "index,split")?;
        for name in AdrParams::NAMES {
            write!(w, ",{name}")?;
        }
        for p in 0..self.num_probes() {
            write!(w, ",c3_{p}")?;
        }
        writeln!(w)?;
        let mut split = vec!["train"; self.len()];
        for &i in &self.test_indices {
            split[i] = "test";
        }
        for i in 0..self.len() {
            write!(w, "{i},{}", split[i])?;
            for v in self.inputs[i].iter().chain(&self.outputs[i]) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(n: usize) -> DatasetConfig {
        DatasetConfig {
            n_samples: n,
            seed: 11,
            grid: Grid {
                nx: 16,
                ny: 8,
                ..Grid::default()
            },
            probes: ProbeSpec::Count(12),
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn affine_round_trip() {
        let a = Affine::min_max(0.2, 3.7, -1.0, 1.0);
        assert!((a.forward(0.2) + 1.0).abs() < 1e-15);
        assert!((a.forward(3.7) - 1.0).abs() < 1e-15);
        for v in [0.2, 1.0, 3.7, 10.0] {
            assert!((a.inverse(a.forward(v)) - v).abs() < 1e-12);
        }
        let c = Affine::min_max(2.0, 2.0, 0.0, 1.0);
        assert_eq!(c.forward(2.0), 0.0);
    }

    #[test]
    fn bilinear_is_exact_on_bilinear_fields() {
        let g = Grid {
            nx: 9,
            ny: 8,
            ..Grid::default()
        };
        let f: Vec<f64> = (0..g.len())
            .map(|k| {
                let (x, y) = (g.x(k / g.ny), g.y(k % g.ny));
                1.0 + 2.0 * x - y + 0.5 * x * y
            })
            .collect();
        for (x, y) in [(0.05, 0.0), (1.3, 0.77), (4.05, 2.0), (2.0, 1.999)] {
            let exact = 1.0 + 2.0 * x - y + 0.5 * x * y;
            assert!((bilinear(&g, &f, x, y).unwrap() - exact).abs() < 1e-12);
        }
        assert!(bilinear(&g, &f, 0.0, 0.5).is_err());
    }

    #[test]
    fn default_probes_are_inside_and_denser_near_source() {
        let g = Grid::default();
        let srcs = AdrOptions::default().sources;
        let p = default_probes(&g, &srcs, 400, 5);
        assert_eq!(p.len(), 400);
        assert!(p.iter().all(|&(x, y)| g.contains(x, y)));
        let near = p.iter().filter(|&&(x, y)| x < 0.05 + g.lx / 4.0 && y < g.ly / 4.0).count();
        // a uniform layout would put about 1/16 of the probes in this corner
        assert!(near > 400 / 16 * 2, "{near}");
        assert_eq!(p, default_probes(&g, &srcs, 400, 5));
    }

    #[test]
    fn small_dataset_has_expected_shape_and_split() {
        let cfg = small_config(10);
        let ds = build_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.train_indices.len(), 8);
        assert_eq!(ds.test_indices.len(), 2);
        assert!(ds.inputs.iter().flatten().all(|&v| (-1.0..=1.0).contains(&v)));
        assert!(ds.outputs.iter().flatten().all(|&v| (0.0..=1.0 + 1e-15).contains(&v)));
        assert!(ds.residuals.iter().all(|&r| r <= 1e-8));
        for i in 0..ds.len() {
            let raw = ds.raw_outputs(i);
            for (z, r) in ds.outputs[i].iter().zip(&raw) {
                assert!((ds.output_scaling.forward(*r) - z).abs() < 1e-12);
            }
        }
        let td = ds.train_data().unwrap();
        assert_eq!(td.train.x.rows(), 8);
        assert_eq!(td.test.unwrap().y.cols(), 12);
    }

    #[test]
    fn save_load_round_trip() {
        let ds = build_dataset(&small_config(10)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        ds.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), ds);
        ds.write_csv(&dir.path().join("ds.csv")).unwrap();
    }

    #[test]
    fn rejects_too_few_samples() {
        assert!(build_dataset(&small_config(9)).is_err());
    }
}
