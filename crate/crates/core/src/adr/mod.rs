//! Reactive pollutant dispersion over a flat plate.
//!
//! A laminar boundary-layer velocity field (self-similar Blasius profile with
//! wall slip and transpiration) advects three species: two reactants emitted
//! from disc-shaped sources and the pollutant they produce. The steady
//! advection-diffusion-reaction system is discretized with finite differences
//! and its bilinear reaction term resolved by Picard iteration. Parameter sets
//! are drawn by Latin Hypercube Sampling and the pollutant field is sampled at
//! probe points to build a regression dataset.

mod blasius;
mod dataset;
mod lhs;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blasius::{
    shoot, solve_blasius, BlasiusSolution, FlowField, FlowSettings, Regularization, SimilarityScaling,
};
pub use dataset::{
    bilinear, build_dataset, default_probes, Affine, Dataset, DatasetConfig, ProbeSpec, DATASET_VERSION,
};
pub use lhs::lhs_sample;
pub use solver::{
    adr_residual, solve_adr, solve_sample, AdrOptions, BandedMatrix, Disc, Fields, NodalVelocity,
};

/// Kinematic viscosity of air used by the flow model.
pub const AIR_VISCOSITY: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum AdrError {
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error("shooting bracket failed: f'(eta_max) - 1 = {low:e} at f''(0) = -5 and {high:e} at f''(0) = 5")]
    ShootingBracket { low: f64, high: f64 },
    #[error("shooting did not converge: residual {residual:e} after {iterations} iterations")]
    ShootingConvergence { iterations: usize, residual: f64 },
    #[error("upstream of plate origin (x = {0})")]
    UpstreamOfOrigin(f64),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("non-finite velocity at node ({i}, {j})")]
    Velocity { i: usize, j: usize },
    #[error("zero pivot in banded LU at row {0}")]
    ZeroPivot(usize),
    #[error("Picard iteration did not converge after {iterations} iterations (change {change:e}, residual {residual:e})")]
    Picard {
        iterations: usize,
        change: f64,
        residual: f64,
    },
    #[error("linear solve residual {0:e} above tolerance")]
    LinearResidual(f64),
    #[error("sample {index} failed twice: first {first}; resample {second}")]
    SampleFailed {
        index: usize,
        first: String,
        second: String,
    },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Physical parameters of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdrParams {
    /// Production rate of the pollutant from the two reactants.
    pub k12: f64,
    /// Pollutant decay rate.
    pub k3: f64,
    /// Diffusion coefficient shared by all species.
    pub d: f64,
    /// Free-stream wind speed.
    pub u0: f64,
    /// Horizontal slip velocity at the ground.
    pub uh: f64,
    /// Vertical velocity at the ground is `uv / sqrt(x)`.
    pub uv: f64,
    pub nu: f64,
}

impl AdrParams {
    pub const NAMES: [&'static str; 6] = ["K12", "K3", "D", "U0", "uh", "uv"];

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            k12: v[0],
            k3: v[1],
            d: v[2],
            u0: v[3],
            uh: v[4],
            uv: v[5],
            nu: AIR_VISCOSITY,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.k12, self.k3, self.d, self.u0, self.uh, self.uv]
    }

    /// Checks positivity constraints; ranges are not enforced here.
    pub fn validate(&self) -> Result<(), AdrError> {
        let all = self.to_array();
        if all.iter().chain([&self.nu]).any(|v| !v.is_finite()) {
            return Err(AdrError::Params(format!("non-finite parameter in {self:?}")));
        }
        if self.u0 <= 0.0 {
            return Err(AdrError::Params(format!("U0 must be positive, got {}", self.u0)));
        }
        if self.d <= 0.0 {
            return Err(AdrError::Params(format!("D must be positive, got {}", self.d)));
        }
        if self.nu <= 0.0 {
            return Err(AdrError::Params(format!("nu must be positive, got {}", self.nu)));
        }
        if self.k12 < 0.0 || self.k3 < 0.0 {
            return Err(AdrError::Params("reaction rates must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for AdrParams {
    fn default() -> Self {
        Self {
            k12: 10.0,
            k3: 5.0,
            d: 0.1,
            u0: 1.0,
            uh: 0.0,
            uv: 0.0,
            nu: AIR_VISCOSITY,
        }
    }
}

/// Sampling interval per parameter, in [`AdrParams::NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges(pub [(f64, f64); 6]);

impl Default for ParamRanges {
    fn default() -> Self {
        Self([
            (1.0, 20.0),
            (0.0, 10.0),
            (0.01, 0.5),
            (0.01, 2.0),
            (-0.2, 0.2),
            (-0.2, 0.2),
        ])
    }
}

impl ParamRanges {
    pub fn contains(&self, p: &AdrParams) -> bool {
        self.0.iter().zip(p.to_array()).all(|(&(lo, hi), v)| v >= lo && v <= hi)
    }
}

/// Uniform node-centred grid on `[x0, x0 + lx] x [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub lx: f64,
    pub ly: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 32,
            x0: 0.05,
            lx: 4.0,
            ly: 2.0,
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<(), AdrError> {
        if self.nx < 8 || self.ny < 8 {
            return Err(AdrError::Grid(format!("need nx, ny >= 8, got {}x{}", self.nx, self.ny)));
        }
        if !(self.x0 > 0.0 && self.lx > 0.0 && self.ly > 0.0) || !(self.x0 + self.lx).is_finite() {
            return Err(AdrError::Grid(format!(
                "need x0 > 0 and positive extents, got x0={} lx={} ly={}",
                self.x0, self.lx, self.ly
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of node `(i, j)`; `j` runs fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x0 + self.lx && (0.0..=self.ly).contains(&y)
    }
}
