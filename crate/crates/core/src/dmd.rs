//! Dynamic mode decomposition of a layer's weight trajectory.
//!
//! A snapshot matrix `W = [w_0 … w_{m-1}]` is split into the lagged pair
//! `W⁻ = [w_0 … w_{m-2}]`, `W⁺ = [w_1 … w_{m-1}]`. With the truncated SVD
//! `W⁻ ≈ U Σ Vᵀ` the one-step operator is projected onto the POD basis,
//! `A_r = Uᵀ W⁺ V Σ⁻¹`, and its eigendecomposition `A_r Y = Y Λ` gives the
//! modes `Φ = U Y`. A forecast `s` steps past the last snapshot is
//! `Re(Φ Λ^s b)` where `b` are the mode amplitudes of `w_{m-1}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{
    eig_general, gram_svd, solve_complex, ComplexMatrix, LinalgError, RealMatrix, SvdFactors,
};

/// Eigenvalues with modulus above this are rescaled to the unit circle when clamping.
pub const UNSTABLE_MODULUS: f64 = 1.0 + 1e-6;

#[derive(Debug, Error)]
pub enum DmdError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("need at least two snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("buffer full; fit or reset first")]
    BufferFull,
    #[error("snapshot length {got} does not match buffer dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("snapshot contains a non-finite entry at index {0}")]
    NonFiniteSnapshot(usize),
    #[error("snapshot buffer capacity must be at least 2, got {0}")]
    Capacity(usize),
    #[error("divergent DMD extrapolation (max |lambda| = {max_modulus})")]
    Divergent { max_modulus: f64 },
    #[error("snapshot dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-capacity store of one layer's flattened parameters, oldest first.
#[derive(Debug, Clone)]
pub struct SnapshotBuffer {
    layer_id: usize,
    dim: usize,
    capacity: usize,
    columns: Vec<Vec<f64>>,
}

impl SnapshotBuffer {
    pub fn new(layer_id: usize, dim: usize, capacity: usize) -> Result<Self, DmdError> {
        if capacity < 2 {
            return Err(DmdError::Capacity(capacity));
        }
        Ok(Self {
            layer_id,
            dim,
            capacity,
            columns: Vec::with_capacity(capacity),
        })
    }

    pub fn layer_id(&self) -> usize {
        self.layer_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.columns.len() == self.capacity
    }

    pub fn push(&mut self, w: &[f64]) -> Result<(), DmdError> {
        if self.is_full() {
            return Err(DmdError::BufferFull);
        }
        if w.len() != self.dim {
            return Err(DmdError::DimensionMismatch {
                expected: self.dim,
                got: w.len(),
            });
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(DmdError::NonFiniteSnapshot(i));
        }
        self.columns.push(w.to_vec());
        Ok(())
    }

    pub fn clear(&mut self) {
        self.columns.clear();
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.columns.last().map(Vec::as_slice)
    }

    /// The `dim x len` snapshot matrix.
    pub fn to_matrix(&self) -> Result<RealMatrix, DmdError> {
        Ok(RealMatrix::from_columns(&self.columns)?)
    }
}

/// How the mode amplitudes `b` are obtained from the anchor snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplitudes {
    /// `min ‖Φ b − w‖₂`; reproduces the anchor exactly when it lies in the span of the modes.
    #[default]
    LeastSquares,
    /// `b = Φᴴ w`, exact only when the modes are orthonormal.
    ConjugateTranspose,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmdOptions {
    /// Use `Φ = W⁺ V Σ⁻¹ Y` instead of the projected `Φ = U Y`.
    pub exact_modes: bool,
    pub amplitudes: Amplitudes,
    /// Rescale eigenvalues with `|λ| > 1 + 1e-6` onto the unit circle.
    pub clamp_unstable: bool,
}

impl Default for DmdOptions {
    fn default() -> Self {
        Self {
            exact_modes: false,
            amplitudes: Amplitudes::LeastSquares,
            clamp_unstable: false,
        }
    }
}

/// Fitted linear model of one layer's trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdModel {
    /// `n x r` complex modes.
    pub phi: ComplexMatrix,
    /// Step-wise eigenvalues, descending modulus.
    pub lambda: Vec<Complex64>,
    /// Amplitudes of the last snapshot.
    pub b: Vec<Complex64>,
    /// Snapshots used in the fit.
    pub m: usize,
}

impl DmdModel {
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn max_modulus(&self) -> f64 {
        self.lambda.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }
}

/// Lagged and forwarded snapshot matrices, each `n x (m-1)`.
pub fn shift_split(w: &RealMatrix) -> Result<(RealMatrix, RealMatrix), DmdError> {
    let m = w.cols();
    if m < 2 {
        return Err(DmdError::TooFewSnapshots(m));
    }
    Ok((w.columns(0, m - 1), w.columns(1, m)))
}

/// Fits a DMD model to an `n x m` snapshot matrix, `m ≥ 2`.
///
/// `tol` is the relative singular-value cutoff used to truncate `W⁻`.
pub fn fit_dmd(w: &RealMatrix, tol: f64, options: &DmdOptions) -> Result<DmdModel, DmdError> {
    let (w_minus, w_plus) = shift_split(w)?;
    let m = w.cols();
    let svd = if w_minus.rows() >= w_minus.cols() {
        gram_svd(&w_minus, tol)?
    } else {
        // short snapshots: factor the transpose and swap the singular vectors
        let t = gram_svd(&w_minus.transpose(), tol)?;
        SvdFactors {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        }
    };

    // V Σ⁻¹, m-1 x r
    let mut v_sinv = svd.v.clone();
    for i in 0..v_sinv.rows() {
        for (k, x) in v_sinv.row_mut(i).iter_mut().enumerate() {
            *x /= svd.sigma[k];
        }
    }
    let w_plus_v = w_plus.matmul(&v_sinv)?;
    let a_r = svd.u.transpose_matmul(&w_plus_v)?;
    let eig = eig_general(&a_r)?;

    let mut lambda = eig.values;
    if options.clamp_unstable {
        for l in lambda.iter_mut() {
            let modulus = l.norm();
            if modulus > UNSTABLE_MODULUS {
                *l /= modulus;
            }
        }
    }

    let basis = if options.exact_modes { &w_plus_v } else { &svd.u };
    let phi = ComplexMatrix::real_matmul(basis, &eig.vectors)?;

    let anchor = w.column(m - 1);
    let anchor_c: Vec<Complex64> = anchor.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let b = match options.amplitudes {
        Amplitudes::ConjugateTranspose => phi.adjoint_matvec(&anchor_c),
        Amplitudes::LeastSquares if !options.exact_modes => {
            // U has orthonormal columns, so min ‖U Y b − w‖ reduces to Y b = Uᵀ w
            let proj: Vec<Complex64> = svd
                .u
                .transpose()
                .matvec(&anchor)
                .into_iter()
                .map(|v| Complex64::new(v, 0.0))
                .collect();
            solve_complex(&eig.vectors, &proj)?
        }
        Amplitudes::LeastSquares => {
            let rhs = phi.adjoint_matvec(&anchor_c);
            solve_complex(&phi.gram(), &rhs)?
        }
    };

    Ok(DmdModel { phi, lambda, b, m })
}

/// `Φ Λ^s b` without discarding the imaginary part.
pub fn extrapolate_complex(model: &DmdModel, steps: u32) -> Result<Vec<Complex64>, DmdError> {
    let coeffs: Vec<Complex64> = model
        .lambda
        .iter()
        .zip(&model.b)
        .map(|(l, b)| l.powu(steps) * b)
        .collect();
    let out = model.phi.matvec(&coeffs);
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DmdError::Divergent {
            max_modulus: model.max_modulus(),
        });
    }
    Ok(out)
}

/// Real forecast `Re(Φ Λ^s b)`, `steps` past the last fitted snapshot.
pub fn extrapolate(model: &DmdModel, steps: u32) -> Result<Vec<f64>, DmdError> {
    let z = extrapolate_complex(model, steps)?;
    let re_norm = z.iter().map(|v| v.re * v.re).sum::<f64>().sqrt();
    let im_norm = z.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
    if im_norm > 1e-8 * re_norm.max(f64::MIN_POSITIVE) {
        log::debug!("DMD forecast carries imaginary residue {im_norm:e} (real part {re_norm:e})");
    }
    Ok(z.into_iter().map(|v| v.re).collect())
}

/// Writes a snapshot matrix as CSV.
///
/// Line 1 is the header `n,m,layer_id`, line 2 their values, then one line per
/// snapshot (column-major: each line holds the `n` entries of one column).
pub fn write_snapshot_csv(path: &Path, layer_id: usize, w: &RealMatrix) -> Result<(), DmdError> {
    let (n, m) = w.shape();
    let mut out = String::new();
    let _ = writeln!(out, "n,m,layer_id\n{n},{m},{layer_id}");
    for j in 0..m {
        let line: Vec<String> = (0..n).map(|i| w[(i, j)].to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a file produced by [`write_snapshot_csv`], returning `(layer_id, W)`.
pub fn read_snapshot_csv(path: &Path) -> Result<(usize, RealMatrix), DmdError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("n,m,layer_id") {
        return Err(DmdError::Dump("missing header `n,m,layer_id`".into()));
    }
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| DmdError::Dump("missing dimension line".into()))?
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| DmdError::Dump(format!("bad dimension line: {e}")))?;
    let [n, m, layer_id] = dims[..] else {
        return Err(DmdError::Dump("dimension line needs three fields".into()));
    };
    let mut columns = Vec::with_capacity(m);
    for (j, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let col: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DmdError::Dump(format!("column {j}: {e}")))?;
        if col.len() != n {
            return Err(DmdError::Dump(format!("column {j} has {} entries, expected {n}", col.len())));
        }
        columns.push(col);
    }
    if columns.len() != m {
        return Err(DmdError::Dump(format!("expected {m} columns, found {}", columns.len())));
    }
    Ok((layer_id, RealMatrix::from_columns(&columns)?))
}
