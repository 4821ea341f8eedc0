use super::{count_ops, symmetric_eigen, LinalgError, RealMatrix};

/// Singular values below `sigma[0] * ZERO_SIGMA_FLOOR` are treated as exact zeros.
pub const ZERO_SIGMA_FLOOR: f64 = 1e-14;

/// Truncated economy SVD `W ≈ U diag(sigma) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `n x r`, orthonormal columns.
    pub u: RealMatrix,
    /// `r` positive values, non-increasing.
    pub sigma: Vec<f64>,
    /// `m x r`, orthonormal columns.
    pub v: RealMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) Vᵀ`.
    pub fn reconstruct(&self) -> RealMatrix {
        let (n, m, r) = (self.u.rows(), self.v.rows(), self.rank());
        let mut out = RealMatrix::zeros(n, m);
        for i in 0..n {
            let u_row = self.u.row(i);
            let o_row = out.row_mut(i);
            for k in 0..r {
                let a = u_row[k] * self.sigma[k];
                for (j, o) in o_row.iter_mut().enumerate() {
                    *o += a * self.v[(j, k)];
                }
            }
        }
        out
    }
}

/// Number of leading singular values with `sigma[i] / sigma[0] > tol`.
pub fn select_rank(sigma: &[f64], tol: f64) -> Result<usize, LinalgError> {
    if sigma.is_empty()
        || sigma.iter().any(|s| !s.is_finite() || *s < 0.0)
        || sigma.windows(2).any(|w| w[1] > w[0])
    {
        return Err(LinalgError::InvalidSpectrum);
    }
    if sigma[0] == 0.0 {
        return Err(LinalgError::ZeroLeadingSingularValue);
    }
    let r = sigma.iter().take_while(|&&s| s / sigma[0] > tol).count();
    Ok(r.max(1))
}

/// Economy SVD of a tall matrix through the eigendecomposition of its Gram matrix.
///
/// `WᵀW = V Σ² Vᵀ` is diagonalized by Jacobi rotations and `U = W V Σ⁻¹`. The
/// Gram step is applied twice: the second pass diagonalizes `(WV₁)ᵀ(WV₁)`, whose
/// rounding errors scale with the column norms, so small singular values come
/// out with relative rather than absolute accuracy. Everything stays `O(n m²)`.
///
/// Each column of `V` is signed so that its largest-magnitude entry is positive.
pub fn gram_svd(w: &RealMatrix, tol: f64) -> Result<SvdFactors, LinalgError> {
    let (n, m) = w.shape();
    if m > n {
        return Err(LinalgError::WideMatrix { rows: n, cols: m });
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(LinalgError::InvalidTolerance(tol));
    }
    w.check_finite()?;
    if w.as_slice().iter().all(|&v| v == 0.0) {
        return Err(LinalgError::Degenerate);
    }

    let first = symmetric_eigen(&w.gram())?;
    let b = w.matmul(&first.vectors)?;
    let second = symmetric_eigen(&b.gram())?;
    let mut v_full = first.vectors.matmul(&second.vectors)?;

    let mut sigma: Vec<f64> = second.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    if sigma[0] == 0.0 {
        return Err(LinalgError::Degenerate);
    }
    let floor = sigma[0] * ZERO_SIGMA_FLOOR;
    for s in sigma.iter_mut() {
        if *s < floor {
            *s = 0.0;
        }
    }
    let r = select_rank(&sigma, tol)?;
    sigma.truncate(r);

    let mut signs = vec![1.0; m];
    for (k, sign) in signs.iter_mut().enumerate() {
        let mut best = 0.0f64;
        let mut best_val = 0.0;
        for i in 0..m {
            let x = v_full[(i, k)];
            if x.abs() > best {
                best = x.abs();
                best_val = x;
            }
        }
        if best_val < 0.0 {
            *sign = -1.0;
            for i in 0..m {
                v_full[(i, k)] = -v_full[(i, k)];
            }
        }
    }

    let mut v = RealMatrix::zeros(m, r);
    let mut rot = RealMatrix::zeros(m, r);
    for i in 0..m {
        for k in 0..r {
            v[(i, k)] = v_full[(i, k)];
            rot[(i, k)] = second.vectors[(i, k)] * signs[k] / sigma[k];
        }
    }
    let u = b.matmul(&rot)?;
    count_ops((n * r) as u64);

    Ok(SvdFactors { u, sigma, v })
}
