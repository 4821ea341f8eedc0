use super::{count_ops, LinalgError, RealMatrix};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues and orthonormal eigenvectors of a real symmetric matrix,
/// sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector paired with `values[i]`.
    pub vectors: RealMatrix,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// An off-diagonal entry is annihilated while `|a_pq| > eps * sqrt(|a_pp a_qq|)`,
/// which gives eigenvalues with high relative accuracy on scaled diagonally
/// dominant input. Only the upper triangle is read.
pub fn symmetric_eigen(a: &RealMatrix) -> Result<SymmetricEigen, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    a.check_finite()?;

    let mut s = a.clone();
    for i in 0..n {
        for j in 0..i {
            s[(i, j)] = s[(j, i)];
        }
    }
    let mut v = RealMatrix::identity(n);
    let eps = f64::EPSILON;

    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = s[(p, p)];
                let aqq = s[(q, q)];
                if apq.abs() <= eps * (app.abs() * aqq.abs()).sqrt() {
                    s[(p, q)] = 0.0;
                    s[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);

                s[(p, p)] = app - t * apq;
                s[(q, q)] = aqq + t * apq;
                s[(p, q)] = 0.0;
                s[(q, p)] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    let new_kp = skp - sn * (skq + tau * skp);
                    let new_kq = skq + sn * (skp - tau * skq);
                    s[(k, p)] = new_kp;
                    s[(p, k)] = new_kp;
                    s[(k, q)] = new_kq;
                    s[(q, k)] = new_kq;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp - sn * (vkq + tau * vkp);
                    v[(k, q)] = vkq + sn * (vkp - tau * vkq);
                }
                count_ops(4 * n as u64);
            }
        }
        converged = !rotated;
    }
    if !converged {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[(i, j)] * s[(i, j)])
            .sum::<f64>()
            .sqrt();
        return Err(LinalgError::NoConvergence {
            iterations: sweeps,
            residual: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[(j, j)].total_cmp(&s[(i, i)]));
    let values = order.iter().map(|&i| s[(i, i)]).collect();
    let mut vectors = RealMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}
