//! Test-only reference implementations and generators.
#![allow(dead_code)]

mod checks;
#[allow(unused_imports)]
pub use checks::*;

use dmdnet::linalg::RealMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RealMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RealMatrix::from_row_major(rows, cols, data).unwrap()
}

/// Row-major dense matrix helpers on `Vec<Vec<f64>>`, independent of the library.
pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(a: &RealMatrix) -> Dense {
    (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
}

pub fn from_dense(a: &Dense) -> RealMatrix {
    let rows: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
    RealMatrix::from_rows(&rows).unwrap()
}

pub fn dense_mul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for p in 0..k {
            let aip = a[i][p];
            for j in 0..m {
                out[i][j] += aip * b[p][j];
            }
        }
    }
    out
}

pub fn dense_matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Singular values by one-sided (Hestenes) Jacobi, descending.
pub fn jacobi_singular_values(a: &RealMatrix) -> Vec<f64> {
    let (n, m) = a.shape();
    // work on columns
    let mut cols: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| a[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..m {
            for q in p + 1..m {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Determinant by LU with partial pivoting.
pub fn determinant(a: &Dense) -> f64 {
    let n = a.len();
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap()).unwrap();
        if m[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            m.swap(p, k);
            det = -det;
        }
        det *= m[k][k];
        for i in k + 1..n {
            let l = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= l * m[k][j];
            }
        }
    }
    det
}

/// Inverse by Gauss-Jordan with partial pivoting.
pub fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap()).unwrap();
        m.swap(p, k);
        let piv = m[k][k];
        m[k].iter_mut().for_each(|v| *v /= piv);
        for i in 0..n {
            if i != k {
                let l = m[i][k];
                if l != 0.0 {
                    for j in 0..2 * n {
                        m[i][j] -= l * m[k][j];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Random orthonormal `n x r` basis by modified Gram-Schmidt.
pub fn orthonormal_basis(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Dense {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    while cols.len() < r {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            cols.push(v.iter().map(|x| x / nv).collect());
        }
    }
    (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

/// Rank-`rho` linear map `A = Q S D S^-1 Q^T` on R^n whose spectrum (real values and
/// conjugate pairs) has moduli in `[0.5, max_modulus]`.
pub fn low_rank_linear_map(rng: &mut ChaCha8Rng, n: usize, rho: usize, max_modulus: f64) -> Dense {
    let mut d = vec![vec![0.0; rho]; rho];
    let mut k = 0;
    while k < rho {
        let r: f64 = rng.gen_range(0.5..max_modulus);
        if k + 1 < rho && rng.gen_bool(0.5) {
            let th: f64 = rng.gen_range(0.1..1.2);
            d[k][k] = r * th.cos();
            d[k][k + 1] = -r * th.sin();
            d[k + 1][k] = r * th.sin();
            d[k + 1][k + 1] = r * th.cos();
            k += 2;
        } else {
            d[k][k] = if rng.gen_bool(0.5) { r } else { -r };
            k += 1;
        }
    }
    // well-conditioned similarity: identity plus a small perturbation
    let s: Dense = (0..rho)
        .map(|i| (0..rho).map(|j| if i == j { 1.0 } else { 0.0 } + rng.gen_range(-0.3..0.3)).collect())
        .collect();
    let b = dense_mul(&dense_mul(&s, &d), &inverse(&s));
    let q = orthonormal_basis(rng, n, rho);
    let qt: Dense = (0..rho).map(|j| (0..n).map(|i| q[i][j]).collect()).collect();
    dense_mul(&dense_mul(&q, &b), &qt)
}

/// `[x0, A x0, A^2 x0, ...]` as columns, `count` of them.
pub fn trajectory(a: &Dense, x0: &[f64], count: usize) -> Vec<Vec<f64>> {
    let mut out = vec![x0.to_vec()];
    while out.len() < count {
        let next = dense_matvec(a, out.last().unwrap());
        out.push(next);
    }
    out
}

pub fn columns_to_matrix(cols: &[Vec<f64>]) -> RealMatrix {
    RealMatrix::from_columns(cols).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}
