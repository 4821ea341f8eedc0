use num_complex::Complex64;

use super::{count_ops, ComplexMatrix, LinalgError};

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_complex(a: &ComplexMatrix, b: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if b.len() != n {
        return Err(LinalgError::DataLength {
            expected: n,
            got: b.len(),
        });
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Err(LinalgError::Singular);
    }

    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, m[(i, k)].norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty range");
        if pivot <= scale * f64::EPSILON * n as f64 {
            return Err(LinalgError::Singular);
        }
        if p != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = tmp;
            }
            x.swap(k, p);
        }
        let d = m[(k, k)];
        for i in k + 1..n {
            let f = m[(i, k)] / d;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k..n {
                let t = m[(k, j)];
                m[(i, j)] -= f * t;
            }
            let t = x[k];
            x[i] -= f * t;
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    count_ops((n * n * n / 3 + n * n) as u64);
    Ok(x)
}
