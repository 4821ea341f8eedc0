mod common;

use common::*;
use dmdnet::linalg::{eig_general, gram_svd, symmetric_eigen, RealMatrix, ZERO_SIGMA_FLOOR};
use num_complex::Complex64;
use rand::Rng;

fn orthonormality_error(q: &RealMatrix) -> f64 {
    let g = q.gram();
    let mut err = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            err += (g[(i, j)] - target).powi(2);
        }
    }
    err.sqrt()
}

/// Matrix with prescribed singular values `sv` via random orthonormal factors.
fn with_spectrum(rng: &mut rand_chacha::ChaCha8Rng, n: usize, sv: &[f64]) -> RealMatrix {
    let m = sv.len();
    let u = orthonormal_basis(rng, n, m);
    let v = orthonormal_basis(rng, m, m);
    let us: Dense = u.iter().map(|row| row.iter().zip(sv).map(|(a, s)| a * s).collect()).collect();
    let vt: Dense = (0..m).map(|j| (0..m).map(|i| v[i][j]).collect()).collect();
    from_dense(&dense_mul(&us, &vt))
}

#[test]
fn gram_svd_matches_jacobi_oracle() {
    let mut rng = rng(2024);
    for case in 0..100 {
        let m = rng.gen_range(1..=20);
        let n = rng.gen_range(m..=200);
        let w = if case % 3 == 0 {
            // graded spectrum down to 1e-6
            let sv: Vec<f64> = (0..m).map(|k| 10f64.powf(-6.0 * k as f64 / m.max(2) as f64)).collect();
            with_spectrum(&mut rng, n, &sv)
        } else {
            random_matrix(&mut rng, n, m)
        };
        let f = gram_svd(&w, 1e-12).unwrap();
        let oracle = jacobi_singular_values(&w);
        for (k, (a, b)) in f.sigma.iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() <= 1e-9, "case {case} ({n}x{m}) sigma[{k}]: {a} vs {b}");
        }
        assert!(orthonormality_error(&f.u) <= 1e-10, "case {case} U");
        assert!(orthonormality_error(&f.v) <= 1e-10, "case {case} V");
        if f.sigma.len() == m {
            let us = RealMatrix::from_row_major(
                n,
                m,
                (0..n * m).map(|k| f.u[(k / m, k % m)] * f.sigma[k % m]).collect(),
            )
            .unwrap();
            let rec = us.matmul(&f.v.transpose()).unwrap();
            let diff: f64 = rec.as_slice().iter().zip(w.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(diff.sqrt() <= 1e-10 * w.frobenius_norm(), "case {case} reconstruction");
        }
    }
}

#[test]
fn gram_svd_drops_null_directions() {
    let mut rng = rng(5);
    let base = random_matrix(&mut rng, 40, 3);
    // three independent columns repeated: rank 3 in a 40x6 matrix
    let cols: Vec<Vec<f64>> = (0..6).map(|j| base.column(j % 3)).collect();
    let w = columns_to_matrix(&cols);
    let f = gram_svd(&w, 1e-10).unwrap();
    assert_eq!(f.sigma.len(), 3);
    let oracle = jacobi_singular_values(&w);
    assert!(oracle[3] <= ZERO_SIGMA_FLOOR.max(1e-12) * oracle[0] * 10.0);
}

#[test]
fn symmetric_eigen_reconstructs() {
    let mut rng = rng(8);
    for _ in 0..20 {
        let n = rng.gen_range(2..15);
        let a = random_matrix(&mut rng, n, n);
        let s = a.transpose_matmul(&a).unwrap();
        let e = symmetric_eigen(&s).unwrap();
        for k in 0..n {
            let v = e.vectors.column(k);
            let sv = s.matvec(&v);
            let r: Vec<f64> = sv.iter().zip(&v).map(|(x, y)| x - e.values[k] * y).collect();
            assert!(norm(&r) <= 1e-10 * s.frobenius_norm());
        }
        let trace: f64 = (0..n).map(|i| s[(i, i)]).sum();
        assert!((trace - e.values.iter().sum::<f64>()).abs() <= 1e-10 * trace.abs());
    }
}

fn complex_residual(a: &RealMatrix, v: &[Complex64], lambda: Complex64) -> f64 {
    let n = a.rows();
    (0..n)
        .map(|i| {
            let av: Complex64 = (0..n).map(|j| v[j] * a[(i, j)]).sum();
            (av - lambda * v[i]).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

#[test]
fn random_general_eigenproblems() {
    let mut rng = rng(99);
    for case in 0..200 {
        let n = if case < 100 { 5 } else { rng.gen_range(1..=6) };
        let a = random_matrix(&mut rng, n, n);
        let es = eig_general(&a).unwrap();
        let fro = a.frobenius_norm();
        for k in 0..n {
            let v = es.vectors.column(k);
            let vn: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((vn - 1.0).abs() < 1e-12);
            assert!(complex_residual(&a, &v, es.values[k]) <= 1e-8 * fro, "case {case} pair {k}");
        }
        // spectrum is conjugate closed
        for z in &es.values {
            if z.im.abs() > 1e-12 {
                assert!(es.values.iter().any(|w| (w - z.conj()).norm() < 1e-10));
            }
        }
        // ordering: non-increasing modulus
        assert!(es.values.windows(2).all(|w| w[0].norm() >= w[1].norm() - 1e-12));
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        let sum: Complex64 = es.values.iter().sum();
        assert!((sum.re - trace).abs() <= 1e-10 * (1.0 + trace.abs()) && sum.im.abs() <= 1e-10);
        let det = determinant(&to_dense(&a));
        let prod: Complex64 = es.values.iter().product();
        assert!((prod.re - det).abs() <= 1e-9 * (1.0 + det.abs()) && prod.im.abs() <= 1e-9, "case {case}");
    }
}
