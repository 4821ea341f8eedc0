//! Checks shared by the oracle tests and the acceptance run.

use super::*;
use dmdnet::dmd::{extrapolate, fit_dmd, DmdOptions};
use dmdnet::linalg::{op_count, reset_op_count, RealMatrix};
use dmdnet::adr::{lhs_sample, ParamRanges};
use dmdnet::nn::{xavier_init, Mlp, MlpSpec, Params};
use dmdnet::trainer::{Split, TrainData};
use rand::Rng;

/// Matrix-power oracle: `A^s` applied to the last snapshot.
pub fn check_recovery(seed: u64, n: usize, rho: usize, m: usize, steps: &[u32]) -> f64 {
    let mut rng = rng(seed);
    let a = low_rank_linear_map(&mut rng, n, rho, 0.95);
    let x0 = dense_matvec(&a, &(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
    let max_s = *steps.iter().max().unwrap() as usize;
    let traj = trajectory(&a, &x0, m + max_s);
    let w = columns_to_matrix(&traj[..m]);
    let model = fit_dmd(&w, 1e-10, &DmdOptions::default()).unwrap();
    assert!(model.rank() <= rho.max(1), "rank {} > {rho}", model.rank());
    steps
        .iter()
        .map(|&s| rel_err(&extrapolate(&model, s).unwrap(), &traj[m - 1 + s as usize]))
        .fold(0.0, f64::max)
}

pub fn perturbed_net(seed: u64, widths: Vec<usize>) -> Mlp {
    let mut r = rng(seed ^ 0xabc);
    let mut net = xavier_init(&MlpSpec::new(widths).unwrap(), seed).unwrap();
    for l in 0..net.num_layers() {
        let w: Vec<f64> = net.flatten_layer(l).unwrap().iter().map(|v| v + 0.1 * r.gen_range(-1.0..1.0)).collect();
        net.assign_layer(l, &w).unwrap();
    }
    net
}

pub fn flat(p: &Params) -> Vec<f64> {
    p.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
}

/// Central differences of the MSE with respect to every parameter, layer by layer.
pub fn finite_difference(net: &Mlp, x: &RealMatrix, y: &RealMatrix, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut probe = net.clone();
    for l in 0..net.num_layers() {
        let base = net.flatten_layer(l).unwrap();
        for k in 0..base.len() {
            let mut w = base.clone();
            w[k] = base[k] + h;
            probe.assign_layer(l, &w).unwrap();
            let up = probe.mse(x, y).unwrap();
            w[k] = base[k] - h;
            probe.assign_layer(l, &w).unwrap();
            let down = probe.mse(x, y).unwrap();
            out.push((up - down) / (2.0 * h));
        }
        probe.assign_layer(l, &base).unwrap();
    }
    out
}

pub fn gradient_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d_in = r.gen_range(1..=6);
    let d_out = r.gen_range(1..=8);
    let hidden = r.gen_range(1..=3);
    let mut widths = vec![d_in];
    widths.extend((0..hidden).map(|_| r.gen_range(1..=64)));
    if seed == 0 {
        widths[1] = 64;
    }
    widths.push(d_out);
    let net = perturbed_net(seed, widths);
    let batch = r.gen_range(1..=6);
    let x = random_matrix(&mut r, batch, d_in);
    let y = random_matrix(&mut r, batch, d_out);
    let (_, grads) = net.loss_and_gradients(&x, &y).unwrap();
    let analytic = flat(&grads);
    let numeric = finite_difference(&net, &x, &y, 1e-5);
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(1e-12)
}

/// Arithmetic per event relative to `n (3 m^2 + r^2)`.
pub fn op_ratio(n: usize, m: usize, seed: u64) -> (f64, usize) {
    let mut r = rng(seed);
    let w = random_matrix(&mut r, n, m);
    reset_op_count();
    let model = fit_dmd(&w, 1e-10, &DmdOptions::default()).unwrap();
    extrapolate(&model, 55).unwrap();
    let ops = op_count() as f64;
    let rank = model.rank();
    (ops / (n as f64 * (3 * m * m + rank * rank) as f64), rank)
}


/// Dense RK4 shooting for `f''' = -f f''` on `[0, eta_max]` with `f(0) = f0`,
/// `f'(0) = fp0`, bisecting `f''(0)` until `f'(eta_max) = 1`.
/// Returns `(f''(0), eta grid, f, f')`.
pub fn blasius_oracle(f0: f64, fp0: f64, eta_max: f64, steps: usize) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = eta_max / steps as f64;
    let rhs = |y: [f64; 3]| [y[1], y[2], -y[0] * y[2]];
    let run = |g: f64, keep: bool| {
        let mut y = [f0, fp0, g];
        let mut path = Vec::new();
        if keep {
            path.push(y);
        }
        for _ in 0..steps {
            let k1 = rhs(y);
            let k2 = rhs([0, 1, 2].map(|i| y[i] + 0.5 * h * k1[i]));
            let k3 = rhs([0, 1, 2].map(|i| y[i] + 0.5 * h * k2[i]));
            let k4 = rhs([0, 1, 2].map(|i| y[i] + h * k3[i]));
            y = [0, 1, 2].map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
            if keep {
                path.push(y);
            }
        }
        (y[1], path)
    };
    // f'(eta_max) increases with f''(0) on this bracket
    let (mut lo, mut hi) = (-2.0, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if run(mid, false).0 < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let g = 0.5 * (lo + hi);
    let (_, path) = run(g, true);
    let eta = (0..=steps).map(|k| k as f64 * h).collect();
    (g, eta, path.iter().map(|p| p[0]).collect(), path.iter().map(|p| p[1]).collect())
}

/// Small softsign regression problem with a 4-12-12-3 network.
pub fn softsign_task(seed: u64) -> (Mlp, TrainData) {
    let mut r = rng(seed);
    let x = random_matrix(&mut r, 40, 4);
    let y_data: Vec<f64> = (0..40 * 3)
        .map(|k| {
            let (i, j) = (k / 3, k % 3);
            (x[(i, j)] * x[(i, j + 1)]).sin() + 0.1 * r.gen_range(-1.0..1.0)
        })
        .collect();
    let y = RealMatrix::from_row_major(40, 3, y_data).unwrap();
    let net = xavier_init(&MlpSpec::new(vec![4, 12, 12, 3]).unwrap(), seed).unwrap();
    let data = TrainData {
        train: Split::new(x, y).unwrap(),
        test: None,
    };
    (net, data)
}

/// Each dimension has exactly one point per stratum.
pub fn one_per_stratum(n: usize, seed: u64) -> bool {
    let ranges = ParamRanges::default().0;
    let s = lhs_sample(n, &ranges, seed);
    (0..ranges.len()).all(|d| {
        let (lo, hi) = ranges[d];
        let mut seen = vec![false; n];
        for i in 0..n {
            let k = (((s[(i, d)] - lo) / (hi - lo)) * n as f64).floor() as usize;
            let k = k.min(n - 1);
            if seen[k] {
                return false;
            }
            seen[k] = true;
        }
        true
    })
}
