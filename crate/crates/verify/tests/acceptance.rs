//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Run with `cargo test -p dmdnet-verify --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use common::*;
use dmdnet::adr::{
    build_dataset, lhs_sample, solve_blasius, solve_sample, AdrOptions, AdrParams, DatasetConfig, Disc, FlowSettings,
    Grid, ParamRanges,
};
use dmdnet::nn::{adam_step, xavier_init, AdamConfig, AdamState, MlpSpec};
use dmdnet::trainer::{mean_relative_error, mean_relative_error_test, train, TrainConfig, TrainLog};
use rand::Rng;

type Outcome = Result<String, String>;

/// Name, check and wall-clock budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn exact_recovery() -> Outcome {
    let mut meta = rng(2025);
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let n = meta.gen_range(8..=50);
        let rho = meta.gen_range(1..=6);
        let m = rho + meta.gen_range(2..=5);
        worst = worst.max(check_recovery(500 + case, n, rho, m, &[25]));
    }
    check(worst < 1e-6, format!("worst relative error at s=25 {worst:.2e} (limit 1e-6)"))
}

fn svd_oracle() -> Outcome {
    let mut r = rng(7);
    let mut worst = 0.0f64;
    let mut worst_orth = 0.0f64;
    let mut worst_rec = 0.0f64;
    for _ in 0..100 {
        let m = r.gen_range(1..=20);
        let n = r.gen_range(m..=200);
        let w = random_matrix(&mut r, n, m);
        let f = dmdnet::linalg::gram_svd(&w, 1e-12).map_err(|e| e.to_string())?;
        let oracle = jacobi_singular_values(&w);
        for (a, b) in f.sigma.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
        for q in [&f.u, &f.v] {
            let g = q.gram();
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    let t = if i == j { 1.0 } else { 0.0 };
                    worst_orth = worst_orth.max((g[(i, j)] - t).abs());
                }
            }
        }
        let mut diff = 0.0f64;
        for i in 0..n {
            for j in 0..m {
                let rec: f64 = (0..f.sigma.len()).map(|k| f.u[(i, k)] * f.sigma[k] * f.v[(j, k)]).sum();
                diff += (rec - w[(i, j)]).powi(2);
            }
        }
        worst_rec = worst_rec.max(diff.sqrt() / w.frobenius_norm());
    }
    check(
        worst <= 1e-9 && worst_orth <= 1e-10 && worst_rec <= 1e-10,
        format!("sigma deviation {worst:.2e} (limit 1e-9), orthonormality {worst_orth:.2e}, reconstruction {worst_rec:.2e}"),
    )
}

fn gradients() -> Outcome {
    let worst = (0..20).map(gradient_check).fold(0.0, f64::max);
    check(worst < 1e-4, format!("worst relative error {worst:.2e} (limit 1e-4)"))
}

fn blasius() -> Outcome {
    let (oracle, ..) = blasius_oracle(0.0, 0.0, 10.0, 20_000);
    let flat = AdrParams {
        uh: 0.0,
        uv: 0.0,
        ..AdrParams::default()
    };
    let sol = solve_blasius(&flat, 10.0, 2001).map_err(|e| e.to_string())?;
    let slip = solve_blasius(&AdrParams { uh: 1.0, ..flat }, 10.0, 2001).map_err(|e| e.to_string())?;
    check(
        (sol.fpp0 - 0.4696).abs() <= 1e-3 && (sol.fpp0 - oracle).abs() <= 1e-3 && slip.fpp0.abs() <= 1e-8,
        format!(
            "f''(0) = {:.6} (dense oracle {oracle:.6}), uh = U0 gives {:.1e}",
            sol.fpp0, slip.fpp0
        ),
    )
}

fn adr_suite() -> Outcome {
    let grid = Grid::default();
    let flow = FlowSettings::default();
    let opts = AdrOptions::default();
    let mut worst = 0.0f64;
    let mut solve = |p: AdrParams, o: &AdrOptions| -> Result<dmdnet::adr::Fields, String> {
        let f = solve_sample(&p, &grid, &flow, o).map_err(|e| e.to_string())?;
        worst = worst.max(f.residual);
        Ok(f)
    };

    let silent = AdrOptions {
        sources: opts.sources.map(|d| Disc { amplitude: 0.0, ..d }),
        ..opts
    };
    let zero = solve(AdrParams::default(), &silent)?;
    let zero_ok = zero.c1.iter().chain(&zero.c2).chain(&zero.c3).all(|&v| v == 0.0);
    let uncoupled = solve(AdrParams { k12: 0.0, ..AdrParams::default() }, &opts)?;
    let uncoupled_ok = uncoupled.c3.iter().all(|&v| v == 0.0);

    let mut peaks = Vec::new();
    for d in [0.01, 0.05, 0.1, 0.25, 0.5] {
        peaks.push(solve(AdrParams { d, ..AdrParams::default() }, &opts)?.c3_max());
    }
    let mut masses = Vec::new();
    for k3 in [0.0, 2.5, 5.0, 7.5, 10.0] {
        masses.push(solve(AdrParams { k3, ..AdrParams::default() }, &opts)?.c3_mass());
    }
    let ranges = ParamRanges::default().0;
    for mask in 0..64u32 {
        let v: [f64; 6] = std::array::from_fn(|k| if mask >> k & 1 == 1 { ranges[k].1 } else { ranges[k].0 });
        solve(AdrParams::from_array(v), &opts)?;
    }
    let d_ok = peaks.windows(2).all(|w| w[1] < w[0]);
    let k3_ok = masses.windows(2).all(|w| w[1] < w[0]);
    check(
        worst <= 1e-8 && zero_ok && uncoupled_ok && d_ok && k3_ok,
        format!(
            "max residual {worst:.2e} over 76 solves, null cases {}, D ladder {}, K3 ladder {}",
            if zero_ok && uncoupled_ok { "exact" } else { "NOT exact" },
            if d_ok { "monotone" } else { "not monotone" },
            if k3_ok { "monotone" } else { "not monotone" },
        ),
    )
}

fn algorithm_equivalence() -> Outcome {
    let (net0, data) = softsign_task(11);
    let cfg = TrainConfig {
        dmd_enabled: false,
        // below the snapshot cap of 64, so m = epochs + 1 stays valid
        total_epochs: 60,
        parallel_layers: false,
        ..TrainConfig::default()
    };
    let mut trained = net0.clone();
    let log = train(&mut trained, &data, &cfg).map_err(|e| e.to_string())?;
    let mut manual = net0.clone();
    let mut state = AdamState::new(&manual);
    let mut same_curve = true;
    for epoch in 0..cfg.total_epochs {
        let (_, g) = manual.loss_and_gradients(&data.train.x, &data.train.y).map_err(|e| e.to_string())?;
        adam_step(&mut manual, &g, &mut state, &AdamConfig::default()).map_err(|e| e.to_string())?;
        let mse = manual.mse(&data.train.x, &data.train.y).map_err(|e| e.to_string())?;
        same_curve &= mse.to_bits() == log.train_mse[epoch].to_bits();
    }
    let plain = same_curve && manual == trained;

    let mut late = net0.clone();
    let late_log = train(
        &mut late,
        &data,
        &TrainConfig {
            dmd_enabled: true,
            m: cfg.total_epochs + 1,
            ..cfg.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let unreachable = late == trained && bits(&late_log.train_mse) == bits(&log.train_mse);
    check(
        plain && unreachable,
        format!("plain Adam bitwise: {plain}, m > epochs bitwise: {unreachable}"),
    )
}

fn desk_scale() -> Outcome {
    let config = DatasetConfig::default();
    let ds = build_dataset(&config).map_err(|e| e.to_string())?;
    let data = ds.train_data().map_err(|e| e.to_string())?;
    let spec = MlpSpec::new(vec![6, 16, 32, 64, ds.num_probes()]).map_err(|e| e.to_string())?;
    let net0 = xavier_init(&spec, 0).map_err(|e| e.to_string())?;
    let run = |dmd_enabled: bool| -> Result<TrainLog, String> {
        let mut net = net0.clone();
        train(
            &mut net,
            &data,
            &TrainConfig {
                dmd_enabled,
                ..TrainConfig::default()
            },
        )
        .map_err(|e| e.to_string())
    };
    let base = run(false)?;
    let dmd = run(true)?;
    let mre = mean_relative_error(&dmd).map_err(|e| e.to_string())?;
    let mre_test = mean_relative_error_test(&dmd).map_err(|e| e.to_string())?;
    let (bt, dt) = (base.final_train_mse().unwrap_or(f64::NAN), dmd.final_train_mse().unwrap_or(f64::NAN));
    let (bv, dv) = (base.final_test_mse().unwrap_or(f64::NAN), dmd.final_test_mse().unwrap_or(f64::NAN));
    let gates = [
        ("(a) train MRE < 1", mre < 1.0),
        ("(b) train MSE <= baseline", dt <= bt),
        ("(c) test MRE < 1", mre_test < 1.0),
        ("(c) test MSE <= baseline", dv <= bv),
    ];
    let failed: Vec<&str> = gates.iter().filter(|g| !g.1).map(|g| g.0).collect();
    check(
        failed.is_empty(),
        format!(
            "{} samples, {} probes, {} events; MRE train {mre:.3e} test {mre_test:.3e}; \
             final MSE train {dt:.3e} vs baseline {bt:.3e}, test {dv:.3e} vs {bv:.3e}; \
             baseline/DMD train ratio {:.2e} (reference claim ~100){}",
            ds.len(),
            ds.num_probes(),
            dmd.events.len(),
            bt / dt,
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failed.join(", "))
            }
        ),
    )
}

fn complexity() -> Outcome {
    let ratios: Vec<f64> = [1_000, 10_000, 100_000].iter().map(|&n| op_ratio(n, 14, n as u64).0).collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        min >= 0.25 && max <= 4.0 && max / min <= 4.0,
        format!("ops / n(3m^2+r^2) = {:.3} / {:.3} / {:.3}", ratios[0], ratios[1], ratios[2]),
    )
}

fn lhs() -> Outcome {
    let ranges = ParamRanges::default().0;
    let ok = [4, 16, 100]
        .iter()
        .all(|&n| (0..10).all(|seed| one_per_stratum(n, seed)) && lhs_sample(n, &ranges, 3) == lhs_sample(n, &ranges, 3));
    check(ok, "n = 4, 16, 100 over 10 seeds".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("DMD exact recovery", exact_recovery, Some(5)),
        ("SVD oracle equivalence", svd_oracle, Some(10)),
        ("gradient correctness", gradients, Some(30)),
        ("Blasius reference", blasius, Some(2)),
        ("ADR solver", adr_suite, Some(60)),
        ("training loop equivalence", algorithm_equivalence, Some(10)),
        ("desk-scale acceleration", desk_scale, None),
        ("complexity guard", complexity, Some(60)),
        ("LHS stratification", lhs, Some(1)),
    ];
    let mut failures = 0;
    for (k, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let slow = limit.is_some_and(|l| elapsed > Duration::from_secs(l));
        let (pass, detail) = match outcome {
            Ok(d) if !slow => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        let budget = limit.map(|l| format!(" of {l} s")).unwrap_or_default();
        println!(
            "criterion {}: {} {name}: {detail} [{:.2} s{budget}]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        failures += usize::from(!pass);
    }
    println!("{} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
