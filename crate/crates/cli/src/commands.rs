use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dmdnet::adr::{build_dataset, AdrParams, Dataset, FlowField, FlowSettings, ProbeSpec, SimilarityScaling};
use dmdnet::dmd::Amplitudes;
use dmdnet::nn::{xavier_init, AdamState, Checkpoint, Mlp, MlpSpec};
use dmdnet::trainer::{self, mean_relative_error, mean_relative_error_test, train_with_state, Optimizer, TrainData};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{AmplitudeArg, BlasiusArgs, GenerateArgs, ReportArgs, ScalingArg, SweepArgs, TrainArgs, TrainOverrides};

pub struct Context {
    pub argv: Vec<String>,
    pub threads: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    argv: &'a [String],
    threads: usize,
    config: &'a RunConfig,
    inputs: Vec<String>,
    outputs: Vec<String>,
    summary: serde_json::Value,
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn write_manifest(
    path: &Path,
    ctx: &Context,
    command: &'static str,
    config: &RunConfig,
    inputs: &[&Path],
    outputs: &[&Path],
    summary: serde_json::Value,
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "dmdnet",
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: &ctx.argv,
        threads: ctx.threads,
        config,
        inputs: inputs.iter().map(|p| show(p)).collect(),
        outputs: outputs.iter().map(|p| show(p)).collect(),
        summary,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// `data.json` → `data.manifest.json`.
fn sibling_manifest(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn generate(ctx: &Context, mut cfg: RunConfig, a: &GenerateArgs) -> Result<(), CliError> {
    let d = &mut cfg.dataset;
    if let Some(n) = a.n {
        d.n_samples = n;
    }
    if let Some(seed) = a.seed {
        d.seed = seed;
    }
    if let Some(nx) = a.nx {
        d.grid.nx = nx;
    }
    if let Some(ny) = a.ny {
        d.grid.ny = ny;
    }
    if let Some(p) = a.probes {
        d.probes = ProbeSpec::Count(p);
    }
    d.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let ds = build_dataset(&cfg.dataset)?;
    ds.save(&a.out)?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(csv) = &a.csv {
        ds.write_csv(csv)?;
        outputs.push(csv.as_path());
    }
    let max_residual = ds.residuals.iter().copied().fold(0.0, f64::max);
    let summary = json!({
        "samples": ds.len(),
        "probes": ds.num_probes(),
        "train": ds.train_indices.len(),
        "test": ds.test_indices.len(),
        "resampled": ds.resampled,
        "max_residual": max_residual,
        "seed": cfg.dataset.seed,
    });
    write_manifest(&sibling_manifest(&a.out), ctx, "generate", &cfg, &[], &outputs, summary)?;
    println!(
        "generated {} samples x {} probes ({} train / {} test, {} resampled, max residual {max_residual:.3e}) -> {}",
        ds.len(),
        ds.num_probes(),
        ds.train_indices.len(),
        ds.test_indices.len(),
        ds.resampled.len(),
        a.out.display()
    );
    Ok(())
}

fn apply_train_overrides(cfg: &mut RunConfig, o: &TrainOverrides) {
    let t = &mut cfg.train;
    if let Some(m) = o.m {
        t.m = m;
    }
    if let Some(s) = o.s {
        t.s = s;
    }
    if let Some(tol) = o.dmd_tol {
        t.dmd_tol = tol;
    }
    if let Some(e) = o.epochs {
        t.total_epochs = e;
    }
    if let Some(seed) = o.seed {
        t.seed = seed;
    }
    if let Some(lr) = o.lr {
        match &mut t.optimizer {
            Optimizer::Adam(a) => a.lr = lr,
            Optimizer::Sgd { lr: l } => *l = lr,
        }
    }
    if o.reset_adam {
        t.reset_adam_after_dmd = true;
    }
    if o.clamp_unstable {
        t.dmd.clamp_unstable = true;
    }
    match o.amplitudes {
        Some(AmplitudeArg::LeastSquares) => t.dmd.amplitudes = Amplitudes::LeastSquares,
        Some(AmplitudeArg::ConjugateTranspose) => t.dmd.amplitudes = Amplitudes::ConjugateTranspose,
        None => {}
    }
    if let Some(h) = &o.hidden {
        cfg.network.hidden = h.clone();
    }
}

fn load_data(path: &Path) -> Result<(Dataset, TrainData), CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("dataset not found: {}", path.display())));
    }
    let ds = Dataset::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let data = ds.train_data()?;
    Ok((ds, data))
}

fn init_model(cfg: &RunConfig, ds: &Dataset) -> Result<Mlp, CliError> {
    let mut widths = vec![6];
    widths.extend(&cfg.network.hidden);
    widths.push(ds.num_probes());
    let spec = MlpSpec::new(widths)?.with_activation(cfg.network.activation);
    Ok(xavier_init(&spec, cfg.train.seed)?)
}

pub fn train(ctx: &Context, mut cfg: RunConfig, a: &TrainArgs) -> Result<(), CliError> {
    apply_train_overrides(&mut cfg, &a.train);
    if a.no_dmd {
        cfg.train.dmd_enabled = false;
    }
    if let Some(dir) = &a.dump_dir {
        cfg.train.dump_dir = Some(dir.clone());
    }
    if cfg.train.m < 2 {
        return Err(CliError::Usage(format!("m must be >= 2, got {}", cfg.train.m)));
    }
    cfg.train.validate()?;
    cfg.validate_network()?;
    let (ds, data) = load_data(&a.data)?;
    cfg.dataset = ds.config.clone();
    if let Some(dir) = &cfg.train.dump_dir {
        ensure_dir(dir)?;
    }
    let mut model = init_model(&cfg, &ds)?;
    let mut state = AdamState::new(&model);
    let log = train_with_state(&mut model, &mut state, &data, &cfg.train)?;

    ensure_dir(&a.out_dir)?;
    let tag = a
        .tag
        .clone()
        .unwrap_or_else(|| if cfg.train.dmd_enabled { "dmd" } else { "baseline" }.to_string());
    let log_path = a.out_dir.join(format!("{tag}_log.csv"));
    let ckpt_path = a.out_dir.join(format!("{tag}_checkpoint.json"));
    log.write_csv(&log_path)?;
    let adam = matches!(cfg.train.optimizer, Optimizer::Adam(_)).then_some(state);
    Checkpoint::new(model, adam, cfg.train.seed).save(&ckpt_path)?;

    let mre = mean_relative_error(&log).ok();
    let mre_test = mean_relative_error_test(&log).ok();
    let summary = json!({
        "epochs": log.train_mse.len(),
        "events": log.events.len(),
        "mean_relative_error": mre,
        "mean_relative_error_test": mre_test,
        "final_train_mse": log.final_train_mse(),
        "final_test_mse": log.final_test_mse(),
        "warnings": log.warnings,
        "init_seed": cfg.train.seed,
        "dataset_seed": ds.config.seed,
    });
    write_manifest(
        &a.out_dir.join(format!("{tag}_manifest.json")),
        ctx,
        "train",
        &cfg,
        &[&a.data],
        &[&log_path, &ckpt_path],
        summary,
    )?;
    println!(
        "{tag}: {} epochs, {} DMD events, final train MSE {:.4e}, final test MSE {}",
        log.train_mse.len(),
        log.events.len(),
        log.final_train_mse().unwrap_or(f64::NAN),
        log.final_test_mse().map_or("-".into(), |v| format!("{v:.4e}")),
    );
    if let Some(m) = mre {
        println!("{tag}: mean relative error {m:.4} (train), {}", mre_test.map_or("-".into(), |v| format!("{v:.4} (test)")));
    }
    Ok(())
}

pub fn sweep(ctx: &Context, mut cfg: RunConfig, a: &SweepArgs) -> Result<(), CliError> {
    let overrides = TrainOverrides {
        m: None,
        s: None,
        dmd_tol: a.dmd_tol,
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        hidden: a.hidden.clone(),
        reset_adam: false,
        clamp_unstable: false,
        amplitudes: None,
    };
    apply_train_overrides(&mut cfg, &overrides);
    if let Some(m) = &a.m_values {
        cfg.sweep.m = m.clone();
    }
    if let Some(s) = &a.s_values {
        cfg.sweep.s = s.clone();
    }
    cfg.train.dmd_enabled = true;
    cfg.train.dump_dir = None;
    cfg.validate_sweep()?;
    cfg.validate_network()?;
    for &m in &cfg.sweep.m {
        trainer::TrainConfig { m, ..cfg.train.clone() }.validate()?;
    }
    let (ds, data) = load_data(&a.data)?;
    cfg.dataset = ds.config.clone();
    let initial = init_model(&cfg, &ds)?;
    let result = trainer::sweep(&initial, &data, &cfg.sweep.m, &cfg.sweep.s, &cfg.train)?;

    ensure_dir(&a.out_dir)?;
    let train_path = a.out_dir.join("sweep_train.csv");
    let test_path = a.out_dir.join("sweep_test.csv");
    let long_path = a.out_dir.join("sweep_long.csv");
    result.write_grid_csv(&train_path, false)?;
    result.write_grid_csv(&test_path, true)?;
    result.write_long_csv(&long_path)?;
    let failed = result
        .cells
        .iter()
        .filter(|c| matches!(c.status, trainer::CellStatus::Failed { .. }))
        .count();
    let summary = json!({
        "cells": result.cells.len(),
        "failed": failed,
        "init_seed": cfg.train.seed,
        "dataset_seed": ds.config.seed,
    });
    write_manifest(
        &a.out_dir.join("sweep_manifest.json"),
        ctx,
        "sweep",
        &cfg,
        &[&a.data],
        &[&train_path, &test_path, &long_path],
        summary,
    )?;
    println!(
        "sweep: {} x {} grid ({} failed cells) -> {}",
        cfg.sweep.m.len(),
        cfg.sweep.s.len(),
        failed,
        a.out_dir.display()
    );
    Ok(())
}

pub fn blasius(ctx: &Context, mut cfg: RunConfig, a: &BlasiusArgs) -> Result<(), CliError> {
    let b = &mut cfg.blasius;
    if let Some(v) = a.u0 {
        b.u0 = v;
    }
    if let Some(v) = a.uh {
        b.uh = v;
    }
    if let Some(v) = a.uv {
        b.uv = v;
    }
    if let Some(v) = a.eta_max {
        b.eta_max = v;
    }
    if let Some(v) = a.n_eta {
        b.n_eta = v;
    }
    match a.scaling {
        Some(ScalingArg::TwoNu) => b.scaling = SimilarityScaling::TwoNu,
        Some(ScalingArg::Nu) => b.scaling = SimilarityScaling::Nu,
        None => {}
    }
    let params = AdrParams {
        u0: b.u0,
        uh: b.uh,
        uv: b.uv,
        ..AdrParams::default()
    };
    let settings = FlowSettings {
        eta_max: b.eta_max,
        n_eta: b.n_eta,
        scaling: b.scaling,
        ..cfg.dataset.flow
    };
    let flow = FlowField::new(&params, &settings)?;
    let sol = &flow.blasius;

    let file = File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "eta,f,fp,fpp")?;
        for i in 0..sol.eta.len() {
            writeln!(w, "{},{},{},{}", sol.eta[i], sol.f[i], sol.fp[i], sol.fpp[i])?;
        }
        w.flush()
    };
    write().map_err(|e| CliError::io(&a.out, e))?;

    let summary = json!({
        "fpp0": sol.fpp0,
        "f0": sol.f[0],
        "fp0": sol.fp[0],
        "fp_end": sol.fp.last(),
        "drift": flow.drift,
    });
    write_manifest(&sibling_manifest(&a.out), ctx, "blasius", &cfg, &[], &[&a.out], summary)?;
    println!("f''(0) = {:.10} ({:?} scaling) -> {}", sol.fpp0, sol.scaling, a.out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct LogSummary {
    log: String,
    epochs: usize,
    events: usize,
    mean_relative_error: Option<f64>,
    mean_relative_error_test: Option<f64>,
    final_train_mse: Option<f64>,
    final_test_mse: Option<f64>,
}

fn parse_opt(field: Option<&str>) -> Result<Option<f64>, String> {
    match field.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|_| format!("not a number: {s:?}")),
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize_log(path: &Path) -> Result<LogSummary, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::io(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{}: missing column {name}", path.display())))
    };
    let (c_train, c_test, c_flag, c_re, c_re_test) = (
        col("train_mse")?,
        col("test_mse")?,
        col("event_flag")?,
        col("relative_error_train")?,
        col("relative_error_test")?,
    );
    let (mut epochs, mut rel, mut rel_test) = (0, Vec::new(), Vec::new());
    let (mut last_train, mut last_test) = (None, None);
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        let bad = |msg: String| CliError::Data(format!("{} row {}: {msg}", path.display(), row + 2));
        epochs += 1;
        last_train = parse_opt(record.get(c_train)).map_err(bad)?;
        last_test = parse_opt(record.get(c_test)).map_err(bad)?;
        if record.get(c_flag).map(str::trim) == Some("1") {
            if let Some(r) = parse_opt(record.get(c_re)).map_err(bad)? {
                rel.push(r);
            }
            if let Some(r) = parse_opt(record.get(c_re_test)).map_err(bad)? {
                rel_test.push(r);
            }
        }
    }
    Ok(LogSummary {
        log: show(path),
        epochs,
        events: rel.len(),
        mean_relative_error: mean(&rel),
        mean_relative_error_test: mean(&rel_test),
        final_train_mse: last_train,
        final_test_mse: last_test,
    })
}

pub fn report(ctx: &Context, cfg: RunConfig, a: &ReportArgs) -> Result<(), CliError> {
    let rows = a.logs.iter().map(|p| summarize_log(p)).collect::<Result<Vec<_>, _>>()?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut table =
        String::from("log,epochs,events,mean_relative_error,mean_relative_error_test,final_train_mse,final_test_mse\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.log,
            r.epochs,
            r.events,
            fmt(r.mean_relative_error),
            fmt(r.mean_relative_error_test),
            fmt(r.final_train_mse),
            fmt(r.final_test_mse)
        ));
    }
    print!("{table}");
    if let Some(out) = &a.out {
        fs::write(out, &table).map_err(|e| CliError::io(out, e))?;
        let inputs: Vec<&Path> = a.logs.iter().map(PathBuf::as_path).collect();
        let summary = serde_json::to_value(&rows).map_err(|e| CliError::Data(e.to_string()))?;
        write_manifest(&sibling_manifest(out), ctx, "report", &cfg, &inputs, &[out], summary)?;
    }
    Ok(())
}
