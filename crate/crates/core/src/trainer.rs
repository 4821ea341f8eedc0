//! Gradient training interleaved with DMD weight extrapolation.
//!
//! Every epoch performs one full-batch optimizer step and appends each layer's
//! flattened parameters to that layer's snapshot buffer. Once the buffers hold
//! `m` snapshots, a DMD model is fitted per layer, the layer is moved `s` steps
//! along the fitted trajectory, and the buffers are cleared. The training MSE
//! right after the jump divided by the MSE right before it is the event's
//! relative error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmd::{extrapolate, fit_dmd, write_snapshot_csv, DmdError, DmdOptions, SnapshotBuffer};
use crate::linalg::RealMatrix;
use crate::nn::{adam_step, sgd_step, AdamConfig, AdamState, Mlp, NnError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("no DMD events recorded")]
    NoEvents,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dmd(#[from] DmdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Adam(AdamConfig),
    /// Plain gradient descent.
    Sgd { lr: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam(AdamConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Snapshots per DMD fit.
    pub m: usize,
    /// Extrapolation steps beyond the last snapshot.
    pub s: u32,
    /// Relative singular-value cutoff.
    pub dmd_tol: f64,
    pub total_epochs: usize,
    pub dmd_enabled: bool,
    pub reset_adam_after_dmd: bool,
    /// Include biases in the DMD snapshots.
    pub snapshot_biases: bool,
    /// Fit layers concurrently within an event.
    pub parallel_layers: bool,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub dmd: DmdOptions,
    /// Write each event's snapshot matrices as CSV into this directory.
    pub dump_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m: 14,
            s: 55,
            dmd_tol: 1e-10,
            total_epochs: 2000,
            dmd_enabled: true,
            reset_adam_after_dmd: false,
            snapshot_biases: true,
            parallel_layers: true,
            seed: 0,
            optimizer: Optimizer::default(),
            dmd: DmdOptions::default(),
            dump_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.dmd_enabled && self.m < 2 {
            return bad(format!("m must be >= 2 when DMD is enabled, got {}", self.m));
        }
        if self.dmd_enabled && self.m > 64 {
            return bad(format!("m must be <= 64, got {}", self.m));
        }
        if !(self.dmd_tol > 0.0 && self.dmd_tol < 1.0) {
            return bad(format!("dmd_tol must lie in (0, 1), got {}", self.dmd_tol));
        }
        if self.total_epochs == 0 {
            return bad("total_epochs must be >= 1".into());
        }
        match self.optimizer {
            Optimizer::Adam(a) => {
                if !(a.lr > 0.0 && a.lr.is_finite()) {
                    return bad(format!("lr must be positive, got {}", a.lr));
                }
                if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
                    return bad(format!("beta1 and beta2 must lie in [0, 1), got {} and {}", a.beta1, a.beta2));
                }
                if a.epsilon.is_nan() || a.epsilon <= 0.0 {
                    return bad(format!("epsilon must be positive, got {}", a.epsilon));
                }
            }
            Optimizer::Sgd { lr } => {
                if !(lr > 0.0 && lr.is_finite()) {
                    return bad(format!("lr must be positive, got {lr}"));
                }
            }
        }
        Ok(())
    }
}

/// Inputs and targets, one sample per row.
#[derive(Debug, Clone)]
pub struct Split {
    pub x: RealMatrix,
    pub y: RealMatrix,
}

impl Split {
    pub fn new(x: RealMatrix, y: RealMatrix) -> Result<Self, TrainError> {
        if x.rows() != y.rows() {
            return Err(TrainError::Data(format!(
                "{} input rows but {} target rows",
                x.rows(),
                y.rows()
            )));
        }
        Ok(Self { x, y })
    }
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Split,
    pub test: Option<Split>,
}

/// One DMD weight update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmdEvent {
    /// 1-based epoch after whose optimizer step the event ran.
    pub epoch: usize,
    /// Layers whose parameters were replaced.
    pub layers: Vec<usize>,
    /// Layers left at the backprop state, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub mse_before: f64,
    pub mse_after: f64,
    pub relative_error: f64,
    pub test_mse_before: Option<f64>,
    pub test_mse_after: Option<f64>,
    pub relative_error_test: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub backprop_secs: f64,
    pub dmd_secs: f64,
    pub eval_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Training MSE at the end of each epoch.
    pub train_mse: Vec<f64>,
    pub test_mse: Vec<Option<f64>>,
    pub events: Vec<DmdEvent>,
    pub warnings: Vec<String>,
    pub timing: PhaseTiming,
}

impl TrainLog {
    pub fn final_train_mse(&self) -> Option<f64> {
        self.train_mse.last().copied()
    }

    pub fn final_test_mse(&self) -> Option<f64> {
        self.test_mse.last().copied().flatten()
    }

    /// Writes one row per epoch:
    /// `epoch,train_mse,test_mse,event_flag,relative_error_train,relative_error_test`.
    ///
    /// Missing values are empty fields.
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut out = String::from("epoch,train_mse,test_mse,event_flag,relative_error_train,relative_error_test\n");
        let mut events = self.events.iter().peekable();
        for (i, (tr, te)) in self.train_mse.iter().zip(&self.test_mse).enumerate() {
            let epoch = i + 1;
            let event = events.next_if(|e| e.epoch == epoch);
            let _ = writeln!(
                out,
                "{epoch},{tr},{},{},{},{}",
                opt(*te),
                u8::from(event.is_some()),
                opt(event.map(|e| e.relative_error)),
                opt(event.and_then(|e| e.relative_error_test)),
            );
        }
        fs::write(path, out)?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Unweighted mean of the training-set relative errors of all events.
pub fn mean_relative_error(log: &TrainLog) -> Result<f64, TrainError> {
    if log.events.is_empty() {
        return Err(TrainError::NoEvents);
    }
    Ok(log.events.iter().map(|e| e.relative_error).sum::<f64>() / log.events.len() as f64)
}

/// Test-set counterpart of [`mean_relative_error`].
pub fn mean_relative_error_test(log: &TrainLog) -> Result<f64, TrainError> {
    let vals: Vec<f64> = log.events.iter().filter_map(|e| e.relative_error_test).collect();
    if vals.is_empty() {
        return Err(TrainError::NoEvents);
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn check_data(model: &Mlp, data: &TrainData) -> Result<(), TrainError> {
    let spec = model.spec();
    let splits = std::iter::once(("train", &data.train)).chain(data.test.as_ref().map(|t| ("test", t)));
    for (name, split) in splits {
        if split.x.cols() != spec.input_dim() || split.y.cols() != spec.output_dim() {
            return Err(TrainError::Data(format!(
                "{name} set is {}->{} but the network is {}->{}",
                split.x.cols(),
                split.y.cols(),
                spec.input_dim(),
                spec.output_dim()
            )));
        }
    }
    Ok(())
}

/// Trains `model` in place from a fresh optimizer state.
pub fn train(model: &mut Mlp, data: &TrainData, config: &TrainConfig) -> Result<TrainLog, TrainError> {
    let mut state = AdamState::new(model);
    train_with_state(model, &mut state, data, config)
}

/// Trains `model` in place, continuing from `state`.
pub fn train_with_state(
    model: &mut Mlp,
    state: &mut AdamState,
    data: &TrainData,
    config: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    config.validate()?;
    check_data(model, data)?;
    if let Some(dir) = &config.dump_dir {
        fs::create_dir_all(dir)?;
    }

    let n_layers = model.num_layers();
    let mut buffers = Vec::with_capacity(n_layers);
    if config.dmd_enabled {
        for l in 0..n_layers {
            let dim = snapshot(model, l, config.snapshot_biases)?.len();
            buffers.push(SnapshotBuffer::new(l, dim, config.m)?);
        }
    }

    let mut log = TrainLog::default();
    let test = data.test.as_ref();
    for epoch in 1..=config.total_epochs {
        let t0 = Instant::now();
        let (_, grads) = model.loss_and_gradients(&data.train.x, &data.train.y)?;
        match config.optimizer {
            Optimizer::Adam(cfg) => adam_step(model, &grads, state, &cfg)?,
            Optimizer::Sgd { lr } => sgd_step(model, &grads, lr)?,
        }
        log.timing.backprop_secs += t0.elapsed().as_secs_f64();

        if config.dmd_enabled {
            for (l, buf) in buffers.iter_mut().enumerate() {
                buf.push(&snapshot(model, l, config.snapshot_biases)?)?;
            }
            if buffers.iter().all(SnapshotBuffer::is_full) {
                let t1 = Instant::now();
                let event = dmd_event(model, &buffers, data, config, epoch, log.events.len(), &mut log.warnings)?;
                buffers.iter_mut().for_each(SnapshotBuffer::clear);
                if let Some(event) = event {
                    if config.reset_adam_after_dmd && !event.layers.is_empty() {
                        state.reset();
                    }
                    log.events.push(event);
                }
                log.timing.dmd_secs += t1.elapsed().as_secs_f64();
            }
        }

        let t2 = Instant::now();
        log.train_mse.push(model.mse(&data.train.x, &data.train.y)?);
        log.test_mse.push(test.map(|t| model.mse(&t.x, &t.y)).transpose()?);
        log.timing.eval_secs += t2.elapsed().as_secs_f64();
    }
    Ok(log)
}

fn snapshot(model: &Mlp, layer: usize, biases: bool) -> Result<Vec<f64>, NnError> {
    if biases {
        model.flatten_layer(layer)
    } else {
        model.flatten_weights(layer)
    }
}

fn dmd_event(
    model: &mut Mlp,
    buffers: &[SnapshotBuffer],
    data: &TrainData,
    config: &TrainConfig,
    epoch: usize,
    index: usize,
    warnings: &mut Vec<String>,
) -> Result<Option<DmdEvent>, TrainError> {
    let mse_before = model.mse(&data.train.x, &data.train.y)?;
    if mse_before == 0.0 {
        warnings.push(format!("epoch {epoch}: training loss is zero, DMD event skipped"));
        return Ok(None);
    }
    let test_before = data.test.as_ref().map(|t| model.mse(&t.x, &t.y)).transpose()?;

    let forecast = |buf: &SnapshotBuffer| -> Result<Vec<f64>, DmdError> {
        let w = buf.to_matrix()?;
        if let Some(dir) = &config.dump_dir {
            let name = format!("event{index:05}_layer{}.csv", buf.layer_id());
            write_snapshot_csv(&dir.join(name), buf.layer_id(), &w)?;
        }
        let fit = fit_dmd(&w, config.dmd_tol, &config.dmd)?;
        extrapolate(&fit, config.s)
    };
    let results: Vec<Result<Vec<f64>, DmdError>> = if config.parallel_layers {
        buffers.par_iter().map(forecast).collect()
    } else {
        buffers.iter().map(forecast).collect()
    };

    let backup = model.clone();
    let mut layers = Vec::new();
    let mut skipped = Vec::new();
    for (l, res) in results.into_iter().enumerate() {
        let applied = res.map_err(|e| e.to_string()).and_then(|w| {
            let r = if config.snapshot_biases {
                model.assign_layer(l, &w)
            } else {
                model.assign_weights(l, &w)
            };
            r.map_err(|e| e.to_string())
        });
        match applied {
            Ok(()) => layers.push(l),
            Err(msg) => {
                warnings.push(format!("epoch {epoch}: layer {l} DMD update skipped: {msg}"));
                skipped.push((l, msg));
            }
        }
    }

    let mut mse_after = model.mse(&data.train.x, &data.train.y);
    if !matches!(mse_after, Ok(v) if v.is_finite()) {
        let msg = "extrapolated weights give a non-finite loss; reverted".to_string();
        warnings.push(format!("epoch {epoch}: {msg}"));
        *model = backup;
        skipped.extend(layers.drain(..).map(|l| (l, msg.clone())));
        mse_after = Ok(mse_before);
    }
    let mse_after = mse_after?;
    let test_after = data.test.as_ref().map(|t| model.mse(&t.x, &t.y)).transpose()?;

    Ok(Some(DmdEvent {
        epoch,
        layers,
        skipped,
        mse_before,
        mse_after,
        relative_error: mse_after / mse_before,
        test_mse_before: test_before,
        test_mse_after: test_after,
        relative_error_test: test_before.zip(test_after).map(|(b, a)| a / b),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok {
        mean_relative_error: f64,
        mean_relative_error_test: Option<f64>,
        events: usize,
        final_train_mse: f64,
        final_test_mse: Option<f64>,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub m: usize,
    pub s: u32,
    pub status: CellStatus,
}

/// Dense `m x s` grid of independent training runs, row-major in `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub m_values: Vec<usize>,
    pub s_values: Vec<u32>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, mi: usize, si: usize) -> &SweepCell {
        &self.cells[mi * self.s_values.len() + si]
    }

    /// Grid with one row per `m` and one column per `s`; failed cells hold `NaN`.
    pub fn write_grid_csv(&self, path: &Path, test: bool) -> Result<(), TrainError> {
        let mut out = String::from("m\\s");
        for s in &self.s_values {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
        for (mi, m) in self.m_values.iter().enumerate() {
            let _ = write!(out, "{m}");
            for si in 0..self.s_values.len() {
                let v = match &self.cell(mi, si).status {
                    CellStatus::Ok {
                        mean_relative_error,
                        mean_relative_error_test,
                        ..
                    } => {
                        if test {
                            mean_relative_error_test.unwrap_or(f64::NAN)
                        } else {
                            *mean_relative_error
                        }
                    }
                    CellStatus::Failed { .. } => f64::NAN,
                };
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// One row per cell with its status and metrics.
    pub fn write_long_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut out = String::from(
            "m,s,status,mean_relative_error,mean_relative_error_test,events,final_train_mse,final_test_mse,reason\n",
        );
        for c in &self.cells {
            match &c.status {
                CellStatus::Ok {
                    mean_relative_error,
                    mean_relative_error_test,
                    events,
                    final_train_mse,
                    final_test_mse,
                } => {
                    let _ = writeln!(
                        out,
                        "{},{},ok,{mean_relative_error},{},{events},{final_train_mse},{},",
                        c.m,
                        c.s,
                        opt(*mean_relative_error_test),
                        opt(*final_test_mse)
                    );
                }
                CellStatus::Failed { reason } => {
                    let reason = reason.replace(['"', ','], ";");
                    let _ = writeln!(out, "{},{},failed,,,,,,{reason}", c.m, c.s);
                }
            }
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Runs one training per `(m, s)` pair, each from a copy of `initial`.
pub fn sweep(
    initial: &Mlp,
    data: &TrainData,
    m_values: &[usize],
    s_values: &[u32],
    base: &TrainConfig,
) -> Result<SweepResult, TrainError> {
    if m_values.is_empty() || s_values.is_empty() {
        return Err(TrainError::Config("sweep needs at least one m and one s value".into()));
    }
    let pairs: Vec<(usize, u32)> = m_values
        .iter()
        .flat_map(|&m| s_values.iter().map(move |&s| (m, s)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(m, s)| {
            let cfg = TrainConfig {
                m,
                s,
                dmd_enabled: true,
                dump_dir: None,
                ..base.clone()
            };
            let mut model = initial.clone();
            let status = match train(&mut model, data, &cfg) {
                Ok(log) => match mean_relative_error(&log) {
                    Ok(mre) => CellStatus::Ok {
                        mean_relative_error: mre,
                        mean_relative_error_test: mean_relative_error_test(&log).ok(),
                        events: log.events.len(),
                        final_train_mse: log.final_train_mse().unwrap_or(f64::NAN),
                        final_test_mse: log.final_test_mse(),
                    },
                    Err(e) => CellStatus::Failed { reason: e.to_string() },
                },
                Err(e) => CellStatus::Failed { reason: e.to_string() },
            };
            SweepCell { m, s, status }
        })
        .collect();
    Ok(SweepResult {
        m_values: m_values.to_vec(),
        s_values: s_values.to_vec(),
        cells,
    })
}
