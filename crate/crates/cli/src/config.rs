//! Resolved run configuration: defaults, then the TOML file, then flags.

use std::fs;
use std::path::Path;

use dmdnet::adr::{DatasetConfig, SimilarityScaling};
use dmdnet::nn::Activation;
use dmdnet::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "DMDNET_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden-layer widths; input and output widths come from the dataset.
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16, 32, 64],
            activation: Activation::Softsign,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub m: Vec<usize>,
    pub s: Vec<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            m: vec![2, 8, 14, 20],
            s: vec![5, 30, 55, 80, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlasiusConfig {
    pub u0: f64,
    pub uh: f64,
    pub uv: f64,
    pub eta_max: f64,
    pub n_eta: usize,
    pub scaling: SimilarityScaling,
}

impl Default for BlasiusConfig {
    fn default() -> Self {
        Self {
            u0: 1.0,
            uh: 0.0,
            uv: 0.0,
            eta_max: 10.0,
            n_eta: 2001,
            scaling: SimilarityScaling::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub threads: Option<usize>,
    pub network: NetworkConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub blasius: BlasiusConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate_network(&self) -> Result<(), CliError> {
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(CliError::Usage(format!(
                "network.hidden must be non-empty with widths >= 1, got {:?}",
                self.network.hidden
            )));
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<(), CliError> {
        if self.sweep.m.is_empty() || self.sweep.s.is_empty() {
            return Err(CliError::Usage("sweep.m and sweep.s must be non-empty".into()));
        }
        if let Some(&m) = self.sweep.m.iter().find(|&&m| m < 2) {
            return Err(CliError::Usage(format!("sweep.m values must be >= 2, got {m}")));
        }
        Ok(())
    }
}

/// `--threads`, then the environment, then the file; `None` means the rayon default.
pub fn resolve_threads(flag: Option<usize>, file: Option<usize>) -> Result<Option<usize>, CliError> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        _ => None,
    };
    let threads = flag.or(env).or(file);
    if threads == Some(0) {
        return Err(CliError::Usage("threads must be >= 1".into()));
    }
    Ok(threads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmdnet::adr::ProbeSpec;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = RunConfig::from_toml(
            r#"
            threads = 2
            [network]
            hidden = [8, 8]
            activation = "identity"
            [dataset]
            n_samples = 40
            probes = { count = 30 }
            [dataset.grid]
            nx = 32
            ny = 16
            x0 = 0.05
            lx = 4.0
            ly = 2.0
            [train]
            m = 10
            s = 20
            total_epochs = 300
            [train.optimizer]
            kind = "adam"
            lr = 0.01
            [train.dmd]
            clamp_unstable = true
            [sweep]
            m = [2, 14]
            s = [5, 55]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.threads, Some(2));
        assert_eq!(cfg.network.hidden, vec![8, 8]);
        assert_eq!(cfg.network.activation, Activation::Identity);
        assert_eq!(cfg.dataset.n_samples, 40);
        assert_eq!(cfg.dataset.probes, ProbeSpec::Count(30));
        assert_eq!(cfg.dataset.grid.nx, 32);
        assert_eq!((cfg.train.m, cfg.train.s, cfg.train.total_epochs), (10, 20, 300));
        assert!(cfg.train.dmd.clamp_unstable);
        assert_eq!(cfg.train.dmd_tol, 1e-10);
        assert_eq!(cfg.sweep.m, vec![2, 14]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["colour = 1", "[train]\nmm = 3", "[dataset.grid]\nnz = 4", "[bogus]"] {
            let err = RunConfig::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}");
        }
    }

    #[test]
    fn explicit_probe_points_parse() {
        let cfg = RunConfig::from_toml("[dataset]\nprobes = { points = [[0.5, 0.1], [1.0, 0.2]] }").unwrap();
        assert_eq!(cfg.dataset.probes, ProbeSpec::Points(vec![(0.5, 0.1), (1.0, 0.2)]));
    }

    #[test]
    fn flag_overrides_file_threads() {
        assert_eq!(resolve_threads(Some(3), Some(5)).unwrap(), Some(3));
        assert!(resolve_threads(Some(0), None).is_err());
    }
}
