use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::{ActivationKind, Link};
use crate::error::{FeatlabError, Result};
use crate::sampling::{Distribution, MatrixKind};
use crate::targets::{Normalization, TargetKind, DEFAULT_CENTERING_SAMPLES};
use crate::training::{default_eta_grid, default_lambda_grid, Solver, TrainConfig};

pub const DEFAULT_TEST_N: usize = 1 << 15;
pub const MAX_HOLDOUT_N: usize = 1 << 15;
pub const MIN_TEST_N: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Infinite {
    Infinite,
}

/// Inner width: an integer, or `"infinite"` for the closed-form kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum M2Mode {
    Finite(usize),
    Infinite(Infinite),
}

impl M2Mode {
    pub fn width(&self) -> Option<usize> {
        match self {
            M2Mode::Finite(m) => Some(*m),
            M2Mode::Infinite(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Identity,
    Sigmoid,
    Cube,
    Relu,
    SmoothedRelu,
}

fn default_true() -> bool {
    true
}
fn default_centering() -> usize {
    DEFAULT_CENTERING_SAMPLES
}
fn default_smoothing() -> f64 {
    0.1
}

/// One sweep, read from a flat TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: TargetKind,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub m1: usize,
    pub m2_mode: M2Mode,
    pub sigma2: ActivationKind,
    /// Ignored for the separation setting, whose link is ReLU.
    #[serde(default = "default_link")]
    pub link: LinkKind,
    /// Matrix family for the quadratic setting.
    #[serde(default)]
    pub a_kind: Option<MatrixKind>,
    #[serde(default)]
    pub normalization: Normalization,
    pub seeds: Vec<u64>,
    /// Defaults to `min(2^15, 8 max(n_grid))`.
    #[serde(default)]
    pub holdout_n: Option<usize>,
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    pub output_path: PathBuf,

    /// Defaults to the standard Gaussian for single-index targets and the
    /// `sqrt(d)` sphere otherwise.
    #[serde(default)]
    pub distribution: Option<Distribution>,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default = "default_smoothing")]
    pub smoothing_eps: f64,
    /// Subtract the mean of `g*(x^T A x)` from quadratic targets.
    #[serde(default = "default_true")]
    pub center: bool,
    /// Rotate the separation matrix by a random orthogonal `U`.
    #[serde(default = "default_true")]
    pub rotate: bool,
    #[serde(default = "default_centering")]
    pub centering_samples: usize,
    #[serde(default)]
    pub eta_bar: Option<f64>,
}

fn default_link() -> LinkKind {
    LinkKind::Identity
}
fn default_test_n() -> usize {
    DEFAULT_TEST_N
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| FeatlabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FeatlabError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FeatlabError::Config(m));
        if self.n_grid.is_empty() {
            return bad("n_grid must be nonempty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_grid must be strictly ascending, got {:?}", self.n_grid));
        }
        if self.n_grid[0] == 0 {
            return bad("n_grid entries must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        if self.test_n < MIN_TEST_N {
            return bad(format!("test_n must be at least {MIN_TEST_N}, got {}", self.test_n));
        }
        if self.d < 2 {
            return bad(format!("d must be at least 2, got {}", self.d));
        }
        if self.m1 == 0 || self.m2_mode == M2Mode::Finite(0) {
            return bad("widths must be positive".into());
        }
        if self.holdout_n == Some(0) {
            return bad("holdout_n must be positive".into());
        }
        if self.eta_grid.is_empty() || self.lambda_grid.is_empty() {
            return bad("eta_grid and lambda_grid must be nonempty".into());
        }
        if self.eta_grid.iter().chain(&self.lambda_grid).any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("grid values must be positive and finite".into());
        }
        if self.setting == TargetKind::Separation && (self.d % 2 != 0 || self.d < 4) {
            return bad(format!("separation needs an even d >= 4, got {}", self.d));
        }
        if self.link == LinkKind::SmoothedRelu && !(self.smoothing_eps > 0.0) {
            return bad("smoothing_eps must be positive".into());
        }
        Ok(())
    }

    /// Fill every defaulted field so the result is self-describing.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut cfg = self.clone();
        let max_n = cfg.n_grid.iter().copied().max().unwrap_or(0);
        cfg.holdout_n.get_or_insert(MAX_HOLDOUT_N.min(8 * max_n));
        cfg.distribution.get_or_insert(match cfg.setting {
            TargetKind::SingleIndex => Distribution::StdGaussian,
            _ => Distribution::SphereSqrtD,
        });
        if cfg.setting == TargetKind::Quadratic {
            cfg.a_kind.get_or_insert(MatrixKind::GaussSym);
        }
        if cfg.setting == TargetKind::Separation {
            cfg.link = LinkKind::Relu;
        }
        cfg
    }

    /// Short hash of the resolved config, excluding where the output goes.
    pub fn config_hash(&self) -> String {
        let mut cfg = self.resolved();
        cfg.output_path = PathBuf::new();
        let json = serde_json::to_string(&cfg).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn link(&self) -> Link {
        match self.link {
            LinkKind::Identity => Link::Identity,
            LinkKind::Sigmoid => Link::Sigmoid,
            LinkKind::Cube => Link::Cube,
            LinkKind::Relu => Link::Relu,
            LinkKind::SmoothedRelu => Link::SmoothedRelu { eps: self.smoothing_eps },
        }
    }

    /// Training settings for one `(n, seed)` cell.
    pub fn train_config(&self, n: usize, seed: u64) -> TrainConfig {
        let r = self.resolved();
        TrainConfig {
            d: r.d,
            n,
            m1: r.m1,
            m2: r.m2_mode.width(),
            sigma2: r.sigma2.into(),
            distribution: r.distribution.expect("resolved"),
            holdout_n: r.holdout_n.expect("resolved"),
            test_n: r.test_n,
            eta_grid: r.eta_grid.clone(),
            lambda_grid: r.lambda_grid.clone(),
            solver: r.solver,
            eta_bar_override: r.eta_bar,
            seed,
        }
    }
}
