use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{FeatlabError, Result};
use crate::kernel::KernelModel;
use crate::sampling::{MatrixKind, Seed};
use crate::targets::{TargetKind, TargetSpec};
use crate::training::train_full;

pub const CSV_HEADER: [&str; 12] = [
    "config_hash",
    "setting",
    "d",
    "n",
    "seed",
    "eta_chosen",
    "lambda_chosen",
    "test_mse",
    "feature_corr",
    "stage1_seconds",
    "stage2_seconds",
    "status",
];

/// Metrics of a finished cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetrics {
    pub eta_chosen: f64,
    pub lambda_chosen: f64,
    pub test_mse: f64,
    pub feature_corr: f64,
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
}

/// One `(n, seed)` cell of a sweep. A failed cell keeps its error message
/// and has no metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub config_hash: String,
    pub setting: TargetKind,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub outcome: std::result::Result<CellMetrics, String>,
}

/// 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn setting_name(s: TargetKind) -> &'static str {
    match s {
        TargetKind::SingleIndex => "single_index",
        TargetKind::Quadratic => "quadratic",
        TargetKind::Separation => "separation",
    }
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }

    pub fn metrics(&self) -> Option<&CellMetrics> {
        self.outcome.as_ref().ok()
    }

    pub fn to_row(&self) -> Vec<String> {
        let mut row = vec![
            self.config_hash.clone(),
            setting_name(self.setting).to_string(),
            self.d.to_string(),
            self.n.to_string(),
            self.seed.to_string(),
        ];
        match &self.outcome {
            Ok(m) => {
                row.extend(
                    [m.eta_chosen, m.lambda_chosen, m.test_mse, m.feature_corr, m.stage1_seconds, m.stage2_seconds]
                        .map(format_float),
                );
                row.push("ok".into());
            }
            Err(e) => {
                row.extend(std::iter::repeat(String::new()).take(6));
                row.push(format!("error: {e}"));
            }
        }
        row
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Concurrent cells; 0 uses every available core.
    pub workers: usize,
    /// Added to every configured seed.
    pub seed_offset: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 0, seed_offset: 0 }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    library: &'static str,
    version: &'static str,
    config_hash: String,
    seed_offset: u64,
    workers: usize,
    config: &'a ExperimentConfig,
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn build_target(cfg: &ExperimentConfig, seed: u64) -> Result<TargetSpec> {
    let s = Seed::new(seed);
    match cfg.setting {
        TargetKind::SingleIndex => TargetSpec::single_index(cfg.d, cfg.link(), s),
        TargetKind::Quadratic => TargetSpec::quadratic(
            cfg.d,
            cfg.a_kind.unwrap_or(MatrixKind::GaussSym),
            cfg.link(),
            cfg.normalization,
            cfg.center,
            cfg.centering_samples,
            s,
        ),
        TargetKind::Separation => TargetSpec::separation(cfg.d, cfg.rotate, cfg.centering_samples, s),
    }
}

fn run_cell(cfg: &ExperimentConfig, kernel: Option<&KernelModel>, hash: &str, n: usize, seed: u64) -> ResultRecord {
    let outcome = build_target(cfg, seed)
        .and_then(|target| train_full(&target, &cfg.train_config(n, seed), kernel))
        .map(|o| CellMetrics {
            eta_chosen: o.eta_chosen,
            lambda_chosen: o.lambda_chosen,
            test_mse: o.test_mse,
            feature_corr: o.feature_corr,
            stage1_seconds: o.stage1_seconds,
            stage2_seconds: o.stage2_seconds,
        })
        .map_err(|e| e.to_string());
    ResultRecord { config_hash: hash.to_string(), setting: cfg.setting, d: cfg.d, n, seed, outcome }
}

fn write_rows(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let tmp = {
        let mut s = path.as_os_str().to_owned();
        s.push(".tmp");
        PathBuf::from(s)
    };
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(CSV_HEADER)?;
        for r in records {
            w.write_record(r.to_row())?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Run every `(n, seed)` cell, appending rows to `output_path` as cells
/// finish, then rewrite the file sorted by `(n, seed)`. A failing cell
/// becomes an error row; only I/O and config problems abort the sweep.
pub fn run(config: &ExperimentConfig, opts: RunOptions) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let mut cfg = config.resolved();
    for s in &mut cfg.seeds {
        *s = s.wrapping_add(opts.seed_offset);
    }
    let hash = config.config_hash();
    let output = cfg.output_path.clone();
    if let Some(dir) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }

    let sidecar = Sidecar {
        library: "featlab",
        version: crate::VERSION,
        config_hash: hash.clone(),
        seed_offset: opts.seed_offset,
        workers: opts.workers,
        config: &cfg,
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| FeatlabError::Io(e.to_string()))?;
    std::fs::write(sidecar_path(&output), json + "\n")?;

    let kernel = match cfg.m2_mode.width() {
        None => Some(KernelModel::closed_form(cfg.d, cfg.sigma2.into())?),
        Some(_) => None,
    };

    let cells: Vec<(usize, u64)> =
        cfg.n_grid.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect();

    let file = File::create(&output)?;
    let (tx, rx) = mpsc::channel::<ResultRecord>();
    let writer = std::thread::spawn(move || -> Result<Vec<ResultRecord>> {
        let mut w = csv::Writer::from_writer(file);
        w.write_record(CSV_HEADER)?;
        w.flush()?;
        let mut done = Vec::new();
        for rec in rx {
            w.write_record(rec.to_row())?;
            w.flush()?;
            done.push(rec);
        }
        Ok(done)
    });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| FeatlabError::Config(e.to_string()))?;
    pool.install(|| {
        cells.par_iter().for_each_with(tx, |tx, &(n, seed)| {
            let rec = run_cell(&cfg, kernel.as_ref(), &hash, n, seed);
            // The writer only stops early on I/O failure, reported below.
            let _ = tx.send(rec);
        });
    });

    let mut records = writer
        .join()
        .map_err(|_| FeatlabError::Io("result writer panicked".into()))??;
    records.sort_by_key(|r| (r.n, r.seed));
    write_rows(&output, &records)?;
    Ok(records)
}
