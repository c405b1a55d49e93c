//! Stage 2 (ridge regression on the outer weights) and the end-to-end
//! layer-wise training pipeline.
//!
//! After stage 1 the network is a function of the scalar `eta_bar phi(x)`
//! only: `f(x) = sum_j a_j psi_j(x)` with
//! `psi_j(x) = (1/m1) relu(a0_j eta_bar phi(x) + b_j) 1[b_j > 0]`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::{relu, Activation};
use crate::error::{FeatlabError, Result};
use crate::kernel::{
    eta_bar_from_values, learned_feature_finite, learned_feature_infinite, residuals_at_init,
    KernelModel, LearnedFeature,
};
use crate::network::{eta1_from_eta_bar, NetworkState};
use crate::sampling::{sample_init, sample_outer, sample_points, Dataset, Distribution, Purpose, Seed};
use crate::stats::{mse, pearson};
use crate::targets::TargetSpec;

/// Design matrix of the stage-2 regression.
#[derive(Debug, Clone)]
pub struct StageTwoDesign {
    /// n x m1, `psi_j(x_i)`.
    pub psi: DMatrix<f64>,
    /// Outer weights at initialization; also the starting point of gradient descent.
    pub a0: DVector<f64>,
    pub eta_bar: f64,
    pub lambda: f64,
}

/// `psi_j(x_i) = (1/m1) relu(a0_j eta_bar phi_i + b_j) 1[b_j > 0]`.
pub fn design_matrix(a0: &DVector<f64>, b: &DVector<f64>, phi: &DVector<f64>, eta_bar: f64) -> DMatrix<f64> {
    let m1 = a0.len();
    let inv = 1.0 / m1 as f64;
    DMatrix::from_fn(phi.len(), m1, |i, j| {
        if b[j] > 0.0 {
            inv * relu(a0[j] * eta_bar * phi[i] + b[j])
        } else {
            0.0
        }
    })
}

impl StageTwoDesign {
    pub fn new(
        a0: &DVector<f64>,
        b: &DVector<f64>,
        phi: &DVector<f64>,
        eta_bar: f64,
        lambda: f64,
    ) -> Result<Self> {
        if a0.len() != b.len() {
            return Err(FeatlabError::InvalidSize("a0 and b lengths differ".into()));
        }
        Ok(StageTwoDesign { psi: design_matrix(a0, b, phi, eta_bar), a0: a0.clone(), eta_bar, lambda })
    }

    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    /// `(1/2n) ||psi a - y||^2 + (lambda/2) ||a||^2`.
    pub fn objective(&self, labels: &DVector<f64>, a: &DVector<f64>) -> f64 {
        let r = &self.psi * a - labels;
        r.norm_squared() / (2.0 * self.n() as f64) + 0.5 * self.lambda * a.norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Solver {
    /// Exact minimizer via the normal equations.
    #[default]
    Direct,
    /// Full-batch gradient descent from `a0`. `None` picks `eta2 = 1/L` and
    /// enough steps for the smoothness / strong-convexity rate to reach the
    /// minimizer to ~1e-12 in objective.
    Gd { eta2: Option<f64>, steps: Option<usize> },
}

#[derive(Debug, Clone)]
pub struct StageTwoFit {
    pub a: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Normal-equation pieces: `H = psi^T psi / n` and `g = psi^T y / n`.
struct Quadratic {
    h: DMatrix<f64>,
    g: DVector<f64>,
    c: f64,
}

impl Quadratic {
    fn new(psi: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let n = psi.nrows() as f64;
        let pt = psi.transpose();
        Quadratic { h: &pt * psi / n, g: pt * y / n, c: y.norm_squared() / (2.0 * n) }
    }

    fn objective(&self, a: &DVector<f64>, lambda: f64) -> f64 {
        0.5 * a.dot(&(&self.h * a)) - self.g.dot(a) + self.c + 0.5 * lambda * a.norm_squared()
    }

    fn solve(&self, lambda: f64) -> Result<DVector<f64>> {
        let m = self.h.nrows();
        let mut reg = self.h.clone();
        for i in 0..m {
            reg[(i, i)] += lambda;
        }
        let chol = reg
            .cholesky()
            .ok_or_else(|| FeatlabError::Numerical("ridge system is not positive definite".into()))?;
        Ok(chol.solve(&self.g))
    }
}

const DIVERGENCE_STREAK: usize = 10;
const MAX_GD_STEPS: usize = 50_000_000;

pub fn stage2_fit(design: &StageTwoDesign, labels: &DVector<f64>, solver: Solver) -> Result<StageTwoFit> {
    if labels.len() != design.n() {
        return Err(FeatlabError::InvalidSize(format!(
            "{} labels for a design with {} rows",
            labels.len(),
            design.n()
        )));
    }
    if design.n() == 0 {
        return Err(FeatlabError::InvalidSize("empty stage-2 dataset".into()));
    }
    let lambda = design.lambda;
    if !(lambda > 0.0) {
        return Err(FeatlabError::Config(format!("ridge weight must be positive, got {lambda}")));
    }
    let q = Quadratic::new(&design.psi, labels);
    match solver {
        Solver::Direct => {
            let a = q.solve(lambda)?;
            Ok(StageTwoFit { objective: q.objective(&a, lambda), a, iterations: 0 })
        }
        Solver::Gd { eta2, steps } => {
            let eig = q.h.clone().symmetric_eigenvalues();
            let smooth = eig.max().max(0.0) + lambda;
            let strong = eig.min().max(0.0) + lambda;
            let eta2 = eta2.unwrap_or(1.0 / smooth);
            if !(eta2 > 0.0) {
                return Err(FeatlabError::StepSize(format!("step size must be positive, got {eta2}")));
            }
            let mut a = design.a0.clone();
            let mut obj = q.objective(&a, lambda);
            let steps = match steps {
                Some(t) => t,
                None => {
                    let rate = -(1.0 - strong / smooth).max(f64::MIN_POSITIVE).ln();
                    let need = (obj.max(1e-300) / 1e-13).ln().max(0.0) / rate.max(1e-300);
                    (need.ceil() as usize + 1).min(MAX_GD_STEPS)
                }
            };
            let mut streak = 0;
            for t in 0..steps {
                let grad = &q.h * &a - &q.g + &a * lambda;
                a -= grad * eta2;
                let next = q.objective(&a, lambda);
                if !next.is_finite() {
                    return Err(FeatlabError::StepSize(format!("objective became non-finite at step {t}")));
                }
                streak = if next > obj { streak + 1 } else { 0 };
                if streak >= DIVERGENCE_STREAK {
                    return Err(FeatlabError::StepSize(format!(
                        "objective increased {DIVERGENCE_STREAK} consecutive steps (eta2 = {eta2}, smoothness {smooth})"
                    )));
                }
                obj = next;
            }
            Ok(StageTwoFit { a, objective: obj, iterations: steps })
        }
    }
}

/// Settings for a single training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub d: usize,
    /// Size of each of the two training sets.
    pub n: usize,
    pub m1: usize,
    /// Inner width; `None` simulates the infinite-width limit.
    pub m2: Option<usize>,
    pub sigma2: Activation,
    pub distribution: Distribution,
    pub holdout_n: usize,
    pub test_n: usize,
    /// Multipliers applied to the calibrated `eta_bar`.
    pub eta_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub solver: Solver,
    /// Use this `eta_bar` instead of the calibrated one (multipliers still apply).
    pub eta_bar_override: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FeatlabError::Config(m.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.m1 == 0 || self.m2 == Some(0) {
            return bad("widths must be positive");
        }
        if self.holdout_n == 0 || self.test_n == 0 {
            return bad("holdout and test sets must be nonempty");
        }
        if self.eta_grid.is_empty() || self.lambda_grid.is_empty() {
            return bad("hyperparameter grids must be nonempty");
        }
        if self.eta_grid.iter().chain(&self.lambda_grid).any(|v| !(*v > 0.0)) {
            return bad("grid values must be positive");
        }
        Ok(())
    }
}

/// `x -> sum_j a_j psi_j(x)` with the learned feature baked in.
#[derive(Debug, Clone)]
pub struct TrainedPredictor {
    pub feature: LearnedFeature,
    pub a0: DVector<f64>,
    pub b: DVector<f64>,
    pub a: DVector<f64>,
}

impl TrainedPredictor {
    pub fn predict(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        let phi = self.feature.eval(points)?;
        Ok(self.predict_from_feature(&phi))
    }

    pub fn predict_from_feature(&self, phi: &DVector<f64>) -> DVector<f64> {
        design_matrix(&self.a0, &self.b, phi, self.feature.eta_bar) * &self.a
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub predictor: TrainedPredictor,
    /// The explicit network after both stages (finite width only).
    pub network: Option<NetworkState>,
    pub eta_bar_calibrated: f64,
    pub eta_chosen: f64,
    pub lambda_chosen: f64,
    pub holdout_mse: f64,
    pub test_mse: f64,
    pub feature_corr: f64,
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
}

fn labelled(target: &TargetSpec, points: DMatrix<f64>, distribution: Distribution) -> Result<Dataset> {
    let labels = target.eval_target(&points)?;
    Ok(Dataset { points, labels, distribution })
}

/// The whole layer-wise procedure: sample the splits, take the stage-1 step
/// (or form the infinite-width feature), calibrate `eta_bar`, grid-search
/// `(eta_bar multiplier, lambda)` on the holdout set and report test metrics.
///
/// `kernel` may carry a prebuilt closed-form kernel for the infinite-width
/// case; it is built on demand otherwise.
pub fn train_full(target: &TargetSpec, cfg: &TrainConfig, kernel: Option<&KernelModel>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if target.d != cfg.d {
        return Err(FeatlabError::Config(format!(
            "target has d = {}, config has d = {}",
            target.d, cfg.d
        )));
    }
    let seed = Seed::new(cfg.seed);
    let (d, dist) = (cfg.d, cfg.distribution);
    let sample = |purpose, n| sample_points(dist, d, n, seed.derive(purpose, 0));

    let t1 = Instant::now();
    let d1 = labelled(target, sample(Purpose::TrainFeature, cfg.n)?, dist)?;
    let d2 = labelled(target, sample(Purpose::TrainReadout, cfg.n)?, dist)?;
    let holdout = labelled(target, sample(Purpose::Holdout, cfg.holdout_n)?, dist)?;
    let test = labelled(target, sample(Purpose::Test, cfg.test_n)?, dist)?;

    let (theta0, feature) = match cfg.m2 {
        Some(m2) => {
            let theta0 = sample_init(d, cfg.m1, m2, seed)?;
            let feature = learned_feature_finite(&theta0, &cfg.sigma2, &d1)?;
            (theta0, feature)
        }
        None => {
            let (a0, b) = sample_outer(cfg.m1, seed.derive(Purpose::InitOuter, 0));
            let init_output = a0.iter().zip(b.iter()).map(|(a, b)| a * relu(*b)).sum::<f64>() / cfg.m1 as f64;
            let r = residuals_at_init(&d1.labels, init_output);
            let built;
            let model = match kernel {
                Some(k) => k,
                None => {
                    built = KernelModel::closed_form(d, cfg.sigma2.clone())?;
                    &built
                }
            };
            let feature = learned_feature_infinite(model, &d1.points, &r)?;
            // Keep (a0, b) for stage 2 in a width-free state.
            let state = NetworkState::at_init(a0, b, DMatrix::zeros(0, d));
            (state, feature)
        }
    };
    let phi2 = feature.eval(&d2.points)?;
    let eta_cal = match cfg.eta_bar_override {
        Some(e) => e,
        None => eta_bar_from_values(phi2.as_slice())?,
    };
    let stage1_seconds = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let phi_hold = feature.eval(&holdout.points)?;
    let mut best: Option<(f64, f64, f64, DVector<f64>)> = None;
    for &mult in &cfg.eta_grid {
        let eta_bar = mult * eta_cal;
        let psi = design_matrix(&theta0.a, &theta0.b, &phi2, eta_bar);
        let psi_hold = design_matrix(&theta0.a, &theta0.b, &phi_hold, eta_bar);
        let quad = match cfg.solver {
            Solver::Direct => Some(Quadratic::new(&psi, &d2.labels)),
            Solver::Gd { .. } => None,
        };
        for &lambda in &cfg.lambda_grid {
            let a = match &quad {
                Some(q) => q.solve(lambda)?,
                None => {
                    let design = StageTwoDesign { psi: psi.clone(), a0: theta0.a.clone(), eta_bar, lambda };
                    stage2_fit(&design, &d2.labels, cfg.solver)?.a
                }
            };
            let pred = &psi_hold * &a;
            let err = mse(pred.as_slice(), holdout.labels.as_slice());
            if err.is_finite() && best.as_ref().map_or(true, |b| err < b.0) {
                best = Some((err, eta_bar, lambda, a));
            }
        }
    }
    let (holdout_mse, eta_chosen, lambda_chosen, a) =
        best.ok_or_else(|| FeatlabError::Numerical("no grid point produced a finite holdout loss".into()))?;
    let stage2_seconds = t2.elapsed().as_secs_f64();

    let predictor = TrainedPredictor {
        feature: feature.with_eta_bar(eta_chosen),
        a0: theta0.a.clone(),
        b: theta0.b.clone(),
        a,
    };
    let phi_test = predictor.feature.eval(&test.points)?;
    let pred = predictor.predict_from_feature(&phi_test);
    let test_mse = mse(pred.as_slice(), test.labels.as_slice());
    let h_test = target.eval_feature(&test.points)?;
    let feature_corr = pearson(phi_test.as_slice(), h_test.as_slice());

    let network = match cfg.m2 {
        Some(m2) => {
            let eta1 = eta1_from_eta_bar(eta_chosen, cfg.m1, m2);
            let theta1 = theta0.stage1_step(&cfg.sigma2, &d1, eta1)?;
            Some(theta1.with_outer_weights(predictor.a.clone())?)
        }
        None => None,
    };

    Ok(TrainOutcome {
        predictor,
        network,
        eta_bar_calibrated: eta_cal,
        eta_chosen,
        lambda_chosen,
        holdout_mse,
        test_mse,
        feature_corr,
        stage1_seconds,
        stage2_seconds,
    })
}

/// Default `eta_bar` multipliers for the grid search.
pub fn default_eta_grid() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

/// Default ridge weights: `1e-6 ... 1e0`, seven log-spaced points.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..7).map(|i| 10f64.powi(i - 6)).collect()
}
