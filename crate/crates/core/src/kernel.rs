//! The random-feature kernel `K(x, x') = E_v[sigma2(x.v) sigma2(x'.v)]` and
//! the learned feature obtained from one gradient step on the middle layer.
//!
//! On the sphere `S^{d-1}(sqrt d)` the kernel depends on `t = <x, x'>/d`
//! only, with `K(t) = sum_k lambda_k^2 B(d,k) G_k(t)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::activation::Activation;
use crate::error::{FeatlabError, Result};
use crate::gegenbauer::{
    activation_second_moment, lambda_k, relu_kernel_weight, GegenbauerBasis,
};
use crate::network::{NetworkState, Stage};
use crate::sampling::Dataset;

/// Slack on `|<x,x'>/d| <= 1` for points that should lie on the sphere.
pub const KERNEL_DOMAIN_SLACK: f64 = 1e-8;
/// Stop adding degrees once a term is this small relative to the running sum...
pub const TERM_REL_TOL: f64 = 1e-12;
/// ...and the remaining mass is this small.
pub const TAIL_REL_TOL: f64 = 1e-10;
const MAX_DEGREE: usize = 1 << 17;
const MAX_CUSTOM_DEGREE: usize = 512;

const TABLE_INTERVALS: usize = 1 << 15;
/// Beyond this `|t|` the profile is summed directly instead of interpolated.
const TABLE_EDGE: f64 = 0.999;

/// Closed-form kernel profile `K(t)` as a truncated Gegenbauer series.
#[derive(Debug, Clone)]
pub struct ClosedFormKernel {
    pub d: usize,
    /// `lambda_k^2` for `k <= k_max`.
    pub lambda_sq: Vec<f64>,
    /// `lambda_k^2 B(d, k)`.
    pub weights: Vec<f64>,
    pub k_max: usize,
    /// `E[sigma2(sqrt(d) t)^2] - sum_{k <= k_max} weights`, the exact missing mass.
    pub tail_bound: f64,
    /// Whether the tail satisfies the construction tolerance. Always true
    /// for adaptively truncated kernels.
    pub converged: bool,
    basis: GegenbauerBasis,
    table: Option<Vec<f64>>,
}

impl ClosedFormKernel {
    /// Adaptive truncation: the smallest `k_max` at which a nonzero term is
    /// below `TERM_REL_TOL` of the running sum and the remaining mass is
    /// below `TAIL_REL_TOL` of it.
    pub fn new(d: usize, sigma2: &Activation) -> Result<Self> {
        let total = activation_second_moment(d, sigma2)?;
        let cap = if matches!(sigma2, Activation::Custom { .. }) { MAX_CUSTOM_DEGREE } else { MAX_DEGREE };
        let mut weights = Vec::new();
        let mut lambda_sq = Vec::new();
        let mut sum = 0.0;
        let mut k = 0;
        loop {
            let (l2, w) = degree_term(d, sigma2, k)?;
            lambda_sq.push(l2);
            weights.push(w);
            sum += w;
            let tail = total - sum;
            if sum > 0.0 && tail.abs() <= TAIL_REL_TOL * sum && w < TERM_REL_TOL * sum {
                break;
            }
            k += 1;
            if k > cap {
                return Err(FeatlabError::Numerical(format!(
                    "kernel series for {} in d={d} did not reach tail tolerance by degree {cap}",
                    sigma2.name()
                )));
            }
        }
        ClosedFormKernel::assemble(d, lambda_sq, weights, total, true)
    }

    /// Fixed truncation at `k_max`, whatever the tail. Used for diagnostics
    /// and deliberately mis-specified kernels.
    pub fn truncated(d: usize, sigma2: &Activation, k_max: usize) -> Result<Self> {
        let total = activation_second_moment(d, sigma2)?;
        let mut weights = Vec::with_capacity(k_max + 1);
        let mut lambda_sq = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let (l2, w) = degree_term(d, sigma2, k)?;
            lambda_sq.push(l2);
            weights.push(w);
        }
        let sum: f64 = weights.iter().sum();
        let converged = (total - sum).abs() <= TAIL_REL_TOL * sum;
        ClosedFormKernel::assemble(d, lambda_sq, weights, total, converged)
    }

    fn assemble(
        d: usize,
        lambda_sq: Vec<f64>,
        mut weights: Vec<f64>,
        total: f64,
        converged: bool,
    ) -> Result<Self> {
        // Trim exact trailing zeros (odd degrees of even activations).
        while weights.len() > 1 && *weights.last().unwrap() == 0.0 {
            weights.pop();
        }
        let k_max = weights.len() - 1;
        let sum: f64 = weights.iter().sum();
        let basis = GegenbauerBasis::new(d, k_max.max(1))?;
        let mut kernel = ClosedFormKernel {
            d,
            lambda_sq: lambda_sq[..=k_max].to_vec(),
            weights,
            k_max,
            tail_bound: (total - sum).max(0.0),
            converged,
            basis,
            table: None,
        };
        if !kernel.is_affine() && kernel.k_max > 16 {
            let h = 2.0 / TABLE_INTERVALS as f64;
            let table = (0..=TABLE_INTERVALS)
                .map(|i| kernel.series((-1.0 + i as f64 * h).clamp(-1.0, 1.0)))
                .collect();
            kernel.table = Some(table);
        }
        Ok(kernel)
    }

    /// Only degrees 0 and 1 are present, so `K(x, x') = lambda_0^2 +
    /// lambda_1^2 <x, x'>` on all of `R^d`.
    pub fn is_affine(&self) -> bool {
        self.k_max <= 1
    }

    /// Direct series evaluation; `t` must lie in `[-1, 1]`.
    pub fn series(&self, t: f64) -> f64 {
        self.basis.series(&self.weights, t)
    }

    /// `K(t)` with a domain check.
    pub fn profile(&self, t: f64) -> Result<f64> {
        if !(t.abs() <= 1.0 + KERNEL_DOMAIN_SLACK) {
            return Err(FeatlabError::Domain(t));
        }
        Ok(self.profile_unchecked(t.clamp(-1.0, 1.0)))
    }

    /// Profile for `t` already known to lie in `[-1, 1]`.
    #[inline]
    pub fn profile_unchecked(&self, t: f64) -> f64 {
        match &self.table {
            Some(table) if t.abs() <= TABLE_EDGE => interpolate(table, t),
            _ => self.series(t),
        }
    }

    /// `K(x, x')` for points on `S^{d-1}(sqrt d)` (any points when affine).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        if self.is_affine() {
            return Ok(self.lambda_sq[0] + self.lambda_sq.get(1).copied().unwrap_or(0.0) * dot);
        }
        self.profile(dot / self.d as f64)
    }
}

fn degree_term(d: usize, sigma2: &Activation, k: usize) -> Result<(f64, f64)> {
    let b = crate::gegenbauer::ln_geg_dim(d as f64, k).exp();
    match sigma2 {
        Activation::Relu => {
            let w = relu_kernel_weight(d, k);
            Ok((if w == 0.0 { 0.0 } else { w / b }, w))
        }
        _ => {
            let l = lambda_k(d, sigma2, k)?;
            Ok((l * l, l * l * b))
        }
    }
}

/// Four-point Lagrange interpolation on the uniform grid over `[-1, 1]`.
#[inline]
fn interpolate(table: &[f64], t: f64) -> f64 {
    let n = table.len() - 1;
    let u = (t + 1.0) * 0.5 * n as f64;
    let i = (u.floor() as usize).clamp(1, n - 2);
    let s = u - i as f64;
    let (y0, y1, y2, y3) = (table[i - 1], table[i], table[i + 1], table[i + 2]);
    // Nodes at -1, 0, 1, 2 in units of the grid step.
    let c0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let c1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let c2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let c3 = (s + 1.0) * s * (s - 1.0) / 6.0;
    c0 * y0 + c1 * y1 + c2 * y2 + c3 * y3
}

#[derive(Debug, Clone)]
pub enum KernelMode {
    /// Monte-Carlo kernel over explicit inner weights (m2 x d, unit rows).
    FiniteWidth { v: DMatrix<f64> },
    ClosedForm(Arc<ClosedFormKernel>),
}

#[derive(Debug, Clone)]
pub struct KernelModel {
    pub d: usize,
    pub sigma2: Activation,
    pub mode: KernelMode,
}

impl KernelModel {
    pub fn finite_width(sigma2: Activation, v: DMatrix<f64>) -> Self {
        KernelModel { d: v.ncols(), sigma2, mode: KernelMode::FiniteWidth { v } }
    }

    pub fn closed_form(d: usize, sigma2: Activation) -> Result<Self> {
        let k = ClosedFormKernel::new(d, &sigma2)?;
        Ok(KernelModel { d, sigma2, mode: KernelMode::ClosedForm(Arc::new(k)) })
    }

    pub fn closed_form_truncated(d: usize, sigma2: Activation, k_max: usize) -> Result<Self> {
        let k = ClosedFormKernel::truncated(d, &sigma2, k_max)?;
        Ok(KernelModel { d, sigma2, mode: KernelMode::ClosedForm(Arc::new(k)) })
    }

    pub fn closed(&self) -> Option<&Arc<ClosedFormKernel>> {
        match &self.mode {
            KernelMode::ClosedForm(k) => Some(k),
            KernelMode::FiniteWidth { .. } => None,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.d || y.len() != self.d {
            return Err(FeatlabError::InvalidDimension(format!(
                "kernel expects d = {}, got {} and {}",
                self.d,
                x.len(),
                y.len()
            )));
        }
        match &self.mode {
            KernelMode::ClosedForm(k) => k.eval(x, y),
            KernelMode::FiniteWidth { .. } => Ok(self.eval_with_se(x, y)?.0),
        }
    }

    /// Finite-width estimate with its Monte-Carlo standard error over the
    /// inner units. Closed-form kernels report zero error.
    pub fn eval_with_se(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        match &self.mode {
            KernelMode::ClosedForm(k) => Ok((k.eval(x, y)?, 0.0)),
            KernelMode::FiniteWidth { v } => {
                let m2 = v.nrows();
                let xv = DVector::from_column_slice(x);
                let yv = DVector::from_column_slice(y);
                let hx = v * xv;
                let hy = v * yv;
                let prods: Vec<f64> = (0..m2)
                    .map(|j| self.sigma2.apply(hx[j]) * self.sigma2.apply(hy[j]))
                    .collect();
                Ok(crate::stats::mean_and_se(&prods))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum FeatureKind {
    /// `phi(x) = u . sigma2(V x)` with `u = (1/(m2 n)) sum_i r_i h(x_i)`.
    Finite { v: DMatrix<f64>, sigma2: Activation, u: DVector<f64> },
    /// Infinite width with an affine kernel: `phi(x) = bias + w . x`.
    InfiniteAffine { bias: f64, w: DVector<f64> },
    /// `phi(x) = (1/n) sum_i r_i K(x_i, x)`.
    Infinite { points: DMatrix<f64>, residuals: DVector<f64>, kernel: Arc<ClosedFormKernel> },
}

/// The scalar feature computed by the middle layer after stage 1, before
/// scaling by `eta_bar`.
#[derive(Debug, Clone)]
pub struct LearnedFeature {
    pub kind: FeatureKind,
    /// Scale applied in the stage-2 design; 1 until calibrated.
    pub eta_bar: f64,
}

/// Query points per tile in the infinite-width evaluation.
const TILE: usize = 128;

impl LearnedFeature {
    pub fn dim(&self) -> usize {
        match &self.kind {
            FeatureKind::Finite { v, .. } => v.ncols(),
            FeatureKind::InfiniteAffine { w, .. } => w.len(),
            FeatureKind::Infinite { points, .. } => points.ncols(),
        }
    }

    pub fn with_eta_bar(mut self, eta_bar: f64) -> Self {
        self.eta_bar = eta_bar;
        self
    }

    /// Unscaled `phi` at every row of `points`.
    pub fn eval(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        if points.ncols() != self.dim() {
            return Err(FeatlabError::InvalidDimension(format!(
                "feature expects d = {}, got {}",
                self.dim(),
                points.ncols()
            )));
        }
        match &self.kind {
            FeatureKind::Finite { v, sigma2, u } => {
                let mut h = points * v.transpose();
                h.apply(|z| *z = sigma2.apply(*z));
                Ok(h * u)
            }
            FeatureKind::InfiniteAffine { bias, w } => Ok((points * w).add_scalar(*bias)),
            FeatureKind::Infinite { points: train, residuals, kernel } => {
                eval_kernel_average(train, residuals, kernel, points)
            }
        }
    }
}

/// `(1/n) sum_i r_i K(x_i, q)` for every query row `q`, tiled over queries.
fn eval_kernel_average(
    train: &DMatrix<f64>,
    residuals: &DVector<f64>,
    kernel: &ClosedFormKernel,
    queries: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let n = train.nrows();
    let nq = queries.nrows();
    let inv_d = 1.0 / kernel.d as f64;
    let inv_n = 1.0 / n as f64;
    let starts: Vec<usize> = (0..nq).step_by(TILE).collect();
    let tiles: Result<Vec<Vec<f64>>> = starts
        .par_iter()
        .map(|&start| {
            let rows = TILE.min(nq - start);
            let q = queries.rows(start, rows);
            // n x rows Gram block.
            let g = train * q.transpose();
            let mut out = vec![0.0; rows];
            for (j, o) in out.iter_mut().enumerate() {
                let col = g.column(j);
                let mut acc = 0.0;
                for i in 0..n {
                    let t = col[i] * inv_d;
                    if !(t.abs() <= 1.0 + KERNEL_DOMAIN_SLACK) {
                        return Err(FeatlabError::Domain(t));
                    }
                    acc += residuals[i] * kernel.profile_unchecked(t.clamp(-1.0, 1.0));
                }
                *o = acc * inv_n;
            }
            Ok(out)
        })
        .collect();
    Ok(DVector::from_iterator(nq, tiles?.into_iter().flatten()))
}

/// `r_i = y_i - f(x_i; theta0)` for a network whose output at
/// initialization is the constant `init_output`.
pub fn residuals_at_init(labels: &DVector<f64>, init_output: f64) -> DVector<f64> {
    labels.map(|y| y - init_output)
}

/// Learned feature of a finite-width network at initialization.
pub fn learned_feature_finite(
    theta0: &NetworkState,
    sigma2: &Activation,
    d1: &Dataset,
) -> Result<LearnedFeature> {
    if theta0.stage != Stage::Init || theta0.w.iter().any(|&w| w != 0.0) {
        return Err(FeatlabError::WrongStage {
            expected: Stage::Init.to_string(),
            found: theta0.stage.to_string(),
        });
    }
    if d1.is_empty() {
        return Err(FeatlabError::InvalidSize("empty stage-1 dataset".into()));
    }
    let h = theta0.embed(sigma2, &d1.points)?;
    let r = residuals_at_init(&d1.labels, theta0.init_output());
    let scale = 1.0 / (theta0.m2() as f64 * d1.len() as f64);
    let u = h.transpose() * r * scale;
    Ok(LearnedFeature {
        kind: FeatureKind::Finite { v: theta0.v.clone(), sigma2: sigma2.clone(), u },
        eta_bar: 1.0,
    })
}

/// Infinite-width learned feature `(1/n) sum_i r_i K(x_i, .)`.
pub fn learned_feature_infinite(
    kernel: &KernelModel,
    points: &DMatrix<f64>,
    residuals: &DVector<f64>,
) -> Result<LearnedFeature> {
    let closed = kernel.closed().ok_or_else(|| {
        FeatlabError::Config("the infinite-width feature needs a closed-form kernel".into())
    })?;
    if points.nrows() != residuals.len() || points.nrows() == 0 {
        return Err(FeatlabError::InvalidSize(format!(
            "{} points but {} residuals",
            points.nrows(),
            residuals.len()
        )));
    }
    if points.ncols() != kernel.d {
        return Err(FeatlabError::InvalidDimension(format!(
            "kernel has d = {}, points have {} columns",
            kernel.d,
            points.ncols()
        )));
    }
    let n = points.nrows() as f64;
    let kind = if closed.is_affine() {
        let l0 = closed.lambda_sq[0];
        let l1 = closed.lambda_sq.get(1).copied().unwrap_or(0.0);
        FeatureKind::InfiniteAffine {
            bias: l0 * residuals.sum() / n,
            w: points.transpose() * residuals * (l1 / n),
        }
    } else {
        FeatureKind::Infinite {
            points: points.clone(),
            residuals: residuals.clone(),
            kernel: closed.clone(),
        }
    };
    Ok(LearnedFeature { kind, eta_bar: 1.0 })
}

/// `eta_bar = 1 / max_i |phi(x_i)|` over the calibration points.
pub fn calibrate_eta_bar(feature: &LearnedFeature, points: &DMatrix<f64>) -> Result<f64> {
    if points.nrows() == 0 {
        return Err(FeatlabError::InvalidSize("empty calibration set".into()));
    }
    let phi = feature.eval(points)?;
    eta_bar_from_values(phi.as_slice())
}

pub fn eta_bar_from_values(phi: &[f64]) -> Result<f64> {
    let max = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(max > 0.0) || !max.is_finite() {
        return Err(FeatlabError::DegenerateFeature);
    }
    Ok(1.0 / max)
}
