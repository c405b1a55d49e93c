//! Diagnostics for quadratic features, the two-layer lower-bound
//! certificate and the univariate ReLU random-feature construction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf_inv;

use crate::activation::relu;
use crate::error::{FeatlabError, Result};
use crate::gegenbauer::{chi, ln_geg_dim};
use crate::quadrature::integrate_interval;
use crate::targets::quadratic_form;

/// Estimate of the degree-2 harmonic projection `P_2 f = x^T T2 x`.
#[derive(Debug, Clone)]
pub struct ProjectionEstimate {
    pub t2: DMatrix<f64>,
    pub n_used: usize,
    /// Frobenius-norm standard error from batch means.
    pub standard_error: f64,
    /// Fewer samples than `d^2`.
    pub underdetermined: bool,
}

const BATCHES: usize = 10;

fn traceless_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut s = (m + m.transpose()) * 0.5;
    let tr = s.trace() / d as f64;
    for i in 0..d {
        s[(i, i)] -= tr;
    }
    s
}

/// Symmetrized `(1/(2 chi_2)) Traceless(E_hat[f(x) x x^T])` for points on
/// `S^{d-1}(sqrt d)`.
pub fn estimate_t2(points: &DMatrix<f64>, f_values: &DVector<f64>) -> Result<ProjectionEstimate> {
    let (n, d) = points.shape();
    if f_values.len() != n {
        return Err(FeatlabError::InvalidSize(format!("{n} points, {} values", f_values.len())));
    }
    if n < BATCHES {
        return Err(FeatlabError::InvalidSize(format!("need at least {BATCHES} points, got {n}")));
    }
    let scale = 1.0 / (2.0 * chi(d, 2));
    let batch_est = |lo: usize, hi: usize| {
        let rows = points.rows(lo, hi - lo);
        let mut weighted = rows.clone_owned();
        for i in 0..hi - lo {
            weighted.row_mut(i).scale_mut(f_values[lo + i]);
        }
        let m = weighted.transpose() * rows / (hi - lo) as f64;
        traceless_sym(&m) * scale
    };
    let bounds: Vec<usize> = (0..=BATCHES).map(|b| b * n / BATCHES).collect();
    let batches: Vec<(DMatrix<f64>, usize)> =
        bounds.windows(2).map(|w| (batch_est(w[0], w[1]), w[1] - w[0])).collect();
    let mut t2 = DMatrix::zeros(d, d);
    for (b, len) in &batches {
        t2 += b * (*len as f64 / n as f64);
    }
    let spread: f64 = batches.iter().map(|(b, _)| (b - &t2).norm_squared()).sum();
    let standard_error = (spread / (BATCHES * (BATCHES - 1)) as f64).sqrt();
    Ok(ProjectionEstimate { t2, n_used: n, standard_error, underdetermined: n < d * d })
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// `E_hat[q_i x_i^T B x_i]` where `q_i` is a function of the feature at `x_i`.
pub fn cross_term(points: &DMatrix<f64>, q_values: &DVector<f64>, b: &DMatrix<f64>) -> Result<Estimate> {
    if q_values.len() != points.nrows() {
        return Err(FeatlabError::InvalidSize("one q value per point required".into()));
    }
    if b.nrows() != points.ncols() || b.ncols() != points.ncols() {
        return Err(FeatlabError::InvalidDimension("B must be d x d".into()));
    }
    let qb = quadratic_form(b, points);
    let prods: Vec<f64> = q_values.iter().zip(qb.iter()).map(|(q, v)| q * v).collect();
    let (value, se) = crate::stats::mean_and_se(&prods);
    Ok(Estimate { value, se })
}

/// `Phi^{-1}(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0)
}

/// Empirical Wasserstein-1 distance to N(0,1): mean absolute gap between the
/// sorted samples and the normal quantiles at `(i - 1/2)/n`.
pub fn w1_to_gaussian(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n == 0 {
        return Err(FeatlabError::InvalidSize("no samples".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let nf = n as f64;
    Ok(s.iter()
        .enumerate()
        .map(|(i, v)| (v - normal_quantile((i as f64 + 0.5) / nf)).abs())
        .sum::<f64>()
        / nf)
}

/// A certified lower bound on the error of width-`m`, weight-`B` two-layer
/// networks on the separation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCertificate {
    pub d: usize,
    /// No such network reaches squared population error `<= epsilon`.
    pub epsilon: f64,
    /// Frequency used: the largest qualifying `k < d/8`.
    pub k_star: usize,
    /// Smallest qualifying `k`, the strongest available certificate.
    pub k_min: usize,
    /// Largest width for which the inequality still holds at `k_star`, given `B`.
    pub m_bound: f64,
    /// Largest weight bound for which it still holds at `k_star`, given `m`.
    pub b_bound: f64,
    pub log10_m_bound: f64,
    pub log10_b_bound: f64,
    /// Whether `C_sigma B (1 + B d^{3/2}/2 + B)^alpha <= (B d^{3/2})^{alpha+1}`,
    /// the growth estimate the inequality relies on.
    pub growth_absorbed: bool,
}

/// `ln(2 (m+1) (B d^{3/2})^{alpha+1})`, the log of the approximation budget.
fn ln_budget(d: f64, m: f64, b: f64, alpha: f64) -> f64 {
    std::f64::consts::LN_2 + (m + 1.0).ln() + (alpha + 1.0) * (b.ln() + 1.5 * d.ln())
}

/// Whether frequency `k` certifies: `2(m+1)(B d^{3/2})^{alpha+1} / sqrt(B(d/2, 2k)) < 1/(32k)`.
pub fn lower_bound_holds(d: usize, m: f64, b: f64, alpha: f64, k: usize) -> bool {
    let lhs = ln_budget(d as f64, m, b, alpha) - 0.5 * ln_geg_dim(d as f64 / 2.0, 2 * k);
    lhs < -(32.0 * k as f64).ln()
}

pub fn two_layer_lower_bound(
    d: usize,
    m: f64,
    b: f64,
    alpha_sigma: f64,
    c_sigma: f64,
) -> Result<Option<LowerBoundCertificate>> {
    if d % 2 != 0 || d < 4 {
        return Err(FeatlabError::InvalidDimension(format!("lower bound needs an even d >= 4, got {d}")));
    }
    if !(m >= 1.0) || !(b >= 1.0) || !(alpha_sigma > 0.0) {
        return Err(FeatlabError::InvalidSize(format!(
            "need m, B >= 1 and alpha > 0 (got m={m}, B={b}, alpha={alpha_sigma})"
        )));
    }
    let qualifying: Vec<usize> =
        (1..).take_while(|&k| 8 * k < d).filter(|&k| lower_bound_holds(d, m, b, alpha_sigma, k)).collect();
    let (Some(&k_min), Some(&k_star)) = (qualifying.first(), qualifying.last()) else {
        return Ok(None);
    };
    let df = d as f64;
    // Slack at k_star in log space: ln sqrt(B(d/2,2k)) - ln(64 k).
    let room = 0.5 * ln_geg_dim(df / 2.0, 2 * k_star) - (64.0 * k_star as f64).ln();
    let ln_m_plus_1 = room - (alpha_sigma + 1.0) * (b.ln() + 1.5 * df.ln());
    let m_bound = ln_m_plus_1.exp() - 1.0;
    let ln_bd = (room - (m + 1.0).ln()) / (alpha_sigma + 1.0);
    let ln_b_bound = ln_bd - 1.5 * df.ln();
    let growth = c_sigma.ln() + b.ln() + alpha_sigma * (1.0 + b * df.powf(1.5) / 2.0 + b).ln();
    Ok(Some(LowerBoundCertificate {
        d,
        epsilon: 1.0 / (512.0 * (k_star * k_star) as f64),
        k_star,
        k_min,
        m_bound,
        b_bound: ln_b_bound.exp(),
        log10_m_bound: if ln_m_plus_1 > 30.0 { ln_m_plus_1 / std::f64::consts::LN_10 } else { m_bound.max(0.0).log10() },
        log10_b_bound: ln_b_bound / std::f64::consts::LN_10,
        growth_absorbed: growth <= (alpha_sigma + 1.0) * (b.ln() + 1.5 * df.ln()),
    }))
}

/// Standard normal density.
pub fn gaussian_density(b: f64) -> f64 {
    (-0.5 * b * b).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Weight function `v(a, b)` on `{-1, 1} x [0, 2]` with
/// `E_{a,b}[v(a,b) relu(a x + b)] = f(x)` for `|x| <= 1`, where `a` is a
/// uniform sign and `b ~ N(0,1)`.
///
/// `v = 1[b in [0,1]] (2/mu(b)) f''(-a b) - c1 c 1[b in [1,2]] - c2 c' a 1[b in [1,2]]`
/// with `c = 1/(mu(1) - mu(2))`, `c' = 1/int_1^2 mu`. The second-derivative
/// part alone reproduces `f + c1 + c2 x`; the two correctors remove that
/// affine remainder.
#[derive(Clone)]
pub struct UnivariateConstruction {
    f2: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `f(0) - f(1) - f(-1) + f'(1) - f'(-1)`.
    pub c1: f64,
    /// `f'(0) - f'(1) - f'(-1)`.
    pub c2: f64,
    /// `1/(mu(1) - mu(2))`: weight making `E[c 1[b in [1,2]] relu(ax+b)] = 1`.
    pub c_const: f64,
    /// `1/int_1^2 mu`: weight making `E[c' a 1[b in [1,2]] relu(ax+b)] = x`.
    pub c_lin: f64,
}

impl std::fmt::Debug for UnivariateConstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnivariateConstruction")
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("c_const", &self.c_const)
            .field("c_lin", &self.c_lin)
            .finish()
    }
}

pub fn univariate_construct(
    f: impl Fn(f64) -> f64,
    f1: impl Fn(f64) -> f64,
    f2: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Result<UnivariateConstruction> {
    let c1 = f(0.0) - f(1.0) - f(-1.0) + f1(1.0) - f1(-1.0);
    let c2 = f1(0.0) - f1(1.0) - f1(-1.0);
    let mass = integrate_interval(1.0, 2.0, 1e-14, gaussian_density)?;
    Ok(UnivariateConstruction {
        f2: Arc::new(f2),
        c1,
        c2,
        c_const: 1.0 / (gaussian_density(1.0) - gaussian_density(2.0)),
        c_lin: 1.0 / mass,
    })
}

impl UnivariateConstruction {
    /// `v(a, b)`; zero outside `{-1, 1} x [0, 2]`.
    pub fn v(&self, a: f64, b: f64) -> f64 {
        assert!(a == 1.0 || a == -1.0, "a must be a sign");
        if (0.0..=1.0).contains(&b) {
            2.0 / gaussian_density(b) * (self.f2)(-a * b)
        } else if b > 1.0 && b <= 2.0 {
            -self.c1 * self.c_const - self.c2 * self.c_lin * a
        } else {
            0.0
        }
    }

    /// `E_{a,b}[v(a,b) relu(a x + b)]` by Gauss–Legendre over `b`, split at
    /// `b = 1` and at the kink `b = -a x`.
    pub fn reconstruct(&self, x: f64) -> Result<f64> {
        let mut total = 0.0;
        for a in [-1.0, 1.0] {
            let integrand = |b: f64| self.v(a, b) * relu(a * x + b) * gaussian_density(b);
            let kink = -a * x;
            let mut cuts = vec![0.0, 1.0, 2.0];
            if kink > 0.0 && kink < 1.0 {
                cuts.push(kink);
            }
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                // The piecewise v is evaluated strictly inside each piece.
                let (lo, hi) = (w[0], w[1]);
                total += 0.5 * integrate_interval(lo, hi, 1e-13, |b| {
                    let b = b.clamp(lo + 1e-300, hi);
                    integrand(b)
                })?;
            }
        }
        Ok(total)
    }

    /// `max |v|` over a grid of `b` values in `[0, 2]` and both signs.
    pub fn sup_abs_v(&self, grid: usize) -> f64 {
        let mut best = 0.0f64;
        for a in [-1.0, 1.0] {
            for i in 0..=grid {
                let b = 2.0 * i as f64 / grid as f64;
                best = best.max(self.v(a, b).abs());
            }
        }
        best
    }
}
