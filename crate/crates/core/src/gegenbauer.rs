//! Gegenbauer polynomials for the sphere marginal and the spectral constants
//! built on them.
//!
//! `G_k^{(d)}` is normalized so that `G_k(1) = 1` and is orthogonal under
//! `mu_d`, the law of `x_1 / sqrt(d)` for `x` uniform on `S^{d-1}(sqrt d)`:
//! `mu_d(dt) = Z_d (1 - t^2)^{(d-3)/2} dt` on `[-1, 1]`.

use statrs::function::gamma::ln_gamma;

use crate::activation::Activation;
use crate::error::{FeatlabError, Result};
use crate::quadrature::{until_converged, GaussRule};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Slack allowed on `|t| <= 1` before a domain error is raised.
pub const DOMAIN_SLACK: f64 = 1e-12;

/// Normalizing constant `Z_d = Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2))`.
pub fn z_d(d: usize) -> f64 {
    ln_z_d(d as f64).exp()
}

fn ln_z_d(d: f64) -> f64 {
    ln_gamma(d / 2.0) - 0.5 * LN_PI - ln_gamma((d - 1.0) / 2.0)
}

/// `chi_k = prod_{j<k} d / (d + 2j)`.
pub fn chi(d: usize, k: usize) -> f64 {
    let d = d as f64;
    (0..k).map(|j| d / (d + 2.0 * j as f64)).product()
}

/// Exact `B(d, k)`, the dimension of degree-`k` spherical harmonics in `R^d`.
pub fn geg_dim(d: usize, k: usize) -> Result<u128> {
    if d < 2 {
        return Err(FeatlabError::InvalidDimension(format!("B(d, k) needs d >= 2, got {d}")));
    }
    if k == 0 {
        return Ok(1);
    }
    let overflow = || FeatlabError::Numerical(format!("B({d}, {k}) overflows u128"));
    // C(k + d - 3, k - 1), built so each partial product is itself a binomial.
    let top = (k + d - 3) as u128;
    let mut c: u128 = 1;
    for i in 0..(k - 1) as u128 {
        c = c.checked_mul(top - i).ok_or_else(overflow)? / (i + 1);
    }
    let num = c.checked_mul((2 * k + d - 2) as u128).ok_or_else(overflow)?;
    Ok(num / k as u128)
}

/// `ln B(d, k)` for real `d >= 2`, valid far beyond the exact range.
pub fn ln_geg_dim(d: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k as f64;
    let log_binom = if d == 2.0 {
        0.0
    } else {
        ln_gamma(k + d - 2.0) - ln_gamma(k) - ln_gamma(d - 1.0)
    };
    (2.0 * k + d - 2.0).ln() - k.ln() + log_binom
}

pub fn geg_dim_f64(d: usize, k: usize) -> f64 {
    match geg_dim(d, k) {
        Ok(v) if v < (1u128 << 100) => v as f64,
        _ => ln_geg_dim(d as f64, k).exp(),
    }
}

/// `ln (2k - 3)!!` for `k >= 1`, with `(-1)!! = 1`.
fn ln_double_factorial_2k_minus_3(k: usize) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let k = k as f64;
    ln_gamma(2.0 * k - 1.0) - (k - 1.0) * std::f64::consts::LN_2 - ln_gamma(k)
}

/// `ln prod_{j=0}^{k} (d + 2j - 1)`.
fn ln_odd_shift_product(d: f64, k: usize) -> f64 {
    let h = (d - 1.0) / 2.0;
    (k as f64 + 1.0) * std::f64::consts::LN_2 + ln_gamma(k as f64 + 1.0 + h) - ln_gamma(h)
}

/// Closed-form `G_{2k}(0) = (-1)^k (2k-1)!! / prod_{j<k} (d + 2j - 1)`.
pub fn g2k_at_zero(d: usize, k: usize) -> f64 {
    let d = d as f64;
    let mut v = 1.0;
    for j in 0..k {
        v *= -((2 * j + 1) as f64) / (d + 2.0 * j as f64 - 1.0);
    }
    v
}

/// Gegenbauer polynomials of a fixed dimension up to a truncation order.
#[derive(Debug, Clone)]
pub struct GegenbauerBasis {
    pub d: usize,
    pub k_max: usize,
    pub norm_const: f64,
    /// `B(d, k)` for `k <= k_max` (exact integers while they fit in f64).
    pub dims: Vec<f64>,
    pub chi: Vec<f64>,
    // G_k = p_k t G_{k-1} - q_k G_{k-2}
    p: Vec<f64>,
    q: Vec<f64>,
}

impl GegenbauerBasis {
    pub fn new(d: usize, k_max: usize) -> Result<Self> {
        if d < 2 {
            return Err(FeatlabError::InvalidDimension(format!(
                "Gegenbauer basis needs d >= 2, got {d}"
            )));
        }
        let df = d as f64;
        let mut p = vec![0.0; k_max + 1];
        let mut q = vec![0.0; k_max + 1];
        for k in 2..=k_max {
            let kf = k as f64;
            p[k] = (df + 2.0 * kf - 4.0) / (df + kf - 3.0);
            q[k] = (kf - 1.0) / (df + kf - 3.0);
        }
        Ok(GegenbauerBasis {
            d,
            k_max,
            norm_const: z_d(d),
            dims: (0..=k_max)
                .map(|k| if k <= 256 { geg_dim_f64(d, k) } else { ln_geg_dim(df, k).exp() })
                .collect(),
            chi: (0..=k_max).map(|k| chi(d, k)).collect(),
            p,
            q,
        })
    }

    fn check_t(t: f64) -> Result<f64> {
        if !(t.abs() <= 1.0 + DOMAIN_SLACK) {
            return Err(FeatlabError::Domain(t));
        }
        Ok(t.clamp(-1.0, 1.0))
    }

    /// `G_k^{(d)}(t)` by the three-term recurrence.
    pub fn eval(&self, k: usize, t: f64) -> Result<f64> {
        if k > self.k_max {
            return Err(FeatlabError::DegreeOutOfRange { k, k_max: self.k_max });
        }
        let t = Self::check_t(t)?;
        Ok(self.eval_unchecked(k, t))
    }

    fn eval_unchecked(&self, k: usize, t: f64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let (mut g0, mut g1) = (1.0, t);
        for j in 2..=k {
            let g2 = self.p[j] * t * g1 - self.q[j] * g0;
            g0 = g1;
            g1 = g2;
        }
        g1
    }

    /// Fill `out[k] = G_k(t)` for `k < out.len()`; `t` must lie in `[-1, 1]`.
    pub fn eval_all(&self, t: f64, out: &mut [f64]) {
        assert!(out.len() <= self.k_max + 1);
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        if out.len() > 1 {
            out[1] = t;
        }
        for k in 2..out.len() {
            out[k] = self.p[k] * t * out[k - 1] - self.q[k] * out[k - 2];
        }
    }

    /// `sum_k coeffs[k] G_k(t)` without storing the polynomials.
    pub fn series(&self, coeffs: &[f64], t: f64) -> f64 {
        assert!(coeffs.len() <= self.k_max + 1);
        let mut acc = 0.0;
        let (mut g0, mut g1) = (1.0, t);
        for (k, &c) in coeffs.iter().enumerate() {
            let g = match k {
                0 => 1.0,
                1 => t,
                _ => {
                    let g2 = self.p[k] * t * g1 - self.q[k] * g0;
                    g0 = g1;
                    g1 = g2;
                    g2
                }
            };
            acc += c * g;
        }
        acc
    }

    pub fn dim(&self, k: usize) -> f64 {
        self.dims[k]
    }
}

/// `E_{t ~ mu_d}[g(t)]` with a fixed node count.
///
/// The interval is split at 0 and each half mapped onto a Gauss–Jacobi rule
/// for `(1 - t)^alpha`, so a kink at the origin costs nothing.
pub fn mu_expectation_fixed<F: FnMut(f64) -> f64>(d: usize, nodes: usize, mut g: F) -> Result<f64> {
    let alpha = (d as f64 - 3.0) / 2.0;
    let rule = GaussRule::jacobi(nodes, alpha, 0.0)?;
    let scale = (ln_z_d(d as f64) - (alpha + 1.0) * std::f64::consts::LN_2).exp();
    let mut acc = 0.0;
    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
        let t = 0.5 * (1.0 + s);
        acc += w * (1.0 + t).powf(alpha) * (g(t) + g(-t));
    }
    Ok(scale * acc)
}

/// `E_{t ~ mu_d}[g(t)]`, doubling nodes until the estimate changes by less
/// than `rel_tol` (relative to `max(|value|, abs_floor)`).
pub fn mu_expectation<F: FnMut(f64) -> f64>(
    d: usize,
    rel_tol: f64,
    abs_floor: f64,
    mut g: F,
) -> Result<f64> {
    until_converged(16, 1 << 14, rel_tol, abs_floor, |n| mu_expectation_fixed(d, n, &mut g))
}

/// `A_k^{(d)} = <ReLU, G_k>_{mu_d}` for even `k` in closed form.
pub fn relu_even_inner_product(d: usize, k: usize) -> f64 {
    assert!(k % 2 == 0, "closed form covers even degrees only");
    let df = d as f64;
    if k == 0 {
        return z_d(d) / (df - 1.0);
    }
    let h = k / 2;
    let sign = if h % 2 == 1 { 1.0 } else { -1.0 };
    let ln = ln_z_d(df) + ln_double_factorial_2k_minus_3(h) - ln_odd_shift_product(df, h);
    sign * ln.exp()
}

/// `<ReLU, G_k>_{mu_d}` for every degree: closed form for even `k`,
/// `1/(2d)` for `k = 1`, zero for odd `k >= 3`.
pub fn relu_inner_product(d: usize, k: usize) -> f64 {
    if k % 2 == 0 {
        relu_even_inner_product(d, k)
    } else if k == 1 {
        0.5 / d as f64
    } else {
        0.0
    }
}

/// `lambda_k(relu)^2 B(d, k) = d B(d,k) <ReLU, G_k>^2`, evaluated in log space.
pub fn relu_kernel_weight(d: usize, k: usize) -> f64 {
    let df = d as f64;
    match k {
        0 => {
            let a0 = relu_even_inner_product(d, 0);
            df * a0 * a0
        }
        1 => 0.25,
        _ if k % 2 == 1 => 0.0,
        _ => {
            let h = k / 2;
            let ln_a = ln_z_d(df) + ln_double_factorial_2k_minus_3(h) - ln_odd_shift_product(df, h);
            (df.ln() + ln_geg_dim(df, k) + 2.0 * ln_a).exp()
        }
    }
}

/// ReLU expanded as `sum_k c_k G_k(t)` on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct ReluCoefficients {
    pub d: usize,
    /// Closed-form `B(d,k) A_k` for even `k`; `None` for odd `k`.
    pub closed: Vec<Option<f64>>,
    /// `B(d,k) <ReLU, G_k>` by quadrature. These are the values used downstream.
    pub quadrature: Vec<f64>,
    /// The closed-form G_1 coefficient `1/(2d)` and the quadrature value
    /// `1/2`; they disagree for every `d >= 2`.
    pub g1_mismatch: Option<(f64, f64)>,
}

impl ReluCoefficients {
    pub fn coefficients(&self) -> &[f64] {
        &self.quadrature
    }
}

/// Tolerance for closed form vs quadrature on even ReLU coefficients.
pub const RELU_COEFF_REL_TOL: f64 = 1e-9;

pub fn relu_geg_coefficients(basis: &GegenbauerBasis, k_max: usize) -> Result<ReluCoefficients> {
    if k_max < 1 {
        return Err(FeatlabError::InvalidSize("k_max must be at least 1".into()));
    }
    if k_max > basis.k_max {
        return Err(FeatlabError::DegreeOutOfRange { k: k_max, k_max: basis.k_max });
    }
    let d = basis.d;
    let mut closed = Vec::with_capacity(k_max + 1);
    let mut quadrature = Vec::with_capacity(k_max + 1);
    let mut gk = vec![0.0; k_max + 1];
    for k in 0..=k_max {
        let b = basis.dim(k);
        let quad = mu_expectation_half(d, k_max, |t, g: &mut Vec<f64>| {
            basis.eval_all(t, g);
            t * g[k]
        }, &mut gk)?;
        let q = b * quad;
        let c = if k % 2 == 0 { Some(b * relu_even_inner_product(d, k)) } else { None };
        if let Some(c) = c {
            let scale = c.abs().max(1e-13);
            if (c - q).abs() > RELU_COEFF_REL_TOL * scale {
                return Err(FeatlabError::Consistency(format!(
                    "ReLU coefficient k={k}, d={d}: closed form {c:e} vs quadrature {q:e}"
                )));
            }
        }
        closed.push(c);
        quadrature.push(q);
    }
    let stated_g1 = 0.5 / d as f64;
    let g1_mismatch = if (stated_g1 - quadrature[1]).abs() > 1e-9 {
        Some((stated_g1, quadrature[1]))
    } else {
        None
    };
    Ok(ReluCoefficients { d, closed, quadrature, g1_mismatch })
}

/// `int_0^1 g(t) mu_d(dt)` for an integrand needing scratch space, with node
/// doubling. The integrand is a polynomial of degree at most `k_max + 1`
/// times the smooth factor `(1 + t)^alpha`.
fn mu_expectation_half<F>(d: usize, k_max: usize, mut g: F, scratch: &mut Vec<f64>) -> Result<f64>
where
    F: FnMut(f64, &mut Vec<f64>) -> f64,
{
    let alpha = (d as f64 - 3.0) / 2.0;
    let scale = (ln_z_d(d as f64) - (alpha + 1.0) * std::f64::consts::LN_2).exp();
    until_converged((k_max + 8).max(16), 1 << 14, 1e-13, 1e-2, |n| {
        let rule = GaussRule::jacobi(n, alpha, 0.0)?;
        let mut acc = 0.0;
        for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
            let t = 0.5 * (1.0 + s);
            acc += w * (1.0 + t).powf(alpha) * g(t, scratch);
        }
        Ok(scale * acc)
    })
}

/// `||P_{>=2m} ReLU||^2_{L^2(mu_d)} = sum_{k>=m} B(d,2k) A_{2k}^2`, summed
/// until a term drops below `1e-16` of the running total.
pub fn relu_tail_norm(basis: &GegenbauerBasis, m: usize) -> Result<f64> {
    if m < 1 {
        return Err(FeatlabError::InvalidSize("tail index m must be at least 1".into()));
    }
    if 2 * m > basis.k_max {
        return Err(FeatlabError::DegreeOutOfRange { k: 2 * m, k_max: basis.k_max });
    }
    Ok(relu_tail_from(basis.d as f64, m))
}

fn relu_tail_from(d: f64, m: usize) -> f64 {
    let ln_z2 = 2.0 * ln_z_d(d);
    let mut sum = 0.0;
    let mut k = m;
    loop {
        let ln_term = ln_z2 + 2.0 * ln_double_factorial_2k_minus_3(k) + ln_geg_dim(d, 2 * k)
            - 2.0 * ln_odd_shift_product(d, k);
        let term = ln_term.exp();
        sum += term;
        if term < 1e-16 * sum || k > m + 50_000_000 {
            return sum;
        }
        k += 1;
    }
}

/// `lambda_k(sigma) = E_{t ~ mu_d}[sigma(sqrt(d) t) G_k(t)]`.
pub fn lambda_k(d: usize, sigma: &Activation, k: usize) -> Result<f64> {
    let df = d as f64;
    match sigma {
        Activation::Identity => Ok(if k == 1 { 1.0 / df.sqrt() } else { 0.0 }),
        // Positive homogeneity: relu(sqrt(d) t) = sqrt(d) relu(t).
        Activation::Relu => Ok(df.sqrt() * relu_inner_product(d, k)),
        Activation::Custom { f, .. } => {
            let basis = GegenbauerBasis::new(d, k)?;
            let sd = df.sqrt();
            let norm = mu_expectation(d, 1e-10, 1e-300, |t| f(sd * t).powi(2))?.sqrt();
            let mut g = vec![0.0; k + 1];
            until_converged((2 * k + 16).max(32), 1 << 14, 1e-10, 1e-6 * norm.max(1e-300), |n| {
                mu_expectation_fixed(d, n, |t| {
                    basis.eval_all(t, &mut g);
                    f(sd * t) * g[k]
                })
            })
        }
    }
}

/// `E_{t ~ mu_d}[sigma(sqrt(d) t)^2] = sum_k lambda_k^2 B(d, k)`.
pub fn activation_second_moment(d: usize, sigma: &Activation) -> Result<f64> {
    match sigma {
        Activation::Identity => Ok(1.0),
        Activation::Relu => Ok(0.5),
        Activation::Custom { f, .. } => {
            let sd = (d as f64).sqrt();
            mu_expectation(d, 1e-12, 1e-300, |t| f(sd * t).powi(2))
        }
    }
}
