//! Gaussian quadrature rules via Golub–Welsch.
//!
//! Rules are built from the three-term recurrence of the monic orthogonal
//! polynomials: nodes are the eigenvalues of the Jacobi matrix and weights
//! are `mu0 * v0^2` with `v0` the first eigenvector component. Built rules
//! are cached process-wide since the spectral code rebuilds the same few
//! rules many times.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::gamma::ln_gamma;

use crate::error::{FeatlabError, Result};

#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of `w_i f(x_i)`.
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    fn golub_welsch(diag: &[f64], off: &[f64], ln_mu0: f64) -> Result<GaussRule> {
        let n = diag.len();
        let mut d = diag.to_vec();
        let mut e = off.to_vec();
        e.push(0.0);
        // Only the first component of each eigenvector is needed.
        let mut z = vec![0.0; n];
        z[0] = 1.0;
        tridiagonal_ql(&mut d, &mut e, &mut z)?;
        let mu0 = ln_mu0.exp();
        let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z).map(|(x, v)| (x, mu0 * v * v)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(GaussRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// `n`-point rule for `(1-x)^alpha (1+x)^beta` on `[-1, 1]`.
    pub fn jacobi(n: usize, alpha: f64, beta: f64) -> Result<Arc<GaussRule>> {
        if n == 0 || !(alpha > -1.0) || !(beta > -1.0) {
            return Err(FeatlabError::InvalidSize(format!(
                "Gauss-Jacobi needs n >= 1, alpha, beta > -1 (got {n}, {alpha}, {beta})"
            )));
        }
        cached(Key::Jacobi(n, alpha.to_bits(), beta.to_bits()), || {
            let ab = alpha + beta;
            let diag: Vec<f64> = (0..n)
                .map(|k| {
                    if k == 0 {
                        (beta - alpha) / (ab + 2.0)
                    } else {
                        let s = 2.0 * k as f64 + ab;
                        (beta * beta - alpha * alpha) / (s * (s + 2.0))
                    }
                })
                .collect();
            let off: Vec<f64> = (1..n)
                .map(|k| {
                    let k = k as f64;
                    let s = 2.0 * k + ab;
                    (4.0 * k * (k + alpha) * (k + beta) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0)))
                        .sqrt()
                })
                .collect();
            let ln_mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0)
                + ln_gamma(beta + 1.0)
                - ln_gamma(ab + 2.0);
            GaussRule::golub_welsch(&diag, &off, ln_mu0)
        })
    }

    pub fn legendre(n: usize) -> Result<Arc<GaussRule>> {
        GaussRule::jacobi(n, 0.0, 0.0)
    }

    /// `n`-point rule for expectations under N(0, 1): weights sum to one.
    pub fn normal(n: usize) -> Result<Arc<GaussRule>> {
        if n == 0 {
            return Err(FeatlabError::InvalidSize("Gauss-Hermite needs n >= 1".into()));
        }
        cached(Key::Normal(n), || {
            let diag = vec![0.0; n];
            let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
            GaussRule::golub_welsch(&diag, &off, 0.0)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Jacobi(usize, u64, u64),
    Normal(usize),
}

/// Implicit QL on a symmetric tridiagonal matrix (diagonal `d`, subdiagonal
/// `e` with a trailing zero). On return `d` holds the eigenvalues and `z`
/// the rotated first row.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(FeatlabError::Numerical("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let fz = z[i + 1];
                z[i + 1] = s * z[i] + c * fz;
                z[i] = c * z[i] - s * fz;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn cached(key: Key, build: impl FnOnce() -> Result<GaussRule>) -> Result<Arc<GaussRule>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&key) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(build()?);
    if rule.nodes.iter().chain(&rule.weights).any(|v| !v.is_finite()) {
        return Err(FeatlabError::Numerical(format!("non-finite quadrature rule for {key:?}")));
    }
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(key, rule.clone());
    Ok(rule)
}

/// Evaluate `estimate(n)` for `n = start, 2 start, ...` until two consecutive
/// values agree to `rel_tol` (relative to `max(|value|, abs_floor)`).
pub fn until_converged<F>(
    start: usize,
    max_n: usize,
    rel_tol: f64,
    abs_floor: f64,
    mut estimate: F,
) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut n = start.max(1);
    let mut prev = estimate(n)?;
    let mut coarse = prev;
    while n * 2 <= max_n {
        n *= 2;
        let next = estimate(n)?;
        if (next - prev).abs() <= rel_tol * next.abs().max(abs_floor) {
            return Ok(next);
        }
        coarse = prev;
        prev = next;
    }
    Err(FeatlabError::QuadratureNonConvergence { coarse, fine: prev })
}

/// Integral of `f` over `[a, b]` with Gauss–Legendre, doubling nodes until
/// converged.
pub fn integrate_interval<F: Fn(f64) -> f64>(a: f64, b: f64, rel_tol: f64, f: F) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    until_converged(8, 1024, rel_tol, 1e-300, |n| {
        let rule = GaussRule::legendre(n)?;
        Ok(half * rule.apply(|s| f(mid + half * s)))
    })
}
