//! Target functions `f*` and their intermediate features `h*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::{relu, Link};
use crate::error::{FeatlabError, Result};
use crate::quadrature::{until_converged, GaussRule};
use crate::sampling::{
    random_orthogonal, random_symmetric, random_unit_vector, sample_sphere, MatrixKind, Purpose,
    Seed,
};

/// Default Monte-Carlo sample count for centering constants.
pub const DEFAULT_CENTERING_SAMPLES: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    SingleIndex,
    Quadratic,
    Separation,
}

/// Scale convention for quadratic-feature matrices (both are traceless).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `||A||_F^2 = (d+2)/(2d)`, so that `E[(x^T A x)^2] = 1` on the sphere.
    #[default]
    UnitSecondMoment,
    /// `||A||_F = 1`.
    UnitFrobenius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum ConstantProvenance {
    /// Monte-Carlo mean over `n_mc` sphere samples drawn from `seed`.
    Estimated { n_mc: usize, seed: Seed },
    /// Exact or caller-provided value.
    Supplied,
}

#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub d: usize,
    pub w_star: Option<DVector<f64>>,
    pub link: Link,
    pub a: Option<DMatrix<f64>>,
    pub u: Option<DMatrix<f64>>,
    /// Constant subtracted from `link(h*(x))`.
    pub c0: f64,
    pub c0_provenance: ConstantProvenance,
}

/// Rescale a symmetric matrix to be traceless with the chosen norm.
pub fn normalize_quadratic(a_raw: &DMatrix<f64>, normalization: Normalization) -> Result<DMatrix<f64>> {
    let d = a_raw.nrows();
    if d != a_raw.ncols() || d == 0 {
        return Err(FeatlabError::InvalidDimension("expected a square matrix".into()));
    }
    let sym = (a_raw + a_raw.transpose()) * 0.5;
    let tr = sym.trace() / d as f64;
    let mut t = sym;
    for i in 0..d {
        t[(i, i)] -= tr;
    }
    let fro = t.norm();
    if !(fro > 1e-12 * a_raw.norm().max(f64::MIN_POSITIVE)) {
        return Err(FeatlabError::DegenerateTarget(
            "matrix is a multiple of the identity".into(),
        ));
    }
    let target = match normalization {
        Normalization::UnitSecondMoment => ((d as f64 + 2.0) / (2.0 * d as f64)).sqrt(),
        Normalization::UnitFrobenius => 1.0,
    };
    Ok(t * (target / fro))
}

/// `x^T A x` for every row of `points`.
pub fn quadratic_form(a: &DMatrix<f64>, points: &DMatrix<f64>) -> DVector<f64> {
    let xa = points * a;
    DVector::from_fn(points.nrows(), |i, _| xa.row(i).dot(&points.row(i)))
}

/// Monte-Carlo mean of `link(x^T A x)` on the sphere, with its provenance.
pub fn centering_constant(
    a: &DMatrix<f64>,
    link: &Link,
    n_mc: usize,
    seed: Seed,
) -> Result<(f64, ConstantProvenance)> {
    let d = a.nrows();
    let mut sum = 0.0;
    let chunk = 1 << 14;
    let mut done = 0;
    let mut index = 0;
    while done < n_mc {
        let take = chunk.min(n_mc - done);
        let pts = sample_sphere(d, (d as f64).sqrt(), take, seed.derive(Purpose::Centering, index))?;
        sum += quadratic_form(a, &pts).iter().map(|&z| link.eval(z)).sum::<f64>();
        done += take;
        index += 1;
    }
    Ok((sum / n_mc as f64, ConstantProvenance::Estimated { n_mc, seed }))
}

impl TargetSpec {
    /// `g*(w* . x)` with `w*` uniform on the unit sphere.
    pub fn single_index(d: usize, link: Link, seed: Seed) -> Result<TargetSpec> {
        let w = random_unit_vector(d, seed.derive(Purpose::Target, 0))?;
        Ok(TargetSpec::single_index_with(w, link))
    }

    pub fn single_index_with(w_star: DVector<f64>, link: Link) -> TargetSpec {
        let w = w_star.normalize();
        TargetSpec {
            kind: TargetKind::SingleIndex,
            d: w.len(),
            w_star: Some(w),
            link,
            a: None,
            u: None,
            c0: 0.0,
            c0_provenance: ConstantProvenance::Supplied,
        }
    }

    /// `g*(x^T A x) - c0` with a random normalized `A`. With `center` the
    /// constant is the Monte-Carlo mean over `n_mc` points; otherwise zero.
    pub fn quadratic(
        d: usize,
        kind: MatrixKind,
        link: Link,
        normalization: Normalization,
        center: bool,
        n_mc: usize,
        seed: Seed,
    ) -> Result<TargetSpec> {
        let raw = random_symmetric(d, kind, seed.derive(Purpose::Target, 0))?;
        let a = normalize_quadratic(&raw, normalization)?;
        TargetSpec::quadratic_with(a, link, center, n_mc, seed)
    }

    pub fn quadratic_with(
        a: DMatrix<f64>,
        link: Link,
        center: bool,
        n_mc: usize,
        seed: Seed,
    ) -> Result<TargetSpec> {
        let (c0, c0_provenance) = if !center {
            (0.0, ConstantProvenance::Supplied)
        } else if matches!(link, Link::Identity) {
            // E[x^T A x] = tr A.
            (a.trace(), ConstantProvenance::Supplied)
        } else {
            centering_constant(&a, &link, n_mc, seed.derive(Purpose::Centering, 1 << 40))?
        };
        Ok(TargetSpec {
            kind: TargetKind::Quadratic,
            d: a.nrows(),
            w_star: None,
            link,
            a: Some(a),
            u: None,
            c0,
            c0_provenance,
        })
    }

    /// `ReLU(x^T A x) - c0` with `A = d^{-1/2} U [[0, I], [I, 0]] U^T`.
    /// `rotate = false` uses `U = I`.
    pub fn separation(d: usize, rotate: bool, n_mc: usize, seed: Seed) -> Result<TargetSpec> {
        if d % 2 != 0 || d < 4 {
            return Err(FeatlabError::InvalidDimension(format!(
                "separation target needs an even d >= 4, got {d}"
            )));
        }
        let h = d / 2;
        let s = 1.0 / (d as f64).sqrt();
        let mut block = DMatrix::zeros(d, d);
        for i in 0..h {
            block[(i, h + i)] = s;
            block[(h + i, i)] = s;
        }
        let u = if rotate {
            random_orthogonal(d, seed.derive(Purpose::Target, 0))?
        } else {
            DMatrix::identity(d, d)
        };
        let a = &u * block * u.transpose();
        let (c0, c0_provenance) =
            centering_constant(&a, &Link::Relu, n_mc, seed.derive(Purpose::Centering, 1 << 40))?;
        Ok(TargetSpec {
            kind: TargetKind::Separation,
            d,
            w_star: None,
            link: Link::Relu,
            a: Some(a),
            u: Some(u),
            c0,
            c0_provenance,
        })
    }

    fn check_points(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.d {
            return Err(FeatlabError::InvalidDimension(format!(
                "target has d = {}, points have {} columns",
                self.d,
                points.ncols()
            )));
        }
        Ok(())
    }

    /// `h*(x)`: `w* . x` or `x^T A x`.
    pub fn eval_feature(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_points(points)?;
        match self.kind {
            TargetKind::SingleIndex => Ok(points * self.w_star.as_ref().expect("single-index w*")),
            TargetKind::Quadratic | TargetKind::Separation => {
                Ok(quadratic_form(self.a.as_ref().expect("quadratic A"), points))
            }
        }
    }

    /// `f*(x) = g*(h*(x)) - c0`.
    pub fn eval_target(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        let h = self.eval_feature(points)?;
        Ok(h.map(|z| self.link.eval(z) - self.c0))
    }

    /// `kappa = ||A||_op sqrt(d)` for matrix targets.
    pub fn kappa(&self) -> Option<f64> {
        self.a.as_ref().map(|a| operator_norm(a) * (self.d as f64).sqrt())
    }
}

/// Spectral norm of a symmetric matrix via its eigenvalues.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().amax()
}

/// Spectral norm of a symmetric matrix by power iteration on `A^2`.
pub fn operator_norm_power(a: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let d = a.nrows();
    let a2 = a * a;
    // A fixed, generic start vector keeps this deterministic.
    let mut v = DVector::from_fn(d, |i, _| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    v.normalize_mut();
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = &a2 * &v;
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        if (next - est).abs() <= tol * next {
            est = next;
            break;
        }
        est = next;
    }
    est.sqrt()
}

/// `c1 = E_{z ~ N(0,1)}[g'(z)]`.
pub fn link_derivative_mean(link: &Link) -> Result<f64> {
    match link {
        Link::Identity => Ok(1.0),
        Link::Cube => Ok(3.0),
        // Both have derivative P(z > 0) up to an odd correction on [-eps, eps].
        Link::Relu | Link::SmoothedRelu { .. } => Ok(0.5),
        Link::Sigmoid | Link::Custom { .. } => gaussian_expectation(|z| link.derivative(z), 1e-12),
    }
}

/// `E_{z ~ N(0,1)}[g(z)]` by Gauss–Hermite with node doubling.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(g: F, rel_tol: f64) -> Result<f64> {
    until_converged(16, 1024, rel_tol, 1e-12, |n| Ok(GaussRule::normal(n)?.apply(&g)))
}

/// `E[ReLU(x^T A x)]` for the separation matrix evaluated on fresh samples;
/// exposed for diagnostics.
pub fn relu_quadratic_mean(a: &DMatrix<f64>, points: &DMatrix<f64>) -> f64 {
    let q = quadratic_form(a, points);
    q.iter().map(|&z| relu(z)).sum::<f64>() / q.len() as f64
}
