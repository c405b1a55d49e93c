//! Seeded generation of covariates, initializations and target matrices.
//!
//! Every random object is drawn from a [`Seed`], a `(value, stream_id)`
//! pair mapped onto an independent ChaCha8 stream. The same pair always
//! produces the same bytes regardless of which thread draws it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FeatlabError, Result};
use crate::network::NetworkState;

/// A reproducible randomness source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub value: u64,
    pub stream_id: u64,
}

/// Sub-stream tags. A stream id is `tag << 48 | index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Target = 1,
    TrainFeature = 2,
    TrainReadout = 3,
    Holdout = 4,
    Test = 5,
    InitOuter = 6,
    InitInner = 7,
    Centering = 8,
    Diagnostic = 9,
}

impl Seed {
    pub fn new(value: u64) -> Self {
        Seed { value, stream_id: 0 }
    }

    pub fn with_stream(value: u64, stream_id: u64) -> Self {
        Seed { value, stream_id }
    }

    /// Derive the sub-stream for `purpose`, distinguished further by `index`.
    pub fn derive(&self, purpose: Purpose, index: u64) -> Seed {
        debug_assert!(index < (1 << 48));
        Seed {
            value: self.value,
            stream_id: self
                .stream_id
                .wrapping_add(((purpose as u64) << 48) | (index & ((1 << 48) - 1))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.value);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform on the sphere of radius sqrt(d).
    SphereSqrtD,
    /// Standard Gaussian on R^d.
    StdGaussian,
}

/// Points with their exact target labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n x d, one point per row.
    pub points: DMatrix<f64>,
    pub labels: DVector<f64>,
    pub distribution: Distribution,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

fn gaussian_rows(d: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            out[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

/// `n` i.i.d. points uniform on the sphere of the given radius in R^d,
/// obtained by normalizing standard Gaussian vectors.
pub fn sample_sphere(d: usize, radius: f64, n: usize, seed: Seed) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(FeatlabError::InvalidDimension(format!(
            "sphere sampling needs d >= 2, got {d}"
        )));
    }
    if !(radius > 0.0) {
        return Err(FeatlabError::InvalidSize(format!("radius must be positive, got {radius}")));
    }
    let mut rng = seed.rng();
    let mut out = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        // A zero vector has probability zero; redraw rather than divide by it.
        loop {
            let mut sq = 0.0;
            for r in row.iter_mut() {
                *r = rng.sample::<f64, _>(StandardNormal);
                sq += *r * *r;
            }
            if sq > 0.0 {
                let scale = radius / sq.sqrt();
                for (j, r) in row.iter().enumerate() {
                    out[(i, j)] = r * scale;
                }
                break;
            }
        }
    }
    Ok(out)
}

pub fn sample_gaussian(d: usize, n: usize, seed: Seed) -> Result<DMatrix<f64>> {
    if d < 1 {
        return Err(FeatlabError::InvalidDimension("d must be positive".into()));
    }
    Ok(gaussian_rows(d, n, &mut seed.rng()))
}

pub fn sample_points(
    distribution: Distribution,
    d: usize,
    n: usize,
    seed: Seed,
) -> Result<DMatrix<f64>> {
    match distribution {
        Distribution::SphereSqrtD => sample_sphere(d, (d as f64).sqrt(), n, seed),
        Distribution::StdGaussian => sample_gaussian(d, n, seed),
    }
}

/// Outer weights `a` (uniform signs) and biases `b` (standard normal).
pub fn sample_outer(m1: usize, seed: Seed) -> (DVector<f64>, DVector<f64>) {
    let mut rng = seed.rng();
    let a = DVector::from_fn(m1, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
    let b = DVector::from_fn(m1, |_, _| rng.sample::<f64, _>(StandardNormal));
    (a, b)
}

/// The initialization of the layer-wise algorithm: `a` uniform signs,
/// `W = 0`, `b` standard normal and rows of `V` uniform on the unit sphere.
pub fn sample_init(d: usize, m1: usize, m2: usize, seed: Seed) -> Result<NetworkState> {
    if m1 == 0 || m2 == 0 {
        return Err(FeatlabError::InvalidSize(format!(
            "widths must be positive, got m1={m1}, m2={m2}"
        )));
    }
    let (a, b) = sample_outer(m1, seed.derive(Purpose::InitOuter, 0));
    let inner = seed.derive(Purpose::InitInner, 0);
    let v = if d == 1 {
        // On the 0-sphere the only unit vectors are +1 and -1.
        let mut rng = inner.rng();
        DMatrix::from_fn(m2, 1, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
    } else {
        sample_sphere(d, 1.0, m2, inner)?
    };
    Ok(NetworkState::at_init(a, b, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Symmetrized matrix of i.i.d. standard normals.
    GaussSym,
    /// Orthogonal projection onto a uniformly random d/2-dimensional subspace.
    ProjectionHalf,
}

/// Raw (unnormalized) symmetric matrix for a quadratic feature.
pub fn random_symmetric(d: usize, kind: MatrixKind, seed: Seed) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(FeatlabError::InvalidDimension(format!("need d >= 2, got {d}")));
    }
    let mut rng = seed.rng();
    match kind {
        MatrixKind::GaussSym => {
            let mut a = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in i..d {
                    let z: f64 = rng.sample(StandardNormal);
                    a[(i, j)] = z;
                    a[(j, i)] = z;
                }
            }
            Ok(a)
        }
        MatrixKind::ProjectionHalf => {
            if d % 2 != 0 {
                return Err(FeatlabError::InvalidDimension(format!(
                    "projection onto a d/2 subspace needs even d, got {d}"
                )));
            }
            let g = gaussian_rows(d / 2, d, &mut rng);
            let q = g.qr().q();
            Ok(&q * q.transpose())
        }
    }
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q).
pub fn random_orthogonal(d: usize, seed: Seed) -> Result<DMatrix<f64>> {
    if d < 1 {
        return Err(FeatlabError::InvalidDimension("d must be positive".into()));
    }
    let g = gaussian_rows(d, d, &mut seed.rng());
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// A uniformly random unit vector in R^d.
pub fn random_unit_vector(d: usize, seed: Seed) -> Result<DVector<f64>> {
    let m = sample_sphere(d, 1.0, 1, seed)?;
    Ok(m.row(0).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_and_se;
    use statrs::function::beta::beta_reg;

    #[test]
    fn sphere_rows_have_the_requested_norm() {
        let x = sample_sphere(4, 2.0, 3, Seed::new(7)).unwrap();
        for row in x.row_iter() {
            assert!((row.norm() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sphere_rejects_small_dimension() {
        assert!(matches!(
            sample_sphere(1, 1.0, 3, Seed::new(1)),
            Err(FeatlabError::InvalidDimension(_))
        ));
    }

    #[test]
    fn sphere_moments() {
        let d = 16;
        let n = 1 << 14;
        let x = sample_sphere(d, (d as f64).sqrt(), n, Seed::new(11)).unwrap();
        let bound = 3.0 * (d as f64).sqrt() / (n as f64).sqrt();
        for j in 0..d {
            let m = x.column(j).mean();
            assert!(m.abs() < bound, "coordinate {j} mean {m}");
        }
        // E[x_1^2] = radius^2 / d = 1.
        let sq: Vec<f64> = x.column(0).iter().map(|v| v * v).collect();
        let (m, se) = mean_and_se(&sq);
        assert!((m - 1.0).abs() < 3.0 * se, "E[x1^2] = {m} +- {se}");
    }

    #[test]
    fn sphere_marginal_passes_chi_square() {
        // t = <x, u>/sqrt(d) follows mu_d; (1+t)/2 ~ Beta((d-1)/2, (d-1)/2).
        let d = 16;
        let n = 1 << 14;
        let x = sample_sphere(d, (d as f64).sqrt(), n, Seed::new(3)).unwrap();
        let a = (d as f64 - 1.0) / 2.0;
        for trial in 0..3 {
            let u = random_unit_vector(d, Seed::with_stream(99, trial)).unwrap();
            let bins = 20;
            let mut counts = vec![0usize; bins];
            for row in x.row_iter() {
                let t = row.dot(&u.transpose()) / (d as f64).sqrt();
                let p = beta_reg(a, a, ((1.0 + t) / 2.0).clamp(0.0, 1.0));
                counts[((p * bins as f64) as usize).min(bins - 1)] += 1;
            }
            let expected = n as f64 / bins as f64;
            let chi2: f64 = counts
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            // 0.999 quantile of chi-square with 19 degrees of freedom.
            assert!(chi2 < 43.82, "chi2 = {chi2}");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let s = Seed::with_stream(5, 17);
        let a = sample_sphere(8, 1.0, 10, s).unwrap();
        let b = sample_sphere(8, 1.0, 10, s).unwrap();
        assert_eq!(a, b);
        let c = sample_sphere(8, 1.0, 10, Seed::with_stream(5, 18)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_draws() {
        let st = sample_init(6, 10_000, 1000, Seed::new(21)).unwrap();
        assert!(st.w.iter().all(|&w| w == 0.0));
        let plus = st.a.iter().filter(|&&a| a == 1.0).count() as f64 / 10_000.0;
        assert!((plus - 0.5).abs() < 0.02);
        assert!(st.a.iter().all(|&a| a == 1.0 || a == -1.0));
        for row in st.v.row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gauss_sym_is_symmetric() {
        let a = random_symmetric(8, MatrixKind::GaussSym, Seed::new(2)).unwrap();
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn projection_half_spectrum() {
        let p = random_symmetric(8, MatrixKind::ProjectionHalf, Seed::new(2)).unwrap();
        let mut ev: Vec<f64> = p.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (i, e) in ev.iter().enumerate() {
            let want = if i < 4 { 0.0 } else { 1.0 };
            assert!((e - want).abs() < 1e-9, "{ev:?}");
        }
        assert!(matches!(
            random_symmetric(7, MatrixKind::ProjectionHalf, Seed::new(2)),
            Err(FeatlabError::InvalidDimension(_))
        ));
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let u = random_orthogonal(10, Seed::new(4)).unwrap();
        let e = &u.transpose() * &u - DMatrix::<f64>::identity(10, 10);
        assert!(e.amax() < 1e-12);
    }
}
