//! Invariant suites behind `featlab check`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::activation::{relu, sigmoid, Activation, Link};
use crate::analysis::{cross_term, estimate_t2, lower_bound_holds, two_layer_lower_bound, univariate_construct, w1_to_gaussian};
use crate::error::{FeatlabError, Result};
use crate::gegenbauer::{lambda_k, mu_expectation, relu_geg_coefficients, relu_tail_norm, GegenbauerBasis};
use crate::kernel::ClosedFormKernel;
use crate::sampling::{
    random_symmetric, random_unit_vector, sample_gaussian, sample_init, sample_outer, sample_sphere, Dataset,
    Distribution, MatrixKind, Purpose, Seed,
};
use crate::stats::mean_and_se;
use crate::targets::{normalize_quadratic, quadratic_form, Normalization, TargetSpec};
use crate::training::{default_eta_grid, design_matrix, stage2_fit, train_full, Solver, StageTwoDesign, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gegenbauer,
    Kernel,
    Training,
    Analysis,
    All,
}

impl FromStr for Suite {
    type Err = FeatlabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gegenbauer" => Ok(Suite::Gegenbauer),
            "kernel" => Ok(Suite::Kernel),
            "training" => Ok(Suite::Training),
            "analysis" => Ok(Suite::Analysis),
            "all" => Ok(Suite::All),
            other => Err(FeatlabError::Config(format!(
                "unknown suite {other:?}; expected gegenbauer, kernel, training, analysis or all"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Gegenbauer => "gegenbauer",
            Suite::Kernel => "kernel",
            Suite::Training => "training",
            Suite::Analysis => "analysis",
            Suite::All => "all",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub suite: Suite,
    pub name: String,
    pub measured: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
    /// Error text when the measurement itself failed.
    pub note: Option<String>,
}

impl fmt::Display for CheckRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.comparison {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        };
        write!(
            f,
            "{} [{}] {}: {:.6e} {} {:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            op,
            self.threshold
        )?;
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Truncate the ReLU kernel at this degree instead of adaptively.
    pub kernel_k_max: Option<usize>,
}

struct Report {
    suite: Suite,
    rows: Vec<CheckRow>,
}

impl Report {
    fn new(suite: Suite) -> Self {
        Report { suite, rows: Vec::new() }
    }

    fn push(&mut self, name: &str, measured: Result<f64>, comparison: Comparison, threshold: f64) {
        let (measured, note) = match measured {
            Ok(v) => (v, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        let passed = match comparison {
            Comparison::AtMost => measured <= threshold,
            Comparison::AtLeast => measured >= threshold,
        };
        self.rows.push(CheckRow {
            suite: self.suite,
            name: name.to_string(),
            measured,
            comparison,
            threshold,
            passed,
            note,
        });
    }

    fn at_most(&mut self, name: &str, measured: Result<f64>, threshold: f64) {
        self.push(name, measured, Comparison::AtMost, threshold);
    }

    fn at_least(&mut self, name: &str, measured: Result<f64>, threshold: f64) {
        self.push(name, measured, Comparison::AtLeast, threshold);
    }
}

pub fn run_checks(suite: Suite, opts: CheckOptions) -> Vec<CheckRow> {
    match suite {
        Suite::Gegenbauer => gegenbauer_suite(),
        Suite::Kernel => kernel_suite(opts),
        Suite::Training => training_suite(),
        Suite::Analysis => analysis_suite(),
        Suite::All => {
            let mut rows = gegenbauer_suite();
            rows.extend(kernel_suite(opts));
            rows.extend(training_suite());
            rows.extend(analysis_suite());
            rows
        }
    }
}

/// `(1/2pi)(sqrt(1 - t^2) + (pi - arccos t) t)`: the ReLU arc-cosine kernel.
pub fn arccos_kernel(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    ((1.0 - t * t).sqrt() + (std::f64::consts::PI - t.acos()) * t) / (2.0 * std::f64::consts::PI)
}

fn gegenbauer_suite() -> Vec<CheckRow> {
    let mut r = Report::new(Suite::Gegenbauer);
    r.at_most(
        "orthogonality |E[G_j G_k] - delta_jk / B(d,k)|, d in {4,10,25}, j,k <= 8",
        (|| {
            let mut worst = 0.0f64;
            for d in [4, 10, 25] {
                let basis = GegenbauerBasis::new(d, 8)?;
                for j in 0..=8 {
                    for k in j..=8 {
                        let got = mu_expectation(d, 1e-12, 1e-2, |t| {
                            basis.eval(j, t).unwrap_or(f64::NAN) * basis.eval(k, t).unwrap_or(f64::NAN)
                        })?;
                        let want = if j == k { 1.0 / basis.dim(k) } else { 0.0 };
                        worst = worst.max((got - want).abs());
                    }
                }
            }
            Ok(worst)
        })(),
        1e-8,
    );
    r.at_most(
        "|G_k(1) - 1|, d in {3,16,128}, k <= 64",
        (|| {
            let mut worst = 0.0f64;
            for d in [3, 16, 128] {
                let basis = GegenbauerBasis::new(d, 64)?;
                for k in 0..=64 {
                    worst = worst.max((basis.eval(k, 1.0)? - 1.0).abs());
                }
            }
            Ok(worst)
        })(),
        1e-10,
    );
    r.at_most(
        "ReLU even coefficients, closed form vs quadrature (relative), d in {6,12}, k <= 6",
        (|| {
            let mut worst = 0.0f64;
            for d in [6, 12] {
                let basis = GegenbauerBasis::new(d, 6)?;
                let coeffs = relu_geg_coefficients(&basis, 6)?;
                for k in [0, 2, 4, 6] {
                    let c = coeffs.closed[k].expect("even degree");
                    worst = worst.max((c - coeffs.quadrature[k]).abs() / c.abs());
                }
            }
            Ok(worst)
        })(),
        1e-8,
    );
    r.at_most(
        "ReLU G_1 coefficient by quadrature, |c_1 - 1/2|",
        (|| {
            let basis = GegenbauerBasis::new(12, 2)?;
            Ok((relu_geg_coefficients(&basis, 2)?.quadrature[1] - 0.5).abs())
        })(),
        1e-10,
    );
    r.at_least(
        "tail norm / (1/(512 m^2 d)), d in {16,32,64,128}, m <= d/8 (min)",
        (|| {
            let mut worst = f64::INFINITY;
            for d in [16, 32, 64, 128] {
                let basis = GegenbauerBasis::new(d, d / 4)?;
                for m in 1..=d / 8 {
                    let ratio = relu_tail_norm(&basis, m)? * 512.0 * (m * m * d) as f64;
                    worst = worst.min(ratio);
                }
            }
            Ok(worst)
        })(),
        1.0,
    );
    r.rows
}

/// Random point pairs on `S^{d-1}(sqrt d)`, the last few identical.
fn kernel_pairs(d: usize, count: usize, seed: Seed) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let x = sample_sphere(d, (d as f64).sqrt(), count, seed.derive(Purpose::Diagnostic, 0))?;
    let mut y = sample_sphere(d, (d as f64).sqrt(), count, seed.derive(Purpose::Diagnostic, 1))?;
    for i in count.saturating_sub(4)..count {
        y.set_row(i, &x.row(i));
    }
    Ok((x, y))
}

fn relu_kernel(d: usize, opts: CheckOptions) -> Result<ClosedFormKernel> {
    match opts.kernel_k_max {
        Some(k) => ClosedFormKernel::truncated(d, &Activation::Relu, k),
        None => ClosedFormKernel::new(d, &Activation::Relu),
    }
}

/// Pointwise `|K f(x) - lambda_k^2 f(x)| / SE` for `f = sqrt(B) G_k(<., u>/d)`,
/// with `K f` estimated from `n` sphere samples.
pub fn diagonalization_z_scores(
    kernel: &ClosedFormKernel,
    lambda_sq: f64,
    k: usize,
    n: usize,
    queries: usize,
    seed: Seed,
) -> Result<Vec<f64>> {
    let d = kernel.d;
    let sd = (d as f64).sqrt();
    let basis = GegenbauerBasis::new(d, k)?;
    let scale = basis.dim(k).sqrt();
    let u = random_unit_vector(d, seed.derive(Purpose::Diagnostic, 10))? * sd;
    let xs = sample_sphere(d, sd, n, seed.derive(Purpose::Diagnostic, 11))?;
    let q = sample_sphere(d, sd, queries, seed.derive(Purpose::Diagnostic, 12))?;
    let f = |p: &DVector<f64>| -> Result<DVector<f64>> {
        let mut out = DVector::zeros(p.len());
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o = scale * basis.eval(k, (v / d as f64).clamp(-1.0, 1.0))?;
        }
        Ok(out)
    };
    let f_samples = f(&(&xs * &u))?;
    let f_queries = f(&(&q * &u))?;
    let dots = &xs * q.transpose();
    let mut z = Vec::with_capacity(queries);
    for j in 0..queries {
        let mut prods = Vec::with_capacity(n);
        for i in 0..n {
            prods.push(kernel.profile_unchecked((dots[(i, j)] / d as f64).clamp(-1.0, 1.0)) * f_samples[i]);
        }
        let (m, se) = mean_and_se(&prods);
        z.push((m - lambda_sq * f_queries[j]).abs() / se);
    }
    Ok(z)
}

fn kernel_suite(opts: CheckOptions) -> Vec<CheckRow> {
    let mut r = Report::new(Suite::Kernel);
    let d = 16;
    let seed = Seed::new(0x6b65726e);
    r.at_most(
        "identity kernel vs <x,x'>/d, 100 pairs (max abs)",
        (|| {
            let k = ClosedFormKernel::new(d, &Activation::Identity)?;
            let (x, y) = kernel_pairs(d, 100, seed)?;
            let mut worst = 0.0f64;
            for i in 0..100 {
                let (a, b): (Vec<f64>, Vec<f64>) = (x.row(i).iter().copied().collect(), y.row(i).iter().copied().collect());
                worst = worst.max((k.eval(&a, &b)? - x.row(i).dot(&y.row(i)) / d as f64).abs());
            }
            Ok(worst)
        })(),
        1e-10,
    );
    let kernel = relu_kernel(d, opts);
    let kernel = kernel.as_ref();
    let with_kernel = |f: &dyn Fn(&ClosedFormKernel) -> Result<f64>| match kernel {
        Ok(k) => f(k),
        Err(e) => Err(e.clone()),
    };
    r.at_most(
        "ReLU kernel vs arc-cosine formula, 100 pairs (max abs)",
        with_kernel(&|k| {
            let (x, y) = kernel_pairs(d, 100, seed)?;
            let mut worst = 0.0f64;
            for i in 0..100 {
                let t = x.row(i).dot(&y.row(i)) / d as f64;
                worst = worst.max((k.profile(t)? - arccos_kernel(t)).abs());
            }
            Ok(worst)
        }),
        1e-8,
    );
    r.at_most(
        "ReLU kernel diagonal vs E[relu(x.v)^2] = 1/2",
        with_kernel(&|k| Ok((k.series(1.0) - 0.5).abs())),
        1e-9,
    );
    r.at_most(
        "ReLU kernel tail bound / retained mass",
        with_kernel(&|k| Ok(k.tail_bound / k.series(1.0))),
        1e-10,
    );
    r.at_least(
        "Mercer: min eigenvalue / trace of a 64-point Gram matrix",
        with_kernel(&|k| {
            let x = sample_sphere(d, (d as f64).sqrt(), 64, seed.derive(Purpose::Diagnostic, 3))?;
            let dots = &x * x.transpose();
            let gram = dots.map(|v| k.profile_unchecked((v / d as f64).clamp(-1.0, 1.0)));
            let eig = gram.clone().symmetric_eigenvalues();
            Ok(eig.min() / gram.trace())
        }),
        -1e-8,
    );
    r.at_most(
        "symmetry: max |K(x,y) - K(y,x)|",
        with_kernel(&|k| {
            let (x, y) = kernel_pairs(d, 100, seed)?;
            let mut worst = 0.0f64;
            for i in 0..100 {
                let a: Vec<f64> = x.row(i).iter().copied().collect();
                let b: Vec<f64> = y.row(i).iter().copied().collect();
                worst = worst.max((k.eval(&a, &b)? - k.eval(&b, &a)?).abs());
            }
            Ok(worst)
        }),
        0.0,
    );
    r.at_most(
        "diagonalization by quadrature: B(d,k) E[K G_k] vs lambda_k^2 B(d,k), k in {0,1,2,4} (max rel)",
        with_kernel(&|k| {
            let basis = GegenbauerBasis::new(d, 4)?;
            let mut worst = 0.0f64;
            for deg in [0, 1, 2, 4] {
                let b = basis.dim(deg);
                let got = b * mu_expectation(d, 1e-10, 1e-5, |t| k.series(t) * basis.eval(deg, t).unwrap_or(f64::NAN))?;
                let want = lambda_k(d, &Activation::Relu, deg)?.powi(2) * b;
                worst = worst.max((got - want).abs() / want);
            }
            Ok(worst)
        }),
        1e-8,
    );
    for (deg, idx) in [(1usize, 20u64), (2, 21)] {
        r.at_most(
            &format!("diagonalization by Monte Carlo, degree {deg}, d=16, n=2^16: max |z| over 16 points"),
            with_kernel(&|k| {
                let lam = lambda_k(d, &Activation::Relu, deg)?.powi(2);
                let z = diagonalization_z_scores(k, lam, deg, 1 << 16, 16, seed.derive(Purpose::Diagnostic, idx))?;
                Ok(z.into_iter().fold(0.0, f64::max))
            }),
            3.0,
        );
    }
    r.rows
}

/// `max_{entries} |analytic - finite difference| / max(|FD|)` over random
/// draws of a small network at initialization.
pub fn stage1_gradient_check(draws: usize, seed: Seed) -> Result<f64> {
    let (d, m1, m2, n) = (4, 8, 8, 16);
    let eta1 = 0.7;
    let h = 1e-5;
    let sigma2 = Activation::Relu;
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempt = 0u64;
    while done < draws {
        attempt += 1;
        if attempt > 100 * draws as u64 {
            return Err(FeatlabError::Numerical("too many draws near a ReLU kink".into()));
        }
        let s = seed.derive(Purpose::Diagnostic, attempt);
        let theta = sample_init(d, m1, m2, s)?;
        if theta.b.iter().any(|b| b.abs() < 1e-3) {
            continue;
        }
        let points = sample_sphere(d, 2.0, n, s.derive(Purpose::TrainFeature, 0))?;
        let mut rng = s.derive(Purpose::Target, 0).rng();
        let labels = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let data = Dataset { points, labels, distribution: Distribution::SphereSqrtD };
        // Perturbations of W shift pre-activations by at most h |h(x)|_1.
        let emb = theta.embed(&sigma2, &data.points)?;
        let max_l1 = emb.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
        if theta.b.iter().any(|b| b.abs() < 2.0 * h * max_l1) {
            continue;
        }
        let step = theta.stage1_step(&sigma2, &data, eta1)?;
        let mut fd = DMatrix::zeros(m1, m2);
        for j in 0..m1 {
            for k in 0..m2 {
                let mut plus = theta.clone();
                plus.w[(j, k)] += h;
                let mut minus = theta.clone();
                minus.w[(j, k)] -= h;
                fd[(j, k)] = (plus.loss(&sigma2, &data)? - minus.loss(&sigma2, &data)?) / (2.0 * h);
            }
        }
        let analytic = -(&step.w - &theta.w) / eta1;
        let scale = fd.abs().max().max(1e-12);
        worst = worst.max((analytic - &fd).abs().max() / scale);
        done += 1;
    }
    Ok(worst)
}

fn training_suite() -> Vec<CheckRow> {
    let mut r = Report::new(Suite::Training);
    let seed = Seed::new(0x747261696e);
    r.at_most(
        "stage-1 update vs central finite differences (h=1e-5), 20 draws (max rel)",
        stage1_gradient_check(20, seed),
        1e-4,
    );
    r.at_most(
        "stage-1 update vs -eta1 * analytic gradient (max rel)",
        (|| {
            let theta = sample_init(6, 32, 48, seed.derive(Purpose::Diagnostic, 1))?;
            let points = sample_sphere(6, 6f64.sqrt(), 64, seed.derive(Purpose::Diagnostic, 2))?;
            let labels = points.column(0).map(|v| v * v);
            let data = Dataset { points, labels, distribution: Distribution::SphereSqrtD };
            let eta1 = 3.0;
            let step = theta.stage1_step(&Activation::Relu, &data, eta1)?;
            let grad = theta.grad_w(&Activation::Relu, &data)?;
            let diff = (&step.w + grad * eta1).abs().max();
            Ok(diff / step.w.abs().max().max(1e-300))
        })(),
        1e-10,
    );
    r.at_most(
        "stage-2 gradient descent vs direct ridge objective gap, d=8, n=2^10, m1=256",
        (|| {
            let (design, labels) = stage2_problem(8, 1 << 10, 256, 1e-3, seed)?;
            let direct = stage2_fit(&design, &labels, Solver::Direct)?;
            let gd = stage2_fit(&design, &labels, Solver::Gd { eta2: None, steps: None })?;
            Ok((gd.objective - direct.objective).abs())
        })(),
        1e-6,
    );
    let finite = (|| {
        let d = 4;
        let target = TargetSpec::single_index(d, Link::Sigmoid, seed.derive(Purpose::Target, 3))?;
        let cfg = TrainConfig {
            d,
            n: 256,
            m1: 64,
            m2: Some(128),
            sigma2: Activation::Relu,
            distribution: Distribution::SphereSqrtD,
            holdout_n: 256,
            test_n: 256,
            eta_grid: default_eta_grid(),
            lambda_grid: vec![1e-4, 1e-2],
            solver: Solver::Direct,
            eta_bar_override: None,
            seed: 11,
        };
        let out = train_full(&target, &cfg, None)?;
        let net = out.network.clone().expect("finite width builds the network");
        let x = sample_sphere(d, 2.0, 256, seed.derive(Purpose::Test, 4))?;
        let via_net = net.forward_batch(&Activation::Relu, &x)?;
        let via_1d = out.predictor.predict(&x)?;
        let gap = (via_net - via_1d).abs().max();
        let init = sample_init(d, 64, 128, Seed::new(cfg.seed))?;
        let frozen = init.v == net.v && init.b == net.b;
        Ok::<_, FeatlabError>((gap, frozen))
    })();
    r.at_most(
        "trained network vs its 1-D form on 256 points (max abs)",
        finite.clone().map(|(g, _)| g),
        1e-10,
    );
    r.at_least(
        "V and b unchanged by training (1 = bit-identical)",
        finite.map(|(_, f)| if f { 1.0 } else { 0.0 }),
        1.0,
    );
    r.at_least(
        "single-index, identity link, d=8, n=2^12, infinite width: feature correlation",
        (|| {
            let d = 8;
            let target = TargetSpec::single_index(d, Link::Identity, seed.derive(Purpose::Target, 5))?;
            let cfg = TrainConfig {
                d,
                n: 1 << 12,
                m1: 256,
                m2: None,
                sigma2: Activation::Identity,
                distribution: Distribution::StdGaussian,
                holdout_n: 1 << 12,
                test_n: 1 << 12,
                eta_grid: default_eta_grid(),
                lambda_grid: vec![1e-6, 1e-3],
                solver: Solver::Direct,
                eta_bar_override: None,
                seed: 12,
            };
            Ok(train_full(&target, &cfg, None)?.feature_corr)
        })(),
        0.99,
    );
    r.rows
}

/// A stage-2 ridge problem built from a sigmoid single-index feature.
pub fn stage2_problem(d: usize, n: usize, m1: usize, lambda: f64, seed: Seed) -> Result<(StageTwoDesign, DVector<f64>)> {
    let w = random_unit_vector(d, seed.derive(Purpose::Target, 7))?;
    let x = sample_gaussian(d, n, seed.derive(Purpose::TrainReadout, 7))?;
    let phi = &x * w;
    let labels = phi.map(sigmoid);
    let (a0, b) = sample_outer(m1, seed.derive(Purpose::InitOuter, 7));
    let eta_bar = 1.0 / phi.abs().max();
    let psi = design_matrix(&a0, &b, &phi, eta_bar);
    Ok((StageTwoDesign { psi, a0, eta_bar, lambda }, labels))
}

/// Traceless symmetric matrix orthogonal to `a`, normalized like `a`.
pub fn orthogonal_partner(a: &DMatrix<f64>, seed: Seed) -> Result<DMatrix<f64>> {
    let raw = normalize_quadratic(&random_symmetric(a.nrows(), MatrixKind::GaussSym, seed)?, Normalization::UnitSecondMoment)?;
    let proj = raw.dot(a) / a.dot(a);
    normalize_quadratic(&(&raw - a * proj), Normalization::UnitSecondMoment)
}

/// Rank-one quadratic `u u^T` made traceless with unit second moment.
pub fn rank_one_quadratic(d: usize, seed: Seed) -> Result<DMatrix<f64>> {
    let u = random_unit_vector(d, seed)?;
    normalize_quadratic(&(&u * u.transpose()), Normalization::UnitSecondMoment)
}

fn cosine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

fn analysis_suite() -> Vec<CheckRow> {
    let mut r = Report::new(Suite::Analysis);
    let seed = Seed::new(0x616e616c);
    let sphere = |d: usize, n: usize, idx: u64| sample_sphere(d, (d as f64).sqrt(), n, seed.derive(Purpose::Diagnostic, idx));
    let unit_a = |d: usize, idx: u64| {
        normalize_quadratic(&random_symmetric(d, MatrixKind::GaussSym, seed.derive(Purpose::Target, idx))?, Normalization::UnitSecondMoment)
    };

    r.at_most(
        "T2 of an exact harmonic, d=16, n=2^15: relative Frobenius error",
        (|| {
            let a = unit_a(16, 1)?;
            let x = sphere(16, 1 << 15, 1)?;
            let est = estimate_t2(&x, &quadratic_form(&a, &x))?;
            Ok((est.t2 - &a).norm() / a.norm())
        })(),
        0.05,
    );
    r.at_most(
        "T2 of a constant, d=16, n=2^15: |T2|_F / SE",
        (|| {
            let x = sphere(16, 1 << 15, 2)?;
            let est = estimate_t2(&x, &DVector::from_element(1 << 15, 1.0))?;
            Ok(est.t2.norm() / est.standard_error.max(1e-300))
        })(),
        3.0,
    );
    r.at_least(
        "T2 of cube(x^T A x), d=64, n=2^16: cosine with A",
        (|| {
            let a = unit_a(64, 3)?;
            let x = sphere(64, 1 << 16, 3)?;
            let f = quadratic_form(&a, &x).map(|q| q * q * q);
            Ok(cosine(&estimate_t2(&x, &f)?.t2, &a))
        })(),
        0.9,
    );
    let cross = (|| {
        let d = 64;
        let a = unit_a(d, 4)?;
        let b = orthogonal_partner(&a, seed.derive(Purpose::Target, 5))?;
        let x = sphere(d, 1 << 16, 4)?;
        let q = quadratic_form(&a, &x);
        let lin_orth = cross_term(&x, &q, &b)?;
        let lin_self = cross_term(&x, &q, &a)?;
        let rq = q.map(relu);
        let relu_orth = cross_term(&x, &rq, &b)?;
        let relu_self = cross_term(&x, &rq, &a)?;
        Ok::<_, FeatlabError>((lin_orth, lin_self, relu_orth, relu_self))
    })();
    r.at_most(
        "E[(x^T A x)(x^T B x)], B orthogonal to A, d=64: |estimate| / SE",
        cross.clone().map(|c| c.0.value.abs() / c.0.se),
        3.0,
    );
    r.at_most(
        "E[(x^T A x)^2] normalized, d=64: |estimate - 1| / SE",
        cross.clone().map(|c| (c.1.value - 1.0).abs() / c.1.se),
        3.0,
    );
    r.at_most(
        "relu cross term, B orthogonal to A, d=64, n=2^16: ratio to the aligned term",
        cross.map(|c| c.2.value.abs() / c.3.value.abs()),
        0.2,
    );
    let n_w1 = 100_000;
    r.at_most(
        "W1 of N(0,1) samples to N(0,1), n=1e5",
        (|| {
            let g = sample_gaussian(1, n_w1, seed.derive(Purpose::Diagnostic, 6))?;
            w1_to_gaussian(g.as_slice())
        })(),
        0.02,
    );
    r.at_most(
        "W1 of x^T A x (separation matrix, unit second moment), d=64, n=1e5",
        (|| {
            let t = TargetSpec::separation(64, true, 1 << 10, seed.derive(Purpose::Target, 7))?;
            let a = normalize_quadratic(t.a.as_ref().expect("separation matrix"), Normalization::UnitSecondMoment)?;
            let x = sphere(64, n_w1, 7)?;
            w1_to_gaussian(quadratic_form(&a, &x).as_slice())
        })(),
        0.15,
    );
    r.at_least(
        "W1 of x^T A x (rank one, unit second moment), d=64, n=1e5",
        (|| {
            let a = rank_one_quadratic(64, seed.derive(Purpose::Target, 8))?;
            let x = sphere(64, n_w1, 8)?;
            w1_to_gaussian(quadratic_form(&a, &x).as_slice())
        })(),
        0.05,
    );
    let cert = two_layer_lower_bound(1000, 1.0, 1.0, 1.0, 1.0);
    r.at_most(
        "lower-bound certificate at d=1000, m=1, B=1, alpha=1: epsilon",
        cert.clone().and_then(|c| c.map(|c| c.epsilon).ok_or_else(|| FeatlabError::Consistency("no certificate".into()))),
        1.0 / 2048.0,
    );
    r.at_least(
        "certificate re-verified independently (1 = inequality holds at k_star)",
        cert.and_then(|c| {
            let c = c.ok_or_else(|| FeatlabError::Consistency("no certificate".into()))?;
            Ok(if lower_bound_holds(1000, 1.0, 1.0, 1.0, c.k_star) { 1.0 } else { 0.0 })
        }),
        1.0,
    );
    r.at_most(
        "certified epsilon nonincreasing as m decreases over {1e3, 10, 1}: violations",
        (|| {
            let eps: Vec<f64> = [1e3, 10.0, 1.0]
                .iter()
                .map(|&m| Ok(two_layer_lower_bound(1000, m, 1.0, 1.0, 1.0)?.map_or(f64::INFINITY, |c| c.epsilon)))
                .collect::<Result<_>>()?;
            Ok(eps.windows(2).filter(|w| w[1] > w[0]).count() as f64)
        })(),
        0.0,
    );
    type Fns = (&'static str, fn(f64) -> f64, fn(f64) -> f64, fn(f64) -> f64);
    let fns: [Fns; 4] = [
        ("1", |_| 1.0, |_| 0.0, |_| 0.0),
        ("x", |x| x, |_| 1.0, |_| 0.0),
        ("x^2", |x| x * x, |x| 2.0 * x, |_| 2.0),
        ("sin(2x)", |x| (2.0 * x).sin(), |x| 2.0 * (2.0 * x).cos(), |x| -4.0 * (2.0 * x).sin()),
    ];
    for (name, f, f1, f2) in fns {
        r.at_most(
            &format!("ReLU random-feature reconstruction of f(x) = {name} on 201 points (sup error)"),
            (|| {
                let c = univariate_construct(f, f1, f2)?;
                let mut worst = 0.0f64;
                for i in 0..=200 {
                    let x = -1.0 + i as f64 / 100.0;
                    worst = worst.max((c.reconstruct(x)? - f(x)).abs());
                }
                Ok(worst)
            })(),
            1e-6,
        );
    }
    r.at_most(
        "weight bound C = sup|v| / max(1, |f|, |f'|, |f''|) for f(x) = x^2",
        (|| Ok(univariate_construct(|x| x * x, |x| 2.0 * x, |_| 2.0)?.sup_abs_v(2000) / 2.0))(),
        50.0,
    );
    r.rows
}
