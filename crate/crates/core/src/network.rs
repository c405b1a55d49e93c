//! The three-layer network `f(x) = (1/m1) a^T relu(W sigma2(V x) + b)` and
//! the first stage of layer-wise training.
//!
//! Losses use the half-squared convention `(1/2n) sum (f - y)^2`, under which
//! the closed-form stage-1 update is exactly one gradient step.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::{relu, Activation};
use crate::error::{FeatlabError, Result};
use crate::sampling::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    PostStage1,
    PostStage2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Init => "init",
            Stage::PostStage1 => "post_stage1",
            Stage::PostStage2 => "post_stage2",
        };
        f.write_str(s)
    }
}

/// Parameters `(a, W, b, V)`; `b` and `V` never change after initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// Outer weights, length m1.
    pub a: DVector<f64>,
    /// Middle weights, m1 x m2.
    pub w: DMatrix<f64>,
    /// Middle biases, length m1.
    pub b: DVector<f64>,
    /// Inner weights, m2 x d.
    pub v: DMatrix<f64>,
    pub stage: Stage,
}

/// `eta_bar = eta1 * m2 / m1`.
pub fn eta_bar_from_eta1(eta1: f64, m1: usize, m2: usize) -> f64 {
    eta1 * m2 as f64 / m1 as f64
}

pub fn eta1_from_eta_bar(eta_bar: f64, m1: usize, m2: usize) -> f64 {
    eta_bar * m1 as f64 / m2 as f64
}

impl NetworkState {
    pub fn at_init(a: DVector<f64>, b: DVector<f64>, v: DMatrix<f64>) -> Self {
        assert_eq!(a.len(), b.len(), "a and b must both have length m1");
        let w = DMatrix::zeros(a.len(), v.nrows());
        NetworkState { a, w, b, v, stage: Stage::Init }
    }

    pub fn m1(&self) -> usize {
        self.a.len()
    }

    pub fn m2(&self) -> usize {
        self.v.nrows()
    }

    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(FeatlabError::InvalidDimension(format!(
                "network expects inputs of dimension {}, got {d}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Random-feature embedding `h(x) = sigma2(V x)` for every row of `points`
    /// (n x m2).
    pub fn embed(&self, sigma2: &Activation, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(points.ncols())?;
        let mut h = points * self.v.transpose();
        h.apply(|z| *z = sigma2.apply(*z));
        Ok(h)
    }

    /// Network output at the initialization, where `W = 0` makes it constant.
    pub fn init_output(&self) -> f64 {
        let m1 = self.m1() as f64;
        self.a.iter().zip(self.b.iter()).map(|(a, b)| a * relu(*b)).sum::<f64>() / m1
    }

    pub fn forward(&self, sigma2: &Activation, x: &[f64]) -> Result<f64> {
        let p = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.forward_batch(sigma2, &p)?[0])
    }

    pub fn forward_batch(&self, sigma2: &Activation, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        let h = self.embed(sigma2, points)?;
        let z = h * self.w.transpose();
        let m1 = self.m1() as f64;
        Ok(DVector::from_fn(points.nrows(), |i, _| {
            let mut acc = 0.0;
            for j in 0..self.m1() {
                acc += self.a[j] * relu(z[(i, j)] + self.b[j]);
            }
            acc / m1
        }))
    }

    /// `(1/2n) sum_i (f(x_i) - y_i)^2`.
    pub fn loss(&self, sigma2: &Activation, data: &Dataset) -> Result<f64> {
        let f = self.forward_batch(sigma2, &data.points)?;
        let n = data.len() as f64;
        Ok(f.iter().zip(data.labels.iter()).map(|(f, y)| (f - y).powi(2)).sum::<f64>() / (2.0 * n))
    }

    /// Gradient of [`NetworkState::loss`] with respect to `W` (m1 x m2).
    /// The ReLU derivative at exactly zero is taken as zero.
    pub fn grad_w(&self, sigma2: &Activation, data: &Dataset) -> Result<DMatrix<f64>> {
        let h = self.embed(sigma2, &data.points)?;
        let z = &h * self.w.transpose();
        let n = data.len();
        let m1 = self.m1();
        let mut out_err = DVector::zeros(n);
        for i in 0..n {
            let mut f = 0.0;
            for j in 0..m1 {
                f += self.a[j] * relu(z[(i, j)] + self.b[j]);
            }
            out_err[i] = f / m1 as f64 - data.labels[i];
        }
        // coef[i, j] = (f_i - y_i) a_j 1[pre_ij > 0] / (n m1)
        let mut coef = DMatrix::zeros(n, m1);
        for i in 0..n {
            for j in 0..m1 {
                if z[(i, j)] + self.b[j] > 0.0 {
                    coef[(i, j)] = out_err[i] * self.a[j] / (n as f64 * m1 as f64);
                }
            }
        }
        Ok(coef.transpose() * h)
    }

    /// One step on `W` from the initialization, in closed form:
    /// row `j` of `W` becomes
    /// `1[b_j > 0] (eta_bar / m2) a_j (1/n) sum_i r_i h(x_i)` with residuals
    /// `r_i = y_i - f(x_i; theta0)` and `eta_bar = eta1 m2 / m1`.
    pub fn stage1_step(&self, sigma2: &Activation, d1: &Dataset, eta1: f64) -> Result<NetworkState> {
        if self.stage != Stage::Init {
            return Err(FeatlabError::WrongStage {
                expected: Stage::Init.to_string(),
                found: self.stage.to_string(),
            });
        }
        if d1.is_empty() {
            return Err(FeatlabError::InvalidSize("stage 1 needs a nonempty dataset".into()));
        }
        let h = self.embed(sigma2, &d1.points)?;
        let c = self.init_output();
        let n = d1.len() as f64;
        let r = d1.labels.map(|y| y - c);
        let mean_rh = h.transpose() * r / n;
        let eta_bar = eta_bar_from_eta1(eta1, self.m1(), self.m2());
        let scale = eta_bar / self.m2() as f64;
        let mut next = self.clone();
        for j in 0..self.m1() {
            let gate = if self.b[j] > 0.0 { 1.0 } else { 0.0 };
            let row = &mean_rh * (gate * scale * self.a[j]);
            next.w.set_row(j, &row.transpose());
        }
        next.stage = Stage::PostStage1;
        Ok(next)
    }

    /// Replace the outer weights with a stage-2 solution.
    pub fn with_outer_weights(&self, a: DVector<f64>) -> Result<NetworkState> {
        if self.stage != Stage::PostStage1 {
            return Err(FeatlabError::WrongStage {
                expected: Stage::PostStage1.to_string(),
                found: self.stage.to_string(),
            });
        }
        if a.len() != self.m1() {
            return Err(FeatlabError::InvalidSize(format!(
                "expected {} outer weights, got {}",
                self.m1(),
                a.len()
            )));
        }
        Ok(NetworkState { a, stage: Stage::PostStage2, ..self.clone() })
    }
}
