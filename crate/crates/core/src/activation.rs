//! Inner activations (sigma_2) and target link functions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ReLU with the kink replaced by a parabola on `[-eps, eps]`.
pub fn smoothed_relu(z: f64, eps: f64) -> f64 {
    if z <= -eps {
        0.0
    } else if z >= eps {
        z
    } else {
        (z + eps) * (z + eps) / (4.0 * eps)
    }
}

pub fn smoothed_relu_prime(z: f64, eps: f64) -> f64 {
    if z <= -eps {
        0.0
    } else if z >= eps {
        1.0
    } else {
        (z + eps) / (2.0 * eps)
    }
}

/// The activation applied to the random-feature layer.
#[derive(Clone)]
pub enum Activation {
    Identity,
    Relu,
    Custom { name: String, f: ScalarFn },
}

impl Activation {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Activation::Custom { name: name.into(), f: Arc::new(f) }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => relu(z),
            Activation::Custom { f, .. } => f(z),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Custom { name, .. } => name,
        }
    }
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Activation({})", self.name())
    }
}

/// Serializable activation choice used in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    Relu,
}

impl From<ActivationKind> for Activation {
    fn from(k: ActivationKind) -> Self {
        match k {
            ActivationKind::Identity => Activation::Identity,
            ActivationKind::Relu => Activation::Relu,
        }
    }
}

/// Scalar link `g*` of a target together with its derivative.
#[derive(Clone)]
pub enum Link {
    Identity,
    Sigmoid,
    Cube,
    Relu,
    SmoothedRelu { eps: f64 },
    Custom { name: String, g: ScalarFn, g_prime: ScalarFn },
}

impl Link {
    pub fn custom(
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Link::Custom { name: name.into(), g: Arc::new(g), g_prime: Arc::new(g_prime) }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Link::Identity => z,
            Link::Sigmoid => sigmoid(z),
            Link::Cube => z * z * z,
            Link::Relu => relu(z),
            Link::SmoothedRelu { eps } => smoothed_relu(z, *eps),
            Link::Custom { g, .. } => g(z),
        }
    }

    /// Derivative; at the ReLU kink the right derivative is used.
    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Link::Cube => 3.0 * z * z,
            Link::Relu => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Link::SmoothedRelu { eps } => smoothed_relu_prime(z, *eps),
            Link::Custom { g_prime, .. } => g_prime(z),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Link::Identity => "identity".into(),
            Link::Sigmoid => "sigmoid".into(),
            Link::Cube => "cube".into(),
            Link::Relu => "relu".into(),
            Link::SmoothedRelu { eps } => format!("smoothed_relu({eps})"),
            Link::Custom { name, .. } => name.clone(),
        }
    }

    /// Whether the link is an odd function, in which case the quadratic
    /// targets it produces need no centering for symmetric spectra.
    pub fn is_odd(&self) -> bool {
        matches!(self, Link::Identity | Link::Cube)
    }
}

impl fmt::Debug for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Link({})", self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothed_relu_is_c1() {
        let eps = 0.3;
        for &z in &[-eps, eps] {
            let h = 1e-7;
            let left = smoothed_relu(z - h, eps);
            let right = smoothed_relu(z + h, eps);
            assert!((left - smoothed_relu(z, eps)).abs() < 1e-6);
            assert!((right - left) / (2.0 * h) - smoothed_relu_prime(z, eps) < 1e-6);
        }
        assert_eq!(smoothed_relu(0.0, eps), eps / 4.0);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn link_derivatives_match_finite_differences() {
        let links = [Link::Sigmoid, Link::Cube, Link::SmoothedRelu { eps: 0.5 }];
        for link in &links {
            for &z in &[-1.3, -0.2, 0.4, 2.1] {
                let h = 1e-6;
                let fd = (link.eval(z + h) - link.eval(z - h)) / (2.0 * h);
                assert!((fd - link.derivative(z)).abs() < 1e-6, "{link:?} at {z}");
            }
        }
    }
}
