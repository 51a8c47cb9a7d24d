//! Pointwise activations and their closed-form derivatives.
//!
//! Scalar evaluation is done in `f64`; tensor variants round the result to
//! `f32` once per element.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    /// `x * sigmoid(beta * x)`.
    Swish {
        beta: f64,
    },
    /// `x * tanh(softplus(x))`.
    Mish,
    /// `x * clamp(x + 3, 0, 6) / 6`.
    HardSwish,
}

impl Default for ActivationKind {
    fn default() -> Self {
        ActivationKind::Swish { beta: 1.0 }
    }
}

impl ActivationKind {
    pub const SWISH: ActivationKind = ActivationKind::Swish { beta: 1.0 };

    pub fn swish(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::Invalid(format!(
                "swish beta must be finite and positive, got {beta}"
            )));
        }
        Ok(ActivationKind::Swish { beta })
    }

    /// Every kind, with swish at beta 1.
    pub fn all() -> [ActivationKind; 6] {
        [
            ActivationKind::Relu,
            ActivationKind::Sigmoid,
            ActivationKind::Tanh,
            ActivationKind::SWISH,
            ActivationKind::Mish,
            ActivationKind::HardSwish,
        ]
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Swish { beta } => x * sigmoid(beta * x),
            ActivationKind::Mish => x * softplus(x).tanh(),
            ActivationKind::HardSwish => x * (x + 3.0).clamp(0.0, 6.0) / 6.0,
        }
    }

    /// Derivative at `x`. ReLU takes subgradient 0 at the origin; hard-swish
    /// uses the interior branch on the closed interval `[-3, 3]`.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Swish { beta } => {
                let s = sigmoid(beta * x);
                s + beta * x * s * (1.0 - s)
            }
            ActivationKind::Mish => {
                let t = softplus(x).tanh();
                t + x * (1.0 - t * t) * sigmoid(x)
            }
            ActivationKind::HardSwish => {
                if x < -3.0 {
                    0.0
                } else if x > 3.0 {
                    1.0
                } else {
                    (2.0 * x + 3.0) / 6.0
                }
            }
        }
    }

    /// Points where the derivative is discontinuous.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            ActivationKind::Relu => &[0.0],
            ActivationKind::HardSwish => &[-3.0, 3.0],
            _ => &[],
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Relu => f.write_str("relu"),
            ActivationKind::Sigmoid => f.write_str("sigmoid"),
            ActivationKind::Tanh => f.write_str("tanh"),
            ActivationKind::Swish { beta } if *beta == 1.0 => f.write_str("swish"),
            ActivationKind::Swish { beta } => write!(f, "swish:{beta}"),
            ActivationKind::Mish => f.write_str("mish"),
            ActivationKind::HardSwish => f.write_str("hard_swish"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(ActivationKind::Relu),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "swish" => Ok(ActivationKind::SWISH),
            "mish" => Ok(ActivationKind::Mish),
            "hard_swish" => Ok(ActivationKind::HardSwish),
            _ => match s.strip_prefix("swish:") {
                Some(beta) => {
                    let beta = beta
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad swish beta `{beta}`")))?;
                    ActivationKind::swish(beta)
                }
                None => Err(Error::Invalid(format!("unknown activation `{s}`"))),
            },
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`, switching to the asymptotes beyond |x| = 20.
pub fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn activate(kind: ActivationKind, x: &Tensor) -> Tensor {
    x.map(|v| kind.apply(v as f64) as f32)
}

pub fn activate_grad(kind: ActivationKind, x: &Tensor) -> Tensor {
    x.map(|v| kind.derivative(v as f64) as f32)
}

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn finite_difference(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    assert!(step > 0.0, "finite-difference step must be positive");
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// `|a - b| <= rel * max(|a|, |b|)`, or within the absolute floor.
pub fn rel_close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    let diff = (a - b).abs();
    diff <= floor || diff <= rel * a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    const SWISH: ActivationKind = ActivationKind::SWISH;

    #[test]
    fn values_at_zero_and_one() {
        assert_eq!(SWISH.apply(0.0), 0.0);
        assert_eq!(ActivationKind::Mish.apply(0.0), 0.0);
        assert!((SWISH.apply(1.0) - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((ActivationKind::Mish.apply(1.0) - 0.865_098_388_267_310_3).abs() < 1e-12);
    }

    #[test]
    fn derivative_cases() {
        assert_eq!(SWISH.derivative(0.0), 0.5);
        assert_eq!(ActivationKind::Relu.derivative(-1.0), 0.0);
        assert_eq!(ActivationKind::Relu.derivative(2.0), 1.0);
        assert_eq!(ActivationKind::Relu.derivative(0.0), 0.0);
        // mpmath: d/dx mish(x) at 1
        assert!((ActivationKind::Mish.derivative(1.0) - 1.049_036_220_099_792_2).abs() < 1e-12);
        let fd = finite_difference(|x| ActivationKind::Mish.apply(x), 1.0, 1e-4);
        assert!(rel_close(ActivationKind::Mish.derivative(1.0), fd, 1e-6, 1e-8));
    }

    #[test]
    fn finite_difference_basics() {
        assert!((finite_difference(|x| x * x, 3.0, 1e-4) - 6.0).abs() < 1e-6);
        assert_eq!(finite_difference(|_| 4.2, 1.0, 1e-4), 0.0);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!(ActivationKind::Mish.apply(1000.0).is_finite());
        assert!(ActivationKind::Mish.apply(-1000.0).is_finite());
        assert!(SWISH.apply(-1000.0).is_finite());
    }

    #[test]
    fn hard_swish_pieces() {
        let hs = ActivationKind::HardSwish;
        assert_eq!(hs.apply(-4.0), 0.0);
        assert_eq!(hs.apply(4.0), 4.0);
        assert_eq!(hs.apply(0.0), 0.0);
        assert_eq!(hs.apply(3.0), 3.0);
        assert_eq!(hs.derivative(1.5), 1.0);
    }

    #[test]
    fn parse_round_trip() {
        for kind in ActivationKind::all() {
            assert_eq!(kind.to_string().parse::<ActivationKind>().unwrap(), kind);
        }
        let k: ActivationKind = "swish:0.5".parse().unwrap();
        assert_eq!(k, ActivationKind::Swish { beta: 0.5 });
        assert_eq!(k.to_string(), "swish:0.5");
        assert!("swish:-1".parse::<ActivationKind>().is_err());
        assert!("gelu".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn tensor_forms() {
        let x = Tensor::from_vec(1, 1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(activate(ActivationKind::Relu, &x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(activate_grad(ActivationKind::Relu, &x).data(), &[0.0, 0.0, 1.0]);
        let big = Tensor::full(Shape::new(1, 1, 1, 1), 50.0);
        assert_eq!(activate(ActivationKind::Mish, &big).data(), &[50.0]);
    }
}
