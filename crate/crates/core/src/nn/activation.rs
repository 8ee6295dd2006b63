use serde::{Deserialize, Serialize};

/// Negative-side slope of [`Activation::LeakyRelu`].
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Elementwise nonlinearity applied after an affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Softplus,
    Sigmoid,
    Identity,
}

/// `ln(1 + e^x)` without overflow: `max(x, 0) + ln(1 + e^{-|x|})`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Alias kept for call sites that read better as a log-sum-exp.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    softplus(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Softplus => softplus(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Softplus => sigmoid(x),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!(softplus(800.0).is_finite());
        assert_eq!(Activation::Relu.eval(-1.0), 0.0);
        assert_eq!(Activation::LeakyRelu.eval(-2.0), -0.02);
    }

    proptest! {
        #[test]
        fn softplus_dominates_relu(x in -700.0f64..700.0) {
            let s = softplus(x);
            prop_assert!(s >= x.max(0.0));
            if x > 40.0 {
                prop_assert!(s - x < 1e-15 * x.max(1.0) + 1e-17);
            }
        }

        #[test]
        fn sigmoid_in_unit_interval(x in -1e3f64..1e3) {
            let s = sigmoid(x);
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
