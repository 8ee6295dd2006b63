//! Numeric checks of the recognizability bound on the Gaussian family
//! `P = N(0,1)`, `Q = N(μ,1)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::roc::RocCurve;
use crate::error::{Error, Result};

/// `1 − ln 2`, the additive constant of the bound.
pub const BOUND_CONSTANT: f64 = 1.0 - std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub mu: f64,
    /// `2Φ(μ/√2) − 1`.
    pub recognizability: f64,
    /// `μ²/2`.
    pub kl: f64,
    /// `kl + 1 − ln 2`.
    pub bound: f64,
    pub pass: bool,
}

/// Analytic recognizability of the Gaussian LRT, `2Φ(μ/√2) − 1`.
pub fn gaussian_recognizability(mu: f64) -> f64 {
    2.0 * Normal::standard().cdf(mu / std::f64::consts::SQRT_2) - 1.0
}

pub fn theorem1_gaussian_check(mu_grid: &[f64]) -> Result<Vec<Theorem1Row>> {
    mu_grid
        .iter()
        .map(|&mu| {
            if !(mu >= 0.0) || !mu.is_finite() {
                return Err(Error::Input(format!("μ must be finite and >= 0, got {mu}")));
            }
            let recognizability = gaussian_recognizability(mu);
            let kl = mu * mu / 2.0;
            let bound = kl + BOUND_CONSTANT;
            Ok(Theorem1Row {
                mu,
                recognizability,
                kl,
                bound,
                pass: recognizability <= bound,
            })
        })
        .collect()
}

/// `0, 0.1, …, 10`.
pub fn default_mu_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Result {
    pub mu: f64,
    pub integral: f64,
    pub analytic: f64,
    pub abs_err: f64,
}

/// Half-width, in standard deviations, of the integration window.
const TAIL: f64 = 12.0;

/// Evaluates `−∫₀¹ ln ψ′(x) dx` for the Gaussian ROC.
///
/// With `x = Q̄(t)` the integral becomes `E_{t∼N(0,1)}[−ln(φ(t−μ)/φ(t))]`,
/// computed with composite Simpson's rule on `grid_size` intervals over
/// `[−12, 12 + μ]`.
pub fn lemma1_numeric(mu: f64, grid_size: usize) -> Result<Lemma1Result> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Input(format!("μ must be finite and > 0, got {mu}")));
    }
    if grid_size < 1000 {
        return Err(Error::Input(format!("grid_size must be >= 1000, got {grid_size}")));
    }
    let std_normal = Normal::standard();
    let shifted = Normal::new(mu, 1.0).expect("unit variance");
    let integrand = |t: f64| -> f64 {
        let log_ratio = shifted.ln_pdf(t) - std_normal.ln_pdf(t);
        -log_ratio * std_normal.pdf(t)
    };
    let intervals = grid_size + grid_size % 2;
    let (a, b) = (-TAIL, TAIL + mu);
    let h = (b - a) / intervals as f64;
    let mut sum = integrand(a) + integrand(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(a + i as f64 * h);
    }
    let integral = sum * h / 3.0;
    let analytic = mu * mu / 2.0;
    Ok(Lemma1Result {
        mu,
        integral,
        analytic,
        abs_err: (integral - analytic).abs(),
    })
}

/// `ψ(x) = Q̄(Q̄⁻¹(x) − μ)` sampled at `points` evenly spaced `x` in `[0, 1]`.
pub fn gaussian_roc_curve(mu: f64, points: usize) -> Result<RocCurve> {
    if points < 2 {
        return Err(Error::Input("need at least two curve points".into()));
    }
    if !mu.is_finite() {
        return Err(Error::Input(format!("μ must be finite, got {mu}")));
    }
    let normal = Normal::standard();
    let pts = (0..points)
        .map(|i| {
            let x = i as f64 / (points - 1) as f64;
            let y = if i == 0 {
                0.0
            } else if i == points - 1 {
                1.0
            } else {
                let t = normal.inverse_cdf(1.0 - x);
                1.0 - normal.cdf(t - mu)
            };
            (x, y)
        })
        .collect();
    RocCurve::from_points(pts)
}
