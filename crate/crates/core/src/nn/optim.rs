use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Flat views over the parameter (or gradient) tensors of a model, in a
/// fixed order. Optimizers operate on these views.
pub trait Params {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

fn check_pair(params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    if params.len() != grads.len() {
        return shape_err("optimizer tensor count", params.len(), grads.len());
    }
    for (p, g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return shape_err("optimizer tensor length", p.len(), g.len());
        }
    }
    Ok(())
}

fn check_state(state: &[Vec<f64>], params: &[&mut [f64]]) -> Result<()> {
    if state.len() != params.len() || state.iter().zip(params).any(|(s, p)| s.len() != p.len()) {
        return shape_err(
            "optimizer state",
            format!("{} tensors", state.len()),
            format!("{} tensors", params.len()),
        );
    }
    Ok(())
}

/// Bias-corrected Adam. Moments are allocated on the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) -> Result<()> {
        check_pair(&params, &grads)?;
        if !(lr > 0.0) {
            return Err(Error::Input(format!("learning rate must be positive, got {lr}")));
        }
        if self.step == 0 && self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        check_state(&self.m, &params)?;

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(&grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v ← μv + g`, `w ← w − lr·v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub velocity: Vec<Vec<f64>>,
    pub momentum: f64,
}

impl Default for MomentumState {
    fn default() -> Self {
        Self::new(0.9)
    }
}

impl MomentumState {
    pub fn new(momentum: f64) -> Self {
        Self {
            velocity: Vec::new(),
            momentum,
        }
    }

    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) -> Result<()> {
        check_pair(&params, &grads)?;
        if !(lr > 0.0) {
            return Err(Error::Input(format!("learning rate must be positive, got {lr}")));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        check_state(&self.velocity, &params)?;
        let mu = self.momentum;
        for ((p, g), vel) in params.iter_mut().zip(&grads).zip(self.velocity.iter_mut()) {
            for i in 0..p.len() {
                vel[i] = mu * vel[i] + g[i];
                p[i] -= lr * vel[i];
            }
        }
        Ok(())
    }
}

/// Cosine annealing: `base_lr · (1 + cos(π·epoch/total)) / 2`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, base_lr: f64) -> Result<f64> {
    if total_epochs == 0 || epoch > total_epochs {
        return Err(Error::Input(format!(
            "epoch {epoch} outside [0, {total_epochs}]"
        )));
    }
    let frac = epoch as f64 / total_epochs as f64;
    Ok(base_lr * (1.0 + (std::f64::consts::PI * frac).cos()) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut w = vec![1.0, -2.0, 0.5];
        let g = vec![3.0, -0.5, 1e-3];
        let mut adam = AdamState::default();
        adam.step(vec![&mut w], vec![&g], 0.1).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] - -1.9).abs() < 1e-6);
        assert!((w[2] - 0.4).abs() < 1e-4);
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut w = vec![1.0, 2.0];
        let mut adam = AdamState::default();
        adam.step(vec![&mut w], vec![&[0.0, 0.0]], 0.1).unwrap();
        assert_eq!(w, vec![1.0, 2.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_descends_quadratic() {
        // f(w) = w², oracle: w must strictly decrease toward 0 from 1.
        let mut w = vec![1.0];
        let mut adam = AdamState::default();
        let mut prev = w[0];
        for _ in 0..3 {
            let g = vec![2.0 * w[0]];
            adam.step(vec![&mut w], vec![&g], 0.1).unwrap();
            assert!(w[0] < prev);
            prev = w[0];
        }
    }

    #[test]
    fn momentum_matches_scalar_recurrence() {
        let grads = [0.3, -1.2, 0.7, 0.05, 2.0, -0.4];
        let (lr, mu) = (0.05, 0.9);
        let mut w = vec![0.25];
        let mut opt = MomentumState::new(mu);
        let (mut w_ref, mut v_ref) = (0.25f64, 0.0f64);
        for (k, &g) in grads.iter().enumerate() {
            opt.step(vec![&mut w], vec![&[g]], lr).unwrap();
            v_ref = mu * v_ref + g;
            w_ref -= lr * v_ref;
            if k == 0 {
                assert!((w[0] - (0.25 - lr * g)).abs() < 1e-15);
            }
            assert!((w[0] - w_ref).abs() < 1e-15);
        }
    }

    #[test]
    fn momentum_velocity_converges_geometrically() {
        let mut w = vec![0.0];
        let mut opt = MomentumState::new(0.9);
        for _ in 0..300 {
            opt.step(vec![&mut w], vec![&[1.0]], 1e-3).unwrap();
        }
        assert!((opt.velocity[0][0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn optimizer_shape_mismatch() {
        let mut w = vec![0.0; 3];
        let mut opt = MomentumState::default();
        assert!(opt.step(vec![&mut w], vec![&[1.0, 2.0]], 0.1).is_err());
    }

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(0, 10, 0.1).unwrap(), 0.1);
        assert!(cosine_lr(10, 10, 0.1).unwrap().abs() < 1e-17);
        assert!((cosine_lr(5, 10, 0.1).unwrap() - 0.05).abs() < 1e-15);
        assert!(cosine_lr(11, 10, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn cosine_is_non_increasing(total in 1usize..500, base in 1e-6f64..10.0) {
            let mut prev = f64::INFINITY;
            for e in 0..=total {
                let lr = cosine_lr(e, total, base).unwrap();
                prop_assert!(lr <= prev);
                prev = lr;
            }
        }
    }
}
