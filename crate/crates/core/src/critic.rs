//! The recognizability critic.
//!
//! The critic `V` scores a concatenated pair of representations
//! `[t_a ‖ t_b]` and is trained to separate two arrangements of the same
//! (training, ghost) pairs:
//!
//! * **joint**: always training-first, i.e. the arrangement conditioned on
//!   the known membership;
//! * **marginal**: training-first when `u_i = 0`, ghost-first when `u_i = 1`.
//!   With a fair, independent `u` the ordering carries no membership
//!   information, which makes these rows draws from the membership-marginal.
//!
//! Training minimizes `mean softplus(−V_joint) + mean softplus(V_marginal)`
//! ([`jsd_critic_loss`]). Afterwards `exp(V)` estimates the density ratio
//! between the two arrangements, and the encoder is regularized by a
//! Bregman divergence pulling that ratio toward 1 ([`bregman_surrogate`]).

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::SelectorMask;
use crate::error::{shape_err, Error, Result};
use crate::nn::{sigmoid, softplus, Activation, Matrix, Mlp, MlpGrads, MomentumState, Params};
use crate::rng::Rng;

/// Bregman divergence used for density-ratio matching against `R* = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BregmanKind {
    /// Binary KL: `(1+R)·ln((1+R)/2) − ln R`.
    #[default]
    #[serde(rename = "bkl", alias = "BKL")]
    Bkl,
    /// Squared distance: `(1−R)²/2`.
    #[serde(rename = "sq", alias = "SQ")]
    Sq,
    /// Unnormalized KL: `R − 1 − ln R`.
    #[serde(rename = "ukl", alias = "UKL")]
    Ukl,
}

impl BregmanKind {
    pub const ALL: [BregmanKind; 3] = [BregmanKind::Bkl, BregmanKind::Sq, BregmanKind::Ukl];
}

impl fmt::Display for BregmanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BregmanKind::Bkl => "bkl",
            BregmanKind::Sq => "sq",
            BregmanKind::Ukl => "ukl",
        })
    }
}

impl FromStr for BregmanKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bkl" => Ok(BregmanKind::Bkl),
            "sq" => Ok(BregmanKind::Sq),
            "ukl" => Ok(BregmanKind::Ukl),
            other => Err(Error::Input(format!("unknown Bregman kind {other:?}"))),
        }
    }
}

/// Divergence between `R* = 1` and `ratio`, and its derivative in `ratio`.
pub fn bregman_surrogate(ratio: f64, kind: BregmanKind) -> Result<(f64, f64)> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::Domain(format!("density ratio must be positive and finite, got {ratio}")));
    }
    let r = ratio;
    Ok(match kind {
        BregmanKind::Bkl => {
            let log_half = ((1.0 + r) / 2.0).ln();
            ((1.0 + r) * log_half - r.ln(), log_half + 1.0 - 1.0 / r)
        }
        BregmanKind::Sq => ((1.0 - r) * (1.0 - r) / 2.0, r - 1.0),
        BregmanKind::Ukl => (r - 1.0 - r.ln(), 1.0 - 1.0 / r),
    })
}

/// The same divergence parameterized by the score `V = ln R`: returns the
/// value and `d value / dV`. Evaluated without forming `1/R` or `ln R`.
pub fn bregman_from_score(score: f64, kind: BregmanKind) -> (f64, f64) {
    let v = score;
    let r = v.exp();
    match kind {
        BregmanKind::Bkl => {
            // ln((1+R)/2) = softplus(V) − ln 2
            let log_half = softplus(v) - std::f64::consts::LN_2;
            ((1.0 + r) * log_half - v, r * (log_half + 1.0) - 1.0)
        }
        BregmanKind::Sq => {
            let d = r - 1.0;
            (d * d / 2.0, d * r)
        }
        BregmanKind::Ukl => (v.exp_m1() - v, v.exp_m1()),
    }
}

/// `R = exp(V)`.
pub fn density_ratio(score: f64) -> f64 {
    score.exp()
}

/// Mean JS-style critic loss and its gradient with respect to every score.
pub fn jsd_critic_loss(joint: &[f64], marginal: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if joint.is_empty() || marginal.is_empty() {
        return Err(Error::Input("critic loss needs non-empty score vectors".into()));
    }
    let (nj, nm) = (joint.len() as f64, marginal.len() as f64);
    let loss = joint.iter().map(|&v| softplus(-v)).sum::<f64>() / nj
        + marginal.iter().map(|&v| softplus(v)).sum::<f64>() / nm;
    let gj = joint.iter().map(|&v| -sigmoid(-v) / nj).collect();
    let gm = marginal.iter().map(|&v| sigmoid(v) / nm).collect();
    Ok((loss, gj, gm))
}

/// Joint and marginal arrangements of the same pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub joint: Matrix,
    pub marginal: Matrix,
    /// `swapped[i]` is true when marginal row `i` is ghost-first.
    pub swapped: Vec<bool>,
}

pub fn arrange_pairs(t_train: &Matrix, t_ghost: &Matrix, u: &SelectorMask) -> Result<PairBatch> {
    if t_train.dim() != t_ghost.dim() {
        return shape_err(
            "arrange_pairs ghost batch",
            format!("{:?}", t_train.dim()),
            format!("{:?}", t_ghost.dim()),
        );
    }
    if u.len() != t_train.nrows() {
        return shape_err("arrange_pairs selector", t_train.nrows(), u.len());
    }
    let d = t_train.ncols();
    let joint = concatenate(Axis(1), &[t_train.view(), t_ghost.view()]).expect("matching rows");
    let mut marginal = joint.clone();
    for (i, &swap) in u.bits.iter().enumerate() {
        if swap {
            marginal.slice_mut(s![i, ..d]).assign(&t_ghost.row(i));
            marginal.slice_mut(s![i, d..]).assign(&t_train.row(i));
        }
    }
    Ok(PairBatch {
        joint,
        marginal,
        swapped: u.bits.clone(),
    })
}

/// Splits `[B × 2d]` pair gradients into the `(first, second)` halves.
pub fn split_pair_grads(grads: &Matrix) -> (Matrix, Matrix) {
    let d = grads.ncols() / 2;
    (grads.slice(s![.., ..d]).to_owned(), grads.slice(s![.., d..]).to_owned())
}

/// Log-density-ratio estimator over representation pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    net: Mlp,
}

impl Critic {
    /// LeakyReLU hidden layers, identity scalar output, input `2·rep_dim`.
    pub fn new(rep_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut widths = vec![2 * rep_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Ok(Self {
            net: Mlp::new(&widths, Activation::LeakyRelu, Activation::Identity, rng)?,
        })
    }

    pub fn from_mlp(net: Mlp) -> Result<Self> {
        if net.output_width() != 1 || net.input_width() % 2 != 0 {
            return Err(Error::Input(format!(
                "critic needs an even input width and scalar output, got {} → {}",
                net.input_width(),
                net.output_width()
            )));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn rep_dim(&self) -> usize {
        self.net.input_width() / 2
    }

    pub fn digest(&self) -> String {
        self.net.digest()
    }

    /// `V` for every pair row.
    pub fn score(&self, pairs: &Matrix) -> Result<Vec<f64>> {
        Ok(self.net.predict(pairs)?.column(0).to_vec())
    }

    /// `sigmoid(exp(V))` per row.
    pub fn decision_scores(&self, pairs: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .score(pairs)?
            .into_iter()
            .map(|v| sigmoid(density_ratio(v)))
            .collect())
    }

    /// Loss and parameter gradients of [`jsd_critic_loss`] on a pair batch.
    pub fn loss_and_grads(&self, pairs: &PairBatch) -> Result<(f64, MlpGrads)> {
        let (vj, cj) = self.net.forward(&pairs.joint)?;
        let (vm, cm) = self.net.forward(&pairs.marginal)?;
        let (loss, gj, gm) = jsd_critic_loss(&vj.column(0).to_vec(), &vm.column(0).to_vec())?;
        let (mut grads, _) = self.net.backward(&cj, &column(gj))?;
        let (gm_params, _) = self.net.backward(&cm, &column(gm))?;
        grads.accumulate(&gm_params)?;
        Ok((loss, grads))
    }

    /// One descent step on [`jsd_critic_loss`] (ascent on the critic's
    /// objective). Returns the loss before the update.
    pub fn train_step(&mut self, pairs: &PairBatch, opt: &mut MomentumState, lr: f64) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(pairs)?;
        opt.step(self.net.tensors_mut(), grads.tensors(), lr)?;
        Ok(loss)
    }

    /// Bregman regularizer on `pairs` with the critic held fixed.
    ///
    /// Returns the mean divergence over rows and its gradient with respect
    /// to every pair entry: `dD/dR · R · dV/dx / B`.
    pub fn regularizer_grad(&self, pairs: &Matrix, kind: BregmanKind) -> Result<(f64, Matrix)> {
        let (v, cache) = self.net.forward(pairs)?;
        let b = pairs.nrows() as f64;
        let mut total = 0.0;
        let mut dv = Array2::zeros((pairs.nrows(), 1));
        for (i, &score) in v.column(0).iter().enumerate() {
            let (value, slope) = bregman_from_score(score, kind);
            total += value;
            dv[[i, 0]] = slope / b;
        }
        let (_, input_grad) = self.net.backward(&cache, &dv)?;
        Ok((total / b, input_grad))
    }

    /// Gradient of [`jsd_critic_loss`] with respect to the pair inputs of
    /// both arrangements, critic held fixed. Used by adversarial training.
    pub fn loss_input_grads(&self, pairs: &PairBatch) -> Result<(f64, Matrix, Matrix)> {
        let (vj, cj) = self.net.forward(&pairs.joint)?;
        let (vm, cm) = self.net.forward(&pairs.marginal)?;
        let (loss, gj, gm) = jsd_critic_loss(&vj.column(0).to_vec(), &vm.column(0).to_vec())?;
        let (_, xj) = self.net.backward(&cj, &column(gj))?;
        let (_, xm) = self.net.backward(&cm, &column(gm))?;
        Ok((loss, xj, xm))
    }
}

fn column(values: Vec<f64>) -> Matrix {
    let n = values.len();
    Array1::from(values).into_shape_with_order((n, 1)).expect("column")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::draw_selector;
    use crate::nn::Layer;
    use crate::rng::{stream, Purpose};
    use std::f64::consts::{E, LN_2};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::Rng as _;
        let mut rng = stream(seed, Purpose::Probe);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn zero_critic(rep_dim: usize) -> Critic {
        let net = Mlp::from_layers(vec![
            Layer {
                weight: Array2::zeros((4, 2 * rep_dim)),
                bias: Array1::zeros(4),
                activation: Activation::LeakyRelu,
            },
            Layer {
                weight: Array2::zeros((1, 4)),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            },
        ])
        .unwrap();
        Critic::from_mlp(net).unwrap()
    }

    #[test]
    fn bregman_closed_forms() {
        for kind in BregmanKind::ALL {
            assert_eq!(bregman_surrogate(1.0, kind).unwrap(), (0.0, 0.0));
            let (v, d) = bregman_from_score(0.0, kind);
            assert!(v.abs() < 1e-15 && d.abs() < 1e-15, "{kind}: {v} {d}");
            assert!(matches!(bregman_surrogate(0.0, kind), Err(Error::Domain(_))));
            assert!(bregman_surrogate(-1.0, kind).is_err());
        }
        let (ukl, _) = bregman_surrogate(E, BregmanKind::Ukl).unwrap();
        assert!((ukl - (E - 2.0)).abs() < 1e-12);
        assert_eq!(bregman_surrogate(3.0, BregmanKind::Sq).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn score_parameterization_agrees_with_ratio_form() {
        for kind in BregmanKind::ALL {
            for &v in &[-4.0f64, -1.0, -0.1, 0.3, 1.0, 2.5] {
                let (a, da) = bregman_surrogate(v.exp(), kind).unwrap();
                let (b, db) = bregman_from_score(v, kind);
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{kind} {v}");
                assert!((da * v.exp() - db).abs() < 1e-10 * (1.0 + db.abs()), "{kind} {v}");
            }
        }
    }

    #[test]
    fn jsd_loss_values() {
        let (loss, gj, gm) = jsd_critic_loss(&[0.0; 5], &[0.0; 3]).unwrap();
        assert!((loss - 2.0 * LN_2).abs() < 1e-15);
        assert!(gj.iter().all(|&g| (g + 0.1).abs() < 1e-15));
        assert!(gm.iter().all(|&g| (g - 0.5 / 3.0).abs() < 1e-15));
        let (loss, _, _) = jsd_critic_loss(&[60.0, 80.0], &[-70.0]).unwrap();
        assert!(loss < 1e-25);
        assert!(jsd_critic_loss(&[], &[1.0]).is_err());

        let joint = [0.3, -1.2, 2.2, 0.01];
        let marginal = [-0.7, 1.9, 0.4];
        let (loss, _, _) = jsd_critic_loss(&joint, &marginal).unwrap();
        let sp = |x: f64| (1.0 + x.exp()).ln();
        let expect = joint.iter().map(|&v| sp(-v)).sum::<f64>() / 4.0
            + marginal.iter().map(|&v| sp(v)).sum::<f64>() / 3.0;
        assert!((loss - expect).abs() < 1e-14);
    }

    #[test]
    fn arrangement_cases() {
        let t = random_matrix(6, 3, 1);
        let g = random_matrix(6, 3, 2);
        let zeros = SelectorMask { bits: vec![false; 6], seed: 0 };
        let p = arrange_pairs(&t, &g, &zeros).unwrap();
        assert_eq!(p.joint, p.marginal);
        let ones = zeros.flipped();
        let p = arrange_pairs(&t, &g, &ones).unwrap();
        let (a, b) = split_pair_grads(&p.marginal);
        assert_eq!(a, g);
        assert_eq!(b, t);
        assert!(arrange_pairs(&t, &random_matrix(5, 3, 2), &draw_selector(6, 0).unwrap()).is_err());
        assert!(arrange_pairs(&t, &g, &draw_selector(5, 0).unwrap()).is_err());
    }

    #[test]
    fn arrangement_frequencies_are_fair() {
        let t = random_matrix(4, 2, 3);
        let g = random_matrix(4, 2, 4);
        let draws = 10_000;
        let mut swapped = [0usize; 4];
        for k in 0..draws {
            let p = arrange_pairs(&t, &g, &draw_selector(4, 1000 + k).unwrap()).unwrap();
            for (i, row) in p.marginal.outer_iter().enumerate() {
                if row[0] == g[[i, 0]] {
                    swapped[i] += 1;
                }
            }
        }
        for s in swapped {
            let f = s as f64 / draws as f64;
            assert!((f - 0.5).abs() <= 0.02, "{f}");
        }
    }

    #[test]
    fn zero_critic_is_neutral() {
        let c = zero_critic(3);
        let pairs = random_matrix(7, 6, 5);
        assert!(c.score(&pairs).unwrap().iter().all(|&v| v == 0.0));
        let (value, grad) = c.regularizer_grad(&pairs, BregmanKind::Bkl).unwrap();
        assert_eq!(value, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        let xi = c.decision_scores(&pairs).unwrap();
        assert!(xi.iter().all(|&x| (x - 0.731_058_578_630_004_9).abs() < 1e-12));
    }

    #[test]
    fn critic_score_matches_straight_line_forward() {
        let c = Critic::new(2, &[5, 3], &mut stream(9, Purpose::CriticInit)).unwrap();
        let pairs = random_matrix(4, 4, 6);
        let scores = c.score(&pairs).unwrap();
        for (row, &s) in pairs.outer_iter().zip(&scores) {
            let mut x: Vec<f64> = row.to_vec();
            for l in c.net().layers() {
                x = (0..l.output_width())
                    .map(|o| {
                        let z: f64 = (0..l.input_width()).map(|i| l.weight[[o, i]] * x[i]).sum::<f64>() + l.bias[o];
                        l.activation.eval(z)
                    })
                    .collect();
            }
            assert!((x[0] - s).abs() < 1e-12);
        }
        assert_eq!(scores, c.score(&pairs).unwrap());
    }

    #[test]
    fn regularizer_batch_mean_is_row_average() {
        let c = Critic::new(2, &[6], &mut stream(2, Purpose::CriticInit)).unwrap();
        let pairs = random_matrix(5, 4, 8);
        let (mean, _) = c.regularizer_grad(&pairs, BregmanKind::Sq).unwrap();
        let per_row: f64 = (0..5)
            .map(|i| c.regularizer_grad(&pairs.slice(s![i..i + 1, ..]).to_owned(), BregmanKind::Sq).unwrap().0)
            .sum::<f64>()
            / 5.0;
        assert!((mean - per_row).abs() < 1e-14);
    }

    #[test]
    fn decision_scores_preserve_order() {
        let c = Critic::new(2, &[8], &mut stream(4, Purpose::CriticInit)).unwrap();
        let pairs = random_matrix(30, 4, 9);
        let v = c.score(&pairs).unwrap();
        let xi = c.decision_scores(&pairs).unwrap();
        for i in 0..30 {
            assert!(xi[i] > 0.5 && xi[i] < 1.0);
            for j in 0..30 {
                if v[i] < v[j] {
                    assert!(xi[i] <= xi[j]);
                }
            }
        }
    }
}
