//! Post-hoc recognizability of a frozen encoder.
//!
//! Fresh critics are fitted on representation pairs `(t(train_i), t(partner_i))`
//! by k-fold cross-fitting: each fold is scored by a critic fitted on the
//! other folds. Joint arrangements are positives, randomly swapped
//! arrangements are negatives.
//!
//! With few pairs a critic on the raw representation rarely learns
//! anything; [`ProbeInput::Confidence`] instead feeds it the classifier's
//! top-class probability, itself a function of the representation.

use ndarray::{concatenate, s, Array1, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::roc::{recognizability_report, RecognizabilityReport};
use crate::critic::{arrange_pairs, jsd_critic_loss, Critic, PairBatch};
use crate::data::{permutation, SelectorMask, Standardizer};
use crate::error::{shape_err, Error, Result};
use crate::nn::{cosine_lr, Activation, Matrix, Mlp, MomentumState, Params};
use crate::rng::{self, Purpose};
use crate::train::{ClassifierHead, Encoder};

/// Form of the probe critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeArchitecture {
    /// One MLP on the concatenated pair, like the training critic.
    #[default]
    Pair,
    /// `g(first) − g(second)` for a shared MLP `g` on single
    /// representations.
    Difference,
}

/// What the probe critic sees of each instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeInput {
    /// The encoder output.
    #[default]
    Representation,
    /// Largest softmax probability of the classifier head on the
    /// representation.
    Confidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub input: ProbeInput,
    pub architecture: ProbeArchitecture,
    pub hidden: Vec<usize>,
    /// Upper bound on the pairs used.
    pub max_pairs: usize,
    /// Cross-fitting folds.
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Random re-pairings of the evaluation rows; each contributes one
    /// joint and one swapped score per row.
    pub negative_draws: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            input: ProbeInput::Representation,
            architecture: ProbeArchitecture::Pair,
            hidden: vec![64, 64],
            max_pairs: 200,
            folds: 5,
            epochs: 100,
            batch_size: 32,
            lr: 1e-2,
            momentum: 0.9,
            negative_draws: 5,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.max_pairs < 2 * self.folds {
            return Err(Error::Config(format!(
                "need folds >= 2 and max_pairs >= 2 * folds, got {} folds over {} pairs",
                self.folds, self.max_pairs
            )));
        }
        if self.max_pairs < 4 || self.epochs == 0 || self.batch_size < 2 || self.negative_draws == 0 {
            return Err(Error::Config(
                "probe needs max_pairs >= 4, epochs >= 1, batch_size >= 2, negative_draws >= 1".into(),
            ));
        }
        if !(self.lr > 0.0) || self.hidden.contains(&0) {
            return Err(Error::Config("probe lr and widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub report: RecognizabilityReport,
    /// Pairs scored across all folds.
    pub pairs: usize,
    pub folds: usize,
    /// Mean over folds of the critic loss at the last epoch.
    pub final_fit_loss: f64,
}

/// Encodes both sets with `encoder`, maps them to the configured probe
/// input and probes the result.
pub fn measure_recognizability(
    encoder: &Encoder,
    head: &ClassifierHead,
    train_x: &Matrix,
    partner_x: &Matrix,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    let features = |x: &Matrix| -> Result<Matrix> {
        let t = encoder.encode(x)?;
        match config.input {
            ProbeInput::Representation => Ok(t),
            ProbeInput::Confidence => Ok(top_probability(&head.0.predict(&t)?)),
        }
    };
    probe_representations(&features(train_x)?, &features(partner_x)?, config)
}

/// Row-wise largest softmax probability, as a column.
fn top_probability(logits: &Matrix) -> Matrix {
    let p: Vec<f64> = logits
        .outer_iter()
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            1.0 / row.iter().map(|v| (v - m).exp()).sum::<f64>()
        })
        .collect();
    column(&p)
}

/// Fits a critic on aligned representation pairs and reports the
/// recognizability of its scores on held-out pairs.
pub fn probe_representations(t_train: &Matrix, t_partner: &Matrix, config: &ProbeConfig) -> Result<ProbeResult> {
    config.validate()?;
    if t_train.dim() != t_partner.dim() {
        return shape_err(
            "probe partner representations",
            format!("{:?}", t_train.dim()),
            format!("{:?}", t_partner.dim()),
        );
    }
    let m = t_train.nrows().min(config.max_pairs);
    if m < 2 * config.folds {
        return Err(Error::Input(format!(
            "probe needs at least {} pairs for {} folds, got {m}",
            2 * config.folds,
            config.folds
        )));
    }
    let order = permutation(t_train.nrows(), config.seed);
    let used = &order[..m];
    let mut pos = Vec::with_capacity(m * config.negative_draws);
    let mut neg = Vec::with_capacity(m * config.negative_draws);
    let mut loss_sum = 0.0;
    for fold in 0..config.folds {
        let (lo, hi) = (fold * m / config.folds, (fold + 1) * m / config.folds);
        let eval_idx = &used[lo..hi];
        let fit_idx: Vec<usize> = used[..lo].iter().chain(&used[hi..]).copied().collect();
        let fold_seed = rng::derive_seed(config.seed, fold as u64);
        let (loss, p, n) = fit_and_score(t_train, t_partner, &fit_idx, eval_idx, fold_seed, config)?;
        loss_sum += loss;
        // Critics of different folds have different offsets; centering on
        // the mean of all scores of the fold (positives and negatives in
        // equal number) makes them comparable before pooling.
        let centre = (p.iter().sum::<f64>() + n.iter().sum::<f64>()) / (p.len() + n.len()) as f64;
        pos.extend(p.iter().map(|v| v - centre));
        neg.extend(n.iter().map(|v| v - centre));
    }
    Ok(ProbeResult {
        report: recognizability_report(&pos, &neg)?,
        pairs: m,
        folds: config.folds,
        final_fit_loss: loss_sum / config.folds as f64,
    })
}

enum ProbeCritic {
    Pair(Critic),
    Difference(Mlp),
}

fn column(values: &[f64]) -> Matrix {
    Array1::from(values.to_vec()).insert_axis(Axis(1))
}

impl ProbeCritic {
    fn new(config: &ProbeConfig, rep_dim: usize, seed: u64) -> Result<Self> {
        let mut init = rng::stream(seed, Purpose::Probe);
        Ok(match config.architecture {
            ProbeArchitecture::Pair => ProbeCritic::Pair(Critic::new(rep_dim, &config.hidden, &mut init)?),
            ProbeArchitecture::Difference => {
                let mut widths = vec![rep_dim];
                widths.extend_from_slice(&config.hidden);
                widths.push(1);
                ProbeCritic::Difference(Mlp::new(&widths, Activation::LeakyRelu, Activation::Identity, &mut init)?)
            }
        })
    }

    fn score(&self, pairs: &Matrix) -> Result<Vec<f64>> {
        match self {
            ProbeCritic::Pair(c) => c.score(pairs),
            ProbeCritic::Difference(g) => {
                let d = pairs.ncols() / 2;
                let first = g.predict(&pairs.slice(s![.., ..d]).to_owned())?;
                let second = g.predict(&pairs.slice(s![.., d..]).to_owned())?;
                Ok((first - second).column(0).to_vec())
            }
        }
    }

    fn train_step(&mut self, pairs: &PairBatch, opt: &mut MomentumState, lr: f64) -> Result<f64> {
        let g = match self {
            ProbeCritic::Pair(c) => return c.train_step(pairs, opt, lr),
            ProbeCritic::Difference(g) => g,
        };
        let d = pairs.joint.ncols() / 2;
        let halves = |m: &Matrix| -> Result<_> {
            let (a, ca) = g.forward(&m.slice(s![.., ..d]).to_owned())?;
            let (b, cb) = g.forward(&m.slice(s![.., d..]).to_owned())?;
            Ok(((a - b).column(0).to_vec(), ca, cb))
        };
        let (vj, cja, cjb) = halves(&pairs.joint)?;
        let (vm, cma, cmb) = halves(&pairs.marginal)?;
        let (loss, gj, gm) = jsd_critic_loss(&vj, &vm)?;
        let (gj, gm) = (column(&gj), column(&gm));
        let (mut grads, _) = g.backward(&cja, &gj)?;
        grads.accumulate(&g.backward(&cjb, &-&gj)?.0)?;
        grads.accumulate(&g.backward(&cma, &gm)?.0)?;
        grads.accumulate(&g.backward(&cmb, &-&gm)?.0)?;
        opt.step(g.tensors_mut(), grads.tensors(), lr)?;
        Ok(loss)
    }
}

/// Fits one critic on `fit_idx` and returns its final loss with the
/// positive and negative scores of `eval_idx`.
fn fit_and_score(
    t_train: &Matrix,
    t_partner: &Matrix,
    fit_idx: &[usize],
    eval_idx: &[usize],
    seed: u64,
    config: &ProbeConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let stacked = concatenate(
        Axis(0),
        &[t_train.select(Axis(0), fit_idx).view(), t_partner.select(Axis(0), fit_idx).view()],
    )
    .expect("same width");
    let scaler = Standardizer::fit(&stacked)?;
    let a = scaler.apply(t_train)?;
    let b = scaler.apply(t_partner)?;

    let mut critic = ProbeCritic::new(config, a.ncols(), seed)?;
    let mut opt = MomentumState::new(config.momentum);
    let mut bits = rng::substream(seed, Purpose::PairSelector, 1);
    let mut shuffle = rng::substream(seed, Purpose::Batching, 1);
    // Training rows and partners are shuffled independently every epoch,
    // as ghost batches are drawn independently of training batches.
    let mut first: Vec<usize> = fit_idx.to_vec();
    let mut second: Vec<usize> = fit_idx.to_vec();
    let mut final_fit_loss = f64::NAN;
    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr)?;
        first.shuffle(&mut shuffle);
        second.shuffle(&mut shuffle);
        let (mut sum, mut steps) = (0.0, 0usize);
        for (ca, cb) in first.chunks(config.batch_size).zip(second.chunks(config.batch_size)) {
            if ca.len() < 2 {
                continue;
            }
            let u = SelectorMask {
                bits: (0..ca.len()).map(|_| bits.random::<bool>()).collect(),
                seed,
            };
            let pairs = arrange_pairs(&a.select(Axis(0), ca), &b.select(Axis(0), cb), &u)?;
            sum += critic.train_step(&pairs, &mut opt, lr)?;
            steps += 1;
        }
        final_fit_loss = sum / steps.max(1) as f64;
        if !final_fit_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: format!("probe critic loss is {final_fit_loss}"),
            });
        }
    }

    // Every draw pairs the held-out rows afresh: positives are the joint
    // arrangement of one pairing, negatives the swapped arrangement of another.
    let mut eval_rng = rng::substream(seed, Purpose::PairSelector, 2);
    let ea = a.select(Axis(0), eval_idx);
    let mut pos = Vec::with_capacity(eval_idx.len() * config.negative_draws);
    let mut neg = Vec::with_capacity(eval_idx.len() * config.negative_draws);
    let mut partner: Vec<usize> = eval_idx.to_vec();
    for draw in 0..config.negative_draws {
        if draw > 0 {
            partner.shuffle(&mut eval_rng);
        }
        let eb = b.select(Axis(0), &partner);
        let aligned = SelectorMask { bits: vec![false; ea.nrows()], seed };
        pos.extend(critic.score(&arrange_pairs(&ea, &eb, &aligned)?.joint)?);
        partner.shuffle(&mut eval_rng);
        let eb = b.select(Axis(0), &partner);
        let u = SelectorMask {
            bits: (0..ea.nrows()).map(|_| eval_rng.random::<bool>()).collect(),
            seed,
        };
        neg.extend(critic.score(&arrange_pairs(&ea, &eb, &u)?.marginal)?);
    }
    Ok((final_fit_loss, pos, neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn gaussian(rows: usize, cols: usize, seed: u64, shift: f64) -> Matrix {
        use rand_distr::{Distribution, StandardNormal};
        let mut r = rng::stream(seed, Purpose::Dataset);
        Array2::from_shape_fn((rows, cols), |_| {
            let z: f64 = StandardNormal.sample(&mut r);
            z + shift
        })
    }

    #[test]
    fn separable_pairs_are_recognized() {
        // training representations sit at +2, partners at −2
        let cfg = ProbeConfig { max_pairs: 400, epochs: 30, ..ProbeConfig::default() };
        let res = probe_representations(&gaussian(400, 3, 1, 2.0), &gaussian(400, 3, 2, -2.0), &cfg).unwrap();
        // about half of the negatives are unswapped copies, capping ℜ near 0.5
        assert!(res.report.recognizability > 0.4, "{}", res.report.recognizability);
        assert!(res.report.recognizability < 0.6);
    }

    #[test]
    fn identical_distributions_are_not() {
        let cfg = ProbeConfig { max_pairs: 400, epochs: 30, ..ProbeConfig::default() };
        let res = probe_representations(&gaussian(400, 3, 3, 0.0), &gaussian(400, 3, 4, 0.0), &cfg).unwrap();
        assert!(res.report.recognizability < 0.15, "{}", res.report.recognizability);
    }

    #[test]
    fn difference_critic_recognizes_and_abstains() {
        let cfg = ProbeConfig {
            architecture: ProbeArchitecture::Difference,
            max_pairs: 400,
            epochs: 30,
            ..ProbeConfig::default()
        };
        let apart = probe_representations(&gaussian(400, 3, 1, 2.0), &gaussian(400, 3, 2, -2.0), &cfg).unwrap();
        assert!(apart.report.recognizability > 0.4, "{}", apart.report.recognizability);
        let same = probe_representations(&gaussian(400, 3, 3, 0.0), &gaussian(400, 3, 4, 0.0), &cfg).unwrap();
        assert!(same.report.recognizability < 0.15, "{}", same.report.recognizability);
    }

    #[test]
    fn top_probability_of_logits() {
        let p = top_probability(&ndarray::array![[0.0, 0.0, 0.0, 0.0], [800.0, 0.0, -5.0, 1.0], [2.0f64.ln(), 0.0, 0.0, 0.0]]);
        assert_eq!(p.dim(), (3, 1));
        assert!((p[[0, 0]] - 0.25).abs() < 1e-15);
        assert_eq!(p[[1, 0]], 1.0);
        assert!((p[[2, 0]] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let cfg = ProbeConfig::default();
        assert!(probe_representations(&gaussian(10, 3, 1, 0.0), &gaussian(10, 2, 1, 0.0), &cfg).is_err());
        assert!(probe_representations(&gaussian(3, 2, 1, 0.0), &gaussian(3, 2, 1, 0.0), &cfg).is_err());
        let bad = ProbeConfig { folds: 1, ..ProbeConfig::default() };
        assert!(bad.validate().is_err());
    }
}
