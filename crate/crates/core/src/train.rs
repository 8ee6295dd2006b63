//! Training loops: cross-entropy (optionally with L2), the RIB objective
//! with a density-ratio-matching regularizer, and its adversarial variant.
//!
//! Every step follows the same pipeline:
//!
//! 1. sample a training mini-batch, a ghost mini-batch of the same size and
//!    one fair selector bit per row;
//! 2. encode both batches;
//! 3. arrange representation pairs and take one momentum-SGD step on the
//!    critic loss (critic parameters only);
//! 4. take one Adam step on encoder and head for
//!    `CE + β · regularizer`, with the critic held fixed.
//!
//! When a ghost set is supplied the critic is trained for every objective,
//! including plain cross-entropy, where it only monitors recognizability.
//! With `β = 0` the regularizer is skipped entirely, so RIB, RIB-adv and CE
//! follow the same parameter trajectory for the same seed.

use std::fmt;
use std::time::Instant;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::critic::{arrange_pairs, bregman_from_score, split_pair_grads, BregmanKind, Critic, PairBatch};
use crate::data::{GhostSet, LabeledDataset, SelectorMask};
use crate::error::{Error, Result};
use crate::nn::{
    cosine_lr, softmax_cross_entropy, Activation, AdamState, ForwardCache, Matrix, Mlp, MlpGrads,
    MomentumState, Params,
};
use crate::rng::{self, Purpose};

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Ce,
    CeL2,
    Rib,
    RibAdv,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Ce => "ce",
            Objective::CeL2 => "ce_l2",
            Objective::Rib => "rib",
            Objective::RibAdv => "rib_adv",
        })
    }
}

/// Default L2 strength of the `ce_l2` baseline.
pub const DEFAULT_L2: f64 = 1e-4;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden widths of the encoder.
    pub encoder_hidden: Vec<usize>,
    /// Width of the representation `T`.
    pub rep_dim: usize,
    pub encoder_activation: Activation,
    /// Nonlinearity on the representation layer.
    pub rep_activation: Activation,
    /// Hidden widths of the critic.
    pub critic_hidden: Vec<usize>,
    pub objective: Objective,
    pub beta: f64,
    pub bregman: BregmanKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam learning rate of encoder and head.
    pub base_lr: f64,
    /// Momentum-SGD learning rate of the critic.
    pub critic_lr: f64,
    pub critic_momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// L2 strength; `None` means 1e-4 for `ce_l2` and 0 otherwise.
    pub weight_decay: Option<f64>,
    pub critic_steps_per_encoder_step: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![256],
            rep_dim: 64,
            encoder_activation: Activation::Relu,
            rep_activation: Activation::Identity,
            critic_hidden: vec![256, 256, 256],
            objective: Objective::Ce,
            beta: 1.0,
            bregman: BregmanKind::Bkl,
            epochs: 100,
            batch_size: 128,
            base_lr: 1e-3,
            critic_lr: 1e-3,
            critic_momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            weight_decay: None,
            critic_steps_per_encoder_step: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.rep_dim == 0 || self.encoder_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.base_lr > 0.0) || !(self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.critic_steps_per_encoder_step == 0 {
            return bad("critic_steps_per_encoder_step must be >= 1".into());
        }
        if let Some(wd) = self.weight_decay {
            if !(wd >= 0.0) {
                return bad(format!("weight_decay must be >= 0, got {wd}"));
            }
        }
        Ok(())
    }

    pub fn effective_weight_decay(&self) -> f64 {
        match (self.weight_decay, self.objective) {
            (Some(wd), _) => wd,
            (None, Objective::CeL2) => DEFAULT_L2,
            (None, _) => 0.0,
        }
    }

    /// Whether the encoder update reads the critic.
    pub fn regularized(&self) -> bool {
        matches!(self.objective, Objective::Rib | Objective::RibAdv) && self.beta > 0.0
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Maps inputs to representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder(pub Mlp);

/// Linear map from representations to class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead(pub Mlp);

impl Encoder {
    pub fn new(input_dim: usize, config: &TrainConfig, rng: &mut rng::Rng) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&config.encoder_hidden);
        widths.push(config.rep_dim);
        Ok(Self(Mlp::new(
            &widths,
            config.encoder_activation,
            config.rep_activation,
            rng,
        )?))
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        predict_chunked(&self.0, x)
    }
}

impl ClassifierHead {
    pub fn new(rep_dim: usize, num_classes: usize, rng: &mut rng::Rng) -> Result<Self> {
        Ok(Self(Mlp::new(
            &[rep_dim, num_classes],
            Activation::Identity,
            Activation::Identity,
            rng,
        )?))
    }

    /// Argmax class per representation row.
    pub fn predict_labels(&self, t: &Matrix) -> Result<Vec<usize>> {
        let logits = predict_chunked(&self.0, t)?;
        Ok(logits.outer_iter().map(|row| argmax(row.iter().copied())).collect())
    }
}

const EVAL_CHUNK: usize = 2048;

fn predict_chunked(net: &Mlp, x: &Matrix) -> Result<Matrix> {
    if x.nrows() <= EVAL_CHUNK {
        return net.predict(x);
    }
    let parts = x
        .axis_chunks_iter(Axis(0), EVAL_CHUNK)
        .map(|c| net.predict(&c.to_owned()))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(ndarray::concatenate(Axis(0), &views).expect("same width"))
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// 0-1 error and mean cross-entropy over `dataset`. No state is mutated.
pub fn evaluate(encoder: &Encoder, head: &ClassifierHead, dataset: &LabeledDataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let t = encoder.encode(dataset.features())?;
    let logits = predict_chunked(&head.0, &t)?;
    let (loss, _) = softmax_cross_entropy(&logits, dataset.labels())?;
    let wrong = logits
        .outer_iter()
        .zip(dataset.labels())
        .filter(|(row, &y)| argmax(row.iter().copied()) != y)
        .count();
    Ok((wrong as f64 / dataset.len() as f64, loss))
}

/// Metrics logged at the end of every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_err: f64,
    pub test_err: Option<f64>,
    pub emp_risk: f64,
    /// Mean critic loss over the epoch's steps.
    pub critic_loss: Option<f64>,
    /// Mean Bregman value of the joint arrangement over the epoch's steps.
    pub mean_bregman: Option<f64>,
}

/// Values summarizing the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub encoder_digest: String,
    pub head_digest: String,
    pub critic_digest: Option<String>,
    pub train_err: f64,
    pub test_err: Option<f64>,
    pub emp_risk: f64,
    pub test_risk: Option<f64>,
    /// `test_err − train_err`.
    pub gap: Option<f64>,
    pub recognizability: Option<f64>,
    /// Plug-in f-CMI estimate (mean per-index nats) of the protocol this run belonged to.
    pub fcmi: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_secs: f64,
}

/// Full log of one run.
///
/// Equality ignores `timing`: two runs of the same configuration compare
/// equal even though their wall times differ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config_digest: String,
    pub seed: u64,
    pub objective: Objective,
    pub beta: f64,
    pub n_train: usize,
    pub epochs: Vec<EpochMetrics>,
    pub final_metrics: FinalMetrics,
    pub timing: Timing,
}

impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.run_id == other.run_id
            && self.config_digest == other.config_digest
            && self.seed == other.seed
            && self.objective == other.objective
            && self.beta.to_bits() == other.beta.to_bits()
            && self.n_train == other.n_train
            && self.epochs == other.epochs
            && self.final_metrics == other.final_metrics
    }
}

/// Column order of [`RunRecord::metrics_csv`].
pub const METRICS_CSV_HEADER: [&str; 7] = [
    "epoch",
    "lr",
    "train_err",
    "test_err",
    "emp_risk",
    "critic_loss",
    "mean_bregman",
];

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRecord {
    /// Per-epoch metrics as CSV text; absent values are empty fields.
    pub fn metrics_csv(&self) -> String {
        let mut out = METRICS_CSV_HEADER.join(",");
        out.push('\n');
        for m in &self.epochs {
            let fields = [
                m.epoch.to_string(),
                m.lr.to_string(),
                m.train_err.to_string(),
                opt_field(m.test_err),
                m.emp_risk.to_string(),
                opt_field(m.critic_loss),
                opt_field(m.mean_bregman),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Data a run trains and reports on.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a LabeledDataset,
    pub ghost: Option<&'a GhostSet>,
    pub test: Option<&'a LabeledDataset>,
}

/// Parameters and log of a finished run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    pub head: ClassifierHead,
    pub critic: Option<Critic>,
    pub record: RunRecord,
}

/// State of the model at the end of an epoch, passed to observers.
pub struct EpochSnapshot<'a> {
    pub epoch: usize,
    pub encoder: &'a Encoder,
    pub head: &'a ClassifierHead,
    pub critic: Option<&'a Critic>,
    pub metrics: &'a EpochMetrics,
}

/// Forward quantities of one step, shared by the critic and encoder updates.
pub struct StepForward {
    train_idx: Vec<usize>,
    t: Matrix,
    enc_cache: ForwardCache,
    ghost: Option<(Matrix, ForwardCache)>,
    pairs: Option<PairBatch>,
}

impl StepForward {
    pub fn representations(&self) -> &Matrix {
        &self.t
    }

    pub fn pairs(&self) -> Option<&PairBatch> {
        self.pairs.as_ref()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub ce: f64,
    pub critic_loss: Option<f64>,
    pub bregman: Option<f64>,
}

/// Cycles through a ghost set in freshly shuffled passes.
struct GhostSampler {
    order: Vec<usize>,
    pos: usize,
    pass: u64,
    seed: u64,
}

impl GhostSampler {
    fn new(len: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..len).collect(),
            pos: 0,
            pass: 0,
            seed,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.sort_unstable();
        self.order
            .shuffle(&mut rng::substream(self.seed, Purpose::Ghost, self.pass));
        self.pass += 1;
        self.pos = 0;
    }

    fn take(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.pos == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Stateful training loop; [`train`] drives it to completion.
pub struct Trainer<'a> {
    config: TrainConfig,
    data: TrainData<'a>,
    encoder: Encoder,
    head: ClassifierHead,
    critic: Option<Critic>,
    adam: AdamState,
    critic_opt: MomentumState,
    ghost_sampler: Option<GhostSampler>,
    pair_rng: rng::Rng,
    weight_decay: f64,
    epoch: usize,
    history: Vec<EpochMetrics>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &TrainConfig, data: TrainData<'a>) -> Result<Self> {
        config.validate()?;
        if data.train.len() < 2 {
            return Err(Error::Config("training set needs at least two rows".into()));
        }
        let needs_ghost = matches!(config.objective, Objective::Rib | Objective::RibAdv);
        if needs_ghost && data.ghost.is_none() {
            return Err(Error::Config(format!(
                "objective {} requires a ghost set",
                config.objective
            )));
        }
        if let Some(g) = data.ghost {
            if g.dim() != data.train.dim() {
                return Err(Error::Config(format!(
                    "ghost feature width {} does not match training width {}",
                    g.dim(),
                    data.train.dim()
                )));
            }
            if g.is_empty() {
                return Err(Error::Config("ghost set is empty".into()));
            }
        }
        if let Some(t) = data.test {
            if t.dim() != data.train.dim() {
                return Err(Error::Config("test feature width does not match training width".into()));
            }
        }

        let seed = config.seed;
        let mut init = rng::stream(seed, Purpose::EncoderInit);
        let encoder = Encoder::new(data.train.dim(), config, &mut init)?;
        let head = ClassifierHead::new(config.rep_dim, data.train.num_classes(), &mut init)?;
        let critic = match data.ghost {
            Some(_) => Some(Critic::new(
                config.rep_dim,
                &config.critic_hidden,
                &mut rng::stream(seed, Purpose::CriticInit),
            )?),
            None => None,
        };
        Ok(Self {
            config: config.clone(),
            data,
            encoder,
            head,
            critic,
            adam: AdamState::new(config.adam_beta1, config.adam_beta2, 1e-8),
            critic_opt: MomentumState::new(config.critic_momentum),
            ghost_sampler: data.ghost.map(|g| GhostSampler::new(g.len(), seed)),
            pair_rng: rng::stream(seed, Purpose::PairSelector),
            weight_decay: config.effective_weight_decay(),
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    pub fn critic(&self) -> Option<&Critic> {
        self.critic.as_ref()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Encodes a training batch and, when a critic exists, a ghost batch of
    /// the same size plus one selector bit per row.
    pub fn forward_step(&mut self, train_idx: &[usize]) -> Result<StepForward> {
        let x = self.data.train.features().select(Axis(0), train_idx);
        let (t, enc_cache) = self.encoder.0.forward(&x)?;
        let (ghost, pairs) = match (self.data.ghost, self.ghost_sampler.as_mut()) {
            (Some(g), Some(sampler)) => {
                let gidx = sampler.take(train_idx.len());
                let gx = g.features.select(Axis(0), &gidx);
                let (tg, gcache) = self.encoder.0.forward(&gx)?;
                let u = SelectorMask {
                    bits: (0..train_idx.len()).map(|_| self.pair_rng.random::<bool>()).collect(),
                    seed: self.config.seed,
                };
                let pairs = arrange_pairs(&t, &tg, &u)?;
                (Some((tg, gcache)), Some(pairs))
            }
            _ => (None, None),
        };
        Ok(StepForward {
            train_idx: train_idx.to_vec(),
            t,
            enc_cache,
            ghost,
            pairs,
        })
    }

    /// Critic descent step(s) on the step's pairs; `None` without a critic.
    pub fn update_critic(&mut self, fwd: &StepForward, lr: f64) -> Result<Option<f64>> {
        let (Some(critic), Some(pairs)) = (self.critic.as_mut(), fwd.pairs.as_ref()) else {
            return Ok(None);
        };
        let mut loss = 0.0;
        for _ in 0..self.config.critic_steps_per_encoder_step {
            loss = critic.train_step(pairs, &mut self.critic_opt, lr)?;
        }
        Ok(Some(loss))
    }

    /// One Adam step on encoder and head. The critic is only read.
    pub fn update_encoder(&mut self, fwd: &StepForward, lr: f64) -> Result<StepStats> {
        let labels: Vec<usize> = fwd.train_idx.iter().map(|&i| self.data.train.labels()[i]).collect();
        let (logits, head_cache) = self.head.0.forward(&fwd.t)?;
        let (ce, dlogits) = softmax_cross_entropy(&logits, &labels)?;
        let (mut head_grads, mut dt) = self.head.0.backward(&head_cache, &dlogits)?;

        let beta = self.config.beta;
        let mut ghost_grad: Option<Matrix> = None;
        let mut bregman = None;
        if let (Some(critic), Some(pairs)) = (self.critic.as_ref(), fwd.pairs.as_ref()) {
            if self.config.regularized() {
                match self.config.objective {
                    Objective::Rib => {
                        let (value, g) = critic.regularizer_grad(&pairs.joint, self.config.bregman)?;
                        let (g_train, g_ghost) = split_pair_grads(&g);
                        dt.scaled_add(beta, &g_train);
                        ghost_grad = Some(g_ghost * beta);
                        bregman = Some(value);
                    }
                    Objective::RibAdv => {
                        // The encoder minimizes the critic's objective, i.e.
                        // ascends the critic loss.
                        let (_, xj, xm) = critic.loss_input_grads(pairs)?;
                        let (j_train, j_ghost) = split_pair_grads(&xj);
                        let (m_first, m_second) = split_pair_grads(&xm);
                        let mut g_train = j_train;
                        let mut g_ghost = j_ghost;
                        for (i, &swap) in pairs.swapped.iter().enumerate() {
                            let (to_train, to_ghost) = if swap {
                                (m_second.row(i), m_first.row(i))
                            } else {
                                (m_first.row(i), m_second.row(i))
                            };
                            let mut r = g_train.row_mut(i);
                            r += &to_train;
                            let mut r = g_ghost.row_mut(i);
                            r += &to_ghost;
                        }
                        dt.scaled_add(-beta, &g_train);
                        ghost_grad = Some(g_ghost * -beta);
                        bregman = Some(mean_bregman(critic, &pairs.joint, self.config.bregman)?);
                    }
                    Objective::Ce | Objective::CeL2 => unreachable!("regularized() excludes CE"),
                }
            } else {
                bregman = Some(mean_bregman(critic, &pairs.joint, self.config.bregman)?);
            }
        }

        let (mut enc_grads, _) = self.encoder.0.backward(&fwd.enc_cache, &dt)?;
        if let (Some(g), Some((_, gcache))) = (ghost_grad, fwd.ghost.as_ref()) {
            let (ghost_enc_grads, _) = self.encoder.0.backward(gcache, &g)?;
            enc_grads.accumulate(&ghost_enc_grads)?;
        }
        enc_grads.add_weight_decay(&self.encoder.0, self.weight_decay);
        head_grads.add_weight_decay(&self.head.0, self.weight_decay);
        self.apply_adam(&enc_grads, &head_grads, lr)?;
        Ok(StepStats {
            ce,
            critic_loss: None,
            bregman,
        })
    }

    fn apply_adam(&mut self, enc: &MlpGrads, head: &MlpGrads, lr: f64) -> Result<()> {
        let mut params = self.encoder.0.tensors_mut();
        params.extend(self.head.0.tensors_mut());
        let mut grads = enc.tensors();
        grads.extend(head.tensors());
        self.adam.step(params, grads, lr)
    }

    /// Runs one epoch and logs its metrics.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.epoch;
        let total = self.config.epochs;
        let lr = cosine_lr(epoch, total, self.config.base_lr)?;
        let critic_lr = cosine_lr(epoch, total, self.config.critic_lr)?;

        let mut order: Vec<usize> = (0..self.data.train.len()).collect();
        order.shuffle(&mut rng::substream(self.config.seed, Purpose::Batching, epoch as u64));

        let diverged = |reason: String| Error::Divergence { epoch, reason };
        let (mut critic_sum, mut breg_sum, mut steps) = (0.0, 0.0, 0usize);
        for batch in order.chunks(self.config.batch_size) {
            let fwd = self.forward_step(batch)?;
            let critic_loss = self.update_critic(&fwd, lr_or(critic_lr))?;
            let stats = self.update_encoder(&fwd, lr_or(lr))?;
            if !stats.ce.is_finite() {
                return Err(diverged(format!("cross-entropy is {}", stats.ce)));
            }
            if let Some(c) = critic_loss {
                if !c.is_finite() {
                    return Err(diverged(format!("critic loss is {c}")));
                }
                critic_sum += c;
            }
            if let Some(b) = stats.bregman {
                if !b.is_finite() {
                    return Err(diverged(format!("Bregman regularizer is {b}")));
                }
                breg_sum += b;
            }
            steps += 1;
        }

        let (train_err, emp_risk) = evaluate(&self.encoder, &self.head, self.data.train)?;
        if !emp_risk.is_finite() {
            return Err(diverged(format!("empirical risk is {emp_risk}")));
        }
        let test_err = match self.data.test {
            Some(t) => Some(evaluate(&self.encoder, &self.head, t)?.0),
            None => None,
        };
        let has_critic = self.critic.is_some();
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_err,
            test_err,
            emp_risk,
            critic_loss: has_critic.then(|| critic_sum / steps as f64),
            mean_bregman: has_critic.then(|| breg_sum / steps as f64),
        };
        self.history.push(metrics.clone());
        self.epoch += 1;
        Ok(metrics)
    }

    /// Consumes the trainer once all epochs ran.
    pub fn finish(self, started: Instant) -> Result<TrainOutcome> {
        let last = self
            .history
            .last()
            .cloned()
            .ok_or_else(|| Error::Config("no epoch has run".into()))?;
        let (test_err, test_risk) = match self.data.test {
            Some(t) => {
                let (e, r) = evaluate(&self.encoder, &self.head, t)?;
                (Some(e), Some(r))
            }
            None => (None, None),
        };
        let final_metrics = FinalMetrics {
            encoder_digest: self.encoder.0.digest(),
            head_digest: self.head.0.digest(),
            critic_digest: self.critic.as_ref().map(Critic::digest),
            train_err: last.train_err,
            test_err,
            emp_risk: last.emp_risk,
            test_risk,
            gap: test_err.map(|e| e - last.train_err),
            recognizability: None,
            fcmi: None,
        };
        let record = RunRecord {
            run_id: "run".into(),
            config_digest: self.config.digest(),
            seed: self.config.seed,
            objective: self.config.objective,
            beta: self.config.beta,
            n_train: self.data.train.len(),
            epochs: self.history,
            final_metrics,
            timing: Timing {
                wall_time_secs: started.elapsed().as_secs_f64(),
            },
        };
        Ok(TrainOutcome {
            encoder: self.encoder,
            head: self.head,
            critic: self.critic,
            record,
        })
    }
}

// The cosine schedule reaches exactly 0 only at `epoch == total`, which the
// loop never visits; guard anyway so optimizers never see lr = 0.
fn lr_or(lr: f64) -> f64 {
    if lr > 0.0 {
        lr
    } else {
        f64::MIN_POSITIVE
    }
}

fn mean_bregman(critic: &Critic, joint: &Matrix, kind: BregmanKind) -> Result<f64> {
    let scores = critic.score(joint)?;
    Ok(scores.iter().map(|&v| bregman_from_score(v, kind).0).sum::<f64>() / scores.len() as f64)
}

/// Runs `config` to completion, calling `observer` after every epoch.
pub fn train_with_observer(
    config: &TrainConfig,
    data: TrainData<'_>,
    observer: &mut dyn FnMut(&EpochSnapshot<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let mut trainer = Trainer::new(config, data)?;
    for _ in 0..config.epochs {
        let metrics = trainer.run_epoch()?;
        observer(&EpochSnapshot {
            epoch: metrics.epoch,
            encoder: &trainer.encoder,
            head: &trainer.head,
            critic: trainer.critic.as_ref(),
            metrics: &metrics,
        })?;
    }
    trainer.finish(started)
}

/// Runs the objective named in `config`.
pub fn train(config: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    train_with_observer(config, data, &mut |_| Ok(()))
}

fn with_objective(config: &TrainConfig, objective: Objective) -> TrainConfig {
    TrainConfig {
        objective,
        ..config.clone()
    }
}

/// Cross-entropy baseline (`ce_l2` when the config asks for it).
pub fn train_ce(config: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    let objective = match config.objective {
        Objective::CeL2 => Objective::CeL2,
        _ => Objective::Ce,
    };
    train(&with_objective(config, objective), data)
}

/// RIB objective: cross-entropy plus `β` times the Bregman regularizer.
pub fn train_rib(config: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    train(&with_objective(config, Objective::Rib), data)
}

/// Adversarial variant: the encoder ascends the critic loss.
pub fn train_rib_adv(config: &TrainConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    train(&with_objective(config, Objective::RibAdv), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gaussian_mixture, GaussianMixtureSpec};

    fn small_config(objective: Objective, beta: f64) -> TrainConfig {
        TrainConfig {
            encoder_hidden: vec![8],
            rep_dim: 4,
            critic_hidden: vec![8],
            objective,
            beta,
            epochs: 3,
            batch_size: 16,
            base_lr: 1e-2,
            critic_lr: 1e-2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn toy_data() -> (LabeledDataset, GhostSet, LabeledDataset) {
        let train = gaussian_mixture(&GaussianMixtureSpec::two_class(5, 2, 3.0, 40, 0.1), 1).unwrap();
        let ghost = gaussian_mixture(&GaussianMixtureSpec::two_class(5, 2, 3.0, 30, 0.1), 2).unwrap();
        let test = gaussian_mixture(&GaussianMixtureSpec::two_class(5, 2, 3.0, 50, 0.1), 3).unwrap();
        (train, ghost.to_ghost(), test)
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.beta = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.beta = 1.0;
        c.batch_size = 1;
        assert!(c.validate().is_err());
        c.batch_size = 2;
        c.epochs = 0;
        assert!(c.validate().is_err());
        assert_eq!(TrainConfig { objective: Objective::CeL2, ..TrainConfig::default() }.effective_weight_decay(), 1e-4);
        assert_eq!(TrainConfig::default().effective_weight_decay(), 0.0);
    }

    #[test]
    fn rib_requires_compatible_ghost() {
        let (train, ghost, _) = toy_data();
        let cfg = small_config(Objective::Rib, 1.0);
        let no_ghost = TrainData { train: &train, ghost: None, test: None };
        assert!(matches!(super::train(&cfg, no_ghost), Err(Error::Config(_))));
        let narrow = GhostSet { features: ghost.features.slice(ndarray::s![.., ..3]).to_owned() };
        let bad = TrainData { train: &train, ghost: Some(&narrow), test: None };
        assert!(matches!(super::train(&cfg, bad), Err(Error::Config(_))));
    }

    #[test]
    fn critic_untouched_by_encoder_step() {
        let (train, ghost, _) = toy_data();
        let cfg = small_config(Objective::Rib, 10.0);
        let data = TrainData { train: &train, ghost: Some(&ghost), test: None };
        let mut trainer = Trainer::new(&cfg, data).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let fwd = trainer.forward_step(&idx).unwrap();
        let before_critic = trainer.critic().unwrap().digest();
        trainer.update_critic(&fwd, 1e-2).unwrap();
        let after_critic = trainer.critic().unwrap().digest();
        assert_ne!(before_critic, after_critic);
        let enc_before = trainer.encoder().0.digest();
        let stats = trainer.update_encoder(&fwd, 1e-2).unwrap();
        assert!(stats.bregman.is_some());
        assert_eq!(trainer.critic().unwrap().digest(), after_critic);
        assert_ne!(trainer.encoder().0.digest(), enc_before);
    }

    #[test]
    fn logged_risk_matches_evaluate() {
        let (train, ghost, test) = toy_data();
        let cfg = small_config(Objective::Rib, 1.0);
        let data = TrainData { train: &train, ghost: Some(&ghost), test: Some(&test) };
        let mut logged = Vec::new();
        let out = train_with_observer(&cfg, data, &mut |snap| {
            let (err, risk) = evaluate(snap.encoder, snap.head, &train)?;
            logged.push((snap.metrics.train_err, err, snap.metrics.emp_risk, risk));
            Ok(())
        })
        .unwrap();
        assert_eq!(out.record.epochs.len(), cfg.epochs);
        for (a, b, c, d) in logged {
            assert_eq!(a, b);
            assert!((c - d).abs() <= 1e-9);
        }
        let m = &out.record.final_metrics;
        assert_eq!(m.gap, Some(m.test_err.unwrap() - m.train_err));
    }

    #[test]
    fn zero_beta_reduces_to_ce() {
        let (train, ghost, test) = toy_data();
        let data = TrainData { train: &train, ghost: Some(&ghost), test: Some(&test) };
        let ce = train_ce(&small_config(Objective::Ce, 0.0), data).unwrap();
        let rib = train_rib(&small_config(Objective::Rib, 0.0), data).unwrap();
        let adv = train_rib_adv(&small_config(Objective::RibAdv, 0.0), data).unwrap();
        assert_eq!(ce.encoder, rib.encoder);
        assert_eq!(ce.record.metrics_csv(), rib.record.metrics_csv());
        assert_eq!(ce.record.final_metrics.encoder_digest, adv.record.final_metrics.encoder_digest);
        assert_eq!(ce.record.metrics_csv(), adv.record.metrics_csv());
        // a positive beta does change the trajectory
        let rib1 = train_rib(&small_config(Objective::Rib, 1.0), data).unwrap();
        assert_ne!(ce.encoder, rib1.encoder);
    }

    #[test]
    fn runs_are_deterministic() {
        let (train, ghost, test) = toy_data();
        let data = TrainData { train: &train, ghost: Some(&ghost), test: Some(&test) };
        for obj in [Objective::Ce, Objective::Rib, Objective::RibAdv] {
            let a = super::train(&small_config(obj, 1.0), data).unwrap();
            let b = super::train(&small_config(obj, 1.0), data).unwrap();
            assert_eq!(a.record, b.record);
            assert_eq!(a.record.metrics_csv(), b.record.metrics_csv());
        }
    }

    #[test]
    fn metrics_csv_layout() {
        let (train, _, _) = toy_data();
        let data = TrainData { train: &train, ghost: None, test: None };
        let out = train_ce(&small_config(Objective::Ce, 0.0), data).unwrap();
        let csv = out.record.metrics_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "epoch,lr,train_err,test_err,emp_risk,critic_loss,mean_bregman");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 7);
        assert_eq!(first[0], "0");
        assert_eq!(first[3], "");
        assert_eq!(csv.lines().count(), 4);
    }
}
