//! Two-stage training: supervised cross-entropy on gold candidates, then PPO
//! against a frozen copy of the supervised policy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics};
use crate::facts::sample_negatives;
use crate::optim::{AdamW, AdamWConfig};
use crate::policy::{backward_into, forward, run, EncodedRecord, LossKind, PolicyParams, Weights};
use crate::reward::RewardStrategy;

/// Share of training records without a gold candidate tolerated before the
/// supervised stage gives up.
pub const MAX_SKIPPED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SFTConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Sized for the small perceptron; a T5-base backbone would use 5e-6.
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for SFTConfig {
    fn default() -> Self {
        SFTConfig {
            epochs: 6,
            batch_size: 8,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl SFTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config(
                "sft: batch_size and learning_rate must be positive, weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PPOConfig {
    pub num_rollouts: usize,
    /// Minibatch size inside one PPO epoch.
    pub chunk_size: usize,
    pub ppo_epochs: usize,
    pub init_kl_coef: f64,
    pub target: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub lam: f64,
    pub cliprange: f64,
    pub vf_coef: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Negatives drawn from each of the remote and proximal pools.
    pub negatives_per_side: usize,
    /// Name in the reward registry.
    pub reward_kind: String,
    pub seed: u64,
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            num_rollouts: 256,
            chunk_size: 12,
            ppo_epochs: 4,
            init_kl_coef: 0.05,
            target: 6.0,
            horizon: 10000.0,
            gamma: 0.99,
            lam: 0.95,
            cliprange: 0.2,
            vf_coef: 1.0,
            iterations: 30,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            negatives_per_side: 3,
            reward_kind: "contrastive".into(),
            seed: 0,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.gamma) || !unit(self.lam) {
            return Err(Error::Config("ppo: gamma and lam must lie in (0, 1]".into()));
        }
        if !(self.cliprange > 0.0) {
            return Err(Error::Config("ppo: cliprange must be positive".into()));
        }
        if self.num_rollouts == 0 || self.chunk_size == 0 || self.ppo_epochs == 0 {
            return Err(Error::Config("ppo: num_rollouts, chunk_size and ppo_epochs must be positive".into()));
        }
        if !(self.init_kl_coef > 0.0) || !(self.target > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::Config("ppo: init_kl_coef, target and horizon must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.vf_coef < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("ppo: learning_rate must be positive, vf_coef and weight_decay non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SftEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_em: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SftHistory {
    pub epochs: Vec<SftEpoch>,
    pub skipped: usize,
    pub best_epoch: usize,
}

fn adam(params: &PolicyParams, learning_rate: f64, weight_decay: f64) -> AdamW {
    AdamW::new(
        AdamWConfig {
            learning_rate,
            weight_decay,
            ..AdamWConfig::default()
        },
        &params.weights,
    )
}

fn dev_metrics(dev: &[EncodedRecord], params: &PolicyParams) -> Result<Metrics> {
    if dev.is_empty() {
        Ok(Metrics::empty())
    } else {
        evaluate(dev, params)
    }
}

/// Stage 1: minibatch cross-entropy on the gold candidate. Returns the
/// parameters with the best dev EM seen, the initial ones included.
pub fn train_sft(
    init: PolicyParams,
    train: &[EncodedRecord],
    dev: &[EncodedRecord],
    config: &SFTConfig,
) -> Result<(PolicyParams, SftHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let usable: Vec<usize> = (0..train.len()).filter(|&i| train[i].gold_index.is_some()).collect();
    let skipped = train.len() - usable.len();
    if skipped as f64 > MAX_SKIPPED_FRACTION * train.len() as f64 {
        return Err(Error::Training(format!(
            "{skipped} of {} training records have no gold candidate",
            train.len()
        )));
    }
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} training records without a gold candidate");
    }

    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = adam(&params, config.learning_rate, config.weight_decay);
    let mut grads = params.weights.zeros_like();
    let start = dev_metrics(dev, &params)?;
    let mut best = (start.em, params.clone(), 0);
    let mut epochs = vec![SftEpoch {
        epoch: 0,
        train_loss: f64::NAN,
        dev_em: start.em,
        dev_f1: start.f1,
    }];

    let mut order = usable;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let rec = &train[i];
                let pass = run(&params, rec)?;
                let gold = rec.gold_index.expect("filtered");
                total += backward_into(&params, rec, &pass, &LossKind::CrossEntropy { gold }, scale, &mut grads)?;
            }
            opt.step(&mut params.weights, &grads);
        }
        let train_loss = total / order.len() as f64;
        if !train_loss.is_finite() || !params.weights.is_finite() {
            return Err(Error::NonFinite(format!("supervised epoch {epoch}: loss {train_loss}")));
        }
        let m = dev_metrics(dev, &params)?;
        epochs.push(SftEpoch {
            epoch,
            train_loss,
            dev_em: m.em,
            dev_f1: m.f1,
        });
        if dev.is_empty() || m.em > best.0 {
            best = (m.em, params.clone(), epoch);
        }
    }
    let (_, best_params, best_epoch) = best;
    Ok((
        best_params,
        SftHistory {
            epochs,
            skipped,
            best_epoch,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Index into the dataset the batch was collected from.
    pub record: usize,
    pub record_id: String,
    pub action: usize,
    pub logprob_old: f64,
    pub raw_reward: f64,
    pub reward: f64,
    pub value_old: f64,
    pub kl_to_reference: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub samples: Vec<Rollout>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_raw_reward(&self) -> f64 {
        mean(self.samples.iter().map(|s| s.raw_reward))
    }

    pub fn mean_kl(&self) -> f64 {
        mean(self.samples.iter().map(|s| s.kl_to_reference))
    }
}

fn mean<I: Iterator<Item = f64>>(values: I) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Samples records with replacement and one action per record from the
/// current policy; the reward is shaped by the log-ratio to the reference.
pub fn collect_rollouts<R: Rng + ?Sized>(
    params: &PolicyParams,
    reference: &PolicyParams,
    dataset: &[EncodedRecord],
    config: &PPOConfig,
    kl_coef: f64,
    reward: &dyn RewardStrategy,
    rng: &mut R,
) -> Result<RolloutBatch> {
    if dataset.is_empty() {
        return Err(Error::Training("no records to roll out".into()));
    }
    let mut samples = Vec::with_capacity(config.num_rollouts);
    for _ in 0..config.num_rollouts {
        let i = rng.gen_range(0..dataset.len());
        let rec = &dataset[i];
        let out = forward(params, rec)?;
        let action = out.sample(rng);
        let logprob = out.log_prob(action);
        let logprob_ref = forward(reference, rec)?.log_prob(action);
        let negatives = sample_negatives(&rec.remote, &rec.proximal, config.negatives_per_side, rng);
        let raw = reward.reward(rec.gold(), rec.candidates.text(action), &negatives);
        let kl = logprob - logprob_ref;
        samples.push(Rollout {
            record: i,
            record_id: rec.id.clone(),
            action,
            logprob_old: logprob,
            raw_reward: raw,
            reward: raw - kl_coef * kl,
            value_old: out.value,
            kl_to_reference: kl,
            advantage: 0.0,
            ret: 0.0,
        });
    }
    Ok(RolloutBatch { samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gae {
    pub raw_advantages: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Zero mean, unit variance; a constant vector maps to zeros.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let m = mean(values.iter().copied());
    let var = mean(values.iter().map(|v| (v - m) * (v - m)));
    let sd = var.sqrt();
    if values.iter().all(|v| *v == values[0]) || sd < 1e-12 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - m) / sd).collect()
}

/// Generalized advantage estimation with episode ends marked by `dones`.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lam: f64) -> Result<Gae> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: values.len().min(dones.len()),
        });
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        adv[t] = delta + gamma * lam * live * next_adv;
        next_adv = adv[t];
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(Gae {
        advantages: standardize(&adv),
        raw_advantages: adv,
        returns,
    })
}

/// Fills advantages and returns; every rollout is a one-step episode.
pub fn assign_advantages(batch: &mut RolloutBatch, config: &PPOConfig) -> Result<()> {
    let rewards: Vec<f64> = batch.samples.iter().map(|s| s.reward).collect();
    let values: Vec<f64> = batch.samples.iter().map(|s| s.value_old).collect();
    let gae = compute_gae(&rewards, &values, &vec![true; rewards.len()], config.gamma, config.lam)?;
    for ((s, a), r) in batch.samples.iter_mut().zip(gae.advantages).zip(gae.returns) {
        s.advantage = a;
        s.ret = r;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PpoStats {
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// Policy-surrogate gradient of `samples` plus the value gradient restricted
/// to the value head. Returns `(policy_loss, value_loss, approx_kl, clipped)`
/// summed over the samples.
fn chunk_gradient(
    params: &PolicyParams,
    dataset: &[EncodedRecord],
    samples: &[&Rollout],
    config: &PPOConfig,
    grads: &mut Weights,
) -> Result<(f64, f64, f64, usize)> {
    let scale = 1.0 / samples.len() as f64;
    let (mut pl, mut vl, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0);
    for s in samples {
        let rec = &dataset[s.record];
        let pass = run(params, rec)?;
        let loss = LossKind::PpoSurrogate {
            action: s.action,
            logprob_old: s.logprob_old,
            advantage: s.advantage,
            cliprange: config.cliprange,
        };
        pl += backward_into(params, rec, &pass, &loss, scale, grads)?;
        let logprob = pass.output.log_prob(s.action);
        kl += s.logprob_old - logprob;
        if ((logprob - s.logprob_old).exp() - 1.0).abs() > config.cliprange {
            clipped += 1;
        }
        // The critic is detached: its loss only reaches the value head.
        let diff = pass.output.value - s.ret;
        vl += diff * diff;
        let g = config.vf_coef * 2.0 * diff * scale;
        grads.bv[0] += g;
        for (w, x) in grads.wv.iter_mut().zip(&pass.pooled) {
            *w += g * x;
        }
    }
    Ok((pl, vl, kl, clipped))
}

/// Gradient of the clipped surrogate over the whole batch at `params`.
pub fn policy_gradient(params: &PolicyParams, dataset: &[EncodedRecord], batch: &RolloutBatch, config: &PPOConfig) -> Result<Weights> {
    let mut grads = params.weights.zeros_like();
    let samples: Vec<&Rollout> = batch.samples.iter().collect();
    chunk_gradient(params, dataset, &samples, config, &mut grads)?;
    grads.wv.iter_mut().chain(grads.bv.iter_mut()).for_each(|v| *v = 0.0);
    Ok(grads)
}

/// `ppo_epochs` passes over the batch in minibatches of `chunk_size`.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    opt: &mut AdamW,
    dataset: &[EncodedRecord],
    batch: &RolloutBatch,
    config: &PPOConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    let mut grads = params.weights.zeros_like();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let (mut pl, mut vl, mut kl, mut clipped, mut seen) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for epoch in 0..config.ppo_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.chunk_size) {
            grads.fill(0.0);
            let samples: Vec<&Rollout> = chunk.iter().map(|&i| &batch.samples[i]).collect();
            let (p, v, k, c) = chunk_gradient(params, dataset, &samples, config, &mut grads)?;
            if !(p.is_finite() && v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "ppo epoch {epoch}: policy loss {p}, value loss {v} over records {:?}",
                    samples.iter().map(|s| s.record_id.as_str()).collect::<Vec<_>>()
                )));
            }
            opt.step(&mut params.weights, &grads);
            pl += p;
            vl += v;
            kl += k;
            clipped += c;
            seen += samples.len();
        }
    }
    let n = seen.max(1) as f64;
    Ok(PpoStats {
        approx_kl: kl / n,
        clip_frac: clipped as f64 / n,
        policy_loss: pl / n,
        value_loss: vl / n,
    })
}

/// Proportional controller keeping the observed KL near the target.
pub fn adaptive_kl_update(coef: f64, observed_kl: f64, config: &PPOConfig, n_samples: usize) -> f64 {
    let err = ((observed_kl - config.target) / config.target).clamp(-0.2, 0.2);
    coef * (1.0 + err * n_samples as f64 / config.horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub kl: f64,
    pub kl_coef: f64,
    pub clip_frac: f64,
    pub dev_em: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoHistory {
    pub rows: Vec<HistoryRow>,
    pub best_iteration: usize,
}

impl PpoHistory {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Training(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv()?.as_bytes())
    }
}

/// Stage 2: collect, estimate advantages, update, adapt the KL coefficient.
/// Returns the parameters with the best dev EM, iteration 0 included.
pub fn train_ppo(
    sft: PolicyParams,
    train: &[EncodedRecord],
    dev: &[EncodedRecord],
    config: &PPOConfig,
    reward: &dyn RewardStrategy,
) -> Result<(PolicyParams, PpoHistory)> {
    config.validate()?;
    let reference = sft.clone();
    let mut params = sft;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = adam(&params, config.learning_rate, config.weight_decay);
    let mut coef = config.init_kl_coef;

    let start = dev_metrics(dev, &params)?;
    let mut history = PpoHistory {
        rows: vec![HistoryRow {
            iteration: 0,
            mean_reward: f64::NAN,
            kl: 0.0,
            kl_coef: coef,
            clip_frac: 0.0,
            dev_em: start.em,
            dev_f1: start.f1,
        }],
        best_iteration: 0,
    };
    let mut best = (start.em, params.clone());

    for iteration in 1..=config.iterations {
        let mut batch = collect_rollouts(&params, &reference, train, config, coef, reward, &mut rng)?;
        assign_advantages(&mut batch, config)?;
        let stats = ppo_update(&mut params, &mut opt, train, &batch, config, &mut rng)?;
        let kl = batch.mean_kl();
        coef = adaptive_kl_update(coef, kl, config, batch.len());
        let m = dev_metrics(dev, &params)?;
        history.rows.push(HistoryRow {
            iteration,
            mean_reward: batch.mean_raw_reward(),
            kl,
            kl_coef: coef,
            clip_frac: stats.clip_frac,
            dev_em: m.em,
            dev_f1: m.f1,
        });
        if m.em > best.0 {
            best = (m.em, params.clone());
            history.best_iteration = iteration;
        }
    }
    Ok((best.1, history))
}
