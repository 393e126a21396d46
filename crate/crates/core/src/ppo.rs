//! Clipped-surrogate PPO over single-day episodes.
//!
//! Every episode is one step long, so the advantage of a day is simply
//! `r - V(s)` and the value target is `r`. One PPO iteration collects
//! `days_per_iteration` days under the current policy and then takes
//! `epochs_per_batch` full-batch gradient steps on them.

use serde::{Deserialize, Serialize};

use crate::env::OfficeEnv;
use crate::error::{Error, Result};
use crate::nn::{self, Gradients, LossBatch, LossBreakdown, OptimizerState, PolicyParams};
use crate::seed::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub sgd_learning_rate: f64,
    pub epochs_per_batch: usize,
    pub days_per_iteration: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.3,
            value_coef: 0.5,
            sgd_learning_rate: 0.01,
            epochs_per_batch: 4,
            days_per_iteration: 16,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::config("clip_epsilon", "must lie in (0, 1)"));
        }
        if !(self.value_coef >= 0.0 && self.value_coef.is_finite()) {
            return Err(Error::config("value_coef", "must be >= 0"));
        }
        if !(self.sgd_learning_rate > 0.0 && self.sgd_learning_rate.is_finite()) {
            return Err(Error::config("sgd_learning_rate", "must be positive"));
        }
        if self.days_per_iteration == 0 {
            return Err(Error::config("days_per_iteration", "must be at least 1"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerState {
        OptimizerState::sgd(self.sgd_learning_rate)
    }
}

/// One simulated day as seen by the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct DayRecord {
    pub obs: Vec<f64>,
    pub action_mean: Vec<f64>,
    /// Raw (unclipped) sampled action.
    pub action: Vec<f64>,
    pub log_prob_old: f64,
    pub reward: f64,
    pub value_pred: f64,
    pub advantage: f64,
    pub value_target: f64,
    pub cost: f64,
    pub penalized: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<DayRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    fn mean_of(&self, f: impl Fn(&DayRecord) -> f64) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.records.iter().map(f).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_reward(&self) -> f64 {
        self.mean_of(|r| r.reward)
    }

    pub fn mean_cost(&self) -> f64 {
        self.mean_of(|r| r.cost)
    }

    pub fn penalty_rate(&self) -> f64 {
        self.mean_of(|r| if r.penalized { 1.0 } else { 0.0 })
    }

    pub fn to_loss_batch(&self, cfg: &PpoConfig) -> LossBatch {
        LossBatch {
            observations: self.records.iter().map(|r| r.obs.clone()).collect(),
            actions: self.records.iter().map(|r| r.action.clone()).collect(),
            old_log_probs: self.records.iter().map(|r| r.log_prob_old).collect(),
            advantages: self.records.iter().map(|r| r.advantage).collect(),
            value_targets: self.records.iter().map(|r| r.value_target).collect(),
            clip_epsilon: cfg.clip_epsilon,
            value_coef: cfg.value_coef,
        }
    }
}

/// Runs `n_days` single-day episodes. The environment is not reset between
/// days, so each observation carries the previous day's demand.
pub fn collect_rollout(
    params: &PolicyParams,
    env: &mut OfficeEnv,
    n_days: usize,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    if n_days == 0 {
        return Err(Error::config("days_per_iteration", "rollout needs at least one day"));
    }
    let mut records = Vec::with_capacity(n_days);
    let mut obs = env.observation();
    for _ in 0..n_days {
        let out = params.forward(&obs)?;
        let action = nn::gaussian_sample(&out.action_mean, params.log_std(), rng)?;
        let log_prob_old = nn::gaussian_log_prob(&out.action_mean, params.log_std(), &action)?;
        let step = env.step(&action)?;
        records.push(DayRecord {
            obs: std::mem::replace(&mut obs, step.obs),
            action_mean: out.action_mean,
            action,
            log_prob_old,
            reward: step.reward,
            value_pred: out.value,
            advantage: 0.0,
            value_target: step.reward,
            cost: step.info.cost,
            penalized: step.info.penalized,
        });
    }
    Ok(Trajectory { records })
}

/// `r - V(s)` per day, before normalization.
pub fn raw_advantages(traj: &Trajectory) -> Vec<f64> {
    traj.records.iter().map(|r| r.reward - r.value_pred).collect()
}

/// Fills value targets and batch-normalized advantages. A single-record
/// batch keeps its raw advantage.
pub fn compute_advantages(traj: &mut Trajectory) {
    let raw = raw_advantages(traj);
    let n = raw.len();
    let normalized = if n > 1 {
        let mean = raw.iter().sum::<f64>() / n as f64;
        let var = raw.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
        let denom = var.sqrt() + 1e-8;
        raw.iter().map(|a| (a - mean) / denom).collect()
    } else {
        raw
    };
    for (rec, adv) in traj.records.iter_mut().zip(normalized) {
        rec.value_target = rec.reward;
        rec.advantage = adv;
    }
}

pub fn ppo_loss(params: &PolicyParams, traj: &Trajectory, cfg: &PpoConfig) -> Result<(LossBreakdown, Gradients)> {
    nn::backprop(params, &traj.to_loss_batch(cfg))
}

/// `epochs_per_batch` full-batch steps on the same trajectory.
pub fn ppo_update(
    params: &PolicyParams,
    traj: &Trajectory,
    cfg: &PpoConfig,
    opt: &mut OptimizerState,
) -> Result<PolicyParams> {
    let batch = traj.to_loss_batch(cfg);
    let mut current = params.clone();
    for _ in 0..cfg.epochs_per_batch {
        let (_, grads) = nn::backprop(&current, &batch)?;
        current = opt.step(&current, &grads)?;
    }
    Ok(current)
}

/// Per-iteration scalars logged by training and evaluation runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationStats {
    pub mean_reward: f64,
    /// Loss at the collection parameters, before any update.
    pub loss: f64,
    pub mean_cost: f64,
    pub penalty_rate: f64,
}

/// One collect-then-update PPO iteration.
pub fn ppo_iteration(
    params: &PolicyParams,
    env: &mut OfficeEnv,
    cfg: &PpoConfig,
    opt: &mut OptimizerState,
    rng: &mut RngStream,
) -> Result<(PolicyParams, IterationStats)> {
    let mut traj = collect_rollout(params, env, cfg.days_per_iteration, rng)?;
    compute_advantages(&mut traj);
    let batch = traj.to_loss_batch(cfg);
    let mut current = params.clone();
    let mut first_loss = None;
    for _ in 0..cfg.epochs_per_batch {
        let (loss, grads) = nn::backprop(&current, &batch)?;
        first_loss.get_or_insert(loss.total);
        current = opt.step(&current, &grads)?;
    }
    let loss = match first_loss {
        Some(l) => l,
        None => nn::backprop(&current, &batch)?.0.total,
    };
    Ok((
        current,
        IterationStats {
            mean_reward: traj.mean_reward(),
            loss,
            mean_cost: traj.mean_cost(),
            penalty_rate: traj.penalty_rate(),
        },
    ))
}
