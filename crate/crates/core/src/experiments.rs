//! Adaptation experiments: PPO trained for a fixed number of days in a held-out
//! environment, starting either from a meta-learned initialization or from
//! scratch, repeated over several trials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, OfficeEnv, PersonKind, TaskDistribution, TaskSpec};
use crate::error::{Error, Result};
use crate::maml::MetaCheckpoint;
use crate::nn::{NetDims, PolicyParams};
use crate::ppo::{self, PpoConfig};
use crate::seed;

const LABEL_TRIAL: u64 = 0x7219;
const LABEL_SCRATCH_INIT: u64 = 0x5c2a;

pub const ARM_MAML: &str = "maml_ppo";
pub const ARM_SCRATCH: &str = "ppo_scratch";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    AdaptCurtailShift,
    AdaptThresholdExp,
    CheckpointAblation,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 3] = [
        ExperimentId::AdaptCurtailShift,
        ExperimentId::AdaptThresholdExp,
        ExperimentId::CheckpointAblation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::AdaptCurtailShift => "AdaptCurtailShift",
            ExperimentId::AdaptThresholdExp => "AdaptThresholdExp",
            ExperimentId::CheckpointAblation => "CheckpointAblation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
    }

    /// Occupant kinds meta-training samples from.
    pub fn train_kinds(self) -> Vec<PersonKind> {
        match self {
            ExperimentId::AdaptThresholdExp => vec![PersonKind::Linear, PersonKind::Sinusoidal],
            _ => vec![
                PersonKind::Linear,
                PersonKind::Sinusoidal,
                PersonKind::ThresholdExponential,
            ],
        }
    }

    /// Held-out occupant kind evaluated after meta-training.
    pub fn eval_kind(self) -> PersonKind {
        match self {
            ExperimentId::AdaptThresholdExp => PersonKind::ThresholdExponential,
            _ => PersonKind::CurtailAndShift,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub train_dist: TaskDistribution,
    /// Fixed across trials and arms.
    pub eval_task: TaskSpec,
    pub eval_days: usize,
    pub trials: usize,
    /// Trailing window (days) for end-of-training statistics.
    pub final_window: usize,
    /// Checkpoint iterations compared by the ablation.
    pub ablation_checkpoints: Vec<usize>,
}

impl ExperimentSpec {
    pub fn standard(id: ExperimentId) -> Self {
        Self {
            id,
            train_dist: TaskDistribution::new(id.train_kinds()),
            eval_task: TaskSpec {
                person: id.eval_kind(),
                multiplier: 1.0,
                baseline_seed: 2021,
                price_seed: 2022,
            },
            eval_days: 100,
            trials: 5,
            final_window: 20,
            ablation_checkpoints: vec![50, 100, 150, 200],
        }
    }
}

/// Where an adaptation run starts from.
#[derive(Clone, Debug)]
pub enum Initialization {
    Fixed(PolicyParams),
    /// Fresh Glorot initialization, seeded per (arm, trial).
    Random(NetDims),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DayStats {
    /// Mean reward of that day's rollout.
    pub reward: f64,
    pub cost: f64,
    pub penalty_rate: f64,
    /// PPO loss at the collection parameters.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmCurves {
    pub name: String,
    /// `trials[trial][day]`.
    pub trials: Vec<Vec<DayStats>>,
}

impl ArmCurves {
    pub fn days(&self) -> usize {
        self.trials.first().map_or(0, Vec::len)
    }

    pub fn rewards(&self, trial: usize) -> Vec<f64> {
        self.trials[trial].iter().map(|d| d.reward).collect()
    }

    /// Per-day `(mean, stderr)` over trials; stderr is 0 with a single trial.
    pub fn mean_and_stderr(&self) -> Vec<(f64, f64)> {
        (0..self.days())
            .map(|day| {
                let vals: Vec<f64> = self.trials.iter().map(|t| t[day].reward).collect();
                let (m, se) = aggregate_stats(&vals).expect("non-empty trials");
                (m, se.unwrap_or(0.0))
            })
            .collect()
    }

    /// Per-trial mean reward over the trailing `window` days.
    pub fn final_rewards(&self, window: usize) -> Vec<f64> {
        self.trials
            .iter()
            .map(|t| trailing_mean(t.iter().map(|d| d.reward), t.len(), window))
            .collect()
    }

    /// Mean cost over the trailing `window` days and all trials.
    pub fn final_cost(&self, window: usize) -> f64 {
        let per_trial: Vec<f64> = self
            .trials
            .iter()
            .map(|t| trailing_mean(t.iter().map(|d| d.cost), t.len(), window))
            .collect();
        per_trial.iter().sum::<f64>() / per_trial.len() as f64
    }
}

fn trailing_mean(values: impl Iterator<Item = f64>, len: usize, window: usize) -> f64 {
    let w = window.clamp(1, len.max(1));
    values.skip(len.saturating_sub(w)).sum::<f64>() / w as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCurves {
    pub arms: Vec<ArmCurves>,
}

impl EvalCurves {
    pub fn arm(&self, name: &str) -> Option<&ArmCurves> {
        self.arms.iter().find(|a| a.name == name)
    }
}

/// Arithmetic mean and Bessel-corrected standard error (absent for n < 2).
pub fn aggregate_stats(values: &[f64]) -> Result<(f64, Option<f64>)> {
    if values.is_empty() {
        return Err(Error::Empty("aggregate_stats values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, None));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, Some((var / n).sqrt())))
}

/// `trials` independent PPO runs of `days` iterations in the fixed
/// environment. Rollout noise depends only on `(seed, trial)`, so arms that
/// share a seed see identical environment streams.
#[allow(clippy::too_many_arguments)]
pub fn run_adaptation_eval(
    arm: &str,
    init: &Initialization,
    eval_task: &TaskSpec,
    env_cfg: &EnvConfig,
    ppo_cfg: &PpoConfig,
    days: usize,
    trials: usize,
    seed: u64,
) -> Result<ArmCurves> {
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    if days == 0 {
        return Err(Error::config("eval_days", "must be at least 1"));
    }
    let arm_label = seed::fnv1a(arm.as_bytes());
    let curves = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut params = match init {
                Initialization::Fixed(p) => p.clone(),
                Initialization::Random(dims) => PolicyParams::random(
                    *dims,
                    &mut seed::derived_stream(seed, &[LABEL_SCRATCH_INIT, arm_label, trial as u64]),
                ),
            };
            let mut env = OfficeEnv::new(*eval_task, env_cfg)?;
            let mut opt = ppo_cfg.optimizer();
            let mut rng = seed::derived_stream(seed, &[LABEL_TRIAL, trial as u64]);
            let mut series = Vec::with_capacity(days);
            for _ in 0..days {
                let (next, stats) = ppo::ppo_iteration(&params, &mut env, ppo_cfg, &mut opt, &mut rng)?;
                params = next;
                series.push(DayStats {
                    reward: stats.mean_reward,
                    cost: stats.mean_cost,
                    penalty_rate: stats.penalty_rate,
                    loss: stats.loss,
                });
            }
            Ok(series)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ArmCurves {
        name: arm.to_string(),
        trials: curves,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub arm: String,
    pub mean_final_reward: f64,
    pub stderr: Option<f64>,
    pub mean_final_cost: f64,
    pub cost_ratio_vs_scratch: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub experiment: ExperimentId,
    pub curves: EvalCurves,
    pub final_window: usize,
    pub summary: Vec<SummaryRow>,
}

impl Report {
    pub fn new(experiment: ExperimentId, curves: EvalCurves, final_window: usize) -> Result<Self> {
        let scratch_cost = curves.arm(ARM_SCRATCH).map(|a| a.final_cost(final_window));
        let summary = curves
            .arms
            .iter()
            .map(|arm| {
                let (mean, stderr) = aggregate_stats(&arm.final_rewards(final_window))?;
                let cost = arm.final_cost(final_window);
                Ok(SummaryRow {
                    arm: arm.name.clone(),
                    mean_final_reward: mean,
                    stderr,
                    mean_final_cost: cost,
                    cost_ratio_vs_scratch: scratch_cost.map(|s| cost / s),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            experiment,
            curves,
            final_window,
            summary,
        })
    }

    pub fn summary_for(&self, arm: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.arm == arm)
    }

    /// Checkpoint arms (everything but scratch) ordered best-first by final
    /// mean reward; ties keep report order.
    pub fn ranking(&self) -> Vec<&SummaryRow> {
        let mut rows: Vec<&SummaryRow> = self.summary.iter().filter(|r| r.arm != ARM_SCRATCH).collect();
        rows.sort_by(|a, b| b.mean_final_reward.total_cmp(&a.mean_final_reward));
        rows
    }

    /// Whether the last checkpoint arm ends below an earlier checkpoint arm.
    pub fn final_checkpoint_regresses(&self) -> Option<bool> {
        let arms: Vec<&SummaryRow> = self.summary.iter().filter(|r| r.arm != ARM_SCRATCH).collect();
        let (last, earlier) = arms.split_last()?;
        let best_earlier = earlier
            .iter()
            .map(|r| r.mean_final_reward)
            .fold(f64::NEG_INFINITY, f64::max);
        (!earlier.is_empty()).then_some(last.mean_final_reward < best_earlier)
    }
}

pub fn checkpoint_arm_name(iteration: u64) -> String {
    format!("maml_{iteration}")
}

/// Evaluates the arms an experiment calls for. Adaptation experiments use
/// the latest checkpoint supplied; the ablation needs one per cadence entry.
pub fn run_experiment(
    spec: &ExperimentSpec,
    checkpoints: &[MetaCheckpoint],
    env_cfg: &EnvConfig,
    ppo_cfg: &PpoConfig,
    seed: u64,
) -> Result<Report> {
    let dims = NetDims::new(env_cfg.obs_dim(), env_cfg.act_dim());
    let mut arms: Vec<(String, Initialization)> = Vec::new();
    match spec.id {
        ExperimentId::AdaptCurtailShift | ExperimentId::AdaptThresholdExp => {
            let latest = checkpoints
                .iter()
                .max_by_key(|c| c.meta_iteration)
                .ok_or(Error::Empty("meta-learned checkpoints"))?;
            arms.push((ARM_MAML.to_string(), Initialization::Fixed(latest.theta.clone())));
        }
        ExperimentId::CheckpointAblation => {
            for &it in &spec.ablation_checkpoints {
                let ckpt = checkpoints
                    .iter()
                    .find(|c| c.meta_iteration == it as u64)
                    .ok_or_else(|| Error::MissingCheckpoint {
                        missing: it,
                        expected: spec.ablation_checkpoints.clone(),
                    })?;
                arms.push((checkpoint_arm_name(it as u64), Initialization::Fixed(ckpt.theta.clone())));
            }
        }
    }
    arms.push((ARM_SCRATCH.to_string(), Initialization::Random(dims)));

    let curves = arms
        .iter()
        .map(|(name, init)| {
            run_adaptation_eval(
                name,
                init,
                &spec.eval_task,
                env_cfg,
                ppo_cfg,
                spec.eval_days,
                spec.trials,
                seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Report::new(spec.id, EvalCurves { arms: curves }, spec.final_window)
}
