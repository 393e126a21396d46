//! Meta-training of a shared PPO initialization over a task distribution.
//!
//! Each meta-iteration samples `tasks_per_meta_step` tasks, adapts a copy
//! of θ to each with `inner_steps` PPO iterations, collects a fresh
//! post-adaptation rollout, and takes one ADAM step on θ. Two meta-gradient
//! estimators are available:
//!
//! - first-order: mean over tasks of the PPO loss gradient evaluated at the
//!   adapted weights φ on the post-adaptation rollout;
//! - Reptile: mean over tasks of `(θ - φ) / (K · inner_lr)`.
//!
//! The inner adaptations are independent and run in parallel; results are
//! joined in task order so parallelism never changes the numerics.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::checkpoint::{MetaCheckpoint, MetaGradMode, RngSnapshot};
use crate::env::{self, EnvConfig, OfficeEnv, TaskDistribution, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::{NetDims, OptimizerState, PolicyParams};
use crate::ppo::{self, PpoConfig, Trajectory};
use crate::seed::{self, RngStream};

const LABEL_INIT: u64 = 0x1417;
const LABEL_TASKS: u64 = 0x7a5c;
const LABEL_ADAPT: u64 = 0xada9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MamlConfig {
    pub meta_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub tasks_per_meta_step: usize,
    pub inner_steps: usize,
    pub meta_iterations: usize,
    pub checkpoint_at: Vec<usize>,
    pub meta_grad_mode: MetaGradMode,
}

impl Default for MamlConfig {
    fn default() -> Self {
        Self {
            meta_learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            tasks_per_meta_step: 8,
            inner_steps: 5,
            meta_iterations: 200,
            checkpoint_at: vec![50, 100, 150, 200],
            meta_grad_mode: MetaGradMode::FirstOrder,
        }
    }
}

impl MamlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.meta_learning_rate > 0.0 && self.meta_learning_rate.is_finite()) {
            return Err(Error::config("meta_learning_rate", "must be positive"));
        }
        for (key, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(key, format!("must lie in (0, 1), got {b}")));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::config("adam_epsilon", "must be positive"));
        }
        if self.tasks_per_meta_step == 0 {
            return Err(Error::config("tasks_per_meta_step", "must be at least 1"));
        }
        if self.checkpoint_at.contains(&0) {
            return Err(Error::config("checkpoint_at", "iteration 0 is always written; list positive iterations"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerState {
        OptimizerState::adam(self.meta_learning_rate, self.beta1, self.beta2, self.adam_epsilon)
    }
}

/// Result of adapting θ to one task.
#[derive(Clone, Debug)]
pub struct AdaptedTask {
    pub task: TaskSpec,
    pub phi: PolicyParams,
    /// Fresh rollout under φ, with advantages computed.
    pub post_traj: Trajectory,
}

/// K PPO iterations from θ on `task`, then one evaluation rollout under φ.
pub fn inner_adapt(
    theta: &PolicyParams,
    task: &TaskSpec,
    inner_steps: usize,
    env_cfg: &EnvConfig,
    ppo_cfg: &PpoConfig,
    rng: &mut RngStream,
) -> Result<AdaptedTask> {
    let mut env = OfficeEnv::new(*task, env_cfg)?;
    let mut opt = ppo_cfg.optimizer();
    let mut phi = theta.clone();
    for _ in 0..inner_steps {
        phi = ppo::ppo_iteration(&phi, &mut env, ppo_cfg, &mut opt, rng)?.0;
    }
    let mut post_traj = ppo::collect_rollout(&phi, &mut env, ppo_cfg.days_per_iteration, rng)?;
    ppo::compute_advantages(&mut post_traj);
    Ok(AdaptedTask {
        task: *task,
        phi,
        post_traj,
    })
}

/// Negative mean return of the post-adaptation rollout.
pub fn meta_loss(post_traj: &Trajectory) -> Result<f64> {
    if post_traj.is_empty() {
        return Err(Error::Empty("post-adaptation trajectory"));
    }
    Ok(-post_traj.mean_reward())
}

/// What a meta-gradient estimator needs from one adapted task.
#[derive(Clone, Debug)]
pub struct TaskSignal {
    pub phi: Vec<f64>,
    /// Gradient of the post-adaptation loss at φ (first-order mode).
    pub post_gradient: Vec<f64>,
}

/// Combines per-task signals into one meta-gradient on θ.
pub fn meta_gradient(
    mode: MetaGradMode,
    theta: &[f64],
    tasks: &[TaskSignal],
    inner_steps: usize,
    inner_lr: f64,
) -> Result<Vec<f64>> {
    if tasks.is_empty() {
        return Err(Error::Empty("meta-update task results"));
    }
    let n = theta.len();
    for t in tasks {
        for (what, got) in [("phi", t.phi.len()), ("post_gradient", t.post_gradient.len())] {
            if got != n {
                return Err(Error::Shape {
                    what,
                    expected: n,
                    got,
                });
            }
        }
    }
    let scale = 1.0 / tasks.len() as f64;
    let mut g = vec![0.0; n];
    match mode {
        MetaGradMode::FirstOrder => {
            for t in tasks {
                for (gi, pg) in g.iter_mut().zip(&t.post_gradient) {
                    *gi += scale * pg;
                }
            }
        }
        MetaGradMode::Reptile => {
            // K = 0 leaves φ = θ, so the direction is identically zero.
            if inner_steps > 0 {
                let step = 1.0 / (inner_steps as f64 * inner_lr);
                for t in tasks {
                    for ((gi, th), ph) in g.iter_mut().zip(theta).zip(&t.phi) {
                        *gi += scale * step * (th - ph);
                    }
                }
            }
        }
    }
    Ok(g)
}

/// One outer step on θ from a batch of adapted tasks.
pub fn meta_update(
    theta: &PolicyParams,
    results: &[AdaptedTask],
    opt: &mut OptimizerState,
    mode: MetaGradMode,
    inner_steps: usize,
    ppo_cfg: &PpoConfig,
) -> Result<PolicyParams> {
    let signals = results
        .iter()
        .map(|r| {
            let post_gradient = match mode {
                MetaGradMode::FirstOrder => ppo::ppo_loss(&r.phi, &r.post_traj, ppo_cfg)?.1.into_flat(),
                MetaGradMode::Reptile => vec![0.0; theta.as_flat().len()],
            };
            Ok(TaskSignal {
                phi: r.phi.as_flat().to_vec(),
                post_gradient,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let g = meta_gradient(mode, theta.as_flat(), &signals, inner_steps, ppo_cfg.sgd_learning_rate)?;
    let grads = crate::nn::Gradients::from_flat(theta.dims(), g)?;
    opt.step(theta, &grads)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetaLogRow {
    pub iteration: usize,
    pub mean_post_adapt_return: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct MamlRun {
    /// Iteration-0 checkpoint first, then the configured cadence in order,
    /// always ending with the last iteration.
    pub checkpoints: Vec<MetaCheckpoint>,
    pub log: Vec<MetaLogRow>,
}

impl MamlRun {
    pub fn final_checkpoint(&self) -> &MetaCheckpoint {
        self.checkpoints.last().expect("iteration-0 checkpoint always present")
    }

    pub fn at_iteration(&self, iteration: u64) -> Option<&MetaCheckpoint> {
        self.checkpoints.iter().find(|c| c.meta_iteration == iteration)
    }
}

/// Fingerprint of everything that shapes a meta-training run.
pub fn config_fingerprint(cfg: &MamlConfig, ppo_cfg: &PpoConfig, env_cfg: &EnvConfig, dist: &TaskDistribution) -> u64 {
    let text = serde_json::to_string(&(cfg, ppo_cfg, env_cfg, dist)).expect("configs serialize");
    seed::fnv1a(text.as_bytes())
}

pub fn initial_theta(dims: NetDims, seed: u64) -> PolicyParams {
    PolicyParams::random(dims, &mut seed::derived_stream(seed, &[LABEL_INIT]))
}

/// Full meta-training loop. `on_checkpoint` is called as each checkpoint is
/// produced (iteration 0 first).
pub fn train_maml(
    cfg: &MamlConfig,
    ppo_cfg: &PpoConfig,
    env_cfg: &EnvConfig,
    dist: &TaskDistribution,
    seed: u64,
    mut on_checkpoint: impl FnMut(&MetaCheckpoint) -> Result<()>,
) -> Result<MamlRun> {
    cfg.validate()?;
    ppo_cfg.validate()?;
    let dims = NetDims::new(env_cfg.obs_dim(), env_cfg.act_dim());
    let fingerprint = config_fingerprint(cfg, ppo_cfg, env_cfg, dist);
    let mut theta = initial_theta(dims, seed);
    let mut task_rng = seed::derived_stream(seed, &[LABEL_TASKS]);
    let mut opt = cfg.optimizer();

    let snapshot = |theta: &PolicyParams, iteration: usize, rng: &RngStream| MetaCheckpoint {
        theta: theta.clone(),
        meta_iteration: iteration as u64,
        fingerprint,
        mode: cfg.meta_grad_mode,
        rng: RngSnapshot::capture(rng),
    };

    let first = snapshot(&theta, 0, &task_rng);
    on_checkpoint(&first)?;
    let mut checkpoints = vec![first];
    let mut log = Vec::with_capacity(cfg.meta_iterations);
    let start = Instant::now();

    for iteration in 1..=cfg.meta_iterations {
        let tasks = (0..cfg.tasks_per_meta_step)
            .map(|_| env::sample_task(dist, &mut task_rng))
            .collect::<Result<Vec<_>>>()?;
        let results = tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let mut rng = seed::derived_stream(seed, &[LABEL_ADAPT, iteration as u64, i as u64]);
                inner_adapt(&theta, task, cfg.inner_steps, env_cfg, ppo_cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut mean_return = 0.0;
        for r in &results {
            mean_return -= meta_loss(&r.post_traj)?;
        }
        mean_return /= results.len() as f64;

        theta = meta_update(&theta, &results, &mut opt, cfg.meta_grad_mode, cfg.inner_steps, ppo_cfg)?;
        log.push(MetaLogRow {
            iteration,
            mean_post_adapt_return: mean_return,
            wall_seconds: start.elapsed().as_secs_f64(),
        });

        if cfg.checkpoint_at.contains(&iteration) || iteration == cfg.meta_iterations {
            let ckpt = snapshot(&theta, iteration, &task_rng);
            on_checkpoint(&ckpt)?;
            checkpoints.push(ckpt);
        }
    }
    Ok(MamlRun { checkpoints, log })
}
