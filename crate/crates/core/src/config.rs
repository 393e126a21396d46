//! Run configuration: a flat JSON object whose keys mirror the command-line
//! `--set key=value` overrides. Every key has a default; unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::env::{EnvConfig, RewardConfig, TaskDistribution, TaskSpec};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentId, ExperimentSpec};
use crate::maml::{MamlConfig, MetaGradMode};
use crate::ppo::PpoConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Output subdirectory name; defaults to `seed<seed>`.
    pub tag: Option<String>,

    // Environment.
    pub hours_per_day: usize,
    pub lambda: f64,
    pub dhat_fraction: f64,
    pub threshold: f64,
    pub t_curtail: usize,
    pub t_shift: usize,
    pub price_jitter: f64,
    pub cs_fixed_fraction: f64,
    pub cs_curtail_fraction: f64,
    pub multiplier_min: f64,
    pub multiplier_max: f64,
    pub eval_multiplier: f64,
    pub eval_baseline_seed: u64,
    pub eval_price_seed: u64,

    // PPO.
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub sgd_learning_rate: f64,
    pub epochs_per_batch: usize,
    pub days_per_iteration: usize,

    // Meta-training.
    pub meta_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub tasks_per_meta_step: usize,
    pub inner_steps: usize,
    pub meta_iterations: usize,
    pub checkpoint_at: Vec<usize>,
    pub meta_grad_mode: MetaGradMode,

    // Evaluation.
    pub eval_days: usize,
    pub trials: usize,
    pub final_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        let ppo = PpoConfig::default();
        let maml = MamlConfig::default();
        let spec = ExperimentSpec::standard(ExperimentId::AdaptCurtailShift);
        Self {
            experiment: ExperimentId::AdaptCurtailShift,
            seed: 7,
            out_dir: PathBuf::from("out"),
            tag: None,
            hours_per_day: env.hours_per_day,
            lambda: env.reward.lambda,
            dhat_fraction: env.reward.dhat_fraction,
            threshold: env.threshold,
            t_curtail: env.t_curtail,
            t_shift: env.t_shift,
            price_jitter: env.price_jitter,
            cs_fixed_fraction: env.cs_fixed_fraction,
            cs_curtail_fraction: env.cs_curtail_fraction,
            multiplier_min: spec.train_dist.multiplier_min,
            multiplier_max: spec.train_dist.multiplier_max,
            eval_multiplier: spec.eval_task.multiplier,
            eval_baseline_seed: spec.eval_task.baseline_seed,
            eval_price_seed: spec.eval_task.price_seed,
            clip_epsilon: ppo.clip_epsilon,
            value_coef: ppo.value_coef,
            sgd_learning_rate: ppo.sgd_learning_rate,
            epochs_per_batch: ppo.epochs_per_batch,
            days_per_iteration: ppo.days_per_iteration,
            meta_learning_rate: maml.meta_learning_rate,
            beta1: maml.beta1,
            beta2: maml.beta2,
            adam_epsilon: maml.adam_epsilon,
            tasks_per_meta_step: maml.tasks_per_meta_step,
            inner_steps: maml.inner_steps,
            meta_iterations: maml.meta_iterations,
            checkpoint_at: maml.checkpoint_at,
            meta_grad_mode: maml.meta_grad_mode,
            eval_days: spec.eval_days,
            trials: spec.trials,
            final_window: spec.final_window,
        }
    }
}

fn known_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

fn json_err(context: impl Into<String>) -> impl FnOnce(serde_json::Error) -> Error {
    let context = context.into();
    move |source| Error::Json { context, source }
}

impl RunConfig {
    /// Builds a config from a JSON object, applying defaults for absent keys.
    pub fn from_json_object(obj: Map<String, Value>) -> Result<Self> {
        let known = known_keys();
        if let Some(k) = obj.keys().find(|k| !known.contains(k)) {
            return Err(Error::config(k.clone(), "unknown configuration key"));
        }
        // Deserialize key by key so type errors name the offending key.
        let mut base = serde_json::to_value(RunConfig::default()).map_err(json_err("defaults"))?;
        for (k, v) in obj {
            let mut probe = base.clone();
            probe[&k] = v;
            if let Err(e) = serde_json::from_value::<RunConfig>(probe.clone()) {
                return Err(Error::config(k, e.to_string()));
            }
            base = probe;
        }
        let cfg: RunConfig = serde_json::from_value(base).map_err(json_err("config"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(json_err("config file"))?;
        match value {
            Value::Object(m) => Self::from_json_object(m),
            _ => Err(Error::config("<root>", "config must be a JSON object")),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Loads an optional file, then applies `key=value` overrides in order.
    /// Override values are parsed as JSON, falling back to a plain string.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut obj = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                match serde_json::from_str::<Value>(&text).map_err(json_err(p.display().to_string()))? {
                    Value::Object(m) => m,
                    _ => return Err(Error::config("<root>", "config must be a JSON object")),
                }
            }
            None => Map::new(),
        };
        for (k, raw) in overrides {
            let v = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            obj.insert(k.clone(), v);
        }
        Self::from_json_object(obj)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().reward.validate()?;
        self.ppo_config().validate()?;
        self.maml_config().validate()?;
        if self.hours_per_day == 0 {
            return Err(Error::config("hours_per_day", "must be at least 1"));
        }
        if !(self.threshold.is_finite()) {
            return Err(Error::config("threshold", "must be finite"));
        }
        if !(self.price_jitter >= 0.0 && self.price_jitter < 1.0) {
            return Err(Error::config("price_jitter", "must lie in [0, 1)"));
        }
        for (key, f) in [
            ("cs_fixed_fraction", self.cs_fixed_fraction),
            ("cs_curtail_fraction", self.cs_curtail_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::config(key, "must lie in [0, 1]"));
            }
        }
        if self.cs_fixed_fraction + self.cs_curtail_fraction > 1.0 {
            return Err(Error::config(
                "cs_curtail_fraction",
                "fixed and curtailable fractions must sum to at most 1",
            ));
        }
        if !(self.multiplier_min > 0.0 && self.multiplier_min <= self.multiplier_max) {
            return Err(Error::config("multiplier_min", "need 0 < multiplier_min <= multiplier_max"));
        }
        if !(self.eval_multiplier > 0.0) {
            return Err(Error::config("eval_multiplier", "must be positive"));
        }
        if self.eval_days == 0 {
            return Err(Error::config("eval_days", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.final_window == 0 {
            return Err(Error::config("final_window", "must be at least 1"));
        }
        if let Some(tag) = &self.tag {
            if tag.is_empty() || tag.contains(['/', '\\']) || tag == "." || tag == ".." {
                return Err(Error::config("tag", "must be a plain directory name"));
            }
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            hours_per_day: self.hours_per_day,
            reward: RewardConfig {
                lambda: self.lambda,
                dhat_fraction: self.dhat_fraction,
            },
            threshold: self.threshold,
            t_curtail: self.t_curtail,
            t_shift: self.t_shift,
            price_jitter: self.price_jitter,
            cs_fixed_fraction: self.cs_fixed_fraction,
            cs_curtail_fraction: self.cs_curtail_fraction,
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            clip_epsilon: self.clip_epsilon,
            value_coef: self.value_coef,
            sgd_learning_rate: self.sgd_learning_rate,
            epochs_per_batch: self.epochs_per_batch,
            days_per_iteration: self.days_per_iteration,
        }
    }

    pub fn maml_config(&self) -> MamlConfig {
        MamlConfig {
            meta_learning_rate: self.meta_learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.adam_epsilon,
            tasks_per_meta_step: self.tasks_per_meta_step,
            inner_steps: self.inner_steps,
            meta_iterations: self.meta_iterations,
            checkpoint_at: self.checkpoint_at.clone(),
            meta_grad_mode: self.meta_grad_mode,
        }
    }

    pub fn experiment_spec(&self, id: ExperimentId) -> ExperimentSpec {
        let mut spec = ExperimentSpec::standard(id);
        spec.train_dist = TaskDistribution {
            kinds: id.train_kinds(),
            multiplier_min: self.multiplier_min,
            multiplier_max: self.multiplier_max,
        };
        spec.eval_task = TaskSpec {
            person: id.eval_kind(),
            multiplier: self.eval_multiplier,
            baseline_seed: self.eval_baseline_seed,
            price_seed: self.eval_price_seed,
        };
        spec.eval_days = self.eval_days;
        spec.trials = self.trials;
        spec.final_window = self.final_window;
        spec.ablation_checkpoints = self.checkpoint_at.clone();
        spec
    }

    pub fn tag(&self) -> String {
        self.tag.clone().unwrap_or_else(|| format!("seed{}", self.seed))
    }
}
