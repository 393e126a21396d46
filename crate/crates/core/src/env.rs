//! Day-step office demand-response simulator.
//!
//! Each step is one working day: the agent posts a points value for every
//! hour, the simulated occupant responds deterministically, and the day's
//! demand is costed at the grid price. Episodes last a single day.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, RngStream};

pub const DEFAULT_HOURS: usize = 10;
pub const POINTS_MIN: f64 = 0.0;
pub const POINTS_MAX: f64 = 10.0;
/// Number of synthetic historical days behind the 5%/95% demand bounds.
pub const HISTORY_DAYS: usize = 60;

const BASE_LOAD: f64 = 15.0;
const BUMP_HEIGHT: f64 = 10.0;
const NOISE_STD: f64 = 1.0;
const LOAD_FLOOR: f64 = 1.0;

/// Time-of-use tiers for the default 10-hour day starting at 08:00.
const TOU_10H: [f64; 10] = [0.10, 0.10, 0.10, 0.20, 0.20, 0.20, 0.40, 0.40, 0.40, 0.20];

/// Hourly grid price and occupant baseline for one simulated day.
#[derive(Clone, Debug, PartialEq)]
pub struct DayGrid {
    pub price: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl DayGrid {
    pub fn new(price: Vec<f64>, baseline: Vec<f64>) -> Result<Self> {
        if price.len() != baseline.len() {
            return Err(Error::Shape {
                what: "baseline",
                expected: price.len(),
                got: baseline.len(),
            });
        }
        if price.is_empty() {
            return Err(Error::Empty("day grid"));
        }
        if price.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::config("grid_price", "all prices must be positive"));
        }
        if baseline.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::config("baseline", "all baseline values must be positive"));
        }
        Ok(Self { price, baseline })
    }

    pub fn hours(&self) -> usize {
        self.price.len()
    }
}

/// Synthetic occupant history: today's baseline and per-hour demand bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineProfile {
    pub baseline: Vec<f64>,
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
}

fn workday_shape(hours: usize) -> Vec<f64> {
    let center = (hours as f64 - 1.0) / 2.0;
    let width = (hours as f64 / 4.0).max(0.5);
    (0..hours)
        .map(|t| {
            let z = (t as f64 - center) / width;
            BASE_LOAD + BUMP_HEIGHT * (-0.5 * z * z).exp()
        })
        .collect()
}

fn noisy_day(shape: &[f64], rng: &mut RngStream) -> Vec<f64> {
    let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
    shape
        .iter()
        .map(|s| (s + noise.sample(rng)).max(LOAD_FLOOR))
        .collect()
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Seeded synthetic workday: a mid-day bump over a flat base plus noise.
///
/// The 5%/95% bounds are taken per hour over [`HISTORY_DAYS`] days drawn
/// from the same process; the baseline itself is one further draw.
pub fn generate_baseline(seed: u64, hours: usize) -> Result<BaselineProfile> {
    if hours == 0 {
        return Err(Error::config("hours_per_day", "must be at least 1"));
    }
    let shape = workday_shape(hours);
    let mut rng = seed::stream(seed);
    let history: Vec<Vec<f64>> = (0..HISTORY_DAYS).map(|_| noisy_day(&shape, &mut rng)).collect();
    let baseline = noisy_day(&shape, &mut rng);

    let mut d_min = Vec::with_capacity(hours);
    let mut d_max = Vec::with_capacity(hours);
    for t in 0..hours {
        let mut column: Vec<f64> = history.iter().map(|day| day[t]).collect();
        column.sort_by(f64::total_cmp);
        let lo = quantile_sorted(&column, 0.05);
        let hi = quantile_sorted(&column, 0.95);
        d_min.push(lo);
        // Guarantees a non-empty band even for degenerate (floored) hours.
        d_max.push(if hi > lo { hi } else { lo + f64::EPSILON * lo.max(1.0) });
    }
    Ok(BaselineProfile {
        baseline,
        d_min,
        d_max,
    })
}

/// Time-of-use grid price with a seeded ±`jitter` multiplicative jitter.
///
/// A 10-hour day uses the off-peak/shoulder/peak tiers directly; other day
/// lengths resample the same tier pattern.
pub fn tou_price_curve(hours: usize, price_seed: u64, jitter: f64) -> Vec<f64> {
    let mut rng = seed::stream(price_seed);
    (0..hours)
        .map(|t| {
            let tier = TOU_10H[(t * TOU_10H.len()) / hours];
            let u: f64 = if jitter > 0.0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            tier * (1.0 + u)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseKind {
    Linear,
    Sinusoidal,
    ThresholdExponential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicPerson {
    pub kind: ResponseKind,
    /// Points multiplier `m`; not used by the threshold-exponential kind.
    pub multiplier: f64,
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
    /// Strict cutoff for the threshold-exponential kind.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurtailShiftPerson {
    pub b_fixed: Vec<f64>,
    pub b_curtail: Vec<f64>,
    pub b_shift: Vec<f64>,
    pub t_curtail: usize,
    pub t_shift: usize,
}

impl CurtailShiftPerson {
    /// Splits a baseline into fixed, curtailable and shiftable parts.
    pub fn from_baseline(
        baseline: &[f64],
        fixed_fraction: f64,
        curtail_fraction: f64,
        t_curtail: usize,
        t_shift: usize,
    ) -> Self {
        let shift_fraction = 1.0 - fixed_fraction - curtail_fraction;
        Self {
            b_fixed: baseline.iter().map(|b| b * fixed_fraction).collect(),
            b_curtail: baseline.iter().map(|b| b * curtail_fraction).collect(),
            b_shift: baseline.iter().map(|b| b * shift_fraction).collect(),
            t_curtail,
            t_shift,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PersonModel {
    DeterministicFunction(DeterministicPerson),
    CurtailAndShift(CurtailShiftPerson),
}

impl PersonModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            PersonModel::DeterministicFunction(p) => {
                if p.d_min.len() != p.d_max.len() {
                    return Err(Error::Shape {
                        what: "d_max",
                        expected: p.d_min.len(),
                        got: p.d_max.len(),
                    });
                }
                if p.d_min.iter().any(|&lo| !(lo > 0.0)) {
                    return Err(Error::config("d_min", "must be positive"));
                }
                if p.d_min.iter().zip(&p.d_max).any(|(lo, hi)| lo > hi) {
                    return Err(Error::config("d_min", "must not exceed d_max"));
                }
                if !(p.multiplier > 0.0) {
                    return Err(Error::config("multiplier", "must be positive"));
                }
            }
            PersonModel::CurtailAndShift(p) => {
                let h = p.b_fixed.len();
                for (what, v) in [("b_curtail", &p.b_curtail), ("b_shift", &p.b_shift)] {
                    if v.len() != h {
                        return Err(Error::Shape {
                            what,
                            expected: h,
                            got: v.len(),
                        });
                    }
                }
                let parts = p.b_fixed.iter().chain(&p.b_curtail).chain(&p.b_shift);
                if parts.clone().any(|&x| x < 0.0 || !x.is_finite()) {
                    return Err(Error::config("curtail_shift", "load components must be non-negative"));
                }
                if parts.sum::<f64>() <= 0.0 {
                    return Err(Error::config("curtail_shift", "total load must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn respond(&self, points: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
        match self {
            PersonModel::DeterministicFunction(p) => deterministic_response(p, points, baseline),
            PersonModel::CurtailAndShift(p) => curtail_shift_response(p, points),
        }
    }
}

/// Closed-form occupant response, clipped to the historical `[d_min, d_max]`.
pub fn deterministic_response(
    person: &DeterministicPerson,
    points: &[f64],
    baseline: &[f64],
) -> Result<Vec<f64>> {
    let h = baseline.len();
    for (what, got) in [
        ("points", points.len()),
        ("d_min", person.d_min.len()),
        ("d_max", person.d_max.len()),
    ] {
        if got != h {
            return Err(Error::Shape {
                what,
                expected: h,
                got,
            });
        }
    }
    let m = person.multiplier;
    Ok((0..h)
        .map(|t| {
            let p = points[t];
            let raw = match person.kind {
                ResponseKind::Linear => baseline[t] - p * m,
                ResponseKind::Sinusoidal => baseline[t] - p.sin() * m,
                ResponseKind::ThresholdExponential => {
                    if p > person.threshold {
                        baseline[t] - p.exp()
                    } else {
                        baseline[t]
                    }
                }
            };
            raw.clamp(person.d_min[t], person.d_max[t])
        })
        .collect())
}

/// Hours whose curtailable load is dropped: the `t_curtail` highest-points
/// hours, earlier hour first on ties.
pub fn curtailed_hours(points: &[f64], t_curtail: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].total_cmp(&points[a]).then(a.cmp(&b)));
    order.truncate(t_curtail.min(points.len()));
    order
}

/// Lowest-points hour within `[t - t_shift, t + t_shift]`, earliest on ties.
pub fn shift_target(points: &[f64], t: usize, t_shift: usize) -> usize {
    let lo = t.saturating_sub(t_shift);
    let hi = (t + t_shift).min(points.len() - 1);
    (lo..=hi).fold(lo, |best, s| if points[s] < points[best] { s } else { best })
}

pub fn curtail_shift_response(person: &CurtailShiftPerson, points: &[f64]) -> Result<Vec<f64>> {
    let h = person.b_fixed.len();
    for (what, got) in [
        ("points", points.len()),
        ("b_curtail", person.b_curtail.len()),
        ("b_shift", person.b_shift.len()),
    ] {
        if got != h {
            return Err(Error::Shape {
                what,
                expected: h,
                got,
            });
        }
    }
    if h == 0 {
        return Ok(Vec::new());
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::non_finite("points"));
    }
    let mut demand = person.b_fixed.clone();
    let mut curtailed = vec![false; h];
    for t in curtailed_hours(points, person.t_curtail) {
        curtailed[t] = true;
    }
    for t in 0..h {
        if !curtailed[t] {
            demand[t] += person.b_curtail[t];
        }
    }
    // Shifted load lands after the in-place load, in source-hour order.
    for t in 0..h {
        demand[shift_target(points, t, person.t_shift)] += person.b_shift[t];
    }
    Ok(demand)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Penalty magnitude λ.
    pub lambda: f64,
    /// κ in `d̂ = κ · bᵀg`.
    pub dhat_fraction: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            dhat_fraction: 0.5,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if !(self.dhat_fraction > 0.0 && self.dhat_fraction <= 1.0) {
            return Err(Error::config(
                "dhat_fraction",
                format!("must lie in (0, 1], got {}", self.dhat_fraction),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardOutcome {
    pub reward: f64,
    /// dᵀg.
    pub cost: f64,
    pub penalized: bool,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-ln(dᵀg) - λ·[dᵀg < κ·bᵀg]`.
pub fn compute_reward(demand: &[f64], price: &[f64], baseline: &[f64], cfg: &RewardConfig) -> Result<RewardOutcome> {
    if demand.len() != price.len() || baseline.len() != price.len() {
        return Err(Error::Shape {
            what: "reward inputs",
            expected: price.len(),
            got: if demand.len() != price.len() {
                demand.len()
            } else {
                baseline.len()
            },
        });
    }
    let cost = dot(demand, price);
    if !(cost > 0.0) {
        return Err(Error::NonPositiveCost(cost));
    }
    let dhat = cfg.dhat_fraction * dot(baseline, price);
    let penalized = cost < dhat;
    let reward = -cost.ln() - if penalized { cfg.lambda } else { 0.0 };
    Ok(RewardOutcome {
        reward,
        cost,
        penalized,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PersonKind {
    Linear,
    Sinusoidal,
    ThresholdExponential,
    CurtailAndShift,
}

impl PersonKind {
    pub fn response_kind(self) -> Option<ResponseKind> {
        match self {
            PersonKind::Linear => Some(ResponseKind::Linear),
            PersonKind::Sinusoidal => Some(ResponseKind::Sinusoidal),
            PersonKind::ThresholdExponential => Some(ResponseKind::ThresholdExponential),
            PersonKind::CurtailAndShift => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "linear" => Some(PersonKind::Linear),
            "sinusoidal" | "sin" => Some(PersonKind::Sinusoidal),
            "thresholdexponential" | "thresholdexp" | "exponential" => Some(PersonKind::ThresholdExponential),
            "curtailandshift" | "curtailshift" => Some(PersonKind::CurtailAndShift),
            _ => None,
        }
    }
}

/// One sampled environment configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub person: PersonKind,
    pub multiplier: f64,
    pub baseline_seed: u64,
    pub price_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub kinds: Vec<PersonKind>,
    pub multiplier_min: f64,
    pub multiplier_max: f64,
}

impl TaskDistribution {
    pub fn new(kinds: Vec<PersonKind>) -> Self {
        Self {
            kinds,
            multiplier_min: 0.5,
            multiplier_max: 2.0,
        }
    }
}

/// Kind uniform over the allowed set, multiplier uniform over its range,
/// fresh baseline and price seeds.
pub fn sample_task(dist: &TaskDistribution, rng: &mut RngStream) -> Result<TaskSpec> {
    if dist.kinds.is_empty() {
        return Err(Error::Empty("task distribution kinds"));
    }
    if !(dist.multiplier_min > 0.0 && dist.multiplier_min <= dist.multiplier_max) {
        return Err(Error::config(
            "multiplier_min",
            "multiplier range must be positive and ordered",
        ));
    }
    let person = dist.kinds[rng.random_range(0..dist.kinds.len())];
    let multiplier = if dist.multiplier_min == dist.multiplier_max {
        dist.multiplier_min
    } else {
        rng.random_range(dist.multiplier_min..dist.multiplier_max)
    };
    Ok(TaskSpec {
        person,
        multiplier,
        baseline_seed: rng.random(),
        price_seed: rng.random(),
    })
}

/// Environment constants shared by every task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub hours_per_day: usize,
    pub reward: RewardConfig,
    pub threshold: f64,
    pub t_curtail: usize,
    pub t_shift: usize,
    pub price_jitter: f64,
    pub cs_fixed_fraction: f64,
    pub cs_curtail_fraction: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            hours_per_day: DEFAULT_HOURS,
            reward: RewardConfig::default(),
            threshold: 5.0,
            t_curtail: 3,
            t_shift: 3,
            price_jitter: 0.1,
            cs_fixed_fraction: 0.4,
            cs_curtail_fraction: 0.3,
        }
    }
}

impl EnvConfig {
    pub fn obs_dim(&self) -> usize {
        3 * self.hours_per_day
    }

    pub fn act_dim(&self) -> usize {
        self.hours_per_day
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    /// Points after clipping to `[POINTS_MIN, POINTS_MAX]`.
    pub points: Vec<f64>,
    pub demand: Vec<f64>,
    pub cost: f64,
    pub penalized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A single task's simulator instance.
#[derive(Clone, Debug)]
pub struct OfficeEnv {
    task: TaskSpec,
    cfg: EnvConfig,
    grid: DayGrid,
    person: PersonModel,
    prev_demand: Vec<f64>,
    baseline_mean: f64,
    price_mean: f64,
}

impl OfficeEnv {
    pub fn new(task: TaskSpec, cfg: &EnvConfig) -> Result<Self> {
        cfg.reward.validate()?;
        let hours = cfg.hours_per_day;
        let profile = generate_baseline(task.baseline_seed, hours)?;
        let price = tou_price_curve(hours, task.price_seed, cfg.price_jitter);
        let grid = DayGrid::new(price, profile.baseline.clone())?;
        let person = match task.person.response_kind() {
            Some(kind) => PersonModel::DeterministicFunction(DeterministicPerson {
                kind,
                multiplier: task.multiplier,
                d_min: profile.d_min,
                d_max: profile.d_max,
                threshold: cfg.threshold,
            }),
            None => PersonModel::CurtailAndShift(CurtailShiftPerson::from_baseline(
                &grid.baseline,
                cfg.cs_fixed_fraction,
                cfg.cs_curtail_fraction,
                cfg.t_curtail,
                cfg.t_shift,
            )),
        };
        Self::from_parts(task, cfg.clone(), grid, person)
    }

    /// Builds an environment around an explicit grid and occupant model.
    pub fn from_parts(task: TaskSpec, cfg: EnvConfig, grid: DayGrid, person: PersonModel) -> Result<Self> {
        person.validate()?;
        let baseline_mean = grid.baseline.iter().sum::<f64>() / grid.hours() as f64;
        let price_mean = grid.price.iter().sum::<f64>() / grid.hours() as f64;
        let prev_demand = grid.baseline.clone();
        Ok(Self {
            task,
            cfg,
            grid,
            person,
            prev_demand,
            baseline_mean,
            price_mean,
        })
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn grid(&self) -> &DayGrid {
        &self.grid
    }

    pub fn person(&self) -> &PersonModel {
        &self.person
    }

    pub fn obs_dim(&self) -> usize {
        3 * self.grid.hours()
    }

    pub fn act_dim(&self) -> usize {
        self.grid.hours()
    }

    /// `[previous demand, price, baseline]`, each divided by its mean level.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.obs_dim());
        obs.extend(self.prev_demand.iter().map(|d| d / self.baseline_mean));
        obs.extend(self.grid.price.iter().map(|g| g / self.price_mean));
        obs.extend(self.grid.baseline.iter().map(|b| b / self.baseline_mean));
        obs
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.prev_demand = self.grid.baseline.clone();
        self.observation()
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Step> {
        if action.len() != self.act_dim() {
            return Err(Error::Shape {
                what: "action",
                expected: self.act_dim(),
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::non_finite("action"));
        }
        let points: Vec<f64> = action.iter().map(|a| a.clamp(POINTS_MIN, POINTS_MAX)).collect();
        let demand = self.person.respond(&points, &self.grid.baseline)?;
        let outcome = compute_reward(&demand, &self.grid.price, &self.grid.baseline, &self.cfg.reward)?;
        self.prev_demand = demand.clone();
        Ok(Step {
            obs: self.observation(),
            reward: outcome.reward,
            done: true,
            info: StepInfo {
                points,
                demand,
                cost: outcome.cost,
                penalized: outcome.penalized,
            },
        })
    }
}
