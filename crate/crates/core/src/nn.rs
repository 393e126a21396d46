//! Shared-trunk actor-critic MLP with hand-derived reverse-mode gradients.
//!
//! Topology (fixed):
//!
//! ```text
//! h1   = tanh(obs · W1 + b1)          W1: obs_dim × H
//! h2   = tanh(h1 · W2 + b2)           W2: H × H
//! mean = h2 · Wa + ba                 Wa: H × act_dim
//! V    = h2 · Wv + bv                 Wv: H × 1
//! std  = exp(log_std)                 state independent
//! ```
//!
//! All parameters live in one contiguous `f64` buffer laid out in
//! [`TensorId::ALL`] order; matrices are row-major `[fan_in][fan_out]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed::RngStream;

pub const HIDDEN: usize = 256;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NetDims {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: usize,
}

impl NetDims {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            hidden: HIDDEN,
        }
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        TensorId::ALL.iter().map(|t| t.len(self)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self, id: TensorId) -> std::ops::Range<usize> {
        let start: usize = TensorId::ALL
            .iter()
            .take_while(|&&t| t != id)
            .map(|t| t.len(self))
            .sum();
        start..start + id.len(self)
    }
}

/// Parameter tensors, in storage and checkpoint order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TensorId {
    TrunkW1,
    TrunkB1,
    TrunkW2,
    TrunkB2,
    HeadActionW,
    HeadActionB,
    HeadValueW,
    HeadValueB,
    ActionLogStd,
}

impl TensorId {
    pub const ALL: [TensorId; 9] = [
        TensorId::TrunkW1,
        TensorId::TrunkB1,
        TensorId::TrunkW2,
        TensorId::TrunkB2,
        TensorId::HeadActionW,
        TensorId::HeadActionB,
        TensorId::HeadValueW,
        TensorId::HeadValueB,
        TensorId::ActionLogStd,
    ];

    /// (rows, cols); vectors are reported as `n × 1`.
    pub fn shape(self, d: &NetDims) -> (usize, usize) {
        match self {
            TensorId::TrunkW1 => (d.obs_dim, d.hidden),
            TensorId::TrunkB1 | TensorId::TrunkB2 => (d.hidden, 1),
            TensorId::TrunkW2 => (d.hidden, d.hidden),
            TensorId::HeadActionW => (d.hidden, d.act_dim),
            TensorId::HeadActionB | TensorId::ActionLogStd => (d.act_dim, 1),
            TensorId::HeadValueW => (d.hidden, 1),
            TensorId::HeadValueB => (1, 1),
        }
    }

    pub fn len(self, d: &NetDims) -> usize {
        let (r, c) = self.shape(d);
        r * c
    }

    pub fn name(self) -> &'static str {
        match self {
            TensorId::TrunkW1 => "trunk_w1",
            TensorId::TrunkB1 => "trunk_b1",
            TensorId::TrunkW2 => "trunk_w2",
            TensorId::TrunkB2 => "trunk_b2",
            TensorId::HeadActionW => "head_action_w",
            TensorId::HeadActionB => "head_action_b",
            TensorId::HeadValueW => "head_value_w",
            TensorId::HeadValueB => "head_value_b",
            TensorId::ActionLogStd => "action_log_std",
        }
    }

    /// Glorot fan sizes for weight matrices, `None` for biases and log-std.
    fn glorot_fans(self, d: &NetDims) -> Option<(usize, usize)> {
        match self {
            TensorId::TrunkW1 | TensorId::TrunkW2 | TensorId::HeadActionW | TensorId::HeadValueW => {
                Some(self.shape(d))
            }
            _ => None,
        }
    }
}

/// All weights of the actor-critic network plus the action log-std vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    dims: NetDims,
    data: Vec<f64>,
}

/// Gradient of a scalar loss with respect to every entry of [`PolicyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    dims: NetDims,
    data: Vec<f64>,
}

macro_rules! tensor_access {
    ($ty:ty) => {
        impl $ty {
            pub fn zeros(dims: NetDims) -> Self {
                Self {
                    dims,
                    data: vec![0.0; dims.len()],
                }
            }

            pub fn from_flat(dims: NetDims, data: Vec<f64>) -> Result<Self> {
                if data.len() != dims.len() {
                    return Err(Error::Shape {
                        what: stringify!($ty),
                        expected: dims.len(),
                        got: data.len(),
                    });
                }
                Ok(Self { dims, data })
            }

            pub fn dims(&self) -> NetDims {
                self.dims
            }

            pub fn as_flat(&self) -> &[f64] {
                &self.data
            }

            pub fn as_flat_mut(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn into_flat(self) -> Vec<f64> {
                self.data
            }

            pub fn tensor(&self, id: TensorId) -> &[f64] {
                &self.data[self.dims.offset(id)]
            }

            pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
                let r = self.dims.offset(id);
                &mut self.data[r]
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|x| x.is_finite())
            }

            /// First tensor holding a non-finite entry.
            pub fn first_non_finite(&self) -> Option<TensorId> {
                TensorId::ALL
                    .into_iter()
                    .find(|&id| self.tensor(id).iter().any(|x| !x.is_finite()))
            }
        }
    };
}

tensor_access!(PolicyParams);
tensor_access!(Gradients);

impl PolicyParams {
    /// Glorot-uniform weights, zero biases, zero log-std.
    pub fn random(dims: NetDims, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(dims);
        for id in TensorId::ALL {
            if let Some((fan_in, fan_out)) = id.glorot_fans(&dims) {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for w in p.tensor_mut(id) {
                    *w = rng.random_range(-limit..limit);
                }
            }
        }
        p
    }

    pub fn log_std(&self) -> &[f64] {
        self.tensor(TensorId::ActionLogStd)
    }

    pub fn clamp_log_std(&mut self) {
        for s in self.tensor_mut(TensorId::ActionLogStd) {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.dims.obs_dim {
            return Err(Error::Shape {
                what: "observation",
                expected: self.dims.obs_dim,
                got: obs.len(),
            });
        }
        Ok(())
    }

    /// Action mean and state value for one observation.
    pub fn forward(&self, obs: &[f64]) -> Result<Forward> {
        self.check_obs(obs)?;
        let mut act = Activations::new(&self.dims);
        self.forward_into(obs, &mut act);
        Ok(Forward {
            action_mean: act.mean,
            value: act.value,
        })
    }

    fn forward_into(&self, obs: &[f64], act: &mut Activations) {
        let d = self.dims;
        affine(obs, self.tensor(TensorId::TrunkW1), self.tensor(TensorId::TrunkB1), &mut act.h1);
        act.h1.iter_mut().for_each(|x| *x = x.tanh());
        affine(&act.h1, self.tensor(TensorId::TrunkW2), self.tensor(TensorId::TrunkB2), &mut act.h2);
        act.h2.iter_mut().for_each(|x| *x = x.tanh());
        affine(
            &act.h2,
            self.tensor(TensorId::HeadActionW),
            self.tensor(TensorId::HeadActionB),
            &mut act.mean,
        );
        let mut v = [0.0];
        affine(
            &act.h2,
            self.tensor(TensorId::HeadValueW),
            self.tensor(TensorId::HeadValueB),
            &mut v,
        );
        act.value = v[0];
        debug_assert_eq!(act.mean.len(), d.act_dim);
    }
}

impl Gradients {
    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape {
                what: "gradients",
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub action_mean: Vec<f64>,
    pub value: f64,
}

struct Activations {
    h1: Vec<f64>,
    h2: Vec<f64>,
    mean: Vec<f64>,
    value: f64,
}

impl Activations {
    fn new(d: &NetDims) -> Self {
        Self {
            h1: vec![0.0; d.hidden],
            h2: vec![0.0; d.hidden],
            mean: vec![0.0; d.act_dim],
            value: 0.0,
        }
    }
}

/// out = input · w + b, with `w` row-major `[input.len()][out.len()]`.
fn affine(input: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let n = out.len();
    out.copy_from_slice(b);
    for (x, row) in input.iter().zip(w.chunks_exact(n)) {
        for (o, wij) in out.iter_mut().zip(row) {
            *o += x * wij;
        }
    }
}

/// out[i] = Σ_j w[i][j] · delta[j]  (gradient through an affine map).
fn affine_back(delta: &[f64], w: &[f64], out: &mut [f64]) {
    let n = delta.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o = row.iter().zip(delta).map(|(a, b)| a * b).sum();
    }
}

/// gw[i][j] += input[i] · delta[j]; gb[j] += delta[j].
fn accumulate_outer(input: &[f64], delta: &[f64], gw: &mut [f64], gb: &mut [f64]) {
    let n = delta.len();
    for (x, row) in input.iter().zip(gw.chunks_exact_mut(n)) {
        if *x == 0.0 {
            continue;
        }
        for (g, d) in row.iter_mut().zip(delta) {
            *g += x * d;
        }
    }
    for (g, d) in gb.iter_mut().zip(delta) {
        *g += d;
    }
}

fn check_log_std(log_std: &[f64]) -> Result<()> {
    if log_std
        .iter()
        .any(|s| !(LOG_STD_MIN..=LOG_STD_MAX).contains(s))
    {
        return Err(Error::config(
            "action_log_std",
            format!("entries must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}]"),
        ));
    }
    Ok(())
}

/// `mean + exp(log_std) ⊙ z` with `z ~ N(0, I)`; no clipping.
pub fn gaussian_sample(mean: &[f64], log_std: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if mean.len() != log_std.len() {
        return Err(Error::Shape {
            what: "log_std",
            expected: mean.len(),
            got: log_std.len(),
        });
    }
    check_log_std(log_std)?;
    Ok(mean
        .iter()
        .zip(log_std)
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(rng);
            m + s.exp() * z
        })
        .collect())
}

/// Log-density of a diagonal Gaussian, summed over dimensions.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> Result<f64> {
    if mean.len() != log_std.len() || mean.len() != action.len() {
        return Err(Error::Shape {
            what: "gaussian_log_prob inputs",
            expected: mean.len(),
            got: if mean.len() != log_std.len() {
                log_std.len()
            } else {
                action.len()
            },
        });
    }
    Ok(mean
        .iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - HALF_LN_2PI
        })
        .sum())
}

/// Inputs of the clipped-surrogate actor-critic loss.
#[derive(Clone, Debug)]
pub struct LossBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub clip_epsilon: f64,
    pub value_coef: f64,
}

impl LossBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    fn validate(&self, dims: &NetDims) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Empty("loss batch"));
        }
        for (what, got) in [
            ("actions", self.actions.len()),
            ("old_log_probs", self.old_log_probs.len()),
            ("advantages", self.advantages.len()),
            ("value_targets", self.value_targets.len()),
        ] {
            if got != n {
                return Err(Error::Shape {
                    what,
                    expected: n,
                    got,
                });
            }
        }
        for o in &self.observations {
            if o.len() != dims.obs_dim {
                return Err(Error::Shape {
                    what: "observation",
                    expected: dims.obs_dim,
                    got: o.len(),
                });
            }
        }
        for a in &self.actions {
            if a.len() != dims.act_dim {
                return Err(Error::Shape {
                    what: "action",
                    expected: dims.act_dim,
                    got: a.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    /// `policy + value`.
    pub total: f64,
    /// `-mean(min(r·A, clip(r, 1-ε, 1+ε)·A))`.
    pub policy: f64,
    /// `value_coef · mean((V - target)²)`.
    pub value: f64,
}

/// Clipped-surrogate loss plus weighted value loss, and its exact gradient.
///
/// Where the clipped branch is strictly smaller than the unclipped one the
/// sample contributes no policy gradient; on ties (ratio inside the clip
/// range) the unclipped branch is differentiated.
pub fn backprop(params: &PolicyParams, batch: &LossBatch) -> Result<(LossBreakdown, Gradients)> {
    let dims = params.dims();
    batch.validate(&dims)?;
    let n = batch.len() as f64;
    let eps = batch.clip_epsilon;
    let log_std = params.log_std().to_vec();
    let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();

    let mut grads = Gradients::zeros(dims);
    let mut act = Activations::new(&dims);
    let mut d_mean = vec![0.0; dims.act_dim];
    let mut d_h2 = vec![0.0; dims.hidden];
    let mut d_h1 = vec![0.0; dims.hidden];
    let mut tmp = vec![0.0; dims.hidden];
    let mut d_log_std = vec![0.0; dims.act_dim];

    let mut policy_sum = 0.0;
    let mut value_sum = 0.0;

    for i in 0..batch.len() {
        let obs = &batch.observations[i];
        let action = &batch.actions[i];
        params.forward_into(obs, &mut act);

        let log_prob = gaussian_log_prob(&act.mean, &log_std, action)?;
        let ratio = (log_prob - batch.old_log_probs[i]).exp();
        if !ratio.is_finite() {
            return Err(Error::non_finite(format!("probability ratio (sample {i})")));
        }
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        policy_sum -= unclipped.min(clipped);

        // d(loss)/d(log_prob): only the unclipped branch depends on θ.
        let g_logp = if unclipped <= clipped { -adv * ratio / n } else { 0.0 };

        let value_err = act.value - batch.value_targets[i];
        value_sum += value_err * value_err;
        let g_value = 2.0 * batch.value_coef * value_err / n;

        for k in 0..dims.act_dim {
            let diff = action[k] - act.mean[k];
            d_mean[k] = g_logp * diff * inv_var[k];
            d_log_std[k] += g_logp * (diff * diff * inv_var[k] - 1.0);
        }

        // Heads.
        {
            let (gw, gb) = split_pair(&mut grads, TensorId::HeadActionW, TensorId::HeadActionB);
            accumulate_outer(&act.h2, &d_mean, gw, gb);
        }
        {
            let (gw, gb) = split_pair(&mut grads, TensorId::HeadValueW, TensorId::HeadValueB);
            accumulate_outer(&act.h2, &[g_value], gw, gb);
        }
        affine_back(&d_mean, params.tensor(TensorId::HeadActionW), &mut d_h2);
        for (dh, wv) in d_h2.iter_mut().zip(params.tensor(TensorId::HeadValueW)) {
            *dh += wv * g_value;
        }

        // Second trunk layer.
        for (dh, h) in d_h2.iter_mut().zip(&act.h2) {
            *dh *= 1.0 - h * h;
        }
        {
            let (gw, gb) = split_pair(&mut grads, TensorId::TrunkW2, TensorId::TrunkB2);
            accumulate_outer(&act.h1, &d_h2, gw, gb);
        }
        affine_back(&d_h2, params.tensor(TensorId::TrunkW2), &mut tmp);

        // First trunk layer.
        for ((dh, t), h) in d_h1.iter_mut().zip(&tmp).zip(&act.h1) {
            *dh = t * (1.0 - h * h);
        }
        let (gw, gb) = split_pair(&mut grads, TensorId::TrunkW1, TensorId::TrunkB1);
        accumulate_outer(obs, &d_h1, gw, gb);
    }

    grads
        .tensor_mut(TensorId::ActionLogStd)
        .copy_from_slice(&d_log_std);

    let policy = policy_sum / n;
    if !policy.is_finite() {
        return Err(Error::non_finite("policy loss"));
    }
    let value = batch.value_coef * value_sum / n;
    if !value.is_finite() {
        return Err(Error::non_finite("value loss"));
    }
    if let Some(id) = grads.first_non_finite() {
        return Err(Error::non_finite(format!("gradient of {}", id.name())));
    }
    Ok((
        LossBreakdown {
            total: policy + value,
            policy,
            value,
        },
        grads,
    ))
}

/// Mutable views of a weight tensor and the bias that immediately follows it.
fn split_pair(g: &mut Gradients, w: TensorId, b: TensorId) -> (&mut [f64], &mut [f64]) {
    let rw = g.dims.offset(w);
    let rb = g.dims.offset(b);
    debug_assert_eq!(rw.end, rb.start);
    let (head, tail) = g.data[rw.start..rb.end].split_at_mut(rw.len());
    (head, tail)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

/// Optimizer rule plus its accumulators. One instance per parameter owner.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self::new(
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            },
            learning_rate,
        )
    }

    fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Returns updated parameters; log-std is clamped to its legal range.
    pub fn step(&mut self, params: &PolicyParams, grads: &Gradients) -> Result<PolicyParams> {
        if params.dims() != grads.dims() {
            return Err(Error::Shape {
                what: "gradients",
                expected: params.as_flat().len(),
                got: grads.as_flat().len(),
            });
        }
        let mut next = params.clone();
        self.step_flat(next.as_flat_mut(), grads.as_flat())?;
        next.clamp_log_std();
        Ok(next)
    }

    /// In-place update of a flat parameter vector. On error neither the
    /// parameters nor the optimizer state are modified.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                what: "gradients",
                expected: params.len(),
                got: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("gradient passed to optimizer"));
        }
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                let next: Vec<f64> = params.iter().zip(grads).map(|(p, g)| p - lr * g).collect();
                if next.iter().any(|x| !x.is_finite()) {
                    return Err(Error::non_finite("SGD update"));
                }
                params.copy_from_slice(&next);
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                if self.first_moment.is_empty() && self.step_count == 0 {
                    self.first_moment = vec![0.0; params.len()];
                    self.second_moment = vec![0.0; params.len()];
                }
                if self.first_moment.len() != params.len() {
                    return Err(Error::Shape {
                        what: "ADAM moments",
                        expected: self.first_moment.len(),
                        got: params.len(),
                    });
                }
                let t = (self.step_count + 1) as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let mut m = self.first_moment.clone();
                let mut v = self.second_moment.clone();
                let mut next = params.to_vec();
                for i in 0..next.len() {
                    let g = grads[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    next[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
                if next.iter().any(|x| !x.is_finite()) {
                    return Err(Error::non_finite("ADAM update"));
                }
                self.first_moment = m;
                self.second_moment = v;
                params.copy_from_slice(&next);
            }
        }
        self.step_count += 1;
        Ok(())
    }
}
