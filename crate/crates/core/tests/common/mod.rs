//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the code under test except for plain data access.
#![allow(dead_code)]

use metadr::nn::{LossBatch, NetDims, PolicyParams, TensorId};
use metadr::seed::RngStream;
use rand::Rng;

/// Reads `W[i][j]` of a row-major `rows × cols` tensor.
fn at(p: &PolicyParams, id: TensorId, i: usize, j: usize) -> f64 {
    let (_, cols) = id.shape(&p.dims());
    p.tensor(id)[i * cols + j]
}

/// Straightforward matrix-arithmetic forward pass.
pub fn forward_oracle(p: &PolicyParams, obs: &[f64]) -> (Vec<f64>, f64) {
    let d = p.dims();
    let layer = |input: &[f64], w: TensorId, b: TensorId, width: usize| -> Vec<f64> {
        (0..width)
            .map(|j| {
                let mut s = p.tensor(b)[j];
                for (i, x) in input.iter().enumerate() {
                    s += at(p, w, i, j) * x;
                }
                s
            })
            .collect()
    };
    let h1: Vec<f64> = layer(obs, TensorId::TrunkW1, TensorId::TrunkB1, d.hidden)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let h2: Vec<f64> = layer(&h1, TensorId::TrunkW2, TensorId::TrunkB2, d.hidden)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let mean = layer(&h2, TensorId::HeadActionW, TensorId::HeadActionB, d.act_dim);
    let value = layer(&h2, TensorId::HeadValueW, TensorId::HeadValueB, 1)[0];
    (mean, value)
}

pub fn log_prob_oracle(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..mean.len() {
        let sigma = log_std[k].exp();
        let z = (action[k] - mean[k]) / sigma;
        total += -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    total
}

/// Clipped-surrogate loss evaluated from scratch with the oracle forward pass.
pub fn loss_oracle(p: &PolicyParams, b: &LossBatch) -> f64 {
    let n = b.observations.len() as f64;
    let mut policy = 0.0;
    let mut value = 0.0;
    for i in 0..b.observations.len() {
        let (mean, v) = forward_oracle(p, &b.observations[i]);
        let lp = log_prob_oracle(&mean, p.tensor(TensorId::ActionLogStd), &b.actions[i]);
        let ratio = (lp - b.old_log_probs[i]).exp();
        let a = b.advantages[i];
        let clipped = ratio.clamp(1.0 - b.clip_epsilon, 1.0 + b.clip_epsilon);
        policy -= (ratio * a).min(clipped * a);
        value += (v - b.value_targets[i]).powi(2);
    }
    policy / n + b.value_coef * value / n
}

pub fn random_params(dims: NetDims, rng: &mut RngStream, scale: f64) -> PolicyParams {
    let data = (0..dims.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    let mut p = PolicyParams::from_flat(dims, data).unwrap();
    for s in p.tensor_mut(TensorId::ActionLogStd) {
        *s = rng.random_range(-0.7..0.4);
    }
    p
}

/// Batch whose probability ratios sit at least `margin` away from the clip
/// kinks `1 ± ε`, so the loss is smooth around the current parameters.
pub fn smooth_batch(p: &PolicyParams, n: usize, rng: &mut RngStream, margin: f64) -> LossBatch {
    let d = p.dims();
    let eps = 0.3;
    let mut b = LossBatch {
        observations: Vec::new(),
        actions: Vec::new(),
        old_log_probs: Vec::new(),
        advantages: Vec::new(),
        value_targets: Vec::new(),
        clip_epsilon: eps,
        value_coef: 0.5,
    };
    for _ in 0..n {
        let obs: Vec<f64> = (0..d.obs_dim).map(|_| rng.random_range(0.0..2.0)).collect();
        let (mean, _) = forward_oracle(p, &obs);
        let action: Vec<f64> = mean.iter().map(|m| m + rng.random_range(-1.0..1.0)).collect();
        let lp = log_prob_oracle(&mean, p.tensor(TensorId::ActionLogStd), &action);
        let ratio = loop {
            let r: f64 = rng.random_range(0.4..1.8);
            if (r - (1.0 - eps)).abs() > margin && (r - (1.0 + eps)).abs() > margin {
                break r;
            }
        };
        b.old_log_probs.push(lp - ratio.ln());
        b.observations.push(obs);
        b.actions.push(action);
        b.advantages.push(rng.random_range(-2.0..2.0));
        b.value_targets.push(rng.random_range(-5.0..0.0));
    }
    b
}

/// Max relative error between `analytic` and central differences of
/// [`loss_oracle`] over `coords`; magnitudes below `floor` count as `floor`.
pub fn fd_max_rel_error(p: &PolicyParams, b: &LossBatch, analytic: &[f64], coords: &[usize], floor: f64) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for &c in coords {
        let mut plus = p.clone();
        plus.as_flat_mut()[c] += h;
        let mut minus = p.clone();
        minus.as_flat_mut()[c] -= h;
        let numeric = (loss_oracle(&plus, b) - loss_oracle(&minus, b)) / (2.0 * h);
        let a = analytic[c];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// Reference ADAM trajectory on f(θ) = θ².
pub fn adam_reference(theta0: f64, steps: usize, lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let g = 2.0 * theta;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1.powi(t as i32));
        let vhat = v / (1.0 - b2.powi(t as i32));
        theta -= lr * mhat / (vhat.sqrt() + eps);
        out.push(theta);
    }
    out
}

/// Gradient of the one-sample loss for a network whose trunk weight
/// matrices are zero and `b2 = 0` (so `h1 = tanh(b1)`, `h2 = 0`), at ratio 1.
/// Derived by hand: only the head biases, log-std and `W2`, `b2` receive
/// gradient.
pub fn zero_trunk_gradient(p: &PolicyParams, action: &[f64], advantage: f64, target: f64, value_coef: f64) -> Vec<f64> {
    let d = p.dims();
    let mu = p.tensor(TensorId::HeadActionB).to_vec();
    let v = p.tensor(TensorId::HeadValueB)[0];
    let log_std = p.tensor(TensorId::ActionLogStd).to_vec();
    let mut g = vec![0.0; d.len()];
    let mut put = |id: TensorId, i: usize, x: f64| g[d.offset(id).start + i] = x;

    let mut dmu = vec![0.0; d.act_dim];
    for k in 0..d.act_dim {
        let var = (2.0 * log_std[k]).exp();
        let diff = action[k] - mu[k];
        dmu[k] = -advantage * diff / var;
        put(TensorId::HeadActionB, k, dmu[k]);
        put(TensorId::ActionLogStd, k, -advantage * (diff * diff / var - 1.0));
    }
    let dv = 2.0 * value_coef * (v - target);
    put(TensorId::HeadValueB, 0, dv);

    let h1: Vec<f64> = p.tensor(TensorId::TrunkB1).iter().map(|b| b.tanh()).collect();
    for j in 0..d.hidden {
        let mut g2 = at(p, TensorId::HeadValueW, j, 0) * dv;
        for (k, dm) in dmu.iter().enumerate() {
            g2 += at(p, TensorId::HeadActionW, j, k) * dm;
        }
        put(TensorId::TrunkB2, j, g2);
        for (i, h) in h1.iter().enumerate() {
            put(TensorId::TrunkW2, i * d.hidden + j, h * g2);
        }
    }
    g
}

/// Zero trunk weights, random `b1`, heads and log-std.
pub fn zero_trunk_params(dims: NetDims, rng: &mut RngStream) -> PolicyParams {
    let mut p = PolicyParams::zeros(dims);
    for id in [
        TensorId::TrunkB1,
        TensorId::HeadActionW,
        TensorId::HeadActionB,
        TensorId::HeadValueW,
        TensorId::HeadValueB,
    ] {
        for x in p.tensor_mut(id) {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    for s in p.tensor_mut(TensorId::ActionLogStd) {
        *s = rng.random_range(-0.5..0.5);
    }
    p
}

/// Ascending sort, then linear interpolation between order statistics.
pub fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let i = pos as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    let frac = pos - i as f64;
    v[i] + (v[i + 1] - v[i]) * frac
}

/// Whether hour `t` is among the `t_curtail` highest-points hours, counting
/// each hour ranked above it (higher points, or equal points and earlier).
pub fn is_curtailed_oracle(points: &[f64], t: usize, t_curtail: usize) -> bool {
    let above = (0..points.len())
        .filter(|&s| points[s] > points[t] || (points[s] == points[t] && s < t))
        .count();
    above < t_curtail
}

/// Receiving hour for `t`'s shiftable load by exhaustive window scan: the
/// hour whose price no other window hour undercuts, and no earlier window
/// hour ties.
pub fn shift_target_oracle(points: &[f64], t: usize, t_shift: usize) -> usize {
    let h = points.len() as i64;
    let window: Vec<usize> = ((t as i64 - t_shift as i64)..=(t as i64 + t_shift as i64))
        .filter(|&s| s >= 0 && s < h)
        .map(|s| s as usize)
        .collect();
    *window
        .iter()
        .find(|&&s| window.iter().all(|&o| points[o] > points[s] || (points[o] == points[s] && o >= s)))
        .expect("window non-empty")
}

pub fn curtail_shift_oracle(
    fixed: &[f64],
    curtail: &[f64],
    shift: &[f64],
    points: &[f64],
    t_curtail: usize,
    t_shift: usize,
) -> Vec<f64> {
    let h = points.len();
    let mut d = vec![0.0; h];
    for t in 0..h {
        d[t] += fixed[t];
        if !is_curtailed_oracle(points, t, t_curtail) {
            d[t] += curtail[t];
        }
    }
    for t in 0..h {
        d[shift_target_oracle(points, t, t_shift)] += shift[t];
    }
    d
}

/// Two-pass mean and Bessel-corrected standard error.
pub fn two_pass_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

/// Quadratic toy task `L(x) = ½ Σ a_k (x_k − c_k)²` with diagonal curvature.
#[derive(Clone, Copy, Debug)]
pub struct QuadTask {
    pub a: [f64; 2],
    pub c: [f64; 2],
}

impl QuadTask {
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        (0..2).map(|k| self.a[k] * (x[k] - self.c[k])).collect()
    }

    /// K plain SGD steps from `theta`.
    pub fn adapt(&self, theta: &[f64], k: usize, lr: f64) -> Vec<f64> {
        let mut x = theta.to_vec();
        for _ in 0..k {
            let g = self.grad(&x);
            for i in 0..2 {
                x[i] -= lr * g[i];
            }
        }
        x
    }

    /// Closed form of the first-order meta-gradient:
    /// `a ⊙ (1 − lr·a)^K ⊙ (θ − c)`.
    pub fn fo_meta_gradient(&self, theta: &[f64], k: usize, lr: f64) -> Vec<f64> {
        (0..2)
            .map(|i| self.a[i] * (1.0 - lr * self.a[i]).powi(k as i32) * (theta[i] - self.c[i]))
            .collect()
    }
}
