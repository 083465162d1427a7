//! Gaussian MLP policy with hand-written backpropagation.
//!
//! Parameters live in one flat vector laid out layer by layer as
//! `W (out x in, row-major), b (out)`, followed by the state-independent
//! `log_std (act_dim)`. Gradients share the layout, which keeps updates,
//! checkpoints and finite-difference checks trivial.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::env_suite::Trajectory;
use crate::error::{GirlError, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;
const CHECKPOINT_MAGIC: &str = "girl-policy v1";

/// Layer sizes of a policy network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    /// Two ReLU hidden layers of equal width.
    pub fn two_hidden(obs_dim: usize, act_dim: usize, hidden: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            hidden: vec![hidden, hidden],
        }
    }

    /// `(out, in)` for every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.obs_dim;
        for &h in &self.hidden {
            shapes.push((h, fan_in));
            fan_in = h;
        }
        shapes.push((self.act_dim, fan_in));
        shapes
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(o, i)| o * i + o)
            .sum::<usize>()
            + self.act_dim
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_layers() + 1);
        let mut acc = 0;
        for (o, i) in self.layer_shapes() {
            offsets.push(acc);
            acc += o * i + o;
        }
        offsets.push(acc);
        offsets
    }

    fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.act_dim == 0 || self.hidden.contains(&0) {
            return Err(GirlError::invalid(format!(
                "architecture dimensions must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Borrowed view of one affine layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerView<'a> {
    pub rows: usize,
    pub cols: usize,
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

/// Policy parameters θ.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    arch: Architecture,
    values: Vec<f64>,
}

/// A gradient with respect to [`MlpParams`]; same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    arch: Architecture,
    values: Vec<f64>,
}

impl MlpParams {
    /// All weights and biases zero, `log_std = 0` (unit std).
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.num_params();
        Self {
            arch,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.num_params() {
            return Err(GirlError::invalid(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GirlError::invalid("parameters must be finite"));
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn layer(&self, index: usize) -> LayerView<'_> {
        let (rows, cols) = self.arch.layer_shapes()[index];
        let start = self.arch.layer_offsets()[index];
        let (weights, rest) = self.values[start..].split_at(rows * cols);
        LayerView {
            rows,
            cols,
            weights,
            bias: &rest[..rows],
        }
    }

    pub fn log_std(&self) -> &[f64] {
        let n = self.values.len();
        &self.values[n - self.arch.act_dim..]
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        let n = self.values.len();
        let a = self.arch.act_dim;
        &mut self.values[n - a..]
    }

    /// Checkpoint text: magic line, shape header, then one value per line.
    /// Values use the shortest round-trip decimal form, so reload is bit-exact.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 64);
        let hidden: Vec<String> = self.arch.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "obs_dim {}", self.arch.obs_dim);
        let _ = writeln!(out, "act_dim {}", self.arch.act_dim);
        let _ = writeln!(out, "hidden {}", hidden.join(" "));
        let _ = writeln!(out, "count {}", self.values.len());
        for v in &self.values {
            let _ = writeln!(out, "{v:?}");
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| {
            GirlError::invalid(format!("checkpoint line {}: {msg}", line + 1))
        };
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| GirlError::invalid(format!("checkpoint truncated before {what}")))
        };
        let (i, magic) = next("header")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(bad(i, "unrecognized header"));
        }
        let mut header_field = |key: &str| -> Result<(usize, String)> {
            let (i, line) = next(key)?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| bad(i, &format!("expected `{key}`")))?;
            Ok((i, rest.trim().to_string()))
        };
        let parse_usize = |i: usize, s: &str| s.parse::<usize>().map_err(|_| bad(i, "bad integer"));
        let (i, obs) = header_field("obs_dim")?;
        let obs_dim = parse_usize(i, &obs)?;
        let (i, act) = header_field("act_dim")?;
        let act_dim = parse_usize(i, &act)?;
        let (i, hid) = header_field("hidden")?;
        let hidden = hid
            .split_whitespace()
            .map(|s| parse_usize(i, s))
            .collect::<Result<Vec<_>>>()?;
        let (i, cnt) = header_field("count")?;
        let count = parse_usize(i, &cnt)?;
        let arch = Architecture {
            obs_dim,
            act_dim,
            hidden,
        };
        if arch.num_params() != count {
            return Err(bad(i, "count does not match the shape header"));
        }
        let mut values = Vec::with_capacity(count);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            values.push(line.trim().parse::<f64>().map_err(|_| bad(i, "bad value"))?);
        }
        Self::from_values(arch, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string()).map_err(|e| GirlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GirlError::io(path, e))?;
        Self::from_checkpoint_str(&text).map_err(|e| GirlError::data(path, e.to_string()))
    }
}

impl Gradient {
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.num_params();
        Self {
            arch,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.num_params() {
            return Err(GirlError::invalid(format!(
                "expected {} gradient entries, got {}",
                arch.num_params(),
                values.len()
            )));
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) -> Result<()> {
        if self.arch != other.arch {
            return Err(GirlError::invalid("gradient shapes differ"));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Baseline subtracted from the returns-to-go.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    /// Scalar mean of the per-trajectory discounted returns.
    MeanReturn,
    /// Mean return-to-go across the batch at each time index.
    TimeMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgConfig {
    pub learning_rate: f64,
    pub baseline: Baseline,
    pub entropy_bonus: f64,
    /// Standardize advantages over the batch after the baseline.
    pub normalize_advantages: bool,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            baseline: Baseline::TimeMean,
            entropy_bonus: 0.0,
            normalize_advantages: true,
        }
    }
}

impl PgConfig {
    pub fn validate(&self, prefix: &str, problems: &mut Vec<String>) {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("{prefix}.learning_rate must be > 0"));
        }
        if !(self.entropy_bonus >= 0.0 && self.entropy_bonus.is_finite()) {
            problems.push(format!("{prefix}.entropy_bonus must be >= 0"));
        }
    }
}

/// Fan-in scaled uniform weights, zero biases, unit initial std.
pub fn init_policy<R: Rng + ?Sized>(
    obs_dim: usize,
    act_dim: usize,
    hidden: usize,
    rng: &mut R,
) -> Result<MlpParams> {
    init_with_arch(Architecture::two_hidden(obs_dim, act_dim, hidden), rng)
}

pub fn init_with_arch<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<MlpParams> {
    arch.validate()?;
    let mut params = MlpParams::zeros(arch.clone());
    let offsets = arch.layer_offsets();
    for (l, (rows, cols)) in arch.layer_shapes().into_iter().enumerate() {
        let bound = 1.0 / (cols as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound)
            .map_err(|e| GirlError::internal(format!("init distribution: {e}")))?;
        for w in &mut params.values[offsets[l]..offsets[l] + rows * cols] {
            *w = dist.sample(rng);
        }
    }
    // log(1.0)
    params.log_std_mut().fill(0.0);
    Ok(params)
}

/// Intermediate values kept for the backward pass.
struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the observation.
    inputs: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

fn check_obs(params: &MlpParams, obs: &[f64]) -> Result<()> {
    if obs.len() != params.arch.obs_dim {
        return Err(GirlError::invalid(format!(
            "observation has dimension {}, policy expects {}",
            obs.len(),
            params.arch.obs_dim
        )));
    }
    Ok(())
}

fn forward_cached(params: &MlpParams, obs: &[f64]) -> ForwardCache {
    let n_layers = params.arch.num_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut current = obs.to_vec();
    for l in 0..n_layers {
        let layer = params.layer(l);
        let mut out = layer.bias.to_vec();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            *o += row.iter().zip(&current).map(|(w, x)| w * x).sum::<f64>();
        }
        if l + 1 < n_layers {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        inputs.push(std::mem::replace(&mut current, out));
    }
    ForwardCache {
        inputs,
        mean: current,
    }
}

/// Mean action: ReLU hidden layers, linear output head.
pub fn forward(params: &MlpParams, obs: &[f64]) -> Result<Vec<f64>> {
    check_obs(params, obs)?;
    Ok(forward_cached(params, obs).mean)
}

fn gaussian_log_density(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

/// Exact diagonal-Gaussian log-density of `action` at `obs`.
pub fn log_prob(params: &MlpParams, obs: &[f64], action: &[f64]) -> Result<f64> {
    let mean = forward(params, obs)?;
    if action.len() != mean.len() {
        return Err(GirlError::invalid("action dimension mismatch"));
    }
    Ok(gaussian_log_density(&mean, params.log_std(), action))
}

/// Draw `a ~ N(forward(obs), exp(log_std)^2)` and return it with its log-density.
pub fn sample_action<R: Rng + ?Sized>(
    params: &MlpParams,
    obs: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let mean = forward(params, obs)?;
    let log_std = params.log_std();
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, ls)| {
            let eps: f64 = StandardNormal.sample(rng);
            m + ls.exp() * eps
        })
        .collect();
    let logp = gaussian_log_density(&mean, log_std, &action);
    Ok((action, logp))
}

/// Differential entropy of the action distribution.
pub fn entropy(params: &MlpParams) -> f64 {
    params
        .log_std()
        .iter()
        .map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln())
        .sum()
}

/// Discounted returns-to-go `G_t = sum_{t' >= t} gamma^(t'-t) r_t'`.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Per-step advantages for a batch after baseline and optional standardization.
pub fn advantages(trajectories: &[Trajectory], cfg: &PgConfig, gamma: f64) -> Vec<Vec<f64>> {
    let rtg: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|tr| returns_to_go(&tr.rewards, gamma))
        .collect();
    let mut adv = match cfg.baseline {
        Baseline::None => rtg,
        Baseline::MeanReturn => {
            let b = rtg.iter().map(|g| g.first().copied().unwrap_or(0.0)).sum::<f64>()
                / rtg.len() as f64;
            rtg.into_iter()
                .map(|g| g.into_iter().map(|x| x - b).collect())
                .collect()
        }
        Baseline::TimeMean => {
            let max_len = rtg.iter().map(Vec::len).max().unwrap_or(0);
            let mut sums = vec![0.0; max_len];
            let mut counts = vec![0usize; max_len];
            for g in &rtg {
                for (t, x) in g.iter().enumerate() {
                    sums[t] += x;
                    counts[t] += 1;
                }
            }
            rtg.into_iter()
                .map(|g| {
                    g.into_iter()
                        .enumerate()
                        .map(|(t, x)| x - sums[t] / counts[t] as f64)
                        .collect()
                })
                .collect()
        }
    };
    if cfg.normalize_advantages {
        let n: usize = adv.iter().map(Vec::len).sum();
        if n > 0 {
            let mean = adv.iter().flatten().sum::<f64>() / n as f64;
            let var = adv.iter().flatten().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            for x in adv.iter_mut().flatten() {
                *x = if std > 1e-12 { (*x - mean) / std } else { 0.0 };
            }
        }
    }
    adv
}

fn check_batch(params: &MlpParams, trajectories: &[Trajectory]) -> Result<usize> {
    if trajectories.is_empty() {
        return Err(GirlError::invalid("policy gradient needs at least one trajectory"));
    }
    let steps: usize = trajectories.iter().map(|t| t.actions.len()).sum();
    for tr in trajectories {
        if tr.states.len() != tr.actions.len() + 1 {
            return Err(GirlError::invalid("trajectory states/actions length mismatch"));
        }
        if tr.states.iter().any(|s| s.len() != params.arch.obs_dim)
            || tr.actions.iter().any(|a| a.len() != params.arch.act_dim)
        {
            return Err(GirlError::invalid("trajectory dimensions do not match the policy"));
        }
    }
    if steps == 0 {
        return Err(GirlError::invalid("trajectories contain no transitions"));
    }
    Ok(steps)
}

/// The scalar whose gradient [`pg_gradient`] returns, with advantages frozen:
/// `-(1/S) sum_{i,t} log pi(a_t|s_t) * A_t - entropy_bonus * H`, where `S`
/// is the number of transitions in the batch.
pub fn surrogate_loss(
    params: &MlpParams,
    trajectories: &[Trajectory],
    cfg: &PgConfig,
    gamma: f64,
) -> Result<f64> {
    let steps = check_batch(params, trajectories)?;
    let adv = advantages(trajectories, cfg, gamma);
    let mut total = 0.0;
    for (tr, a) in trajectories.iter().zip(&adv) {
        for t in 0..tr.actions.len() {
            total += log_prob(params, &tr.states[t], &tr.actions[t])? * a[t];
        }
    }
    Ok(-total / steps as f64 - cfg.entropy_bonus * entropy(params))
}

/// REINFORCE gradient of [`surrogate_loss`].
pub fn pg_gradient(
    params: &MlpParams,
    trajectories: &[Trajectory],
    cfg: &PgConfig,
    gamma: f64,
) -> Result<Gradient> {
    let steps = check_batch(params, trajectories)?;
    let adv = advantages(trajectories, cfg, gamma);
    let arch = &params.arch;
    let offsets = arch.layer_offsets();
    let shapes = arch.layer_shapes();
    let n_layers = arch.num_layers();
    let act_dim = arch.act_dim;
    let log_std = params.log_std();
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut grad = vec![0.0; arch.num_params()];
    let ls_offset = grad.len() - act_dim;
    let scale = 1.0 / steps as f64;

    for (tr, adv_row) in trajectories.iter().zip(&adv) {
        for t in 0..tr.actions.len() {
            let weight = adv_row[t] * scale;
            if weight == 0.0 {
                continue;
            }
            let cache = forward_cached(params, &tr.states[t]);
            let action = &tr.actions[t];
            // dLoss/dmean and dLoss/dlog_std for loss = -weight * log pi.
            let mut delta: Vec<f64> = (0..act_dim)
                .map(|k| -weight * (action[k] - cache.mean[k]) * inv_var[k])
                .collect();
            for k in 0..act_dim {
                let z2 = (action[k] - cache.mean[k]).powi(2) * inv_var[k];
                grad[ls_offset + k] += -weight * (z2 - 1.0);
            }
            for l in (0..n_layers).rev() {
                let (rows, cols) = shapes[l];
                let input = &cache.inputs[l];
                let w_start = offsets[l];
                let b_start = w_start + rows * cols;
                for r in 0..rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    let g_row = &mut grad[w_start + r * cols..w_start + (r + 1) * cols];
                    for (g, x) in g_row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                    grad[b_start + r] += d;
                }
                if l == 0 {
                    break;
                }
                let weights = &params.values[w_start..w_start + rows * cols];
                // `input` is post-ReLU, so a positive entry marks an active unit.
                let mut prev = vec![0.0; cols];
                for r in 0..rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(&weights[r * cols..(r + 1) * cols]) {
                        *p += d * w;
                    }
                }
                for (p, x) in prev.iter_mut().zip(input) {
                    if *x <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    for g in &mut grad[ls_offset..] {
        *g -= cfg.entropy_bonus;
    }
    let grad = Gradient::from_values(arch.clone(), grad)?;
    if !grad.is_finite() {
        return Err(GirlError::internal("policy gradient is not finite"));
    }
    Ok(grad)
}

/// `theta' = theta - lr * grad`.
pub fn apply_gradient(params: &MlpParams, grad: &Gradient, lr: f64) -> Result<MlpParams> {
    if params.arch != grad.arch {
        return Err(GirlError::invalid(format!(
            "gradient shape {:?} does not match parameters {:?}",
            grad.arch, params.arch
        )));
    }
    let values = params
        .values
        .iter()
        .zip(&grad.values)
        .map(|(p, g)| p - lr * g)
        .collect();
    Ok(MlpParams {
        arch: params.arch.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    fn traj(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>, rewards: Vec<f64>) -> Trajectory {
        let logprobs = vec![0.0; actions.len()];
        Trajectory {
            states,
            actions,
            rewards,
            logprobs,
        }
    }

    #[test]
    fn init_shapes_follow_hidden_size() {
        let p = init_policy(2, 1, 100, &mut rng_from_seed(0)).unwrap();
        assert_eq!(
            p.arch().layer_shapes(),
            vec![(100, 2), (100, 100), (1, 100)]
        );
        assert_eq!(p.num_params(), 200 + 100 + 10_000 + 100 + 100 + 1 + 1);
        assert_eq!(p.log_std(), &[0.0]);
        for l in 0..3 {
            assert!(p.layer(l).bias.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn tiny_net_parameter_count() {
        let p = init_policy(1, 1, 4, &mut rng_from_seed(3)).unwrap();
        assert_eq!(p.num_params(), 34);
    }

    #[test]
    fn init_is_seed_deterministic_and_fan_in_bounded() {
        let a = init_policy(3, 2, 8, &mut rng_from_seed(11)).unwrap();
        let b = init_policy(3, 2, 8, &mut rng_from_seed(11)).unwrap();
        assert_eq!(a, b);
        let first = a.layer(0);
        let bound = 1.0 / 3f64.sqrt();
        assert!(first.weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(init_policy(0, 1, 4, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn zero_weights_give_zero_mean() {
        let p = MlpParams::zeros(Architecture::two_hidden(3, 2, 5));
        assert_eq!(forward(&p, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_hidden_layer_by_hand() {
        // 2 -> 2 (ReLU, identity weights, bias [0, 1]) -> 1 (weights [2, 3], bias 0.5)
        let arch = Architecture {
            obs_dim: 2,
            act_dim: 1,
            hidden: vec![2],
        };
        let values = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 2.0, 3.0, 0.5, 0.0];
        let p = MlpParams::from_values(arch, values).unwrap();
        // hidden = relu([1.5, -3 + 1]) = [1.5, 0]; out = 2*1.5 + 0 + 0.5
        assert_eq!(forward(&p, &[1.5, -3.0]).unwrap(), vec![3.5]);
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let p = MlpParams::zeros(Architecture::two_hidden(2, 1, 3));
        assert!(matches!(
            forward(&p, &[1.0]),
            Err(GirlError::InvalidArgument(_))
        ));
    }

    #[test]
    fn logprob_at_mode() {
        let mut p = MlpParams::zeros(Architecture::two_hidden(2, 2, 3));
        p.log_std_mut().copy_from_slice(&[0.3, -0.7]);
        let lp = log_prob(&p, &[0.1, 0.2], &[0.0, 0.0]).unwrap();
        let expected = -((0.3 + HALF_LOG_2PI) + (-0.7 + HALF_LOG_2PI));
        assert!((lp - expected).abs() < 1e-15);
    }

    #[test]
    fn vanishing_std_returns_mean() {
        let mut p = init_policy(2, 1, 4, &mut rng_from_seed(1)).unwrap();
        p.log_std_mut()[0] = -60.0;
        let mean = forward(&p, &[0.5, 0.5]).unwrap();
        let (a, _) = sample_action(&p, &[0.5, 0.5], &mut rng_from_seed(9)).unwrap();
        assert!((a[0] - mean[0]).abs() <= 1e-20_f64.max(mean[0].abs() * 1e-15));
    }

    #[test]
    fn sampled_logprob_matches_independent_density() {
        let mut p = init_policy(2, 2, 6, &mut rng_from_seed(4)).unwrap();
        p.log_std_mut().copy_from_slice(&[-0.2, 0.4]);
        let mut rng = rng_from_seed(5);
        for _ in 0..50 {
            let obs = [rng.random::<f64>(), rng.random::<f64>()];
            let (a, lp) = sample_action(&p, &obs, &mut rng).unwrap();
            let mean = forward(&p, &obs).unwrap();
            let mut dens = 1.0;
            for k in 0..2 {
                let s = p.log_std()[k].exp();
                dens *= (-(a[k] - mean[k]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
            }
            assert!((lp - dens.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rewards_no_baseline_zero_gradient() {
        let p = init_policy(2, 1, 4, &mut rng_from_seed(2)).unwrap();
        let t = traj(
            vec![vec![0.0, 0.0], vec![0.1, 0.2], vec![0.3, 0.1]],
            vec![vec![0.5], vec![-0.4]],
            vec![0.0, 0.0],
        );
        let cfg = PgConfig {
            baseline: Baseline::None,
            normalize_advantages: false,
            ..PgConfig::default()
        };
        let g = pg_gradient(&p, &[t], &cfg, 0.99).unwrap();
        assert!(g.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_batch_rejected() {
        let p = init_policy(2, 1, 4, &mut rng_from_seed(2)).unwrap();
        assert!(pg_gradient(&p, &[], &PgConfig::default(), 0.99).is_err());
    }

    #[test]
    fn one_step_linear_policy_by_hand() {
        // mean = w * s + b, log_std = l. One transition (s, a, r), no baseline.
        let arch = Architecture {
            obs_dim: 1,
            act_dim: 1,
            hidden: vec![],
        };
        let (w, b, l) = (0.7, -0.2, 0.1);
        let p = MlpParams::from_values(arch, vec![w, b, l]).unwrap();
        let (s, a, r) = (1.3, 0.4, -2.5);
        let t = traj(vec![vec![s], vec![0.0]], vec![vec![a]], vec![r]);
        let cfg = PgConfig {
            baseline: Baseline::None,
            normalize_advantages: false,
            ..PgConfig::default()
        };
        let g = pg_gradient(&p, &[t], &cfg, 0.9).unwrap();
        let mu = w * s + b;
        let var = (2.0 * l).exp();
        let dmu = (a - mu) / var;
        // dLoss = -G * dlogpi
        let expected = [-r * dmu * s, -r * dmu, -r * ((a - mu).powi(2) / var - 1.0)];
        for (got, want) in g.values().iter().zip(expected) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn returns_to_go_discounting() {
        let g = returns_to_go(&[1.0, 2.0, 4.0], 0.5);
        assert_eq!(g, vec![1.0 + 0.5 * 2.0 + 0.25 * 4.0, 2.0 + 2.0, 4.0]);
    }

    #[test]
    fn mean_return_baseline_is_scalar() {
        let a = traj(vec![vec![0.0]; 3], vec![vec![0.0]; 2], vec![1.0, 1.0]);
        let b = traj(vec![vec![0.0]; 3], vec![vec![0.0]; 2], vec![3.0, 3.0]);
        let cfg = PgConfig {
            baseline: Baseline::MeanReturn,
            normalize_advantages: false,
            ..PgConfig::default()
        };
        let adv = advantages(&[a, b], &cfg, 1.0);
        // returns 2 and 6, b = 4
        assert_eq!(adv, vec![vec![-2.0, -3.0], vec![2.0, -1.0]]);
    }

    #[test]
    fn apply_gradient_arithmetic() {
        let arch = Architecture {
            obs_dim: 1,
            act_dim: 1,
            hidden: vec![],
        };
        let p = MlpParams::from_values(arch.clone(), vec![1.0, 1.0, 1.0]).unwrap();
        let g = Gradient::from_values(arch.clone(), vec![2.0, 0.0, -1.0]).unwrap();
        let q = apply_gradient(&p, &g, 0.1).unwrap();
        assert!((q.values()[0] - 0.8).abs() < 1e-15);
        assert_eq!(q.values()[1], 1.0);
        assert_eq!(apply_gradient(&p, &g, 0.0).unwrap(), p);
        assert_eq!(apply_gradient(&p, &Gradient::zeros(arch), 0.5).unwrap(), p);
    }

    #[test]
    fn apply_gradient_shape_mismatch() {
        let p = MlpParams::zeros(Architecture::two_hidden(2, 1, 3));
        let g = Gradient::zeros(Architecture::two_hidden(2, 1, 4));
        assert!(apply_gradient(&p, &g, 0.1).is_err());
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(MlpParams::from_checkpoint_str("nope").is_err());
        let p = MlpParams::zeros(Architecture::two_hidden(2, 1, 3));
        let text = p.to_checkpoint_string().replace("count 26", "count 27");
        assert!(MlpParams::from_checkpoint_str(&text).is_err());
    }
}
