//! Point-mass multi-task environments.
//!
//! `PointVel`: a 1-D point mass (position, velocity) driven by an
//! acceleration; reward is `-|v - v_goal|`. `PointPos`: a 2-D point mass
//! driven by a velocity command; reward is `-||pos - goal||_1`.
//! The context is never part of the observation, so one policy runs on every
//! task of a family.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GirlError, Result};
use crate::policy_net::{sample_action, MlpParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    PointVel,
    PointPos,
}

impl TaskFamily {
    pub fn obs_dim(self) -> usize {
        2
    }

    pub fn act_dim(self) -> usize {
        match self {
            TaskFamily::PointVel => 1,
            TaskFamily::PointPos => 2,
        }
    }

    fn param_dim(self) -> usize {
        self.act_dim()
    }
}

/// One task: its index and goal parameters (target velocity, or target x/y).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub id: usize,
    pub params: Vec<f64>,
}

/// A finite task family with its base distribution `p0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub family: TaskFamily,
    pub contexts: Vec<TaskContext>,
    pub p0: Vec<f64>,
}

impl TaskSet {
    pub fn new(family: TaskFamily, contexts: Vec<TaskContext>, p0: Vec<f64>) -> Result<Self> {
        let set = Self {
            family,
            contexts,
            p0,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.contexts.is_empty() {
            return Err(GirlError::invalid("task set is empty"));
        }
        if self.p0.len() != self.contexts.len() {
            return Err(GirlError::invalid(format!(
                "p0 has {} entries for {} contexts",
                self.p0.len(),
                self.contexts.len()
            )));
        }
        if self.p0.iter().any(|p| !(*p >= 0.0)) {
            return Err(GirlError::invalid("p0 entries must be >= 0"));
        }
        let sum: f64 = self.p0.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(GirlError::invalid(format!("p0 sums to {sum}, not 1")));
        }
        let mut ids: Vec<usize> = self.contexts.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.contexts.len() {
            return Err(GirlError::invalid("context ids must be unique"));
        }
        for c in &self.contexts {
            if c.params.len() != self.family.param_dim() || c.params.iter().any(|p| !p.is_finite())
            {
                return Err(GirlError::invalid(format!(
                    "context {} has malformed parameters {:?}",
                    c.id, c.params
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GirlError::internal(format!("task set encoding: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let set: TaskSet =
            toml::from_str(text).map_err(|e| GirlError::invalid(format!("task set: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| GirlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GirlError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| GirlError::data(path, e.to_string()))
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `n` target velocities evenly spaced over `[vmin, vmax]`, endpoints included.
pub fn make_pointvel_tasks(n: usize, vmin: f64, vmax: f64) -> Result<TaskSet> {
    if n < 2 {
        return Err(GirlError::invalid(format!("need at least 2 velocity tasks, got {n}")));
    }
    if !(vmin < vmax) || !vmin.is_finite() || !vmax.is_finite() {
        return Err(GirlError::invalid(format!(
            "velocity range [{vmin}, {vmax}] is empty"
        )));
    }
    let step = (vmax - vmin) / (n - 1) as f64;
    let contexts = (0..n)
        .map(|k| TaskContext {
            id: k,
            params: vec![if k == n - 1 { vmax } else { vmin + step * k as f64 }],
        })
        .collect();
    TaskSet::new(TaskFamily::PointVel, contexts, uniform(n))
}

/// `n` goals equally spaced on a circle of `radius` around the origin,
/// starting at angle 0.
pub fn make_pointpos_tasks(n: usize, radius: f64) -> Result<TaskSet> {
    if n < 1 {
        return Err(GirlError::invalid("need at least 1 position task"));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GirlError::invalid(format!("radius must be > 0, got {radius}")));
    }
    let contexts = (0..n)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            TaskContext {
                id: k,
                params: vec![radius * angle.cos(), radius * angle.sin()],
            }
        })
        .collect();
    TaskSet::new(TaskFamily::PointPos, contexts, uniform(n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub gamma: f64,
    pub horizon: usize,
    pub action_clip: f64,
    pub dt: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            horizon: 100,
            action_clip: 1.0,
            dt: 0.1,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, prefix: &str, problems: &mut Vec<String>) {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("{prefix}.gamma must lie in (0, 1]"));
        }
        if self.horizon < 1 {
            problems.push(format!("{prefix}.horizon must be >= 1"));
        }
        if !(self.action_clip > 0.0 && self.action_clip.is_finite()) {
            problems.push(format!("{prefix}.action_clip must be > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            problems.push(format!("{prefix}.dt must be > 0"));
        }
    }

    pub fn check(&self) -> Result<()> {
        let mut problems = Vec::new();
        self.validate("env", &mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GirlError::Validation(problems))
        }
    }
}

/// Underlying state plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub values: Vec<f64>,
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Observations `states` (one more than actions), sampled actions before
/// clipping, rewards, and the log-density of each action.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub logprobs: Vec<f64>,
}

impl Trajectory {
    /// Undiscounted episode return.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Initial state. `PointVel` starts at rest at the origin; `PointPos` starts
/// uniformly in `[-0.1, 0.1]^2`.
pub fn reset<R: Rng + ?Sized>(family: TaskFamily, _context: &TaskContext, rng: &mut R) -> EnvState {
    let values = match family {
        TaskFamily::PointVel => vec![0.0, 0.0],
        TaskFamily::PointPos => vec![
            rng.random_range(-0.1..=0.1),
            rng.random_range(-0.1..=0.1),
        ],
    };
    EnvState { values, t: 0 }
}

pub fn step(
    family: TaskFamily,
    state: &EnvState,
    action: &[f64],
    context: &TaskContext,
    cfg: &EnvConfig,
) -> Result<StepOutcome> {
    if action.len() != family.act_dim() {
        return Err(GirlError::invalid(format!(
            "action has dimension {}, environment expects {}",
            action.len(),
            family.act_dim()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(GirlError::invalid(format!("non-finite action {action:?}")));
    }
    if state.values.iter().any(|s| !s.is_finite()) {
        return Err(GirlError::internal(format!(
            "non-finite environment state {:?}",
            state.values
        )));
    }
    let clip = |a: f64| a.clamp(-cfg.action_clip, cfg.action_clip);
    let (values, reward) = match family {
        TaskFamily::PointVel => {
            let (pos, vel) = (state.values[0], state.values[1]);
            let vel = vel + clip(action[0]) * cfg.dt;
            let pos = pos + vel * cfg.dt;
            (vec![pos, vel], -(vel - context.params[0]).abs())
        }
        TaskFamily::PointPos => {
            let x = state.values[0] + clip(action[0]) * cfg.dt;
            let y = state.values[1] + clip(action[1]) * cfg.dt;
            let dist = (x - context.params[0]).abs() + (y - context.params[1]).abs();
            (vec![x, y], -dist)
        }
    };
    let t = state.t + 1;
    Ok(StepOutcome {
        state: EnvState { values, t },
        reward,
        done: t >= cfg.horizon,
    })
}

/// One episode of `policy` on `context`.
pub fn rollout<R: Rng + ?Sized>(
    policy: &MlpParams,
    family: TaskFamily,
    context: &TaskContext,
    cfg: &EnvConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    let arch = policy.arch();
    if arch.obs_dim != family.obs_dim() || arch.act_dim != family.act_dim() {
        return Err(GirlError::invalid(format!(
            "policy dims ({}, {}) do not match environment ({}, {})",
            arch.obs_dim,
            arch.act_dim,
            family.obs_dim(),
            family.act_dim()
        )));
    }
    let mut state = reset(family, context, rng);
    let mut traj = Trajectory {
        states: Vec::with_capacity(cfg.horizon + 1),
        actions: Vec::with_capacity(cfg.horizon),
        rewards: Vec::with_capacity(cfg.horizon),
        logprobs: Vec::with_capacity(cfg.horizon),
    };
    traj.states.push(state.values.clone());
    loop {
        let (action, logp) = sample_action(policy, &state.values, rng)?;
        let out = step(family, &state, &action, context, cfg)?;
        traj.actions.push(action);
        traj.rewards.push(out.reward);
        traj.logprobs.push(logp);
        traj.states.push(out.state.values.clone());
        state = out.state;
        if out.done {
            break;
        }
    }
    Ok(traj)
}

/// Mean and (population) standard deviation of undiscounted returns over
/// `episodes` rollouts.
pub fn evaluate_returns<R: Rng + ?Sized>(
    policy: &MlpParams,
    family: TaskFamily,
    context: &TaskContext,
    cfg: &EnvConfig,
    episodes: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(GirlError::invalid("need at least one evaluation episode"));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        returns.push(rollout(policy, family, context, cfg, rng)?.total_reward());
    }
    Ok(crate::stats::mean_std(&returns))
}

/// One-step bandit with reward `-(a - target)^2` for a 1-D action. The
/// observation is the constant `[1.0]`, so a policy with `obs_dim = 1` can
/// run it. Used to sanity-check learning rules away from the point-mass
/// dynamics.
pub fn bandit_trajectories<R: Rng + ?Sized>(
    policy: &MlpParams,
    target: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    let arch = policy.arch();
    if arch.obs_dim != 1 || arch.act_dim != 1 {
        return Err(GirlError::invalid("bandit needs a 1-D observation and action"));
    }
    (0..count)
        .map(|_| {
            let (action, logp) = sample_action(policy, &[1.0], rng)?;
            let reward = -(action[0] - target).powi(2);
            Ok(Trajectory {
                states: vec![vec![1.0], vec![1.0]],
                actions: vec![action],
                rewards: vec![reward],
                logprobs: vec![logp],
            })
        })
        .collect()
}
