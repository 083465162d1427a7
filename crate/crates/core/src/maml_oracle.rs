//! First-order MAML as the agent's best-response oracle.
//!
//! Each meta-iteration samples `tasks_per_batch` tasks i.i.d. from the
//! current task distribution, adapts the policy with one policy-gradient step
//! per task, collects fresh trajectories with the adapted policy, and moves
//! the shared parameters along the mean post-adaptation gradient. Adapted
//! parameters are treated as constants with respect to the shared ones.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env_suite::{rollout, EnvConfig, TaskSet};
use crate::error::{GirlError, Result};
use crate::metagame::sample_indices;
use crate::policy_net::{apply_gradient, init_with_arch, pg_gradient, Architecture, Gradient, MlpParams, PgConfig};
use crate::seeding::{rng_from_seed, SimRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MamlConfig {
    pub inner_lr: f64,
    pub outer_lr: f64,
    /// Trajectories sampled per task, before and after adaptation.
    pub traj_per_task: usize,
    pub tasks_per_batch: usize,
    pub meta_iterations: usize,
    /// Only the first-order variant is implemented.
    pub first_order: bool,
}

impl Default for MamlConfig {
    fn default() -> Self {
        Self {
            inner_lr: 0.1,
            outer_lr: 0.01,
            traj_per_task: 10,
            tasks_per_batch: 5,
            meta_iterations: 200,
            first_order: true,
        }
    }
}

impl MamlConfig {
    pub fn validate(&self, prefix: &str, problems: &mut Vec<String>) {
        if !(self.inner_lr >= 0.0 && self.inner_lr.is_finite()) {
            problems.push(format!("{prefix}.inner_lr must be >= 0"));
        }
        if !(self.outer_lr >= 0.0 && self.outer_lr.is_finite()) {
            problems.push(format!("{prefix}.outer_lr must be >= 0"));
        }
        if self.traj_per_task < 1 {
            problems.push(format!("{prefix}.traj_per_task must be >= 1"));
        }
        if self.tasks_per_batch < 1 {
            problems.push(format!("{prefix}.tasks_per_batch must be >= 1"));
        }
        if !self.first_order {
            problems.push(format!(
                "{prefix}.first_order = false is not supported (second-order MAML is unimplemented)"
            ));
        }
    }
}

/// A per-task loss the meta-learner can differentiate.
pub trait TaskObjective: Sync {
    fn num_tasks(&self) -> usize;

    /// Gradient of task `task`'s loss at `params`, and the mean return of the
    /// samples it was estimated from.
    fn gradient(&self, params: &MlpParams, task: usize, rng: &mut SimRng) -> Result<(Gradient, f64)>;
}

/// Policy-gradient loss on a task set: samples `traj_per_task` episodes and
/// returns the REINFORCE gradient.
#[derive(Clone, Copy, Debug)]
pub struct RlObjective<'a> {
    pub tasks: &'a TaskSet,
    pub env: &'a EnvConfig,
    pub pg: &'a PgConfig,
    pub traj_per_task: usize,
}

impl TaskObjective for RlObjective<'_> {
    fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn gradient(&self, params: &MlpParams, task: usize, rng: &mut SimRng) -> Result<(Gradient, f64)> {
        let ctx = self
            .tasks
            .contexts
            .get(task)
            .ok_or_else(|| GirlError::invalid(format!("task index {task} out of range")))?;
        let trajs = (0..self.traj_per_task)
            .map(|_| rollout(params, self.tasks.family, ctx, self.env, rng))
            .collect::<Result<Vec<_>>>()?;
        let mean_return =
            trajs.iter().map(|t| t.total_reward()).sum::<f64>() / trajs.len() as f64;
        let grad = pg_gradient(params, &trajs, self.pg, self.env.gamma)?;
        Ok((grad, mean_return))
    }
}

/// Returns before and after adaptation, averaged over the sampled tasks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetaStepStats {
    pub pre_return: f64,
    pub post_return: f64,
}

/// One inner gradient step on `task`; `params` is left untouched.
pub fn inner_adapt<O: TaskObjective>(
    params: &MlpParams,
    task: usize,
    objective: &O,
    inner_lr: f64,
    rng: &mut SimRng,
) -> Result<(MlpParams, f64)> {
    if !(inner_lr >= 0.0) {
        return Err(GirlError::invalid("inner_lr must be >= 0"));
    }
    let (grad, pre_return) = objective.gradient(params, task, rng)?;
    Ok((apply_gradient(params, &grad, inner_lr)?, pre_return))
}

fn check_task_distribution(p1: &[f64], n: usize) -> Result<()> {
    if p1.len() != n {
        return Err(GirlError::invalid(format!(
            "task distribution has {} entries for {n} tasks",
            p1.len()
        )));
    }
    if p1.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(GirlError::invalid("task distribution has negative entries"));
    }
    let sum: f64 = p1.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(GirlError::invalid(format!("task distribution sums to {sum}")));
    }
    Ok(())
}

/// One first-order MAML update of `params` against task distribution `p1`.
///
/// Sampled tasks run on independent random streams drawn from `rng`, so the
/// result does not depend on how many threads process them.
pub fn meta_step<O: TaskObjective>(
    params: &MlpParams,
    p1: &[f64],
    objective: &O,
    cfg: &MamlConfig,
    rng: &mut SimRng,
) -> Result<(MlpParams, MetaStepStats)> {
    if !cfg.first_order {
        return Err(GirlError::Unimplemented("second-order MAML".into()));
    }
    check_task_distribution(p1, objective.num_tasks())?;
    let tasks = sample_indices(p1, cfg.tasks_per_batch, rng)?;
    let seeds: Vec<u64> = tasks.iter().map(|_| rng.next_u64()).collect();
    let per_task = tasks
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(&task, &seed)| {
            let mut task_rng = rng_from_seed(seed);
            let (adapted, pre) = inner_adapt(params, task, objective, cfg.inner_lr, &mut task_rng)?;
            let (grad, post) = objective.gradient(&adapted, task, &mut task_rng)?;
            Ok((grad, pre, post))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut outer = Gradient::zeros(params.arch().clone());
    let count = per_task.len() as f64;
    let mut stats = MetaStepStats {
        pre_return: 0.0,
        post_return: 0.0,
    };
    for (grad, pre, post) in &per_task {
        outer.add_scaled(grad, 1.0 / count)?;
        stats.pre_return += pre / count;
        stats.post_return += post / count;
    }
    Ok((apply_gradient(params, &outer, cfg.outer_lr)?, stats))
}

/// Runs `meta_iterations` meta-steps from `init`, or from a fresh network
/// with architecture `arch` when `init` is `None`.
pub fn best_response<O: TaskObjective>(
    p1: &[f64],
    objective: &O,
    cfg: &MamlConfig,
    arch: &Architecture,
    init: Option<MlpParams>,
    rng: &mut SimRng,
) -> Result<(MlpParams, Vec<MetaStepStats>)> {
    check_task_distribution(p1, objective.num_tasks())?;
    let mut params = match init {
        Some(p) => p,
        None => init_with_arch(arch.clone(), rng)?,
    };
    let mut history = Vec::with_capacity(cfg.meta_iterations);
    for _ in 0..cfg.meta_iterations {
        let (next, stats) = meta_step(&params, p1, objective, cfg, rng)?;
        params = next;
        history.push(stats);
    }
    Ok((params, history))
}
