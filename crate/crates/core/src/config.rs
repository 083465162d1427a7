//! Run configuration.
//!
//! Configs are TOML documents; dotted keys (`psro.train_max = 0.3`) and
//! tables are interchangeable. Every section is optional and falls back to
//! the desk-scale defaults. Unknown keys are rejected at parse time, and
//! [`RunConfig::validate`] reports every out-of-range field at once.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env_suite::{make_pointpos_tasks, make_pointvel_tasks, EnvConfig, TaskFamily, TaskSet};
use crate::error::{GirlError, Result};
use crate::maml_oracle::MamlConfig;
use crate::metagame::{RestrictedSimplex, SolverConfig};
use crate::policy_net::{Architecture, PgConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TasksConfig {
    pub family: TaskFamily,
    pub num_tasks: usize,
    /// Velocity range for `point_vel`.
    pub vmin: f64,
    pub vmax: f64,
    /// Goal circle radius for `point_pos`.
    pub radius: f64,
}

impl Default for TasksConfig {
    fn default() -> Self {
        Self {
            family: TaskFamily::PointVel,
            num_tasks: 5,
            vmin: 0.0,
            vmax: 3.0,
            radius: 2.0,
        }
    }
}

impl TasksConfig {
    pub fn build(&self) -> Result<TaskSet> {
        match self.family {
            TaskFamily::PointVel => make_pointvel_tasks(self.num_tasks, self.vmin, self.vmax),
            TaskFamily::PointPos => make_pointpos_tasks(self.num_tasks, self.radius),
        }
    }

    fn validate(&self, problems: &mut Vec<String>) {
        match self.family {
            TaskFamily::PointVel => {
                if self.num_tasks < 2 {
                    problems.push("tasks.num_tasks must be >= 2 for point_vel".into());
                }
                if !(self.vmin < self.vmax) {
                    problems.push("tasks.vmin must be < tasks.vmax".into());
                }
            }
            TaskFamily::PointPos => {
                if self.num_tasks < 1 {
                    problems.push("tasks.num_tasks must be >= 1".into());
                }
                if !(self.radius > 0.0) {
                    problems.push("tasks.radius must be > 0".into());
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { hidden: 32 }
    }
}

/// Best-response policy handling across loops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Continue training from the previous loop's policy.
    Girl,
    /// Re-initialize the policy every loop.
    StarGirl,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Girl => "GiRL",
            Mode::StarGirl => "*GiRL",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsroConfig {
    pub max_loops: usize,
    pub max_policies: usize,
    pub train_min: f64,
    pub train_max: f64,
    pub mode: Mode,
    /// Rollouts per payoff entry (0-shot).
    pub eval_episodes: usize,
}

impl Default for PsroConfig {
    fn default() -> Self {
        Self {
            max_loops: 5,
            max_policies: 5,
            train_min: 0.0,
            train_max: 0.3,
            mode: Mode::Girl,
            eval_episodes: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Fine-tuning steps K before scoring. Signed so that negative values
    /// reach validation instead of failing to parse.
    pub shots: i64,
    /// Weights over shots `0..=K`; defaults to the last shot only.
    pub shot_weights: Option<Vec<f64>>,
    pub test_min: f64,
    pub test_max: f64,
    /// 0 is a fully adversarial task distribution, 1 is the base distribution.
    pub beta: f64,
    /// Defaults to `maml.inner_lr`.
    pub finetune_lr: Option<f64>,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            shots: 0,
            shot_weights: None,
            test_min: 0.0,
            test_max: 0.3,
            beta: 0.0,
            finetune_lr: None,
            eval_episodes: 10,
            seeds: vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSettings {
    pub shots: Vec<i64>,
    pub test_max: Vec<f64>,
    pub train_max: Vec<f64>,
    /// Training seeds; one full set of runs per seed.
    pub seeds: Vec<u64>,
    /// Meta-iterations for the single-policy baseline. Defaults to the
    /// PSRO budget, `maml.meta_iterations * psro.max_loops`.
    pub baseline_meta_iterations: Option<usize>,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            shots: vec![0, 3],
            test_max: vec![0.3, 0.5],
            train_max: vec![0.3, 0.5],
            seeds: vec![0, 1, 2],
            baseline_meta_iterations: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub tasks: TasksConfig,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub pg: PgConfig,
    pub maml: MamlConfig,
    pub psro: PsroConfig,
    pub solver: SolverConfig,
    pub eval: EvalSettings,
    pub compare: CompareSettings,
}

fn check_box(name: &str, n: usize, lower: f64, upper: f64, problems: &mut Vec<String>) {
    if let Some(problem) = RestrictedSimplex::feasibility_problem(n, lower, upper) {
        problems.push(format!("{name}: {problem}"));
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GirlError::Validation(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GirlError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GirlError::internal(format!("config encoding: {e}")))
    }

    pub fn architecture(&self) -> Architecture {
        let family = self.tasks.family;
        Architecture::two_hidden(family.obs_dim(), family.act_dim(), self.policy.hidden)
    }

    pub fn train_simplex(&self) -> Result<RestrictedSimplex> {
        RestrictedSimplex::new(self.tasks.num_tasks, self.psro.train_min, self.psro.train_max)
    }

    pub fn test_simplex(&self) -> Result<RestrictedSimplex> {
        RestrictedSimplex::new(self.tasks.num_tasks, self.eval.test_min, self.eval.test_max)
    }

    pub fn finetune_lr(&self) -> f64 {
        self.eval.finetune_lr.unwrap_or(self.maml.inner_lr)
    }

    pub fn baseline_meta_iterations(&self) -> usize {
        self.compare
            .baseline_meta_iterations
            .unwrap_or(self.maml.meta_iterations * self.psro.max_loops)
    }

    /// Collects every offending field before failing.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let n = self.tasks.num_tasks;
        self.tasks.validate(&mut problems);
        self.env.validate("env", &mut problems);
        if self.policy.hidden < 1 {
            problems.push("policy.hidden must be >= 1".into());
        }
        self.pg.validate("pg", &mut problems);
        self.maml.validate("maml", &mut problems);
        if self.maml.meta_iterations < 1 {
            problems.push("maml.meta_iterations must be >= 1".into());
        }
        self.solver.validate("solver", &mut problems);
        if self.solver.explore_eps * n as f64 >= 1.0 {
            problems.push("solver.explore_eps * tasks.num_tasks must be < 1".into());
        }
        if self.solver.explore_eps * self.psro.max_policies as f64 >= 1.0 {
            problems.push("solver.explore_eps * psro.max_policies must be < 1".into());
        }

        let psro = &self.psro;
        if psro.max_loops < 1 {
            problems.push("psro.max_loops must be >= 1".into());
        }
        if psro.max_policies < 1 {
            problems.push("psro.max_policies must be >= 1".into());
        }
        if psro.eval_episodes < 1 {
            problems.push("psro.eval_episodes must be >= 1".into());
        }
        check_box(
            "psro.train_min/psro.train_max (train_simplex)",
            n,
            psro.train_min,
            psro.train_max,
            &mut problems,
        );

        let eval = &self.eval;
        if eval.shots < 0 {
            problems.push(format!("eval.shots must be >= 0, got {}", eval.shots));
        }
        if let Some(w) = &eval.shot_weights {
            if eval.shots >= 0 && w.len() != eval.shots as usize + 1 {
                problems.push(format!(
                    "eval.shot_weights needs {} entries (shots 0..=K)",
                    eval.shots + 1
                ));
            }
            if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                problems.push("eval.shot_weights must be nonnegative and sum to 1".into());
            }
        }
        check_box(
            "eval.test_min/eval.test_max (test_simplex)",
            n,
            eval.test_min,
            eval.test_max,
            &mut problems,
        );
        if !(0.0..=1.0).contains(&eval.beta) {
            problems.push("eval.beta must lie in [0, 1]".into());
        }
        if let Some(lr) = eval.finetune_lr {
            if !(lr >= 0.0 && lr.is_finite()) {
                problems.push("eval.finetune_lr must be >= 0".into());
            }
        }
        if eval.eval_episodes < 1 {
            problems.push("eval.eval_episodes must be >= 1".into());
        }
        if eval.seeds.is_empty() {
            problems.push("eval.seeds must list at least one seed".into());
        }

        let cmp = &self.compare;
        if cmp.shots.iter().any(|k| *k < 0) {
            problems.push("compare.shots must all be >= 0".into());
        }
        if cmp.seeds.is_empty() {
            problems.push("compare.seeds must list at least one seed".into());
        }
        for t in &cmp.test_max {
            check_box("compare.test_max", n, eval.test_min, *t, &mut problems);
        }
        for t in &cmp.train_max {
            check_box("compare.train_max", n, psro.train_min, *t, &mut problems);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GirlError::Validation(problems))
        }
    }
}

/// Evaluation-only config file: a single `[eval]` section.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalFile {
    pub eval: EvalSettings,
}

impl EvalFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GirlError::Validation(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GirlError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}
