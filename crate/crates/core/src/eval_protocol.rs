//! Adversarial K-shot evaluation and the method comparison grid.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::env_suite::{evaluate_returns, EnvConfig, TaskSet};
use crate::error::{GirlError, Result};
use crate::maml_oracle::{best_response, inner_adapt, RlObjective, TaskObjective};
use crate::metagame::{adversary_best_response, clip_normalize, RestrictedSimplex};
use crate::policy_net::{MlpParams, PgConfig};
use crate::psro_loop::run_psro;
use crate::seeding::{derive_seed, rng_from_seed, SimRng};
use crate::stats::{dot, mean_std};

/// Resolved evaluation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub shots: usize,
    /// Weights over shots `0..=shots`.
    pub shot_weights: Vec<f64>,
    pub test_simplex: RestrictedSimplex,
    pub beta: f64,
    pub finetune_lr: f64,
    pub eval_episodes: usize,
    /// Rollouts per fine-tuning gradient.
    pub traj_per_task: usize,
    pub seeds: Vec<u64>,
}

/// One-hot weight on the last shot.
pub fn last_shot_weights(shots: usize) -> Vec<f64> {
    let mut w = vec![0.0; shots + 1];
    w[shots] = 1.0;
    w
}

impl EvalConfig {
    /// Builds the evaluation settings of a validated run config.
    pub fn from_run_config(cfg: &RunConfig) -> Result<Self> {
        let shots = usize::try_from(cfg.eval.shots)
            .map_err(|_| GirlError::invalid("eval.shots must be >= 0"))?;
        let out = Self {
            shots,
            shot_weights: cfg
                .eval
                .shot_weights
                .clone()
                .unwrap_or_else(|| last_shot_weights(shots)),
            test_simplex: cfg.test_simplex()?,
            beta: cfg.eval.beta,
            finetune_lr: cfg.finetune_lr(),
            eval_episodes: cfg.eval.eval_episodes,
            traj_per_task: cfg.maml.traj_per_task,
            seeds: cfg.eval.seeds.clone(),
        };
        out.check()?;
        Ok(out)
    }

    pub fn check(&self) -> Result<()> {
        if self.shot_weights.len() != self.shots + 1 {
            return Err(GirlError::invalid(format!(
                "shot weights need {} entries",
                self.shots + 1
            )));
        }
        if self.shot_weights.iter().any(|w| !(*w >= 0.0))
            || (self.shot_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(GirlError::invalid("shot weights must be nonnegative and sum to 1"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(GirlError::invalid("beta must lie in [0, 1]"));
        }
        if !(self.finetune_lr >= 0.0) {
            return Err(GirlError::invalid("finetune_lr must be >= 0"));
        }
        if self.eval_episodes == 0 || self.traj_per_task == 0 {
            return Err(GirlError::invalid("eval_episodes and traj_per_task must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(GirlError::invalid("at least one evaluation seed is required"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Entry `(i, j)`: shot-weighted return of policy `i` fine-tuned on task
    /// `j`, averaged over seeds.
    pub eval_matrix: Vec<Vec<f64>>,
    /// `pi^T eval_matrix`.
    pub aggregated: Vec<f64>,
    pub worst_p1: Vec<f64>,
    /// `worst_p1 . aggregated`.
    pub value: f64,
    /// The same protocol run on each seed's matrix alone.
    pub seed_values: Vec<f64>,
    pub seed_mean: f64,
    pub seed_std: f64,
}

/// `k` sequential single-task gradient steps.
pub fn kshot_finetune<O: TaskObjective>(
    params: &MlpParams,
    task: usize,
    objective: &O,
    k: usize,
    finetune_lr: f64,
    rng: &mut SimRng,
) -> Result<MlpParams> {
    let mut current = params.clone();
    for _ in 0..k {
        current = inner_adapt(&current, task, objective, finetune_lr, rng)?.0;
    }
    Ok(current)
}

/// Mean return of `params` on `task` after each of `0..=max_shots`
/// fine-tuning steps. Shot `s` scores the policy after `s` steps.
pub fn shot_returns(
    params: &MlpParams,
    task: usize,
    tasks: &TaskSet,
    env: &EnvConfig,
    pg: &PgConfig,
    cfg: &EvalConfig,
    max_shots: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let objective = RlObjective {
        tasks,
        env,
        pg,
        traj_per_task: cfg.traj_per_task,
    };
    let ctx = &tasks.contexts[task];
    let mut current = params.clone();
    let mut out = Vec::with_capacity(max_shots + 1);
    for s in 0..=max_shots {
        out.push(evaluate_returns(&current, tasks.family, ctx, env, cfg.eval_episodes, rng)?.0);
        if s < max_shots {
            current = inner_adapt(&current, task, &objective, cfg.finetune_lr, rng)?.0;
        }
    }
    Ok(out)
}

fn check_pi(policies: &[MlpParams], pi: &[f64]) -> Result<()> {
    if policies.is_empty() || pi.len() != policies.len() {
        return Err(GirlError::invalid(format!(
            "{} mixture weights for {} policies",
            pi.len(),
            policies.len()
        )));
    }
    if pi.iter().any(|w| !(*w >= 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(GirlError::invalid("policy mixture is not a distribution"));
    }
    Ok(())
}

/// Per-shot return curves for every (policy, task) pair, seeded by `seed`.
/// Indexed `[policy][task][shot]`.
pub fn shot_curves(
    policies: &[MlpParams],
    tasks: &TaskSet,
    env: &EnvConfig,
    pg: &PgConfig,
    cfg: &EvalConfig,
    max_shots: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = tasks.len();
    let cells: Vec<(usize, usize)> = (0..policies.len())
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .collect();
    let curves = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut rng = rng_from_seed(derive_seed(derive_seed(seed, i as u64), j as u64));
            shot_returns(&policies[i], j, tasks, env, pg, cfg, max_shots, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![Vec::with_capacity(n); policies.len()];
    for ((i, _), curve) in cells.into_iter().zip(curves) {
        out[i].push(curve);
    }
    Ok(out)
}

/// Collapses shot curves with the weights `w` (a prefix of each curve).
pub fn weight_shots(curves: &[Vec<Vec<f64>>], w: &[f64]) -> Vec<Vec<f64>> {
    curves
        .iter()
        .map(|row| row.iter().map(|c| dot(&c[..w.len()], w)).collect())
        .collect()
}

/// `pi^T matrix`.
pub fn aggregate(matrix: &[Vec<f64>], pi: &[f64]) -> Vec<f64> {
    let n = matrix.first().map_or(0, Vec::len);
    let mut r = vec![0.0; n];
    for (row, w) in matrix.iter().zip(pi) {
        for (acc, v) in r.iter_mut().zip(row) {
            *acc += w * v;
        }
    }
    r
}

/// The evaluation matrix for one seed and its aggregate `R`.
pub fn build_eval_matrix(
    policies: &[MlpParams],
    pi: &[f64],
    tasks: &TaskSet,
    env: &EnvConfig,
    pg: &PgConfig,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_pi(policies, pi)?;
    cfg.check()?;
    let curves = shot_curves(policies, tasks, env, pg, cfg, cfg.shots, seed)?;
    let matrix = weight_shots(&curves, &cfg.shot_weights);
    let r = aggregate(&matrix, pi);
    Ok((matrix, r))
}

/// The adversary's smoothed distribution `beta p0 + (1 - beta) p*` in the
/// test box, and its value against `r`.
pub fn adversarial_value(
    r: &[f64],
    p0: &[f64],
    simplex: &RestrictedSimplex,
    beta: f64,
) -> Result<(Vec<f64>, f64)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(GirlError::invalid("beta must lie in [0, 1]"));
    }
    let worst = adversary_best_response(r, simplex)?;
    let mut p1: Vec<f64> = p0
        .iter()
        .zip(&worst)
        .map(|(a, b)| beta * a + (1.0 - beta) * b)
        .collect();
    if !simplex.contains(&p1) {
        p1 = clip_normalize(&p1, simplex)?;
    }
    let value = dot(&p1, r);
    Ok((p1, value))
}

/// Report assembly from per-seed matrices.
fn report_from_matrices(
    matrices: Vec<Vec<Vec<f64>>>,
    pi: &[f64],
    p0: &[f64],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let count = matrices.len() as f64;
    let mut seed_values = Vec::with_capacity(matrices.len());
    for m in &matrices {
        seed_values.push(adversarial_value(&aggregate(m, pi), p0, &cfg.test_simplex, cfg.beta)?.1);
    }
    let mut mean = matrices[0].clone();
    for m in &matrices[1..] {
        for (row, other) in mean.iter_mut().zip(m) {
            for (a, b) in row.iter_mut().zip(other) {
                *a += b;
            }
        }
    }
    for row in &mut mean {
        row.iter_mut().for_each(|v| *v /= count);
    }
    let aggregated = aggregate(&mean, pi);
    let (worst_p1, value) = adversarial_value(&aggregated, p0, &cfg.test_simplex, cfg.beta)?;
    let (seed_mean, seed_std) = mean_std(&seed_values);
    Ok(EvalReport {
        eval_matrix: mean,
        aggregated,
        worst_p1,
        value,
        seed_values,
        seed_mean,
        seed_std,
    })
}

/// Full protocol: fine-tune, aggregate with the stored `pi`, let the
/// adversary pick the worst task distribution in the test box.
pub fn evaluate(
    policies: &[MlpParams],
    pi: &[f64],
    tasks: &TaskSet,
    env: &EnvConfig,
    pg: &PgConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    check_pi(policies, pi)?;
    cfg.check()?;
    if cfg.test_simplex.n() != tasks.len() {
        return Err(GirlError::invalid("test box and task set disagree on task count"));
    }
    let matrices = cfg
        .seeds
        .iter()
        .map(|&s| build_eval_matrix(policies, pi, tasks, env, pg, cfg, s).map(|m| m.0))
        .collect::<Result<Vec<_>>>()?;
    report_from_matrices(matrices, pi, &tasks.p0, cfg)
}

impl EvalReport {
    /// `policy,task_<j>...` rows of the evaluation matrix.
    pub fn matrix_csv_string(&self) -> String {
        let mut out = String::from("policy");
        for j in 0..self.aggregated.len() {
            let _ = write!(out, ",task_{j}");
        }
        out.push('\n');
        for (i, row) in self.eval_matrix.iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// `task,aggregated,worst_p1` per task.
    pub fn tasks_csv_string(&self) -> String {
        let mut out = String::from("task,aggregated,worst_p1\n");
        for (j, (r, p)) in self.aggregated.iter().zip(&self.worst_p1).enumerate() {
            let _ = writeln!(out, "{j},{r},{p}");
        }
        out
    }

    /// One-row summary with the settings that produced it.
    pub fn summary_csv_string(&self, cfg: &EvalConfig) -> String {
        let (mean, std) = mean_std(&self.seed_values);
        format!(
            "shots,test_min,test_max,beta,value,seed_mean,seed_std,seeds\n{},{},{},{},{},{},{},{}\n",
            cfg.shots,
            cfg.test_simplex.lower(),
            cfg.test_simplex.upper(),
            cfg.beta,
            self.value,
            mean,
            std,
            self.seed_values.len()
        )
    }
}

/// Methods compared in the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Maml,
    StarGirl,
    Girl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Maml, Method::StarGirl, Method::Girl];

    pub fn label(self) -> &'static str {
        match self {
            Method::Maml => "MAML",
            Method::StarGirl => Mode::StarGirl.label(),
            Method::Girl => Mode::Girl.label(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonCell {
    pub shots: usize,
    pub test_max: f64,
    pub train_max: f64,
    pub method: Method,
    /// One adversarial value per training seed.
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub shots: Vec<usize>,
    pub test_max: Vec<f64>,
    pub train_max: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Ordered by shots, then test_max, then train_max, then method.
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonTable {
    pub fn cell(&self, shots: usize, test_max: f64, train_max: f64, method: Method) -> Option<&ComparisonCell> {
        self.cells.iter().find(|c| {
            c.shots == shots && c.test_max == test_max && c.train_max == train_max && c.method == method
        })
    }

    /// `shots,test_max,train_max,method,mean,std,seeds`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("shots,test_max,train_max,method,mean,std,seeds\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.shots,
                c.test_max,
                c.train_max,
                c.method.label(),
                c.mean,
                c.std,
                c.values.len()
            );
        }
        out
    }

    /// Long format, one row per training seed:
    /// `shots,test_max,train_max,method,seed,value`.
    pub fn to_long_csv_string(&self) -> String {
        let mut out = String::from("shots,test_max,train_max,method,seed,value\n");
        for c in &self.cells {
            for (s, v) in self.seeds.iter().zip(&c.values) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{s},{v}",
                    c.shots,
                    c.test_max,
                    c.train_max,
                    c.method.label()
                );
            }
        }
        out
    }

    /// Aligned table with one row per (K, test_max, train_max) and one
    /// `mean (std)` column per method.
    pub fn to_text_table(&self) -> String {
        let mut out = format!("{:>3} {:>8} {:>9}", "K", "test_max", "train_max");
        for m in Method::ALL {
            let _ = write!(out, " {:>20}", m.label());
        }
        out.push('\n');
        for &k in &self.shots {
            for &te in &self.test_max {
                for &tr in &self.train_max {
                    let _ = write!(out, "{k:>3} {te:>8} {tr:>9}");
                    for m in Method::ALL {
                        let text = self
                            .cell(k, te, tr, m)
                            .map(|c| format!("{:.2} ({:.2})", c.mean, c.std))
                            .unwrap_or_default();
                        let _ = write!(out, " {text:>20}");
                    }
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// A trained agent: policies and the mixture used at test time.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedAgent {
    pub policies: Vec<MlpParams>,
    pub pi: Vec<f64>,
}

/// Single-policy baseline: the same oracle against the fixed base
/// distribution for `iterations` meta-steps.
pub fn train_maml_baseline(cfg: &RunConfig, tasks: &TaskSet, iterations: usize, seed: u64) -> Result<TrainedAgent> {
    let objective = RlObjective {
        tasks,
        env: &cfg.env,
        pg: &cfg.pg,
        traj_per_task: cfg.maml.traj_per_task,
    };
    let mut maml = cfg.maml.clone();
    maml.meta_iterations = iterations;
    let mut rng = rng_from_seed(seed);
    let (policy, _) = best_response(&tasks.p0, &objective, &maml, &cfg.architecture(), None, &mut rng)?;
    Ok(TrainedAgent {
        policies: vec![policy],
        pi: vec![1.0],
    })
}

/// Salts separating the random streams of the comparison's pieces.
const BASELINE_SALT: u64 = 0x6d61_6d6c;
const EVAL_SALT: u64 = 0x6576_616c;

/// Trains every method on every training seed and evaluates the grid.
///
/// `progress` receives a line per finished training run.
pub fn compare_methods(cfg: &RunConfig, progress: &mut dyn FnMut(&str)) -> Result<ComparisonTable> {
    cfg.validate()?;
    let tasks = cfg.tasks.build()?;
    let cmp = &cfg.compare;
    let shots: Vec<usize> = cmp.shots.iter().map(|&k| k as usize).collect();
    let max_shots = shots.iter().copied().max().unwrap_or(0);
    let base_eval = EvalConfig::from_run_config(cfg)?;

    // values[(shots, test_max, train_max, method)] per seed, filled seed by seed.
    let mut values: Vec<Vec<f64>> = Vec::new();
    let index = |ki: usize, tei: usize, tri: usize, mi: usize| {
        ((ki * cmp.test_max.len() + tei) * cmp.train_max.len() + tri) * 3 + mi
    };
    values.resize(shots.len() * cmp.test_max.len() * cmp.train_max.len() * 3, Vec::new());

    for &seed in &cmp.seeds {
        let baseline = train_maml_baseline(
            cfg,
            &tasks,
            cfg.baseline_meta_iterations(),
            derive_seed(seed, BASELINE_SALT),
        )?;
        progress(&format!("seed {seed}: MAML baseline trained"));
        let mut agents: Vec<(usize, Method, TrainedAgent)> = Vec::new();
        for (tri, &train_max) in cmp.train_max.iter().enumerate() {
            for (method, mode) in [(Method::StarGirl, Mode::StarGirl), (Method::Girl, Mode::Girl)] {
                let mut run_cfg = cfg.clone();
                run_cfg.seed = seed;
                run_cfg.psro.train_max = train_max;
                run_cfg.psro.mode = mode;
                let art = run_psro(&run_cfg, None)?;
                let pi = art
                    .final_strategy()
                    .ok_or_else(|| GirlError::internal("PSRO run produced no strategy"))?
                    .pi
                    .clone();
                progress(&format!(
                    "seed {seed}: {} train_max={train_max} trained ({} policies)",
                    method.label(),
                    art.policies.len()
                ));
                agents.push((
                    tri,
                    method,
                    TrainedAgent {
                        policies: art.policies,
                        pi,
                    },
                ));
            }
        }

        let eval_seeds: Vec<u64> = base_eval
            .seeds
            .iter()
            .map(|&s| derive_seed(derive_seed(seed, EVAL_SALT), s))
            .collect();
        // Curves are shared across cells: K and test_max only change the
        // shot weights and the adversary's box.
        let curves_for = |agent: &TrainedAgent| -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
            eval_seeds
                .iter()
                .map(|&s| shot_curves(&agent.policies, &tasks, &cfg.env, &cfg.pg, &base_eval, max_shots, s))
                .collect()
        };
        let baseline_curves = curves_for(&baseline)?;
        let agent_curves = agents
            .iter()
            .map(|(_, _, a)| curves_for(a))
            .collect::<Result<Vec<_>>>()?;

        for (ki, &k) in shots.iter().enumerate() {
            for (tei, &test_max) in cmp.test_max.iter().enumerate() {
                let mut eval = base_eval.clone();
                eval.shots = k;
                eval.shot_weights = last_shot_weights(k);
                eval.test_simplex = RestrictedSimplex::new(tasks.len(), cfg.eval.test_min, test_max)?;
                let score = |agent: &TrainedAgent, curves: &[Vec<Vec<Vec<f64>>>]| -> Result<f64> {
                    let matrices = curves.iter().map(|c| weight_shots(c, &eval.shot_weights)).collect();
                    Ok(report_from_matrices(matrices, &agent.pi, &tasks.p0, &eval)?.value)
                };
                let maml_value = score(&baseline, &baseline_curves)?;
                for tri in 0..cmp.train_max.len() {
                    values[index(ki, tei, tri, 0)].push(maml_value);
                }
                for ((tri, method, agent), curves) in agents.iter().zip(&agent_curves) {
                    let mi = Method::ALL.iter().position(|m| m == method).unwrap_or(0);
                    values[index(ki, tei, *tri, mi)].push(score(agent, curves)?);
                }
            }
        }
    }

    let mut cells = Vec::with_capacity(values.len());
    for (ki, &k) in shots.iter().enumerate() {
        for (tei, &test_max) in cmp.test_max.iter().enumerate() {
            for (tri, &train_max) in cmp.train_max.iter().enumerate() {
                for (mi, &method) in Method::ALL.iter().enumerate() {
                    let vals = values[index(ki, tei, tri, mi)].clone();
                    let (mean, std) = mean_std(&vals);
                    cells.push(ComparisonCell {
                        shots: k,
                        test_max,
                        train_max,
                        method,
                        values: vals,
                        mean,
                        std,
                    });
                }
            }
        }
    }
    Ok(ComparisonTable {
        shots,
        test_max: cmp.test_max.clone(),
        train_max: cmp.train_max.clone(),
        seeds: cmp.seeds.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_suite::make_pointvel_tasks;
    use crate::policy_net::init_policy;

    fn setup() -> (TaskSet, EnvConfig, PgConfig, Vec<MlpParams>) {
        let tasks = make_pointvel_tasks(3, 0.0, 2.0).unwrap();
        let env = EnvConfig {
            horizon: 10,
            ..EnvConfig::default()
        };
        let mut rng = rng_from_seed(4);
        let policies = (0..2)
            .map(|_| init_policy(2, 1, 4, &mut rng).unwrap())
            .collect();
        (tasks, env, PgConfig::default(), policies)
    }

    fn eval_cfg(shots: usize, lower: f64, upper: f64, beta: f64) -> EvalConfig {
        EvalConfig {
            shots,
            shot_weights: last_shot_weights(shots),
            test_simplex: RestrictedSimplex::new(3, lower, upper).unwrap(),
            beta,
            finetune_lr: 0.1,
            eval_episodes: 3,
            traj_per_task: 2,
            seeds: vec![1, 2],
        }
    }

    #[test]
    fn zero_shots_is_identity() {
        let (tasks, env, pg, policies) = setup();
        let obj = RlObjective {
            tasks: &tasks,
            env: &env,
            pg: &pg,
            traj_per_task: 2,
        };
        let out = kshot_finetune(&policies[0], 0, &obj, 0, 0.1, &mut rng_from_seed(0)).unwrap();
        assert_eq!(out, policies[0]);
    }

    #[test]
    fn one_shot_equals_inner_adapt() {
        let (tasks, env, pg, policies) = setup();
        let obj = RlObjective {
            tasks: &tasks,
            env: &env,
            pg: &pg,
            traj_per_task: 2,
        };
        let a = kshot_finetune(&policies[0], 1, &obj, 1, 0.05, &mut rng_from_seed(3)).unwrap();
        let b = inner_adapt(&policies[0], 1, &obj, 0.05, &mut rng_from_seed(3)).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn single_policy_aggregate_is_its_row() {
        let (tasks, env, pg, policies) = setup();
        let cfg = eval_cfg(0, 0.0, 1.0, 0.0);
        let (m, r) = build_eval_matrix(&policies[..1], &[1.0], &tasks, &env, &pg, &cfg, 5).unwrap();
        assert_eq!(m[0], r);
        let (m, r) = build_eval_matrix(&policies, &[0.0, 1.0], &tasks, &env, &pg, &cfg, 5).unwrap();
        assert_eq!(m[1], r);
    }

    #[test]
    fn unrestricted_adversary_takes_the_minimum() {
        let r = [3.0, 1.0, 2.0];
        let simplex = RestrictedSimplex::new(3, 0.0, 1.0).unwrap();
        let (_, v) = adversarial_value(&r, &[1.0 / 3.0; 3], &simplex, 0.0).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn boxed_adversary_example() {
        let r = [3.0, 1.0, 2.0];
        let simplex = RestrictedSimplex::new(3, 0.1, 0.6).unwrap();
        let (p, v) = adversarial_value(&r, &[1.0 / 3.0; 3], &simplex, 0.0).unwrap();
        assert!((v - 1.5).abs() < 1e-12, "{v} {p:?}");
    }

    #[test]
    fn full_smoothing_returns_base_distribution() {
        let r = [3.0, 1.0, 2.0];
        let p0 = [1.0 / 3.0; 3];
        let simplex = RestrictedSimplex::new(3, 0.0, 1.0).unwrap();
        let (p, v) = adversarial_value(&r, &p0, &simplex, 1.0).unwrap();
        assert_eq!(p, p0.to_vec());
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn report_value_is_dot_of_worst_p1_and_aggregate() {
        let (tasks, env, pg, policies) = setup();
        let cfg = eval_cfg(1, 0.0, 0.5, 0.0);
        let report = evaluate(&policies, &[0.25, 0.75], &tasks, &env, &pg, &cfg).unwrap();
        assert!(cfg.test_simplex.contains(&report.worst_p1));
        assert!((report.value - dot(&report.worst_p1, &report.aggregated)).abs() < 1e-9);
        assert_eq!(report.seed_values.len(), 2);
    }

    #[test]
    fn shot_weights_must_match_shots() {
        let mut cfg = eval_cfg(2, 0.0, 1.0, 0.0);
        cfg.shot_weights = vec![1.0];
        assert!(cfg.check().is_err());
    }
}
