//! Meta-game between the agent (rows: trained policies) and the adversary
//! (columns: tasks).
//!
//! The agent maximizes `pi^T A p1`; the adversary minimizes it (`B = -A`)
//! but is restricted to the box-constrained simplex
//! `{p : sum p = 1, lower <= p_i <= upper}`. [`rprd_solve`] runs replicator
//! dynamics with a clip-normalize step that keeps `p1` inside the box and an
//! exploration floor on both players, and reports the time average of the
//! trailing iterates.

use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env_suite::{evaluate_returns, EnvConfig, TaskSet};
use crate::error::{GirlError, Result};
use crate::policy_net::MlpParams;
use crate::seeding::derive_seed;
use crate::stats::dot;

/// Slack used by every simplex membership test.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
const CLIP_NORMALIZE_MAX_ROUNDS: usize = 1000;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || cols == 0 {
            return Err(GirlError::invalid("matrix must be at least 1x1"));
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(GirlError::invalid("matrix rows have different lengths"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GirlError::invalid("matrix entries must be finite"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `A p`
    pub fn mul_vec(&self, p: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), p)).collect()
    }

    /// `pi^T A`
    pub fn vec_mul(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, w) in pi.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += w * a;
            }
        }
        out
    }

    pub fn bilinear(&self, pi: &[f64], p: &[f64]) -> f64 {
        dot(&self.vec_mul(pi), p)
    }

    pub fn transpose_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Agent-policy by task payoffs `U`; row `i` is policy `i`, column `j` is
/// the task with id `task_ids[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffTable {
    task_ids: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl PayoffTable {
    pub fn new(task_ids: Vec<usize>) -> Self {
        Self {
            task_ids,
            rows: Vec::new(),
        }
    }

    pub fn from_rows(task_ids: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut table = Self::new(task_ids);
        for row in rows {
            table.push_row(row)?;
        }
        Ok(table)
    }

    pub fn task_ids(&self) -> &[usize] {
        &self.task_ids
    }

    pub fn num_policies(&self) -> usize {
        self.rows.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_ids.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.task_ids.len() {
            return Err(GirlError::invalid(format!(
                "payoff row has {} entries for {} tasks",
                row.len(),
                self.task_ids.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GirlError::invalid("payoff entries must be finite"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn matrix(&self) -> Result<Matrix> {
        Matrix::from_rows(&self.rows)
    }

    /// Header `policy,task_<id>...`, one row per policy.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("policy");
        for id in &self.task_ids {
            out.push_str(&format!(",task_{id}"));
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`PayoffTable::to_csv_string`]. Errors
    /// carry the 1-based line number.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> std::result::Result<Self, String> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| format!("line 1: {e}"))?.clone();
        if headers.len() < 2 {
            return Err("line 1: expected a policy column and at least one task column".into());
        }
        let task_ids = headers
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, h)| {
                h.strip_prefix("task_")
                    .unwrap_or(h)
                    .parse::<usize>()
                    .unwrap_or(j)
            })
            .collect::<Vec<_>>();
        let mut table = Self::new(task_ids);
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                format!("line {line}: {e}")
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != headers.len() {
                return Err(format!(
                    "line {line}: expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ));
            }
            let row = record
                .iter()
                .skip(1)
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| format!("line {line}: `{f}` is not a finite number"))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            table
                .push_row(row)
                .map_err(|e| format!("line {line}: {e}"))?;
        }
        if table.num_policies() == 0 {
            return Err("no payoff rows".into());
        }
        Ok(table)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| GirlError::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| GirlError::io(path, e))?;
        Self::from_csv_reader(file).map_err(|msg| GirlError::data(path, msg))
    }
}

/// Box-constrained probability simplex over `n` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictedSimplex {
    n: usize,
    lower: f64,
    upper: f64,
}

impl RestrictedSimplex {
    pub fn new(n: usize, lower: f64, upper: f64) -> Result<Self> {
        if let Some(problem) = Self::feasibility_problem(n, lower, upper) {
            return Err(GirlError::invalid(problem));
        }
        Ok(Self { n, lower, upper })
    }

    /// The full simplex.
    pub fn unrestricted(n: usize) -> Result<Self> {
        Self::new(n, 0.0, 1.0)
    }

    /// `None` when `[lower, upper]` admits a distribution over `n` coordinates.
    pub fn feasibility_problem(n: usize, lower: f64, upper: f64) -> Option<String> {
        if n == 0 {
            return Some("simplex needs at least one coordinate".into());
        }
        if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) {
            return Some(format!("bounds [{lower}, {upper}] must lie in [0, 1]"));
        }
        if lower > upper {
            return Some(format!("lower bound {lower} exceeds upper bound {upper}"));
        }
        let n_f = n as f64;
        if n_f * lower > 1.0 + MEMBERSHIP_TOL || n_f * upper < 1.0 - MEMBERSHIP_TOL {
            return Some(format!(
                "box [{lower}, {upper}] is infeasible for {n} coordinates (need n*lower <= 1 <= n*upper)"
            ));
        }
        None
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n
            && (x.iter().sum::<f64>() - 1.0).abs() <= MEMBERSHIP_TOL
            && x.iter().all(|v| {
                v.is_finite() && *v >= self.lower - MEMBERSHIP_TOL && *v <= self.upper + MEMBERSHIP_TOL
            })
    }

    pub fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.n as f64; self.n]
    }
}

/// Agent mixture over policies and adversary distribution over tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaStrategyPair {
    pub pi: Vec<f64>,
    pub p1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Euler step of the replicator dynamics.
    pub eta: f64,
    /// Exploration floor applied to both strategies.
    pub explore_eps: f64,
    pub max_iters: usize,
    /// Stop once the largest coordinate change of an iteration drops below this.
    pub tol: f64,
    /// Fraction of the final iterates that are time-averaged.
    pub average_window: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            explore_eps: 1e-3,
            max_iters: 100_000,
            tol: 1e-8,
            average_window: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, prefix: &str, problems: &mut Vec<String>) {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            problems.push(format!("{prefix}.eta must be > 0"));
        }
        if !(self.explore_eps >= 0.0 && self.explore_eps < 1.0) {
            problems.push(format!("{prefix}.explore_eps must lie in [0, 1)"));
        }
        if self.max_iters < 1 {
            problems.push(format!("{prefix}.max_iters must be >= 1"));
        }
        if !(self.tol > 0.0) {
            problems.push(format!("{prefix}.tol must be > 0"));
        }
        if !(self.average_window > 0.0 && self.average_window <= 1.0) {
            problems.push(format!("{prefix}.average_window must lie in (0, 1]"));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOutput {
    /// Time-averaged strategies, re-projected into their feasible sets.
    pub pair: MetaStrategyPair,
    pub last_iterate: MetaStrategyPair,
    pub iterations: usize,
    pub converged: bool,
}

/// Appends a row for `policy`: entry `j` is its mean undiscounted return over
/// `episodes` rollouts on task `j`. Each task uses its own random stream
/// derived from `seed`, so tasks may be evaluated in parallel.
pub fn augment_payoff(
    table: &PayoffTable,
    policy: &MlpParams,
    tasks: &TaskSet,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<PayoffTable> {
    use rayon::prelude::*;
    if table.task_ids.len() != tasks.len() {
        return Err(GirlError::invalid("payoff table and task set disagree on task count"));
    }
    let row = tasks
        .contexts
        .par_iter()
        .enumerate()
        .map(|(j, ctx)| {
            let mut rng = crate::seeding::rng_from_seed(derive_seed(seed, j as u64));
            evaluate_returns(policy, tasks.family, ctx, env_cfg, episodes, &mut rng).map(|r| r.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = table.clone();
    out.push_row(row)?;
    Ok(out)
}

fn check_distribution(name: &str, x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || *v < -MEMBERSHIP_TOL) {
        return Err(GirlError::invalid(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(GirlError::invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// One Euler step of the two-population replicator dynamics with `B = -A`:
/// `dpi_i = pi_i [(A p1)_i - pi^T A p1]`,
/// `dp1_j = p1_j [(pi^T B)_j - pi^T B p1]`.
pub fn rd_step(pi: &[f64], p1: &[f64], a: &Matrix, eta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if pi.len() != a.rows() || p1.len() != a.cols() {
        return Err(GirlError::invalid(format!(
            "strategies ({}, {}) do not match a {}x{} payoff matrix",
            pi.len(),
            p1.len(),
            a.rows(),
            a.cols()
        )));
    }
    let ap = a.mul_vec(p1);
    let pia = a.vec_mul(pi);
    let value = dot(pi, &ap);
    let new_pi = pi
        .iter()
        .zip(&ap)
        .map(|(x, f)| x + eta * x * (f - value))
        .collect();
    // Adversary fitness is -(pi^T A)_j relative to -value.
    let new_p1 = p1
        .iter()
        .zip(&pia)
        .map(|(x, f)| x + eta * x * (value - f))
        .collect();
    Ok((new_pi, new_p1))
}

/// Clip-and-normalize into the box-constrained simplex.
///
/// Works on a scale factor `s`: each round clips `s * p` into
/// `[lower, upper]`, then rescales so the clipped vector sums to one, until
/// the iterate is a member. The fixed point saturates some coordinates at a
/// bound and keeps the rest proportional to `p`. Rescaling is a Newton step
/// on the piecewise-linear mass `sum_i clip(s p_i)`, guarded by bisection.
/// Inputs already inside the simplex are returned unchanged.
pub fn clip_normalize(p: &[f64], simplex: &RestrictedSimplex) -> Result<Vec<f64>> {
    clip_normalize_box(p, simplex.n, simplex.lower, simplex.upper)
}

fn clip_normalize_box(p: &[f64], n: usize, lower: f64, upper: f64) -> Result<Vec<f64>> {
    if let Some(problem) = RestrictedSimplex::feasibility_problem(n, lower, upper) {
        return Err(GirlError::invalid(problem));
    }
    if p.len() != n {
        return Err(GirlError::invalid(format!(
            "vector of length {} for a simplex over {n}",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(GirlError::invalid("cannot clip a non-finite vector"));
    }
    let simplex = RestrictedSimplex { n, lower, upper };
    if simplex.contains(p) {
        return Ok(p.to_vec());
    }
    let mut q: Vec<f64> = p.iter().map(|v| v.max(0.0)).collect();
    if q.iter().all(|v| *v == 0.0) {
        q.fill(1.0);
    }
    let positive = q.iter().filter(|v| **v > 0.0).count();
    let reachable = positive as f64 * upper + (n - positive) as f64 * lower;
    if reachable < 1.0 {
        // Scaling cannot lift zero coordinates; saturate the positive ones and
        // spread the remaining mass evenly over the rest.
        let rest = (1.0 - positive as f64 * upper) / (n - positive) as f64;
        return Ok(q
            .iter()
            .map(|v| if *v > 0.0 { upper } else { rest })
            .collect());
    }

    let clip_scaled = |s: f64| -> Vec<f64> { q.iter().map(|v| (s * v).clamp(lower, upper)).collect() };
    let mut s_lo = 0.0;
    let mut s_hi = q
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| upper / v)
        .fold(0.0, f64::max);
    let mut s = 1.0 / q.iter().sum::<f64>();
    let tol = 4.0 * f64::EPSILON * n as f64;
    for _ in 0..CLIP_NORMALIZE_MAX_ROUNDS {
        let x = clip_scaled(s);
        let mass: f64 = x.iter().sum();
        if (mass - 1.0).abs() <= tol {
            return finish(x, &simplex);
        }
        if mass < 1.0 {
            s_lo = s;
        } else {
            s_hi = s;
        }
        let slope: f64 = q
            .iter()
            .zip(&x)
            .filter(|(_, xi)| **xi > lower && **xi < upper)
            .map(|(qi, _)| *qi)
            .sum();
        let newton = if slope > 0.0 {
            s + (1.0 - mass) / slope
        } else {
            f64::NAN
        };
        s = if newton > s_lo && newton < s_hi {
            newton
        } else {
            0.5 * (s_lo + s_hi)
        };
        if s_hi - s_lo <= f64::EPSILON * s_hi {
            return finish(clip_scaled(s), &simplex);
        }
    }
    Err(GirlError::internal(format!(
        "clip_normalize did not converge in {CLIP_NORMALIZE_MAX_ROUNDS} rounds"
    )))
}

fn finish(x: Vec<f64>, simplex: &RestrictedSimplex) -> Result<Vec<f64>> {
    if simplex.contains(&x) {
        Ok(x)
    } else {
        Err(GirlError::internal(format!(
            "clip_normalize produced a non-member {x:?}"
        )))
    }
}

/// Exploration floor: lift every coordinate to at least `explore_eps` and
/// renormalize (clip-normalize over `[explore_eps, 1]`).
pub fn proj_explore(x: &[f64], explore_eps: f64) -> Result<Vec<f64>> {
    if !(explore_eps >= 0.0) || explore_eps * x.len() as f64 >= 1.0 {
        return Err(GirlError::invalid(format!(
            "explore_eps {explore_eps} is too large for {} coordinates",
            x.len()
        )));
    }
    clip_normalize_box(x, x.len(), explore_eps, 1.0)
}

/// Exact minimizer of `p . r` over the box-constrained simplex: every task
/// starts at the lower bound, then the remaining mass goes to tasks in
/// ascending `r` (ties by index), each filled up to the upper bound.
pub fn adversary_best_response(r: &[f64], simplex: &RestrictedSimplex) -> Result<Vec<f64>> {
    if r.len() != simplex.n {
        return Err(GirlError::invalid(format!(
            "reward vector of length {} for a simplex over {}",
            r.len(),
            simplex.n
        )));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(GirlError::invalid("reward vector must be finite"));
    }
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[a].total_cmp(&r[b]).then(a.cmp(&b)));
    let mut p = vec![simplex.lower; r.len()];
    let mut remaining = 1.0 - simplex.lower * r.len() as f64;
    let room = simplex.upper - simplex.lower;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let add = room.min(remaining);
        p[i] += add;
        remaining -= add;
    }
    Ok(p)
}

/// Value of the game for the agent when the adversary best-responds inside
/// the box: `min_{p in box} pi^T A p`.
pub fn restricted_value(pi: &[f64], a: &Matrix, simplex: &RestrictedSimplex) -> Result<f64> {
    let r = a.vec_mul(pi);
    let p = adversary_best_response(&r, simplex)?;
    Ok(dot(&r, &p))
}

/// Sum of both players' best-response regrets at `pair`; the adversary's
/// best response ranges over the box only.
pub fn restricted_exploitability(
    pair: &MetaStrategyPair,
    a: &Matrix,
    simplex: &RestrictedSimplex,
) -> Result<f64> {
    if pair.pi.len() != a.rows() || pair.p1.len() != a.cols() {
        return Err(GirlError::invalid("strategy pair does not match the payoff matrix"));
    }
    let ap = a.mul_vec(&pair.p1);
    let value = dot(&pair.pi, &ap);
    let agent_best = ap.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let adversary_best = restricted_value(&pair.pi, a, simplex)?;
    Ok((agent_best - value) + (value - adversary_best))
}

/// Restricted projected replicator dynamics.
///
/// Starts from uniform strategies (or `init`), then repeats: one replicator
/// step, clip-normalize `p1` into `task_simplex`, and apply the exploration
/// floor to both players. The task-side floor is folded into the box as
/// `max(lower, explore_eps)` so the two constraints cannot fight each other.
pub fn rprd_solve(
    a: &Matrix,
    task_simplex: &RestrictedSimplex,
    cfg: &SolverConfig,
    init: Option<&MetaStrategyPair>,
) -> Result<SolverOutput> {
    let (m, n) = (a.rows(), a.cols());
    if task_simplex.n != n {
        return Err(GirlError::invalid(format!(
            "task simplex has {} coordinates, payoff matrix has {n} tasks",
            task_simplex.n
        )));
    }
    let mut problems = Vec::new();
    cfg.validate("solver", &mut problems);
    if !problems.is_empty() {
        return Err(GirlError::Validation(problems));
    }
    if m > 1 && cfg.explore_eps * m as f64 >= 1.0 {
        return Err(GirlError::invalid(
            "explore_eps times the number of policies must be < 1",
        ));
    }
    if cfg.explore_eps * n as f64 >= 1.0 {
        return Err(GirlError::invalid(
            "explore_eps times the number of tasks must be < 1",
        ));
    }
    let floor_lower = task_simplex.lower.max(cfg.explore_eps);

    let (mut pi, mut p1) = match init {
        Some(pair) => {
            check_distribution("initial pi", &pair.pi)?;
            check_distribution("initial p1", &pair.p1)?;
            if pair.pi.len() != m || pair.p1.len() != n {
                return Err(GirlError::invalid("initial strategies have the wrong shape"));
            }
            let p1 = clip_normalize(&pair.p1, task_simplex)?;
            (pair.pi.clone(), p1)
        }
        None => (vec![1.0 / m as f64; m], task_simplex.uniform()),
    };
    if m == 1 {
        pi = vec![1.0];
    }

    let mut pi_hist: Vec<f64> = Vec::new();
    let mut p1_hist: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let (next_pi, next_p1) = rd_step(&pi, &p1, a, cfg.eta)?;
        let next_p1 = clip_normalize(&next_p1, task_simplex)?;
        let next_p1 = clip_normalize_box(&next_p1, n, floor_lower, task_simplex.upper)?;
        let next_pi = if m == 1 {
            vec![1.0]
        } else {
            proj_explore(&next_pi, cfg.explore_eps)?
        };
        let change = pi
            .iter()
            .zip(&next_pi)
            .chain(p1.iter().zip(&next_p1))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        pi = next_pi;
        p1 = next_p1;
        pi_hist.extend_from_slice(&pi);
        p1_hist.extend_from_slice(&p1);
        iterations += 1;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    let window = ((iterations as f64 * cfg.average_window).ceil() as usize).clamp(1, iterations.max(1));
    let start = iterations.saturating_sub(window);
    let mut pi_avg = vec![0.0; m];
    let mut p1_avg = vec![0.0; n];
    if iterations == 0 {
        pi_avg.clone_from(&pi);
        p1_avg.clone_from(&p1);
    } else {
        for k in start..iterations {
            for (acc, v) in pi_avg.iter_mut().zip(&pi_hist[k * m..(k + 1) * m]) {
                *acc += v;
            }
            for (acc, v) in p1_avg.iter_mut().zip(&p1_hist[k * n..(k + 1) * n]) {
                *acc += v;
            }
        }
        let count = (iterations - start) as f64;
        pi_avg.iter_mut().for_each(|v| *v /= count);
        p1_avg.iter_mut().for_each(|v| *v /= count);
    }
    let pi_avg = if m == 1 {
        vec![1.0]
    } else {
        proj_explore(&pi_avg, cfg.explore_eps)?
    };
    let p1_avg = clip_normalize(&p1_avg, task_simplex)?;
    let full = RestrictedSimplex::unrestricted(m)?;
    if !full.contains(&pi_avg) || !task_simplex.contains(&p1_avg) {
        return Err(GirlError::internal("solver output left its feasible set"));
    }
    Ok(SolverOutput {
        pair: MetaStrategyPair {
            pi: pi_avg,
            p1: p1_avg,
        },
        last_iterate: MetaStrategyPair { pi, p1 },
        iterations,
        converged,
    })
}

/// Draws `count` indices i.i.d. from `p` (with replacement).
pub fn sample_indices<R: Rng + ?Sized>(p: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    use rand::distr::weighted::WeightedIndex;
    use rand::distr::Distribution;
    let dist = WeightedIndex::new(p.iter().map(|v| v.max(0.0)))
        .map_err(|e| GirlError::invalid(format!("cannot sample from {p:?}: {e}")))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Long-format strategy rows: `loop,player,index,probability`.
pub fn write_strategy_rows<W: std::io::Write>(
    out: &mut W,
    loop_index: usize,
    pair: &MetaStrategyPair,
) -> std::io::Result<()> {
    for (i, v) in pair.pi.iter().enumerate() {
        writeln!(out, "{loop_index},pi,{i},{v}")?;
    }
    for (j, v) in pair.p1.iter().enumerate() {
        writeln!(out, "{loop_index},p1,{j},{v}")?;
    }
    Ok(())
}

pub fn strategies_csv_string(pairs: &[MetaStrategyPair]) -> String {
    let mut buf = Vec::new();
    let _ = writeln!(buf, "loop,player,index,probability");
    for (k, pair) in pairs.iter().enumerate() {
        let _ = write_strategy_rows(&mut buf, k, pair);
    }
    String::from_utf8(buf).unwrap_or_default()
}

/// Inverse of [`strategies_csv_string`].
pub fn parse_strategies_csv(text: &str) -> std::result::Result<Vec<MetaStrategyPair>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut pairs: Vec<MetaStrategyPair> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).ok_or_else(|| format!("line {line}: missing field"));
        let k: usize = field(0)?
            .parse()
            .map_err(|_| format!("line {line}: bad loop index"))?;
        let player = field(1)?;
        let idx: usize = field(2)?
            .parse()
            .map_err(|_| format!("line {line}: bad index"))?;
        let v: f64 = field(3)?
            .parse()
            .map_err(|_| format!("line {line}: bad probability"))?;
        if k == pairs.len() {
            pairs.push(MetaStrategyPair {
                pi: Vec::new(),
                p1: Vec::new(),
            });
        } else if k + 1 != pairs.len() {
            return Err(format!("line {line}: loop indices out of order"));
        }
        let pair = pairs.last_mut().expect("pushed above");
        let target = match player {
            "pi" => &mut pair.pi,
            "p1" => &mut pair.p1,
            other => return Err(format!("line {line}: unknown player `{other}`")),
        };
        if idx != target.len() {
            return Err(format!("line {line}: strategy indices out of order"));
        }
        target.push(v);
    }
    Ok(pairs)
}
