//! The outer PSRO loop: best response, payoff augmentation, meta-game solve.
//!
//! A run directory holds:
//!
//! * `manifest.toml`: full config, per-loop seeds, completed loop count
//! * `policies/policy_XXX.ckpt`: one checkpoint per loop
//! * `payoff.csv`: one row per policy, one column per task (0-shot returns)
//! * `strategies.csv`: `loop,player,index,probability`
//! * `diagnostics.csv`: one row per loop
//!
//! Everything is rewritten after each loop with the manifest written last,
//! so a crash leaves the previous loop's state intact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::env_suite::TaskSet;
use crate::error::{GirlError, Result};
use crate::maml_oracle::{best_response, RlObjective};
use crate::metagame::{
    augment_payoff, parse_strategies_csv, restricted_exploitability, restricted_value, rprd_solve,
    strategies_csv_string, MetaStrategyPair, PayoffTable, RestrictedSimplex,
};
use crate::policy_net::MlpParams;
use crate::seeding::{derive_seed, rng_from_seed};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PAYOFF_FILE: &str = "payoff.csv";
pub const STRATEGIES_FILE: &str = "strategies.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const POLICY_DIR: &str = "policies";
/// Meta-steps averaged for the training-return diagnostics.
const RETURN_WINDOW: usize = 20;

pub fn policy_file_name(loop_index: usize) -> String {
    format!("policy_{loop_index:03}.ckpt")
}

/// Seed of loop `k`; every random draw of the loop descends from it.
pub fn loop_seed(run_seed: u64, loop_index: usize) -> u64 {
    derive_seed(run_seed, loop_index as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopDiagnostics {
    #[serde(rename = "loop")]
    pub loop_index: usize,
    pub policies: usize,
    pub exploitability: f64,
    /// `min_{p in box} pi^T U p` for the solved `pi`.
    pub game_value: f64,
    pub solver_iterations: usize,
    pub solver_converged: bool,
    /// Mean pre- and post-adaptation returns over the last meta-steps.
    pub pre_return: f64,
    pub post_return: f64,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub policies: Vec<MlpParams>,
    pub payoff: PayoffTable,
    /// Meta-strategies solved at the end of each loop.
    pub strategies: Vec<MetaStrategyPair>,
    pub diagnostics: Vec<LoopDiagnostics>,
}

impl RunArtifacts {
    fn empty(tasks: &TaskSet) -> Self {
        Self {
            policies: Vec::new(),
            payoff: PayoffTable::new(tasks.contexts.iter().map(|c| c.id).collect()),
            strategies: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn loops_completed(&self) -> usize {
        self.policies.len()
    }

    pub fn final_strategy(&self) -> Option<&MetaStrategyPair> {
        self.strategies.last()
    }

    pub fn diagnostics_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for d in &self.diagnostics {
            w.serialize(d)
                .map_err(|e| GirlError::internal(format!("diagnostics encoding: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| GirlError::internal(format!("diagnostics encoding: {e}")))?;
        String::from_utf8(bytes).map_err(|e| GirlError::internal(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    #[serde(rename = "loop")]
    pub loop_index: usize,
    pub seed: u64,
    pub policy: String,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub loops_completed: usize,
    pub complete: bool,
    pub payoff: String,
    pub strategies: String,
    pub diagnostics: String,
    pub config: RunConfig,
    #[serde(default)]
    pub loops: Vec<LoopRecord>,
}

impl RunManifest {
    fn new(config: &RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            loops_completed: 0,
            complete: false,
            payoff: PAYOFF_FILE.into(),
            strategies: STRATEGIES_FILE.into(),
            diagnostics: DIAGNOSTICS_FILE.into(),
            config: config.clone(),
            loops: Vec::new(),
        }
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| GirlError::data(&path, format!("cannot read manifest: {e}")))?;
        let manifest: RunManifest = toml::from_str(&text)
            .map_err(|e| GirlError::data(&path, format!("corrupt manifest: {e}")))?;
        if manifest.loops.len() != manifest.loops_completed {
            return Err(GirlError::data(
                &path,
                format!(
                    "loop {}: manifest lists {} loop records for {} completed loops",
                    manifest.loops_completed,
                    manifest.loops.len(),
                    manifest.loops_completed
                ),
            ));
        }
        for (k, rec) in manifest.loops.iter().enumerate() {
            if rec.loop_index != k || rec.seed != loop_seed(manifest.config.seed, k) {
                return Err(GirlError::data(&path, format!("loop {k}: inconsistent loop record")));
            }
        }
        manifest
            .config
            .validate()
            .map_err(|e| GirlError::data(&path, format!("stored config is invalid: {e}")))?;
        Ok(manifest)
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| GirlError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| GirlError::io(path, e))
}

/// A PSRO run that can be advanced one loop at a time.
#[derive(Debug)]
pub struct PsroSession {
    config: RunConfig,
    tasks: TaskSet,
    train_simplex: RestrictedSimplex,
    artifacts: RunArtifacts,
    run_dir: Option<PathBuf>,
}

impl PsroSession {
    /// Starts a fresh run. With a `run_dir` the directory is created and an
    /// initial manifest is written.
    pub fn create(config: &RunConfig, run_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let tasks = config.tasks.build()?;
        let session = Self {
            config: config.clone(),
            train_simplex: config.train_simplex()?,
            artifacts: RunArtifacts::empty(&tasks),
            tasks,
            run_dir: run_dir.map(Path::to_path_buf),
        };
        if let Some(dir) = &session.run_dir {
            std::fs::create_dir_all(dir.join(POLICY_DIR)).map_err(|e| GirlError::io(dir, e))?;
            session.persist()?;
        }
        Ok(session)
    }

    /// Reloads a run directory written by a previous session.
    pub fn resume(run_dir: &Path) -> Result<Self> {
        let manifest = RunManifest::load(run_dir)?;
        let config = manifest.config.clone();
        let tasks = config.tasks.build()?;
        let train_simplex = config.train_simplex()?;
        let n_loops = manifest.loops_completed;
        let mut artifacts = RunArtifacts::empty(&tasks);

        for (k, rec) in manifest.loops.iter().enumerate() {
            let path = run_dir.join(&rec.policy);
            let policy = MlpParams::load(&path)
                .map_err(|e| GirlError::data(&path, format!("loop {k}: {e}")))?;
            if policy.arch() != &config.architecture() {
                return Err(GirlError::data(&path, format!("loop {k}: architecture mismatch")));
            }
            artifacts.policies.push(policy);
        }

        let payoff_path = run_dir.join(&manifest.payoff);
        let payoff = PayoffTable::load_csv(&payoff_path)?;
        if payoff.num_policies() < n_loops || payoff.task_ids() != artifacts.payoff.task_ids() {
            return Err(GirlError::data(
                &payoff_path,
                format!("loop {n_loops}: payoff table does not match the manifest"),
            ));
        }
        artifacts.payoff =
            PayoffTable::from_rows(payoff.task_ids().to_vec(), payoff.rows()[..n_loops].to_vec())?;

        let strat_path = run_dir.join(&manifest.strategies);
        let text = std::fs::read_to_string(&strat_path).map_err(|e| GirlError::io(&strat_path, e))?;
        let mut strategies =
            parse_strategies_csv(&text).map_err(|e| GirlError::data(&strat_path, e))?;
        if strategies.len() < n_loops {
            return Err(GirlError::data(
                &strat_path,
                format!("loop {}: strategies missing", strategies.len()),
            ));
        }
        strategies.truncate(n_loops);
        for (k, pair) in strategies.iter().enumerate() {
            if pair.pi.len() != k + 1 || !train_simplex.contains(&pair.p1) {
                return Err(GirlError::data(
                    &strat_path,
                    format!("loop {k}: stored task distribution is outside the training box"),
                ));
            }
        }
        artifacts.strategies = strategies;

        let diag_path = run_dir.join(&manifest.diagnostics);
        let mut rdr = csv::Reader::from_path(&diag_path)
            .map_err(|e| GirlError::data(&diag_path, e.to_string()))?;
        let mut diagnostics = rdr
            .deserialize::<LoopDiagnostics>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| GirlError::data(&diag_path, e.to_string()))?;
        if diagnostics.len() < n_loops {
            return Err(GirlError::data(
                &diag_path,
                format!("loop {}: diagnostics missing", diagnostics.len()),
            ));
        }
        diagnostics.truncate(n_loops);
        artifacts.diagnostics = diagnostics;

        Ok(Self {
            config,
            tasks,
            train_simplex,
            artifacts,
            run_dir: Some(run_dir.to_path_buf()),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    pub fn artifacts(&self) -> &RunArtifacts {
        &self.artifacts
    }

    pub fn is_complete(&self) -> bool {
        let done = self.artifacts.loops_completed();
        done >= self.config.psro.max_loops || done >= self.config.psro.max_policies
    }

    /// Runs one loop; a no-op once the run is complete.
    pub fn run_loop(&mut self) -> Result<()> {
        if self.is_complete() {
            return Ok(());
        }
        let started = Instant::now();
        let cfg = &self.config;
        let k = self.artifacts.loops_completed();
        let seed = loop_seed(cfg.seed, k);
        let mut rng = rng_from_seed(derive_seed(seed, 0));

        let p1 = match self.artifacts.strategies.last() {
            Some(pair) => pair.p1.clone(),
            None => self.tasks.p0.clone(),
        };
        let init = match cfg.psro.mode {
            Mode::Girl => self.artifacts.policies.last().cloned(),
            Mode::StarGirl => None,
        };
        let objective = RlObjective {
            tasks: &self.tasks,
            env: &cfg.env,
            pg: &cfg.pg,
            traj_per_task: cfg.maml.traj_per_task,
        };
        let (policy, history) =
            best_response(&p1, &objective, &cfg.maml, &cfg.architecture(), init, &mut rng)?;

        let payoff = augment_payoff(
            &self.artifacts.payoff,
            &policy,
            &self.tasks,
            &cfg.env,
            cfg.psro.eval_episodes,
            derive_seed(seed, 1),
        )?;
        let matrix = payoff.matrix()?;
        let solved = rprd_solve(&matrix, &self.train_simplex, &cfg.solver, None)?;
        let exploitability = restricted_exploitability(&solved.pair, &matrix, &self.train_simplex)?;
        let game_value = restricted_value(&solved.pair.pi, &matrix, &self.train_simplex)?;

        let tail = &history[history.len().saturating_sub(RETURN_WINDOW)..];
        let tail_mean = |f: fn(&crate::maml_oracle::MetaStepStats) -> f64| {
            if tail.is_empty() {
                f64::NAN
            } else {
                tail.iter().map(f).sum::<f64>() / tail.len() as f64
            }
        };
        let diag = LoopDiagnostics {
            loop_index: k,
            policies: k + 1,
            exploitability,
            game_value,
            solver_iterations: solved.iterations,
            solver_converged: solved.converged,
            pre_return: tail_mean(|s| s.pre_return),
            post_return: tail_mean(|s| s.post_return),
            wall_time_secs: started.elapsed().as_secs_f64(),
        };

        self.artifacts.policies.push(policy);
        self.artifacts.payoff = payoff;
        self.artifacts.strategies.push(solved.pair);
        self.artifacts.diagnostics.push(diag);
        if self.run_dir.is_some() {
            self.persist()?;
        }
        Ok(())
    }

    pub fn run_to_end(mut self) -> Result<RunArtifacts> {
        while !self.is_complete() {
            self.run_loop()?;
        }
        Ok(self.artifacts)
    }

    fn persist(&self) -> Result<()> {
        let Some(dir) = &self.run_dir else {
            return Ok(());
        };
        let mut manifest = RunManifest::new(&self.config);
        for (k, policy) in self.artifacts.policies.iter().enumerate() {
            let rel = format!("{POLICY_DIR}/{}", policy_file_name(k));
            let path = dir.join(&rel);
            if !path.exists() {
                write_atomic(&path, &policy.to_checkpoint_string())?;
            }
            manifest.loops.push(LoopRecord {
                loop_index: k,
                seed: loop_seed(self.config.seed, k),
                policy: rel,
                status: "complete".into(),
            });
        }
        manifest.loops_completed = self.artifacts.loops_completed();
        manifest.complete = self.is_complete();
        write_atomic(&dir.join(PAYOFF_FILE), &self.artifacts.payoff.to_csv_string())?;
        write_atomic(
            &dir.join(STRATEGIES_FILE),
            &strategies_csv_string(&self.artifacts.strategies),
        )?;
        let diagnostics = if self.artifacts.diagnostics.is_empty() {
            diagnostics_header()
        } else {
            self.artifacts.diagnostics_csv_string()?
        };
        write_atomic(&dir.join(DIAGNOSTICS_FILE), &diagnostics)?;
        let text = toml::to_string(&manifest)
            .map_err(|e| GirlError::internal(format!("manifest encoding: {e}")))?;
        write_atomic(&dir.join(MANIFEST_FILE), &text)
    }
}

fn diagnostics_header() -> String {
    "loop,policies,exploitability,game_value,solver_iterations,solver_converged,pre_return,post_return,wall_time_secs\n"
        .to_string()
}

/// Runs PSRO to completion, persisting into `run_dir` when given.
pub fn run_psro(config: &RunConfig, run_dir: Option<&Path>) -> Result<RunArtifacts> {
    PsroSession::create(config, run_dir)?.run_to_end()
}

/// Continues an interrupted run from its last completed loop.
pub fn resume(run_dir: &Path) -> Result<RunArtifacts> {
    PsroSession::resume(run_dir)?.run_to_end()
}
