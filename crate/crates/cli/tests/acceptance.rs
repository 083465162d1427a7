//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test -p girl-cli --test acceptance -- 2 3`.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use girl_core::config::{Mode, RunConfig};
use girl_core::env_suite::{make_pointvel_tasks, rollout, EnvConfig, TaskFamily, Trajectory};
use girl_core::eval_protocol::{compare_methods, evaluate, ComparisonTable, EvalConfig, Method};
use girl_core::metagame::{
    adversary_best_response, clip_normalize, rprd_solve, Matrix, MetaStrategyPair, RestrictedSimplex,
    SolverConfig,
};
use girl_core::policy_net::{advantages, pg_gradient, Architecture, Baseline, MlpParams, PgConfig};
use girl_core::psro_loop::{run_psro, RunArtifacts};
use girl_core::seeding::{derive_seed, rng_from_seed};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn desk_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    RunConfig::load(&path).expect("desk profile")
}

// ---------------------------------------------------------------------------
// Independent oracles.

/// Greedy minimizer of `p . r` over the box: everything at the lower bound,
/// then fill the cheapest coordinates up to the upper bound.
fn greedy_min(r: &[f64], lower: f64, upper: f64) -> f64 {
    let mut idx: Vec<usize> = (0..r.len()).collect();
    idx.sort_by(|a, b| r[*a].partial_cmp(&r[*b]).unwrap());
    let mut left = 1.0 - lower * r.len() as f64;
    let mut value: f64 = r.iter().map(|v| v * lower).sum();
    for i in idx {
        let add = (upper - lower).min(left.max(0.0));
        value += add * r[i];
        left -= add;
    }
    value
}

/// Exploitability from row enumeration (agent) and the greedy box oracle
/// (adversary).
fn oracle_exploitability(a: &[Vec<f64>], pair: &MetaStrategyPair, lower: f64, upper: f64) -> f64 {
    let n = a[0].len();
    let ap: Vec<f64> = a.iter().map(|row| row.iter().zip(&pair.p1).map(|(x, y)| x * y).sum()).collect();
    let value: f64 = ap.iter().zip(&pair.pi).map(|(x, y)| x * y).sum();
    let best_row = ap.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r: Vec<f64> = (0..n).map(|j| a.iter().zip(&pair.pi).map(|(row, w)| row[j] * w).sum()).collect();
    (best_row - value) + (value - greedy_min(&r, lower, upper))
}

/// Exact minimum over the 1e-3 grid of the box, by dynamic programming over
/// units of mass.
fn grid_min(r: &[f64], lower_units: usize, upper_units: usize) -> f64 {
    const TOTAL: usize = 1000;
    let mut best = vec![f64::INFINITY; TOTAL + 1];
    best[0] = 0.0;
    for &rj in r {
        let mut next = vec![f64::INFINITY; TOTAL + 1];
        for used in 0..=TOTAL {
            if best[used].is_finite() {
                for k in lower_units..=upper_units.min(TOTAL - used) {
                    let v = best[used] + rj * k as f64 / TOTAL as f64;
                    if v < next[used + k] {
                        next[used + k] = v;
                    }
                }
            }
        }
        best = next;
    }
    best[TOTAL]
}

/// Saturate-then-proportional closed form: `clip(s p)` with `s` solved by
/// bisection.
fn closed_form_clip(p: &[f64], lower: f64, upper: f64) -> Vec<f64> {
    let mass = |s: f64| p.iter().map(|v| (s * v).clamp(lower, upper)).sum::<f64>();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while mass(hi) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    p.iter().map(|v| (hi * v).clamp(lower, upper)).collect()
}

fn naive_mean(arch: &Architecture, theta: &[f64], obs: &[f64]) -> Vec<f64> {
    let mut dims = vec![arch.obs_dim];
    dims.extend(&arch.hidden);
    dims.push(arch.act_dim);
    let mut x = obs.to_vec();
    let mut at = 0;
    for l in 0..dims.len() - 1 {
        let (fi, fo) = (dims[l], dims[l + 1]);
        let (w, b) = (&theta[at..at + fi * fo], &theta[at + fi * fo..at + fi * fo + fo]);
        at += fi * fo + fo;
        x = (0..fo)
            .map(|r| {
                let s = b[r] + (0..fi).map(|c| w[r * fi + c] * x[c]).sum::<f64>();
                if l + 2 < dims.len() {
                    s.max(0.0)
                } else {
                    s
                }
            })
            .collect();
    }
    x
}

fn naive_loss(arch: &Architecture, theta: &[f64], trajs: &[Trajectory], adv: &[Vec<f64>], eb: f64) -> f64 {
    let log_std = &theta[theta.len() - arch.act_dim..];
    let (mut total, mut steps) = (0.0, 0usize);
    for (tr, a) in trajs.iter().zip(adv) {
        for t in 0..tr.actions.len() {
            let mean = naive_mean(arch, theta, &tr.states[t]);
            let logp: f64 = (0..arch.act_dim)
                .map(|k| {
                    let z = (tr.actions[t][k] - mean[k]) / log_std[k].exp();
                    -0.5 * z * z - log_std[k] - 0.5 * (2.0 * std::f64::consts::PI).ln()
                })
                .sum();
            total += logp * a[t];
            steps += 1;
        }
    }
    let h: f64 = log_std
        .iter()
        .map(|ls| ls + 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln())
        .sum();
    -total / steps as f64 - eb * h
}

// ---------------------------------------------------------------------------
// Shared desk-scale runs.

fn desk_runs() -> &'static Vec<(RunConfig, RunArtifacts)> {
    static RUNS: OnceLock<Vec<(RunConfig, RunArtifacts)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..3u64)
            .map(|seed| {
                let mut cfg = desk_config();
                cfg.seed = seed;
                cfg.psro.mode = Mode::Girl;
                let art = run_psro(&cfg, None).expect("desk PSRO run");
                (cfg, art)
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Criteria.

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let tasks = make_pointvel_tasks(3, 0.0, 2.0).unwrap();
    let env = EnvConfig {
        horizon: 8,
        ..EnvConfig::default()
    };
    let mut worst: f64 = 0.0;
    for case in 0..50u64 {
        let mut rng = rng_from_seed(derive_seed(0xFD, case));
        let arch = Architecture {
            obs_dim: 2,
            act_dim: 1,
            hidden: vec![rng.random_range(1..=8), rng.random_range(1..=8)],
        };
        let values = (0..arch.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = MlpParams::from_values(arch.clone(), values).unwrap();
        let trajs: Vec<Trajectory> = (0..3)
            .map(|i| rollout(&params, TaskFamily::PointVel, &tasks.contexts[i], &env, &mut rng).unwrap())
            .collect();
        let cfg = PgConfig {
            baseline: [Baseline::None, Baseline::MeanReturn, Baseline::TimeMean][case as usize % 3],
            entropy_bonus: if case % 2 == 0 { 0.0 } else { 0.01 },
            ..PgConfig::default()
        };
        let adv = advantages(&trajs, &cfg, env.gamma);
        let analytic = pg_gradient(&params, &trajs, &cfg, env.gamma).unwrap();
        let theta = params.values().to_vec();
        let mut probe = theta.clone();
        let h = 1e-5;
        let numeric: Vec<f64> = (0..theta.len())
            .map(|i| {
                probe[i] = theta[i] + h;
                let up = naive_loss(&arch, &probe, &trajs, &adv, cfg.entropy_bonus);
                probe[i] = theta[i] - h;
                let down = naive_loss(&arch, &probe, &trajs, &adv, cfg.entropy_bonus);
                probe[i] = theta[i];
                (up - down) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic.values().iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.norm().max(numeric.iter().map(|v| v * v).sum::<f64>().sqrt()).max(1e-12);
        worst = worst.max(diff / scale);
    }
    let elapsed = started.elapsed();
    Outcome {
        pass: worst <= 1e-4 && elapsed < Duration::from_secs(10),
        detail: format!("50 nets, worst relative error {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    }
}

struct Game {
    rows: Vec<Vec<f64>>,
    lower: f64,
    upper: f64,
}

fn random_games() -> Vec<Game> {
    let mut rng = rng_from_seed(0x6A4E);
    (0..100)
        .map(|_| {
            let m = rng.random_range(1..=8);
            let n = rng.random_range(2..=8);
            let inv = 1.0 / n as f64;
            let lower = rng.random_range(0.0..inv);
            let upper = rng.random_range(inv..=1.0);
            let rows = (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            Game { rows, lower, upper }
        })
        .collect()
}

fn solve_games() -> &'static (Vec<(MetaStrategyPair, f64)>, Duration) {
    static SOLVED: OnceLock<(Vec<(MetaStrategyPair, f64)>, Duration)> = OnceLock::new();
    SOLVED.get_or_init(|| {
        let started = Instant::now();
        let out = random_games()
            .iter()
            .map(|g| {
                let a = Matrix::from_rows(&g.rows).unwrap();
                let simplex = RestrictedSimplex::new(g.rows[0].len(), g.lower, g.upper).unwrap();
                let pair = rprd_solve(&a, &simplex, &SolverConfig::default(), None).unwrap().pair;
                let range = a.max() - a.min();
                (pair, range)
            })
            .collect();
        (out, started.elapsed())
    })
}

fn criterion_2() -> Outcome {
    let games = random_games();
    let (solved, elapsed) = solve_games();
    let mut bad = 0;
    for (g, (pair, _)) in games.iter().zip(solved) {
        let ok_pi = (pair.pi.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && pair.pi.iter().all(|v| *v >= -1e-9);
        let ok_p1 = (pair.p1.iter().sum::<f64>() - 1.0).abs() <= 1e-9
            && pair.p1.iter().all(|v| *v >= g.lower - 1e-9 && *v <= g.upper + 1e-9);
        if !(ok_pi && ok_p1) {
            bad += 1;
        }
    }
    Outcome {
        pass: bad == 0 && *elapsed < Duration::from_secs(60),
        detail: format!("{bad} infeasible outputs of 100, {:.1}s", elapsed.as_secs_f64()),
    }
}

fn criterion_3() -> Outcome {
    let games = random_games();
    let (solved, _) = solve_games();
    let good = games
        .iter()
        .zip(solved)
        .filter(|(g, (pair, range))| oracle_exploitability(&g.rows, pair, g.lower, g.upper) <= 0.05 * range)
        .count();
    let diag = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let pair = rprd_solve(&diag, &RestrictedSimplex::new(2, 0.0, 1.0).unwrap(), &SolverConfig::default(), None)
        .unwrap()
        .pair;
    let diag_err = pair.pi.iter().chain(&pair.p1).map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    Outcome {
        pass: good >= 95 && diag_err <= 0.05,
        detail: format!("{good}/100 within 0.05*range; 2x2 diagonal max deviation {diag_err:.2e}"),
    }
}

fn criterion_4() -> Outcome {
    let mut rng = rng_from_seed(0x0AC1E);
    let mut worst_gap: f64 = 0.0;
    for _ in 0..300 {
        let n = rng.random_range(2..=4);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let lo = rng.random_range(0..=1000 / n);
        let hi = rng.random_range(1000usize.div_ceil(n)..=1000);
        let simplex = RestrictedSimplex::new(n, lo as f64 / 1000.0, hi as f64 / 1000.0).unwrap();
        let p = adversary_best_response(&r, &simplex).unwrap();
        let v: f64 = p.iter().zip(&r).map(|(a, b)| a * b).sum();
        let scale = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        worst_gap = worst_gap.max((v - grid_min(&r, lo, hi)).abs() / scale);
    }
    let mut worst_clip: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let inv = 1.0 / n as f64;
        let lower = rng.random_range(0.0..inv);
        let upper = rng.random_range(inv..=1.0);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..1.0)).collect();
        let simplex = RestrictedSimplex::new(n, lower, upper).unwrap();
        if simplex.contains(&p) {
            continue;
        }
        let out = clip_normalize(&p, &simplex).unwrap();
        let oracle = closed_form_clip(&p, lower, upper);
        worst_clip = out.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst_clip, f64::max);
    }
    Outcome {
        pass: worst_gap <= 1e-3 && worst_clip <= 1e-9,
        detail: format!("adversary gap {worst_gap:.2e}*|r|, clip_normalize max deviation {worst_clip:.2e}"),
    }
}

fn criterion_5() -> Outcome {
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    for (cfg, art) in desk_runs() {
        let m = art.payoff.matrix().unwrap();
        let tol = 0.02 * (m.max() - m.min());
        let values: Vec<f64> = art
            .strategies
            .iter()
            .enumerate()
            .map(|(k, pair)| {
                // Value against the first k+1 rows only.
                let r: Vec<f64> = (0..m.cols())
                    .map(|j| (0..=k).map(|i| pair.pi[i] * m.get(i, j)).sum())
                    .collect();
                greedy_min(&r, cfg.psro.train_min, cfg.psro.train_max)
            })
            .collect();
        for (k, w) in values.windows(2).enumerate() {
            if w[1] < w[0] - tol {
                failures.push(format!("seed {} loop {}: {:.3} -> {:.3}", cfg.seed, k + 1, w[0], w[1]));
            }
        }
        let shown: Vec<String> = values.iter().map(|v| format!("{v:.2}")).collect();
        traces.push(format!("seed {}: [{}] tol {tol:.2}", cfg.seed, shown.join(", ")));
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            traces.join("; ")
        } else {
            failures.join("; ")
        },
    }
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let cfg = desk_config();
    let table: ComparisonTable = compare_methods(&cfg, &mut |line| eprintln!("  [compare] {line}")).unwrap();
    println!("{}", table.to_text_table());
    let mut failing = Vec::new();
    let mut cells = 0;
    for &k in &table.shots {
        for &te in &table.test_max {
            for &tr in &table.train_max {
                cells += 1;
                let maml = &table.cell(k, te, tr, Method::Maml).unwrap().values;
                let star = &table.cell(k, te, tr, Method::StarGirl).unwrap().values;
                let girl = &table.cell(k, te, tr, Method::Girl).unwrap().values;
                let wins = (0..maml.len()).filter(|&s| star[s].max(girl[s]) >= maml[s]).count();
                if wins < 2 {
                    failing.push(format!("K={k} test_max={te} train_max={tr} ({wins}/3)"));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "{}/{} cells with >= 2 of 3 seed wins, {:.0}s{}",
        cells - failing.len(),
        cells,
        elapsed.as_secs_f64(),
        if failing.is_empty() {
            String::new()
        } else {
            format!("; losing cells: {}", failing.join(", "))
        }
    );
    Outcome {
        pass: failing.is_empty() && elapsed < Duration::from_secs(2 * 3600),
        detail,
    }
}

fn criterion_7() -> Outcome {
    let (cfg, art) = &desk_runs()[0];
    let tasks = cfg.tasks.build().unwrap();
    let pi = &art.final_strategy().unwrap().pi;
    let boxes = [(0.2, 0.2), (0.15, 0.3), (0.1, 0.3), (0.1, 0.5), (0.0, 0.5), (0.0, 0.7), (0.0, 1.0)];
    let mut values = Vec::new();
    let mut oracle_gap: f64 = 0.0;
    for &(lo, hi) in &boxes {
        let mut run_cfg = cfg.clone();
        run_cfg.eval.test_min = lo;
        run_cfg.eval.test_max = hi;
        run_cfg.eval.shots = 1;
        let eval = EvalConfig::from_run_config(&run_cfg).unwrap();
        let report = evaluate(&art.policies, pi, &tasks, &cfg.env, &cfg.pg, &eval).unwrap();
        oracle_gap = oracle_gap.max((report.value - greedy_min(&report.aggregated, lo, hi)).abs());
        values.push(report.value);
    }
    let monotone = values.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    Outcome {
        pass: monotone && oracle_gap <= 1e-9,
        detail: format!("nested boxes -> [{}], oracle gap {oracle_gap:.1e}", shown.join(", ")),
    }
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let mut dirs = Vec::new();
    for name in ["first", "second"] {
        let dir = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_girl"))
            .args(["train", "--config"])
            .arg(&config)
            .arg("--run-dir")
            .arg(&dir)
            .output()
            .unwrap();
        if status.status.code() != Some(0) {
            return Outcome {
                pass: false,
                detail: format!("train failed: {}", String::from_utf8_lossy(&status.stderr)),
            };
        }
        dirs.push(dir);
    }
    let same = ["payoff.csv", "strategies.csv"]
        .iter()
        .all(|f| std::fs::read(dirs[0].join(f)).unwrap() == std::fs::read(dirs[1].join(f)).unwrap());
    Outcome {
        pass: same,
        detail: format!("payoff.csv and strategies.csv {}", if same { "byte-identical" } else { "differ" }),
    }
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "gradient correctness", criterion_1),
        (2, "R-PRD feasibility", criterion_2),
        (3, "R-PRD quality", criterion_3),
        (4, "oracle equivalence", criterion_4),
        (5, "weak improvement across loops", criterion_5),
        (6, "GiRL/*GiRL vs MAML against the adversary", criterion_6),
        (7, "monotonicity in test_max", criterion_7),
        (8, "train determinism", criterion_8),
    ];
    let mut lines = Vec::new();
    let mut all_pass = true;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let outcome = run();
        all_pass &= outcome.pass;
        let line = format!(
            "criterion {id} [{name}]: {} ({})",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        println!("{line}");
        lines.push(line);
    }
    println!("\nacceptance summary:");
    for line in &lines {
        println!("  {line}");
    }
    if !all_pass {
        std::process::exit(1);
    }
}
