//! Command-line front end: replicated simulations, offline replay, and a
//! self-test suite of solver/inference oracle checks.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use sbinfer::debias;
use sbinfer::env;
use sbinfer::harness::{
    export_experiment, export_replay, run_experiment, run_replay, ExperimentSpec, RunConfig,
};
use sbinfer::learner::HtConfig;
use sbinfer::policy::PolicyMode;
use sbinfer::Method;

#[derive(Parser)]
#[command(name = "sbinfer")]
#[command(about = "Sparse-bandit estimation and inference harness")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Ipw,
    Aw,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Ipw => Method::Ipw,
            MethodArg::Aw => Method::Aw,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a replicated synthetic experiment from a JSON config.
    Simulate {
        /// JSON configuration file (scenario, schedule, ht, inference, ...).
        #[arg(long)]
        config: PathBuf,
        /// Number of independent trials (overrides the config).
        #[arg(long)]
        trials: Option<usize>,
        /// Use an ε-greedy schedule with this decay exponent.
        #[arg(long, conflicts_with = "exploration_free")]
        gamma: Option<f64>,
        /// Use the exploration-free (pure greedy) schedule.
        #[arg(long)]
        exploration_free: bool,
        /// Debiasing route (overrides the config).
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Output directory for CSV/JSON artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// How many leading trials keep their full trajectory log.
        #[arg(long = "keep-logs")]
        keep_logs: Option<usize>,
    },
    /// Replay an offline dataset (CSV: x1,...,xd,label).
    Replay {
        #[arg(long)]
        data: PathBuf,
        /// Covariate dimension of the dataset.
        #[arg(long)]
        d: usize,
        /// Number of arms.
        #[arg(long)]
        arms: usize,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Seed for the policy's action sampling.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the oracle-equivalence property suite.
    Selftest,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Simulate {
            config,
            trials,
            gamma,
            exploration_free,
            method,
            out,
            workers,
            keep_logs,
        } => simulate(
            config,
            trials,
            gamma,
            exploration_free,
            method.map(Into::into),
            out,
            workers,
            keep_logs,
        ),
        Cmd::Replay {
            data,
            d,
            arms,
            config,
            out,
            method,
            seed,
        } => replay(data, d, arms, config, out, method.map(Into::into), seed),
        Cmd::Selftest => selftest(),
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    RunConfig::from_json(&text).with_context(|| format!("parsing config {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: PathBuf,
    trials: Option<usize>,
    gamma: Option<f64>,
    exploration_free: bool,
    method: Option<Method>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    keep_logs: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(&config)?;
    if let Some(g) = gamma {
        cfg.schedule.gamma = g;
        cfg.schedule.mode = PolicyMode::EpsilonGreedy;
    }
    if exploration_free {
        cfg.schedule.mode = PolicyMode::ExplorationFree;
    }
    if let Some(m) = method {
        cfg.method = Some(m);
    }
    let scenario = cfg
        .scenario
        .clone()
        .context("simulate requires a 'scenario' block in the config")?;
    let ht = cfg
        .ht
        .unwrap_or_else(|| HtConfig::with_default_sparsity(scenario.s0, scenario.d));
    let spec = ExperimentSpec {
        scenario,
        schedule: cfg.schedule,
        ht,
        method: cfg.resolved_method(),
        inference: cfg.inference,
        n_trials: trials.or(cfg.trials).unwrap_or(1000),
        workers: workers.or(cfg.workers).unwrap_or(0),
        keep_logs: keep_logs.or(cfg.keep_logs).unwrap_or(5),
    };
    eprintln!(
        "simulate: d={} T={} K={} s0={} method={} mode={:?} trials={}",
        spec.scenario.d,
        spec.scenario.horizon,
        spec.scenario.arms,
        spec.scenario.s0,
        spec.method,
        spec.schedule.mode,
        spec.n_trials
    );
    let result = run_experiment(&spec)?;
    let agg = &result.aggregate;
    println!(
        "oracle value: {:.6}   mean value estimate: {:.6}   value CI coverage: {:.3}",
        result.oracle_value, agg.mean_value, agg.value_coverage
    );
    let d10 = 10.min(spec.scenario.d);
    let cov10: f64 = agg
        .coverage
        .iter()
        .map(|row| row.iter().take(d10).sum::<f64>() / d10 as f64)
        .sum::<f64>()
        / agg.coverage.len() as f64;
    println!(
        "coverage (first {d10} coords, all arms): {:.3}   final mean regret: {:.3}",
        cov10,
        agg.regret_mean.last().copied().unwrap_or(0.0)
    );
    println!("runtime: {:.1}s", result.runtime_seconds);
    if let Some(dir) = out {
        let files = export_experiment(&result, &dir)?;
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn replay(
    data: PathBuf,
    d: usize,
    arms: usize,
    config: PathBuf,
    out: PathBuf,
    method: Option<Method>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(&config)?;
    let rows = env::load_replay(&data, d, arms)?;
    let ht = cfg
        .ht
        .context("replay requires an 'ht' block (working sparsity) in the config")?;
    let method = method.unwrap_or_else(|| cfg.resolved_method());
    let seed = seed
        .or(cfg.seed)
        .or_else(|| cfg.scenario.as_ref().map(|s| s.seed))
        .unwrap_or(0);
    eprintln!(
        "replay: {} subjects, d={d}, K={arms}, method={method}",
        rows.len()
    );
    let start = std::time::Instant::now();
    let (log, report) = run_replay(
        &rows,
        d,
        arms,
        &cfg.schedule,
        &ht,
        method,
        &cfg.inference,
        seed,
    )?;
    let frac = log
        .cumulative_fraction_correct()
        .last()
        .copied()
        .unwrap_or(0.0);
    println!(
        "fraction correct: {:.4}   value estimate: {:.4} ± {:.4}",
        frac, report.value.v_hat, report.value.se
    );
    let files = export_replay(&log, &report, start.elapsed().as_secs_f64(), &out)?;
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

fn selftest() -> Result<()> {
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("selftest {name}: {}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    check("decorr-matches-dense-inverse", selftest_dense_inverse());
    check("decorr-kkt-certificates", selftest_kkt());
    check("decorr-objective-monotone", selftest_objective_monotone());
    check("normal-quantile-table", selftest_quantile());
    check("debias-identity-on-zero-residuals", selftest_debias_identity());
    check("hard-threshold-projections", selftest_hard_threshold());

    if failures > 0 {
        bail!("{failures} selftest check(s) failed");
    }
    println!("selftest: all checks passed");
    Ok(())
}

fn random_spd(d: usize, seed: u64) -> sbinfer::linalg::DMat {
    use rand::Rng;
    let mut rng = env::derive_rng(seed, 99, 0);
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        })
        .collect();
    let mut a = sbinfer::linalg::DMat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for r in &rows {
                s += r[i] * r[j];
            }
            a.set(i, j, s / d as f64 + if i == j { 0.5 } else { 0.0 });
        }
    }
    let _ = rng.random::<f64>();
    a
}

fn selftest_dense_inverse() -> bool {
    use sbinfer::linalg::DMat;
    for trial in 0..50u64 {
        let d = 4 + (trial as usize * 7) % 17; // 4..20
        let a = random_spd(d, trial);
        let Some(inv) = a.invert() else {
            return false;
        };
        let m = debias::build_decorr_from_matrix(&a, debias::DecorrTarget::Pooled, 0.0, 1e-10, 500);
        let m_mat = DMat::from_rows(&(0..d).map(|l| m.row(l).to_vec()).collect::<Vec<_>>());
        if m_mat.frobenius_diff(&inv) >= 1e-6 {
            return false;
        }
    }
    true
}

fn selftest_kkt() -> bool {
    for (seed, mu) in [(60u64, 0.02), (61, 0.1), (62, 0.4)] {
        let a = random_spd(40, seed);
        let m = debias::build_decorr_from_matrix(&a, debias::DecorrTarget::Pooled, mu, 1e-8, 200);
        for l in 0..40 {
            if !m.converged[l] || m.kkt_residuals[l] > mu + 1e-6 {
                return false;
            }
        }
    }
    true
}

fn selftest_objective_monotone() -> bool {
    let a = random_spd(30, 70);
    for l in [0usize, 7, 29] {
        let sol = debias::solve_decorrelation_row(&a, l, 0.05, 1e-10, 300);
        for w in sol.objective_trace.windows(2) {
            if w[1] > w[0] + 1e-12 * w[0].abs().max(1.0) {
                return false;
            }
        }
    }
    true
}

fn selftest_quantile() -> bool {
    let table = [
        (0.5, 0.0),
        (0.975, 1.959963984540054),
        (0.995, 2.5758293035489004),
        (0.0001, -3.7190164854556804),
    ];
    for (p, want) in table {
        match sbinfer::stats::normal_quantile(p) {
            Ok(got) if (got - want).abs() < 1e-8 => {}
            _ => return false,
        }
    }
    for i in 1..50 {
        let p = i as f64 / 50.0;
        let (Ok(a), Ok(b)) = (
            sbinfer::stats::normal_quantile(p),
            sbinfer::stats::normal_quantile(1.0 - p),
        ) else {
            return false;
        };
        if (a + b).abs() > 1e-9 {
            return false;
        }
    }
    true
}

fn selftest_debias_identity() -> bool {
    use sbinfer::harness::{LogMeta, LogRow, TrajectoryLog};
    use sbinfer::inference::InferenceConfig;
    use sbinfer::learner::Weighting;
    use sbinfer::policy::{ExplorationSchedule, PropensityVector};

    // rewards equal to the reference prediction exactly → zero residuals
    let beta = vec![0.4, -0.2, 0.0];
    let d = 3;
    let rows: Vec<LogRow> = (0..12)
        .map(|i| {
            let x = vec![
                ((i * 3 + 1) as f64 * 0.29).sin(),
                ((i * 5 + 2) as f64 * 0.17).cos(),
                ((i * 7 + 3) as f64 * 0.11).sin(),
            ];
            let action = i % 2;
            let mut probs = vec![0.5; 2];
            probs[action] = 0.5;
            let y = beta.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
            LogRow {
                t: i + 1,
                x,
                eps: 1.0,
                pv: PropensityVector::new(probs, 0).unwrap(),
                action,
                y,
                oracle: None,
            }
        })
        .collect();
    let log = TrajectoryLog {
        meta: LogMeta {
            d,
            k: 2,
            method: Method::Ipw,
            weighting: Weighting::Ipw,
            s: 2,
            eta: 0.1,
            sigma_burn_in: 0,
            schedule: ExplorationSchedule::epsilon_greedy(1.0, 0.0),
            s0_for_mu: 2,
            margin_nu: 1.0,
            inference: InferenceConfig::default(),
            seed: 0,
            trial_index: 0,
        },
        rows,
    };
    let Ok(covs) = debias::accumulate_covariances(&log) else {
        return false;
    };
    let Ok(m) = debias::build_decorr(&covs, debias::DecorrTarget::Pooled, 0.05, 1e-9) else {
        return false;
    };
    for arm in 0..2 {
        match debias::ipw_debias(arm, &beta, &log, &m) {
            Ok(est) if est.point == beta => {}
            _ => return false,
        }
        let Ok(m_arm) = debias::build_decorr(&covs, debias::DecorrTarget::Arm(arm), 0.05, 1e-9)
        else {
            return false;
        };
        match debias::aw_debias(arm, &beta, &log, &m_arm) {
            Ok(est) if est.point == beta => {}
            _ => return false,
        }
    }
    true
}

fn selftest_hard_threshold() -> bool {
    use sbinfer::learner::hard_threshold;
    hard_threshold(&[3.0, -5.0, 1.0, 0.5], 2) == vec![3.0, -5.0, 0.0, 0.0]
        && hard_threshold(&[2.0, -2.0, 0.0], 1) == vec![2.0, 0.0, 0.0]
        && hard_threshold(&[1.0, 2.0], 5) == vec![1.0, 2.0]
}
