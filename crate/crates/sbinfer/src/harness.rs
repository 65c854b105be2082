//! Orchestration: single trials, replicated experiments, offline replay,
//! aggregation, and file export.
//!
//! Determinism contract: every trial's randomness is a pure function of
//! (scenario seed, trial index); aggregation folds trial results in index
//! order, so results do not depend on the worker count. Re-running with the
//! same configuration reproduces every output byte except the recorded
//! wall-clock runtime.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::debias::Method;
use crate::env::{derive_rng, ArmParams, ReplayRow, ScenarioConfig};
use crate::error::{Error, Result};
use crate::inference::{derive_report, InferenceConfig, InferenceReport};
use crate::learner::{HtConfig, LearnerState, Weighting};
use crate::policy::{sample_action, ExplorationSchedule, PolicyMode, PropensityVector};

/// RNG stream purposes under one master seed.
const PURPOSE_PARAMS: u64 = 0;
const PURPOSE_TRIAL: u64 = 1;
const PURPOSE_ORACLE: u64 = 2;
const PURPOSE_REPLAY: u64 = 3;

/// Ground-truth annotations recorded alongside a step when the
/// data-generating process is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnnotation {
    pub optimal_arm: usize,
    pub instant_regret: f64,
}

/// One logged step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub eps: f64,
    pub pv: PropensityVector,
    pub action: usize,
    pub y: f64,
    pub oracle: Option<OracleAnnotation>,
}

/// Everything needed to re-derive estimators from the rows alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub d: usize,
    pub k: usize,
    pub method: Method,
    pub weighting: Weighting,
    /// Working sparsity of the learner.
    pub s: usize,
    /// Resolved gradient step size.
    pub eta: f64,
    /// Steps excluded from the residual-variance accumulators.
    pub sigma_burn_in: usize,
    pub schedule: ExplorationSchedule,
    /// Sparsity figure feeding the arm-target penalty schedule.
    pub s0_for_mu: usize,
    pub margin_nu: f64,
    pub inference: InferenceConfig,
    pub seed: u64,
    pub trial_index: u64,
}

/// Append-only record of one run; the single source of truth for all
/// downstream estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub meta: LogMeta,
    pub rows: Vec<LogRow>,
}

const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LogDocument {
    version: u32,
    log: TrajectoryLog,
}

impl TrajectoryLog {
    pub fn validate(&self) -> Result<()> {
        let d = self.meta.d;
        let k = self.meta.k;
        if k < 2 || d == 0 {
            return Err(Error::config("log meta has degenerate shape"));
        }
        if self.meta.s == 0 || self.meta.s > d {
            return Err(Error::config("log meta working sparsity out of range"));
        }
        if !(self.meta.eta.is_finite() && self.meta.eta > 0.0) {
            return Err(Error::config("log meta step size invalid"));
        }
        self.meta.schedule.validate()?;
        self.meta.inference.validate()?;
        for (i, row) in self.rows.iter().enumerate() {
            if row.t != i + 1 {
                return Err(Error::config(format!(
                    "row {} has step index {}, expected {}",
                    i,
                    row.t,
                    i + 1
                )));
            }
            if row.x.len() != d || row.action >= k || row.pv.len() != k {
                return Err(Error::dimension(format!("row {} shape mismatch", i)));
            }
            if row.x.iter().any(|v| !v.is_finite()) || !row.y.is_finite() {
                return Err(Error::config(format!("row {} has non-finite values", i)));
            }
            if !(0.0..=1.0).contains(&row.eps) {
                return Err(Error::config(format!("row {} eps out of range", i)));
            }
            let sum: f64 = row.pv.probs().iter().sum();
            if row.pv.probs().iter().any(|p| !p.is_finite() || *p < 0.0)
                || (sum - 1.0).abs() > 1e-9
            {
                return Err(Error::config(format!("row {} propensities invalid", i)));
            }
            if row.pv.prob(row.action) <= 0.0 {
                return Err(Error::config(format!(
                    "row {} chose an arm with zero propensity",
                    i
                )));
            }
        }
        Ok(())
    }

    /// Cumulative regret path from the oracle annotations.
    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.rows
            .iter()
            .map(|r| {
                acc += r.oracle.as_ref().map(|o| o.instant_regret).unwrap_or(0.0);
                acc
            })
            .collect()
    }

    /// Cumulative fraction of steps whose reward was 1 (replay accuracy).
    pub fn cumulative_fraction_correct(&self) -> Vec<f64> {
        let mut hits = 0.0;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                hits += r.y;
                hits / (i + 1) as f64
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&LogDocument {
            version: LOG_SCHEMA_VERSION,
            log: self.clone(),
        })
        .expect("log serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: LogDocument =
            serde_json::from_str(json).map_err(|e| Error::Snapshot(e.to_string()))?;
        if doc.version != LOG_SCHEMA_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported log version {}",
                doc.version
            )));
        }
        doc.log.validate()?;
        Ok(doc.log)
    }
}

/// Rebuild the learner state by replaying the logged steps.
pub fn rebuild_state(log: &TrajectoryLog) -> Result<LearnerState> {
    let cfg = HtConfig {
        s: log.meta.s,
        eta: Some(log.meta.eta),
        resid_burn_in: Some(log.meta.sigma_burn_in),
    };
    let mut state = LearnerState::new(
        log.meta.d,
        log.meta.k,
        &cfg,
        log.meta.eta,
        log.meta.weighting,
        log.meta.sigma_burn_in,
    );
    for row in &log.rows {
        state.step(&row.x, &row.pv, row.action, row.y)?;
    }
    Ok(state)
}

/// Re-derive the full inference report from a persisted log.
pub fn rederive_report(log: &TrajectoryLog) -> Result<InferenceReport> {
    let state = rebuild_state(log)?;
    derive_report(log, &state, &log.meta.inference)
}

fn weighting_for(method: Method) -> Weighting {
    match method {
        Method::Ipw => Weighting::Ipw,
        Method::Aw => Weighting::Plain,
    }
}

/// Execute one simulated trial: pre-draw the context stream, resolve the
/// step size on its head, then run the sequential decide/observe/update
/// loop. Bit-deterministic in (scenario.seed, trial_index).
pub fn run_trial(
    scenario: &ScenarioConfig,
    schedule: &ExplorationSchedule,
    ht: &HtConfig,
    method: Method,
    inference: &InferenceConfig,
    trial_index: u64,
) -> Result<(TrajectoryLog, LearnerState)> {
    scenario.validate()?;
    schedule.validate()?;
    ht.validate(scenario.d)?;
    inference.validate()?;
    let truth = scenario.gen_params(&mut derive_rng(scenario.seed, PURPOSE_PARAMS, 0));
    run_trial_with_truth(scenario, &truth, schedule, ht, method, inference, trial_index)
}

pub(crate) fn run_trial_with_truth(
    scenario: &ScenarioConfig,
    truth: &ArmParams,
    schedule: &ExplorationSchedule,
    ht: &HtConfig,
    method: Method,
    inference: &InferenceConfig,
    trial_index: u64,
) -> Result<(TrajectoryLog, LearnerState)> {
    let d = scenario.d;
    let k = scenario.arms;
    let t_end = scenario.horizon;
    let mut rng = derive_rng(scenario.seed, PURPOSE_TRIAL, trial_index);

    // Contexts are exogenous i.i.d. draws; prefetching them keeps step-size
    // resolution and the decision loop on one stream.
    let contexts: Vec<Vec<f64>> = (0..t_end).map(|_| scenario.draw_context(&mut rng)).collect();
    let eta = ht.resolve_eta(&contexts);
    let sigma_burn_in = ht.resolve_burn_in(t_end);
    let mut state = LearnerState::new(d, k, ht, eta, weighting_for(method), sigma_burn_in);

    let meta = LogMeta {
        d,
        k,
        method,
        weighting: weighting_for(method),
        s: ht.s,
        eta,
        sigma_burn_in,
        schedule: *schedule,
        s0_for_mu: scenario.s0,
        margin_nu: scenario.margin_nu,
        inference: *inference,
        seed: scenario.seed,
        trial_index,
    };
    let mut rows = Vec::with_capacity(t_end);
    for (i, x) in contexts.into_iter().enumerate() {
        let t = i + 1;
        let pv = schedule.propensities_at(t, state.beta_hats(), &x);
        let action = sample_action(&pv, &mut rng);
        let y = scenario.reward(truth, action, &x, &mut rng)?;
        state.step(&x, &pv, action, y)?;
        let oracle = Some(OracleAnnotation {
            optimal_arm: truth.optimal_arm(&x),
            instant_regret: truth.instant_regret(&x, action),
        });
        rows.push(LogRow {
            t,
            x,
            eps: schedule.epsilon_at(t),
            pv,
            action,
            y,
            oracle,
        });
    }
    Ok((TrajectoryLog { meta, rows }, state))
}

/// Monte-Carlo estimate of the oracle policy value E[max_i ⟨β_i, X⟩],
/// restricted to the union support of the arm coefficients.
pub fn oracle_value_mc(scenario: &ScenarioConfig, truth: &ArmParams, samples: usize) -> f64 {
    let support: Vec<usize> = (0..scenario.d)
        .filter(|&j| truth.betas.iter().any(|b| b[j] != 0.0))
        .collect();
    if support.is_empty() {
        return 0.0;
    }
    let mut rng = derive_rng(scenario.seed, PURPOSE_ORACLE, 0);
    let mut xs = vec![0.0f64; support.len()];
    let mut total = 0.0;
    for _ in 0..samples {
        for v in xs.iter_mut() {
            // draw only the support coordinates; the rest never matter
            *v = scenario.covariate_dist.draw_coord(&mut rng);
        }
        let best = truth
            .betas
            .iter()
            .map(|b| {
                support
                    .iter()
                    .zip(xs.iter())
                    .map(|(&j, xv)| b[j] * xv)
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    total / samples as f64
}

/// One trial's retained outputs.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub report: InferenceReport,
    pub cum_regret: Vec<f64>,
}

/// Aggregated difference-test row (means over trials).
#[derive(Debug, Clone, Serialize)]
pub struct DiffAggregate {
    pub coord: usize,
    pub arm_a: usize,
    pub arm_b: usize,
    pub point: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

/// Cross-trial aggregates.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub mean_raw: Vec<Vec<f64>>,
    pub mean_debiased: Vec<Vec<f64>>,
    pub sd_debiased: Vec<Vec<f64>>,
    pub mean_se: Vec<Vec<f64>>,
    pub mean_ci_lo: Vec<Vec<f64>>,
    pub mean_ci_hi: Vec<Vec<f64>>,
    pub coverage: Vec<Vec<f64>>,
    pub mean_ci_width: Vec<Vec<f64>>,
    pub diffs: Vec<DiffAggregate>,
    pub regret_mean: Vec<f64>,
    pub regret_sd: Vec<f64>,
    pub mean_value: f64,
    pub value_coverage: f64,
}

/// Full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub schedule: ExplorationSchedule,
    pub ht: HtConfig,
    pub method: Method,
    pub inference: InferenceConfig,
    pub n_trials: usize,
    /// 0 lets the global thread pool decide.
    pub workers: usize,
    pub keep_logs: usize,
}

/// Experiment output: per-trial reports and regret paths, the first few
/// full logs, and deterministic aggregates.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub truth: ArmParams,
    pub oracle_value: f64,
    pub trials: Vec<TrialOutcome>,
    pub kept_logs: Vec<TrajectoryLog>,
    pub aggregate: Aggregate,
    pub runtime_seconds: f64,
    pub spec: ExperimentSpec,
}

const ORACLE_VALUE_SAMPLES: usize = 1_000_000;

/// Run `n_trials` independent trials and aggregate deterministically.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.n_trials == 0 {
        return Err(Error::config("n_trials must be >= 1"));
    }
    spec.scenario.validate()?;
    spec.schedule.validate()?;
    spec.ht.validate(spec.scenario.d)?;
    spec.inference.validate()?;
    if spec.method == Method::Ipw && spec.scenario.arms != 2 {
        return Err(Error::UnsupportedMethod(
            "ipw inference is two-arm only; use aw for K > 2".into(),
        ));
    }
    let start = std::time::Instant::now();
    let truth = spec
        .scenario
        .gen_params(&mut derive_rng(spec.scenario.seed, PURPOSE_PARAMS, 0));
    let oracle_value = oracle_value_mc(&spec.scenario, &truth, ORACLE_VALUE_SAMPLES);

    let run_one = |i: usize| -> Result<(TrialOutcome, Option<TrajectoryLog>)> {
        let (log, state) = run_trial_with_truth(
            &spec.scenario,
            &truth,
            &spec.schedule,
            &spec.ht,
            spec.method,
            &spec.inference,
            i as u64,
        )?;
        let report = derive_report(&log, &state, &spec.inference)?;
        let cum_regret = log.cumulative_regret();
        let kept = if i < spec.keep_logs { Some(log) } else { None };
        Ok((TrialOutcome { report, cum_regret }, kept))
    };

    let outcomes: Vec<Result<(TrialOutcome, Option<TrajectoryLog>)>> =
        with_pool(spec.workers, || {
            (0..spec.n_trials).into_par_iter().map(run_one).collect()
        });

    let mut trials = Vec::with_capacity(spec.n_trials);
    let mut kept_logs = Vec::new();
    for res in outcomes {
        let (outcome, kept) = res?;
        trials.push(outcome);
        if let Some(log) = kept {
            kept_logs.push(log);
        }
    }
    let aggregate = aggregate_trials(&truth, &trials, oracle_value);
    Ok(ExperimentResult {
        truth,
        oracle_value,
        trials,
        kept_logs,
        aggregate,
        runtime_seconds: start.elapsed().as_secs_f64(),
        spec: spec.clone(),
    })
}

fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(f)
    }
}

/// Fold per-trial outputs into aggregates, in trial order.
pub fn aggregate_trials(
    truth: &ArmParams,
    trials: &[TrialOutcome],
    oracle_value: f64,
) -> Aggregate {
    let n = trials.len();
    let k = truth.arms();
    let d = truth.dim();
    let nf = n as f64;
    let mut mean_raw = vec![vec![0.0; d]; k];
    let mut mean_debiased = vec![vec![0.0; d]; k];
    let mut m2_debiased = vec![vec![0.0; d]; k];
    let mut mean_se = vec![vec![0.0; d]; k];
    let mut mean_ci_lo = vec![vec![0.0; d]; k];
    let mut mean_ci_hi = vec![vec![0.0; d]; k];
    let mut coverage = vec![vec![0.0; d]; k];
    let mut mean_width = vec![vec![0.0; d]; k];

    for (ti, tr) in trials.iter().enumerate() {
        for (a, arm) in tr.report.arms.iter().enumerate() {
            for l in 0..d {
                mean_raw[a][l] += arm.raw[l];
                // running mean/variance (Welford) for the debiased points
                let delta = arm.debiased[l] - mean_debiased[a][l];
                mean_debiased[a][l] += delta / (ti + 1) as f64;
                m2_debiased[a][l] += delta * (arm.debiased[l] - mean_debiased[a][l]);
                mean_se[a][l] += arm.se[l];
                mean_ci_lo[a][l] += arm.ci_lo[l];
                mean_ci_hi[a][l] += arm.ci_hi[l];
                mean_width[a][l] += arm.ci_hi[l] - arm.ci_lo[l];
                let tr_val = truth.betas[a][l];
                if arm.ci_lo[l] <= tr_val && tr_val <= arm.ci_hi[l] {
                    coverage[a][l] += 1.0;
                }
            }
        }
    }
    for a in 0..k {
        for l in 0..d {
            mean_raw[a][l] /= nf;
            mean_se[a][l] /= nf;
            mean_ci_lo[a][l] /= nf;
            mean_ci_hi[a][l] /= nf;
            mean_width[a][l] /= nf;
            coverage[a][l] /= nf;
        }
    }
    let sd_debiased: Vec<Vec<f64>> = m2_debiased
        .iter()
        .map(|row| {
            row.iter()
                .map(|m2| if n > 1 { (m2 / (nf - 1.0)).sqrt() } else { 0.0 })
                .collect()
        })
        .collect();

    // difference aggregates: means over trials, row layout follows the
    // per-trial reports
    let mut diffs: Vec<DiffAggregate> = Vec::new();
    if let Some(first) = trials.first() {
        diffs = first
            .report
            .diffs
            .iter()
            .map(|dtest| DiffAggregate {
                coord: dtest.coord,
                arm_a: dtest.arm_a,
                arm_b: dtest.arm_b,
                point: 0.0,
                se: 0.0,
                z: 0.0,
                p: 0.0,
            })
            .collect();
        for tr in trials {
            for (agg, dt) in diffs.iter_mut().zip(tr.report.diffs.iter()) {
                agg.point += dt.point / nf;
                agg.se += dt.se / nf;
                agg.z += dt.z / nf;
                agg.p += dt.p / nf;
            }
        }
    }

    // regret curve, mean and sd per step
    let t_len = trials.first().map(|t| t.cum_regret.len()).unwrap_or(0);
    let mut regret_mean = vec![0.0; t_len];
    let mut regret_sd = vec![0.0; t_len];
    for tr in trials {
        for (i, v) in tr.cum_regret.iter().enumerate() {
            regret_mean[i] += v;
        }
    }
    for v in regret_mean.iter_mut() {
        *v /= nf;
    }
    for tr in trials {
        for (i, v) in tr.cum_regret.iter().enumerate() {
            let dlt = v - regret_mean[i];
            regret_sd[i] += dlt * dlt;
        }
    }
    for v in regret_sd.iter_mut() {
        *v = if n > 1 { (*v / (nf - 1.0)).sqrt() } else { 0.0 };
    }

    let mut mean_value = 0.0;
    let mut value_coverage = 0.0;
    for tr in trials {
        mean_value += tr.report.value.v_hat / nf;
        if tr.report.value.ci_lo <= oracle_value && oracle_value <= tr.report.value.ci_hi {
            value_coverage += 1.0 / nf;
        }
    }

    Aggregate {
        mean_raw,
        mean_debiased,
        sd_debiased,
        mean_se,
        mean_ci_lo,
        mean_ci_hi,
        coverage,
        mean_ci_width: mean_width,
        diffs,
        regret_mean,
        regret_sd,
        mean_value,
        value_coverage,
    }
}

/// Replay an offline dataset through the policy loop: deterministic 0/1
/// rewards against the recorded optimal labels, inference at the end.
/// Fails with `ArmNeverSampled` when the policy starved an arm of data;
/// [`replay_trajectory`] still yields the log (and hence the value
/// estimate) in that situation.
pub fn run_replay(
    dataset: &[ReplayRow],
    d: usize,
    k: usize,
    schedule: &ExplorationSchedule,
    ht: &HtConfig,
    method: Method,
    inference: &InferenceConfig,
    seed: u64,
) -> Result<(TrajectoryLog, InferenceReport)> {
    let (log, state) = replay_trajectory(dataset, d, k, schedule, ht, method, inference, seed)?;
    let report = derive_report(&log, &state, inference)?;
    Ok((log, report))
}

/// The decide/observe/update loop over an offline dataset, without the
/// inference stage.
#[allow(clippy::too_many_arguments)]
pub fn replay_trajectory(
    dataset: &[ReplayRow],
    d: usize,
    k: usize,
    schedule: &ExplorationSchedule,
    ht: &HtConfig,
    method: Method,
    inference: &InferenceConfig,
    seed: u64,
) -> Result<(TrajectoryLog, LearnerState)> {
    if dataset.is_empty() {
        return Err(Error::config("replay dataset is empty"));
    }
    if method == Method::Ipw && k != 2 {
        return Err(Error::UnsupportedMethod(
            "ipw inference is two-arm only; use aw for K > 2".into(),
        ));
    }
    schedule.validate()?;
    ht.validate(d)?;
    inference.validate()?;
    for (i, row) in dataset.iter().enumerate() {
        if row.x.len() != d {
            return Err(Error::dimension(format!(
                "replay row {} has dimension {}, expected {d}",
                i,
                row.x.len()
            )));
        }
        if row.optimal_label >= k {
            return Err(Error::dimension(format!(
                "replay row {} label {} out of range for K = {k}",
                i, row.optimal_label
            )));
        }
    }
    let mut rng = derive_rng(seed, PURPOSE_REPLAY, 0);
    let head: Vec<Vec<f64>> = dataset
        .iter()
        .take(50)
        .map(|r| r.x.clone())
        .collect();
    let eta = ht.resolve_eta(&head);
    let sigma_burn_in = ht.resolve_burn_in(dataset.len());
    let mut state = LearnerState::new(d, k, ht, eta, weighting_for(method), sigma_burn_in);
    let meta = LogMeta {
        d,
        k,
        method,
        weighting: weighting_for(method),
        s: ht.s,
        eta,
        sigma_burn_in,
        schedule: *schedule,
        // no ground-truth sparsity is known for offline data; the working
        // sparsity is the conservative stand-in for the penalty schedule
        s0_for_mu: ht.s,
        margin_nu: 1.0,
        inference: *inference,
        seed,
        trial_index: 0,
    };
    let mut rows = Vec::with_capacity(dataset.len());
    for (i, subject) in dataset.iter().enumerate() {
        let t = i + 1;
        let pv = schedule.propensities_at(t, state.beta_hats(), &subject.x);
        let action = sample_action(&pv, &mut rng);
        let y = subject.reward(action);
        state.step(&subject.x, &pv, action, y)?;
        rows.push(LogRow {
            t,
            x: subject.x.clone(),
            eps: schedule.epsilon_at(t),
            pv,
            action,
            y,
            oracle: Some(OracleAnnotation {
                optimal_arm: subject.optimal_label,
                instant_regret: 1.0 - y,
            }),
        });
    }
    Ok((TrajectoryLog { meta, rows }, state))
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

/// Machine-readable run summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub mode: String,
    pub method: Method,
    pub level: f64,
    pub n_trials: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub gamma: f64,
    pub c_eps: f64,
    pub coverage_first10_mean: Option<f64>,
    pub coverage_all_mean: Option<f64>,
    pub ci_width_first10_mean: Option<f64>,
    pub ci_width_all_mean: Option<f64>,
    pub mean_value: Option<f64>,
    pub value_coverage: Option<f64>,
    pub oracle_value: Option<f64>,
    pub final_mean_cum_regret: Option<f64>,
    pub fraction_correct: Option<f64>,
    pub runtime_seconds: f64,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean_over_first(coords: usize, table: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for row in table {
        for v in row.iter().take(coords) {
            total += v;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Write the experiment's CSV/JSON artifacts into `out_dir`. Overwrites
/// idempotently; identical results produce byte-identical files (runtime
/// excepted).
pub fn export_experiment(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let agg = &result.aggregate;
    let truth = &result.truth;
    let k = truth.arms();
    let d = truth.dim();
    let mut files = Vec::new();

    let mut est = String::from("arm,coord,truth,point_raw,point_debiased,se,ci_lo,ci_hi,covered\n");
    for a in 0..k {
        for l in 0..d {
            est.push_str(&format!(
                "{a},{l},{},{},{},{},{},{},{}\n",
                truth.betas[a][l],
                agg.mean_raw[a][l],
                agg.mean_debiased[a][l],
                agg.mean_se[a][l],
                agg.mean_ci_lo[a][l],
                agg.mean_ci_hi[a][l],
                agg.coverage[a][l],
            ));
        }
    }
    let est_path = out_dir.join("estimates.csv");
    write_file(&est_path, &est)?;
    files.push(est_path);

    let mut diffs = String::from("coord,arm_a,arm_b,point,se,z,p\n");
    for row in &agg.diffs {
        diffs.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.coord, row.arm_a, row.arm_b, row.point, row.se, row.z, row.p
        ));
    }
    let diffs_path = out_dir.join("diffs.csv");
    write_file(&diffs_path, &diffs)?;
    files.push(diffs_path);

    let mut regret = String::from("t,mean_cum_regret,sd_cum_regret\n");
    for (i, (m, s)) in agg.regret_mean.iter().zip(agg.regret_sd.iter()).enumerate() {
        regret.push_str(&format!("{},{m},{s}\n", i + 1));
    }
    let regret_path = out_dir.join("regret.csv");
    write_file(&regret_path, &regret)?;
    files.push(regret_path);

    let mut value = String::from("trial,v_hat,se,ci_lo,ci_hi,oracle_value,covered\n");
    for (i, tr) in result.trials.iter().enumerate() {
        let v = &tr.report.value;
        let covered = u8::from(v.ci_lo <= result.oracle_value && result.oracle_value <= v.ci_hi);
        value.push_str(&format!(
            "{i},{},{},{},{},{},{covered}\n",
            v.v_hat, v.se, v.ci_lo, v.ci_hi, result.oracle_value
        ));
    }
    let value_path = out_dir.join("value.csv");
    write_file(&value_path, &value)?;
    files.push(value_path);

    let summary = Summary {
        schema_version: 1,
        mode: "simulate".into(),
        method: result.spec.method,
        level: result.spec.inference.level,
        n_trials: result.trials.len(),
        t: result.spec.scenario.horizon,
        d,
        k,
        seed: result.spec.scenario.seed,
        gamma: result.spec.schedule.gamma,
        c_eps: result.spec.schedule.c_eps,
        coverage_first10_mean: Some(mean_over_first(10.min(d), &agg.coverage)),
        coverage_all_mean: Some(mean_over_first(d, &agg.coverage)),
        ci_width_first10_mean: Some(mean_over_first(10.min(d), &agg.mean_ci_width)),
        ci_width_all_mean: Some(mean_over_first(d, &agg.mean_ci_width)),
        mean_value: Some(agg.mean_value),
        value_coverage: Some(agg.value_coverage),
        oracle_value: Some(result.oracle_value),
        final_mean_cum_regret: agg.regret_mean.last().copied(),
        fraction_correct: None,
        runtime_seconds: result.runtime_seconds,
    };
    let summary_path = out_dir.join("summary.json");
    write_file(
        &summary_path,
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    files.push(summary_path);

    for (i, log) in result.kept_logs.iter().enumerate() {
        let log_path = out_dir.join(format!("trajectory_{i:04}.json"));
        write_file(&log_path, &log.to_json())?;
        files.push(log_path);
    }
    Ok(files)
}

/// Write a replay run's artifacts: single-run estimates (no ground truth),
/// difference tests, the accuracy path, and the summary.
pub fn export_replay(
    log: &TrajectoryLog,
    report: &InferenceReport,
    runtime_seconds: f64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let d = log.meta.d;
    let k = log.meta.k;
    let mut files = Vec::new();

    let mut est = String::from("arm,coord,truth,point_raw,point_debiased,se,ci_lo,ci_hi,covered\n");
    for arm in &report.arms {
        for l in 0..d {
            est.push_str(&format!(
                "{},{l},{},{},{},{},{},{},{}\n",
                arm.arm,
                csv_opt(None),
                arm.raw[l],
                arm.debiased[l],
                arm.se[l],
                arm.ci_lo[l],
                arm.ci_hi[l],
                csv_opt(None),
            ));
        }
    }
    let est_path = out_dir.join("estimates.csv");
    write_file(&est_path, &est)?;
    files.push(est_path);

    let mut diffs = String::from("coord,arm_a,arm_b,point,se,z,p\n");
    for dt in &report.diffs {
        diffs.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            dt.coord, dt.arm_a, dt.arm_b, dt.point, dt.se, dt.z, dt.p
        ));
    }
    let diffs_path = out_dir.join("diffs.csv");
    write_file(&diffs_path, &diffs)?;
    files.push(diffs_path);

    // cumulative count of incorrect picks doubles as the regret path;
    // accuracy is 1 − regret/t
    let mut regret = String::from("t,mean_cum_regret,sd_cum_regret\n");
    let mut misses = 0.0;
    for row in &log.rows {
        misses += 1.0 - row.y;
        regret.push_str(&format!("{},{misses},0\n", row.t));
    }
    let regret_path = out_dir.join("regret.csv");
    write_file(&regret_path, &regret)?;
    files.push(regret_path);

    let v = &report.value;
    let mut value = String::from("trial,v_hat,se,ci_lo,ci_hi,oracle_value,covered\n");
    value.push_str(&format!(
        "0,{},{},{},{},{},{}\n",
        v.v_hat,
        v.se,
        v.ci_lo,
        v.ci_hi,
        csv_opt(None),
        csv_opt(None)
    ));
    let value_path = out_dir.join("value.csv");
    write_file(&value_path, &value)?;
    files.push(value_path);

    let frac = log
        .cumulative_fraction_correct()
        .last()
        .copied()
        .unwrap_or(0.0);
    let summary = Summary {
        schema_version: 1,
        mode: "replay".into(),
        method: log.meta.method,
        level: log.meta.inference.level,
        n_trials: 1,
        t: log.rows.len(),
        d,
        k,
        seed: log.meta.seed,
        gamma: log.meta.schedule.gamma,
        c_eps: log.meta.schedule.c_eps,
        coverage_first10_mean: None,
        coverage_all_mean: None,
        ci_width_first10_mean: Some(mean_over_first(
            10.min(d),
            &report
                .arms
                .iter()
                .map(|a| {
                    a.ci_hi
                        .iter()
                        .zip(a.ci_lo.iter())
                        .map(|(h, l)| h - l)
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>(),
        )),
        ci_width_all_mean: None,
        mean_value: Some(v.v_hat),
        value_coverage: None,
        oracle_value: None,
        final_mean_cum_regret: Some(misses),
        fraction_correct: Some(frac),
        runtime_seconds,
    };
    let summary_path = out_dir.join("summary.json");
    write_file(
        &summary_path,
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    files.push(summary_path);

    let log_path = out_dir.join("trajectory_0000.json");
    write_file(&log_path, &log.to_json())?;
    files.push(log_path);
    Ok(files)
}

// ---------------------------------------------------------------------------
// run configuration (CLI / config file)
// ---------------------------------------------------------------------------

/// Top-level JSON configuration document. CLI flags override these values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    pub schedule: ExplorationSchedule,
    #[serde(default)]
    pub ht: Option<HtConfig>,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub keep_logs: Option<usize>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(json).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.inference.validate()?;
        if let Some(sc) = &self.scenario {
            sc.validate()?;
            if let Some(ht) = &self.ht {
                ht.validate(sc.d)?;
            }
        }
        Ok(())
    }

    /// Default method per mode: ε-greedy pairs with ipw debiasing, greedy
    /// modes with aw.
    pub fn resolved_method(&self) -> Method {
        self.method.unwrap_or(match self.schedule.mode {
            PolicyMode::EpsilonGreedy => Method::Ipw,
            _ => Method::Aw,
        })
    }
}

/// Helpers shared by unit tests in sibling modules.
#[cfg(test)]
pub mod test_support {
    use super::*;

    /// Hand-built log from explicit step tuples (x, propensities, greedy,
    /// action, reward).
    pub fn custom_log(
        d: usize,
        k: usize,
        method: Method,
        steps: Vec<(Vec<f64>, Vec<f64>, usize, usize, f64)>,
    ) -> TrajectoryLog {
        let weighting = match method {
            Method::Ipw => Weighting::Ipw,
            Method::Aw => Weighting::Plain,
        };
        let rows = steps
            .into_iter()
            .enumerate()
            .map(|(i, (x, probs, greedy, action, y))| LogRow {
                t: i + 1,
                x,
                eps: 0.5,
                pv: PropensityVector::new(probs, greedy).unwrap(),
                action,
                y,
                oracle: None,
            })
            .collect();
        TrajectoryLog {
            meta: LogMeta {
                d,
                k,
                method,
                weighting,
                s: d.max(1),
                eta: 0.1,
                sigma_burn_in: 0,
                schedule: ExplorationSchedule::epsilon_greedy(1.0, 0.0),
                s0_for_mu: 1,
                margin_nu: 1.0,
                inference: InferenceConfig::default(),
                seed: 0,
                trial_index: 0,
            },
            rows,
        }
    }

    /// Minimal two-arm log with fixed rewards; contexts alternate between
    /// the two basis directions so covariances stay nondegenerate.
    pub fn constant_reward_log(rewards: &[f64]) -> TrajectoryLog {
        let d = 2;
        let meta = LogMeta {
            d,
            k: 2,
            method: Method::Aw,
            weighting: Weighting::Plain,
            s: 2,
            eta: 0.1,
            sigma_burn_in: 0,
            schedule: ExplorationSchedule::exploration_free(),
            s0_for_mu: 1,
            margin_nu: 1.0,
            inference: InferenceConfig::default(),
            seed: 0,
            trial_index: 0,
        };
        let rows = rewards
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let action = i % 2;
                let mut probs = vec![0.0; 2];
                probs[action] = 1.0;
                LogRow {
                    t: i + 1,
                    x: if i % 2 == 0 {
                        vec![1.0, 0.0]
                    } else {
                        vec![0.0, 1.0]
                    },
                    eps: 0.0,
                    pv: PropensityVector::new(probs, action).unwrap(),
                    action,
                    y,
                    oracle: None,
                }
            })
            .collect();
        TrajectoryLog { meta, rows }
    }
}
