//! Variance estimation, confidence intervals, per-coordinate hypothesis
//! tests, and policy-value inference from a completed trajectory.
//!
//! Two routes share the scaffolding:
//!
//! - `ipw`: noise variances use propensity-weighted residual sums over all
//!   T steps; coordinate variances combine quadratic forms of the pooled
//!   de-correlation rows against the arm-restricted sample covariances,
//!   scaled by the exploration schedule; standard errors decay like
//!   T^{−(1−γ)/2}. Two-arm only.
//! - `aw`: noise variances are per-arm mean squared residuals; coordinate
//!   variances are the quadratic forms m_lᵀ Λ̂_i m_l of the arm-target
//!   rows; standard errors decay like T^{−1/2}. Any number of arms.

use serde::{Deserialize, Serialize};

use crate::debias::{
    accumulate_covariances, aw_debias, build_decorr_with, ipw_debias, mu_schedule,
    CovarianceSet, DecorrMatrix, DecorrTarget, Method, MuKind,
};
use crate::error::{Error, Result};
use crate::harness::TrajectoryLog;
use crate::learner::{LearnerState, Weighting};
use crate::stats::{normal_quantile, two_sided_p};

fn default_level() -> f64 {
    0.95
}

fn default_c_mu() -> f64 {
    0.5
}

fn default_solver_tol() -> f64 {
    crate::debias::DEFAULT_SOLVER_TOL
}

fn default_max_sweeps() -> usize {
    crate::debias::DEFAULT_MAX_SWEEPS
}

/// Knobs for the inference stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    /// Confidence level for all intervals (two-sided, equal tails).
    #[serde(default = "default_level")]
    pub level: f64,
    /// Penalty constant for the pooled-target de-correlation program.
    #[serde(default = "default_c_mu")]
    pub c_mu1: f64,
    /// Penalty constant for the arm-target de-correlation programs.
    #[serde(default = "default_c_mu")]
    pub c_mu2: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            level: default_level(),
            c_mu1: default_c_mu(),
            c_mu2: default_c_mu(),
            solver_tol: default_solver_tol(),
            max_sweeps: default_max_sweeps(),
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if !(self.c_mu1 > 0.0 && self.c_mu1.is_finite())
            || !(self.c_mu2 > 0.0 && self.c_mu2.is_finite())
        {
            return Err(Error::config("penalty constants must be positive"));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol.is_finite()) || self.max_sweeps == 0 {
            return Err(Error::config("solver tolerance/sweeps invalid"));
        }
        Ok(())
    }
}

/// Noise-variance estimates per arm, matched to the accumulator weighting:
/// `ipw` divides the propensity-weighted residual sum by the number of
/// accumulated steps; `aw` divides the plain residual sum by the arm's
/// accumulated sample count. Steps inside the learner's burn-in window do
/// not enter either side.
pub fn noise_variance(state: &LearnerState, method: Method) -> Result<Vec<f64>> {
    let t = state.t();
    let window = t.saturating_sub(state.sigma_burn_in());
    if window == 0 {
        return Err(Error::config(
            "no observations beyond the residual burn-in window",
        ));
    }
    match (method, state.weighting()) {
        (Method::Ipw, Weighting::Ipw) => Ok(state
            .resid_sq_sums()
            .iter()
            .map(|s| s / window as f64)
            .collect()),
        (Method::Aw, Weighting::Plain) => {
            let mut out = Vec::with_capacity(state.arms());
            for (i, (s, c)) in state
                .resid_sq_sums()
                .iter()
                .zip(state.resid_counts().iter())
                .enumerate()
            {
                if *c == 0 {
                    return Err(Error::ArmNeverSampled(i));
                }
                out.push(s / *c as f64);
            }
            Ok(out)
        }
        (m, w) => Err(Error::UnsupportedMethod(format!(
            "{m} noise variance requires matching accumulators, state carries {w:?}"
        ))),
    }
}

/// Coordinate variance factor for the ipw route:
/// (2/(c_ε(1+γ))) · m_lᵀ Λ̂_{1−i} m_l + T^{−γ} · m_lᵀ Λ̂_i m_l.
/// Defined for two-arm runs only.
pub fn s2_ipw(
    l: usize,
    arm: usize,
    m: &DecorrMatrix,
    covs: &CovarianceSet,
    c_eps: f64,
    gamma: f64,
    t: usize,
) -> Result<f64> {
    if covs.per_arm_plain.len() != 2 {
        return Err(Error::UnsupportedMethod(
            "ipw coordinate variance is two-arm only".into(),
        ));
    }
    let support = m.row_support(l);
    let row = m.row(l);
    let other = covs.per_arm_plain[1 - arm].quad_form_support(&support, row);
    let own = covs.per_arm_plain[arm].quad_form_support(&support, row);
    Ok(2.0 / (c_eps * (1.0 + gamma)) * other + (t as f64).powf(-gamma) * own)
}

/// Standard error of one debiased coordinate.
pub fn standard_error(method: Method, sigma2: f64, coord_var: f64, t: usize, gamma: f64) -> f64 {
    match method {
        Method::Ipw => (sigma2 * coord_var / (t as f64).powf(1.0 - gamma)).sqrt(),
        Method::Aw => (sigma2 * coord_var / t as f64).sqrt(),
    }
}

/// Equal-tailed normal interval point ± z_{(1+level)/2}·se.
pub fn confidence_interval(point: f64, se: f64, level: f64) -> Result<(f64, f64)> {
    let z = normal_quantile((1.0 + level) / 2.0)?;
    Ok((point - z * se, point + z * se))
}

/// Two-arm difference test for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffInference {
    pub coord: usize,
    pub arm_a: usize,
    pub arm_b: usize,
    pub point: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    /// Set when se = 0 with a nonzero point; the z statistic is then ±inf.
    pub degenerate: bool,
}

/// Difference of two debiased coordinates; the asymptotic covariance across
/// arms vanishes, so variances add.
pub fn diff_test(
    coord: usize,
    arm_a: usize,
    arm_b: usize,
    point_a: f64,
    point_b: f64,
    se_a: f64,
    se_b: f64,
) -> DiffInference {
    let point = point_a - point_b;
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if se == 0.0 {
        let degenerate = point != 0.0;
        return DiffInference {
            coord,
            arm_a,
            arm_b,
            point,
            se,
            z: if degenerate {
                f64::INFINITY * point.signum()
            } else {
                0.0
            },
            p: if degenerate { 0.0 } else { 1.0 },
            degenerate,
        };
    }
    let z = point / se;
    DiffInference {
        coord,
        arm_a,
        arm_b,
        point,
        se,
        z,
        p: two_sided_p(z),
        degenerate: false,
    }
}

/// Mean observed reward.
pub fn value_estimate(log: &TrajectoryLog) -> Result<f64> {
    if log.rows.is_empty() {
        return Err(Error::config("empty log"));
    }
    Ok(log.rows.iter().map(|r| r.y).sum::<f64>() / log.rows.len() as f64)
}

/// Variance estimate for the value: noise mixture term plus the empirical
/// variance of the running predictions (clamped at zero).
pub fn value_variance(state: &LearnerState, sigma2: &[f64]) -> f64 {
    let t = state.t() as f64;
    if t == 0.0 {
        return 0.0;
    }
    let g: f64 = sigma2
        .iter()
        .zip(state.counts().iter())
        .map(|(s2, c)| s2 * *c as f64 / t)
        .sum();
    let vs = state.value_sums();
    let mean_pred = vs.pred_sum / t;
    let w = (vs.pred_sq_sum / t - mean_pred * mean_pred).max(0.0);
    g + w
}

/// Per-arm inference block: raw and debiased points, per-coordinate
/// standard errors, intervals, and marginal z / p statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmInference {
    pub arm: usize,
    pub raw: Vec<f64>,
    pub debiased: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma2_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueInference {
    pub v_hat: f64,
    pub s_v2: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub method: Method,
    pub level: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub gamma: f64,
    pub c_eps: f64,
}

/// Full inference output for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub meta: ReportMeta,
    pub arms: Vec<ArmInference>,
    pub diffs: Vec<DiffInference>,
    pub value: ValueInference,
}

/// Derive the complete report from a finished trajectory and its learner
/// state: covariances, de-correlation solves, debiased points, variances,
/// intervals, pairwise difference tests, and the value block.
pub fn derive_report(
    log: &TrajectoryLog,
    state: &LearnerState,
    cfg: &InferenceConfig,
) -> Result<InferenceReport> {
    cfg.validate()?;
    let meta = &log.meta;
    let t = log.rows.len();
    if t == 0 || state.t() != t {
        return Err(Error::config(format!(
            "state covers {} steps but log has {t}",
            state.t()
        )));
    }
    let d = meta.d;
    let k = meta.k;
    let method = meta.method;
    if method == Method::Ipw && k != 2 {
        return Err(Error::UnsupportedMethod(
            "ipw inference is two-arm only; use aw for K > 2".into(),
        ));
    }
    let covs = accumulate_covariances(log)?;
    let sigma2 = noise_variance(state, method)?;
    let gamma = meta.schedule.gamma;
    let c_eps = meta.schedule.c_eps;

    let mut arms = Vec::with_capacity(k);
    match method {
        Method::Ipw => {
            let mu = mu_schedule(MuKind::Pooled, t, d, meta.s0_for_mu, meta.margin_nu, cfg.c_mu1);
            let m = build_decorr_with(
                &covs,
                DecorrTarget::Pooled,
                mu,
                cfg.solver_tol,
                cfg.max_sweeps,
            )?;
            for arm in 0..k {
                let debiased = ipw_debias(arm, state.beta_hat(arm), log, &m)?;
                let mut se = Vec::with_capacity(d);
                for l in 0..d {
                    let s2 = s2_ipw(l, arm, &m, &covs, c_eps, gamma, t)?;
                    se.push(standard_error(method, sigma2[arm], s2, t, gamma));
                }
                arms.push(arm_block(
                    arm,
                    state.beta_hat(arm).to_vec(),
                    debiased.point,
                    se,
                    sigma2[arm],
                    cfg.level,
                )?);
            }
        }
        Method::Aw => {
            let mu = mu_schedule(MuKind::Arm, t, d, meta.s0_for_mu, meta.margin_nu, cfg.c_mu2);
            for arm in 0..k {
                let m_arm = build_decorr_with(
                    &covs,
                    DecorrTarget::Arm(arm),
                    mu,
                    cfg.solver_tol,
                    cfg.max_sweeps,
                )?;
                let debiased = aw_debias(arm, state.beta_hat(arm), log, &m_arm)?;
                let lambda = &covs.per_arm_plain[arm];
                let mut se = Vec::with_capacity(d);
                for l in 0..d {
                    let support = m_arm.row_support(l);
                    let coord_var = lambda.quad_form_support(&support, m_arm.row(l));
                    se.push(standard_error(method, sigma2[arm], coord_var, t, gamma));
                }
                arms.push(arm_block(
                    arm,
                    state.beta_hat(arm).to_vec(),
                    debiased.point,
                    se,
                    sigma2[arm],
                    cfg.level,
                )?);
            }
        }
    }

    let mut diffs = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            for l in 0..d {
                diffs.push(diff_test(
                    l,
                    a,
                    b,
                    arms[a].debiased[l],
                    arms[b].debiased[l],
                    arms[a].se[l],
                    arms[b].se[l],
                ));
            }
        }
    }

    let v_hat = value_estimate(log)?;
    let s_v2 = value_variance(state, &sigma2);
    let v_se = (s_v2 / t as f64).sqrt();
    let (v_lo, v_hi) = confidence_interval(v_hat, v_se, cfg.level)?;

    Ok(InferenceReport {
        meta: ReportMeta {
            method,
            level: cfg.level,
            t,
            gamma,
            c_eps,
        },
        arms,
        diffs,
        value: ValueInference {
            v_hat,
            s_v2,
            se: v_se,
            ci_lo: v_lo,
            ci_hi: v_hi,
        },
    })
}

fn arm_block(
    arm: usize,
    raw: Vec<f64>,
    debiased: Vec<f64>,
    se: Vec<f64>,
    sigma2_hat: f64,
    level: f64,
) -> Result<ArmInference> {
    let d = debiased.len();
    let mut ci_lo = Vec::with_capacity(d);
    let mut ci_hi = Vec::with_capacity(d);
    let mut z = Vec::with_capacity(d);
    let mut p = Vec::with_capacity(d);
    for l in 0..d {
        let (lo, hi) = confidence_interval(debiased[l], se[l], level)?;
        ci_lo.push(lo);
        ci_hi.push(hi);
        if se[l] > 0.0 {
            let zl = debiased[l] / se[l];
            z.push(zl);
            p.push(two_sided_p(zl));
        } else {
            let degenerate = debiased[l] != 0.0;
            z.push(if degenerate {
                f64::INFINITY * debiased[l].signum()
            } else {
                0.0
            });
            p.push(if degenerate { 0.0 } else { 1.0 });
        }
    }
    Ok(ArmInference {
        arm,
        raw,
        debiased,
        se,
        ci_lo,
        ci_hi,
        z,
        p,
        sigma2_hat,
    })
}
