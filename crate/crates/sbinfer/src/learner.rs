//! Online hard-thresholding estimator: propensity-weighted covariance
//! accumulation, averaged stochastic gradients, and projected gradient
//! steps that keep every arm estimate s-sparse.
//!
//! Per step, with w the selection probability of arm i and δ = 1(a = i):
//!
//!   Σ̂_{i,t} = ((t−1)·Σ̂_{i,t−1} + (δ/w)·x xᵀ) / t
//!   g_{i,t}  = 2 Σ̂_{i,t} β̂_{i,t−1} − (2/t) Σ_τ (δ_τ/w_τ) x_τ y_τ
//!   β̂_{i,t} = H_s(β̂_{i,t−1} − η g_{i,t})
//!
//! Under plain weighting w ≡ 1. When an arm's selection probability is 0
//! the weighted indicator contributes 0 (it can only fire for the chosen
//! arm, whose probability is positive by construction).
//!
//! Residual and prediction accumulators use the *pre-update* β̂_{i,t−1};
//! they feed the downstream variance estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, DMat};
use crate::policy::PropensityVector;

/// Observation weighting used by the accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Inverse propensity weights 1/π for the chosen arm.
    Ipw,
    /// Unit weights.
    Plain,
}

/// Thresholded gradient iterations applied per observation. The update map
/// is iterated until the sparse iterate is stationary on the current
/// averaged objective (or the budget runs out); each extra pass costs only
/// O(s·d), so the O(d²) per-step budget is unchanged.
const MAX_INNER_ITERS: usize = 12;

fn default_working_sparsity_factor() -> usize {
    3
}

/// Hard-thresholding estimator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HtConfig {
    /// Working sparsity level; every β̂ keeps at most this many nonzeros.
    pub s: usize,
    /// Gradient step size. `None` selects 1/(4·φ̂) with φ̂ the mean
    /// diagonal of the pooled covariance over the first min(50, T)
    /// contexts, falling back to 0.05 when that estimate is degenerate.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Steps excluded from the residual-variance accumulators. Early
    /// residuals reflect the support-discovery transient rather than the
    /// reward noise and would inflate every downstream standard error.
    /// `None` resolves to one quarter of the horizon.
    #[serde(default)]
    pub resid_burn_in: Option<usize>,
}

impl HtConfig {
    /// Default working sparsity 3·s0.
    pub fn with_default_sparsity(s0: usize, d: usize) -> Self {
        HtConfig {
            s: (default_working_sparsity_factor() * s0).min(d),
            eta: None,
            resid_burn_in: None,
        }
    }

    /// Residual burn-in resolved against the run horizon.
    pub fn resolve_burn_in(&self, horizon: usize) -> usize {
        self.resid_burn_in.unwrap_or(horizon / 4)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.s == 0 || self.s > d {
            return Err(Error::config(format!(
                "working sparsity must satisfy 1 <= s <= d, got s = {}, d = {d}",
                self.s
            )));
        }
        if let Some(eta) = self.eta {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::config(format!("eta must be positive, got {eta}")));
            }
        }
        Ok(())
    }

    /// Resolve the step size against the first contexts of the run: η =
    /// 1/(4·φ̂) with φ̂ the mean diagonal of the pooled covariance over the
    /// first min(50, T) contexts. The mean diagonal tracks the curvature
    /// seen by s-sparse iterates; the raw top eigenvalue of a d ≫ n sample
    /// covariance does not.
    pub fn resolve_eta(&self, contexts: &[Vec<f64>]) -> f64 {
        if let Some(eta) = self.eta {
            return eta;
        }
        let take = contexts.len().min(50);
        if take == 0 {
            return 0.05;
        }
        let mut sq_sum = 0.0;
        let mut coords = 0usize;
        for x in &contexts[..take] {
            for v in x {
                sq_sum += v * v;
            }
            coords += x.len();
        }
        let phi = if coords > 0 { sq_sum / coords as f64 } else { 0.0 };
        if phi > 1e-12 {
            1.0 / (4.0 * phi)
        } else {
            0.05
        }
    }
}

fn sparse_matvec(s: &DMat, beta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &bj) in beta.iter().enumerate() {
        if bj != 0.0 {
            s.add_scaled_row(j, bj, out);
        }
    }
}

fn quad_objective(beta: &[f64], s_beta: &[f64], xy: &[f64], t: f64) -> f64 {
    let mut quad = 0.0;
    let mut lin = 0.0;
    for (b, (sb, xyv)) in beta.iter().zip(s_beta.iter().zip(xy.iter())) {
        quad += b * sb;
        lin += b * xyv;
    }
    (quad - 2.0 * lin) / t
}

/// Keep the s largest-magnitude entries of v, zeroing the rest. Ties on
/// magnitude keep the lower index.
pub fn hard_threshold(v: &[f64], s: usize) -> Vec<f64> {
    let d = v.len();
    if s >= d {
        return v.to_vec();
    }
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_unstable_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut out = vec![0.0; d];
    for &i in idx.iter().take(s) {
        out[i] = v[i];
    }
    out
}

/// Running reward / prediction sums for policy-value inference, built from
/// the chosen arm's pre-update prediction each step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueSums {
    pub y_sum: f64,
    pub pred_sum: f64,
    pub pred_sq_sum: f64,
}

/// Full estimator state after `t` processed steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    t: usize,
    d: usize,
    k: usize,
    s: usize,
    eta: f64,
    weighting: Weighting,
    /// Steps ≤ this index are excluded from the residual accumulators.
    sigma_burn_in: usize,
    beta_hat: Vec<Vec<f64>>,
    /// Unnormalized weighted second-moment sums; Σ̂_{i,t} = cov_sum[i] / t.
    cov_sum: Vec<DMat>,
    xy_sum: Vec<Vec<f64>>,
    resid_sq_sum: Vec<f64>,
    /// Post-burn-in selections per arm (the aw residual normalizer).
    resid_count: Vec<usize>,
    count: Vec<usize>,
    value_sums: ValueSums,
}

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    state: LearnerState,
}

impl LearnerState {
    pub fn new(
        d: usize,
        k: usize,
        cfg: &HtConfig,
        eta: f64,
        weighting: Weighting,
        sigma_burn_in: usize,
    ) -> Self {
        LearnerState {
            t: 0,
            d,
            k,
            s: cfg.s,
            eta,
            weighting,
            sigma_burn_in,
            beta_hat: vec![vec![0.0; d]; k],
            cov_sum: (0..k).map(|_| DMat::zeros(d)).collect(),
            xy_sum: vec![vec![0.0; d]; k],
            resid_sq_sum: vec![0.0; k],
            resid_count: vec![0; k],
            count: vec![0; k],
            value_sums: ValueSums::default(),
        }
    }

    pub fn sigma_burn_in(&self) -> usize {
        self.sigma_burn_in
    }

    pub fn resid_counts(&self) -> &[usize] {
        &self.resid_count
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn arms(&self) -> usize {
        self.k
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn beta_hat(&self, arm: usize) -> &[f64] {
        &self.beta_hat[arm]
    }

    pub fn beta_hats(&self) -> &[Vec<f64>] {
        &self.beta_hat
    }

    pub fn counts(&self) -> &[usize] {
        &self.count
    }

    pub fn resid_sq_sums(&self) -> &[f64] {
        &self.resid_sq_sum
    }

    pub fn xy_sums(&self) -> &[Vec<f64>] {
        &self.xy_sum
    }

    pub fn value_sums(&self) -> &ValueSums {
        &self.value_sums
    }

    /// Normalized weighted covariance Σ̂_{i,t} = cov_sum[i] / t.
    pub fn sigma_hat(&self, arm: usize) -> DMat {
        let mut m = self.cov_sum[arm].clone();
        if self.t > 0 {
            m.scale(1.0 / self.t as f64);
        }
        m
    }

    pub fn cov_sum(&self, arm: usize) -> &DMat {
        &self.cov_sum[arm]
    }

    /// Process one observation. `pv` is the selection distribution the
    /// action was sampled from, `a` the chosen arm, `y` the reward.
    pub fn step(&mut self, x: &[f64], pv: &PropensityVector, a: usize, y: f64) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::dimension(format!(
                "context has length {}, learner expects {}",
                x.len(),
                self.d
            )));
        }
        if pv.len() != self.k || a >= self.k {
            return Err(Error::dimension(format!(
                "propensity/action shape ({}, {a}) does not match K = {}",
                pv.len(),
                self.k
            )));
        }
        let t_new = (self.t + 1) as f64;

        // Pre-update prediction of the chosen arm feeds the value sums.
        let pred_a = dot(&self.beta_hat[a], x);
        self.value_sums.y_sum += y;
        self.value_sums.pred_sum += pred_a;
        self.value_sums.pred_sq_sum += pred_a * pred_a;

        // Weighted accumulators touch only the chosen arm (indicator).
        let w = match self.weighting {
            Weighting::Ipw => {
                let p = pv.prob(a);
                if p > 0.0 {
                    1.0 / p
                } else {
                    // zero-probability arms cannot be chosen; contribute 0
                    debug_assert!(false, "sampled an arm with zero propensity");
                    0.0
                }
            }
            Weighting::Plain => 1.0,
        };
        let resid = y - pred_a;
        if self.t + 1 > self.sigma_burn_in {
            self.resid_sq_sum[a] += w * resid * resid;
            self.resid_count[a] += 1;
        }
        self.cov_sum[a].add_outer(x, w);
        for (acc, xv) in self.xy_sum[a].iter_mut().zip(x.iter()) {
            *acc += w * y * xv;
        }
        self.count[a] += 1;

        // Thresholded gradient descent on the averaged objective
        // q(β) = (βᵀS β − 2⟨xy, β⟩)/t, iterated to stationarity. Each pass
        // proposes H_s(β − η g) at the full step (the full step is what lets
        // new coordinates displace incumbents), then backs the step off
        // geometrically until the objective decreases; an iterate that
        // cannot decrease it is discarded, which keeps the sparse iterate in
        // the bounded region around the current weighted least-squares fit.
        let mut s_beta = vec![0.0f64; self.d];
        let mut s_cand = vec![0.0f64; self.d];
        for i in 0..self.k {
            sparse_matvec(&self.cov_sum[i], &self.beta_hat[i], &mut s_beta);
            let mut q_cur = quad_objective(&self.beta_hat[i], &s_beta, &self.xy_sum[i], t_new);
            'outer: for _ in 0..MAX_INNER_ITERS {
                let scale = 2.0 / t_new;
                let mut accepted = false;
                for halving in 0..4 {
                    let eta = self.eta / f64::from(1 << halving);
                    let beta = &self.beta_hat[i];
                    let moved: Vec<f64> = beta
                        .iter()
                        .zip(s_beta.iter().zip(self.xy_sum[i].iter()))
                        .map(|(b, (sg, xy))| b - eta * scale * (sg - xy))
                        .collect();
                    let candidate = hard_threshold(&moved, self.s);
                    let changed = candidate
                        .iter()
                        .zip(self.beta_hat[i].iter())
                        .any(|(a, b)| (a - b).abs() > 1e-12);
                    if !changed {
                        break 'outer;
                    }
                    sparse_matvec(&self.cov_sum[i], &candidate, &mut s_cand);
                    let q_new = quad_objective(&candidate, &s_cand, &self.xy_sum[i], t_new);
                    if q_new < q_cur - 1e-15 * q_cur.abs().max(1.0) {
                        self.beta_hat[i] = candidate;
                        std::mem::swap(&mut s_beta, &mut s_cand);
                        q_cur = q_new;
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    break;
                }
            }
        }

        self.t += 1;
        Ok(())
    }

    /// Per-arm Euclidean estimation errors against reference coefficients.
    pub fn estimation_error(&self, truth: &crate::env::ArmParams) -> Result<Vec<f64>> {
        if truth.arms() != self.k || truth.dim() != self.d {
            return Err(Error::dimension(
                "truth shape does not match learner",
            ));
        }
        Ok(self
            .beta_hat
            .iter()
            .zip(truth.betas.iter())
            .map(|(bh, b)| {
                bh.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }

    /// Versioned snapshot; lossless for estimates and accumulators.
    pub fn to_snapshot_json(&self) -> String {
        serde_json::to_string(&Snapshot {
            version: SNAPSHOT_VERSION,
            state: self.clone(),
        })
        .expect("learner state serializes")
    }

    pub fn from_snapshot_json(json: &str) -> Result<Self> {
        let snap: Snapshot =
            serde_json::from_str(json).map_err(|e| Error::Snapshot(e.to_string()))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {}",
                snap.version
            )));
        }
        let st = snap.state;
        let shape_ok = st.beta_hat.len() == st.k
            && st.cov_sum.len() == st.k
            && st.xy_sum.len() == st.k
            && st.resid_sq_sum.len() == st.k
            && st.resid_count.len() == st.k
            && st.count.len() == st.k
            && st.beta_hat.iter().all(|b| b.len() == st.d)
            && st.xy_sum.iter().all(|v| v.len() == st.d)
            && st.cov_sum.iter().all(|m| m.n() == st.d)
            && st.s >= 1
            && st.s <= st.d;
        if !shape_ok {
            return Err(Error::Snapshot("inconsistent snapshot shape".into()));
        }
        Ok(st)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::derive_rng;
    use crate::policy::PropensityVector;
    use proptest::prelude::*;
    use rand::Rng;

    fn pv(p: Vec<f64>, greedy: usize) -> PropensityVector {
        PropensityVector::new(p, greedy).unwrap()
    }

    #[test]
    fn hard_threshold_keeps_top_magnitudes() {
        assert_eq!(
            hard_threshold(&[3.0, -5.0, 1.0, 0.5], 2),
            vec![3.0, -5.0, 0.0, 0.0]
        );
        // already sparse enough → unchanged
        let v = vec![0.0, 2.0, 0.0];
        assert_eq!(hard_threshold(&v, 2), v);
        // magnitude tie → lower index wins
        assert_eq!(hard_threshold(&[2.0, -2.0, 0.0], 1), vec![2.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn hard_threshold_invariants(
            v in proptest::collection::vec(-100.0f64..100.0, 1..40),
            s in 1usize..40,
        ) {
            let s = s.min(v.len());
            let out = hard_threshold(&v, s);
            let nnz = out.iter().filter(|x| **x != 0.0).count();
            prop_assert!(nnz <= s);
            let kept_min = out
                .iter()
                .filter(|x| **x != 0.0)
                .map(|x| x.abs())
                .fold(f64::INFINITY, f64::min);
            for (o, orig) in out.iter().zip(v.iter()) {
                if *o != 0.0 {
                    prop_assert_eq!(*o, *orig);
                } else if nnz == s {
                    prop_assert!(orig.abs() <= kept_min);
                }
            }
        }
    }

    #[test]
    fn first_step_covariance_matches_weight() {
        let cfg = HtConfig { s: 2, eta: Some(0.1), resid_burn_in: None };
        let mut st = LearnerState::new(2, 2, &cfg, 0.1, Weighting::Ipw, 0);
        let x = vec![1.0, -1.0];
        st.step(&x, &pv(vec![0.5, 0.5], 0), 1, 0.3).unwrap();
        let sig1 = st.sigma_hat(1);
        assert_eq!(sig1.get(0, 0), 2.0);
        assert_eq!(sig1.get(0, 1), -2.0);
        assert_eq!(sig1.get(1, 1), 2.0);
        // unchosen arm untouched
        assert_eq!(st.sigma_hat(0).get(0, 0), 0.0);

        let mut plain = LearnerState::new(2, 2, &cfg, 0.1, Weighting::Plain, 0);
        plain.step(&x, &pv(vec![0.5, 0.5], 0), 1, 0.3).unwrap();
        assert_eq!(plain.sigma_hat(1).get(0, 0), 1.0);
        assert_eq!(plain.sigma_hat(1).get(0, 1), -1.0);
    }

    #[test]
    fn origin_is_fixed_point_without_data() {
        // an arm that is never chosen keeps β̂ = 0: its gradient is zero
        let cfg = HtConfig { s: 1, eta: Some(0.3), resid_burn_in: None };
        let mut st = LearnerState::new(3, 2, &cfg, 0.3, Weighting::Plain, 0);
        for i in 0..5 {
            let x = vec![0.1 * i as f64, 1.0, -0.5];
            st.step(&x, &pv(vec![1.0, 0.0], 0), 0, 0.0).unwrap();
        }
        // arm 1 never chosen and rewards are all zero → both stay at 0
        assert!(st.beta_hat(1).iter().all(|v| *v == 0.0));
        assert!(st.beta_hat(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let cfg = HtConfig { s: 1, eta: Some(0.1), resid_burn_in: None };
        let mut st = LearnerState::new(3, 2, &cfg, 0.1, Weighting::Plain, 0);
        assert!(st
            .step(&[1.0, 2.0], &pv(vec![1.0, 0.0], 0), 0, 0.0)
            .is_err());
        assert!(st
            .step(&[1.0, 2.0, 3.0], &pv(vec![1.0, 0.0], 0), 5, 0.0)
            .is_err());
    }

    #[test]
    fn sparsity_is_preserved_every_step() {
        let cfg = HtConfig { s: 3, eta: Some(0.1), resid_burn_in: None };
        let mut st = LearnerState::new(8, 2, &cfg, 0.1, Weighting::Ipw, 0);
        let mut rng = derive_rng(21, 0, 0);
        for _ in 0..60 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = usize::from(rng.random::<f64>() < 0.5);
            let p = pv(vec![0.5, 0.5], 0);
            let y: f64 = rng.random_range(-1.0..1.0);
            st.step(&x, &p, a, y).unwrap();
            for arm in 0..2 {
                let nnz = st.beta_hat(arm).iter().filter(|v| **v != 0.0).count();
                assert!(nnz <= 3, "nnz {nnz} at t {}", st.t());
            }
        }
    }

    #[test]
    fn ipw_weighted_design_is_unbiased() {
        // Mean of (1(a=i)/w_i)·x xᵀ over independent replications matches
        // E[x xᵀ] = I/3 entrywise within 4 Monte-Carlo standard errors.
        let d = 4;
        let n = 2000usize;
        let probs = [0.3, 0.7];
        let mut rng = derive_rng(22, 0, 0);
        for arm in 0..2usize {
            let mut sums = vec![0.0f64; d * d];
            let mut sq_sums = vec![0.0f64; d * d];
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a = usize::from(rng.random::<f64>() < probs[1]);
                let w = if a == arm { 1.0 / probs[arm] } else { 0.0 };
                for i in 0..d {
                    for j in 0..d {
                        let v = w * x[i] * x[j];
                        sums[i * d + j] += v;
                        sq_sums[i * d + j] += v * v;
                    }
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let mean = sums[i * d + j] / n as f64;
                    let var = sq_sums[i * d + j] / n as f64 - mean * mean;
                    let se = (var / n as f64).sqrt();
                    let target = if i == j { 1.0 / 3.0 } else { 0.0 };
                    assert!(
                        (mean - target).abs() <= 4.0 * se,
                        "arm {arm} entry ({i},{j}): mean {mean}, target {target}, se {se}"
                    );
                }
            }
        }
    }

    #[test]
    fn streaming_matches_batch_recomputation() {
        let d = 6;
        let cfg = HtConfig { s: 4, eta: Some(0.08), resid_burn_in: None };
        let mut st = LearnerState::new(d, 2, &cfg, 0.08, Weighting::Ipw, 0);
        let mut rng = derive_rng(23, 0, 0);
        let mut log: Vec<(Vec<f64>, PropensityVector, usize, f64)> = Vec::new();
        for _ in 0..120 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps = 0.4;
            let greedy = usize::from(rng.random::<f64>() < 0.5);
            let mut probs = vec![eps / 2.0; 2];
            probs[greedy] = 1.0 - eps / 2.0;
            let p = pv(probs, greedy);
            let a = usize::from(rng.random::<f64>() >= p.prob(0));
            let y: f64 = rng.random_range(-2.0..2.0);
            st.step(&x, &p, a, y).unwrap();
            log.push((x, p, a, y));
        }
        let t = log.len() as f64;
        for arm in 0..2usize {
            let mut cov = DMat::zeros(d);
            let mut xy = vec![0.0f64; d];
            for (x, p, a, y) in &log {
                if *a == arm {
                    let w = 1.0 / p.prob(arm);
                    cov.add_outer(x, w / t);
                    for (acc, xv) in xy.iter_mut().zip(x.iter()) {
                        *acc += w * y * xv;
                    }
                }
            }
            assert!(st.sigma_hat(arm).max_abs_diff(&cov) < 1e-9);
            let live = &st.xy_sums()[arm];
            for (a, b) in live.iter().zip(xy.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn estimation_error_is_euclidean_distance() {
        let cfg = HtConfig { s: 2, eta: Some(0.1), resid_burn_in: None };
        let st = LearnerState::new(3, 2, &cfg, 0.1, Weighting::Plain, 0);
        let truth = crate::env::ArmParams {
            betas: vec![vec![0.6, 0.8, 0.0], vec![0.0, 0.0, 0.0]],
        };
        let errs = st.estimation_error(&truth).unwrap();
        assert!((errs[0] - 1.0).abs() < 1e-15);
        assert_eq!(errs[1], 0.0);
    }

    #[test]
    fn snapshot_roundtrip_is_lossless() {
        let cfg = HtConfig { s: 3, eta: Some(0.07), resid_burn_in: None };
        let mut st = LearnerState::new(5, 2, &cfg, 0.07, Weighting::Ipw, 0);
        let mut rng = derive_rng(24, 0, 0);
        for _ in 0..40 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = pv(vec![0.25, 0.75], 1);
            let a = usize::from(rng.random::<f64>() < 0.75);
            st.step(&x, &p, a, rng.random_range(-1.0..1.0)).unwrap();
        }
        let json = st.to_snapshot_json();
        let back = LearnerState::from_snapshot_json(&json).unwrap();
        assert_eq!(st, back);
        // tampered version is refused
        let bad = json.replacen("\"version\":1", "\"version\":99", 1);
        assert!(LearnerState::from_snapshot_json(&bad).is_err());
    }

    #[test]
    fn eta_resolution_uses_mean_curvature_with_fallback() {
        let cfg = HtConfig { s: 2, eta: None, resid_burn_in: None };
        // mean squared coordinate = (4+0)/2 = 2 → η = 1/8
        let rows = vec![vec![2.0, 0.0], vec![2.0, 0.0], vec![2.0, 0.0]];
        let eta = cfg.resolve_eta(&rows);
        assert!((eta - 0.125).abs() < 1e-12, "eta {eta}");
        // uniform(-1,1)-scale coordinates → η near the 3/4 population value
        let cfg9 = HtConfig { s: 2, eta: None, resid_burn_in: None };
        let unif: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![((i * 37 % 100) as f64 / 50.0 - 1.0), ((i * 61 % 100) as f64 / 50.0 - 1.0)])
            .collect();
        let eta_u = cfg9.resolve_eta(&unif);
        assert!(eta_u > 0.4 && eta_u < 1.5, "eta_u {eta_u}");
        // all-zero contexts → fallback
        let zero_rows = vec![vec![0.0, 0.0]; 10];
        assert_eq!(cfg.resolve_eta(&zero_rows), 0.05);
        // explicit eta wins
        let fixed = HtConfig { s: 2, eta: Some(0.42), resid_burn_in: None };
        assert_eq!(fixed.resolve_eta(&rows), 0.42);
    }
}
