use sbinfer::env::{BetaGen, CovariateDist, ScenarioConfig};
use sbinfer::harness::{rebuild_state, run_trial};
use sbinfer::inference::InferenceConfig;
use sbinfer::learner::{HtConfig, LearnerState};
use sbinfer::linalg::dot;
use sbinfer::policy::ExplorationSchedule;
use sbinfer::Method;

fn main() {
    let scenario = ScenarioConfig {
        d: 600, horizon: 300, arms: 2, s0: 3,
        noise_sd: vec![0.5, 0.5],
        covariate_dist: CovariateDist::default(),
        beta_gen: BetaGen::Default,
        margin_nu: 1.0, seed: 20240817,
    };
    let sched = ExplorationSchedule::epsilon_greedy(0.5, 1.0 / 3.0);
    let ht = HtConfig { s: 9, eta: None, resid_burn_in: None };
    let inf = InferenceConfig::default();
    let (log, _) = run_trial(&scenario, &sched, &ht, Method::Ipw, &inf, 0).unwrap();
    println!("eta = {}", log.meta.eta);

    // replay step by step, tracking residual contributions and beta norms
    let cfg = HtConfig { s: log.meta.s, eta: Some(log.meta.eta), resid_burn_in: None };
    let mut st = LearnerState::new(600, 2, &cfg, log.meta.eta, log.meta.weighting, log.meta.sigma_burn_in);
    let mut resid_acc = [0.0f64; 2];
    let mut max_contrib = [0.0f64; 2];
    let mut argmax_t = [0usize; 2];
    for row in &log.rows {
        let pred = dot(st.beta_hat(row.action), &row.x);
        let r2 = (row.y - pred) * (row.y - pred);
        let w = 1.0 / row.pv.prob(row.action);
        let contrib = w * r2;
        resid_acc[row.action] += contrib;
        if contrib > max_contrib[row.action] {
            max_contrib[row.action] = contrib;
            argmax_t[row.action] = row.t;
        }
        st.step(&row.x, &row.pv, row.action, row.y).unwrap();
        if row.t % 30 == 0 || row.t <= 10 {
            let n0 = st.beta_hat(0).iter().map(|v| v * v).sum::<f64>().sqrt();
            let n1 = st.beta_hat(1).iter().map(|v| v * v).sum::<f64>().sqrt();
            println!(
                "t={:3} a={} w={:6.2} r2={:9.3} |b0|={:8.3} |b1|={:8.3} acc=[{:9.2},{:9.2}]",
                row.t, row.action, w, r2, n0, n1, resid_acc[0], resid_acc[1]
            );
        }
    }
    println!("sigma2 = [{}, {}]", resid_acc[0] / 300.0, resid_acc[1] / 300.0);
    println!("max contrib arm0 {:.2} at t={}, arm1 {:.2} at t={}", max_contrib[0], argmax_t[0], max_contrib[1], argmax_t[1]);
    let rebuilt = rebuild_state(&log).unwrap();
    println!("rebuilt beta err0 nnz {:?}", rebuilt.beta_hat(0).iter().filter(|v| **v != 0.0).count());
}
