use sbinfer::env::{BetaGen, CovariateDist, ScenarioConfig};
use sbinfer::harness::run_trial;
use sbinfer::inference::InferenceConfig;
use sbinfer::learner::{HtConfig, LearnerState};
use sbinfer::policy::ExplorationSchedule;
use sbinfer::Method;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eta: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.75);
    let s: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(9);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20240817);
    let noise: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let scenario = ScenarioConfig {
        d: 600, horizon: 300, arms: 2, s0: 3,
        noise_sd: vec![noise, noise],
        covariate_dist: CovariateDist::default(),
        beta_gen: BetaGen::Default,
        margin_nu: 1.0, seed,
    };
    let sched = ExplorationSchedule::exploration_free();
    let ht = HtConfig { s, eta: Some(eta), resid_burn_in: None };
    let inf = InferenceConfig::default();
    let truth = scenario.gen_params(&mut sbinfer::env::derive_rng(seed, 0, 0));
    println!("truth b0 = {:?}", &truth.betas[0][..4]);
    println!("truth b1 = {:?}", &truth.betas[1][..4]);
    let (log, _) = run_trial(&scenario, &sched, &ht, Method::Aw, &inf, 0).unwrap();

    let cfg = HtConfig { s, eta: Some(eta), resid_burn_in: None };
    let mut st = LearnerState::new(600, 2, &cfg, eta, log.meta.weighting, log.meta.sigma_burn_in);
    for row in &log.rows {
        st.step(&row.x, &row.pv, row.action, row.y).unwrap();
        if row.t % 25 == 0 || (row.t <= 100 && row.t % 10 == 0) {
            let errs = st.estimation_error(&truth).unwrap();
            // support hits: how many of the first 3 coords are active
            let hits: Vec<usize> = (0..2)
                .map(|a| st.beta_hat(a)[..3].iter().filter(|v| **v != 0.0).count())
                .collect();
            println!(
                "t={:3} counts={:?} err=[{:.3},{:.3}] support_hits={:?} b1_head={:?}",
                row.t,
                st.counts(),
                errs[0],
                errs[1],
                hits,
                &st.beta_hat(1)[..3].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
            );
        }
    }
}
