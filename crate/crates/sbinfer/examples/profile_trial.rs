use sbinfer::debias::{accumulate_covariances, build_decorr, mu_schedule, DecorrTarget, MuKind};
use sbinfer::env::{BetaGen, CovariateDist, ScenarioConfig};
use sbinfer::harness::{run_trial, rederive_report};
use sbinfer::inference::{derive_report, InferenceConfig};
use sbinfer::learner::HtConfig;
use sbinfer::policy::ExplorationSchedule;
use sbinfer::Method;
use std::time::Instant;

fn main() {
    let scenario = ScenarioConfig {
        d: 600,
        horizon: 300,
        arms: 2,
        s0: 3,
        noise_sd: vec![0.25, 0.25],
        covariate_dist: CovariateDist::default(),
        beta_gen: BetaGen::Default,
        margin_nu: 1.0,
        seed: 20240817,
    };
    let sched = ExplorationSchedule::exploration_free();
    let ht = HtConfig { s: 3, eta: Some(3.0), resid_burn_in: None };
    let inf = InferenceConfig::default();

    let t0 = Instant::now();
    let (log, state) = run_trial(&scenario, &sched, &ht, Method::Aw, &inf, 0).unwrap();
    println!("run_trial:        {:>8.1} ms", t0.elapsed().as_secs_f64() * 1e3);

    let t1 = Instant::now();
    let covs = accumulate_covariances(&log).unwrap();
    println!("covariances:      {:>8.1} ms", t1.elapsed().as_secs_f64() * 1e3);

    let mu = mu_schedule(MuKind::Pooled, 300, 600, 3, 1.0, 0.5);
    let t2 = Instant::now();
    let m = build_decorr(&covs, DecorrTarget::Pooled, mu, 1e-8).unwrap();
    println!("build_decorr:     {:>8.1} ms (mu = {mu:.4})", t2.elapsed().as_secs_f64() * 1e3);
    let nnz: usize = (0..600).map(|l| m.row_support(l).len()).sum();
    let max_sweeps_unconv = m.converged.iter().filter(|c| !**c).count();
    println!("  mean row nnz: {:.1}, unconverged rows: {}", nnz as f64 / 600.0, max_sweeps_unconv);

    for c_mu in [0.5f64, 1.0, 1.5, 2.0] {
        let mu2 = mu_schedule(MuKind::Arm, 300, 600, 3, 1.0, c_mu);
        let t3 = Instant::now();
        let m1 = build_decorr(&covs, DecorrTarget::Arm(1), mu2, 1e-8).unwrap();
        let nnz1: usize = (0..600).map(|l| m1.row_support(l).len()).sum();
        let unconv = m1.converged.iter().filter(|c| !**c).count();
        let max_excess = m1
            .kkt_residuals
            .iter()
            .map(|r| r - mu2)
            .fold(f64::NEG_INFINITY, f64::max);
        println!(
            "arm build c_mu={c_mu}: {:>7.1} ms (mu={mu2:.4}) nnz={:.1} unconverged={} max_excess={:.2e}",
            t3.elapsed().as_secs_f64() * 1e3,
            nnz1 as f64 / 600.0,
            unconv,
            max_excess
        );
    }

    let t4 = Instant::now();
    let report = derive_report(&log, &state, &inf).unwrap();
    println!("derive_report:    {:>8.1} ms", t4.elapsed().as_secs_f64() * 1e3);
    println!("sigma2: {:?}", report.arms.iter().map(|a| a.sigma2_hat).collect::<Vec<_>>());
    println!("se[0..4] arm1: {:?}", &report.arms[1].se[0..4]);

    let t5 = Instant::now();
    let _ = rederive_report(&log).unwrap();
    println!("rederive_report:  {:>8.1} ms", t5.elapsed().as_secs_f64() * 1e3);
}
