use sbinfer::env::{BetaGen, CovariateDist, ScenarioConfig};
use sbinfer::harness::{run_experiment, ExperimentSpec};
use sbinfer::inference::InferenceConfig;
use sbinfer::learner::HtConfig;
use sbinfer::policy::ExplorationSchedule;
use sbinfer::stats::normal_cdf;
use sbinfer::Method;

fn ks_stat(mut z: Vec<f64>) -> f64 {
    z.sort_by(|a, b| a.total_cmp(b));
    let n = z.len() as f64;
    let mut d = 0.0f64;
    for (i, zi) in z.iter().enumerate() {
        let f = normal_cdf(*zi);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((i as f64 / n - f).abs());
    }
    d
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let method = if args.get(1).map(|s| s.as_str()) == Some("aw") {
        Method::Aw
    } else {
        Method::Ipw
    };
    let gamma: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0 / 3.0);
    let c_mu: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let trials: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(100);
    let s0: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(3);
    let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(20240817);
    let eta: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let s_work: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0);
    let noise: f64 = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let burn: usize = args.get(10).and_then(|s| s.parse().ok()).unwrap_or(0);

    let scenario = ScenarioConfig {
        d: 600,
        horizon: 300,
        arms: 2,
        s0,
        noise_sd: vec![noise, noise],
        covariate_dist: CovariateDist::default(),
        beta_gen: BetaGen::Default,
        margin_nu: 1.0,
        seed,
    };
    let schedule = match method {
        Method::Ipw => ExplorationSchedule::epsilon_greedy(0.5, gamma),
        Method::Aw => ExplorationSchedule::exploration_free(),
    };
    let spec = ExperimentSpec {
        scenario: scenario.clone(),
        schedule,
        ht: HtConfig {
            eta: if eta > 0.0 { Some(eta) } else { None },
            s: if s_work > 0 { s_work } else { 3 * s0 },
            resid_burn_in: if burn > 0 { Some(burn) } else { None },
        },
        method,
        inference: InferenceConfig {
            c_mu1: c_mu,
            c_mu2: c_mu,
            ..InferenceConfig::default()
        },
        n_trials: trials,
        workers: 0,
        keep_logs: 0,
    };
    let t0 = std::time::Instant::now();
    let res = run_experiment(&spec).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let agg = &res.aggregate;
    let n = trials as f64;

    println!(
        "== method={method} gamma={gamma:.3} c_mu={c_mu} trials={trials} s0={s0} seed={seed} ({elapsed:.0}s, {:.2}s/trial)",
        elapsed / n
    );
    let mut max_bias_z = 0.0f64;
    let mut min_cov = 1.0f64;
    let mut max_cov = 0.0f64;
    for a in 0..2 {
        for l in 0..10 {
            let bias = agg.mean_debiased[a][l] - res.truth.betas[a][l];
            let se_mc = agg.sd_debiased[a][l] / n.sqrt();
            let bz = if se_mc > 0.0 { (bias / se_mc).abs() } else { 0.0 };
            max_bias_z = max_bias_z.max(bz);
            min_cov = min_cov.min(agg.coverage[a][l]);
            max_cov = max_cov.max(agg.coverage[a][l]);
        }
    }
    println!("bias_z max (first10 both arms): {max_bias_z:.2}");
    println!("coverage range (first10): [{min_cov:.3}, {max_cov:.3}]");
    for a in 0..2 {
        print!("arm{a} coord stats:");
        for l in 0..5 {
            let bias = agg.mean_debiased[a][l] - res.truth.betas[a][l];
            print!(
                "  [{l}] b={bias:+.4} sd={:.4} se={:.4} cov={:.3}",
                agg.sd_debiased[a][l], agg.mean_se[a][l], agg.coverage[a][l]
            );
        }
        println!();
    }

    // standardized errors at (arm 1, coord 0)
    let zs: Vec<f64> = res
        .trials
        .iter()
        .map(|t| {
            let a = &t.report.arms[1];
            (a.debiased[0] - res.truth.betas[1][0]) / a.se[0]
        })
        .collect();
    println!("KS(arm1,coord0): {:.4}   mean se: {:.4}", ks_stat(zs), agg.mean_se[1][0]);
    let w10: f64 = (0..2)
        .map(|a| agg.mean_ci_width[a][..10].iter().sum::<f64>() / 10.0)
        .sum::<f64>()
        / 2.0;
    println!("mean width (first10): {w10:.4}");
    println!(
        "final regret: {:.2}   mean value: {:.4} (oracle {:.4})   value cov: {:.3}",
        agg.regret_mean.last().unwrap(),
        agg.mean_value,
        res.oracle_value,
        agg.value_coverage
    );
    // null-coordinate rejection rate via the difference test at coord 10
    let null_rej = res
        .trials
        .iter()
        .filter(|t| t.report.diffs.iter().find(|d| d.coord == 10).unwrap().p < 0.05)
        .count() as f64
        / n;
    println!("null diff rejection at coord10: {null_rej:.3}");
    // sigma2 sanity
    let s2: Vec<f64> = (0..2)
        .map(|a| res.trials.iter().map(|t| t.report.arms[a].sigma2_hat).sum::<f64>() / n)
        .collect();
    println!("mean sigma2: {s2:?}");
    // end-state raw estimation error per arm
    let est_err: Vec<f64> = (0..2)
        .map(|a| {
            res.trials
                .iter()
                .map(|t| {
                    t.report.arms[a]
                        .raw
                        .iter()
                        .zip(res.truth.betas[a].iter())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
                / n
        })
        .collect();
    println!("mean ||beta_hat_T - beta||: {est_err:?}");
    let r = &agg.regret_mean;
    let late = (r[299] - r[249]) / 50.0;
    let mid = (r[149] - r[99]) / 50.0;
    println!("per-step regret: mid {mid:.4}  late {late:.4}");
}
