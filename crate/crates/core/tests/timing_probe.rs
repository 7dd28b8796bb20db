// scratch probe
use aipw_core::sim::{monte_carlo_run, EstimatorKind, McConfig, Setting};
use std::time::Instant;

#[test]
fn probe_mini_mc_setting2() {
    let mut cfg = McConfig::new(Setting::Two, 5000, 6);
    cfg.estimators = vec![EstimatorKind::DrCnn, EstimatorKind::OrDs];
    cfg.base_seed = 31;
    cfg.oracle_draws = 2_000_000;
    cfg.nn.outcome_train.epochs = 10;
    cfg.nn.propensity_train.epochs = 10;
    cfg.nn.outcome_train.batch_size = 128;
    cfg.nn.propensity_train.batch_size = 128;
    let t0 = Instant::now();
    let rep = monte_carlo_run(&cfg).unwrap();
    println!("mini MC (6 reps, drcnn+ords): {:?}", t0.elapsed());
    println!("true effect: {:.4}", rep.true_effect);
    for s in &rep.summaries {
        println!(
            "{:>8}: bias {:+.4} coverage {:.2} mc_sd {:.4} est_sd {:.4}",
            s.estimator.name(), s.bias, s.coverage, s.mc_sd.unwrap_or(f64::NAN), s.est_sd
        );
    }
}
