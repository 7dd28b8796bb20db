//! Subcommand execution: the (optionally parallel) Monte Carlo driver and
//! the single-dataset estimation pipeline.

use aipw_core::estimators::{
    acet_variance, aipw_ace, aipw_acet, confidence_interval, or_estimator, Estimand,
    EstimateReport, NuisanceFit,
};
use aipw_core::nn::{fit_nn_nuisances, FittedNuisances, NnFamily};
use aipw_core::postlasso::{select_and_refit, Selection};
use aipw_core::sim::{self, naive_estimate, EstimatorKind, RepEstimate};
use aipw_core::{Dataset, Rng};
use rayon::prelude::*;

use crate::checkpoint::save_model;
use crate::cli::{EstimateOpts, SimulateOpts};
use crate::csv_io::load_csv;
use crate::error::AppError;
use crate::report::{
    write_estimate_report, write_mc_report, EstimateDocument, SimulateDocument, TOOL_VERSION,
};

/// Runs a Monte Carlo study and writes the report.
///
/// With `threads > 1`, replications run on a rayon pool; each replication
/// owns its substreams and results are aggregated in replication order, so
/// the report is identical to a sequential run.
pub fn run_simulate(opts: &SimulateOpts) -> Result<(), AppError> {
    let cfg = &opts.cfg;
    let true_effect = sim::prepare_run(cfg)?;

    let reps: Vec<u64> = (1..=cfg.replications as u64).collect();
    let outcomes: Vec <(u64, Result<Vec<RepEstimate>, aipw_core::Error>)> = if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| AppError::Numeric(format!("cannot build thread pool: {e}")))?;
        pool.install(|| {
            reps.par_iter().map(|&r| (r, sim::replicate_one(cfg, r))).collect()
        })
    } else {
        reps.iter().map(|&r| (r, sim::replicate_one(cfg, r))).collect()
    };

    let mut results = Vec::with_capacity(cfg.replications);
    let mut failures = Vec::new();
    for (r, outcome) in outcomes {
        match outcome {
            Ok(est) => results.push(est),
            Err(e) => failures.push(format!("replication {r}: {e}")),
        }
    }
    let report = sim::finish_run(cfg, true_effect, results, failures)?;

    let doc = SimulateDocument { tool_version: TOOL_VERSION, seed: cfg.base_seed, report: &report };
    write_mc_report(&doc, &opts.out, opts.format)
}

/// Loads a CSV dataset, fits the requested nuisances, and writes the
/// estimate report.
pub fn run_estimate(opts: &EstimateOpts) -> Result<(), AppError> {
    let loaded = load_csv(&opts.data, opts.layout.as_ref(), &opts.outcome, &opts.treat)?;
    let data = &loaded.dataset;

    let report = match opts.method {
        EstimatorKind::Naive => {
            let est = naive_estimate(data, opts.alpha)?;
            manual_report(data, opts.estimand, opts.alpha, est)
        }
        EstimatorKind::OrDs => {
            let res =
                select_and_refit(data, opts.estimand, Selection::Double, opts.lambda_rule, opts.trim)?;
            or_report(data, &res.fit, opts.estimand, opts.alpha)?
        }
        EstimatorKind::DrSs | EstimatorKind::DrDs => {
            let selection = if opts.method == EstimatorKind::DrSs {
                Selection::Single
            } else {
                Selection::Double
            };
            let res = select_and_refit(data, opts.estimand, selection, opts.lambda_rule, opts.trim)?;
            aipw_report(data, &res.fit, opts.estimand, opts.alpha)?
        }
        EstimatorKind::DrCnn | EstimatorKind::DrMlp => {
            let mut nn = opts.nn.clone();
            nn.family = if opts.method == EstimatorKind::DrCnn {
                NnFamily::Cnn
            } else {
                NnFamily::Mlp
            };
            let mut rng = Rng::new(opts.seed);
            let fitted = fit_nn_nuisances(data, opts.estimand, &nn, &mut rng)?;
            if let Some(dir) = &opts.save_models {
                save_models(dir, &fitted)?;
            }
            aipw_report(data, &fitted.fit, opts.estimand, opts.alpha)?
        }
        _ => unreachable!("oracle estimators rejected during argument parsing"),
    };

    let doc = EstimateDocument {
        tool_version: TOOL_VERSION,
        seed: opts.seed,
        method: opts.method.name(),
        report: &report,
    };
    write_estimate_report(&doc, &opts.out, opts.format)
}

fn aipw_report(
    data: &Dataset,
    fit: &NuisanceFit,
    estimand: Estimand,
    alpha: f64,
) -> Result<EstimateReport, AppError> {
    let report = match estimand {
        Estimand::Ace => aipw_ace(data, fit, alpha)?,
        Estimand::Acet => aipw_acet(data, fit, alpha)?,
    };
    Ok(report)
}

/// OR point estimate with the influence-function variance evaluated at the
/// same nuisance values.
fn or_report(
    data: &Dataset,
    fit: &NuisanceFit,
    estimand: Estimand,
    alpha: f64,
) -> Result<EstimateReport, AppError> {
    let tau = or_estimator(data, fit, estimand)?;
    let n1 = data.n_treated();
    let variance = match estimand {
        Estimand::Acet => acet_variance(data, &fit.mu0, &fit.p, tau, n1),
        Estimand::Ace => aipw_ace(data, fit, alpha)?.variance,
    };
    let (ci_low, ci_high) = confidence_interval(tau, variance, data.n(), alpha)?;
    Ok(EstimateReport {
        estimand,
        tau_hat: tau,
        variance,
        se: (variance / data.n() as f64).sqrt(),
        alpha,
        ci_low,
        ci_high,
        n: data.n(),
        n1,
        n0: data.n() - n1,
    })
}

fn manual_report(
    data: &Dataset,
    estimand: Estimand,
    alpha: f64,
    est: RepEstimate,
) -> EstimateReport {
    let n1 = data.n_treated();
    EstimateReport {
        estimand,
        tau_hat: est.tau,
        variance: est.variance,
        se: (est.variance / data.n() as f64).sqrt(),
        alpha,
        ci_low: est.ci_low,
        ci_high: est.ci_high,
        n: data.n(),
        n1,
        n0: data.n() - n1,
    }
}

fn save_models(dir: &std::path::Path, fitted: &FittedNuisances) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AppError::Data(format!("cannot create '{}': {e}", dir.display())))?;
    save_model(&fitted.mu0_model, &dir.join("mu0.json"))?;
    if let Some(m) = &fitted.mu1_model {
        save_model(m, &dir.join("mu1.json"))?;
    }
    save_model(&fitted.p_model, &dir.join("propensity.json"))
}
