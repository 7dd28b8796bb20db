//! Simulation designs, the true-effect oracle, and the Monte Carlo runner.
//!
//! Both settings draw ten independent normal covariates with increasing
//! means and varying spreads. Setting 1 builds the nuisance surfaces from
//! polynomials in differences of neighboring covariates; Setting 2 uses
//! step functions of neighboring ratios, which no low-order polynomial
//! expansion can represent. The Monte Carlo runner scores the requested
//! estimators of the ACET against a brute-force oracle value of the true
//! effect, reporting bias, coverage, Monte Carlo sd, mean estimated sd, and
//! MSE per estimator.
//!
//! Replication `r` draws from `Rng::substream(base_seed, r·8 + slot)`
//! (slot 0 data, 1 CNN training, 2 MLP training), so every replication is
//! reproducible in isolation and independent of which other replications
//! run — the basis for thread-parallel execution by callers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Dataset, Matrix, SeriesLayout};
use crate::error::{Error, Result};
use crate::estimators::{
    acet_variance, aipw_acet, confidence_interval, naive_diff, or_estimator, Estimand, NuisanceFit,
};
use crate::nn::{fit_nn_nuisances, NnFamily, NnPipelineConfig};
use crate::postlasso::{select_and_refit, LambdaRule, Selection};
use crate::rng::Rng;

/// Mean and standard deviation of each of the ten covariates.
pub const COVARIATE_PARAMS: [(f64, f64); 10] = [
    (100.0, 20.0),
    (102.0, 15.0),
    (105.0, 13.0),
    (107.0, 11.0),
    (109.0, 8.0),
    (110.0, 20.0),
    (112.0, 15.0),
    (115.0, 13.0),
    (117.0, 11.0),
    (119.0, 8.0),
];

/// Ten independent normal covariate columns with the published means and
/// standard deviations, drawn row-major.
pub fn gen_covariates(rng: &mut Rng, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::Domain(String::from("need n >= 1")));
    }
    let mut x = Matrix::zeros(n, 10);
    for i in 0..n {
        for (j, &(mean, sd)) in COVARIATE_PARAMS.iter().enumerate() {
            x.set(i, j, rng.normal(mean, sd)?);
        }
    }
    Ok(x)
}

/// Setting-1 signal: `(X2-X1)^2 + (X4-X3)^3 + (X6-X5)^2 + (X8-X7)^3 +
/// (X10-X9)^2`.
pub fn setting1_signal(x: &[f64]) -> f64 {
    let sq = |v: f64| v * v;
    let cube = |v: f64| v * v * v;
    sq(x[1] - x[0]) + cube(x[3] - x[2]) + sq(x[5] - x[4]) + cube(x[7] - x[6]) + sq(x[9] - x[8])
}

/// Setting-1 propensity `1/(1 + exp(5e-6 · D))`.
pub fn setting1_propensity(signal: f64) -> f64 {
    1.0 / (1.0 + libm::exp(5e-6 * signal))
}

/// 10 if every consecutive ratio exceeds 1.15.
pub fn step_l1(a: f64, b: f64, c: f64, d: f64) -> f64 {
    if b / a > 1.15 && c / b > 1.15 && d / c > 1.15 {
        10.0
    } else {
        0.0
    }
}

/// 5 if every consecutive ratio is below 1.05.
pub fn step_l2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    if b / a < 1.05 && c / b < 1.05 && d / c < 1.05 {
        5.0
    } else {
        0.0
    }
}

/// 3 if the oscillation pattern around factor 1.1 changes direction
/// (the signed triple product is negative).
pub fn step_l3(a: f64, b: f64, c: f64, d: f64) -> f64 {
    if (b - 1.1 * a) * (c - 1.1 * b) * (d - 1.1 * c) < 0.0 {
        3.0
    } else {
        0.0
    }
}

/// Setting-2 signal `G = l1(X1..X4) + l2(X4..X7) + l3(X6..X9)`.
pub fn setting2_signal(x: &[f64]) -> f64 {
    step_l1(x[0], x[1], x[2], x[3]) + step_l2(x[3], x[4], x[5], x[6])
        + step_l3(x[5], x[6], x[7], x[8])
}

/// Setting-2 propensity `1/(1 + exp(0.05·X5 - 0.1·G))`.
pub fn setting2_propensity(x5: f64, signal: f64) -> f64 {
    1.0 / (1.0 + libm::exp(0.05 * x5 - 0.1 * signal))
}

/// A generated sample with its potential outcomes and true nuisances.
#[derive(Debug, Clone)]
pub struct SimulatedSample {
    pub data: Dataset,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub p_true: Vec<f64>,
    pub mu0_true: Vec<f64>,
    pub mu1_true: Vec<f64>,
}

fn build_sample(
    rng: &mut Rng,
    n: usize,
    // (shift, p): mu0 = 1 + shift, mu1 = 2 - shift, P(T=1|X) = p
    nuisances: impl Fn(&[f64]) -> (f64, f64),
) -> Result<SimulatedSample> {
    let x = gen_covariates(rng, n)?;
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut p_true = Vec::with_capacity(n);
    let mut mu0_true = Vec::with_capacity(n);
    let mut mu1_true = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (shift, p) = nuisances(x.row(i));
        let mu0 = 1.0 + shift;
        let mu1 = 2.0 - shift;
        let e0 = rng.normal(0.0, 1.0)?;
        let e1 = rng.normal(0.0, 1.0)?;
        let ti = rng.bernoulli(p)?;
        let y0i = mu0 + e0;
        let y1i = mu1 + e1;
        y0.push(y0i);
        y1.push(y1i);
        p_true.push(p);
        mu0_true.push(mu0);
        mu1_true.push(mu1);
        t.push(ti);
        y.push(if ti == 1 { y1i } else { y0i });
    }
    let data = Dataset::new(y, t, x, Some(SeriesLayout::single_series(10)))?;
    Ok(SimulatedSample { data, y0, y1, p_true, mu0_true, mu1_true })
}

/// Setting 1: polynomial nuisances in neighboring covariate differences.
pub fn dgp_setting1(rng: &mut Rng, n: usize) -> Result<SimulatedSample> {
    build_sample(rng, n, |row| {
        let d = setting1_signal(row);
        (0.001 * d, setting1_propensity(d))
    })
}

/// Setting 2: step-function nuisances in neighboring covariate ratios.
pub fn dgp_setting2(rng: &mut Rng, n: usize) -> Result<SimulatedSample> {
    build_sample(rng, n, |row| {
        let g = setting2_signal(row);
        (g, setting2_propensity(row[4], g))
    })
}

/// Simulation design selector (the paper's two settings).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Setting {
    #[cfg_attr(feature = "serde", serde(rename = "1"))]
    One,
    #[cfg_attr(feature = "serde", serde(rename = "2"))]
    Two,
}

impl Setting {
    pub fn from_index(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Setting::One),
            2 => Ok(Setting::Two),
            _ => Err(Error::Config(format!("setting must be 1 or 2, got {v}"))),
        }
    }

    pub fn generate(self, rng: &mut Rng, n: usize) -> Result<SimulatedSample> {
        match self {
            Setting::One => dgp_setting1(rng, n),
            Setting::Two => dgp_setting2(rng, n),
        }
    }
}

/// Brute-force Monte Carlo of the true effect.
///
/// ACE integrates `mu1(X) - mu0(X)` directly (the additive noise has mean
/// zero, so it is integrated analytically); ACET importance-weights the same
/// differences by `p(X)/E[p(X)]`.
pub fn true_effect_oracle(
    setting: Setting,
    estimand: Estimand,
    mc_size: usize,
    seed: u64,
) -> Result<f64> {
    if mc_size == 0 {
        return Err(Error::Domain(String::from("oracle needs mc_size >= 1")));
    }
    let mut rng = Rng::new(seed);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut row = [0.0f64; 10];
    for _ in 0..mc_size {
        for (j, &(mean, sd)) in COVARIATE_PARAMS.iter().enumerate() {
            row[j] = rng.normal(mean, sd)?;
        }
        let (diff, p) = match setting {
            Setting::One => {
                let d = setting1_signal(&row);
                (1.0 - 0.002 * d, setting1_propensity(d))
            }
            Setting::Two => {
                let g = setting2_signal(&row);
                (1.0 - 2.0 * g, setting2_propensity(row[4], g))
            }
        };
        match estimand {
            Estimand::Ace => {
                num += diff;
                den += 1.0;
            }
            Estimand::Acet => {
                num += p * diff;
                den += p;
            }
        }
    }
    Ok(num / den)
}

/// Estimators the Monte Carlo runner can score.
///
/// The `DrOracle*` variants plug true nuisance values (or deliberately
/// misspecified ones) into the AIPW estimator; they exist to validate
/// coverage and double robustness, not to analyze data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EstimatorKind {
    #[cfg_attr(feature = "serde", serde(rename = "naive"))]
    Naive,
    #[cfg_attr(feature = "serde", serde(rename = "ords"))]
    OrDs,
    #[cfg_attr(feature = "serde", serde(rename = "drss"))]
    DrSs,
    #[cfg_attr(feature = "serde", serde(rename = "drds"))]
    DrDs,
    #[cfg_attr(feature = "serde", serde(rename = "drmlp"))]
    DrMlp,
    #[cfg_attr(feature = "serde", serde(rename = "drcnn"))]
    DrCnn,
    #[cfg_attr(feature = "serde", serde(rename = "droracle"))]
    DrOracle,
    #[cfg_attr(feature = "serde", serde(rename = "droracle-mu0"))]
    DrOracleMuZero,
    #[cfg_attr(feature = "serde", serde(rename = "droracle-p5"))]
    DrOracleHalfP,
}

impl EstimatorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Self::Naive),
            "ords" => Ok(Self::OrDs),
            "drss" => Ok(Self::DrSs),
            "drds" => Ok(Self::DrDs),
            "drmlp" => Ok(Self::DrMlp),
            "drcnn" => Ok(Self::DrCnn),
            "droracle" => Ok(Self::DrOracle),
            "droracle-mu0" => Ok(Self::DrOracleMuZero),
            "droracle-p5" => Ok(Self::DrOracleHalfP),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::OrDs => "ords",
            Self::DrSs => "drss",
            Self::DrDs => "drds",
            Self::DrMlp => "drmlp",
            Self::DrCnn => "drcnn",
            Self::DrOracle => "droracle",
            Self::DrOracleMuZero => "droracle-mu0",
            Self::DrOracleHalfP => "droracle-p5",
        }
    }
}

/// Monte Carlo study configuration.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McConfig {
    pub setting: Setting,
    pub n: usize,
    pub replications: usize,
    pub estimators: Vec<EstimatorKind>,
    pub alpha: f64,
    pub base_seed: u64,
    /// Network architecture and training settings; the `family` field is
    /// overridden per estimator (CNN for drcnn, MLP for drmlp).
    pub nn: NnPipelineConfig,
    pub lambda_rule: LambdaRule,
    /// Propensity trimming for the post-lasso fits.
    pub trim: f64,
    /// Draws used by the true-effect oracle.
    pub oracle_draws: usize,
}

impl McConfig {
    pub fn new(setting: Setting, n: usize, replications: usize) -> Self {
        Self {
            setting,
            n,
            replications,
            estimators: alloc::vec![
                EstimatorKind::Naive,
                EstimatorKind::OrDs,
                EstimatorKind::DrSs,
                EstimatorKind::DrDs,
                EstimatorKind::DrMlp,
                EstimatorKind::DrCnn,
            ],
            alpha: 0.05,
            base_seed: 0,
            nn: NnPipelineConfig::cnn(),
            lambda_rule: LambdaRule::PlugIn,
            trim: 0.01,
            oracle_draws: 1_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config(String::from("need at least one replication")));
        }
        if self.n < 50 {
            return Err(Error::Config(format!("need n >= 50, got {}", self.n)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config(String::from("no estimators requested")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// One estimator's output in one replication.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RepEstimate {
    pub tau: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Aggregated Monte Carlo summary for one estimator.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub bias: f64,
    /// Fraction of confidence intervals containing the true effect.
    pub coverage: f64,
    /// Sample sd of the point estimates; absent when only one replication
    /// survives.
    pub mc_sd: Option<f64>,
    /// Mean of the estimated standard errors sqrt(V/n).
    pub est_sd: f64,
    /// `bias² + mc_sd²`; absent with a single replication.
    pub mse: Option<f64>,
    pub mean_tau: f64,
}

/// Full Monte Carlo report.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonteCarloReport {
    pub estimand: Estimand,
    pub true_effect: f64,
    pub summaries: Vec<EstimatorSummary>,
    pub replications_run: usize,
    pub replications_failed: usize,
    pub failures: Vec<String>,
    pub config: McConfig,
}

// replication r (1-based) owns streams r*8 .. r*8+7; stream 0 is the oracle's
const STREAM_BLOCK: u64 = 8;
const STREAM_DATA: u64 = 0;
const STREAM_CNN: u64 = 1;
const STREAM_MLP: u64 = 2;

/// Runs replication `r` (1-based) of the study: generates data from
/// substream `r·8`, fits every nuisance bundle the requested estimators
/// need, and returns one estimate per configured estimator. The result
/// depends only on `(cfg, r)`.
pub fn replicate_one(cfg: &McConfig, r: u64) -> Result<Vec<RepEstimate>> {
    let mut data_rng = Rng::substream(cfg.base_seed, r * STREAM_BLOCK + STREAM_DATA);
    let sample = cfg.setting.generate(&mut data_rng, cfg.n)?;
    let data = &sample.data;
    let n1 = data.n_treated();

    let wants = |k: EstimatorKind| cfg.estimators.contains(&k);

    let ds_bundle = if wants(EstimatorKind::OrDs) || wants(EstimatorKind::DrDs) {
        Some(select_and_refit(data, Estimand::Acet, Selection::Double, cfg.lambda_rule, cfg.trim)?)
    } else {
        None
    };
    let ss_bundle = if wants(EstimatorKind::DrSs) {
        Some(select_and_refit(data, Estimand::Acet, Selection::Single, cfg.lambda_rule, cfg.trim)?)
    } else {
        None
    };
    let cnn_bundle = if wants(EstimatorKind::DrCnn) {
        let mut nn_cfg = cfg.nn.clone();
        nn_cfg.family = NnFamily::Cnn;
        let mut rng = Rng::substream(cfg.base_seed, r * STREAM_BLOCK + STREAM_CNN);
        Some(fit_nn_nuisances(data, Estimand::Acet, &nn_cfg, &mut rng)?)
    } else {
        None
    };
    let mlp_bundle = if wants(EstimatorKind::DrMlp) {
        let mut nn_cfg = cfg.nn.clone();
        nn_cfg.family = NnFamily::Mlp;
        let mut rng = Rng::substream(cfg.base_seed, r * STREAM_BLOCK + STREAM_MLP);
        Some(fit_nn_nuisances(data, Estimand::Acet, &nn_cfg, &mut rng)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &kind in &cfg.estimators {
        let est = match kind {
            EstimatorKind::Naive => naive_estimate(data, cfg.alpha)?,
            EstimatorKind::OrDs => {
                let fit = &ds_bundle.as_ref().expect("bundle fitted above").fit;
                let tau = or_estimator(data, fit, Estimand::Acet)?;
                let variance = acet_variance(data, &fit.mu0, &fit.p, tau, n1);
                let (ci_low, ci_high) = confidence_interval(tau, variance, data.n(), cfg.alpha)?;
                RepEstimate { tau, variance, ci_low, ci_high }
            }
            EstimatorKind::DrDs => {
                from_report(aipw_acet(data, &ds_bundle.as_ref().expect("fitted").fit, cfg.alpha)?)
            }
            EstimatorKind::DrSs => {
                from_report(aipw_acet(data, &ss_bundle.as_ref().expect("fitted").fit, cfg.alpha)?)
            }
            EstimatorKind::DrCnn => {
                from_report(aipw_acet(data, &cnn_bundle.as_ref().expect("fitted").fit, cfg.alpha)?)
            }
            EstimatorKind::DrMlp => {
                from_report(aipw_acet(data, &mlp_bundle.as_ref().expect("fitted").fit, cfg.alpha)?)
            }
            EstimatorKind::DrOracle => {
                let fit = NuisanceFit {
                    mu0: sample.mu0_true.clone(),
                    mu1: None,
                    p: sample.p_true.clone(),
                    p_marginal: NuisanceFit::marginal_from_data(&data.t),
                };
                from_report(aipw_acet(data, &fit, cfg.alpha)?)
            }
            EstimatorKind::DrOracleMuZero => {
                let fit = NuisanceFit {
                    mu0: alloc::vec![0.0; data.n()],
                    mu1: None,
                    p: sample.p_true.clone(),
                    p_marginal: NuisanceFit::marginal_from_data(&data.t),
                };
                from_report(aipw_acet(data, &fit, cfg.alpha)?)
            }
            EstimatorKind::DrOracleHalfP => {
                let fit = NuisanceFit {
                    mu0: sample.mu0_true.clone(),
                    mu1: None,
                    p: alloc::vec![0.5; data.n()],
                    p_marginal: NuisanceFit::marginal_from_data(&data.t),
                };
                from_report(aipw_acet(data, &fit, cfg.alpha)?)
            }
        };
        out.push(est);
    }
    Ok(out)
}

fn from_report(r: crate::estimators::EstimateReport) -> RepEstimate {
    RepEstimate { tau: r.tau_hat, variance: r.variance, ci_low: r.ci_low, ci_high: r.ci_high }
}

/// Naive arm-mean difference with a two-sample (Welch) variance, scaled so
/// that `se = sqrt(V/n)` matches the reporting convention.
pub fn naive_estimate(data: &Dataset, alpha: f64) -> Result<RepEstimate> {
    let tau = naive_diff(data)?;
    let n1 = data.n_treated();
    let n0 = data.n() - n1;
    if n1 < 2 || n0 < 2 {
        return Err(Error::Data(String::from("naive variance needs 2+ observations per arm")));
    }
    let (mut m1, mut m0) = (0.0, 0.0);
    for i in 0..data.n() {
        if data.t[i] == 1 {
            m1 += data.y[i];
        } else {
            m0 += data.y[i];
        }
    }
    m1 /= n1 as f64;
    m0 /= n0 as f64;
    let (mut s1, mut s0) = (0.0, 0.0);
    for i in 0..data.n() {
        if data.t[i] == 1 {
            s1 += (data.y[i] - m1) * (data.y[i] - m1);
        } else {
            s0 += (data.y[i] - m0) * (data.y[i] - m0);
        }
    }
    s1 /= (n1 - 1) as f64;
    s0 /= (n0 - 1) as f64;
    let variance = data.n() as f64 * (s1 / n1 as f64 + s0 / n0 as f64);
    let (ci_low, ci_high) = confidence_interval(tau, variance, data.n(), alpha)?;
    Ok(RepEstimate { tau, variance, ci_low, ci_high })
}

/// Aggregates per-replication estimates into the study report.
///
/// `results` holds the surviving replications' estimates, aligned with
/// `cfg.estimators`; aggregation is plain arithmetic in index order, so it
/// is independent of how the replications were scheduled.
pub fn aggregate(
    cfg: &McConfig,
    true_effect: f64,
    results: &[Vec<RepEstimate>],
    failures: Vec<String>,
) -> MonteCarloReport {
    let r_ok = results.len();
    let mut summaries = Vec::with_capacity(cfg.estimators.len());
    for (k, &kind) in cfg.estimators.iter().enumerate() {
        let taus: Vec<f64> = results.iter().map(|row| row[k].tau).collect();
        let mean_tau = taus.iter().sum::<f64>() / r_ok as f64;
        let bias = mean_tau - true_effect;
        let covered = results
            .iter()
            .filter(|row| row[k].ci_low <= true_effect && true_effect <= row[k].ci_high)
            .count();
        let coverage = covered as f64 / r_ok as f64;
        let est_sd = results
            .iter()
            .map(|row| (row[k].variance / cfg.n as f64).sqrt())
            .sum::<f64>()
            / r_ok as f64;
        let mc_sd = (r_ok >= 2).then(|| {
            let ss: f64 = taus.iter().map(|t| (t - mean_tau) * (t - mean_tau)).sum();
            (ss / (r_ok - 1) as f64).sqrt()
        });
        let mse = mc_sd.map(|sd| bias * bias + sd * sd);
        summaries.push(EstimatorSummary {
            estimator: kind,
            bias,
            coverage,
            mc_sd,
            est_sd,
            mse,
            mean_tau,
        });
    }
    MonteCarloReport {
        estimand: Estimand::Acet,
        true_effect,
        summaries,
        replications_run: r_ok,
        replications_failed: failures.len(),
        failures,
        config: cfg.clone(),
    }
}

/// Sequential Monte Carlo run: oracle, replications `1..=R`, aggregation.
///
/// Replication failures are recorded and excluded; more than 5% failures
/// abort the run. Callers that parallelize replications should map
/// [`replicate_one`] over `1..=R` themselves and finish with [`aggregate`].
pub fn monte_carlo_run(cfg: &McConfig) -> Result<MonteCarloReport> {
    let true_effect = prepare_run(cfg)?;
    let mut results = Vec::with_capacity(cfg.replications);
    let mut failures = Vec::new();
    for r in 1..=cfg.replications as u64 {
        match replicate_one(cfg, r) {
            Ok(est) => results.push(est),
            Err(e) => failures.push(format!("replication {r}: {e}")),
        }
    }
    finish_run(cfg, true_effect, results, failures)
}

/// Validates the config and computes the oracle true effect. The oracle
/// draws from stream 0 of the base seed, which no replication touches.
pub fn prepare_run(cfg: &McConfig) -> Result<f64> {
    cfg.validate()?;
    true_effect_oracle(cfg.setting, Estimand::Acet, cfg.oracle_draws, cfg.base_seed)
}

/// Checks the failure budget and aggregates.
pub fn finish_run(
    cfg: &McConfig,
    true_effect: f64,
    results: Vec<Vec<RepEstimate>>,
    failures: Vec<String>,
) -> Result<MonteCarloReport> {
    let failed = failures.len();
    if failed * 20 > cfg.replications {
        return Err(Error::Convergence(format!(
            "{failed} of {} replications failed (limit 5%): {}",
            cfg.replications,
            failures.join("; ")
        )));
    }
    if results.is_empty() {
        return Err(Error::Data(String::from("no replication produced an estimate")));
    }
    Ok(aggregate(cfg, true_effect, &results, failures))
}
