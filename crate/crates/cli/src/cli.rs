//! Command-line definitions and their translation into run options.

use std::path::PathBuf;

use aipw_core::estimators::Estimand;
use aipw_core::nn::{ClipBound, NnPipelineConfig};
use aipw_core::postlasso::LambdaRule;
use aipw_core::sim::{EstimatorKind, McConfig, Setting};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::csv_io::{parse_layout, ColumnLayout};
use crate::error::AppError;
use crate::report::Format;

/// Doubly robust causal effect estimation with neural and post-lasso
/// nuisance models.
#[derive(Debug, Parser)]
#[command(name = "aipw", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo study on one of the built-in simulation settings.
    Simulate(SimulateArgs),
    /// Estimate a causal effect from a CSV dataset.
    Estimate(EstimateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimandArg {
    Ace,
    Acet,
}

impl From<EstimandArg> for Estimand {
    fn from(v: EstimandArg) -> Self {
        match v {
            EstimandArg::Ace => Estimand::Ace,
            EstimandArg::Acet => Estimand::Acet,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LambdaArg {
    /// Plug-in penalty from the target scale.
    Plugin,
    /// 5-fold cross-validation unless --cv-folds overrides.
    Cv,
}

/// Training and architecture overrides shared by both subcommands.
#[derive(Debug, Args)]
pub struct NnOverrideArgs {
    /// Training epochs for both nuisance networks.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Convolution filter span S (masks have S+1 taps).
    #[arg(long)]
    pub span: Option<usize>,
    /// Outcome CNN channels, e.g. 128,16.
    #[arg(long)]
    pub outcome_channels: Option<String>,
    /// Propensity CNN channels, e.g. 32,8.
    #[arg(long)]
    pub propensity_channels: Option<String>,
    /// Outcome MLP hidden widths, e.g. 128,80.
    #[arg(long)]
    pub outcome_hidden: Option<String>,
    /// Propensity MLP hidden widths, e.g. 32,8.
    #[arg(long)]
    pub propensity_hidden: Option<String>,
}

impl NnOverrideArgs {
    fn apply(&self, nn: &mut NnPipelineConfig, trim: f64, clip: ClipBound) -> Result<(), AppError> {
        if let Some(e) = self.epochs {
            nn.outcome_train.epochs = e;
            nn.propensity_train.epochs = e;
        }
        if let Some(b) = self.batch_size {
            nn.outcome_train.batch_size = b;
            nn.propensity_train.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            nn.outcome_train.step_size = lr;
            nn.propensity_train.step_size = lr;
        }
        if let Some(p) = self.patience {
            nn.outcome_train.patience = p;
            nn.propensity_train.patience = p;
        }
        if let Some(s) = self.span {
            nn.span = s;
        }
        if let Some(v) = &self.outcome_channels {
            nn.outcome_channels = parse_usize_list(v, "--outcome-channels")?;
        }
        if let Some(v) = &self.propensity_channels {
            nn.propensity_channels = parse_usize_list(v, "--propensity-channels")?;
        }
        if let Some(v) = &self.outcome_hidden {
            nn.outcome_hidden = parse_pair(v, "--outcome-hidden")?;
        }
        if let Some(v) = &self.propensity_hidden {
            nn.propensity_hidden = parse_pair(v, "--propensity-hidden")?;
        }
        nn.outcome_train.trim = trim;
        nn.propensity_train.trim = trim;
        nn.outcome_train.clip = clip;
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation setting (1 or 2).
    #[arg(long)]
    pub setting: u8,
    /// Sample size per replication.
    #[arg(long)]
    pub n: usize,
    /// Number of replications.
    #[arg(long)]
    pub reps: usize,
    /// Comma-separated estimators: naive, ords, drss, drds, drmlp, drcnn
    /// (plus droracle, droracle-mu0, droracle-p5 for validation runs).
    #[arg(long, default_value = "naive,ords,drss,drds,drmlp,drcnn")]
    pub estimators: String,
    /// Confidence level is 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Worker threads for replications (1 = fully sequential).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Propensity trimming bound.
    #[arg(long, default_value_t = 0.01)]
    pub trim: f64,
    /// Penalty rule for the post-lasso estimators.
    #[arg(long, value_enum, default_value = "plugin")]
    pub lambda: LambdaArg,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    /// Monte Carlo draws for the true-effect oracle.
    #[arg(long, default_value_t = 1_000_000)]
    pub oracle_draws: usize,
    #[command(flatten)]
    pub nn: NnOverrideArgs,
}

pub struct SimulateOpts {
    pub cfg: McConfig,
    pub threads: usize,
    pub out: PathBuf,
    pub format: Format,
}

impl SimulateArgs {
    pub fn into_opts(self) -> Result<SimulateOpts, AppError> {
        let setting = Setting::from_index(self.setting)?;
        let mut cfg = McConfig::new(setting, self.n, self.reps);
        cfg.alpha = self.alpha;
        cfg.base_seed = self.seed;
        cfg.trim = self.trim;
        cfg.oracle_draws = self.oracle_draws;
        cfg.lambda_rule = match self.lambda {
            LambdaArg::Plugin => LambdaRule::PlugIn,
            LambdaArg::Cv => LambdaRule::CrossValidated { folds: self.cv_folds },
        };
        cfg.estimators = self
            .estimators
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(EstimatorKind::parse)
            .collect::<Result<_, _>>()?;
        self.nn.apply(&mut cfg.nn, self.trim, ClipBound::Auto)?;
        if self.threads == 0 {
            return Err(AppError::Usage("--threads must be at least 1".into()));
        }
        Ok(SimulateOpts { cfg, threads: self.threads, out: self.out, format: self.format })
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV dataset path.
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column name.
    #[arg(long)]
    pub outcome: String,
    /// Treatment column name (values 0/1).
    #[arg(long)]
    pub treat: String,
    #[arg(long, value_enum)]
    pub estimand: EstimandArg,
    /// Estimator: naive, ords, drss, drds, drmlp, or drcnn.
    #[arg(long)]
    pub method: String,
    /// Time series as name=col1,col2,... (repeatable, time order).
    #[arg(long)]
    pub series: Vec<String>,
    /// Static covariate columns, comma separated.
    #[arg(long = "static")]
    pub statics: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Propensity trimming bound.
    #[arg(long, default_value_t = 0.01)]
    pub trim: f64,
    /// Outcome clipping bound M' (default: 2 x max |y| on the training arm).
    #[arg(long)]
    pub mprime: Option<f64>,
    #[arg(long, value_enum, default_value = "plugin")]
    pub lambda: LambdaArg,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Directory for model checkpoints (neural methods only).
    #[arg(long)]
    pub save_models: Option<PathBuf>,
    #[command(flatten)]
    pub nn: NnOverrideArgs,
}

pub struct EstimateOpts {
    pub data: PathBuf,
    pub outcome: String,
    pub treat: String,
    pub layout: Option<ColumnLayout>,
    pub estimand: Estimand,
    pub method: EstimatorKind,
    pub alpha: f64,
    pub seed: u64,
    pub trim: f64,
    pub lambda_rule: LambdaRule,
    pub nn: NnPipelineConfig,
    pub out: PathBuf,
    pub format: Format,
    pub save_models: Option<PathBuf>,
}

impl EstimateArgs {
    pub fn into_opts(self) -> Result<EstimateOpts, AppError> {
        let method = EstimatorKind::parse(&self.method)?;
        if matches!(
            method,
            EstimatorKind::DrOracle | EstimatorKind::DrOracleMuZero | EstimatorKind::DrOracleHalfP
        ) {
            return Err(AppError::Usage(
                "oracle estimators need simulated ground truth; use the simulate subcommand"
                    .into(),
            ));
        }
        if self.save_models.is_some()
            && !matches!(method, EstimatorKind::DrCnn | EstimatorKind::DrMlp)
        {
            return Err(AppError::Usage(
                "--save-models applies to the neural methods (drcnn, drmlp) only".into(),
            ));
        }
        let layout = parse_layout(&self.series, self.statics.as_deref())?;
        let mut nn = NnPipelineConfig::cnn();
        let clip = match self.mprime {
            Some(m) if m > 0.0 => ClipBound::Fixed(m),
            Some(m) => {
                return Err(AppError::Usage(format!("--mprime must be positive, got {m}")))
            }
            None => ClipBound::Auto,
        };
        self.nn.apply(&mut nn, self.trim, clip)?;
        Ok(EstimateOpts {
            data: self.data,
            outcome: self.outcome,
            treat: self.treat,
            layout,
            estimand: self.estimand.into(),
            method,
            alpha: self.alpha,
            seed: self.seed,
            trim: self.trim,
            lambda_rule: match self.lambda {
                LambdaArg::Plugin => LambdaRule::PlugIn,
                LambdaArg::Cv => LambdaRule::CrossValidated { folds: self.cv_folds },
            },
            nn,
            out: self.out,
            format: self.format,
            save_models: self.save_models,
        })
    }
}

fn parse_usize_list(text: &str, flag: &str) -> Result<Vec<usize>, AppError> {
    let list: Result<Vec<usize>, _> =
        text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect();
    match list {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(AppError::Usage(format!("{flag}: expected a comma-separated list, got '{text}'"))),
    }
}

fn parse_pair(text: &str, flag: &str) -> Result<[usize; 2], AppError> {
    let v = parse_usize_list(text, flag)?;
    v.try_into()
        .map_err(|_| AppError::Usage(format!("{flag}: expected exactly two widths, got '{text}'")))
}
