//! From-scratch neural networks for nuisance fitting.
//!
//! Three trainable architectures share one flat-parameter [`Network`]
//! interface: the structured parallel-chain CNN ([`TheoreticalCnn`]), the
//! practical multi-channel CNN ([`PracticalCnn`]), and a two-hidden-layer
//! feed-forward net ([`Mlp`]). Training is mini-batch Adam on either squared
//! or logistic loss, with outcome models clipped to `[-M', M']` inside the
//! forward pass and propensity outputs mapped through the logistic function
//! and trimmed away from 0 and 1.
//!
//! Everything is deterministic given the data, the architecture, the
//! configuration, and the seed: initialization and batch shuffling draw from
//! the caller's [`Rng`] substream, and gradient accumulation runs in fixed
//! index order.

pub mod conv;
pub mod mlp;
pub mod practical;
pub mod theoretical;
mod train;

pub use conv::{conv_layer_forward, FilterMask, StructuredBias};
pub use mlp::Mlp;
pub use practical::PracticalCnn;
pub use theoretical::TheoreticalCnn;
pub use train::{loss_and_grad, loss_value, sigmoid, softplus, TrainStats};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::estimators::{Estimand, NuisanceFit};
use crate::rng::Rng;

/// Flat-parameter network trainable by the shared loop.
///
/// `forward_cached` must record whatever `backward` needs for the same
/// input; callers always pair the two on one example.
pub trait Network {
    type Scratch;

    fn new_scratch(&self) -> Self::Scratch;
    fn n_params(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Raw score for one input row.
    fn forward_cached(&self, x: &[f64], scratch: &mut Self::Scratch) -> f64;
    /// Accumulates `upstream · d(score)/d(theta)` into `grad`.
    fn backward(&self, x: &[f64], scratch: &mut Self::Scratch, upstream: f64, grad: &mut [f64]);
}

/// Training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LossKind {
    Squared,
    Logistic,
}

/// What the fitted model estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModelKind {
    /// An outcome regression mu_t(x); predictions bounded by the clip.
    Outcome,
    /// The propensity score p(x); predictions are trimmed probabilities.
    Propensity,
}

/// Convolutional architecture description.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CnnSpec {
    /// Length of each input series (the `d` of the structured variant).
    pub input_len: usize,
    /// Filter span minus one; masks have `span + 1` taps.
    pub span: usize,
    pub variant: CnnVariant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CnnVariant {
    /// The structured parallel-chain architecture: `channels` chains of
    /// `depth` layers, layer sizes `d + span·l`, linear readout.
    Theoretical { channels: usize, depth: usize },
    /// The multi-channel architecture of the numerical experiments.
    Practical {
        in_channels: usize,
        channels_per_layer: Vec<usize>,
        static_dim: usize,
        static_branch_widths: Vec<usize>,
    },
}

impl CnnSpec {
    /// Minimum depth `ceil(2d/(s-1))` for the universal-approximation
    /// regime of the structured variant.
    pub fn min_universal_depth(input_len: usize, span: usize) -> usize {
        (2 * input_len).div_ceil(span.saturating_sub(1).max(1))
    }
}

/// Feed-forward architecture: two hidden ReLU layers.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: [usize; 2],
}

/// A trainable architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Arch {
    Cnn(CnnSpec),
    Mlp(MlpSpec),
}

/// Total parameter count of the structured variant, counting shared weights
/// once per position they occupy:
///
/// `Q = E·( d(1+s)(L-1) + s(1+s)L(L-1)/2 + (s+3)(d+sL) )`
///
/// Equivalently, by direct slot enumeration: every hidden layer `l` carries
/// its `(s+1)`-tap mask once per output coordinate (`(s+1)·d_l` slots,
/// `d_l = d+sl`), the structured biases of layers `1..L-1` contribute no
/// additional slots, and layer `L` adds its unconstrained bias (`d_L`) plus
/// the readout vector (`d_L`).
pub fn parameter_count(spec: &CnnSpec) -> Result<u64> {
    let CnnVariant::Theoretical { channels, depth } = &spec.variant else {
        return Err(Error::Unsupported(String::from(
            "parameter count formula applies to the theoretical variant only",
        )));
    };
    let (e, l) = (*channels as u64, *depth as u64);
    let (d, s) = (spec.input_len as u64, spec.span as u64);
    if s < 2 || s > d || l == 0 || e == 0 {
        return Err(Error::Config(format!(
            "invalid theoretical spec: d={d}, s={s}, L={l}, E={e}"
        )));
    }
    Ok(e * (d * (1 + s) * (l - 1) + s * (1 + s) * l * (l - 1) / 2 + (s + 3) * (d + s * l)))
}

/// Channel and depth schedule for a sample of size `n` with input length
/// `d`: `E = max(1, round(c_E · n^{d/(2d+4)}))` and
/// `L = max(1, round(c_L · n^{1/(4d+8)} · (ln n)^2))`.
pub fn rate_schedule(n: usize, d: usize, c_e: f64, c_l: f64) -> Result<(usize, usize)> {
    if n < 2 || d < 2 {
        return Err(Error::Domain(format!("rate schedule requires n >= 2, d >= 2 (n={n}, d={d})")));
    }
    if !(c_e > 0.0) || !(c_l > 0.0) {
        return Err(Error::Domain(String::from("rate constants must be positive")));
    }
    let nf = n as f64;
    let df = d as f64;
    let log_n = libm::log(nf);
    let e = (c_e * libm::pow(nf, df / (2.0 * df + 4.0))).round().max(1.0);
    let l = (c_l * libm::pow(nf, 1.0 / (4.0 * df + 8.0)) * log_n * log_n).round().max(1.0);
    Ok((e as usize, l as usize))
}

/// Output clipping bound for outcome models.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ClipBound {
    /// `M' = 2·max_i |y_i|` computed on the training split.
    Auto,
    /// Explicit `M' > 0`.
    Fixed(f64),
}

/// Optimizer hyperparameters and training-loop controls.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub loss: LossKind,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after `patience` epochs with best-loss improvement below this.
    pub early_stop_tol: f64,
    pub patience: usize,
    /// Outcome-model output bound; ignored for logistic losses.
    pub clip: ClipBound,
    /// Propensity trimming: predictions clamped to `[trim, 1-trim]`.
    pub trim: f64,
}

impl TrainConfig {
    /// Defaults for an outcome regression (squared loss).
    pub fn outcome() -> Self {
        Self {
            loss: LossKind::Squared,
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 64,
            epochs: 200,
            early_stop_tol: 1e-6,
            patience: 10,
            clip: ClipBound::Auto,
            trim: 0.01,
        }
    }

    /// Defaults for a propensity model (logistic loss).
    pub fn propensity() -> Self {
        Self { loss: LossKind::Logistic, ..Self::outcome() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.trim > 0.0 && self.trim < 0.5) {
            return Err(Error::Config(format!("trim must be in (0, 0.5), got {}", self.trim)));
        }
        if let ClipBound::Fixed(m) = self.clip {
            if !(m > 0.0) {
                return Err(Error::Config(format!("clip bound must be positive, got {m}")));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(String::from("batch size and epochs must be >= 1")));
        }
        if !(self.step_size > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(Error::Config(String::from("invalid optimizer hyperparameters")));
        }
        Ok(())
    }
}

/// Per-column min-max scaling to `[-1, 1]`, fitted on the training split and
/// reused verbatim at prediction time. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Self {
        let mut mins = alloc::vec![f64::INFINITY; x.cols()];
        let mut maxs = alloc::vec![f64::NEG_INFINITY; x.cols()];
        for i in 0..x.rows() {
            for (j, &v) in x.row(i).iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Self { mins, maxs }
    }

    pub fn transform_into(&self, row: &[f64], out: &mut [f64]) {
        for (j, (&v, o)) in row.iter().zip(out.iter_mut()).enumerate() {
            let span = self.maxs[j] - self.mins[j];
            *o = if span > 0.0 { 2.0 * (v - self.mins[j]) / span - 1.0 } else { 0.0 };
        }
    }

    pub fn transform_matrix(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let mut buf = alloc::vec![0.0; x.cols()];
            self.transform_into(x.row(i), &mut buf);
            out.row_mut(i).copy_from_slice(&buf);
        }
        out
    }
}

/// One of the three trainable network types.
#[derive(Debug, Clone)]
pub enum AnyNetwork {
    Theoretical(TheoreticalCnn),
    Practical(PracticalCnn),
    Mlp(Mlp),
}

impl AnyNetwork {
    /// Raw (unscaled-output) score on an already-scaled input row.
    pub fn raw_score(&self, x_scaled: &[f64]) -> Result<f64> {
        match self {
            AnyNetwork::Theoretical(n) => n.forward(x_scaled),
            AnyNetwork::Practical(n) => n.forward(x_scaled),
            AnyNetwork::Mlp(n) => n.forward(x_scaled),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            AnyNetwork::Theoretical(n) => n.params(),
            AnyNetwork::Practical(n) => n.params(),
            AnyNetwork::Mlp(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            AnyNetwork::Theoretical(n) => n.params_mut(),
            AnyNetwork::Practical(n) => n.params_mut(),
            AnyNetwork::Mlp(n) => n.params_mut(),
        }
    }
}

/// A trained nuisance model: network, input scaler, and output mapping.
#[derive(Debug, Clone)]
pub struct NuisanceModel {
    pub net: AnyNetwork,
    pub kind: ModelKind,
    pub loss: LossKind,
    /// Output bound `M'` for squared-loss outcome models.
    pub clip: Option<f64>,
    /// Probability trimming for propensity models.
    pub trim: f64,
    pub scaler: Scaler,
    pub stats: TrainStats,
}

impl NuisanceModel {
    /// Prediction for one raw (unscaled) covariate row.
    ///
    /// Outcome models return a conditional-mean estimate (clipped to
    /// `[-M', M']` under squared loss, a probability under logistic loss);
    /// propensity models return a probability in `[trim, 1-trim]`.
    pub fn predict(&self, x_row: &[f64]) -> Result<f64> {
        let mut scaled = alloc::vec![0.0; x_row.len()];
        self.scaler.transform_into(x_row, &mut scaled);
        let raw = self.net.raw_score(&scaled)?;
        Ok(self.map_output(raw))
    }

    fn map_output(&self, raw: f64) -> f64 {
        match (self.kind, self.loss) {
            (ModelKind::Outcome, LossKind::Squared) => {
                let b = self.clip.expect("squared outcome models always carry a clip bound");
                raw.clamp(-b, b)
            }
            (ModelKind::Outcome, LossKind::Logistic) => sigmoid(raw),
            (ModelKind::Propensity, _) => sigmoid(raw).clamp(self.trim, 1.0 - self.trim),
        }
    }

    /// Predictions for every row of a dataset.
    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<f64>> {
        (0..data.n()).map(|i| self.predict(data.x.row(i))).collect()
    }
}

/// Trains one nuisance model by empirical risk minimization.
///
/// The data is used exactly as passed; callers restrict to the relevant
/// treatment arm beforehand (controls for `mu_0`, treated for `mu_1`, the
/// full sample for the propensity). The returned parameters are the epoch
/// snapshot with the lowest full-sample training loss, so the final training
/// loss never exceeds the loss at initialization.
pub fn train_nuisance(
    data: &Dataset,
    arch: &Arch,
    kind: ModelKind,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<NuisanceModel> {
    cfg.validate()?;
    if data.n() == 0 {
        return Err(Error::Data(String::from("empty training set")));
    }
    if kind == ModelKind::Propensity && cfg.loss != LossKind::Logistic {
        return Err(Error::Config(String::from("propensity models train with logistic loss")));
    }

    let targets: Vec<f64> = match kind {
        ModelKind::Outcome => data.y.clone(),
        ModelKind::Propensity => data.t.iter().map(|&t| f64::from(t)).collect(),
    };
    if cfg.loss == LossKind::Logistic {
        if let Some(bad) = targets.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain(format!(
                "logistic loss requires binary targets, found {bad}"
            )));
        }
    }

    let clip = match (kind, cfg.loss) {
        (ModelKind::Outcome, LossKind::Squared) => Some(match cfg.clip {
            ClipBound::Fixed(m) => m,
            ClipBound::Auto => {
                let m = targets.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                // degenerate all-zero targets still need a positive bound
                if m > 0.0 { 2.0 * m } else { 1.0 }
            }
        }),
        _ => None,
    };

    let scaler = Scaler::fit(&data.x);
    let x_scaled = scaler.transform_matrix(&data.x);
    let prob = train::TrainProblem { x: &x_scaled, targets: &targets, clip };
    let loop_cfg = train::LoopConfig {
        loss: cfg.loss,
        step_size: cfg.step_size,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        adam_eps: cfg.adam_eps,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        early_stop_tol: cfg.early_stop_tol,
        patience: cfg.patience,
    };

    let dim = data.dim();
    let (net, stats) = match arch {
        Arch::Cnn(spec) => match &spec.variant {
            CnnVariant::Theoretical { channels, depth } => {
                if spec.input_len != dim {
                    return Err(Error::Shape(format!(
                        "network input length {} does not match data dimension {dim}",
                        spec.input_len
                    )));
                }
                let mut net =
                    TheoreticalCnn::init(spec.input_len, spec.span, *depth, *channels, rng)?;
                let stats = train::train_loop(&mut net, &prob, &loop_cfg, rng)?;
                (AnyNetwork::Theoretical(net), stats)
            }
            CnnVariant::Practical {
                in_channels,
                channels_per_layer,
                static_dim,
                static_branch_widths,
            } => {
                if in_channels * spec.input_len + static_dim != dim {
                    return Err(Error::Shape(format!(
                        "network input {}x{}+{} does not match data dimension {dim}",
                        in_channels, spec.input_len, static_dim
                    )));
                }
                let mut net = PracticalCnn::init(
                    *in_channels,
                    spec.input_len,
                    spec.span,
                    channels_per_layer,
                    *static_dim,
                    static_branch_widths,
                    rng,
                )?;
                let stats = train::train_loop(&mut net, &prob, &loop_cfg, rng)?;
                (AnyNetwork::Practical(net), stats)
            }
        },
        Arch::Mlp(spec) => {
            if spec.input_dim != dim {
                return Err(Error::Shape(format!(
                    "network input length {} does not match data dimension {dim}",
                    spec.input_dim
                )));
            }
            let mut net = Mlp::init(spec.input_dim, spec.hidden, rng)?;
            let stats = train::train_loop(&mut net, &prob, &loop_cfg, rng)?;
            (AnyNetwork::Mlp(net), stats)
        }
    };

    Ok(NuisanceModel { net, kind, loss: cfg.loss, clip, trim: cfg.trim, scaler, stats })
}

/// Which network family the nuisance pipeline should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NnFamily {
    Cnn,
    Mlp,
}

/// Architecture and training settings for the full nuisance pipeline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NnPipelineConfig {
    pub family: NnFamily,
    pub span: usize,
    pub outcome_channels: Vec<usize>,
    pub propensity_channels: Vec<usize>,
    pub outcome_hidden: [usize; 2],
    pub propensity_hidden: [usize; 2],
    pub static_branch_widths: Vec<usize>,
    pub outcome_train: TrainConfig,
    pub propensity_train: TrainConfig,
}

impl NnPipelineConfig {
    pub fn cnn() -> Self {
        Self {
            family: NnFamily::Cnn,
            span: 2,
            outcome_channels: alloc::vec![128, 16],
            propensity_channels: alloc::vec![32, 8],
            outcome_hidden: [128, 80],
            propensity_hidden: [32, 8],
            static_branch_widths: alloc::vec![16],
            outcome_train: TrainConfig::outcome(),
            propensity_train: TrainConfig::propensity(),
        }
    }

    pub fn mlp() -> Self {
        Self { family: NnFamily::Mlp, ..Self::cnn() }
    }
}

/// The trained models behind a [`NuisanceFit`].
#[derive(Debug, Clone)]
pub struct FittedNuisances {
    pub fit: NuisanceFit,
    pub mu0_model: NuisanceModel,
    pub mu1_model: Option<NuisanceModel>,
    pub p_model: NuisanceModel,
}

fn cnn_arch_for(data: &Dataset, cfg: &NnPipelineConfig, channels: &[usize]) -> Result<Arch> {
    let (in_channels, series_len, static_dim) = match &data.series_layout {
        // without a layout, all covariates form one series in column order
        None => (1, data.dim(), 0),
        Some(layout) => {
            if layout.series_lens.is_empty() {
                return Err(Error::Config(String::from(
                    "convolutional models need at least one series",
                )));
            }
            let len = layout.common_series_len().ok_or_else(|| {
                Error::Config(String::from(
                    "convolutional models need all series to share one length",
                ))
            })?;
            (layout.series_lens.len(), len, layout.n_static)
        }
    };
    let static_branch_widths =
        if static_dim > 0 { cfg.static_branch_widths.clone() } else { Vec::new() };
    Ok(Arch::Cnn(CnnSpec {
        input_len: series_len,
        span: cfg.span,
        variant: CnnVariant::Practical {
            in_channels,
            channels_per_layer: channels.to_vec(),
            static_dim,
            static_branch_widths,
        },
    }))
}

/// Trains all nuisance models for the requested estimand and evaluates them
/// on every observation.
///
/// `mu_0` trains on the controls, `mu_1` (ACE only) on the treated, and the
/// propensity on the full sample; all three consume the caller's `rng`
/// sequentially, so one substream per replication suffices.
pub fn fit_nn_nuisances(
    data: &Dataset,
    estimand: Estimand,
    cfg: &NnPipelineConfig,
    rng: &mut Rng,
) -> Result<FittedNuisances> {
    let (arch_outcome, arch_prop) = match cfg.family {
        NnFamily::Cnn => (
            cnn_arch_for(data, cfg, &cfg.outcome_channels)?,
            cnn_arch_for(data, cfg, &cfg.propensity_channels)?,
        ),
        NnFamily::Mlp => (
            Arch::Mlp(MlpSpec { input_dim: data.dim(), hidden: cfg.outcome_hidden }),
            Arch::Mlp(MlpSpec { input_dim: data.dim(), hidden: cfg.propensity_hidden }),
        ),
    };

    let controls = data.subset(&data.arm_indices(0));
    if controls.n() == 0 {
        return Err(Error::Data(String::from("no control observations to fit mu0")));
    }
    let mu0_model =
        train_nuisance(&controls, &arch_outcome, ModelKind::Outcome, &cfg.outcome_train, rng)?;

    let mu1_model = if estimand == Estimand::Ace {
        let treated = data.subset(&data.arm_indices(1));
        if treated.n() == 0 {
            return Err(Error::Data(String::from("no treated observations to fit mu1")));
        }
        Some(train_nuisance(
            &treated,
            &arch_outcome,
            ModelKind::Outcome,
            &cfg.outcome_train,
            rng,
        )?)
    } else {
        None
    };

    let p_model =
        train_nuisance(data, &arch_prop, ModelKind::Propensity, &cfg.propensity_train, rng)?;

    let mu0 = mu0_model.predict_all(data)?;
    let mu1 = mu1_model.as_ref().map(|m| m.predict_all(data)).transpose()?;
    let p = p_model.predict_all(data)?;
    let fit = NuisanceFit { mu0, mu1, p, p_marginal: NuisanceFit::marginal_from_data(&data.t) };
    Ok(FittedNuisances { fit, mu0_model, mu1_model, p_model })
}
