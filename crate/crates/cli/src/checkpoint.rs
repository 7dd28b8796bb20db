//! Versioned model checkpoints.
//!
//! A checkpoint is a JSON document holding the architecture description,
//! the flat parameter vector, the input scaler, and the output mapping
//! (clip bound or trimming). Floats are stored as shortest round-trip
//! decimals, so `save` followed by `load` reproduces every 64-bit value
//! exactly.

use std::path::Path;

use aipw_core::nn::{
    AnyNetwork, LossKind, Mlp, ModelKind, NuisanceModel, PracticalCnn, Scaler,
    TheoreticalCnn, TrainStats,
};
use serde::{Deserialize, Serialize};

use crate::error::AppError;

const FORMAT_NAME: &str = "aipw-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
enum ArchDoc {
    Theoretical { input_len: usize, span: usize, depth: usize, channels: usize },
    Practical {
        in_channels: usize,
        series_len: usize,
        span: usize,
        conv_channels: Vec<usize>,
        static_dim: usize,
        static_widths: Vec<usize>,
    },
    Mlp { input_dim: usize, hidden: [usize; 2] },
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    kind: ModelKind,
    loss: LossKind,
    clip: Option<f64>,
    trim: f64,
    stats: TrainStats,
    scaler: Scaler,
    arch: ArchDoc,
    params: Vec<f64>,
}

/// Writes a trained nuisance model to `path`.
pub fn save_model(model: &NuisanceModel, path: &Path) -> Result<(), AppError> {
    let arch = match &model.net {
        AnyNetwork::Theoretical(n) => ArchDoc::Theoretical {
            input_len: n.input_len(),
            span: n.span(),
            depth: n.depth(),
            channels: n.channels(),
        },
        AnyNetwork::Practical(n) => ArchDoc::Practical {
            in_channels: n.in_channels(),
            series_len: n.series_len(),
            span: n.span(),
            conv_channels: n.conv_channels().to_vec(),
            static_dim: n.static_dim(),
            static_widths: n.static_widths().to_vec(),
        },
        AnyNetwork::Mlp(n) => ArchDoc::Mlp { input_dim: n.input_dim(), hidden: n.widths() },
    };
    let doc = CheckpointDoc {
        format: FORMAT_NAME.to_owned(),
        version: FORMAT_VERSION,
        kind: model.kind,
        loss: model.loss,
        clip: model.clip,
        trim: model.trim,
        stats: model.stats,
        scaler: model.scaler.clone(),
        arch,
        params: model.net.params().to_vec(),
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| AppError::Data(format!("checkpoint serialization failed: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| AppError::Data(format!("cannot write '{}': {e}", path.display())))
}

/// Reads a model checkpoint back into a usable [`NuisanceModel`].
pub fn load_model(path: &Path) -> Result<NuisanceModel, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Data(format!("cannot read '{}': {e}", path.display())))?;
    let doc: CheckpointDoc = serde_json::from_str(&text)
        .map_err(|e| AppError::Data(format!("'{}' is not a model checkpoint: {e}", path.display())))?;
    if doc.format != FORMAT_NAME {
        return Err(AppError::Data(format!(
            "'{}' has format '{}', expected '{FORMAT_NAME}'",
            path.display(),
            doc.format
        )));
    }
    if doc.version != FORMAT_VERSION {
        return Err(AppError::Data(format!(
            "'{}' is checkpoint version {}, this build reads version {FORMAT_VERSION}",
            path.display(),
            doc.version
        )));
    }

    let mut net = match doc.arch {
        ArchDoc::Theoretical { input_len, span, depth, channels } => AnyNetwork::Theoretical(
            TheoreticalCnn::zeros(input_len, span, depth, channels).map_err(AppError::from)?,
        ),
        ArchDoc::Practical {
            in_channels,
            series_len,
            span,
            conv_channels,
            static_dim,
            static_widths,
        } => AnyNetwork::Practical(
            PracticalCnn::zeros(
                in_channels,
                series_len,
                span,
                &conv_channels,
                static_dim,
                &static_widths,
            )
            .map_err(AppError::from)?,
        ),
        ArchDoc::Mlp { input_dim, hidden } => {
            AnyNetwork::Mlp(Mlp::zeros(input_dim, hidden).map_err(AppError::from)?)
        }
    };
    let slots = net.params_mut();
    if slots.len() != doc.params.len() {
        return Err(AppError::Data(format!(
            "'{}' carries {} parameters but the architecture has {}",
            path.display(),
            doc.params.len(),
            slots.len()
        )));
    }
    slots.copy_from_slice(&doc.params);
    Ok(NuisanceModel {
        net,
        kind: doc.kind,
        loss: doc.loss,
        clip: doc.clip,
        trim: doc.trim,
        scaler: doc.scaler,
        stats: doc.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use aipw_core::nn::{train_nuisance, Arch, CnnSpec, CnnVariant, MlpSpec, TrainConfig};
    use aipw_core::{Dataset, Matrix, Rng};

    fn trained_model(arch: &Arch) -> NuisanceModel {
        let mut rng = Rng::new(77);
        let n = 60;
        let mut x = Matrix::zeros(n, 6);
        let mut y = Vec::new();
        for i in 0..n {
            for j in 0..6 {
                x.set(i, j, rng.uniform(-1.0, 1.0));
            }
            y.push(x.get(i, 0) - 0.5 * x.get(i, 3) + rng.normal(0.0, 0.1).unwrap());
        }
        let data = Dataset::new(y, vec![0; n], x, None).unwrap();
        let mut cfg = TrainConfig::outcome();
        cfg.epochs = 5;
        train_nuisance(&data, arch, ModelKind::Outcome, &cfg, &mut Rng::new(5)).unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_all_architectures() {
        let archs = [
            Arch::Cnn(CnnSpec {
                input_len: 6,
                span: 2,
                variant: CnnVariant::Practical {
                    in_channels: 1,
                    channels_per_layer: vec![4, 2],
                    static_dim: 0,
                    static_branch_widths: vec![],
                },
            }),
            Arch::Cnn(CnnSpec {
                input_len: 6,
                span: 2,
                variant: CnnVariant::Theoretical { channels: 2, depth: 2 },
            }),
            Arch::Mlp(MlpSpec { input_dim: 6, hidden: [5, 3] }),
        ];
        for arch in &archs {
            let model = trained_model(arch);
            let f = tempfile::NamedTempFile::new().unwrap();
            save_model(&model, f.path()).unwrap();
            let loaded = load_model(f.path()).unwrap();
            // parameters restore bit-exactly
            assert_eq!(model.net.params().len(), loaded.net.params().len());
            for (a, b) in model.net.params().iter().zip(loaded.net.params()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(model.clip, loaded.clip);
            // predictions are identical through the whole pipeline
            let probe: Vec<f64> = (0..6).map(|j| 0.1 * j as f64 - 0.2).collect();
            assert_eq!(
                model.predict(&probe).unwrap().to_bits(),
                loaded.predict(&probe).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn version_and_format_are_checked() {
        let model = trained_model(&Arch::Mlp(MlpSpec { input_dim: 6, hidden: [3, 2] }));
        let f = tempfile::NamedTempFile::new().unwrap();
        save_model(&model, f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();

        let bumped = text.replace("\"version\": 1", "\"version\": 999");
        std::fs::write(f.path(), bumped).unwrap();
        assert!(load_model(f.path()).unwrap_err().to_string().contains("version"));

        std::fs::write(f.path(), "{\"not\": \"a checkpoint\"}").unwrap();
        assert!(load_model(f.path()).is_err());
    }
}
