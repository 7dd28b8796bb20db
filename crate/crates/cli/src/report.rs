//! Report serialization: JSON (default) and CSV.
//!
//! Floats serialize in shortest round-trip form, so parsing a report back
//! reproduces every numeric field bit-exactly. Reports are fully
//! deterministic functions of the run configuration and seed.

use std::path::Path;

use aipw_core::estimators::EstimateReport;
use aipw_core::sim::MonteCarloReport;
use serde::Serialize;

use crate::error::AppError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Single-analysis report document.
#[derive(Debug, Serialize)]
pub struct EstimateDocument<'a> {
    pub tool_version: &'static str,
    pub seed: u64,
    pub method: &'a str,
    #[serde(flatten)]
    pub report: &'a EstimateReport,
}

/// Monte Carlo report document.
#[derive(Debug, Serialize)]
pub struct SimulateDocument<'a> {
    pub tool_version: &'static str,
    pub seed: u64,
    #[serde(flatten)]
    pub report: &'a MonteCarloReport,
}

fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    std::fs::write(path, text)
        .map_err(|e| AppError::Data(format!("cannot write '{}': {e}", path.display())))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a single-analysis report.
pub fn write_estimate_report(
    doc: &EstimateDocument<'_>,
    path: &Path,
    format: Format,
) -> Result<(), AppError> {
    let text = match format {
        Format::Json => to_json(doc)?,
        Format::Csv => {
            let r = doc.report;
            format!(
                "estimand,tau_hat,variance,se,alpha,ci_low,ci_high,n,n1,n0\n\
                 {},{},{},{},{},{},{},{},{},{}\n",
                r.estimand, r.tau_hat, r.variance, r.se, r.alpha, r.ci_low, r.ci_high, r.n, r.n1,
                r.n0
            )
        }
    };
    write_text(path, &text)
}

/// Writes a Monte Carlo report. The CSV variant emits one row per
/// estimator under the fixed header
/// `estimator,bias,coverage,mc_sd,est_sd,mse`.
pub fn write_mc_report(
    doc: &SimulateDocument<'_>,
    path: &Path,
    format: Format,
) -> Result<(), AppError> {
    let text = match format {
        Format::Json => to_json(doc)?,
        Format::Csv => {
            let mut out = String::from("estimator,bias,coverage,mc_sd,est_sd,mse\n");
            for s in &doc.report.summaries {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    s.estimator.name(),
                    s.bias,
                    s.coverage,
                    opt(s.mc_sd),
                    s.est_sd,
                    opt(s.mse)
                ));
            }
            out
        }
    };
    write_text(path, &text)
}

fn to_json<T: Serialize>(doc: &T) -> Result<String, AppError> {
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| AppError::Data(format!("report serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aipw_core::estimators::Estimand;

    fn sample_report() -> EstimateReport {
        EstimateReport {
            estimand: Estimand::Acet,
            tau_hat: -5.680805514226915,
            variance: 7202.125,
            se: 1.2001770569,
            alpha: 0.05,
            ci_low: -8.033,
            ci_high: -3.328,
            n: 5000,
            n1: 2463,
            n0: 2537,
        }
    }

    #[test]
    fn json_round_trips_bitwise() {
        let report = sample_report();
        let doc = EstimateDocument {
            tool_version: TOOL_VERSION,
            seed: 7,
            method: "drcnn",
            report: &report,
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_estimate_report(&doc, f.path(), Format::Json).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["tau_hat"].as_f64().unwrap().to_bits(), report.tau_hat.to_bits());
        assert_eq!(value["se"].as_f64().unwrap().to_bits(), report.se.to_bits());
        assert_eq!(value["method"], "drcnn");
        assert_eq!(value["seed"], 7);
        assert_eq!(value["estimand"], "ACET");
    }

    #[test]
    fn estimate_csv_shape() {
        let report = sample_report();
        let doc = EstimateDocument {
            tool_version: TOOL_VERSION,
            seed: 7,
            method: "naive",
            report: &report,
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_estimate_report(&doc, f.path(), Format::Csv).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("estimand,tau_hat,variance,se,alpha,ci_low,ci_high,n,n1,n0\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn unwritable_path_errors_with_path() {
        let report = sample_report();
        let doc = EstimateDocument {
            tool_version: TOOL_VERSION,
            seed: 7,
            method: "naive",
            report: &report,
        };
        let err = write_estimate_report(
            &doc,
            Path::new("/nonexistent-dir-xyz/report.json"),
            Format::Json,
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir-xyz/report.json"));
        assert_eq!(err.exit_code(), 3);
    }
}
