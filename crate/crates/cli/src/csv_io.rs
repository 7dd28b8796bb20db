//! CSV dataset ingestion with a named time-series column layout.
//!
//! Covariate columns are assembled series-major (each series contiguous in
//! time order) with the static covariates last, matching what the
//! convolutional models expect. Files are RFC-4180 style with a required
//! header row, UTF-8, and `.` as the decimal separator.

use std::path::Path;

use aipw_core::{Dataset, Matrix, SeriesLayout};

use crate::error::AppError;

/// Named column layout from the command line.
#[derive(Debug, Clone, Default)]
pub struct ColumnLayout {
    /// `(series name, column names in time order)`.
    pub series: Vec<(String, Vec<String>)>,
    /// Static covariate column names.
    pub statics: Vec<String>,
}

impl ColumnLayout {
    /// Covariate column names in dataset order (series-major, statics last).
    pub fn x_names(&self) -> Vec<String> {
        let mut names: Vec<String> =
            self.series.iter().flat_map(|(_, cols)| cols.iter().cloned()).collect();
        names.extend(self.statics.iter().cloned());
        names
    }

    fn validate(&self) -> Result<(), AppError> {
        let mut seen = std::collections::BTreeSet::new();
        for name in self.x_names() {
            if !seen.insert(name.clone()) {
                return Err(AppError::Usage(format!(
                    "column '{name}' appears twice in the series/static layout"
                )));
            }
        }
        for (name, cols) in &self.series {
            if cols.len() < 2 {
                return Err(AppError::Usage(format!(
                    "series '{name}' needs at least 2 time points, has {}",
                    cols.len()
                )));
            }
        }
        Ok(())
    }

    fn to_series_layout(&self) -> SeriesLayout {
        SeriesLayout {
            series_lens: self.series.iter().map(|(_, cols)| cols.len()).collect(),
            n_static: self.statics.len(),
        }
    }
}

/// A dataset together with the column names it was built from.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub outcome_name: String,
    pub treat_name: String,
    pub x_names: Vec<String>,
}

/// Reads a CSV file into a [`Dataset`].
///
/// With a layout, covariates follow the series-major order; without one,
/// every column other than the outcome and treatment becomes a static
/// covariate in file order. Parse failures name the row (1-based, excluding
/// the header) and column.
pub fn load_csv(
    path: &Path,
    layout: Option<&ColumnLayout>,
    outcome_col: &str,
    treat_col: &str,
) -> Result<LoadedData, AppError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AppError::Data(format!("cannot read '{}': {e}", path.display())))?;
    let headers: Vec<String> =
        rdr.headers()
            .map_err(|e| AppError::Data(format!("cannot read header of '{}': {e}", path.display())))?
            .iter()
            .map(str::to_owned)
            .collect();

    let find = |name: &str| -> Result<usize, AppError> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            AppError::Data(format!("column '{name}' not found in '{}'", path.display()))
        })
    };

    let y_idx = find(outcome_col)?;
    let t_idx = find(treat_col)?;

    let (x_names, series_layout) = match layout {
        Some(l) => {
            l.validate()?;
            let names = l.x_names();
            if names.iter().any(|n| n == outcome_col || n == treat_col) {
                return Err(AppError::Usage(
                    "outcome/treatment columns cannot appear in the covariate layout".into(),
                ));
            }
            (names, Some(l.to_series_layout()))
        }
        None => {
            let names: Vec<String> = headers
                .iter()
                .filter(|h| h.as_str() != outcome_col && h.as_str() != treat_col)
                .cloned()
                .collect();
            (names, None)
        }
    };
    if x_names.is_empty() {
        return Err(AppError::Data("no covariate columns".into()));
    }
    let x_idx: Vec<usize> = x_names.iter().map(|n| find(n)).collect::<Result<_, _>>()?;

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut xs = Vec::new();
    for (row0, record) in rdr.records().enumerate() {
        let row = row0 + 1;
        let record = record
            .map_err(|e| AppError::Data(format!("row {row} of '{}': {e}", path.display())))?;
        let cell = |idx: usize, name: &str| -> Result<f64, AppError> {
            let raw = record.get(idx).ok_or_else(|| {
                AppError::Data(format!("row {row}: missing value for column '{name}'"))
            })?;
            raw.parse::<f64>().map_err(|_| {
                AppError::Data(format!("row {row}, column '{name}': '{raw}' is not numeric"))
            })
        };
        let yv = cell(y_idx, outcome_col)?;
        let tv = cell(t_idx, treat_col)?;
        if tv != 0.0 && tv != 1.0 {
            return Err(AppError::Data(format!(
                "row {row}: treatment column '{treat_col}' must be 0 or 1, found {tv}"
            )));
        }
        y.push(yv);
        t.push(tv as u8);
        for (&idx, name) in x_idx.iter().zip(&x_names) {
            xs.push(cell(idx, name)?);
        }
    }
    if y.is_empty() {
        return Err(AppError::Data(format!("'{}' has no data rows", path.display())));
    }

    let n = y.len();
    let d = x_names.len();
    let x = Matrix::from_vec(xs, n, d).map_err(AppError::from)?;
    let dataset = Dataset::new(y, t, x, series_layout).map_err(AppError::from)?;
    Ok(LoadedData {
        dataset,
        outcome_name: outcome_col.to_owned(),
        treat_name: treat_col.to_owned(),
        x_names,
    })
}

/// Writes a dataset back out with its column names (outcome and treatment
/// first). Floats print in shortest round-trip form, so a re-read
/// reproduces every value exactly.
pub fn write_csv(data: &LoadedData, path: &Path) -> Result<(), AppError> {
    let mut out = String::new();
    out.push_str(&data.outcome_name);
    out.push(',');
    out.push_str(&data.treat_name);
    for name in &data.x_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let ds = &data.dataset;
    for i in 0..ds.n() {
        out.push_str(&format!("{}", ds.y[i]));
        out.push_str(&format!(",{}", ds.t[i]));
        for v in ds.x.row(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| AppError::Data(format!("cannot write '{}': {e}", path.display())))
}

/// Parses repeated `--series name=col1,col2,...` values plus one optional
/// `--static col1,col2,...` into a layout.
pub fn parse_layout(series: &[String], statics: Option<&str>) -> Result<Option<ColumnLayout>, AppError> {
    if series.is_empty() && statics.is_none() {
        return Ok(None);
    }
    let mut layout = ColumnLayout::default();
    for spec in series {
        let (name, cols) = spec.split_once('=').ok_or_else(|| {
            AppError::Usage(format!("series spec '{spec}' must look like name=col1,col2,..."))
        })?;
        let cols: Vec<String> =
            cols.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect();
        if cols.is_empty() {
            return Err(AppError::Usage(format!("series '{name}' lists no columns")));
        }
        layout.series.push((name.trim().to_owned(), cols));
    }
    if let Some(s) = statics {
        layout.statics =
            s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect();
    }
    layout.validate()?;
    Ok(Some(layout))
}
