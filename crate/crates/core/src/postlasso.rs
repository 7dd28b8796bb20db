//! Post-lasso nuisance estimation: a degree-three monomial expansion of the
//! covariates, l1-penalized linear and logistic fits by cyclic coordinate
//! descent, and unpenalized refits on the selected terms.
//!
//! Single selection refits the outcome model on the outcome-lasso selection
//! and the propensity model on the treatment-lasso selection; double
//! selection refits both on the union of the selections.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::estimators::{Estimand, NuisanceFit};
use crate::nn::{sigmoid, softplus};

/// Monomial terms of total degree 1..=3 over `d` base covariates, stored as
/// sorted factor-index lists (`[j]`, `[j,k]`, `[j,k,l]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    pub d: usize,
    pub terms: Vec<Vec<usize>>,
}

impl MonomialBasis {
    /// All monomials of total degree 1, 2, 3 in graded lexicographic order.
    pub fn degree_three(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config(String::from("need at least one covariate")));
        }
        let mut terms = Vec::new();
        for j in 0..d {
            terms.push(vec![j]);
        }
        for j in 0..d {
            for k in j..d {
                terms.push(vec![j, k]);
            }
        }
        for j in 0..d {
            for k in j..d {
                for l in k..d {
                    terms.push(vec![j, k, l]);
                }
            }
        }
        Ok(Self { d, terms })
    }

    /// `C(d+3,3) - 1`, the number of terms before any drops.
    pub fn expected_len(d: usize) -> usize {
        (d + 3) * (d + 2) * (d + 1) / 6 - 1
    }

    fn eval(term: &[usize], row: &[f64]) -> f64 {
        term.iter().map(|&j| row[j]).product()
    }
}

/// Standardized monomial expansion, column-major for coordinate descent.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub basis: MonomialBasis,
    /// Indices into `basis.terms` of the retained (non-constant) columns.
    pub kept: Vec<usize>,
    /// Standardized columns, one `Vec` per retained term.
    pub cols: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Expansion {
    pub fn n(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }

    pub fn p(&self) -> usize {
        self.cols.len()
    }

    /// Row subset of the expansion (column-major copy).
    pub fn subset_rows(&self, rows: &[usize]) -> Vec<Vec<f64>> {
        self.cols
            .iter()
            .map(|col| rows.iter().map(|&i| col[i]).collect())
            .collect()
    }
}

/// Expands covariates into all monomials of total degree <= 3, standardized
/// to mean 0 and (population) sd 1. Constant columns are dropped with a
/// warning record rather than failing the expansion.
pub fn expand_monomials(x: &Matrix) -> Result<Expansion> {
    let basis = MonomialBasis::degree_three(x.cols())?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::Data(String::from("cannot expand an empty sample")));
    }
    let nf = n as f64;
    let mut kept = Vec::new();
    let mut cols = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    let mut warnings = Vec::new();
    for (idx, term) in basis.terms.iter().enumerate() {
        let mut col: Vec<f64> = (0..n).map(|i| MonomialBasis::eval(term, x.row(i))).collect();
        let mean = col.iter().sum::<f64>() / nf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let sd = var.sqrt();
        if !(sd > 1e-10 * (1.0 + mean.abs())) {
            warnings.push(format!("dropped constant expansion term {term:?}"));
            continue;
        }
        for v in col.iter_mut() {
            *v = (*v - mean) / sd;
        }
        kept.push(idx);
        cols.push(col);
        means.push(mean);
        sds.push(sd);
    }
    if cols.is_empty() {
        return Err(Error::Data(String::from("all expansion terms are constant")));
    }
    Ok(Expansion { basis, kept, cols, means, sds, warnings })
}

/// Model family of a penalized fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GlmFamily {
    Gaussian,
    Logistic,
}

/// Result of one l1-penalized fit.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub family: GlmFamily,
    pub lambda: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Indices (into the design columns) of nonzero coefficients.
    pub selected: Vec<usize>,
    pub objective: f64,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 20_000;
const OBJ_TOL: f64 = 1e-9;

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

fn gaussian_objective(r: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = r.len() as f64;
    let rss: f64 = r.iter().map(|v| v * v).sum();
    rss / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Minimizes `(1/2n)·Σ(y - b0 - Xb)² + λ‖b‖₁` (gaussian) or
/// `(1/n)·Σ[ln(1+e^η) - y·η] + λ‖b‖₁` (logistic) by cyclic coordinate
/// descent with an active-set strategy; the intercept is unpenalized.
///
/// `cols` is the design in column-major form. The objective is
/// non-increasing across sweeps by construction (logistic sweeps fall back
/// to the curvature-bound majorizer whenever a fast reweighted sweep would
/// overshoot).
pub fn lasso_fit(cols: &[Vec<f64>], y: &[f64], family: GlmFamily, lambda: f64) -> Result<LassoFit> {
    if cols.is_empty() {
        return Err(Error::Shape(String::from("design has no columns")));
    }
    let n = y.len();
    if n == 0 || cols.iter().any(|c| c.len() != n) {
        return Err(Error::Shape(String::from("design and response dimensions disagree")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    if family == GlmFamily::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain(String::from("logistic lasso requires binary responses")));
    }
    match family {
        GlmFamily::Gaussian => gaussian_cd(cols, y, lambda),
        GlmFamily::Logistic => logistic_cd(cols, y, lambda),
    }
}

fn gaussian_cd(cols: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LassoFit> {
    let n = y.len();
    let nf = n as f64;
    let p = cols.len();
    let col_sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();

    let mut beta = vec![0.0; p];
    let mut intercept = y.iter().sum::<f64>() / nf;
    let mut r: Vec<f64> = y.iter().map(|&v| v - intercept).collect();
    let mut obj = gaussian_objective(&r, &beta, lambda);
    let mut sweeps = 0usize;
    let mut on_active_pass = false;

    loop {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::Convergence(format!(
                "gaussian coordinate descent: no convergence after {MAX_SWEEPS} sweeps \
                 (objective {obj:.6e})"
            )));
        }
        sweeps += 1;
        let mut max_step = 0.0f64;
        for j in 0..p {
            if on_active_pass && beta[j] == 0.0 {
                continue;
            }
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = &cols[j];
            let mut dot = 0.0;
            for (xi, ri) in xj.iter().zip(r.iter()) {
                dot += xi * ri;
            }
            let z = dot / nf + col_sq[j] * beta[j];
            let new = soft_threshold(z, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (ri, xi) in r.iter_mut().zip(xj.iter()) {
                    *ri -= delta * xi;
                }
                beta[j] = new;
                max_step = max_step.max(delta.abs());
            }
        }
        // unpenalized intercept
        let shift = r.iter().sum::<f64>() / nf;
        if shift != 0.0 {
            intercept += shift;
            for ri in r.iter_mut() {
                *ri -= shift;
            }
            max_step = max_step.max(shift.abs());
        }
        let new_obj = gaussian_objective(&r, &beta, lambda);
        debug_assert!(new_obj <= obj + 1e-10 * (1.0 + obj.abs()), "objective increased");
        // both the objective and the coefficients must have stopped moving
        let scale = 1.0 + beta.iter().fold(intercept.abs(), |a, b| a.max(b.abs()));
        let done = (obj - new_obj).abs() < OBJ_TOL * (1.0 + obj.abs()) && max_step < 1e-9 * scale;
        obj = new_obj;
        if done {
            if on_active_pass {
                // confirm on a full sweep before declaring convergence
                on_active_pass = false;
            } else {
                break;
            }
        } else {
            on_active_pass = true;
        }
    }

    Ok(finish_fit(GlmFamily::Gaussian, lambda, intercept, beta, obj, sweeps))
}

fn logistic_objective(eta: &[f64], y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let nll: f64 = eta.iter().zip(y).map(|(&e, &t)| softplus(e) - t * e).sum();
    nll / n + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn logistic_cd(cols: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LassoFit> {
    let n = y.len();
    let nf = n as f64;
    let p = cols.len();

    let mut beta = vec![0.0; p];
    let base_rate = (y.iter().sum::<f64>() / nf).clamp(1e-6, 1.0 - 1e-6);
    let mut intercept = libm::log(base_rate / (1.0 - base_rate));
    let mut eta = vec![intercept; n];
    let mut obj = logistic_objective(&eta, y, &beta, lambda);
    let mut sweeps = 0usize;
    let mut on_active_pass = false;

    loop {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::Convergence(format!(
                "logistic coordinate descent: no convergence after {MAX_SWEEPS} sweeps \
                 (objective {obj:.6e})"
            )));
        }
        sweeps += 1;
        let prev_beta = beta.clone();
        let prev_intercept = intercept;
        let prev_eta = eta.clone();

        // one quadratic-majorization sweep with refreshed curvature weights
        let improved = logistic_sweep(
            cols, y, lambda, &mut beta, &mut intercept, &mut eta, on_active_pass, false,
        );
        let mut new_obj = logistic_objective(&eta, y, &beta, lambda);
        if new_obj > obj {
            // overshoot: redo the sweep from the previous point with the
            // global curvature bound 1/4, which cannot increase the objective
            beta = prev_beta;
            intercept = prev_intercept;
            eta = prev_eta;
            logistic_sweep(
                cols, y, lambda, &mut beta, &mut intercept, &mut eta, on_active_pass, true,
            );
            new_obj = logistic_objective(&eta, y, &beta, lambda);
        }
        let _ = improved;
        debug_assert!(new_obj <= obj + 1e-10 * (1.0 + obj.abs()), "objective increased");
        let done = (obj - new_obj).abs() < OBJ_TOL * (1.0 + obj.abs());
        obj = new_obj;
        if done {
            if on_active_pass {
                on_active_pass = false;
            } else {
                break;
            }
        } else {
            on_active_pass = true;
        }
    }

    Ok(finish_fit(GlmFamily::Logistic, lambda, intercept, beta, obj, sweeps))
}

/// One coordinate-descent sweep on the quadratic expansion of the logistic
/// loss at the current linear predictor. Returns whether anything moved.
#[allow(clippy::too_many_arguments)]
fn logistic_sweep(
    cols: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    beta: &mut [f64],
    intercept: &mut f64,
    eta: &mut [f64],
    active_only: bool,
    safe_bound: bool,
) -> bool {
    let n = y.len();
    let nf = n as f64;
    // residual of the working response: g_i/w_i - (eta_i - eta0_i)
    // maintained implicitly through q_i = g_i + w_i * (eta_i - eta0_i)
    let mut w = vec![0.0; n];
    let mut q = vec![0.0; n]; // gradient of the quadratic at current eta
    for i in 0..n {
        let pi = sigmoid(eta[i]);
        w[i] = if safe_bound { 0.25 } else { (pi * (1.0 - pi)).max(1e-5) };
        q[i] = pi - y[i];
    }
    let mut moved = false;
    for j in 0..cols.len() {
        if active_only && beta[j] == 0.0 {
            continue;
        }
        let xj = &cols[j];
        let mut grad = 0.0;
        let mut curv = 0.0;
        for i in 0..n {
            grad += xj[i] * q[i];
            curv += w[i] * xj[i] * xj[i];
        }
        grad /= nf;
        curv /= nf;
        if curv <= 0.0 {
            continue;
        }
        let z = curv * beta[j] - grad;
        let new = soft_threshold(z, lambda) / curv;
        let delta = new - beta[j];
        if delta != 0.0 {
            for i in 0..n {
                eta[i] += delta * xj[i];
                q[i] += w[i] * delta * xj[i];
            }
            beta[j] = new;
            moved = true;
        }
    }
    // intercept step on the same quadratic; q is refreshed at the next
    // sweep, so only the linear predictor needs updating here
    let grad: f64 = q.iter().sum::<f64>() / nf;
    let curv: f64 = w.iter().sum::<f64>() / nf;
    if curv > 0.0 {
        let delta = -grad / curv;
        if delta != 0.0 {
            *intercept += delta;
            for ei in eta.iter_mut() {
                *ei += delta;
            }
            moved = true;
        }
    }
    moved
}

fn finish_fit(
    family: GlmFamily,
    lambda: f64,
    intercept: f64,
    coefficients: Vec<f64>,
    objective: f64,
    sweeps: usize,
) -> LassoFit {
    let selected = coefficients
        .iter()
        .enumerate()
        .filter(|(_, &b)| b != 0.0)
        .map(|(j, _)| j)
        .collect();
    LassoFit { family, lambda, intercept, coefficients, selected, objective, sweeps }
}

/// Largest violation of the subgradient optimality conditions: for zero
/// coefficients `|∇_j| <= λ`, for nonzero ones `∇_j = -λ·sign(β_j)`.
pub fn kkt_max_violation(cols: &[Vec<f64>], y: &[f64], fit: &LassoFit) -> f64 {
    let n = y.len();
    let nf = n as f64;
    // gradient of the smooth part at the fitted point
    let mut eta = vec![fit.intercept; n];
    for (j, col) in cols.iter().enumerate() {
        let b = fit.coefficients[j];
        if b != 0.0 {
            for (e, &x) in eta.iter_mut().zip(col) {
                *e += b * x;
            }
        }
    }
    let resid: Vec<f64> = match fit.family {
        GlmFamily::Gaussian => eta.iter().zip(y).map(|(&e, &t)| e - t).collect(),
        GlmFamily::Logistic => eta.iter().zip(y).map(|(&e, &t)| sigmoid(e) - t).collect(),
    };
    let mut worst = 0.0f64;
    // intercept is unpenalized: its gradient must vanish
    worst = worst.max((resid.iter().sum::<f64>() / nf).abs());
    for (j, col) in cols.iter().enumerate() {
        let g: f64 = col.iter().zip(&resid).map(|(&x, &r)| x * r).sum::<f64>() / nf;
        let v = if fit.coefficients[j] == 0.0 {
            (g.abs() - fit.lambda).max(0.0)
        } else {
            (g + fit.lambda * fit.coefficients[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Smallest lambda that zeroes every coefficient (gaussian exact; logistic
/// evaluated at the intercept-only fit).
pub fn lambda_max(cols: &[Vec<f64>], y: &[f64], family: GlmFamily) -> f64 {
    let n = y.len() as f64;
    let resid: Vec<f64> = match family {
        GlmFamily::Gaussian => {
            let mean = y.iter().sum::<f64>() / n;
            y.iter().map(|&v| v - mean).collect()
        }
        GlmFamily::Logistic => {
            let mean = (y.iter().sum::<f64>() / n).clamp(1e-6, 1.0 - 1e-6);
            y.iter().map(|&v| mean - v).collect()
        }
    };
    cols.iter()
        .map(|c| (c.iter().zip(&resid).map(|(&x, &r)| x * r).sum::<f64>() / n).abs())
        .fold(0.0, f64::max)
}

/// Plug-in penalty `λ = c·sd(y)·sqrt(2·ln(2p/δ)/n)`.
pub fn plugin_lambda(targets: &[f64], p: usize, c: f64, delta: f64) -> f64 {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let sd = (targets.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    c * sd * libm::sqrt(2.0 * libm::log(2.0 * p as f64 / delta) / n)
}

/// Penalty selection rule for the selection lassos.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LambdaRule {
    /// `λ = c·sd(target)·sqrt(2·ln(2p/δ)/n)` with c = 1.1, δ = 0.05.
    PlugIn,
    /// K-fold cross-validation over a geometric grid below `λ_max`
    /// (deterministic striped folds).
    CrossValidated { folds: usize },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::PlugIn
    }
}

/// Selection strategy for the refits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Selection {
    /// Each refit uses its own lasso's selected terms.
    Single,
    /// Both refits use the union of the outcome and treatment selections.
    Double,
}

/// Post-lasso output: the nuisance fit plus selection diagnostics.
#[derive(Debug, Clone)]
pub struct PostLassoResult {
    pub fit: NuisanceFit,
    /// Expansion-column indices selected by the control-outcome lasso.
    pub outcome_selected: Vec<usize>,
    /// Selected by the treated-outcome lasso (ACE only).
    pub outcome_treated_selected: Option<Vec<usize>>,
    /// Selected by the treatment (propensity) lasso.
    pub treatment_selected: Vec<usize>,
    pub outcome_lambda: f64,
    pub treatment_lambda: f64,
    pub warnings: Vec<String>,
}

fn resolve_lambda(
    rule: LambdaRule,
    cols: &[Vec<f64>],
    targets: &[f64],
    family: GlmFamily,
) -> Result<f64> {
    match rule {
        LambdaRule::PlugIn => Ok(plugin_lambda(targets, cols.len(), 1.1, 0.05)),
        LambdaRule::CrossValidated { folds } => cross_validate_lambda(cols, targets, family, folds),
    }
}

fn cross_validate_lambda(
    cols: &[Vec<f64>],
    y: &[f64],
    family: GlmFamily,
    folds: usize,
) -> Result<f64> {
    let n = y.len();
    if folds < 2 || folds > n {
        return Err(Error::Config(format!("cross-validation needs 2 <= folds <= n, got {folds}")));
    }
    let lmax = lambda_max(cols, y, family).max(1e-12);
    let grid: Vec<f64> = (0..20).map(|k| lmax * libm::pow(1e-3, k as f64 / 19.0)).collect();
    let mut best = (f64::INFINITY, grid[0]);
    for &lam in &grid {
        let mut score = 0.0;
        for fold in 0..folds {
            let train: Vec<usize> = (0..n).filter(|i| i % folds != fold).collect();
            let test: Vec<usize> = (0..n).filter(|i| i % folds == fold).collect();
            let tr_cols: Vec<Vec<f64>> =
                cols.iter().map(|c| train.iter().map(|&i| c[i]).collect()).collect();
            let tr_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let fit = lasso_fit(&tr_cols, &tr_y, family, lam)?;
            for &i in &test {
                let mut eta = fit.intercept;
                for &j in &fit.selected {
                    eta += fit.coefficients[j] * cols[j][i];
                }
                score += match family {
                    GlmFamily::Gaussian => {
                        let r = y[i] - eta;
                        r * r
                    }
                    GlmFamily::Logistic => softplus(eta) - y[i] * eta,
                };
            }
        }
        if score < best.0 {
            best = (score, lam);
        }
    }
    Ok(best.1)
}

/// Unpenalized least-squares refit on the selected columns (ridge fallback
/// `1e-8·I` when the normal matrix is singular). Returns fitted values over
/// all rows of `full_cols` and pushes a warning when the fallback fires.
fn ols_refit(
    train_cols: &[Vec<f64>],
    train_y: &[f64],
    full_cols: &[Vec<f64>],
    selected: &[usize],
    warnings: &mut Vec<String>,
    label: &str,
) -> Vec<f64> {
    let n = train_y.len();
    let k = selected.len() + 1; // intercept first
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let col = |j: usize, i: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            train_cols[selected[j - 1]][i]
        }
    };
    for a in 0..k {
        for b in a..k {
            let mut acc = 0.0;
            for i in 0..n {
                acc += col(a, i) * col(b, i);
            }
            gram[a * k + b] = acc;
            gram[b * k + a] = acc;
        }
        let mut acc = 0.0;
        for i in 0..n {
            acc += col(a, i) * train_y[i];
        }
        rhs[a] = acc;
    }
    let coef = match cholesky_solve(&gram, &rhs, k) {
        Some(c) => c,
        None => {
            warnings.push(format!("{label}: singular refit design, ridge fallback 1e-8"));
            let mut ridged = gram;
            for a in 0..k {
                ridged[a * k + a] += 1e-8;
            }
            cholesky_solve(&ridged, &rhs, k).expect("ridged system is positive definite")
        }
    };
    let rows = full_cols.first().map_or(0, Vec::len);
    (0..rows)
        .map(|i| {
            let mut v = coef[0];
            for (j, &sj) in selected.iter().enumerate() {
                v += coef[j + 1] * full_cols[sj][i];
            }
            v
        })
        .collect()
}

/// Logistic maximum likelihood refit by Newton iterations with step halving
/// (ridge fallback on a singular Hessian). Returns probabilities over all
/// rows of `full_cols`.
fn logistic_refit(
    train_cols: &[Vec<f64>],
    train_t: &[f64],
    full_cols: &[Vec<f64>],
    selected: &[usize],
    warnings: &mut Vec<String>,
    label: &str,
) -> Vec<f64> {
    let n = train_t.len();
    let nf = n as f64;
    let k = selected.len() + 1;
    let col = |j: usize, i: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            train_cols[selected[j - 1]][i]
        }
    };
    let mut coef = vec![0.0; k];
    let base = (train_t.iter().sum::<f64>() / nf).clamp(1e-6, 1.0 - 1e-6);
    coef[0] = libm::log(base / (1.0 - base));

    let nll = |coef: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            let mut eta = 0.0;
            for j in 0..k {
                eta += coef[j] * col(j, i);
            }
            acc += softplus(eta) - train_t[i] * eta;
        }
        acc / nf
    };

    let mut cur = nll(&coef);
    for _iter in 0..50 {
        // gradient and Hessian at the current point
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k * k];
        for i in 0..n {
            let mut eta = 0.0;
            for j in 0..k {
                eta += coef[j] * col(j, i);
            }
            let pi = sigmoid(eta);
            let g = pi - train_t[i];
            let w = (pi * (1.0 - pi)).max(1e-10);
            for a in 0..k {
                let xa = col(a, i);
                grad[a] += g * xa;
                for b in a..k {
                    hess[a * k + b] += w * xa * col(b, i);
                }
            }
        }
        for a in 0..k {
            grad[a] /= nf;
            for b in a..k {
                hess[a * k + b] /= nf;
                hess[b * k + a] = hess[a * k + b];
            }
        }
        let step = match cholesky_solve(&hess, &grad, k) {
            Some(s) => s,
            None => {
                warnings.push(format!("{label}: singular refit design, ridge fallback 1e-8"));
                let mut ridged = hess;
                for a in 0..k {
                    ridged[a * k + a] += 1e-8;
                }
                cholesky_solve(&ridged, &grad, k).expect("ridged system is positive definite")
            }
        };
        // step halving keeps the likelihood monotone; perfectly separable
        // data just saturates and stops improving
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> =
                coef.iter().zip(&step).map(|(c, s)| c - scale * s).collect();
            let v = nll(&trial);
            if v <= cur {
                let improved = cur - v > 1e-12 * (1.0 + cur.abs());
                coef = trial;
                cur = v;
                accepted = improved;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let rows = full_cols.first().map_or(0, Vec::len);
    (0..rows)
        .map(|i| {
            let mut eta = coef[0];
            for (j, &sj) in selected.iter().enumerate() {
                eta += coef[j + 1] * full_cols[sj][i];
            }
            sigmoid(eta)
        })
        .collect()
}

/// Dense symmetric positive-definite solve; `None` if the factorization
/// breaks down (singular or indefinite matrix).
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for m in 0..j {
                sum -= l[i * k + m] * l[j * k + m];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    // forward and back substitution
    let mut x = b.to_vec();
    for i in 0..k {
        for j in 0..i {
            let t = l[i * k + j] * x[j];
            x[i] -= t;
        }
        x[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for j in i + 1..k {
            let t = l[j * k + i] * x[j];
            x[i] -= t;
        }
        x[i] /= l[i * k + i];
    }
    Some(x)
}

/// Post-lasso nuisance estimation: lasso selection on the degree-three
/// expansion, then unpenalized refits, evaluated on every observation.
///
/// The outcome lasso and its refit use the controls (plus, for ACE, a
/// second pass on the treated); the treatment lasso and refit use the full
/// sample. Propensity predictions are trimmed to `[trim, 1-trim]`.
pub fn select_and_refit(
    data: &Dataset,
    estimand: Estimand,
    selection: Selection,
    rule: LambdaRule,
    trim: f64,
) -> Result<PostLassoResult> {
    if !(trim > 0.0 && trim < 0.5) {
        return Err(Error::Config(format!("trim must be in (0, 0.5), got {trim}")));
    }
    let n1 = data.n_treated();
    if n1 == 0 || n1 == data.n() {
        return Err(Error::Data(String::from("post-lasso needs both treatment arms")));
    }

    let expansion = expand_monomials(&data.x)?;
    let mut warnings = expansion.warnings.clone();

    let control_rows = data.arm_indices(0);
    let treated_rows = data.arm_indices(1);
    let control_cols = expansion.subset_rows(&control_rows);
    let control_y: Vec<f64> = control_rows.iter().map(|&i| data.y[i]).collect();
    let t_f64: Vec<f64> = data.t.iter().map(|&t| f64::from(t)).collect();

    let outcome_lambda = resolve_lambda(rule, &control_cols, &control_y, GlmFamily::Gaussian)?;
    let outcome_fit = lasso_fit(&control_cols, &control_y, GlmFamily::Gaussian, outcome_lambda)?;

    let treatment_lambda = resolve_lambda(rule, &expansion.cols, &t_f64, GlmFamily::Logistic)?;
    let treatment_fit = lasso_fit(&expansion.cols, &t_f64, GlmFamily::Logistic, treatment_lambda)?;

    let (treated_cols, treated_y, outcome1_fit) = if estimand == Estimand::Ace {
        let cols = expansion.subset_rows(&treated_rows);
        let y: Vec<f64> = treated_rows.iter().map(|&i| data.y[i]).collect();
        let lam = resolve_lambda(rule, &cols, &y, GlmFamily::Gaussian)?;
        let fit = lasso_fit(&cols, &y, GlmFamily::Gaussian, lam)?;
        (cols, y, Some(fit))
    } else {
        (Vec::new(), Vec::new(), None)
    };

    let union = |sets: &[&[usize]]| -> Vec<usize> {
        let mut all: Vec<usize> = sets.iter().flat_map(|s| s.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let (mu0_set, mu1_set, p_set) = match selection {
        Selection::Single => (
            outcome_fit.selected.clone(),
            outcome1_fit.as_ref().map(|f| f.selected.clone()),
            treatment_fit.selected.clone(),
        ),
        Selection::Double => {
            let mut sets: Vec<&[usize]> = vec![&outcome_fit.selected, &treatment_fit.selected];
            if let Some(f) = &outcome1_fit {
                sets.push(&f.selected);
            }
            let u = union(&sets);
            (u.clone(), outcome1_fit.as_ref().map(|_| u.clone()), u)
        }
    };

    let mu0 = ols_refit(&control_cols, &control_y, &expansion.cols, &mu0_set, &mut warnings, "mu0");
    let mu1 = match (&outcome1_fit, &mu1_set) {
        (Some(_), Some(set)) => Some(ols_refit(
            &treated_cols,
            &treated_y,
            &expansion.cols,
            set,
            &mut warnings,
            "mu1",
        )),
        _ => None,
    };
    let p_raw =
        logistic_refit(&expansion.cols, &t_f64, &expansion.cols, &p_set, &mut warnings, "propensity");
    let p: Vec<f64> = p_raw.iter().map(|&v| v.clamp(trim, 1.0 - trim)).collect();

    Ok(PostLassoResult {
        fit: NuisanceFit {
            mu0,
            mu1,
            p,
            p_marginal: NuisanceFit::marginal_from_data(&data.t),
        },
        outcome_selected: outcome_fit.selected,
        outcome_treated_selected: outcome1_fit.map(|f| f.selected),
        treatment_selected: treatment_fit.selected,
        outcome_lambda,
        treatment_lambda,
        warnings,
    })
}
