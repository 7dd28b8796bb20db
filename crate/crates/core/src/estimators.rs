//! AIPW point estimators for the average causal effect (ACE) and the average
//! causal effect on the treated (ACET), influence-function variance
//! estimators, confidence intervals, and the naive and outcome-regression
//! comparators.
//!
//! Estimators consume precomputed nuisance values ([`NuisanceFit`]) and never
//! refit anything internally, so the per-observation algebra stays
//! unit-testable and the nuisance fits carry no additional randomness.
//!
//! For a binary treatment the per-observation AIPW terms are
//!
//! ```text
//! psi_t(z_i)      = 1{t_i=t} (y_i - mu_t(x_i)) / P[T=t|x_i] + mu_t(x_i)
//! psi_{t,t'}(z_i) = P[T=t'|x_i]/P[T=t'] * 1{t_i=t}(y_i - mu_t(x_i))/P[T=t|x_i]
//!                   + 1{t_i=t'} mu_t(x_i) / P[T=t']
//! ```
//!
//! with `tau = E_n[psi_1 - psi_0]` (ACE) and `tau_t = E_n[psi_{1,1} -
//! psi_{0,1}]` (ACET). The variance estimators `V` and `V_t` below give CIs
//! `tau ± Φ⁻¹(1-α/2)·sqrt(V/n)` that stay valid uniformly over the data
//! generating processes once the nuisance fits converge fast enough.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::std_normal_quantile;

/// Which causal contrast is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Estimand {
    /// Average causal effect E[Y(1) - Y(0)].
    Ace,
    /// Average causal effect on the treated E[Y(1) - Y(0) | T = 1].
    Acet,
}

impl core::fmt::Display for Estimand {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Estimand::Ace => write!(f, "ACE"),
            Estimand::Acet => write!(f, "ACET"),
        }
    }
}

/// Per-observation fitted nuisance values.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    /// Fitted control outcome regression mu_0(x_i).
    pub mu0: Vec<f64>,
    /// Fitted treated outcome regression mu_1(x_i); required for ACE.
    pub mu1: Option<Vec<f64>>,
    /// Fitted propensity score p(x_i) = P[T=1|X=x_i], entries in (0,1).
    pub p: Vec<f64>,
    /// Marginal treatment probability estimate, n_1 / n.
    pub p_marginal: f64,
}

impl NuisanceFit {
    /// Marginal treatment probability from the treated share of the sample.
    pub fn marginal_from_data(t: &[u8]) -> f64 {
        let n1 = t.iter().filter(|&&v| v == 1).count();
        n1 as f64 / t.len() as f64
    }

    fn validate(&self, n: usize, need_mu1: bool) -> Result<()> {
        if self.mu0.len() != n || self.p.len() != n {
            return Err(Error::Shape(format!(
                "nuisance vectors must have length {n} (mu0={}, p={})",
                self.mu0.len(),
                self.p.len()
            )));
        }
        if need_mu1 {
            match &self.mu1 {
                None => {
                    return Err(Error::Config(String::from(
                        "ACE estimation requires fitted mu1 values",
                    )))
                }
                Some(mu1) if mu1.len() != n => {
                    return Err(Error::Shape(format!(
                        "mu1 has length {} but n = {n}",
                        mu1.len()
                    )));
                }
                _ => {}
            }
        }
        if !(self.p_marginal > 0.0 && self.p_marginal < 1.0) {
            return Err(Error::Domain(format!(
                "marginal treatment probability must be in (0,1), got {}",
                self.p_marginal
            )));
        }
        for &pi in &self.p {
            check_prob(pi)?;
        }
        if self.mu0.iter().any(|v| !v.is_finite())
            || self.mu1.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Data(String::from("non-finite nuisance value")));
        }
        Ok(())
    }
}

/// Point estimate with variance, standard error, and confidence interval.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateReport {
    pub estimand: Estimand,
    pub tau_hat: f64,
    /// Influence-function variance estimate (V or V_t); se = sqrt(variance/n).
    pub variance: f64,
    pub se: f64,
    pub alpha: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
}

fn check_prob(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability must be in (0,1), got {p}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    Ok(())
}

/// ACE influence term psi_t for one observation.
///
/// `p_t` is the fitted probability of the arm being scored, i.e.
/// `P[T=t|X=x_i]` (so `1 - p(x_i)` when `t = 0`).
pub fn psi_ace(y_i: f64, t_i: u8, mu_t: f64, p_t: f64, t: u8) -> Result<f64> {
    check_prob(p_t)?;
    let ind = f64::from(u8::from(t_i == t));
    Ok(ind * (y_i - mu_t) / p_t + mu_t)
}

/// ACET influence term psi_{t,t'} for one observation.
///
/// `p_i` is the fitted `P[T=t'|X=x_i]`; since the treatment is binary the
/// inner inverse-probability weight `P[T=t|X=x_i]` equals `p_i` when
/// `t = t'` and `1 - p_i` otherwise. `p_marginal` is `P[T=t']`.
pub fn psi_acet(
    y_i: f64,
    t_i: u8,
    mu_t: f64,
    p_i: f64,
    p_marginal: f64,
    t: u8,
    t_prime: u8,
) -> Result<f64> {
    check_prob(p_i)?;
    check_prob(p_marginal)?;
    let p_t_i = if t == t_prime { p_i } else { 1.0 - p_i };
    let ind_t = f64::from(u8::from(t_i == t));
    let ind_tp = f64::from(u8::from(t_i == t_prime));
    Ok((p_i / p_marginal) * ind_t * (y_i - mu_t) / p_t_i + ind_tp * mu_t / p_marginal)
}

/// AIPW estimate of the ACE with its variance and confidence interval.
pub fn aipw_ace(data: &Dataset, fit: &NuisanceFit, alpha: f64) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    fit.validate(data.n(), true)?;
    let (n1, n0) = arm_counts(data)?;
    let n = data.n();
    let nf = n as f64;
    let mu1 = fit.mu1.as_ref().expect("validated above");

    let mut psi1 = Vec::with_capacity(n);
    let mut psi0 = Vec::with_capacity(n);
    for i in 0..n {
        psi1.push(psi_ace(data.y[i], data.t[i], mu1[i], fit.p[i], 1)?);
        psi0.push(psi_ace(data.y[i], data.t[i], fit.mu0[i], 1.0 - fit.p[i], 0)?);
    }
    let tau_hat = (0..n).map(|i| psi1[i] - psi0[i]).sum::<f64>() / nf;
    let mean_psi1 = psi1.iter().sum::<f64>() / nf;
    let mean_psi0 = psi0.iter().sum::<f64>() / nf;

    // V = E_n[1(t=1)(y-mu1)^2 / p^2]     + E_n[(mu1 - E_n psi1)^2]
    //   + E_n[1(t=0)(y-mu0)^2 / (1-p)^2] + E_n[(mu0 - E_n psi0)^2]
    let mut v = 0.0;
    for i in 0..n {
        let r1 = if data.t[i] == 1 {
            let r = data.y[i] - mu1[i];
            r * r / (fit.p[i] * fit.p[i])
        } else {
            0.0
        };
        let r0 = if data.t[i] == 0 {
            let r = data.y[i] - fit.mu0[i];
            let q = 1.0 - fit.p[i];
            r * r / (q * q)
        } else {
            0.0
        };
        let c1 = mu1[i] - mean_psi1;
        let c0 = fit.mu0[i] - mean_psi0;
        v += r1 + r0 + c1 * c1 + c0 * c0;
    }
    v /= nf;

    report(Estimand::Ace, tau_hat, v, n, n1, n0, alpha)
}

/// AIPW estimate of the ACET with its variance and confidence interval.
pub fn aipw_acet(data: &Dataset, fit: &NuisanceFit, alpha: f64) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    fit.validate(data.n(), false)?;
    let (n1, n0) = arm_counts(data)?;
    let n = data.n();
    let nf = n as f64;

    let mut sum11 = 0.0;
    let mut sum01 = 0.0;
    for i in 0..n {
        // psi_{1,1}: mu_1 cancels algebraically, so any finite value may be
        // passed for it; y_i keeps the literal formula exact.
        sum11 += psi_acet(data.y[i], data.t[i], data.y[i], fit.p[i], fit.p_marginal, 1, 1)?;
        sum01 += psi_acet(data.y[i], data.t[i], fit.mu0[i], fit.p[i], fit.p_marginal, 0, 1)?;
    }
    let tau_hat = (sum11 - sum01) / nf;

    let v = acet_variance(data, &fit.mu0, &fit.p, tau_hat, n1);
    report(Estimand::Acet, tau_hat, v, n, n1, n0, alpha)
}

/// V_t, the ACET variance estimator:
///
/// `V_t = (n/n1)^2 E_n[1(t=1)(y - mu0 - tau_t)^2]
///      + (n/n1)^2 E_n[(p/(1-p))^2 1(t=0)(y - mu0)^2]`
pub fn acet_variance(data: &Dataset, mu0: &[f64], p: &[f64], tau_t: f64, n1: usize) -> f64 {
    let n = data.n() as f64;
    let scale = (n / n1 as f64) * (n / n1 as f64);
    let mut term1 = 0.0;
    let mut term2 = 0.0;
    for i in 0..data.n() {
        if data.t[i] == 1 {
            let r = data.y[i] - mu0[i] - tau_t;
            term1 += r * r;
        } else {
            let w = p[i] / (1.0 - p[i]);
            let r = data.y[i] - mu0[i];
            term2 += w * w * r * r;
        }
    }
    scale * (term1 / n) + scale * (term2 / n)
}

/// Difference of raw arm means, the no-adjustment comparator.
pub fn naive_diff(data: &Dataset) -> Result<f64> {
    let (n1, n0) = arm_counts(data)?;
    let mut s1 = 0.0;
    let mut s0 = 0.0;
    for i in 0..data.n() {
        if data.t[i] == 1 {
            s1 += data.y[i];
        } else {
            s0 += data.y[i];
        }
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

/// Outcome-regression estimator.
///
/// ACE: `E_n[mu1(x_i) - mu0(x_i)]`. ACET: the treated-mean residual
/// `(1/n1) Σ_{t_i=1} (y_i - mu0(x_i))`.
pub fn or_estimator(data: &Dataset, fit: &NuisanceFit, estimand: Estimand) -> Result<f64> {
    fit.validate(data.n(), estimand == Estimand::Ace)?;
    let (n1, _n0) = arm_counts(data)?;
    match estimand {
        Estimand::Ace => {
            let mu1 = fit.mu1.as_ref().expect("validated above");
            let n = data.n() as f64;
            Ok((0..data.n()).map(|i| mu1[i] - fit.mu0[i]).sum::<f64>() / n)
        }
        Estimand::Acet => {
            let s: f64 = (0..data.n())
                .filter(|&i| data.t[i] == 1)
                .map(|i| data.y[i] - fit.mu0[i])
                .sum();
            Ok(s / n1 as f64)
        }
    }
}

/// Two-sided normal confidence interval `tau ± Φ⁻¹(1-α/2)·sqrt(variance/n)`.
pub fn confidence_interval(
    tau: f64,
    variance: f64,
    n: usize,
    alpha: f64,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if !(variance >= 0.0) {
        return Err(Error::Domain(format!("variance must be >= 0, got {variance}")));
    }
    if n == 0 {
        return Err(Error::Domain(String::from("n must be >= 1")));
    }
    let c = std_normal_quantile(1.0 - alpha / 2.0)?;
    let half = c * (variance / n as f64).sqrt();
    Ok((tau - half, tau + half))
}

fn arm_counts(data: &Dataset) -> Result<(usize, usize)> {
    let n1 = data.n_treated();
    let n0 = data.n() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Data(format!(
            "estimation needs both arms non-empty (n1={n1}, n0={n0})"
        )));
    }
    Ok((n1, n0))
}

fn report(
    estimand: Estimand,
    tau_hat: f64,
    variance: f64,
    n: usize,
    n1: usize,
    n0: usize,
    alpha: f64,
) -> Result<EstimateReport> {
    let (ci_low, ci_high) = confidence_interval(tau_hat, variance, n, alpha)?;
    Ok(EstimateReport {
        estimand,
        tau_hat,
        variance,
        se: (variance / n as f64).sqrt(),
        alpha,
        ci_low,
        ci_high,
        n,
        n1,
        n0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use alloc::vec;

    fn dataset(y: Vec<f64>, t: Vec<u8>) -> Dataset {
        let n = y.len();
        Dataset::new(y, t, Matrix::zeros(n, 1), None).unwrap()
    }

    fn fit(mu0: Vec<f64>, mu1: Option<Vec<f64>>, p: Vec<f64>, pm: f64) -> NuisanceFit {
        NuisanceFit { mu0, mu1, p, p_marginal: pm }
    }

    #[test]
    fn psi_ace_hand_values() {
        // (2-1)/0.5 + 1 = 3
        assert_eq!(psi_ace(2.0, 1, 1.0, 0.5, 1).unwrap(), 3.0);
        // indicator kills the residual term
        assert_eq!(psi_ace(99.0, 0, 1.25, 0.3, 1).unwrap(), 1.25);
        // zero residual
        assert_eq!(psi_ace(1.25, 1, 1.25, 0.3, 1).unwrap(), 1.25);
        assert!(psi_ace(1.0, 1, 0.0, 0.0, 1).is_err());
        assert!(psi_ace(1.0, 1, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn psi_acet_hand_values() {
        // psi_{1,1} reduces to 1{t=1} y / P[T=1]: y=2, P[T=1]=0.5 -> 4
        let v = psi_acet(2.0, 1, 123.456, 0.7, 0.5, 1, 1).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        // psi_{0,1} at a treated point: residual vanishes -> mu0 / P[T=1]
        let v = psi_acet(2.0, 1, 0.5, 0.7, 0.5, 0, 1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // psi_{0,1} at a control point: (0.5/0.5)*(1-0.5)/0.5 + 0 = 1
        let v = psi_acet(1.0, 0, 0.5, 0.5, 0.5, 0, 1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(psi_acet(1.0, 0, 0.5, 0.0, 0.5, 0, 1).is_err());
        assert!(psi_acet(1.0, 0, 0.5, 0.5, 1.0, 0, 1).is_err());
    }

    #[test]
    fn aipw_ace_trivial_and_hand_case() {
        // zero residuals reduce to mean(mu1 - mu0) = 1
        let d = dataset(vec![1.0, 0.0], vec![1, 0]);
        let f = fit(vec![0.0, 0.0], Some(vec![1.0, 1.0]), vec![0.5, 0.5], 0.5);
        let r = aipw_ace(&d, &f, 0.05).unwrap();
        assert!((r.tau_hat - 1.0).abs() < 1e-15);

        // psi1 = (3, 1), psi0 = (0, -1/6); tau = 25/12
        let d = dataset(vec![2.0, 0.0], vec![1, 0]);
        let f = fit(vec![0.0, 0.5], Some(vec![1.0, 1.0]), vec![0.5, 0.25], 0.5);
        let r = aipw_ace(&d, &f, 0.05).unwrap();
        assert!((r.tau_hat - 25.0 / 12.0).abs() < 1e-12, "tau = {}", r.tau_hat);

        // mu1 == mu0 and zero residuals -> 0
        let d = dataset(vec![0.5, 0.5], vec![1, 0]);
        let f = fit(vec![0.5, 0.5], Some(vec![0.5, 0.5]), vec![0.5, 0.5], 0.5);
        assert_eq!(aipw_ace(&d, &f, 0.05).unwrap().tau_hat, 0.0);
    }

    #[test]
    fn aipw_ace_requires_mu1() {
        let d = dataset(vec![1.0, 0.0], vec![1, 0]);
        let f = fit(vec![0.0, 0.0], None, vec![0.5, 0.5], 0.5);
        assert!(matches!(aipw_ace(&d, &f, 0.05), Err(Error::Config(_))));
    }

    #[test]
    fn aipw_acet_hand_case() {
        let d = dataset(vec![2.0, 1.0], vec![1, 0]);
        let f = fit(vec![0.5, 0.5], None, vec![0.5, 0.5], 0.5);
        let r = aipw_acet(&d, &f, 0.05).unwrap();
        assert!((r.tau_hat - 1.0).abs() < 1e-12, "tau_t = {}", r.tau_hat);
        assert!((r.variance - 1.0).abs() < 1e-12, "V_t = {}", r.variance);
    }

    #[test]
    fn aipw_acet_zero_residual_case() {
        // treated outcomes equal mu0 + c, controls fit perfectly
        let c = 2.5;
        let d = dataset(vec![1.0 + c, 2.0 + c, 1.5, 3.0], vec![1, 1, 0, 0]);
        let f = fit(vec![1.0, 2.0, 1.5, 3.0], None, vec![0.4; 4], 0.5);
        let r = aipw_acet(&d, &f, 0.05).unwrap();
        assert!((r.tau_hat - c).abs() < 1e-12);
        assert!(r.variance.abs() < 1e-12);
        assert_eq!(r.ci_low, r.ci_high);
    }

    #[test]
    fn aipw_acet_needs_both_arms() {
        let d = dataset(vec![1.0, 2.0], vec![1, 1]);
        let f = fit(vec![0.0, 0.0], None, vec![0.5, 0.5], 0.5);
        assert!(matches!(aipw_acet(&d, &f, 0.05), Err(Error::Data(_))));
    }

    #[test]
    fn psi11_cancellation_identity() {
        // psi_{1,1} equals 1{t=1} y / P[T=1] for any p in (0,1).
        let mut rng = crate::rng::Rng::new(1234);
        for _ in 0..10_000 {
            let y = rng.uniform(-10.0, 10.0);
            let t = rng.bernoulli(0.5).unwrap();
            let p = rng.uniform(0.01, 0.99);
            let pm = rng.uniform(0.05, 0.95);
            let lit = psi_acet(y, t, rng.uniform(-5.0, 5.0), p, pm, 1, 1).unwrap();
            let reduced = if t == 1 { y / pm } else { 0.0 };
            assert!(
                (lit - reduced).abs() <= 1e-12 * (1.0 + reduced.abs()),
                "lit={lit} reduced={reduced}"
            );
        }
    }

    #[test]
    fn acet_invariant_to_p_at_treated_points() {
        let n = 50;
        let mut rng = crate::rng::Rng::new(99);
        let y: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let t: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let mu0: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.uniform(0.2, 0.8)).collect();
        let d = dataset(y, t.clone());
        let pm = NuisanceFit::marginal_from_data(&t);

        let base = aipw_acet(&d, &fit(mu0.clone(), None, p.clone(), pm), 0.05).unwrap();
        // Perturb p only at treated indices; the point estimate must not move.
        let mut p2 = p;
        for i in 0..n {
            if t[i] == 1 {
                p2[i] = (p2[i] * 0.37 + 0.21).clamp(0.05, 0.95);
            }
        }
        let pert = aipw_acet(&d, &fit(mu0, None, p2, pm), 0.05).unwrap();
        assert!(
            (base.tau_hat - pert.tau_hat).abs() <= 1e-12 * (1.0 + base.tau_hat.abs()),
            "{} vs {}",
            base.tau_hat,
            pert.tau_hat
        );
    }

    #[test]
    fn naive_hand_values() {
        assert_eq!(naive_diff(&dataset(vec![2.0, 1.0], vec![1, 0])).unwrap(), 1.0);
        assert_eq!(naive_diff(&dataset(vec![1.5, 1.5], vec![1, 0])).unwrap(), 0.0);
        let d = dataset(vec![3.0, 1.0, 2.0, 0.0], vec![1, 1, 0, 0]);
        assert_eq!(naive_diff(&d).unwrap(), 1.0);
        assert!(naive_diff(&dataset(vec![1.0], vec![1])).is_err());
    }

    #[test]
    fn or_estimator_hand_values() {
        // ACET, treated residuals all equal 2
        let d = dataset(vec![3.0, 4.0, 0.0], vec![1, 1, 0]);
        let f = fit(vec![1.0, 2.0, 0.0], None, vec![0.5; 3], 0.5);
        assert_eq!(or_estimator(&d, &f, Estimand::Acet).unwrap(), 2.0);

        // ACE with mu1 == mu0 -> 0
        let f = fit(vec![1.0, 2.0, 0.0], Some(vec![1.0, 2.0, 0.0]), vec![0.5; 3], 0.5);
        assert_eq!(or_estimator(&d, &f, Estimand::Ace).unwrap(), 0.0);

        // ACET, y=(2,1), t=(1,0), mu0=0.5 -> 1.5
        let d = dataset(vec![2.0, 1.0], vec![1, 0]);
        let f = fit(vec![0.5, 0.5], None, vec![0.5, 0.5], 0.5);
        assert_eq!(or_estimator(&d, &f, Estimand::Acet).unwrap(), 1.5);
    }

    #[test]
    fn zero_residual_ace_equals_or() {
        // if y_i = mu_{t_i}(x_i) for all i, AIPW reduces to the OR estimator
        let mu0 = vec![0.3, -0.2, 1.0, 0.7];
        let mu1 = vec![1.3, 0.4, 2.0, 0.2];
        let t = vec![1u8, 0, 1, 0];
        let y: Vec<f64> = (0..4)
            .map(|i| if t[i] == 1 { mu1[i] } else { mu0[i] })
            .collect();
        let d = dataset(y, t);
        let f = fit(mu0, Some(mu1), vec![0.42, 0.61, 0.5, 0.37], 0.5);
        let aipw = aipw_ace(&d, &f, 0.05).unwrap().tau_hat;
        let or = or_estimator(&d, &f, Estimand::Ace).unwrap();
        assert_eq!(aipw, or);
    }

    #[test]
    fn confidence_interval_hand_values() {
        assert_eq!(confidence_interval(2.0, 0.0, 10, 0.05).unwrap(), (2.0, 2.0));
        let (lo, hi) = confidence_interval(1.0, 1.0, 100, 0.05).unwrap();
        assert!((lo - 0.804004).abs() < 1e-6, "lo = {lo}");
        assert!((hi - 1.195996).abs() < 1e-6, "hi = {hi}");
        // alpha = 0.32: half width = PHI^{-1}(0.84) * sqrt(V/n)
        let (lo, hi) = confidence_interval(0.0, 4.0, 16, 0.32).unwrap();
        let half = (hi - lo) / 2.0;
        assert!((half - 0.994458 * 0.5).abs() < 1e-6);
        assert!(confidence_interval(0.0, -1.0, 10, 0.05).is_err());
    }

    #[test]
    fn ci_nesting_in_alpha() {
        let wide = confidence_interval(1.0, 2.0, 50, 0.01).unwrap();
        let narrow = confidence_interval(1.0, 2.0, 50, 0.10).unwrap();
        assert!(wide.0 <= narrow.0 && narrow.1 <= wide.1);
    }

    #[test]
    fn variances_nonnegative_random_inputs() {
        let mut rng = crate::rng::Rng::new(2024);
        for _ in 0..200 {
            let n = 2 + rng.below(40);
            let mut t: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5).unwrap()).collect();
            t[0] = 1;
            t[n - 1] = 0;
            let y: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let mu0: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let mu1: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 0.95)).collect();
            let pm = NuisanceFit::marginal_from_data(&t);
            let d = dataset(y, t);
            let f = fit(mu0, Some(mu1), p, pm);
            assert!(aipw_ace(&d, &f, 0.05).unwrap().variance >= 0.0);
            assert!(aipw_acet(&d, &f, 0.05).unwrap().variance >= 0.0);
        }
    }
}
