//! Closed-form point and interval estimators for `(alpha, theta, lambda, mu)`.
//!
//! Both models rest on the log-sojourn law: for a Mittag-Leffler sojourn with
//! rate `r`, `ln S = -ln(r)/alpha - gamma + eps` where the error
//! `eps = ln(E^{1/alpha} T_alpha) + gamma` has mean zero, variance
//! `pi^2 (1/(3 alpha^2) - 1/6)` and a law that depends on `alpha` only.
//! In the linear model `r = theta k`, so `ln S` is regressed on `ln k`; in the
//! M/M/1 model `r = theta` and plain moments suffice.

mod ks;

pub use ks::{kolmogorov_sf, ks_one_sample, ks_two_sample, KsTest};

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{ml_sojourn_unchecked, RngStream};
use crate::sim::{EventType, SojournData};
use crate::specfun::{two_sided_z, Constants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearBd,
    Mm1,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::LinearBd => "linear_bd",
            ModelKind::Mm1 => "mm1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "linear_bd" | "linear" => Some(ModelKind::LinearBd),
            "mm1" => Some(ModelKind::Mm1),
            _ => None,
        }
    }
}

/// Which asymptotic variance feeds the `lambda` and `mu` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceForm {
    /// Delta-method variances of the estimators as computed:
    /// `theta^2 p q + q^2 s_theta^2` for `mu`, and for the linear model the
    /// `theta` variance of the intercept-replaced estimator.
    #[default]
    DeltaMethod,
    /// `theta^2 p q^2` in the `mu` interval and, for the linear model,
    /// `theta^2 (b0 + gamma)^2 [V_alpha + n alpha^2 s_eps^2 (1/n + lnk_bar^2/s)]`.
    Printed,
}

/// Closed confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    /// `center +- z se`; a zero standard error collapses the interval even when `z` is infinite.
    pub fn symmetric(center: f64, z: f64, se: f64) -> Self {
        let half = if se == 0.0 { 0.0 } else { z * se };
        Interval { lower: center - half, upper: center + half }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Least-squares fit of `ln S` on `ln k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub b0_hat: f64,
    pub b1_hat: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    /// Residual variance with divisor `n - 2`.
    pub sigma2_eps_hat: f64,
    pub ln_k_bar: f64,
    pub s_xx: f64,
    pub n: usize,
}

/// Point estimates with standard errors and confidence intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub model: ModelKind,
    pub n: usize,
    pub n_births: usize,
    pub n_deaths: usize,
    pub level: f64,
    pub alpha_hat: f64,
    pub theta_hat: f64,
    pub lambda_hat: f64,
    pub mu_hat: f64,
    pub p_hat: f64,
    pub se_alpha: f64,
    pub se_theta: f64,
    pub se_lambda: f64,
    pub se_mu: f64,
    pub ci_alpha: Interval,
    pub ci_lambda: Interval,
    pub ci_mu: Interval,
    pub variance_form: VarianceForm,
    /// Set for the M/M/1 fit only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exclude_zero_state: Option<bool>,
}

/// Per-observation asymptotic variance of `alpha_hat`, `alpha^2 (32 - 20 alpha^2 - alpha^4) / 40`.
pub fn alpha_variance(alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    (a2 * (32.0 - 20.0 * a2 - a2 * a2) / 40.0).max(0.0)
}

/// `alpha_hat +- z sqrt(alpha_variance(alpha_hat) / n)`.
pub fn interval_alpha(alpha_hat: f64, n: usize, level: f64) -> Result<Interval> {
    if !(alpha_hat > 0.0) || !alpha_hat.is_finite() {
        return Err(invalid(format!("alpha estimate must be finite and > 0, got {alpha_hat}")));
    }
    if n < 2 {
        return Err(Error::InsufficientData { got: n, need: 2 });
    }
    let z = two_sided_z(level)?;
    Ok(Interval::symmetric(alpha_hat, z, (alpha_variance(alpha_hat) / n as f64).sqrt()))
}

/// `alpha` from the variance of the log-sojourn error.
fn alpha_from_error_variance(var: f64) -> f64 {
    1.0 / (3.0 * (var / (PI * PI) + 1.0 / 6.0)).sqrt()
}

/// Per-observation asymptotic variance of the moment estimator
/// `theta_hat = exp(-alpha_hat (mean ln S + gamma))` for i.i.d. sojourns of rate `theta`.
pub fn theta_variance_mm1(alpha: f64, theta: f64) -> f64 {
    let l = theta.ln();
    let a2 = alpha * alpha;
    let pi2 = PI * PI;
    let bracket = 20.0 * pi2 * pi2 * (2.0 - a2)
        - 3.0 * pi2 * (a2 * a2 + 20.0 * a2 - 32.0) * l * l
        - 720.0 * a2 * alpha * l * Constants::ZETA3;
    (theta * theta * bracket / (120.0 * pi2)).max(0.0)
}

/// Per-observation asymptotic variance of `theta_hat` in the linear model.
pub fn theta_variance_linear(fit: &RegressionFit, alpha: f64, theta: f64, form: VarianceForm) -> f64 {
    match form {
        VarianceForm::DeltaMethod => {
            // theta_hat = exp(-lnk_bar) * exp(-alpha_hat (mean ln S + gamma)), the second
            // factor being the moment estimator for rate theta exp(lnk_bar).
            let shift = fit.ln_k_bar;
            (-2.0 * shift).exp() * theta_variance_mm1(alpha, theta * shift.exp())
        }
        VarianceForm::Printed => {
            let b0_gamma = -theta.ln() / alpha;
            let n = fit.n as f64;
            let a2 = alpha * alpha;
            let bracket = alpha_variance(alpha)
                + n * a2 * fit.sigma2_eps_hat * (1.0 / n + fit.ln_k_bar * fit.ln_k_bar / fit.s_xx);
            (theta * theta * b0_gamma * b0_gamma * bracket).max(0.0)
        }
    }
}

/// Standard errors of `(lambda_hat, mu_hat)` given the `theta` variance.
fn rate_standard_errors(theta: f64, p: f64, n: usize, var_theta: f64, form: VarianceForm) -> (f64, f64) {
    let q = 1.0 - p;
    let n = n as f64;
    let binom_mu = match form {
        VarianceForm::DeltaMethod => p * q,
        VarianceForm::Printed => p * q * q,
    };
    let var_lambda = (theta * theta * p * q + p * p * var_theta) / n;
    let var_mu = (theta * theta * binom_mu + q * q * var_theta) / n;
    (var_lambda.max(0.0).sqrt(), var_mu.max(0.0).sqrt())
}

/// Least-squares regression of `ln S` on `ln k`, one pair per sojourn.
pub fn regress_log_sojourns(data: &SojournData) -> Result<RegressionFit> {
    let n = data.len();
    if n < 3 {
        return Err(Error::InsufficientData { got: n, need: 3 });
    }
    if let Some(r) = data.records.iter().find(|r| r.state_before == 0) {
        return Err(invalid(format!(
            "linear birth-death data cannot contain sojourns in state 0 (duration {})",
            r.duration
        )));
    }
    let x: Vec<f64> = data.records.iter().map(|r| (r.state_before as f64).ln()).collect();
    let y: Vec<f64> = data.records.iter().map(|r| r.duration.ln()).collect();
    let nf = n as f64;
    let x_bar = x.iter().sum::<f64>() / nf;
    let y_bar = y.iter().sum::<f64>() / nf;
    let s_xx: f64 = x.iter().map(|v| (v - x_bar).powi(2)).sum();
    if !(s_xx > 0.0) {
        return Err(Error::IllConditioned("all sojourns share one state, so ln k has no spread".to_string()));
    }
    let s_xy: f64 = x.iter().zip(&y).map(|(a, b)| (a - x_bar) * (b - y_bar)).sum();
    let b1 = s_xy / s_xx;
    let b0 = y_bar - b1 * x_bar;
    let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - b0 - b1 * a).collect();
    let sigma2 = residuals.iter().map(|r| r * r).sum::<f64>() / (nf - 2.0);
    Ok(RegressionFit { b0_hat: b0, b1_hat: b1, residuals, sigma2_eps_hat: sigma2, ln_k_bar: x_bar, s_xx, n })
}

/// Linear-model intervals for `lambda` and `mu`.
pub fn interval_rates_linear(
    fit: &RegressionFit,
    est: &EstimationResult,
    n: usize,
    level: f64,
    form: VarianceForm,
) -> Result<(Interval, Interval)> {
    if !(fit.s_xx > 0.0) {
        return Err(Error::IllConditioned("s_xx must be > 0".to_string()));
    }
    let z = two_sided_z(level)?;
    let var_theta = theta_variance_linear(fit, est.alpha_hat, est.theta_hat, form);
    let (se_l, se_m) = rate_standard_errors(est.theta_hat, est.p_hat, n, var_theta, form);
    Ok((Interval::symmetric(est.lambda_hat, z, se_l), Interval::symmetric(est.mu_hat, z, se_m)))
}

/// M/M/1 intervals for `lambda` and `mu`.
pub fn interval_rates_mm1(
    est: &EstimationResult,
    n: usize,
    level: f64,
    form: VarianceForm,
) -> Result<(Interval, Interval)> {
    let z = two_sided_z(level)?;
    let var_theta = theta_variance_mm1(est.alpha_hat, est.theta_hat);
    let (se_l, se_m) = rate_standard_errors(est.theta_hat, est.p_hat, n, var_theta, form);
    Ok((Interval::symmetric(est.lambda_hat, z, se_l), Interval::symmetric(est.mu_hat, z, se_m)))
}

fn count_births(data: &SojournData) -> usize {
    data.records.iter().filter(|r| r.event_type == EventType::Birth).count()
}

struct Point {
    alpha: f64,
    theta: f64,
    n: usize,
    n_births: usize,
}

fn assemble(
    model: ModelKind,
    point: Point,
    level: f64,
    var_theta: f64,
    form: VarianceForm,
    exclude_zero_state: Option<bool>,
) -> Result<EstimationResult> {
    let Point { alpha, theta, n, n_births } = point;
    if !theta.is_finite() || !alpha.is_finite() {
        return Err(Error::DegenerateData(format!("non-finite estimates alpha={alpha}, theta={theta}")));
    }
    let z = two_sided_z(level)?;
    let p = n_births as f64 / n as f64;
    let lambda = p * theta;
    let mu = theta - lambda;
    let se_alpha = (alpha_variance(alpha) / n as f64).sqrt();
    let (se_lambda, se_mu) = rate_standard_errors(theta, p, n, var_theta, form);
    Ok(EstimationResult {
        model,
        n,
        n_births,
        n_deaths: n - n_births,
        level,
        alpha_hat: alpha,
        theta_hat: theta,
        lambda_hat: lambda,
        mu_hat: mu,
        p_hat: p,
        se_alpha,
        se_theta: (var_theta / n as f64).sqrt(),
        se_lambda,
        se_mu,
        ci_alpha: Interval::symmetric(alpha, z, se_alpha),
        ci_lambda: Interval::symmetric(lambda, z, se_lambda),
        ci_mu: Interval::symmetric(mu, z, se_mu),
        variance_form: form,
        exclude_zero_state,
    })
}

/// Linear birth-death fit with the default interval variance.
pub fn fit_linear_bd(data: &SojournData, level: f64) -> Result<EstimationResult> {
    fit_linear_bd_with(data, level, VarianceForm::default())
}

/// Residual-based linear birth-death fit.
///
/// `alpha` comes from the residual variance of the log-log regression; the
/// intercept is re-estimated as the mean of `ln S + ln(k)/alpha_hat`.
pub fn fit_linear_bd_with(data: &SojournData, level: f64, form: VarianceForm) -> Result<EstimationResult> {
    let fit = regress_log_sojourns(data)?;
    fit_linear_from_regression(data, &fit, level, form)
}

/// Linear fit reusing a precomputed regression on the same data.
pub fn fit_linear_from_regression(
    data: &SojournData,
    fit: &RegressionFit,
    level: f64,
    form: VarianceForm,
) -> Result<EstimationResult> {
    let alpha = alpha_from_error_variance(fit.sigma2_eps_hat);
    let n = data.len();
    let b0 =
        data.records.iter().map(|r| r.duration.ln() + (r.state_before as f64).ln() / alpha).sum::<f64>() / n as f64;
    let theta = (-alpha * (b0 + Constants::EULER_GAMMA)).exp();
    let var_theta = theta_variance_linear(fit, alpha, theta, form);
    assemble(ModelKind::LinearBd, Point { alpha, theta, n, n_births: count_births(data) }, level, var_theta, form, None)
}

/// M/M/1 fit with the default interval variance.
pub fn fit_mm1(data: &SojournData, level: f64, exclude_zero_state: bool) -> Result<EstimationResult> {
    fit_mm1_with(data, level, exclude_zero_state, VarianceForm::default())
}

/// Method-of-moments fit on the log sojourns, sample variance with divisor `n - 1`.
pub fn fit_mm1_with(
    data: &SojournData,
    level: f64,
    exclude_zero_state: bool,
    form: VarianceForm,
) -> Result<EstimationResult> {
    let filtered;
    let data = if exclude_zero_state {
        filtered = data.without_zero_state();
        &filtered
    } else {
        data
    };
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData { got: n, need: 2 });
    }
    let logs: Vec<f64> = data.records.iter().map(|r| r.duration.ln()).collect();
    let (mean, var) = mean_variance(&logs);
    if !(var > 0.0) {
        return Err(Error::DegenerateData("log sojourns have zero sample variance".to_string()));
    }
    let alpha = PI / (3.0 * (var + PI * PI / 6.0)).sqrt();
    let theta = (-alpha * (mean + Constants::EULER_GAMMA)).exp();
    let var_theta = theta_variance_mm1(alpha, theta);
    assemble(
        ModelKind::Mm1,
        Point { alpha, theta, n, n_births: count_births(data) },
        level,
        var_theta,
        form,
        Some(exclude_zero_state),
    )
}

fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Residuals of the fitted log-sojourn model: regression residuals for the
/// linear model, centred log sojourns for M/M/1.
pub fn model_residuals(data: &SojournData, est: &EstimationResult) -> Result<Vec<f64>> {
    match est.model {
        ModelKind::LinearBd => Ok(regress_log_sojourns(data)?.residuals),
        ModelKind::Mm1 => {
            let filtered;
            let data = if est.exclude_zero_state.unwrap_or(false) {
                filtered = data.without_zero_state();
                &filtered
            } else {
                data
            };
            if data.is_empty() {
                return Err(Error::EmptySample);
            }
            let logs: Vec<f64> = data.records.iter().map(|r| r.duration.ln()).collect();
            let (mean, _) = mean_variance(&logs);
            Ok(logs.into_iter().map(|v| v - mean).collect())
        }
    }
}

/// Draws `n` errors `ln(E^{1/alpha} T_alpha) + gamma`.
pub fn sample_log_errors(stream: &mut RngStream, alpha: f64, n: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be finite and > 0, got {alpha}")));
    }
    let a = alpha.min(1.0);
    Ok((0..n).map(|_| ml_sojourn_unchecked(stream, a, 1.0).ln() + Constants::EULER_GAMMA).collect())
}

/// Proportion of `m` two-sample KS tests, residuals against simulated errors
/// at `alpha_hat`, that do not reject at significance `1 - level`.
/// Sample `j` uses stream `(seed, j)`.
pub fn rate_fit_test(data: &SojournData, est: &EstimationResult, m: usize, level: f64, seed: u64) -> Result<f64> {
    if m == 0 {
        return Err(invalid("replicate count m must be >= 1"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("level must lie in (0, 1), got {level}")));
    }
    let residuals = model_residuals(data, est)?;
    let n = residuals.len();
    let alpha = est.alpha_hat;
    let accepted: Vec<bool> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut stream = RngStream::new(seed, j as u64);
            let sim = sample_log_errors(&mut stream, alpha, n)?;
            Ok(ks_two_sample(&residuals, &sim)?.p_value >= 1.0 - level)
        })
        .collect::<Result<_>>()?;
    Ok(accepted.iter().filter(|&&a| a).count() as f64 / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SojournRecord;

    fn record(k: u64, d: f64, birth: bool) -> SojournRecord {
        SojournRecord {
            state_before: k,
            duration: d,
            event_type: if birth { EventType::Birth } else { EventType::Death },
        }
    }

    #[test]
    fn alpha_interval_arithmetic() {
        assert!((alpha_variance(0.5) - 0.168_359_375).abs() < 1e-15);
        let ci = interval_alpha(1.0, 100, 0.95).unwrap();
        assert!((ci.half_width() - 1.959_963_984_540_054 * (0.275f64 / 100.0).sqrt()).abs() < 1e-12);
        let wide = interval_alpha(0.7, 400, 0.9).unwrap().half_width();
        let narrow = interval_alpha(0.7, 800, 0.9).unwrap().half_width();
        assert!((wide / narrow - 2f64.sqrt()).abs() < 1e-12);
        assert!(interval_alpha(0.0, 10, 0.95).is_err());
        assert!(interval_alpha(0.5, 1, 0.95).is_err());
    }

    #[test]
    fn error_variance_pi2_over_6_gives_alpha_one() {
        assert!((alpha_from_error_variance(PI * PI / 6.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mm1_theta_variance_at_unit_theta() {
        for &a in &[0.3, 0.7, 1.0] {
            let v = theta_variance_mm1(a, 1.0);
            assert!((v - PI * PI * (2.0 - a * a) / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mm1_rejects_constant_durations() {
        let data = SojournData::from_records((0..10).map(|i| record(1, 2.0, i % 2 == 0)).collect()).unwrap();
        assert!(matches!(fit_mm1(&data, 0.95, false), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn linear_rejects_state_zero_and_single_state() {
        let with_zero =
            SojournData::from_records(vec![record(0, 1.0, true), record(1, 2.0, true), record(2, 1.5, false)]).unwrap();
        assert!(fit_linear_bd(&with_zero, 0.95).is_err());
        let one_state =
            SojournData::from_records(vec![record(3, 1.0, true), record(3, 2.0, true), record(3, 1.5, false)]).unwrap();
        assert!(matches!(fit_linear_bd(&one_state, 0.95), Err(Error::IllConditioned(_))));
        let short = SojournData::from_records(vec![record(3, 1.0, true), record(4, 2.0, true)]).unwrap();
        assert!(matches!(fit_linear_bd(&short, 0.95), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn degenerate_birth_fraction_collapses_binomial_term() {
        let data =
            SojournData::from_records([0.2, 1.4, 0.7, 2.2, 0.9].iter().map(|&d| record(1, d, true)).collect()).unwrap();
        let est = fit_mm1(&data, 0.95, false).unwrap();
        assert_eq!(est.p_hat, 1.0);
        assert_eq!(est.mu_hat, 0.0);
        assert_eq!(est.ci_mu.lower, 0.0);
        assert_eq!(est.ci_mu.upper, 0.0);
    }
}
