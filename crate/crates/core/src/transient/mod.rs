//! Transient state probabilities of the fractional M/M/1 queue.
//!
//! For `lambda != mu`,
//!
//! ```text
//! p_k(t) = (1 - rho) rho^k
//!        + rho^k  sum_r sum_{m <= k+r+i} (r-m)/(r+m) C(r+m, r) lambda^r mu^{m-1} Q(r+m)
//!        +        sum_r [C(N, r) - C(N, k+r)] lambda^{k+r-i} mu^r Q(N+1),   N = k+2r-i
//! ```
//!
//! with `rho = lambda/mu` and
//! `Q(n) = t^{alpha(n-1)} E^n_{alpha, alpha(n-1)+1}(-(lambda+mu) t^alpha)`.
//! Both series only ever need `Q` on the positive integers, so one
//! [`TransientSeries`] caches `ln Q(n)` and serves every state `k` at a
//! fixed `t`. Each `Q(n)` comes from the extended-precision Prabhakar series.

mod laplace;

pub use laplace::{gaver_stehfest, invert_laplace, laplace_p0, p0_roots, talbot};

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sim::ModelParams;
use crate::specfun::{self, ln_binomial, CompensatedSum};

/// Default truncation tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_OUTER_TERMS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientQuery {
    pub params: ModelParams,
    pub k: u64,
    pub t: f64,
    pub tol: f64,
}

impl TransientQuery {
    pub fn new(params: ModelParams, k: u64, t: f64) -> Self {
        TransientQuery { params, k, t, tol: DEFAULT_TOL }
    }
}

/// A transient probability with truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientResult {
    /// Series value clamped to [0, 1].
    pub probability: f64,
    /// Series value before clamping.
    pub raw: f64,
    pub terms_used: usize,
    /// Sum of the largest term magnitudes of the last three outer blocks.
    pub truncation_bound: f64,
    /// Set when `lambda > mu`.
    pub unstable_regime: bool,
    /// Estimated absolute rounding error, `1e-14` times the sum of term magnitudes.
    /// Large in the unstable regime once `(lambda/mu)^k` dominates.
    pub rounding_bound: f64,
}

fn check_params(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.lambda == params.mu {
        return Err(Error::UnsupportedParameter("transient formulas require lambda != mu".to_string()));
    }
    Ok(())
}

/// Evaluator of `p_k^alpha(t)` for all `k` at one time point.
pub struct TransientSeries {
    params: ModelParams,
    t: f64,
    tol: f64,
    w: f64,
    ln_q: Vec<Option<f64>>,
    gammas: ReciprocalGammas,
}

/// `1/Gamma(alpha m + 1)` for `m = 0, 1, ...` at one working precision.
/// Every `Q(n)` series draws its coefficients from this single family.
struct ReciprocalGammas {
    alpha: f64,
    prec: u32,
    values: Vec<Float>,
}

impl ReciprocalGammas {
    fn get(&mut self, m: usize, prec: u32) -> &Float {
        if prec > self.prec {
            self.prec = prec;
            self.values.clear();
        }
        while self.values.len() <= m {
            let arg =
                Float::with_val(self.prec, Float::with_val(self.prec, self.alpha) * self.values.len() as u32) + 1u32;
            self.values.push(Float::with_val(self.prec, arg.gamma().recip_ref()));
        }
        &self.values[m]
    }
}

const Q_MAX_TERMS: usize = 20_000;
const Q_MAX_BITS: u32 = 1 << 15;
const Q_GUARD_BITS: i64 = 64;

impl TransientSeries {
    pub fn new(params: ModelParams, t: f64, tol: f64) -> Result<Self> {
        check_params(&params)?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid(format!("time must be finite and >= 0, got {t}")));
        }
        if !(tol > 0.0) {
            return Err(invalid(format!("tolerance must be > 0, got {tol}")));
        }
        let w = -params.theta() * t.powf(params.alpha);
        let gammas = ReciprocalGammas { alpha: params.alpha, prec: 0, values: Vec::new() };
        Ok(TransientSeries { params, t, tol, w, ln_q: Vec::new(), gammas })
    }

    /// `ln Q(n)` for `n >= 1`.
    fn ln_q(&mut self, n: usize) -> Result<f64> {
        debug_assert!(n >= 1);
        if self.ln_q.len() <= n {
            self.ln_q.resize(n + 1, None);
        }
        if let Some(v) = self.ln_q[n] {
            return Ok(v);
        }
        let shift = self.params.alpha * (n - 1) as f64;
        let sum = self.q_series(n)?;
        let ln_sum = Float::with_val(sum.prec(), sum.ln_ref()).to_f64();
        let v = shift * self.t.ln() + ln_sum;
        self.ln_q[n] = Some(v);
        Ok(v)
    }

    /// `E^n_{alpha, alpha(n-1)+1}(w) = sum_j (n)_j w^j / (j! Gamma(alpha(j+n-1) + 1))`,
    /// raising the working precision until 64 bits survive the cancellation.
    fn q_series(&mut self, n: usize) -> Result<Float> {
        let mut prec = 128_u32;
        loop {
            let (sum, max_exp, terms) = self.q_series_at(n, prec)?;
            let lost = match (max_exp, sum.get_exp()) {
                (None, _) => 0,
                (Some(max), Some(e)) => i64::from(max) - i64::from(e),
                (Some(_), None) => i64::from(prec),
            };
            if i64::from(prec) - lost >= Q_GUARD_BITS {
                if sum <= 0 {
                    return Err(Error::NonConvergence { partial_sum: sum.to_f64(), terms });
                }
                return Ok(sum);
            }
            let next = ((lost + Q_GUARD_BITS + 32).max(0) as u32).max(2 * prec);
            if next > Q_MAX_BITS {
                return Err(Error::NonConvergence { partial_sum: sum.to_f64(), terms });
            }
            prec = next;
        }
    }

    fn q_series_at(&mut self, n: usize, prec: u32) -> Result<(Float, Option<i32>, usize)> {
        let w = Float::with_val(prec, self.w);
        let mut coeff = Float::with_val(prec, 1);
        let mut sum = Float::new(prec);
        let mut max_exp: Option<i32> = None;
        let mut previous_exp: Option<i32> = None;
        let mut small_run = 0;
        for j in 0..Q_MAX_TERMS {
            let term = Float::with_val(prec, &coeff * self.gammas.get(j + n - 1, prec));
            sum += &term;
            let term_exp = term.get_exp();
            if let Some(e) = term_exp {
                max_exp = Some(max_exp.map_or(e, |m| m.max(e)));
            }
            let decreasing = match (term_exp, previous_exp) {
                (None, _) => true,
                (Some(e), Some(p)) => e <= p,
                (Some(_), None) => false,
            };
            let negligible = match (term_exp, sum.get_exp()) {
                (None, _) => true,
                (Some(e), Some(s)) => i64::from(e) < i64::from(s) - 60,
                (Some(_), None) => false,
            };
            if negligible && decreasing {
                small_run += 1;
                if small_run >= 3 {
                    return Ok((sum, max_exp, j + 1));
                }
            } else {
                small_run = 0;
            }
            previous_exp = term_exp;
            coeff *= (n + j) as u32;
            coeff *= &w;
            coeff /= (j + 1) as u32;
        }
        Err(Error::NonConvergence { partial_sum: sum.to_f64(), terms: Q_MAX_TERMS })
    }

    /// `p_k^alpha(t)`.
    pub fn probability(&mut self, k: u64) -> Result<TransientResult> {
        let ModelParams { lambda, mu, initial_state: i, .. } = self.params;
        let unstable_regime = lambda > mu;
        if self.t == 0.0 {
            let p = if k == i { 1.0 } else { 0.0 };
            return Ok(TransientResult {
                probability: p,
                raw: p,
                terms_used: 0,
                truncation_bound: 0.0,
                unstable_regime,
                rounding_bound: 0.0,
            });
        }
        let (k, i) = (k as i64, i as i64);
        let ln_lambda = lambda.ln();
        let ln_mu = mu.ln();
        let rho = lambda / mu;
        let ln_rho_k = k as f64 * (ln_lambda - ln_mu);

        let mut total = CompensatedSum::new();
        let steady = (1.0 - rho) * rho.powi(k as i32);
        total.add(steady);
        let mut magnitude_sum = steady.abs();
        let mut terms_used = 0;
        let mut recent = [f64::INFINITY; 3];
        for r in 0..MAX_OUTER_TERMS as i64 {
            let mut block_max: f64 = 0.0;
            for m in 0..=(k + r + i) {
                if m == r {
                    continue;
                }
                let n = r + m;
                let ln_coef = ((r - m).abs() as f64).ln() - (n as f64).ln()
                    + ln_binomial(n, r)
                    + r as f64 * ln_lambda
                    + (m - 1) as f64 * ln_mu
                    + ln_rho_k;
                let magnitude = (ln_coef + self.ln_q(n as usize)?).exp();
                let term = if r > m { magnitude } else { -magnitude };
                total.add(term);
                magnitude_sum += magnitude;
                block_max = block_max.max(magnitude);
                terms_used += 1;
            }
            let big_n = k + 2 * r - i;
            if big_n >= 0 && k != 0 && i != 0 {
                if let Some(diff_factor) = binomial_difference_factor(big_n, r, k + r) {
                    let ln_rest = ln_binomial(big_n, r)
                        + (k + r - i) as f64 * ln_lambda
                        + r as f64 * ln_mu
                        + self.ln_q(big_n as usize + 1)?;
                    let term = diff_factor * ln_rest.exp();
                    total.add(term);
                    magnitude_sum += term.abs();
                    block_max = block_max.max(term.abs());
                    terms_used += 1;
                } else if let Some(ln_c2) = Some(ln_binomial(big_n, k + r)).filter(|v| v.is_finite()) {
                    // C(N, r) = 0 while C(N, k+r) > 0.
                    let ln_rest =
                        ln_c2 + (k + r - i) as f64 * ln_lambda + r as f64 * ln_mu + self.ln_q(big_n as usize + 1)?;
                    let term = -ln_rest.exp();
                    total.add(term);
                    magnitude_sum += term.abs();
                    block_max = block_max.max(term.abs());
                    terms_used += 1;
                }
            }
            recent.rotate_left(1);
            recent[2] = block_max;
            let threshold = self.tol * total.value().abs();
            if r >= 2 && recent.iter().all(|&b| b < threshold || b == 0.0) && recent[2] <= recent[1] {
                let raw = total.value();
                let rounding_bound = 1e-14 * magnitude_sum;
                return Ok(finish(raw, terms_used, recent.iter().sum(), self.tol, unstable_regime, rounding_bound));
            }
        }
        Err(Error::NonConvergence { partial_sum: total.value(), terms: terms_used })
    }

    /// `p_0, ..., p_kmax`.
    pub fn distribution(&mut self, kmax: u64) -> Result<Vec<TransientResult>> {
        (0..=kmax).map(|k| self.probability(k)).collect()
    }
}

/// `1 - C(N, b)/C(N, a)` for `a < b`, or `None` when `C(N, a) = 0`.
fn binomial_difference_factor(n: i64, a: i64, b: i64) -> Option<f64> {
    if a < 0 || a > n {
        return None;
    }
    if b > n {
        return Some(1.0);
    }
    // C(N, b)/C(N, a) = prod_{j=a+1}^{b} (N - j + 1)/j
    let mut ratio = 1.0;
    for j in (a + 1)..=b {
        ratio *= (n - j + 1) as f64 / j as f64;
    }
    Some(1.0 - ratio)
}

fn finish(
    raw: f64,
    terms_used: usize,
    truncation_bound: f64,
    tol: f64,
    unstable_regime: bool,
    rounding_bound: f64,
) -> TransientResult {
    let slack = tol.max(rounding_bound);
    if raw < -slack || raw > 1.0 + slack {
        log::warn!("transient probability {raw:e} outside [0, 1] beyond tolerance {tol:e}");
    } else if !(0.0..=1.0).contains(&raw) {
        log::debug!("clamping transient probability {raw:e}");
    }
    TransientResult {
        probability: raw.clamp(0.0, 1.0),
        raw,
        terms_used,
        truncation_bound,
        unstable_regime,
        rounding_bound,
    }
}

/// `p_k^alpha(t)` for a single query.
pub fn state_probability(query: &TransientQuery) -> Result<TransientResult> {
    TransientSeries::new(query.params, query.t, query.tol)?.probability(query.k)
}

/// `p_0^alpha(t), ..., p_kmax^alpha(t)`.
pub fn state_distribution(params: ModelParams, t: f64, tol: f64, kmax: u64) -> Result<Vec<TransientResult>> {
    TransientSeries::new(params, t, tol)?.distribution(kmax)
}

/// Classical (`alpha = 1`) transient probability in its double-sum closed form,
/// summed in MPFR.
/// `params.alpha` is ignored.
pub fn state_probability_classical(params: &ModelParams, k: u64, t: f64) -> Result<f64> {
    check_params(&ModelParams { alpha: 1.0, ..*params })?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time must be finite and >= 0, got {t}")));
    }
    let i = params.initial_state;
    if t == 0.0 {
        return Ok(if k == i { 1.0 } else { 0.0 });
    }
    let (lambda, mu) = (params.lambda, params.mu);
    let theta_t = (lambda + mu) * t;
    let prec = 128 + (2.0 * theta_t * std::f64::consts::LOG2_E).ceil() as u32;
    let f = |x: f64| Float::with_val(prec, x);
    let lt = f(lambda * t);
    let mt = f(mu * t);
    let rho_k = Float::with_val(prec, f(lambda / mu).pow(k as u32));
    let (k, i) = (k as i64, i as i64);

    // Prefix sums over m of (mu t)^{m-1}/m! and m (mu t)^{m-1}/m!.
    let mut a_sum = Float::new(prec);
    let mut b_sum = Float::new(prec);
    let mut m_term = Float::with_val(prec, 1 / &mt); // (mu t)^{m-1}/m! at m = 0
    let mut m_next = 0_i64;
    let mut advance_to = |limit: i64, a: &mut Float, b: &mut Float, term: &mut Float| {
        while m_next <= limit {
            *a += &*term;
            *b += Float::with_val(prec, &*term * m_next);
            *term *= &mt;
            *term /= (m_next + 1) as u32;
            m_next += 1;
        }
    };

    let mut first = Float::new(prec);
    let mut second = Float::new(prec);
    let mut lam_pow = f(1.0); // (lambda t)^r / r!
    let floor = Float::with_val(prec, Float::i_exp(1, -80));
    let r_min = (2.0 * theta_t).ceil() as i64 + 20;
    let mut r = 0_i64;
    loop {
        advance_to(k + r + i, &mut a_sum, &mut b_sum, &mut m_term);
        let inner = Float::with_val(prec, &a_sum * r) - &b_sum;
        let block1 = Float::with_val(prec, &lam_pow * &inner);
        first += &block1;

        let mut block2 = Float::new(prec);
        let e1 = k + r - i;
        if e1 >= 0 {
            let pw = Float::with_val(prec, lt.clone().pow(e1 as u32) * mt.clone().pow(r as u32));
            let mut c = Float::with_val(
                prec,
                1.0 / (Float::with_val(prec, Float::factorial(r as u32))
                    * Float::with_val(prec, Float::factorial(e1 as u32))),
            );
            if r - i >= 0 {
                c -= Float::with_val(
                    prec,
                    1.0 / (Float::with_val(prec, Float::factorial((k + r) as u32))
                        * Float::with_val(prec, Float::factorial((r - i) as u32))),
                );
            }
            block2 = pw * c;
            second += &block2;
        }

        let scale = Float::with_val(prec, (-theta_t).exp());
        let small = Float::with_val(prec, block1.clone().abs() * &scale) < floor
            && Float::with_val(prec, block2.abs() * &scale) < floor;
        if r >= r_min && small {
            break;
        }
        if r > 100_000 {
            return Err(Error::NonConvergence { partial_sum: f64::NAN, terms: r as usize });
        }
        r += 1;
        lam_pow *= &lt;
        lam_pow /= r as u32;
    }
    let decay = Float::with_val(prec, -theta_t).exp();
    let steady = (1.0 - lambda / mu) * (lambda / mu).powi(k as i32);
    let series = Float::with_val(prec, &rho_k * &first) + &second;
    let value = Float::with_val(prec, series * decay) + steady;
    Ok(value.to_f64())
}

/// Geometric steady-state law `(1 - rho) rho^k`, `rho = lambda/mu < 1`.
pub fn steady_state(params: &ModelParams, k: u64) -> Result<f64> {
    params.validate()?;
    if params.lambda >= params.mu {
        return Err(Error::NoSteadyState { lambda: params.lambda, mu: params.mu });
    }
    let rho = params.lambda / params.mu;
    Ok((1.0 - rho) * rho.powi(k as i32))
}

/// Mean queue length
/// `E N(t) = i + (lambda - mu) t^alpha / Gamma(alpha + 1) + mu J^alpha p_0(t)`,
/// with `p_0` evaluated at the quadrature nodes.
pub fn mean_queue_length(params: &ModelParams, t: f64, tol: f64) -> Result<f64> {
    check_params(params)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time must be finite and >= 0, got {t}")));
    }
    let i = params.initial_state as f64;
    if t == 0.0 {
        return Ok(i);
    }
    let alpha = params.alpha;
    let failure = std::cell::RefCell::new(None);
    let p0 = |y: f64| match TransientSeries::new(*params, y, tol).and_then(|mut s| s.probability(0)) {
        Ok(r) => r.raw,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let integral = specfun::rl_fractional_integral(p0, alpha, t)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(i + (params.lambda - params.mu) * t.powf(alpha) / specfun::gamma(alpha + 1.0) + params.mu * integral)
}
