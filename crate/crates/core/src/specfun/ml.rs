//! Mittag-Leffler functions.
//!
//! The three-parameter (Prabhakar) function
//! `E^delta_{beta,gamma}(w) = sum_r (delta)_r w^r / (r! Gamma(beta r + gamma))`
//! is summed in MPFR arithmetic. For negative `w` the terms alternate and
//! grow by many orders of magnitude before decaying, so the working precision
//! is chosen from the observed cancellation and raised until at least 64
//! significant bits survive.
//!
//! Two regimes bypass the series:
//! * `delta = gamma = 1`, `w < 0`, `beta < 1`: the completely monotone
//!   spectral representation, a positive integral that is accurate for any `w`;
//! * `delta = 1`, `w < -50`, `beta < 1`: the algebraic asymptotic expansion.

use rug::Float;

use super::quad::adaptive_gk;
use super::rgamma;
use crate::error::{invalid, Error, Result};

/// Parameters `(beta, gamma, delta)` of `E^delta_{beta,gamma}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLParams {
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl MLParams {
    pub fn new(beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let p = MLParams { beta, gamma, delta };
        p.validate()?;
        Ok(p)
    }

    /// One-parameter function `E_beta`.
    pub fn one(beta: f64) -> Result<Self> {
        Self::new(beta, 1.0, 1.0)
    }

    /// Two-parameter function `E_{beta,gamma}`.
    pub fn two(beta: f64, gamma: f64) -> Result<Self> {
        Self::new(beta, gamma, 1.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(invalid(format!("Mittag-Leffler order beta must be > 0, got {}", self.beta)));
        }
        if !self.gamma.is_finite() {
            return Err(invalid("Mittag-Leffler gamma must be finite"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(invalid(format!("Prabhakar exponent delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Evaluates `E^delta_{beta,gamma}(w)`.
pub fn ml(params: &MLParams, w: f64) -> Result<f64> {
    params.validate()?;
    if !w.is_finite() {
        return Err(invalid("Mittag-Leffler argument must be finite"));
    }
    let MLParams { beta, gamma, delta } = *params;
    if delta == 1.0 && w < 0.0 && beta < 1.0 {
        if gamma == 1.0 {
            return Ok(ml_one_negative(beta, -w));
        }
        if w < -50.0 {
            return Ok(asymptotic_negative(beta, gamma, -w));
        }
    }
    let series = prabhakar_mp(beta, gamma, delta, w)?;
    Ok(series.sum.to_f64())
}

/// Result of an extended-precision series evaluation.
pub(crate) struct MpSeries {
    pub sum: Float,
    #[allow(dead_code)]
    pub terms: usize,
}

const MAX_TERMS: usize = 10_000;
const MAX_BITS: u32 = 1 << 15;
const GUARD_BITS: i64 = 64;

/// Sums the Prabhakar series at a working precision sufficient to retain
/// [`GUARD_BITS`] significant bits after cancellation.
pub(crate) fn prabhakar_mp(beta: f64, gamma: f64, delta: f64, w: f64) -> Result<MpSeries> {
    let mut prec = 128_u32;
    loop {
        let pass = series_at(beta, gamma, delta, w, prec)?;
        let lost = match (pass.max_exp, pass.sum.get_exp()) {
            (None, _) => return Ok(MpSeries { sum: pass.sum, terms: pass.terms }),
            (Some(max), Some(e)) => i64::from(max) - i64::from(e),
            (Some(_), None) => i64::from(prec),
        };
        if i64::from(prec) - lost >= GUARD_BITS {
            return Ok(MpSeries { sum: pass.sum, terms: pass.terms });
        }
        let mut next = (lost + GUARD_BITS + 32).max(0) as u32;
        if next <= prec {
            next = prec * 2;
        }
        if next > MAX_BITS {
            return Err(Error::NonConvergence { partial_sum: pass.sum.to_f64(), terms: pass.terms });
        }
        prec = next;
    }
}

struct Pass {
    sum: Float,
    terms: usize,
    max_exp: Option<i32>,
}

fn is_nonpositive_integer(x: &Float) -> bool {
    x.is_integer() && *x <= 0
}

fn series_at(beta: f64, gamma: f64, delta: f64, w: f64, prec: u32) -> Result<Pass> {
    let beta_mp = Float::with_val(prec, beta);
    let gamma_mp = Float::with_val(prec, gamma);
    let w_mp = Float::with_val(prec, w);
    // (delta)_j w^j / j!
    let mut coeff = Float::with_val(prec, 1);
    let mut sum = Float::new(prec);
    let mut max_exp: Option<i32> = None;
    let mut small_run = 0;
    let mut previous_exp: Option<i32> = None;
    for j in 0..MAX_TERMS {
        let arg = Float::with_val(prec, &beta_mp * j as u32) + &gamma_mp;
        let term = if coeff.is_zero() || is_nonpositive_integer(&arg) {
            Float::new(prec)
        } else {
            let g = arg.gamma();
            Float::with_val(prec, &coeff / &g)
        };
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
            (None, _) => !sum.is_zero() || coeff.is_zero(),
            (Some(e), Some(s)) => i64::from(e) < i64::from(s) - 60,
            (Some(_), None) => false,
        };
        if negligible && decreasing {
            small_run += 1;
            if small_run >= 3 {
                return Ok(Pass { sum, terms: j + 1, max_exp });
            }
        } else {
            small_run = 0;
        }
        previous_exp = term_exp;
        coeff *= Float::with_val(prec, delta) + j as u32;
        coeff *= &w_mp;
        coeff /= (j + 1) as u32;
    }
    Err(Error::NonConvergence { partial_sum: sum.to_f64(), terms: MAX_TERMS })
}

/// `E_beta(-x)` for `0 < beta < 1`, `x >= 0`, from the spectral integral
/// `E_beta(-x) = sin(beta pi)/(beta pi) * int_0^inf exp(-(x v)^{1/beta}) / (v^2 + 2 v cos(beta pi) + 1) dv`,
/// split at `v = 1` and folded onto `[0, 1]`.
pub(crate) fn ml_one_negative(beta: f64, x: f64) -> f64 {
    use std::f64::consts::PI;
    if x == 0.0 {
        return 1.0;
    }
    let c = (beta * PI).cos();
    let inv = 1.0 / beta;
    let lower =
        adaptive_gk(|v: f64| (-(x * v).powf(inv)).exp() / (v * v + 2.0 * v * c + 1.0), 0.0, 1.0, 1e-14, 1e-300, 2000);
    let upper = adaptive_gk(
        |u: f64| {
            if u == 0.0 {
                0.0
            } else {
                (-(x / u).powf(inv)).exp() / (1.0 + 2.0 * u * c + u * u)
            }
        },
        0.0,
        1.0,
        1e-14,
        1e-300,
        2000,
    );
    let value = (beta * PI).sin() / (beta * PI) * (lower.value + upper.value);
    value.clamp(0.0, 1.0)
}

/// Algebraic-decay expansion `E_{beta,gamma}(-x) ~ sum_{k>=1} (-1)^{k+1} x^{-k} / Gamma(gamma - beta k)`,
/// truncated at the smallest term.
fn asymptotic_negative(beta: f64, gamma: f64, x: f64) -> f64 {
    let mut sum = 0.0;
    let mut previous = f64::INFINITY;
    let mut power = 1.0;
    for k in 1..200 {
        power /= x;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * power * rgamma(gamma - beta * k as f64);
        let magnitude = term.abs();
        if magnitude != 0.0 && magnitude > previous {
            break;
        }
        sum += term;
        if magnitude != 0.0 {
            previous = magnitude;
            if magnitude < 1e-17 * sum.abs() {
                break;
            }
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_reduction() {
        let p = MLParams::new(1.0, 1.0, 1.0).unwrap();
        for &w in &[-30.0, -7.5, -1.0, 0.0, 0.3, 5.0, 30.0] {
            let v = ml(&p, w).unwrap();
            let e = f64::exp(w);
            assert!(((v - e) / e).abs() < 1e-12, "w={w}: {v} vs {e}");
        }
    }

    #[test]
    fn rejects_bad_order() {
        assert!(MLParams::new(0.0, 1.0, 1.0).is_err());
        assert!(MLParams::new(-0.5, 1.0, 1.0).is_err());
        assert!(MLParams::new(0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn spectral_matches_series_moderate_argument() {
        for &beta in &[0.3, 0.6, 0.9] {
            for &x in &[0.1, 1.0, 4.0] {
                let spectral = ml_one_negative(beta, x);
                let series = prabhakar_mp(beta, 1.0, 1.0, -x).unwrap().sum.to_f64();
                assert!(((spectral - series) / series).abs() < 1e-12, "beta={beta} x={x}: {spectral} vs {series}");
            }
        }
    }

    #[test]
    fn asymptotic_matches_series_at_crossover() {
        // E_{0.8,1.5}(-60): both routes are usable here.
        let series = prabhakar_mp(0.8, 1.5, 1.0, -60.0).unwrap().sum.to_f64();
        let asym = asymptotic_negative(0.8, 1.5, 60.0);
        assert!(((series - asym) / series).abs() < 1e-10, "{series} vs {asym}");
    }

    #[test]
    fn zero_delta_is_reciprocal_gamma() {
        let p = MLParams::new(0.7, 2.5, 0.0).unwrap();
        let v = ml(&p, -3.0).unwrap();
        assert!((v - 1.0 / libm::tgamma(2.5)).abs() < 1e-15);
    }
}
