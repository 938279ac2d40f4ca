//! Seeded random variates: uniforms, exponentials, one-sided stable laws and
//! Mittag-Leffler sojourn times.
//!
//! Every [`RngStream`] is a ChaCha8 generator keyed by `seed` with its stream
//! word set to `stream_id`, so replicate `j` of an experiment can own stream
//! `j` without any coordination between workers.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// A single-owner random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            // 53 random bits, offset by half an ulp so 0 is excluded.
            let u = ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
            if u < 1.0 {
                return u;
            }
        }
    }

    /// Standard exponential variate.
    pub fn exponential(&mut self) -> f64 {
        -self.uniform().ln()
    }

    /// Bernoulli trial with success probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random_bool(p.clamp(0.0, 1.0))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// A draw `T_alpha` from the positive stable law with `E exp(-xi T) = exp(-xi^alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableSample {
    pub alpha: f64,
    pub value: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Kanter's representation
/// `T = sin(alpha U) / sin(U)^{1/alpha} * (sin((1 - alpha) U) / E)^{(1 - alpha)/alpha}`
/// with `U ~ U(0, pi)` and `E ~ Exp(1)`. Callers validate `alpha`.
pub(crate) fn stable_unchecked(stream: &mut RngStream, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return 1.0;
    }
    let u = PI * stream.uniform();
    let e = stream.exponential();
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / e;
    a * b.powf((1.0 - alpha) / alpha)
}

pub fn sample_stable(stream: &mut RngStream, alpha: f64) -> Result<StableSample> {
    check_alpha(alpha)?;
    Ok(StableSample { alpha, value: stable_unchecked(stream, alpha) })
}

/// `S = (E / rate)^{1/alpha} T_alpha`, `E ~ Exp(1)`; survival `E_alpha(-rate t^alpha)`.
pub(crate) fn ml_sojourn_unchecked(stream: &mut RngStream, alpha: f64, rate: f64) -> f64 {
    let e = stream.exponential() / rate;
    if alpha == 1.0 {
        return e;
    }
    e.powf(1.0 / alpha) * stable_unchecked(stream, alpha)
}

pub fn sample_ml_sojourn(stream: &mut RngStream, alpha: f64, rate: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(invalid(format!("rate must be finite and > 0, got {rate}")));
    }
    Ok(ml_sojourn_unchecked(stream, alpha, rate))
}

/// One draw of the inverse stable subordinator at time `t`, `E^alpha(t) = (t / T_alpha)^alpha`.
pub fn sample_inverse_subordinator(stream: &mut RngStream, alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if alpha == 1.0 {
        return Ok(t);
    }
    Ok((t / stable_unchecked(stream, alpha)).powf(alpha))
}
