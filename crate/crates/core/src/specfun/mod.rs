//! Special functions shared by the simulators, the transient solver and the
//! estimators.

mod ml;
pub mod quad;

pub(crate) use ml::ml_one_negative;
#[cfg(test)]
pub(crate) use ml::prabhakar_mp;
pub use ml::{ml, MLParams};

use crate::error::{invalid, Result};

/// Mathematical constants used by the estimators.
pub struct Constants;

impl Constants {
    /// Euler-Mascheroni constant.
    pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082;
    /// Apery's constant, zeta(3).
    pub const ZETA3: f64 = 1.202_056_903_159_594_285_399_738_161_511;
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `1 / Gamma(x)`, zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    let g = libm::tgamma(x);
    if g.is_infinite() {
        0.0
    } else {
        1.0 / g
    }
}

/// Natural log of `n choose k` for integer arguments, `-inf` outside the support.
pub fn ln_binomial(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Quantile of the standard normal distribution.
///
/// Acklam's rational approximation followed by one Halley step against
/// `erfc`, giving close to full double precision on (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let p_low = 0.024_25;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Two-sided critical value `z_{eps/2}` for confidence `level = 1 - eps`.
/// `level = 1` gives an infinite critical value.
pub fn two_sided_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(invalid(format!("confidence level must lie in (0, 1], got {level}")));
    }
    Ok(normal_quantile(0.5 + 0.5 * level))
}

fn check_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Survival function of the Mittag-Leffler sojourn law,
/// `Pr{S >= t} = E_alpha(-rate t^alpha)`.
pub fn ml_survival(alpha: f64, rate: f64, t: f64) -> Result<f64> {
    check_order(alpha)?;
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(invalid(format!("rate must be finite and >= 0, got {rate}")));
    }
    if !(t >= 0.0) {
        return Err(invalid(format!("time must be >= 0, got {t}")));
    }
    if t == 0.0 || rate == 0.0 {
        return Ok(1.0);
    }
    if alpha == 1.0 {
        return Ok((-rate * t).exp());
    }
    Ok(ml_one_negative(alpha, rate * t.powf(alpha)))
}

/// Riemann-Liouville fractional integral
/// `J^alpha f(t) = 1/Gamma(alpha) * int_0^t (t - y)^{alpha - 1} f(y) dy`.
///
/// Uses tanh-sinh quadrature, which absorbs the kernel singularity at
/// `y = t` and algebraic behaviour of `f` at `y = 0`.
pub fn rl_fractional_integral<F: Fn(f64) -> f64>(f: F, alpha: f64, t: f64) -> Result<f64> {
    check_order(alpha)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let q = quad::tanh_sinh(|y, dist| dist.powf(alpha - 1.0) * f(y), 0.0, t, 1e-12, 10);
    Ok(q.value / gamma(alpha))
}

/// Mean and variance of `ln S` for a Mittag-Leffler sojourn `S` with the
/// given order and rate.
pub fn log_ml_moments(alpha: f64, rate: f64) -> Result<(f64, f64)> {
    check_order(alpha)?;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(invalid(format!("rate must be finite and > 0, got {rate}")));
    }
    use std::f64::consts::PI;
    let mean = -rate.ln() / alpha - Constants::EULER_GAMMA;
    // pi^2 (1/(3 a^2) - 1/6)
    let a2 = alpha * alpha;
    let variance = PI * PI * (2.0 - a2) / (6.0 * a2);
    Ok((mean, variance))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
        assert!(two_sided_z(1.0).unwrap().is_infinite());
        assert!(two_sided_z(0.0).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn rl_integral_of_constant_and_zero() {
        let v = rl_fractional_integral(|_| 1.0, 0.5, 1.0).unwrap();
        assert!((v - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-10);
        assert_eq!(rl_fractional_integral(|_| 0.0, 0.3, 2.0).unwrap(), 0.0);
        assert!(rl_fractional_integral(|_| 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn survival_edges() {
        assert_eq!(ml_survival(0.6, 1.0, 0.0).unwrap(), 1.0);
        assert!((ml_survival(1.0, 2.0, 1.0).unwrap() - (-2.0f64).exp()).abs() < 1e-16);
        assert!(ml_survival(1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn log_moments_at_one() {
        let (m, v) = log_ml_moments(1.0, 1.0).unwrap();
        assert!((m + Constants::EULER_GAMMA).abs() < 1e-16);
        assert_eq!(v, std::f64::consts::PI.powi(2) / 6.0);
    }
}
