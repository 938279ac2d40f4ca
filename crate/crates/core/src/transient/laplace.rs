//! Laplace-domain idle probability and numerical inversion.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::sim::ModelParams;

/// Roots `(a1, a2)` of `lambda z^2 - (s^alpha + lambda + mu) z + mu = 0`,
/// ordered so that `|a1| >= |a2|`.
pub fn p0_roots(params: &ModelParams, s: Complex64) -> Result<(Complex64, Complex64)> {
    params.validate()?;
    if !(s.re > 0.0) {
        return Err(invalid(format!("Laplace variable must have positive real part, got {s}")));
    }
    let (lambda, mu) = (params.lambda, params.mu);
    let b = s.powf(params.alpha) + lambda + mu;
    let disc = (b * b - 4.0 * lambda * mu).sqrt();
    let plus = b + disc;
    let minus = b - disc;
    let big = if plus.norm() >= minus.norm() { plus } else { minus };
    let a1 = big / (2.0 * lambda);
    // Vieta: a1 a2 = mu / lambda.
    let a2 = (mu / lambda) / a1;
    Ok((a1, a2))
}

/// `L[p_0](s) = s^{alpha-1} a2^{i+1} / (mu (1 - a2))`.
pub fn laplace_p0(params: &ModelParams, s: Complex64) -> Result<Complex64> {
    let (_, a2) = p0_roots(params, s)?;
    let i = params.initial_state as i32;
    Ok(s.powf(params.alpha - 1.0) * a2.powi(i + 1) / (params.mu * (1.0 - a2)))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Gaver-Stehfest inversion with `n` (even) terms.
pub fn gaver_stehfest<F: Fn(Complex64) -> Complex64>(f: F, t: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2) && n > 0, "Stehfest order must be even");
    let half = n / 2;
    let ln2_t = std::f64::consts::LN_2 / t;
    let mut total = 0.0;
    for k in 1..=n {
        let mut v = 0.0;
        for j in k.div_ceil(2)..=k.min(half) {
            v += (j as f64).powi(half as i32) * factorial(2 * j)
                / (factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k));
        }
        if (k + half) % 2 == 1 {
            v = -v;
        }
        total += v * f(Complex64::new(k as f64 * ln2_t, 0.0)).re;
    }
    total * ln2_t
}

/// Fixed-Talbot inversion with `m` nodes.
pub fn talbot<F: Fn(Complex64) -> Complex64>(f: F, t: f64, m: usize) -> f64 {
    let r = 2.0 * m as f64 / (5.0 * t);
    let mut total = 0.5 * (f(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..m {
        let theta = k as f64 * PI / m as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let weight = Complex64::new(1.0, sigma);
        total += ((s * t).exp() * f(s) * weight).re;
    }
    total * r / m as f64
}

/// Inverts a Laplace transform at `t > 0`: Gaver-Stehfest with 14 terms,
/// falling back to fixed Talbot when the former is not finite or leaves
/// `[lower, upper]`.
pub fn invert_laplace<F: Fn(Complex64) -> Complex64>(f: F, t: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("inversion time must be finite and > 0, got {t}")));
    }
    let slack = 1e-6 * (upper - lower).abs().max(1.0);
    let ok = |v: f64| v.is_finite() && v >= lower - slack && v <= upper + slack;
    let gs = gaver_stehfest(&f, t, 14);
    if ok(gs) {
        return Ok(gs);
    }
    log::debug!("Gaver-Stehfest gave {gs} at t={t}, retrying with Talbot");
    let ft = talbot(&f, t, 32);
    if ok(ft) {
        return Ok(ft);
    }
    Err(Error::InversionDiverged { t })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_shifted_pole() {
        let gs = gaver_stehfest(|s| 1.0 / (s + 1.0), 1.0, 14);
        assert!((gs - (-1.0f64).exp()).abs() < 1e-6, "{gs}");
        for &t in &[0.5_f64, 2.0, 5.0] {
            let exact = (-t).exp();
            let gs = gaver_stehfest(|s| 1.0 / (s + 1.0), t, 14);
            let tb = talbot(|s| 1.0 / (s + 1.0), t, 32);
            assert!((gs - exact).abs() < 1e-4, "t={t}: {gs}");
            assert!((tb - exact).abs() < 1e-10, "t={t}: {tb}");
        }
        let one = invert_laplace(|s| 1.0 / s, 3.0, 0.0, 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-6);
    }

    #[test]
    fn roots_satisfy_quadratic() {
        let p = ModelParams::new(0.7, 0.4, 1.1, 0).unwrap();
        let s = Complex64::new(0.8, 2.0);
        let (a1, a2) = p0_roots(&p, s).unwrap();
        let b = s.powf(0.7) + 1.5;
        for z in [a1, a2] {
            assert!((0.4 * z * z - b * z + 1.1).norm() < 1e-12);
        }
        assert!(a1.norm() >= a2.norm());
        assert!(p0_roots(&p, Complex64::new(-1.0, 0.0)).is_err());
    }
}
