//! Kolmogorov-Smirnov statistics with asymptotic p-values.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Result of a KS test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(x) = Pr{K > x}`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // Theta-function form converges quickly for small x.
        let mut sum = 0.0;
        for j in 1..=20 {
            let k = (2 * j - 1) as f64;
            sum += (-k * k * PI * PI / (8.0 * x * x)).exp();
        }
        return (1.0 - (2.0 * PI).sqrt() / x * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * x * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Stephens' small-sample adjusted p-value for statistic `d` with effective size `ne`.
fn p_value(d: f64, ne: f64) -> f64 {
    let root = ne.sqrt();
    kolmogorov_sf((root + 0.12 + 0.11 / root) * d)
}

fn sorted(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(crate::error::invalid("sample contains NaN"));
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Two-sample statistic `sup |F_x - F_y|`.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsTest> {
    let x = sorted(x)?;
    let y = sorted(y)?;
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(KsTest { statistic: d, p_value: p_value(d, ne) })
}

/// One-sample statistic `sup |F_n - F|` against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> Result<KsTest> {
    let x = sorted(x)?;
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (idx, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((idx as f64 + 1.0) / n - f).max(f - idx as f64 / n);
    }
    Ok(KsTest { statistic: d, p_value: p_value(d, n) })
}
