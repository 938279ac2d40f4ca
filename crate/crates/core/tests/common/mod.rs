#![allow(dead_code)]

use fracqueue::sim::ModelParams;

/// Classical M/M/1 forward equations on states `0..states`, integrated with
/// classical RK4 at step `h`. Returns the state law at each requested time.
pub fn mm1_ode(params: &ModelParams, states: usize, h: f64, times: &[f64]) -> Vec<Vec<f64>> {
    let (lambda, mu) = (params.lambda, params.mu);
    let deriv = |p: &[f64], out: &mut [f64]| {
        for k in 0..states {
            let down = if k + 1 < states { mu * p[k + 1] } else { 0.0 };
            let up = if k > 0 { lambda * p[k - 1] } else { 0.0 };
            let leave = if k == 0 { lambda } else { lambda + mu };
            out[k] = up + down - leave * p[k];
        }
    };
    let mut p = vec![0.0; states];
    p[params.initial_state as usize] = 1.0;
    let mut t = 0.0;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; states], vec![0.0; states], vec![0.0; states], vec![0.0; states], vec![0.0; states]);
    let mut out = Vec::new();
    for &target in times {
        while t < target - 1e-12 {
            let step = h.min(target - t);
            deriv(&p, &mut k1);
            for j in 0..states {
                tmp[j] = p[j] + 0.5 * step * k1[j];
            }
            deriv(&tmp, &mut k2);
            for j in 0..states {
                tmp[j] = p[j] + 0.5 * step * k2[j];
            }
            deriv(&tmp, &mut k3);
            for j in 0..states {
                tmp[j] = p[j] + step * k3[j];
            }
            deriv(&tmp, &mut k4);
            for j in 0..states {
                p[j] += step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            t += step;
        }
        out.push(p.clone());
    }
    out
}

/// Mean and standard error of a sample.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
