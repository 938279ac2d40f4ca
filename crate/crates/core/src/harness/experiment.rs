//! Monte Carlo drivers for estimator bias, dispersion and interval coverage.
//!
//! Replicate `r` of grid cell `c` at sample-size index `s` draws from stream
//! `(c << 40) | (s << 32) | r` of the configured seed, so results do not
//! depend on thread count or scheduling.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{fmt_f64, fmt_opt, write_csv_rows, write_json, OutputFormat, SCHEMA_VERSION};
use crate::error::{invalid, Result};
use crate::estimate::{
    fit_linear_from_regression, fit_mm1_with, regress_log_sojourns, EstimationResult, ModelKind, VarianceForm,
};
use crate::rng::RngStream;
use crate::sim::{Dynamics, EventType, ModelParams, SojournData, SojournRecord, Walker};

/// Default starting population of the linear process.
pub const DEFAULT_LINEAR_INITIAL_STATE: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl GridPoint {
    pub fn new(alpha: f64, lambda: f64, mu: f64) -> Self {
        GridPoint { alpha, lambda, mu }
    }

    /// Parses `alpha,lambda,mu`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(invalid(format!("grid point must be \"alpha,lambda,mu\", got {s:?}")));
        }
        let v = parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|e| invalid(format!("grid point {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(GridPoint::new(v[0], v[1], v[2]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub grid: Vec<GridPoint>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    /// Starting state; `None` means 500 for the linear process and 0 for M/M/1.
    pub initial_state: Option<u64>,
    /// M/M/1 only: drop sojourns spent in state 0 before fitting.
    pub exclude_zero_state: bool,
    pub variance_form: VarianceForm,
}

impl ExperimentConfig {
    pub fn new(model: ModelKind, grid: Vec<GridPoint>) -> Self {
        ExperimentConfig {
            model,
            grid,
            sample_sizes: vec![100, 1000, 10_000],
            replicates: 1000,
            level: 0.95,
            seed: 0,
            output_path: None,
            initial_state: None,
            exclude_zero_state: true,
            variance_form: VarianceForm::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(invalid("experiment grid is empty"));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 3) {
            return Err(invalid("sample sizes must be non-empty and each >= 3"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates must be >= 1"));
        }
        if self.replicates >= 1 << 32 || self.sample_sizes.len() >= 1 << 8 || self.grid.len() >= 1 << 24 {
            return Err(invalid("experiment too large for the stream-id layout"));
        }
        if !(self.level > 0.0 && self.level <= 1.0) {
            return Err(invalid(format!("level must lie in (0, 1], got {}", self.level)));
        }
        for g in &self.grid {
            self.params_for(g)?;
        }
        Ok(())
    }

    fn params_for(&self, g: &GridPoint) -> Result<ModelParams> {
        let initial = self.initial_state.unwrap_or(match self.model {
            ModelKind::LinearBd => DEFAULT_LINEAR_INITIAL_STATE,
            ModelKind::Mm1 => 0,
        });
        if self.model == ModelKind::LinearBd && initial == 0 {
            return Err(invalid("linear birth-death runs need initial_state >= 1"));
        }
        ModelParams::new(g.alpha, g.lambda, g.mu, initial)
    }
}

/// Stream id of replicate `rep` in grid cell `cell` at size index `size`.
pub fn stream_id(cell: usize, size: usize, rep: usize) -> u64 {
    ((cell as u64) << 40) | ((size as u64) << 32) | rep as u64
}

/// Simulates until `n` sojourns are collected.
///
/// The linear process restarts from its initial state whenever it is absorbed
/// at 0. With `exclude_zero_state`, M/M/1 sojourns in state 0 are not counted.
pub fn generate_sojourns(
    model: ModelKind,
    params: ModelParams,
    n: usize,
    exclude_zero_state: bool,
    stream: &mut RngStream,
) -> Result<SojournData> {
    let dynamics = match model {
        ModelKind::LinearBd => Dynamics::LinearBirthDeath,
        ModelKind::Mm1 => Dynamics::MM1,
    };
    if model == ModelKind::LinearBd && params.initial_state == 0 {
        return Err(invalid("linear birth-death process started at 0 never moves"));
    }
    let mut records = Vec::with_capacity(n);
    while records.len() < n {
        let mut walker = Walker::new(dynamics, params, stream)?;
        while records.len() < n {
            let state_before = walker.state();
            let Some(event) = walker.step() else { break };
            if exclude_zero_state && model == ModelKind::Mm1 && state_before == 0 {
                continue;
            }
            records.push(SojournRecord { state_before, duration: event.sojourn, event_type: event.event_type });
        }
    }
    SojournData::from_records(records)
}

/// Fits the configured model to one sample.
pub fn fit_model(
    model: ModelKind,
    data: &SojournData,
    level: f64,
    exclude_zero_state: bool,
    form: VarianceForm,
) -> Result<EstimationResult> {
    match model {
        ModelKind::LinearBd => {
            let fit = regress_log_sojourns(data)?;
            fit_linear_from_regression(data, &fit, level, form)
        }
        ModelKind::Mm1 => fit_mm1_with(data, level, exclude_zero_state, form),
    }
}

fn run_cell(config: &ExperimentConfig, cell: usize, size: usize) -> Result<Vec<Result<EstimationResult>>> {
    let params = config.params_for(&config.grid[cell])?;
    let n = config.sample_sizes[size];
    Ok((0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut stream = RngStream::new(config.seed, stream_id(cell, size, rep));
            let data = generate_sojourns(config.model, params, n, config.exclude_zero_state, &mut stream)?;
            fit_model(config.model, &data, config.level, config.exclude_zero_state, config.variance_form)
        })
        .collect())
}

fn split_failures(results: Vec<Result<EstimationResult>>, cell: usize, n: usize) -> (Vec<EstimationResult>, usize) {
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => ok.push(e),
            Err(e) => {
                log::warn!("cell {cell}, n={n}, replicate {rep}: fit failed: {e}");
                failures += 1;
            }
        }
    }
    (ok, failures)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCvRow {
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    pub n: usize,
    pub parameter: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub percent_bias: f64,
    /// `None` when fewer than two replicates succeeded.
    pub cv: Option<f64>,
    pub replicates_ok: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    pub n: usize,
    pub level: f64,
    pub coverage_alpha: f64,
    pub coverage_lambda: f64,
    pub coverage_mu: f64,
    pub replicates_ok: usize,
    pub failures: usize,
}

/// A driver's output table with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable<R> {
    pub schema_version: u32,
    pub experiment: String,
    pub model: ModelKind,
    pub seed: u64,
    pub replicates: usize,
    pub level: f64,
    pub exclude_zero_state: Option<bool>,
    pub variance_form: VarianceForm,
    pub rows: Vec<R>,
}

impl<R> ExperimentTable<R> {
    fn new(config: &ExperimentConfig, experiment: &str, rows: Vec<R>) -> Self {
        ExperimentTable {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            model: config.model,
            seed: config.seed,
            replicates: config.replicates,
            level: config.level,
            exclude_zero_state: (config.model == ModelKind::Mm1).then_some(config.exclude_zero_state),
            variance_form: config.variance_form,
            rows,
        }
    }
}

/// Percent bias `100 |mean - truth| / truth`.
pub fn percent_bias(estimates: &[f64], truth: f64) -> f64 {
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    100.0 * (mean - truth).abs() / truth
}

/// `100 sd / mean` with the `n - 1` standard deviation; `None` below two values.
pub fn coefficient_of_variation(estimates: &[f64]) -> Option<f64> {
    if estimates.len() < 2 {
        return None;
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(100.0 * var.sqrt() / mean)
}

/// Percent bias and CV of `alpha_hat`, `lambda_hat` and `mu_hat` per grid cell and sample size.
pub fn run_bias_cv_experiment(config: &ExperimentConfig) -> Result<ExperimentTable<BiasCvRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (cell, g) in config.grid.iter().enumerate() {
        for (size, &n) in config.sample_sizes.iter().enumerate() {
            let (ok, failures) = split_failures(run_cell(config, cell, size)?, cell, n);
            type Column = (&'static str, f64, fn(&EstimationResult) -> f64);
            let columns: [Column; 3] = [
                ("alpha", g.alpha, |e| e.alpha_hat),
                ("lambda", g.lambda, |e| e.lambda_hat),
                ("mu", g.mu, |e| e.mu_hat),
            ];
            for (name, truth, get) in columns {
                let values: Vec<f64> = ok.iter().map(get).collect();
                let (mean, bias) = if values.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    (values.iter().sum::<f64>() / values.len() as f64, percent_bias(&values, truth))
                };
                rows.push(BiasCvRow {
                    alpha: g.alpha,
                    lambda: g.lambda,
                    mu: g.mu,
                    n,
                    parameter: name.to_string(),
                    truth,
                    mean_estimate: mean,
                    percent_bias: bias,
                    cv: coefficient_of_variation(&values),
                    replicates_ok: ok.len(),
                    failures,
                });
            }
        }
    }
    Ok(ExperimentTable::new(config, "bias_cv", rows))
}

/// Fraction of replicates whose intervals cover the true parameters.
pub fn run_coverage_experiment(config: &ExperimentConfig) -> Result<ExperimentTable<CoverageRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (cell, g) in config.grid.iter().enumerate() {
        for (size, &n) in config.sample_sizes.iter().enumerate() {
            let (ok, failures) = split_failures(run_cell(config, cell, size)?, cell, n);
            let frac = |hit: &dyn Fn(&EstimationResult) -> bool| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().filter(|e| hit(e)).count() as f64 / ok.len() as f64
                }
            };
            rows.push(CoverageRow {
                alpha: g.alpha,
                lambda: g.lambda,
                mu: g.mu,
                n,
                level: config.level,
                coverage_alpha: frac(&|e| e.ci_alpha.contains(g.alpha)),
                coverage_lambda: frac(&|e| e.ci_lambda.contains(g.lambda)),
                coverage_mu: frac(&|e| e.ci_mu.contains(g.mu)),
                replicates_ok: ok.len(),
                failures,
            });
        }
    }
    Ok(ExperimentTable::new(config, "coverage", rows))
}

fn metadata_columns<R>(t: &ExperimentTable<R>) -> Vec<String> {
    vec![
        t.schema_version.to_string(),
        t.model.as_str().to_string(),
        t.seed.to_string(),
        t.exclude_zero_state.map_or_else(|| "NA".to_string(), |b| b.to_string()),
    ]
}

const META_HEADER: [&str; 4] = ["schema_version", "model", "seed", "exclude_zero_state"];

impl ExperimentTable<BiasCvRow> {
    pub fn write<W: std::io::Write>(&self, out: W, format: OutputFormat) -> Result<()> {
        match format {
            OutputFormat::Json => write_json(self, out),
            OutputFormat::Csv => {
                let mut header = META_HEADER.to_vec();
                header.extend([
                    "alpha",
                    "lambda",
                    "mu",
                    "n",
                    "parameter",
                    "truth",
                    "mean_estimate",
                    "percent_bias",
                    "cv",
                    "replicates_ok",
                    "failures",
                ]);
                let rows: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let mut row = metadata_columns(self);
                        row.extend([
                            fmt_f64(r.alpha),
                            fmt_f64(r.lambda),
                            fmt_f64(r.mu),
                            r.n.to_string(),
                            r.parameter.clone(),
                            fmt_f64(r.truth),
                            fmt_f64(r.mean_estimate),
                            fmt_f64(r.percent_bias),
                            fmt_opt(r.cv),
                            r.replicates_ok.to_string(),
                            r.failures.to_string(),
                        ]);
                        row
                    })
                    .collect();
                write_csv_rows(out, &header, &rows)
            }
        }
    }
}

impl ExperimentTable<CoverageRow> {
    pub fn write<W: std::io::Write>(&self, out: W, format: OutputFormat) -> Result<()> {
        match format {
            OutputFormat::Json => write_json(self, out),
            OutputFormat::Csv => {
                let mut header = META_HEADER.to_vec();
                header.extend([
                    "alpha",
                    "lambda",
                    "mu",
                    "n",
                    "level",
                    "coverage_alpha",
                    "coverage_lambda",
                    "coverage_mu",
                    "replicates_ok",
                    "failures",
                ]);
                let rows: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let mut row = metadata_columns(self);
                        row.extend([
                            fmt_f64(r.alpha),
                            fmt_f64(r.lambda),
                            fmt_f64(r.mu),
                            r.n.to_string(),
                            fmt_f64(r.level),
                            fmt_f64(r.coverage_alpha),
                            fmt_f64(r.coverage_lambda),
                            fmt_f64(r.coverage_mu),
                            r.replicates_ok.to_string(),
                            r.failures.to_string(),
                        ]);
                        row
                    })
                    .collect();
                write_csv_rows(out, &header, &rows)
            }
        }
    }
}

/// Birth/death counts of a sample, for reporting.
pub fn event_counts(data: &SojournData) -> (usize, usize) {
    let births = data.records.iter().filter(|r| r.event_type == EventType::Birth).count();
    (births, data.len() - births)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_ids_are_distinct() {
        assert_ne!(stream_id(0, 1, 0), stream_id(1, 0, 0));
        assert_ne!(stream_id(0, 0, 1), stream_id(0, 1, 0));
        assert_eq!(stream_id(2, 3, 7), (2 << 40) | (3 << 32) | 7);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(GridPoint::parse("0.5, 50,50").unwrap(), GridPoint::new(0.5, 50.0, 50.0));
        assert!(GridPoint::parse("0.5,50").is_err());
        assert!(GridPoint::parse("a,b,c").is_err());
    }

    #[test]
    fn cv_needs_two_values() {
        assert_eq!(coefficient_of_variation(&[1.0]), None);
        assert_eq!(coefficient_of_variation(&[1.0, 1.0]), Some(0.0));
        assert!((percent_bias(&[0.9, 1.1], 1.0)).abs() < 1e-12);
    }

    #[test]
    fn linear_sample_restarts_after_extinction() {
        let params = ModelParams::new(0.8, 0.1, 5.0, 1).unwrap();
        let mut stream = RngStream::new(3, 0);
        let data = generate_sojourns(ModelKind::LinearBd, params, 50, false, &mut stream).unwrap();
        assert_eq!(data.len(), 50);
        assert!(data.records.iter().all(|r| r.state_before >= 1));
    }

    #[test]
    fn mm1_sample_skips_zero_state() {
        let params = ModelParams::new(0.8, 1.0, 3.0, 0).unwrap();
        let mut stream = RngStream::new(3, 0);
        let data = generate_sojourns(ModelKind::Mm1, params, 200, true, &mut stream).unwrap();
        assert_eq!(data.len(), 200);
        assert!(data.records.iter().all(|r| r.state_before >= 1));
    }
}
