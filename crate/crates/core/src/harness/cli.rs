//! Command-line front end.
//!
//! Settings resolve as: command-line flag, then the `[subcommand]` table of
//! the `--config` TOML file, then its top-level keys, then built-in defaults.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::experiment::{fit_model, run_bias_cv_experiment, run_coverage_experiment, ExperimentConfig, GridPoint};
use super::output::{fmt_f64, open_output, write_csv_rows, write_json, OutputFormat, SCHEMA_VERSION};
use super::series::{change_counts, ingest_series, series_to_sojourns, ChangeCounts, SojournConvention};
use crate::error::{Error, Result};
use crate::estimate::{rate_fit_test, EstimationResult, ModelKind, VarianceForm};
use crate::rng::RngStream;
use crate::sim::{extract_sojourns, simulate_linear_bd, simulate_mm1, ModelParams, SojournData, StopRule};
use crate::transient::{TransientResult, TransientSeries, DEFAULT_TOL};

#[derive(Debug, Parser)]
#[command(name = "fracqueue", version, about = "Fractional M/M/1 and linear birth-death toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// TOML file of default settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path.
    Simulate(SimulateArgs),
    /// Transient state probabilities.
    Transient(TransientArgs),
    /// Fit a model to a sojourn CSV.
    Estimate(EstimateArgs),
    /// Monte Carlo percent bias and CV.
    McBias(ExperimentArgs),
    /// Monte Carlo interval coverage.
    McCoverage(ExperimentArgs),
    /// Fit the M/M/1 model to a dated level series.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Initial state.
    #[arg(long)]
    init: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// linear_bd or mm1.
    #[arg(long)]
    model: Option<String>,
    #[command(flatten)]
    params: ModelArgs,
    /// Stop after this many events.
    #[arg(long)]
    events: Option<usize>,
    /// Stop at this time.
    #[arg(long)]
    horizon: Option<f64>,
    /// Emit `state_before,duration,event_type` rows instead of the event path.
    #[arg(long)]
    sojourns: bool,
}

#[derive(Debug, Args)]
struct TransientArgs {
    #[command(flatten)]
    params: ModelArgs,
    /// Comma-separated evaluation times.
    #[arg(long = "t", value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long)]
    kmax: Option<u64>,
    /// Truncation tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Sojourn CSV with header `state_before,duration,event_type`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    level: Option<f64>,
    /// M/M/1 only: drop sojourns in state 0 (true/false).
    #[arg(long)]
    exclude_zero_state: Option<bool>,
    /// delta_method or printed.
    #[arg(long)]
    variance_form: Option<String>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    model: Option<String>,
    /// Grid point `alpha,lambda,mu`; repeat for several.
    #[arg(long)]
    grid: Vec<String>,
    /// Comma-separated sample sizes.
    #[arg(long = "n", value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    init: Option<u64>,
    #[arg(long)]
    exclude_zero_state: Option<bool>,
    #[arg(long)]
    variance_form: Option<String>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// CSV with header `date,value`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    level: Option<f64>,
    /// unit_interval or calendar_days.
    #[arg(long)]
    convention: Option<String>,
    /// Label of one sampling step.
    #[arg(long)]
    sampling_interval: Option<String>,
    /// Also run the residual KS rate-fit check with this many simulated samples.
    #[arg(long)]
    rate_fit_m: Option<usize>,
    #[arg(long)]
    variance_form: Option<String>,
}

/// Parsed `--config` file scoped to one subcommand.
struct Settings {
    table: toml::Table,
    section: &'static str,
}

impl Settings {
    fn load(path: Option<&Path>, section: &'static str) -> Result<Self> {
        let table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        Ok(Settings { table, section })
    }

    fn raw(&self, key: &str) -> Option<&toml::Value> {
        fn lookup<'t>(t: &'t toml::Table, key: &str) -> Option<&'t toml::Value> {
            t.get(key).or_else(|| t.get(&key.replace('_', "-")))
        }
        self.table
            .get(self.section)
            .and_then(|v| v.as_table())
            .and_then(|t| lookup(t, key))
            .or_else(|| lookup(&self.table, key).filter(|v| !v.is_table()))
    }

    fn mismatch(&self, key: &str, want: &str) -> Error {
        Error::Config(format!("key `{key}` must be {want}"))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.mismatch(key, "a number")),
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(self.mismatch(key, "a non-negative integer")),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.mismatch(key, "a boolean")),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.mismatch(key, "a string")),
        }
    }

    fn strings(&self, key: &str) -> Result<Vec<String>> {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(toml::Value::String(s)) => Ok(vec![s.clone()]),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| self.mismatch(key, "a list of strings")))
                .collect(),
            Some(_) => Err(self.mismatch(key, "a string or list of strings")),
        }
    }

    fn numbers(&self, key: &str) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    _ => Err(self.mismatch(key, "a list of numbers")),
                })
                .collect(),
            Some(_) => Ok(self.f64(key)?.into_iter().collect()),
        }
    }
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required setting `{name}`")))
}

struct Resolved {
    seed: u64,
    out: Option<PathBuf>,
    format: OutputFormat,
}

fn resolve_common(common: &Common, s: &Settings) -> Result<Resolved> {
    let format_name = common.format.clone().or(s.string("format")?);
    let format = match format_name {
        None => OutputFormat::Csv,
        Some(f) => OutputFormat::parse(&f).ok_or_else(|| Error::Config(format!("unknown format {f:?}")))?,
    };
    let out = common.out.clone().or(s.string("out")?.map(PathBuf::from));
    Ok(Resolved { seed: common.seed.or(s.u64("seed")?).unwrap_or(0), out, format })
}

fn parse_model(name: Option<String>, default: ModelKind) -> Result<ModelKind> {
    match name {
        None => Ok(default),
        Some(n) => ModelKind::parse(&n).ok_or_else(|| Error::Config(format!("unknown model {n:?}"))),
    }
}

fn parse_variance_form(name: Option<String>) -> Result<VarianceForm> {
    match name.as_deref().map(|s| s.trim().to_ascii_lowercase().replace('-', "_")) {
        None => Ok(VarianceForm::default()),
        Some(ref s) if s == "delta_method" => Ok(VarianceForm::DeltaMethod),
        Some(ref s) if s == "printed" => Ok(VarianceForm::Printed),
        Some(s) => Err(Error::Config(format!("unknown variance form {s:?}"))),
    }
}

fn model_params(args: &ModelArgs, s: &Settings, default_init: u64) -> Result<ModelParams> {
    ModelParams::new(
        required(args.alpha.or(s.f64("alpha")?), "alpha")?,
        required(args.lambda.or(s.f64("lambda")?), "lambda")?,
        required(args.mu.or(s.f64("mu")?), "mu")?,
        args.init.or(s.u64("init")?).unwrap_or(default_init),
    )
}

#[derive(Serialize)]
struct PathReport<'a> {
    schema_version: u32,
    model: ModelKind,
    seed: u64,
    params: ModelParams,
    terminal_reason: crate::sim::TerminalReason,
    events: &'a [crate::sim::Event],
}

fn cmd_simulate(args: &SimulateArgs, common: &Common) -> Result<()> {
    let s = Settings::load(common.config.as_deref(), "simulate")?;
    let r = resolve_common(common, &s)?;
    let model = parse_model(args.model.clone().or(s.string("model")?), ModelKind::Mm1)?;
    let default_init = if model == ModelKind::LinearBd { 1 } else { 0 };
    let params = model_params(&args.params, &s, default_init)?;
    let events = args.events.or(s.u64("events")?.map(|v| v as usize));
    let horizon = args.horizon.or(s.f64("horizon")?);
    let stop = if events.is_none() && horizon.is_none() {
        StopRule::max_events(1000)
    } else {
        StopRule { max_events: events, time_horizon: horizon, target_state: None }
    };
    let mut stream = RngStream::new(r.seed, 0);
    let path = match model {
        ModelKind::LinearBd => simulate_linear_bd(params, &mut stream, &stop)?,
        ModelKind::Mm1 => simulate_mm1(params, &mut stream, &stop)?,
    };
    let out = open_output(r.out.as_deref())?;
    let sojourns = args.sojourns || s.bool("sojourns")?.unwrap_or(false);
    match (r.format, sojourns) {
        (OutputFormat::Csv, false) => path.write_csv(out),
        (OutputFormat::Csv, true) => extract_sojourns(&path).write_csv(out),
        (OutputFormat::Json, false) => write_json(
            &PathReport {
                schema_version: SCHEMA_VERSION,
                model,
                seed: r.seed,
                params,
                terminal_reason: path.terminal_reason,
                events: &path.events,
            },
            out,
        ),
        (OutputFormat::Json, true) => write_json(&extract_sojourns(&path), out),
    }
}

#[derive(Serialize)]
struct TransientRow {
    k: u64,
    t: f64,
    #[serde(flatten)]
    result: TransientResult,
}

#[derive(Serialize)]
struct TransientReport {
    schema_version: u32,
    params: ModelParams,
    tol: f64,
    rows: Vec<TransientRow>,
}

fn cmd_transient(args: &TransientArgs, common: &Common) -> Result<()> {
    let s = Settings::load(common.config.as_deref(), "transient")?;
    let r = resolve_common(common, &s)?;
    let params = model_params(&args.params, &s, 0)?;
    let times = if args.times.is_empty() { s.numbers("t")? } else { args.times.clone() };
    if times.is_empty() {
        return Err(Error::Config("missing required setting `t`".to_string()));
    }
    let kmax = args.kmax.or(s.u64("kmax")?).unwrap_or(10);
    let tol = args.tol.or(s.f64("tol")?).unwrap_or(DEFAULT_TOL);
    let mut rows = Vec::new();
    for &t in &times {
        let mut series = TransientSeries::new(params, t, tol)?;
        for k in 0..=kmax {
            rows.push(TransientRow { k, t, result: series.probability(k)? });
        }
    }
    let out = open_output(r.out.as_deref())?;
    match r.format {
        OutputFormat::Json => write_json(&TransientReport { schema_version: SCHEMA_VERSION, params, tol, rows }, out),
        OutputFormat::Csv => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|row| {
                    vec![
                        row.k.to_string(),
                        fmt_f64(row.t),
                        fmt_f64(row.result.probability),
                        row.result.terms_used.to_string(),
                    ]
                })
                .collect();
            write_csv_rows(out, &["k", "t", "probability", "terms_used"], &body)
        }
    }
}

const ESTIMATE_HEADER: [&str; 20] = [
    "schema_version",
    "model",
    "n",
    "n_births",
    "n_deaths",
    "level",
    "alpha_hat",
    "theta_hat",
    "lambda_hat",
    "mu_hat",
    "p_hat",
    "se_alpha",
    "se_lambda",
    "se_mu",
    "ci_alpha_lower",
    "ci_alpha_upper",
    "ci_lambda_lower",
    "ci_lambda_upper",
    "ci_mu_lower",
    "ci_mu_upper",
];

fn estimate_row(e: &EstimationResult) -> Vec<String> {
    let mut row = vec![
        SCHEMA_VERSION.to_string(),
        e.model.as_str().to_string(),
        e.n.to_string(),
        e.n_births.to_string(),
        e.n_deaths.to_string(),
    ];
    row.extend(
        [
            e.level,
            e.alpha_hat,
            e.theta_hat,
            e.lambda_hat,
            e.mu_hat,
            e.p_hat,
            e.se_alpha,
            e.se_lambda,
            e.se_mu,
            e.ci_alpha.lower,
            e.ci_alpha.upper,
            e.ci_lambda.lower,
            e.ci_lambda.upper,
            e.ci_mu.lower,
            e.ci_mu.upper,
        ]
        .into_iter()
        .map(fmt_f64),
    );
    row
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    schema_version: u32,
    #[serde(flatten)]
    estimate: &'a EstimationResult,
}

fn cmd_estimate(args: &EstimateArgs, common: &Common) -> Result<()> {
    let s = Settings::load(common.config.as_deref(), "estimate")?;
    let r = resolve_common(common, &s)?;
    let input = required(args.input.clone().or(s.string("input")?.map(PathBuf::from)), "input")?;
    let model = parse_model(args.model.clone().or(s.string("model")?), ModelKind::Mm1)?;
    let level = args.level.or(s.f64("level")?).unwrap_or(0.95);
    let exclude = args.exclude_zero_state.or(s.bool("exclude_zero_state")?).unwrap_or(true);
    let form = parse_variance_form(args.variance_form.clone().or(s.string("variance_form")?))?;
    let data = SojournData::read_csv(std::fs::File::open(&input)?)?;
    let est = fit_model(model, &data, level, exclude, form)?;
    let out = open_output(r.out.as_deref())?;
    match r.format {
        OutputFormat::Json => write_json(&EstimateReport { schema_version: SCHEMA_VERSION, estimate: &est }, out),
        OutputFormat::Csv => write_csv_rows(out, &ESTIMATE_HEADER, &[estimate_row(&est)]),
    }
}

fn experiment_config(args: &ExperimentArgs, s: &Settings, seed: u64) -> Result<ExperimentConfig> {
    let model = parse_model(args.model.clone().or(s.string("model")?), ModelKind::Mm1)?;
    let grid_specs = if args.grid.is_empty() { s.strings("grid")? } else { args.grid.clone() };
    if grid_specs.is_empty() {
        return Err(Error::Config("missing required setting `grid`".to_string()));
    }
    let grid = grid_specs.iter().map(|g| GridPoint::parse(g)).collect::<Result<Vec<_>>>()?;
    let mut config = ExperimentConfig::new(model, grid);
    let sizes = if args.sizes.is_empty() {
        s.numbers("n")?.into_iter().map(|v| v as usize).collect()
    } else {
        args.sizes.clone()
    };
    if !sizes.is_empty() {
        config.sample_sizes = sizes;
    }
    if let Some(reps) = args.reps.or(s.u64("reps")?.map(|v| v as usize)) {
        config.replicates = reps;
    }
    if let Some(level) = args.level.or(s.f64("level")?) {
        config.level = level;
    }
    config.initial_state = args.init.or(s.u64("init")?);
    if let Some(ex) = args.exclude_zero_state.or(s.bool("exclude_zero_state")?) {
        config.exclude_zero_state = ex;
    }
    config.variance_form = parse_variance_form(args.variance_form.clone().or(s.string("variance_form")?))?;
    config.seed = seed;
    Ok(config)
}

fn cmd_experiment(args: &ExperimentArgs, common: &Common, coverage: bool) -> Result<()> {
    let section = if coverage { "mc-coverage" } else { "mc-bias" };
    let s = Settings::load(common.config.as_deref(), section)?;
    let r = resolve_common(common, &s)?;
    let mut config = experiment_config(args, &s, r.seed)?;
    config.output_path = r.out.clone();
    let out = open_output(r.out.as_deref())?;
    if coverage {
        run_coverage_experiment(&config)?.write(out, r.format)
    } else {
        run_bias_cv_experiment(&config)?.write(out, r.format)
    }
}

#[derive(Serialize)]
struct FitReport {
    schema_version: u32,
    input: String,
    observations: usize,
    changes: ChangeCounts,
    convention: SojournConvention,
    sampling_interval: String,
    zero_changes_dropped: bool,
    estimate: EstimationResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_fit_acceptance: Option<f64>,
}

fn cmd_fit(args: &FitArgs, common: &Common) -> Result<()> {
    let s = Settings::load(common.config.as_deref(), "fit")?;
    let r = resolve_common(common, &s)?;
    let input = required(args.input.clone().or(s.string("input")?.map(PathBuf::from)), "input")?;
    let model = parse_model(args.model.clone().or(s.string("model")?), ModelKind::Mm1)?;
    if model != ModelKind::Mm1 {
        return Err(Error::UnsupportedParameter(
            "level series carry no population size; only the mm1 model can be fitted".to_string(),
        ));
    }
    let level = args.level.or(s.f64("level")?).unwrap_or(0.95);
    let convention = match args.convention.clone().or(s.string("convention")?) {
        None => SojournConvention::default(),
        Some(c) => SojournConvention::parse(&c).ok_or_else(|| Error::Config(format!("unknown convention {c:?}")))?,
    };
    let form = parse_variance_form(args.variance_form.clone().or(s.string("variance_form")?))?;
    let mut series = ingest_series(&input)?;
    if let Some(label) = args.sampling_interval.clone().or(s.string("sampling_interval")?) {
        series.sampling_interval = label;
    }
    let changes = change_counts(&series);
    let data = series_to_sojourns(&series, convention)?;
    let estimate = fit_model(model, &data, level, false, form)?;
    let rate_fit_acceptance = match args.rate_fit_m.or(s.u64("rate_fit_m")?.map(|v| v as usize)) {
        Some(m) => Some(rate_fit_test(&data, &estimate, m, level, r.seed)?),
        None => None,
    };
    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        input: input.display().to_string(),
        observations: series.observations.len(),
        changes,
        convention,
        sampling_interval: series.sampling_interval.clone(),
        zero_changes_dropped: true,
        estimate,
        rate_fit_acceptance,
    };
    let out = open_output(r.out.as_deref())?;
    match r.format {
        OutputFormat::Json => write_json(&report, out),
        OutputFormat::Csv => write_csv_rows(out, &ESTIMATE_HEADER, &[estimate_row(&report.estimate)]),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &cli.common),
        Command::Transient(a) => cmd_transient(a, &cli.common),
        Command::Estimate(a) => cmd_estimate(a, &cli.common),
        Command::McBias(a) => cmd_experiment(a, &cli.common, false),
        Command::McCoverage(a) => cmd_experiment(a, &cli.common, true),
        Command::Fit(a) => cmd_fit(a, &cli.common),
    }
}

/// Runs the CLI and returns the process exit code: 0 on success, 2 for usage
/// errors, 1 for any other failure with a JSON error object on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            1
        }
    }
}
