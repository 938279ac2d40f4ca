//! Experiment drivers, financial-series ingestion, report emission and the CLI.

pub mod cli;
pub mod experiment;
pub mod output;
pub mod series;

pub use experiment::{
    generate_sojourns, run_bias_cv_experiment, run_coverage_experiment, BiasCvRow, CoverageRow, ExperimentConfig,
    ExperimentTable, GridPoint,
};
pub use output::{fmt_f64, OutputFormat, SCHEMA_VERSION};
pub use series::{change_counts, ingest_series, read_series, series_to_sojourns, FinancialSeries, SojournConvention};
