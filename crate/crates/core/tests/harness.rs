use std::fs;
use std::process::Command;

use fracqueue::estimate::ModelKind;
use fracqueue::harness::{
    change_counts, read_series, run_bias_cv_experiment, run_coverage_experiment, series_to_sojourns, ExperimentConfig,
    GridPoint, OutputFormat, SojournConvention,
};
use fracqueue::Error;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracqueue"))
}

fn small_config(model: ModelKind) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(model, vec![GridPoint::parse("0.7,2,3").unwrap()]);
    config.sample_sizes = vec![200];
    config.replicates = 20;
    config.seed = 17;
    config
}

#[test]
fn series_examples() {
    let s = read_series("date,value\n2001-01,10\n2001-02,11\n2001-03,11\n2001-04,9\n".as_bytes(), "month").unwrap();
    let counts = change_counts(&s);
    assert_eq!((counts.positive, counts.negative, counts.zero), (1, 1, 1));
    let data = series_to_sojourns(&s, SojournConvention::UnitInterval).unwrap();
    let durations: Vec<f64> = data.records.iter().map(|r| r.duration).collect();
    assert_eq!(durations, vec![1.0, 2.0]);

    assert!(matches!(read_series("date,value\n2001-01,1\n".as_bytes(), "month"), Err(Error::InsufficientData { .. })));
    assert!(matches!(read_series("when,value\n2001-01,1\n".as_bytes(), "month"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(
        read_series("date,value\n2001-01,1\n2001-13,2\n".as_bytes(), "month"),
        Err(Error::Parse { line: 3, .. })
    ));
}

#[test]
fn experiments_are_reproducible() {
    for model in [ModelKind::Mm1, ModelKind::LinearBd] {
        let config = small_config(model);
        let render = |coverage: bool| {
            let mut buf = Vec::new();
            if coverage {
                run_coverage_experiment(&config).unwrap().write(&mut buf, OutputFormat::Csv).unwrap();
            } else {
                run_bias_cv_experiment(&config).unwrap().write(&mut buf, OutputFormat::Json).unwrap();
            }
            buf
        };
        assert_eq!(render(false), render(false));
        assert_eq!(render(true), render(true));
    }
    let mut other = small_config(ModelKind::Mm1);
    let a = run_bias_cv_experiment(&other).unwrap();
    other.seed = 18;
    let b = run_bias_cv_experiment(&other).unwrap();
    assert_ne!(a.rows[0].mean_estimate, b.rows[0].mean_estimate);
}

#[test]
fn alpha_one_grid_behaves_like_exponential_fit() {
    let mut config = ExperimentConfig::new(ModelKind::Mm1, vec![GridPoint::parse("1,2,3").unwrap()]);
    config.sample_sizes = vec![2_000];
    config.replicates = 200;
    config.seed = 4;
    let table = run_bias_cv_experiment(&config).unwrap();
    for row in &table.rows {
        assert!(row.percent_bias < 2.0, "{row:?}");
    }
}

#[test]
fn spread_shrinks_with_sample_size() {
    let mut config = ExperimentConfig::new(ModelKind::Mm1, vec![GridPoint::parse("0.95,10,0.5").unwrap()]);
    config.sample_sizes = vec![100, 1_000, 10_000];
    config.replicates = 100;
    config.seed = 6;
    let table = run_bias_cv_experiment(&config).unwrap();
    for parameter in ["alpha", "lambda", "mu"] {
        let cv: Vec<f64> = table.rows.iter().filter(|r| r.parameter == parameter).map(|r| r.cv.unwrap()).collect();
        assert!(cv[0] > cv[1] && cv[1] > cv[2], "{parameter}: {cv:?}");
    }
}

#[test]
fn invalid_experiment_config_is_rejected() {
    let mut config = small_config(ModelKind::Mm1);
    config.replicates = 0;
    assert!(run_bias_cv_experiment(&config).is_err());
    assert!(GridPoint::parse("0.5,1").is_err());
    let mut bad_alpha = small_config(ModelKind::Mm1);
    bad_alpha.grid = vec![GridPoint::parse("1.5,1,1").unwrap()];
    assert!(run_coverage_experiment(&bad_alpha).is_err());
}

#[test]
fn simulate_then_estimate_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let sojourns = dir.path().join("s.csv");
    let status = bin()
        .args(["simulate", "--model", "mm1", "--alpha", "0.8", "--lambda", "1", "--mu", "2", "--events", "3000"])
        .args(["--sojourns", "--seed", "5", "--out"])
        .arg(&sojourns)
        .status()
        .unwrap();
    assert!(status.success());
    let out = bin().args(["estimate", "--format", "json", "--input"]).arg(&sojourns).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema_version"], 1);
    let alpha = report["alpha_hat"].as_f64().unwrap();
    assert!((alpha - 0.8).abs() < 0.1, "{alpha}");
}

#[test]
fn cli_output_is_byte_identical_across_runs() {
    let args = ["mc-bias", "--model", "mm1", "--grid", "0.6,1,1", "--n", "100", "--reps", "10", "--seed", "3"];
    let a = bin().args(args).output().unwrap();
    let b = bin().args(args).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let header = String::from_utf8_lossy(&a.stdout).lines().next().unwrap().to_string();
    assert!(header.contains("schema_version") && header.contains("seed"), "{header}");
}

#[test]
fn transient_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let code = fracqueue::harness::cli::run([
        "fracqueue",
        "transient",
        "--alpha",
        "0.6",
        "--lambda",
        "1",
        "--mu",
        "2",
        "--init",
        "2",
        "--t",
        "0.5,1",
        "--kmax",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "k,t,probability,terms_used");
    assert_eq!(lines.count(), 8);
}

#[test]
fn usage_and_runtime_errors() {
    let out = bin().args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["simulate", "--alpha", "1.5", "--lambda", "1", "--mu", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_parameter");
    assert!(err["message"].as_str().unwrap().contains("alpha"));

    let out = bin().args(["estimate", "--input", "/nonexistent/file.csv"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stderr).is_ok());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "seed = 9\n\n[transient]\nalpha = 1.0\nlambda = 1.0\nmu = 2.0\ninit = 0\nt = [1.0]\nkmax = 0\n")
        .unwrap();
    let from_file = bin().arg("--config").arg(&config).arg("transient").output().unwrap();
    assert!(from_file.status.success(), "{}", String::from_utf8_lossy(&from_file.stderr));
    let overridden = bin().arg("--config").arg(&config).args(["transient", "--mu", "3"]).output().unwrap();
    assert!(overridden.status.success());
    assert_ne!(from_file.stdout, overridden.stdout);

    let p0 = |bytes: &[u8]| -> f64 {
        let text = String::from_utf8_lossy(bytes).to_string();
        text.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap()
    };
    let exact = fracqueue::transient::state_probability_classical(
        &fracqueue::sim::ModelParams::new(1.0, 1.0, 2.0, 0).unwrap(),
        0,
        1.0,
    )
    .unwrap();
    assert!((p0(&from_file.stdout) - exact).abs() < 1e-9);

    fs::write(&config, "[transient]\nalpha = \"high\"\n").unwrap();
    let out = bin().arg("--config").arg(&config).arg("transient").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_command_reports_change_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("series.csv");
    let mut csv = String::from("date,value\n");
    let mut level = 100.0_f64;
    for i in 0..120 {
        level += ((i * 37 % 11) as f64 - 5.0) * 0.7 + if i % 7 == 0 { 0.0 } else { 0.1 };
        csv.push_str(&format!("{}-{:02}-{:02},{level}\n", 2000 + i / 12, i % 12 + 1, 1 + (i * 13) % 27));
    }
    fs::write(&input, csv).unwrap();
    let out = bin()
        .args(["fit", "--format", "json", "--convention", "calendar_days", "--rate-fit-m", "20", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let changes = &report["changes"];
    let total = changes["positive"].as_u64().unwrap()
        + changes["negative"].as_u64().unwrap()
        + changes["zero"].as_u64().unwrap();
    assert_eq!(total, 119);
    assert_eq!(report["convention"], "calendar_days");
    assert!(report["rate_fit_acceptance"].as_f64().is_some());

    let out = bin().args(["fit", "--model", "linear_bd", "--input"]).arg(&input).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
