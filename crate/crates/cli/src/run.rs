//! Mode orchestration: load inputs, call the estimators, simulator or
//! validators, and write the reports.

use std::path::{Path, PathBuf};

use cleam::simulator::{derive_seed, run_grid, run_scenario, ScenarioConfig, ScenarioResult};
use cleam::validation::{compare_sample_vs_model, ks_test, qq_points, variance_oracle};
use cleam::{phat_distribution, EstimatorKind, Observations, PhatSeries};

use crate::config::{InputFormat, Mode, OutputFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::ingest::{ingest_labels, ingest_proportions, write_labels};
use crate::report::{
    AggregateRow, AverageRow, ErrorVsNRow, EstimateOutput, EstimatorFailure, KsRow, Meta, QqPoint, Report, ScenarioRow,
    SimulateOutput, ValidateOutput,
};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CLEAM_OUT_DIR";

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub confidence: Option<f64>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: Report,
    pub written: Vec<PathBuf>,
    /// An estimator failure that should set the exit status after the report
    /// has been written.
    pub deferred: Option<CliError>,
}

/// Output directory precedence: flag, config file, environment, current directory.
pub fn output_dir(flag: Option<&Path>, config: Option<&Path>, env: Option<PathBuf>) -> PathBuf {
    flag.map(Path::to_path_buf).or_else(|| config.map(Path::to_path_buf)).or(env).unwrap_or_else(|| PathBuf::from("."))
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })
}

/// Runs `mode` with the config at `config_path`.
pub fn run(mode: Mode, config_path: &Path, overrides: &Overrides) -> Result<RunSummary> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(declared) = cfg.mode {
        if declared != mode {
            return Err(CliError::Config(format!("config declares mode {declared:?} but {mode:?} was requested")));
        }
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(c) = overrides.confidence {
        cfg.confidence = c;
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(CliError::Config(format!("confidence must lie in (0, 1), got {}", cfg.confidence)));
    }

    let (report, deferred) = match mode {
        Mode::Estimate => estimate(&cfg)?,
        Mode::Simulate => (simulate(&cfg)?, None),
        Mode::Validate => (validate(&cfg)?, None),
        Mode::Report => return Err(CliError::Config("report mode takes a JSON report, not a config".into())),
    };

    let dir = output_dir(overrides.out.as_deref(), cfg.output.dir.as_deref(), env_out_dir());
    let written = emit(&report, &dir, cfg.output.format)?;
    Ok(RunSummary { report, written, deferred })
}

/// Re-renders the CSV tables of an existing JSON report. Tables go next to the
/// report unless an output directory is given.
pub fn rerender(report_path: &Path, out: Option<&Path>) -> Result<RunSummary> {
    let report = Report::read(report_path)?;
    let beside = report_path.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf);
    let dir = out.map(Path::to_path_buf).or_else(env_out_dir).or(beside).unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&dir)?;
    let written = report.write_csv(&dir)?;
    Ok(RunSummary { report, written, deferred: None })
}

pub fn emit(report: &Report, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    if format.json() {
        written.push(report.write_json(dir)?);
    }
    if format.csv() {
        written.extend(report.write_csv(dir)?);
    }
    Ok(written)
}

fn default_estimators(k: usize) -> Vec<EstimatorKind> {
    if k == 2 {
        EstimatorKind::ALL.to_vec()
    } else {
        vec![EstimatorKind::Baseline, EstimatorKind::Multiclass, EstimatorKind::Bbse]
    }
}

enum Input {
    Labels(Observations),
    Proportions(PhatSeries),
}

fn read_input(path: &Path, format: Option<InputFormat>, n_classes: usize, n: Option<u64>) -> Result<Input> {
    match format {
        Some(InputFormat::Proportions) => {
            let n = n.ok_or_else(|| CliError::Config("the proportions format needs the batch size n".into()))?;
            if n_classes != 2 {
                return Err(CliError::Config("the proportions format is two-class only".into()));
            }
            Ok(Input::Proportions(ingest_proportions(path, n)?.1))
        }
        other => Ok(Input::Labels(ingest_labels(path, n_classes, other)?.observations)),
    }
}

fn estimate(cfg: &RunConfig) -> Result<(Report, Option<CliError>)> {
    let sec = RunConfig::require(&cfg.estimate, "estimate")?;
    let channel = cfg.channel()?;
    if channel.k() != sec.n_classes {
        return Err(CliError::Config(format!(
            "classifier describes {} classes but n_classes is {}",
            channel.k(),
            sec.n_classes
        )));
    }
    let estimators = sec.estimators.clone().unwrap_or_else(|| default_estimators(sec.n_classes));
    let input = read_input(&sec.input, sec.format, sec.n_classes, sec.n)?;
    let (n, s) = match &input {
        Input::Labels(obs) => (obs.n(), obs.s()),
        Input::Proportions(series) => (series.n(), series.s()),
    };

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for kind in estimators {
        let res = match &input {
            Input::Labels(obs) => kind.evaluate(obs, &channel, cfg.source_prior(), cfg.confidence),
            Input::Proportions(series) => kind.evaluate_series(series, &channel, cfg.source_prior(), cfg.confidence),
        };
        let res = match (res, sec.ground_truth) {
            (Ok(r), Some(p0)) => r.with_ground_truth(p0),
            (r, _) => r,
        };
        match res {
            Ok(r) => estimates.push(r),
            Err(e) => {
                let e = CliError::from(e);
                failures.push(EstimatorFailure {
                    estimator: kind,
                    kind: e.kind().to_string(),
                    exit_code: e.exit_code(),
                    message: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let out = EstimateOutput {
        meta: Meta::new(cfg.seed, cfg.confidence),
        input: sec.input.display().to_string(),
        n_classes: sec.n_classes,
        n,
        s,
        channel,
        estimates,
        failures,
    };
    Ok((Report::Estimate(out), first_error))
}

/// Scenario rows for one batch size, plus per-estimator averages over rows.
fn sweep(
    base: &ScenarioConfig,
    grid: Option<&[f64]>,
    estimators: &[EstimatorKind],
) -> Result<(Vec<ScenarioResult>, Vec<AverageRow>)> {
    match grid {
        Some(p0s) => {
            let g = run_grid(base, p0s, estimators)?;
            let average = estimators
                .iter()
                .map(|&k| AverageRow {
                    estimator: k,
                    point_error: g.average_point_error(k).filter(|v| v.is_finite()),
                    interval_error: g.average_interval_error.iter().find(|(e, _)| *e == k).and_then(|(_, v)| *v),
                })
                .collect();
            Ok((g.rows, average))
        }
        None => {
            let r = run_scenario(base, estimators)?;
            let average = r
                .aggregates
                .iter()
                .map(|a| {
                    let row = AggregateRow::from(a);
                    AverageRow {
                        estimator: a.estimator,
                        point_error: row.mean_point_error,
                        interval_error: row.mean_interval_error,
                    }
                })
                .collect();
            Ok((vec![r], average))
        }
    }
}

fn simulate(cfg: &RunConfig) -> Result<Report> {
    let sec = RunConfig::require(&cfg.simulate, "simulate")?;
    let channel = cfg.channel()?;
    let p_star = match (&sec.p_star, &sec.grid) {
        (_, Some(grid)) => {
            let first = grid.first().ok_or_else(|| CliError::Config("simulate.grid is empty".into()))?;
            cleam::ClassDistribution::binary(*first)?
        }
        (Some(p), None) => p.clone(),
        (None, None) => return Err(CliError::Config("simulate needs p_star or grid".into())),
    };
    let estimators = sec.estimators.clone().unwrap_or_else(|| default_estimators(channel.k()));
    let base = ScenarioConfig {
        p_star,
        channel: channel.clone(),
        n: sec.n,
        s: sec.s,
        repetitions: sec.repetitions,
        seed: cfg.seed,
        confidence: cfg.confidence,
        source_prior: cfg.source_prior().cloned(),
    };
    let grid = sec.grid.as_deref();
    let (results, average) = sweep(&base, grid, &estimators)?;

    let mut error_vs_n = Vec::new();
    for &n in sec.n_values.iter().flatten() {
        let (rows, _) = sweep(&ScenarioConfig { n, ..base.clone() }, grid, &estimators)?;
        for row in &rows {
            for a in &row.aggregates {
                let a = AggregateRow::from(a);
                error_vs_n.push(ErrorVsNRow {
                    p_star_0: row.config.p_star.get(0),
                    n,
                    estimator: a.estimator,
                    mean_point_error: a.mean_point_error,
                    mean_interval_error: a.mean_interval_error,
                });
            }
        }
    }

    if let Some(path) = &sec.fixture {
        let obs = results[0].config.observations(0)?;
        let ids: Vec<String> = (0..obs.s()).map(|i| format!("batch-{i:03}")).collect();
        write_labels(path, &ids, &obs)?;
    }

    let rows = results
        .into_iter()
        .map(|r| ScenarioRow {
            p_star: r.config.p_star.probs().to_vec(),
            seed: r.config.seed,
            aggregates: r.aggregates.iter().map(AggregateRow::from).collect(),
            repetitions: r.repetitions,
        })
        .collect();
    Ok(Report::Simulate(SimulateOutput {
        meta: Meta::new(cfg.seed, cfg.confidence),
        channel,
        n: sec.n,
        s: sec.s,
        repetitions: sec.repetitions,
        estimators,
        rows,
        average,
        error_vs_n,
    }))
}

fn validate(cfg: &RunConfig) -> Result<Report> {
    let sec = RunConfig::require(&cfg.validate, "validate")?;
    let channel = cfg.channel()?;
    let acc = channel.binary_accuracy()?;
    if sec.runs == 0 {
        return Err(CliError::Config("validate.runs must be at least 1".into()));
    }

    let (source, series): (String, Vec<PhatSeries>) = match &sec.input {
        Some(path) => {
            let s = match read_input(path, sec.format, 2, Some(sec.n))? {
                Input::Labels(obs) => obs.series(0)?,
                Input::Proportions(s) => s,
            };
            (path.display().to_string(), vec![s])
        }
        None => {
            let series = (0..sec.runs)
                .map(|run| {
                    let scenario = ScenarioConfig {
                        p_star: sec.p_star.clone(),
                        channel: channel.clone(),
                        n: sec.n,
                        s: sec.s,
                        repetitions: 1,
                        seed: derive_seed(cfg.seed, run as u64),
                        confidence: cfg.confidence,
                        source_prior: None,
                    };
                    scenario.validate()?;
                    scenario.observations(0)?.series(0)
                })
                .collect::<cleam::Result<Vec<_>>>()?;
            ("simulated".to_string(), series)
        }
    };

    let n = series[0].n();
    let model = phat_distribution(&sec.p_star, &acc, n)?;
    let ks = series
        .iter()
        .enumerate()
        .map(|(i, s)| ks_test(s, &model, sec.significance).map(|r| KsRow::new(i, &r)))
        .collect::<cleam::Result<Vec<_>>>()?;
    let pass_fraction = ks.iter().filter(|k| !k.reject).count() as f64 / ks.len() as f64;
    let comparison = compare_sample_vs_model(&series[0], &sec.p_star, &acc)?;
    let qq = qq_points(&series[0], &model)?
        .into_iter()
        .map(|(theoretical, sample)| QqPoint { theoretical, sample })
        .collect();
    let oracle = match sec.oracle_batches {
        0 => None,
        b => Some(variance_oracle(&sec.p_star, &acc, n, b, cfg.seed)?),
    };

    Ok(Report::Validate(ValidateOutput {
        meta: Meta::new(cfg.seed, cfg.confidence),
        source,
        p_star: sec.p_star.probs().to_vec(),
        alpha: acc.alpha().to_vec(),
        n,
        s: series[0].s(),
        significance: sec.significance,
        comparison,
        ks,
        pass_fraction,
        qq,
        variance_oracle: oracle,
    }))
}
