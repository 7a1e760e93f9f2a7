//! Versioned JSON reports and the CSV tables rendered from them.
//!
//! The JSON report is canonical; every CSV table can be regenerated from it
//! with `cleam report`.

use std::path::{Path, PathBuf};

use cleam::simulator::{EstimatorAggregate, RepetitionResult};
use cleam::validation::{KsResult, ModelComparison, VarianceOracle};
use cleam::{Channel, EstimateReport, EstimatorKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub confidence: f64,
}

impl Meta {
    pub fn new(seed: u64, confidence: f64) -> Self {
        Meta {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Report {
    Estimate(EstimateOutput),
    Simulate(SimulateOutput),
    Validate(ValidateOutput),
}

impl Report {
    pub fn meta(&self) -> &Meta {
        match self {
            Report::Estimate(r) => &r.meta,
            Report::Simulate(r) => &r.meta,
            Report::Validate(r) => &r.meta,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Report::Estimate(_) => "estimate",
            Report::Simulate(_) => "simulate",
            Report::Validate(_) => "validate",
        }
    }

    pub fn json_file_name(&self) -> String {
        format!("{}_report.json", self.kind())
    }

    pub fn read(path: &Path) -> Result<Report> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
        let report: Report = serde_json::from_str(&text).map_err(|e| CliError::MalformedRow {
            path: path.to_path_buf(),
            line: e.line() as u64,
            reason: e.to_string(),
        })?;
        if report.meta().schema_version != REPORT_SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "{}: unsupported report schema_version {}",
                path.display(),
                report.meta().schema_version
            )));
        }
        Ok(report)
    }

    pub fn write_json(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.json_file_name());
        let text = serde_json::to_string_pretty(self).expect("reports serialize");
        std::fs::write(&path, text + "\n").map_err(|source| CliError::Write { path: path.clone(), source })?;
        Ok(path)
    }

    /// Writes this report's CSV tables into `dir` and returns their paths.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        match self {
            Report::Estimate(r) => Ok(vec![write_table(dir, "estimates.csv", &estimate_table(r))?]),
            Report::Simulate(r) => {
                let mut out = vec![write_table(dir, "simulate_table.csv", &simulate_table(r))?];
                if !r.error_vs_n.is_empty() {
                    out.push(write_table(dir, "error_vs_n.csv", &error_vs_n_table(r))?);
                }
                Ok(out)
            }
            Report::Validate(r) => {
                let mut out = vec![
                    write_table(dir, "comparison.csv", &comparison_table(r))?,
                    write_table(dir, "ks.csv", &ks_table(r))?,
                    write_table(dir, "qq.csv", &qq_table(r))?,
                ];
                if let Some(o) = &r.variance_oracle {
                    out.push(write_table(dir, "variance_oracle.csv", &oracle_table(o))?);
                }
                Ok(out)
            }
        }
    }
}

// ---- estimate ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorFailure {
    pub estimator: EstimatorKind,
    pub kind: String,
    pub exit_code: u8,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub meta: Meta,
    pub input: String,
    pub n_classes: usize,
    /// Samples per batch.
    pub n: u64,
    /// Number of batches.
    pub s: usize,
    pub channel: Channel,
    pub estimates: Vec<EstimateReport>,
    pub failures: Vec<EstimatorFailure>,
}

// ---- simulate ----

/// [`EstimatorAggregate`] with undefined means as `null` instead of NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub estimator: EstimatorKind,
    pub successes: usize,
    pub failures: usize,
    pub mean_point: Option<f64>,
    pub mean_lower: Option<f64>,
    pub mean_upper: Option<f64>,
    pub mean_point_error: Option<f64>,
    pub mean_interval_error: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl From<&EstimatorAggregate> for AggregateRow {
    fn from(a: &EstimatorAggregate) -> Self {
        AggregateRow {
            estimator: a.estimator,
            successes: a.successes,
            failures: a.failures,
            mean_point: finite(a.mean_point),
            mean_lower: a.mean_lower,
            mean_upper: a.mean_upper,
            mean_point_error: finite(a.mean_point_error),
            mean_interval_error: a.mean_interval_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub p_star: Vec<f64>,
    pub seed: u64,
    pub aggregates: Vec<AggregateRow>,
    pub repetitions: Vec<RepetitionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub estimator: EstimatorKind,
    pub point_error: Option<f64>,
    pub interval_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorVsNRow {
    pub p_star_0: f64,
    pub n: u64,
    pub estimator: EstimatorKind,
    pub mean_point_error: Option<f64>,
    pub mean_interval_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub meta: Meta,
    pub channel: Channel,
    pub n: u64,
    pub s: usize,
    pub repetitions: usize,
    pub estimators: Vec<EstimatorKind>,
    pub rows: Vec<ScenarioRow>,
    /// Errors averaged over rows.
    pub average: Vec<AverageRow>,
    pub error_vs_n: Vec<ErrorVsNRow>,
}

impl SimulateOutput {
    pub fn average(&self, kind: EstimatorKind) -> Option<&AverageRow> {
        self.average.iter().find(|a| a.estimator == kind)
    }
}

// ---- validate ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsRow {
    pub run: usize,
    pub d_statistic: f64,
    pub d_critical: f64,
    pub reject: bool,
}

impl KsRow {
    pub fn new(run: usize, r: &KsResult) -> Self {
        KsRow { run, d_statistic: r.d_statistic, d_critical: r.d_critical, reject: r.reject }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub sample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateOutput {
    pub meta: Meta,
    /// `simulated` or the path of the observed label file.
    pub source: String,
    pub p_star: Vec<f64>,
    pub alpha: Vec<f64>,
    pub n: u64,
    pub s: usize,
    pub significance: f64,
    pub comparison: ModelComparison,
    pub ks: Vec<KsRow>,
    /// Share of runs whose statistic stays at or below the critical value.
    pub pass_fraction: f64,
    /// QQ pairs of the first run.
    pub qq: Vec<QqPoint>,
    pub variance_oracle: Option<VarianceOracle>,
}

// ---- tables ----

/// A header plus string rows; kept separate from file IO for testing.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map(|v| format!("{v:.digits$}")).unwrap_or_default()
}

fn pct(x: Option<f64>) -> String {
    opt(x.map(|v| v * 100.0), 2)
}

fn full(x: f64) -> String {
    format!("{x}")
}

fn write_table(dir: &Path, name: &str, table: &Table) -> Result<PathBuf> {
    let path = dir.join(name);
    let err = |e: csv::Error| CliError::Write { path: path.clone(), source: e.into() };
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record(&table.header).map_err(err)?;
    for row in &table.rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|source| CliError::Write { path: path.clone(), source })?;
    Ok(path)
}

pub fn estimate_table(r: &EstimateOutput) -> Table {
    let header = ["estimator", "point", "clamped", "out_of_range", "lower", "upper", "e_mu", "e_rho"];
    let rows = r
        .estimates
        .iter()
        .map(|e| {
            let errs = e.errors.as_ref();
            vec![
                e.estimator.clone(),
                full(e.point.value),
                full(e.point.clamped_value),
                e.point.out_of_range.to_string(),
                e.interval.map(|iv| full(iv.lower)).unwrap_or_default(),
                e.interval.map(|iv| full(iv.upper)).unwrap_or_default(),
                errs.map(|x| full(x.point_error)).unwrap_or_default(),
                errs.and_then(|x| x.interval_error).map(full).unwrap_or_default(),
            ]
        })
        .collect();
    Table { header: header.map(String::from).to_vec(), rows }
}

fn has_interval(kind: EstimatorKind) -> bool {
    matches!(kind, EstimatorKind::Baseline | EstimatorKind::Cleam)
}

/// One row per ground truth: `gt`, then per estimator the mean estimate and
/// its error (in percent), plus interval bounds and error where defined.
/// The last row holds the averages.
pub fn simulate_table(r: &SimulateOutput) -> Table {
    let mut header = vec!["gt".to_string()];
    for k in &r.estimators {
        let name = k.name();
        header.push(format!("{name}_mu"));
        header.push(format!("{name}_e_mu_pct"));
        if has_interval(*k) {
            header.push(format!("{name}_rho_lower"));
            header.push(format!("{name}_rho_upper"));
            header.push(format!("{name}_e_rho_pct"));
        }
    }
    let mut rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![format!("{:.3}", row.p_star[0])];
            for k in &r.estimators {
                let a = row.aggregates.iter().find(|a| a.estimator == *k);
                cells.push(opt(a.and_then(|a| a.mean_point), 4));
                cells.push(pct(a.and_then(|a| a.mean_point_error)));
                if has_interval(*k) {
                    cells.push(opt(a.and_then(|a| a.mean_lower), 4));
                    cells.push(opt(a.and_then(|a| a.mean_upper), 4));
                    cells.push(pct(a.and_then(|a| a.mean_interval_error)));
                }
            }
            cells
        })
        .collect();
    let mut avg = vec!["average".to_string()];
    for k in &r.estimators {
        let a = r.average(*k);
        avg.push(String::new());
        avg.push(pct(a.and_then(|a| a.point_error)));
        if has_interval(*k) {
            avg.push(String::new());
            avg.push(String::new());
            avg.push(pct(a.and_then(|a| a.interval_error)));
        }
    }
    rows.push(avg);
    Table { header, rows }
}

pub fn error_vs_n_table(r: &SimulateOutput) -> Table {
    let header = ["p_star_0", "n", "estimator", "e_mu", "e_rho"];
    let rows = r
        .error_vs_n
        .iter()
        .map(|e| {
            vec![
                full(e.p_star_0),
                e.n.to_string(),
                e.estimator.name().to_string(),
                e.mean_point_error.map(full).unwrap_or_default(),
                e.mean_interval_error.map(full).unwrap_or_default(),
            ]
        })
        .collect();
    Table { header: header.map(String::from).to_vec(), rows }
}

pub fn comparison_table(r: &ValidateOutput) -> Table {
    let c = &r.comparison;
    let header = ["p_star_0", "sample_mean", "sample_std", "model_mean", "model_std", "n", "s"];
    let row = vec![
        full(c.p_star_0),
        full(c.sample_mean),
        full(c.sample_std),
        full(c.model_mean),
        full(c.model_std),
        c.n.to_string(),
        c.s.to_string(),
    ];
    Table { header: header.map(String::from).to_vec(), rows: vec![row] }
}

pub fn ks_table(r: &ValidateOutput) -> Table {
    let header = ["run", "d_statistic", "d_critical", "reject"];
    let rows =
        r.ks.iter()
            .map(|k| vec![k.run.to_string(), full(k.d_statistic), full(k.d_critical), k.reject.to_string()])
            .collect();
    Table { header: header.map(String::from).to_vec(), rows }
}

pub fn qq_table(r: &ValidateOutput) -> Table {
    let rows = r.qq.iter().map(|q| vec![full(q.theoretical), full(q.sample)]).collect();
    Table { header: vec!["theoretical".into(), "sample".into()], rows }
}

pub fn oracle_table(o: &VarianceOracle) -> Table {
    let header = ["batches", "empirical_var", "binomial_var", "plus_sign_var", "binomial_relative_error"];
    let row = vec![
        o.batches.to_string(),
        full(o.empirical_var),
        full(o.binomial_var),
        full(o.plus_sign_var),
        full(o.binomial_relative_error()),
    ];
    Table { header: header.map(String::from).to_vec(), rows: vec![row] }
}
