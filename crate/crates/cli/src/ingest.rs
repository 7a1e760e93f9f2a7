//! Reading classifier labels and precomputed proportions.
//!
//! Label files carry one row per sample (`batch_id,predicted_class`) or one
//! row per aggregated count (`batch_id,predicted_class,count`), as CSV with a
//! header or as line-delimited JSON objects with the same fields. Batches are
//! kept in order of first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use cleam::{Observations, PhatSeries};
use serde::{Deserialize, Serialize};

use crate::config::InputFormat;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub batch_id: String,
    pub predicted_class: i64,
    #[serde(default)]
    pub count: Option<u64>,
}

/// Batches grouped from a label file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledBatches {
    pub batch_ids: Vec<String>,
    pub observations: Observations,
}

pub fn detect_format(path: &Path) -> InputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => InputFormat::Jsonl,
        _ => InputFormat::Csv,
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

struct Grouper {
    path: PathBuf,
    n_classes: usize,
    order: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<Vec<u64>>,
}

impl Grouper {
    fn new(path: &Path, n_classes: usize) -> Self {
        Grouper { path: path.to_path_buf(), n_classes, order: Vec::new(), index: HashMap::new(), counts: Vec::new() }
    }

    fn push(&mut self, rec: LabelRecord, line: u64) -> Result<()> {
        if rec.predicted_class < 0 || rec.predicted_class as usize >= self.n_classes {
            return Err(CliError::UnknownClass {
                path: self.path.clone(),
                line,
                class: rec.predicted_class,
                n_classes: self.n_classes,
            });
        }
        let count = rec.count.unwrap_or(1);
        if count == 0 {
            return Err(CliError::MalformedRow {
                path: self.path.clone(),
                line,
                reason: "count must be at least 1".into(),
            });
        }
        let slot = match self.index.get(&rec.batch_id) {
            Some(&i) => i,
            None => {
                self.index.insert(rec.batch_id.clone(), self.order.len());
                self.order.push(rec.batch_id);
                self.counts.push(vec![0; self.n_classes]);
                self.order.len() - 1
            }
        };
        let cell = &mut self.counts[slot][rec.predicted_class as usize];
        *cell = cell.checked_add(count).ok_or_else(|| CliError::MalformedRow {
            path: self.path.clone(),
            line,
            reason: "count overflows".into(),
        })?;
        Ok(())
    }

    fn finish(self) -> Result<LabelledBatches> {
        if self.order.is_empty() {
            return Err(CliError::EmptyInput { path: self.path });
        }
        let sizes: Vec<u64> = self.counts.iter().map(|c| c.iter().sum()).collect();
        if let Some(bad) = sizes.iter().position(|&n| n != sizes[0]) {
            return Err(CliError::InconsistentBatchSize {
                batch_id: self.order[bad].clone(),
                got: sizes[bad],
                first_id: self.order[0].clone(),
                expected: sizes[0],
            });
        }
        let observations = Observations::new(sizes[0], self.counts)?;
        Ok(LabelledBatches { batch_ids: self.order, observations })
    }
}

/// Reads a label file and groups it into equally sized batches.
pub fn ingest_labels(path: &Path, n_classes: usize, format: Option<InputFormat>) -> Result<LabelledBatches> {
    if n_classes < 2 {
        return Err(CliError::Config(format!("n_classes must be at least 2, got {n_classes}")));
    }
    let mut grouper = Grouper::new(path, n_classes);
    match format.unwrap_or_else(|| detect_format(path)) {
        InputFormat::Csv => {
            for (line, rec) in csv_rows::<LabelRecord>(path)? {
                grouper.push(rec, line)?;
            }
        }
        InputFormat::Jsonl => {
            for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
                let line_no = i as u64 + 1;
                let text = line.map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
                if text.trim().is_empty() {
                    continue;
                }
                let rec: LabelRecord = serde_json::from_str(&text).map_err(|e| CliError::MalformedRow {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: e.to_string(),
                })?;
                grouper.push(rec, line_no)?;
            }
        }
        InputFormat::Proportions => {
            return Err(CliError::Config("proportion files hold no labels; use ingest_proportions".into()));
        }
    }
    grouper.finish()
}

fn malformed_csv(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    CliError::MalformedRow { path: path.to_path_buf(), line, reason: e.to_string() }
}

/// Deserialized rows of a headed CSV file, each with its 1-based line number.
fn csv_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| malformed_csv(path, e))?.clone();
    let mut record = csv::StringRecord::new();
    let mut out = Vec::new();
    while rdr.read_record(&mut record).map_err(|e| malformed_csv(path, e))? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record.deserialize(Some(&headers)).map_err(|e| CliError::MalformedRow {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        out.push((line, row));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProportionRecord {
    batch_id: String,
    phat: f64,
}

/// Reads precomputed class-0 proportions (`batch_id,phat`) for batches of size `n`.
pub fn ingest_proportions(path: &Path, n: u64) -> Result<(Vec<String>, PhatSeries)> {
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in csv_rows::<ProportionRecord>(path)? {
        if !(0.0..=1.0).contains(&rec.phat) {
            return Err(CliError::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("phat {} is not in [0, 1]", rec.phat),
            });
        }
        ids.push(rec.batch_id);
        values.push(rec.phat);
    }
    if values.is_empty() {
        return Err(CliError::EmptyInput { path: path.to_path_buf() });
    }
    Ok((ids, PhatSeries::new(values, n)?))
}

/// Writes batches as an aggregated label CSV (`batch_id,predicted_class,count`),
/// skipping zero counts.
pub fn write_labels(path: &Path, batch_ids: &[String], obs: &Observations) -> Result<()> {
    let err = |e: csv::Error| CliError::Write { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["batch_id", "predicted_class", "count"]).map_err(err)?;
    for (id, counts) in batch_ids.iter().zip(obs.batches()) {
        for (class, &c) in counts.iter().enumerate() {
            if c > 0 {
                w.write_record([id.as_str(), &class.to_string(), &c.to_string()]).map_err(err)?;
            }
        }
    }
    w.flush().map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(name: &str, body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn aggregated_csv() {
        let (_d, p) = file("l.csv", "batch_id,predicted_class,count\nb1,0,240\nb1,1,160\nb2,0,240\nb2,1,160\n");
        let got = ingest_labels(&p, 2, None).unwrap();
        assert_eq!(got.batch_ids, vec!["b1", "b2"]);
        let s = got.observations.series(0).unwrap();
        assert_eq!(s.values(), &[0.6, 0.6]);
        assert_eq!(s.n(), 400);
    }

    #[test]
    fn per_sample_csv_and_jsonl_agree() {
        let (_d, p) = file("l.csv", "batch_id,predicted_class\na,0\na,1\na,0\nb,1\nb,1\nb,0\n");
        let csv = ingest_labels(&p, 2, None).unwrap();
        let (_d2, q) = file(
            "l.jsonl",
            "{\"batch_id\":\"a\",\"predicted_class\":0,\"count\":2}\n{\"batch_id\":\"a\",\"predicted_class\":1}\n\n\
             {\"batch_id\":\"b\",\"predicted_class\":1,\"count\":2}\n{\"batch_id\":\"b\",\"predicted_class\":0}\n",
        );
        let jsonl = ingest_labels(&q, 2, None).unwrap();
        assert_eq!(csv, jsonl);
        assert_eq!(csv.observations.batches(), &[vec![2, 1], vec![1, 2]]);
    }

    #[test]
    fn empty_input() {
        let (_d, p) = file("l.csv", "batch_id,predicted_class,count\n");
        assert!(matches!(ingest_labels(&p, 2, None), Err(CliError::EmptyInput { .. })));
        let (_d, p) = file("l.jsonl", "");
        assert!(matches!(ingest_labels(&p, 2, None), Err(CliError::EmptyInput { .. })));
    }

    #[test]
    fn malformed_row_reports_line() {
        let (_d, p) = file("l.csv", "batch_id,predicted_class,count\nb1,0,3\nb1,x,2\n");
        match ingest_labels(&p, 2, None) {
            Err(CliError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let (_d, p) = file("l.jsonl", "{\"batch_id\":\"a\",\"predicted_class\":0}\n{oops}\n");
        match ingest_labels(&p, 2, None) {
            Err(CliError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let (_d, p) = file("l.csv", "batch_id,predicted_class,count\nb1,0,0\n");
        assert!(matches!(ingest_labels(&p, 2, None), Err(CliError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn unknown_class_and_inconsistent_n() {
        let (_d, p) = file("l.csv", "batch_id,predicted_class,count\nb1,0,3\nb1,2,1\n");
        assert!(matches!(ingest_labels(&p, 2, None), Err(CliError::UnknownClass { line: 3, class: 2, .. })));
        let (_d, p) = file("l.csv", "batch_id,predicted_class,count\nb1,0,3\nb1,-1,1\n");
        assert!(matches!(ingest_labels(&p, 2, None), Err(CliError::UnknownClass { .. })));
        let (_d, p) = file("l.csv", "batch_id,predicted_class,count\nb1,0,3\nb2,0,2\nb2,1,2\n");
        match ingest_labels(&p, 2, None) {
            Err(CliError::InconsistentBatchSize { batch_id, got, expected, .. }) => {
                assert_eq!((batch_id.as_str(), got, expected), ("b2", 4, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_data_error() {
        let err = ingest_labels(Path::new("/nonexistent/labels.csv"), 2, None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn proportions() {
        let (_d, p) = file("p.csv", "batch_id,phat\nr1,0.61\nr2,0.605\n");
        let (ids, s) = ingest_proportions(&p, 400).unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(s.values(), &[0.61, 0.605]);
        let (_d, p) = file("p.csv", "batch_id,phat\nr1,1.5\n");
        assert!(ingest_proportions(&p, 400).is_err());
        let (_d, p) = file("p.csv", "batch_id,phat\n");
        assert!(matches!(ingest_proportions(&p, 400), Err(CliError::EmptyInput { .. })));
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let obs = Observations::new(5, vec![vec![5, 0], vec![2, 3], vec![0, 5]]).unwrap();
        let ids: Vec<String> = (0..3).map(|i| format!("batch-{i}")).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.csv");
        write_labels(&path, &ids, &obs).unwrap();
        let back = ingest_labels(&path, 2, None).unwrap();
        assert_eq!(back.batch_ids, ids);
        assert_eq!(back.observations, obs);
    }
}
