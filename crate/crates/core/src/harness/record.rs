//! Result rows, the JSONL writer and the CSV summary.
//!
//! A run writes `<name>.jsonl`: one header object, then one row object per
//! line, each flushed as soon as it is written. The summary `<name>.csv`
//! groups rows by `(L, epsilon, psi, key, metric)` in order of first
//! appearance, skips rows without a value, and reports per group
//!
//! - `n`, `mean`, `sd` (sample, `n - 1`), `min`, `max`;
//! - `ci_lo`, `ci_hi`: the Wilson 95% interval of the mean if the rows are
//!   event indicators, the row's own interval if the group has one row carrying one,
//!   otherwise `mean ± 1.96 sd / sqrt(n)` (empty for `n < 2`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::reference::special::wilson_interval;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: String,
    /// position of the producing task in the canonical order
    pub task: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub env_index: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub env_seed: Option<u64>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none", default)]
    pub l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psi: Option<usize>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub key: BTreeMap<String, f64>,
    pub metric: String,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci: Option<(f64, f64)>,
    /// a 0/1 event indicator, summarized as a frequency
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub indicator: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Coordinates shared by the rows of one task.
#[derive(Clone, Debug, Default)]
pub struct RowContext {
    pub env_index: Option<u64>,
    pub env_seed: Option<u64>,
    pub l: Option<f64>,
    pub epsilon: Option<f64>,
    pub psi: Option<usize>,
    pub key: BTreeMap<String, f64>,
}

impl RowContext {
    pub fn with_key(&self, name: &str, v: f64) -> RowContext {
        let mut c = self.clone();
        c.key.insert(name.into(), v);
        c
    }

    pub fn with_psi(&self, psi: usize) -> RowContext {
        RowContext { psi: Some(psi), ..self.clone() }
    }

    pub fn row(&self, metric: &str, value: f64) -> Row {
        Row {
            kind: "row".into(),
            task: 0,
            env_index: self.env_index,
            env_seed: self.env_seed,
            l: self.l,
            epsilon: self.epsilon,
            psi: self.psi,
            key: self.key.clone(),
            metric: metric.into(),
            value: Some(value),
            ci: None,
            indicator: false,
            error: None,
        }
    }

    pub fn row_ci(&self, metric: &str, value: f64, ci: (f64, f64)) -> Row {
        Row { ci: Some(ci), ..self.row(metric, value) }
    }

    pub fn flag(&self, metric: &str, b: bool) -> Row {
        Row { indicator: true, ..self.row(metric, if b { 1.0 } else { 0.0 }) }
    }

    pub fn error(&self, e: &Error) -> Row {
        Row { value: None, error: Some(e.to_string()), ..self.row("error", 0.0) }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    pub build_id: String,
    pub solver_residual_tol: f64,
    pub solver_iter_tol: f64,
    pub dense_max: usize,
    pub sparse_lu_max: usize,
    pub mollifier_intervals: usize,
    pub mollifier_z: f64,
    pub h_paper_scale: f64,
}

impl Provenance {
    pub fn current() -> Provenance {
        use crate::kernels::mollifier::{Mollifier, DEFAULT_INTERVALS};
        use crate::solver;
        Provenance {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            build_id: option_env!("RWRE_BUILD_ID").unwrap_or("unknown").into(),
            solver_residual_tol: solver::RESIDUAL_TOL,
            solver_iter_tol: solver::ITER_TOL,
            dense_max: solver::DENSE_MAX,
            sparse_lu_max: solver::SPARSE_LU_MAX,
            mollifier_intervals: DEFAULT_INTERVALS,
            mollifier_z: Mollifier::standard().z(),
            h_paper_scale: crate::kernels::field::PAPER_SCALE,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub schema_version: u32,
    pub experiment: Experiment,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
    /// seconds since the Unix epoch; the only field that varies between reruns
    pub timestamp: u64,
}

impl Header {
    pub fn new(config: &ExperimentConfig, warnings: Vec<String>) -> Header {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Header {
            kind: "header".into(),
            schema_version: SCHEMA_VERSION,
            experiment: config.experiment,
            config_hash: config.hash(),
            config: config.clone(),
            provenance: Provenance::current(),
            warnings,
            timestamp,
        }
    }
}

/// Line-per-object writer that flushes after every line.
pub struct JsonlWriter {
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<JsonlWriter> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(JsonlWriter { out: BufWriter::new(File::create(path)?) })
    }

    pub fn write<T: Serialize>(&mut self, v: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, v).map_err(|e| Error::Io(e.to_string()))?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Header and rows of a JSONL file; a truncated last line is ignored.
pub fn read_jsonl(path: &Path) -> Result<(Header, Vec<Row>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| Error::CorruptPayload("empty JSONL".into()))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        match serde_json::from_str::<Row>(&line) {
            Ok(r) => rows.push(r),
            Err(_) => break,
        }
    }
    Ok((header, rows))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub epsilon: Option<f64>,
    pub psi: Option<usize>,
    pub key: String,
    pub metric: String,
    pub n: u64,
    pub mean: f64,
    pub sd: Option<f64>,
    pub min: f64,
    pub max: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

fn key_string(key: &BTreeMap<String, f64>) -> String {
    key.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// The documented aggregation of rows into summary lines.
pub fn summarize(experiment: Experiment, rows: &[Row]) -> Vec<SummaryRow> {
    type GroupKey = (Option<u64>, Option<u64>, Option<usize>, String, String);
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: BTreeMap<GroupKey, Vec<&Row>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.value.is_some()) {
        let k = (r.l.map(f64::to_bits), r.epsilon.map(f64::to_bits), r.psi, key_string(&r.key), r.metric.clone());
        let g = groups.entry(k.clone()).or_default();
        if g.is_empty() {
            order.push(k);
        }
        g.push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let g = &groups[&k];
            let vals: Vec<f64> = g.iter().map(|r| r.value.unwrap()).collect();
            let n = vals.len() as u64;
            let mean = vals.iter().sum::<f64>() / n as f64;
            let sd = (n >= 2).then(|| {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            });
            let ci = if g.iter().all(|r| r.indicator) {
                Some(wilson_interval(vals.iter().filter(|&&v| v == 1.0).count() as u64, n, 1.96))
            } else if n == 1 && g[0].ci.is_some() {
                g[0].ci
            } else {
                sd.map(|s| (mean - 1.96 * s / (n as f64).sqrt(), mean + 1.96 * s / (n as f64).sqrt()))
            };
            SummaryRow {
                experiment: experiment.name().into(),
                l: k.0.map(f64::from_bits),
                epsilon: k.1.map(f64::from_bits),
                psi: k.2,
                key: k.3.clone(),
                metric: k.4.clone(),
                n,
                mean,
                sd,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ci_lo: ci.map(|c| c.0),
                ci_hi: ci.map(|c| c.1),
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record([
            "experiment", "L", "epsilon", "psi", "key", "metric", "n", "mean", "sd", "min", "max", "ci_lo", "ci_hi",
        ])
        .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Output file paths for a run named `stem` under `dir`.
pub fn output_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.jsonl")), dir.join(format!("{stem}.csv")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<Row> {
        let c = RowContext { l: Some(12.0), ..Default::default() };
        vec![
            c.flag("pass", true),
            c.flag("pass", false),
            c.flag("pass", true),
            c.row("x", 1.0),
            c.row("x", 3.0),
            c.row_ci("y", 0.5, (0.4, 0.6)),
            c.error(&Error::Singular("boom".into())),
        ]
    }

    #[test]
    fn aggregation() {
        let s = summarize(Experiment::Dstar, &rows());
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].metric, "pass");
        assert!((s[0].mean - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((s[0].ci_lo, s[0].ci_hi), {
            let c = wilson_interval(2, 3, 1.96);
            (Some(c.0), Some(c.1))
        });
        assert_eq!(s[1].sd, Some(2f64.sqrt()));
        assert_eq!((s[2].ci_lo, s[2].ci_hi), (Some(0.4), Some(0.6)));
    }

    #[test]
    fn jsonl_roundtrip_and_truncation() {
        let dir = std::env::temp_dir().join(format!("rwre-record-{}", std::process::id()));
        let (p, csv_path) = output_paths(&dir, "t");
        let cfg = ExperimentConfig::new(Experiment::Dstar, 4);
        let mut w = JsonlWriter::create(&p).unwrap();
        w.write(&Header::new(&cfg, vec![])).unwrap();
        for r in rows() {
            w.write(&r).unwrap();
        }
        drop(w);
        let (h, back) = read_jsonl(&p).unwrap();
        assert_eq!(h.config, cfg);
        assert_eq!(back, rows());
        // a partial trailing line leaves a valid prefix
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str("{\"kind\":\"row\",\"ta");
        std::fs::write(&p, text).unwrap();
        assert_eq!(read_jsonl(&p).unwrap().1.len(), rows().len());
        write_summary(&csv_path, &summarize(Experiment::Dstar, &back)).unwrap();
        let csv_text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(csv_text.starts_with("experiment,L,epsilon,psi,key,metric,n,mean"));
        assert_eq!(csv_text.lines().count(), 4);
        std::fs::remove_dir_all(&dir).ok();
    }
}
