use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Metric;
use super::metrics::Summary;
use crate::error::{Error, Result};

/// One attack run against one victim seed (and, for logit recovery, one
/// prompt). Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub attack: String,
    pub seed: u64,
    pub prompt: usize,
    pub extracted_dim: Option<usize>,
    pub rms: Option<f64>,
    pub baseline_rms: Option<f64>,
    pub orthogonality_defect: Option<f64>,
    pub sphere_residual: Option<f64>,
    pub norm_verdict: Option<String>,
    pub bits: Option<f64>,
    pub missing: Option<usize>,
    pub violations: Option<usize>,
    pub logits: usize,
    pub queries: u64,
    pub retry_queries: u64,
    pub tokens: u64,
    pub queries_per_logit: Option<f64>,
    pub tokens_per_logit: Option<f64>,
    pub lower_bound: Option<f64>,
    pub error_code: Option<String>,
    pub error: Option<String>,
}

impl RunRecord {
    /// Column names of [`Report::write_csv`], in order.
    pub const CSV_COLUMNS: [&'static str; 22] = [
        "label",
        "attack",
        "seed",
        "prompt",
        "extracted_dim",
        "rms",
        "baseline_rms",
        "orthogonality_defect",
        "sphere_residual",
        "norm_verdict",
        "bits",
        "missing",
        "violations",
        "logits",
        "queries",
        "retry_queries",
        "tokens",
        "queries_per_logit",
        "tokens_per_logit",
        "lower_bound",
        "error_code",
        "error",
    ];

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn metric(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::ExtractedDim => self.extracted_dim.map(|d| d as f64),
            Metric::Rms => self.rms,
            Metric::Bits => self.bits,
            Metric::QueriesPerLogit => self.queries_per_logit,
            Metric::TokensPerLogit => self.tokens_per_logit,
        }
    }
}

/// Mean and spread of one metric over the successful runs of one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub label: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub seed: u64,
    pub prompt: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    /// SHA-256 over the experiment configs, in order.
    pub config_hash: String,
    pub revision: String,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    /// Wall-clock times; the only part of a report that varies between
    /// identical runs.
    pub timing: Vec<Timing>,
}

pub fn revision() -> String {
    match option_env!("LMEXTRACT_REVISION") {
        Some(rev) => format!("lmextract-{}-{rev}", env!("CARGO_PKG_VERSION")),
        None => format!("lmextract-{}", env!("CARGO_PKG_VERSION")),
    }
}

impl Report {
    pub fn new(name: impl Into<String>, config_hash: String) -> Self {
        Report {
            name: name.into(),
            config_hash,
            revision: revision(),
            runs: Vec::new(),
            aggregates: Vec::new(),
            timing: Vec::new(),
        }
    }

    /// Recompute aggregates for `metrics`, one row per (label, metric) in
    /// first-seen label order.
    pub fn aggregate(&mut self, metrics: &[Metric]) {
        let mut labels: Vec<&str> = Vec::new();
        for r in &self.runs {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
        let mut out = Vec::new();
        for label in labels {
            for &metric in metrics {
                let values: Vec<f64> = self
                    .runs
                    .iter()
                    .filter(|r| r.label == label && r.ok())
                    .filter_map(|r| r.metric(metric))
                    .collect();
                if let Some(s) = Summary::of(&values) {
                    out.push(Aggregate { label: label.into(), metric: metric.name().into(), mean: s.mean, std: s.std, n: s.n });
                }
            }
        }
        self.aggregates = out;
    }

    /// Append `other`'s runs and timings; the config hash covers both.
    pub fn merge(&mut self, other: Report) {
        self.config_hash = super::combine_hashes([self.config_hash.as_str(), other.config_hash.as_str()]);
        self.runs.extend(other.runs);
        self.timing.extend(other.timing);
    }

    pub fn runs_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs.iter().filter(move |r| r.label == label)
    }

    pub fn aggregate_for(&self, label: &str, metric: Metric) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.label == label && a.metric == metric.name())
    }

    /// JSON without the timing section; identical for identical configs.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.timing.clear();
        Ok(serde_json::to_string_pretty(&copy)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        if self.runs.is_empty() {
            writer.write_record(RunRecord::CSV_COLUMNS).map_err(csv_error)?;
        }
        for r in &self.runs {
            writer.serialize(r).map_err(csv_error)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    /// Write `report.json` and `report.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        self.write_csv(std::fs::File::create(dir.join("report.csv"))?)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
