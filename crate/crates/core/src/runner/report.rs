use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, Level};
use crate::backend::CacheStats;
use crate::corpus::write_file;
use crate::error::{Error, Result};
use crate::metrics::{mean_sd, quantile_sorted};
use crate::template::PromptTemplate;

/// One evaluated configuration: a demonstration applied to a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    /// Direction (`de-en`) or transfer setting label.
    pub direction: String,
    pub strategy: String,
    pub k: usize,
    /// `None` for zero-shot rows, which do not depend on any seed.
    pub seed: Option<u64>,
    /// Position within a sampled study (correlation, transfer).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    pub level: Level,
    pub n: usize,
    pub bleu: Option<f64>,
    /// COMET ×100; `None` when the scorer was unavailable.
    pub comet: Option<f64>,
    pub delta_bleu: Option<f64>,
    pub delta_comet: Option<f64>,
    /// Segments whose generation produced no usable output.
    pub failed: usize,
    pub demo_hash: String,
    pub error: Option<String>,
}

/// Unweighted mean over directions of the per-direction means over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub strategy: String,
    pub k: usize,
    pub directions: usize,
    pub bleu: Option<f64>,
    pub comet: Option<f64>,
    pub delta_bleu: Option<f64>,
    pub delta_comet: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// Direction, or `average` for the pooled row.
    pub direction: String,
    /// Feature name, or `cross_setting` in transfer studies.
    pub feature: String,
    pub metric: String,
    pub rho: f64,
    /// Absent on pooled rows.
    pub p_value: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub rng: String,
    pub template: PromptTemplate,
    pub bleu_signatures: BTreeMap<String, String>,
    pub rows: Vec<ScoreRow>,
    pub averages: Vec<AverageRow>,
    pub correlations: Vec<CorrelationRow>,
    pub notes: Vec<String>,
}

/// Timing of one row, kept apart from the report so reruns stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub direction: String,
    pub strategy: String,
    pub k: usize,
    pub seed: Option<u64>,
    pub sample: Option<usize>,
    pub generations: usize,
    pub tokens: usize,
    pub seconds: f64,
}

impl LatencyRow {
    pub fn seconds_per_token(&self) -> Option<f64> {
        (self.tokens > 0).then(|| self.seconds / self.tokens as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub latency: Vec<LatencyRow>,
    pub cache: Option<CacheStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub latency: Vec<LatencyRow>,
}

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TSV: &str = "report.tsv";
pub const META_FILE: &str = "run_meta.json";

impl RunReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("report serializes");
        v.push(b'\n');
        v
    }

    pub fn load(path: &Path) -> Result<RunReport> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// `direction, strategy, K, BLEU, COMET, n, seed, demonstration hash`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("direction\tstrategy\tk\tbleu\tcomet\tn\tseed\tdemo_hash\n");
        let num = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        for r in &self.rows {
            let seed = r.seed.map_or_else(|| "NA".to_string(), |s| s.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.direction,
                r.strategy,
                r.k,
                num(r.bleu),
                num(r.comet),
                r.n,
                seed,
                r.demo_hash
            );
        }
        out
    }
}

/// Writes `report.json`, `report.tsv` and `run_meta.json` under `dir`.
pub fn write_outputs(dir: &Path, output: &RunOutput, cache: Option<CacheStats>) -> Result<()> {
    write_file(&dir.join(REPORT_FILE), &output.report.to_json())?;
    write_file(&dir.join(REPORT_TSV), output.report.to_tsv().as_bytes())?;
    let meta = RunMeta {
        latency: output.latency.clone(),
        cache,
    };
    let mut bytes = serde_json::to_vec_pretty(&meta)?;
    bytes.push(b'\n');
    write_file(&dir.join(META_FILE), &bytes)
}

type Group = (String, String, usize);

fn grouped(report: &RunReport, metric: fn(&ScoreRow) -> Option<f64>) -> BTreeMap<Group, Vec<f64>> {
    let mut groups: BTreeMap<Group, Vec<f64>> = BTreeMap::new();
    for r in &report.rows {
        if let Some(v) = metric(r) {
            groups
                .entry((r.direction.clone(), r.strategy.clone(), r.k))
                .or_default()
                .push(v);
        }
    }
    groups
}

/// Box-plot quantiles and mean/sd curves per metric, plus latency series.
/// Returns the files written.
pub fn emit_plot_data(report: &RunReport, latency: &[LatencyRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    type Metric = fn(&ScoreRow) -> Option<f64>;
    let metrics: [(&str, Metric); 2] = [("bleu", |r| r.bleu), ("comet", |r| r.comet)];
    for (name, metric) in metrics {
        let groups = grouped(report, metric);
        let mut q = String::from("direction,strategy,k,n,min,q1,median,q3,max\n");
        let mut c = String::from("direction,strategy,k,n,mean,sd\n");
        for ((direction, strategy, k), mut values) in groups {
            values.sort_by(f64::total_cmp);
            let qs: Vec<String> = [0.0, 0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|p| quantile_sorted(&values, *p).to_string())
                .collect();
            let _ = writeln!(q, "{direction},{strategy},{k},{},{}", values.len(), qs.join(","));
            let (mean, sd) = mean_sd(&values);
            let _ = writeln!(c, "{direction},{strategy},{k},{},{mean},{sd}", values.len());
        }
        for (file, body) in [(format!("quantiles_{name}.csv"), q), (format!("curves_{name}.csv"), c)] {
            let path = dir.join(file);
            write_file(&path, body.as_bytes())?;
            written.push(path);
        }
    }
    let mut l = String::from("direction,strategy,k,seed,sample,generations,tokens,seconds,seconds_per_token\n");
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in latency {
        let _ = writeln!(
            l,
            "{},{},{},{},{},{},{},{},{}",
            r.direction,
            r.strategy,
            r.k,
            opt(r.seed.map(|s| s.to_string())),
            opt(r.sample.map(|s| s.to_string())),
            r.generations,
            r.tokens,
            r.seconds,
            opt(r.seconds_per_token().map(|s| s.to_string()))
        );
    }
    let path = dir.join("latency.csv");
    write_file(&path, l.as_bytes())?;
    written.push(path);
    Ok(written)
}
