//! Correlation tables and seed-aggregated series from metrics CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use qbelief_core::nn::CellKind;
use qbelief_core::protocol::{Metric, MetricRecord, Tag};
use qbelief_core::stats::{correlation_report, CorrelationPoint, CorrelationReport};

use crate::formats::FormatError;

/// Pairs each checkpoint's return with its main-protocol information
/// estimate: the `main` tag, or `relevant` for augmented environments.
pub fn correlation_points(records: &[MetricRecord]) -> Vec<CorrelationPoint> {
    type Key = (String, CellKind, u64, u64);
    let mut ret: BTreeMap<Key, f64> = BTreeMap::new();
    let mut main: BTreeMap<Key, f64> = BTreeMap::new();
    let mut relevant: BTreeMap<Key, f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.epsilon.is_none()) {
        let key = (r.env.clone(), r.cell, r.seed, r.episode);
        match (r.metric, r.tag) {
            (Metric::Return, _) => ret.insert(key, r.value),
            (Metric::Mi, Tag::Main) => main.insert(key, r.value),
            (Metric::Mi, Tag::Relevant) => relevant.insert(key, r.value),
            (Metric::Mi, Tag::Irrelevant) => None,
        };
    }
    ret.into_iter()
        .filter_map(|(key, ret)| {
            let mi = main.get(&key).or_else(|| relevant.get(&key))?;
            Some(CorrelationPoint {
                env: key.0,
                cell: key.1,
                mi: *mi,
                ret,
            })
        })
        .collect()
}

pub fn correlations(records: &[MetricRecord]) -> CorrelationReport {
    correlation_report(&correlation_points(records))
}

pub fn render_table(report: &CorrelationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<10} {:>6} {:>9} {:>9}",
        "env", "cell", "n", "pearson", "spearman"
    );
    for e in &report.entries {
        let cell = e.cell.map(|c| c.name()).unwrap_or("aggregated");
        let _ = writeln!(
            out,
            "{:<24} {:<10} {:>6} {:>9.4} {:>9.4}",
            e.env, cell, e.samples, e.pearson, e.spearman
        );
    }
    for n in &report.notices {
        let _ = writeln!(out, "# {n}");
    }
    out
}

/// Mean and min/max band over seeds of one measured series point.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub env: String,
    pub cell: CellKind,
    pub metric: Metric,
    pub tag: Tag,
    pub epsilon: Option<f64>,
    pub episode: u64,
    pub seeds: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "env", "cell", "metric", "tag", "epsilon", "episode", "seeds", "mean", "min", "max",
];

/// Aggregates over seeds, skipping `NaN` values.
pub fn summarize(records: &[MetricRecord]) -> Vec<SummaryRow> {
    type Key = (String, CellKind, Metric, Tag, Option<u64>, u64);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.value.is_finite()) {
        let key = (
            r.env.clone(),
            r.cell,
            r.metric,
            r.tag,
            r.epsilon.map(f64::to_bits),
            r.episode,
        );
        groups.entry(key).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((env, cell, metric, tag, eps, episode), values)| SummaryRow {
            env,
            cell,
            metric,
            tag,
            epsilon: eps.map(f64::from_bits),
            episode,
            seeds: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| FormatError::Io(e.into());
    out.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.env.clone(),
            r.cell.to_string(),
            r.metric.name().to_string(),
            r.tag.name().to_string(),
            r.epsilon.map(|e| format!("{e:?}")).unwrap_or_default(),
            r.episode.to_string(),
            r.seeds.to_string(),
            format!("{:?}", r.mean),
            format!("{:?}", r.min),
            format!("{:?}", r.max),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
