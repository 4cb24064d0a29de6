//! Correlation coefficients between the information and return metrics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::nn::CellKind;

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            what: "correlation series",
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    if !(sxy.is_finite() && sxx.is_finite() && syy.is_finite()) {
        return Err(Error::NonFinite("correlation series"));
    }
    Ok((sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the mean of their ranks.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation of the ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch {
            what: "correlation series",
            expected: xs.len(),
            found: ys.len(),
        });
    }
    pearson(&ranks(xs), &ranks(ys))
}

/// One `(information, return)` observation tagged with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPoint {
    pub env: String,
    pub cell: CellKind,
    pub mi: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEntry {
    pub env: String,
    /// `None` for the row pooled over all cells.
    pub cell: Option<CellKind>,
    pub samples: usize,
    pub pearson: f64,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
    /// Keys that were skipped and why.
    pub notices: Vec<String>,
}

/// Pearson and Spearman coefficients per `(env, cell)` and pooled per env.
/// Points with a non-finite coordinate are ignored.
pub fn correlation_report(points: &[CorrelationPoint]) -> CorrelationReport {
    type Key = (String, Option<CellKind>);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in points.iter().filter(|p| p.mi.is_finite() && p.ret.is_finite()) {
        for key in [(p.env.clone(), Some(p.cell)), (p.env.clone(), None)] {
            let g = groups.entry(key).or_default();
            g.0.push(p.mi);
            g.1.push(p.ret);
        }
    }
    let mut report = CorrelationReport::default();
    for ((env, cell), (mi, ret)) in groups {
        let name = match cell {
            Some(c) => format!("{env}/{c}"),
            None => format!("{env}/aggregated"),
        };
        if mi.len() < 2 {
            report.notices.push(format!("{name}: fewer than two rows, omitted"));
            continue;
        }
        match (pearson(&mi, &ret), spearman(&mi, &ret)) {
            (Ok(p), Ok(s)) => report.entries.push(CorrelationEntry {
                env,
                cell,
                samples: mi.len(),
                pearson: p,
                spearman: s,
            }),
            _ => report.notices.push(format!("{name}: constant series, omitted")),
        }
    }
    report
}
