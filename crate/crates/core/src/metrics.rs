//! Evaluation: rank and product-moment correlation, thresholded
//! classification scores, and report rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageCode;

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} gold vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{0} scores are constant; correlation is undefined")]
    DegenerateInput(&'static str),
    #[error("non-finite value in {0} scores")]
    NonFinite(&'static str),
    #[error("threshold {0} must lie strictly between 0 and 1")]
    InvalidThreshold(f64),
    #[error("bad report document: {0}")]
    BadReport(String),
}

fn check_pair(gold: &[f64], pred: &[f64], needed: usize) -> Result<(), MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch(gold.len(), pred.len()));
    }
    if gold.len() < needed {
        return Err(MetricError::TooFewSamples {
            needed,
            got: gold.len(),
        });
    }
    if gold.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite("gold"));
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite("predicted"));
    }
    Ok(())
}

/// 1-based fractional ranks: tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn correlation(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(MetricError::DegenerateInput("gold"));
    }
    if syy == 0.0 {
        return Err(MetricError::DegenerateInput("predicted"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn all_equal(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Spearman's rho: Pearson correlation of average-tie ranks.
pub fn spearman(gold: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(gold, pred, 2)?;
    if all_equal(gold) {
        return Err(MetricError::DegenerateInput("gold"));
    }
    if all_equal(pred) {
        return Err(MetricError::DegenerateInput("predicted"));
    }
    correlation(&average_ranks(gold), &average_ranks(pred))
}

/// Pearson product-moment correlation.
pub fn pearson(gold: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(gold, pred, 2)?;
    if all_equal(gold) {
        return Err(MetricError::DegenerateInput("gold"));
    }
    if all_equal(pred) {
        return Err(MetricError::DegenerateInput("predicted"));
    }
    correlation(gold, pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Labels both sides `value >= threshold` ("related") and scores the
/// predicted labels against the gold ones. Precision, recall and F1 are 0
/// when their denominators are.
pub fn binarized_metrics(
    gold: &[f64],
    pred: &[f64],
    threshold: f64,
) -> Result<BinaryMetrics, MetricError> {
    check_pair(gold, pred, 1)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricError::InvalidThreshold(threshold));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&g, &p) in gold.iter().zip(pred) {
        match (g >= threshold, p >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, gold.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Track {
    A,
    B,
    C,
}

impl std::str::FromStr for Track {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Track::A),
            "B" | "b" => Ok(Track::B),
            "C" | "c" => Ok(Track::C),
            other => Err(format!("unknown track {other:?} (expected A, B or C)")),
        }
    }
}

impl std::fmt::Display for Track {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Track::A => "A",
            Track::B => "B",
            Track::C => "C",
        })
    }
}

/// Scores of one (track, language, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub language: LanguageCode,
    pub track: Track,
    pub model_name: String,
    pub spearman: f64,
    pub pearson: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub n: usize,
    pub threshold: f64,
}

pub fn evaluate(
    gold: &[f64],
    pred: &[f64],
    threshold: f64,
    language: LanguageCode,
    track: Track,
    model_name: &str,
) -> Result<EvalReport, MetricError> {
    let spearman = spearman(gold, pred)?;
    let pearson = pearson(gold, pred)?;
    let bin = binarized_metrics(gold, pred, threshold)?;
    Ok(EvalReport {
        language,
        track,
        model_name: model_name.to_string(),
        spearman,
        pearson,
        f1: bin.f1,
        accuracy: bin.accuracy,
        recall: bin.recall,
        n: gold.len(),
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

#[derive(Serialize, Deserialize)]
struct ReportDocument {
    version: u32,
    reports: Vec<EvalReport>,
}

const TABLE_HEADERS: [&str; 7] = ["Sr.No.", "Language", "Model", "F1", "Accuracy", "Recall", "Spearman"];

pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let doc = ReportDocument {
                version: REPORT_VERSION,
                reports: reports.to_vec(),
            };
            let mut out = serde_json::to_vec_pretty(&doc).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Table => render_table(reports).into_bytes(),
    }
}

fn render_table(reports: &[EvalReport]) -> String {
    let rows: Vec<[String; 7]> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            [
                (i + 1).to_string(),
                r.language.display_name().to_string(),
                r.model_name.clone(),
                format!("{:.3}", r.f1),
                format!("{:.3}", r.accuracy),
                format!("{:.3}", r.recall),
                format!("{:.3}", r.spearman),
            ]
        })
        .collect();
    let mut widths = TABLE_HEADERS.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let mut s = String::new();
        for (k, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if k > 0 {
                s.push_str("  ");
            }
            // text columns left-aligned, numbers right-aligned
            if (1..=2).contains(&k) {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "{cell:>w$}");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&TABLE_HEADERS);
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells);
    }
    out
}

/// Reads the JSON form written by [`render_report`].
pub fn parse_report_json(bytes: &[u8]) -> Result<Vec<EvalReport>, MetricError> {
    let doc: ReportDocument =
        serde_json::from_slice(bytes).map_err(|e| MetricError::BadReport(e.to_string()))?;
    if doc.version != REPORT_VERSION {
        return Err(MetricError::BadReport(format!("unsupported version {}", doc.version)));
    }
    Ok(doc.reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spearman_examples() {
        let g = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&g, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&g, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&g, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert_eq!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(MetricError::LengthMismatch(2, 1))
        );
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(MetricError::DegenerateInput("gold"))
        );
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[0.5; 3]),
            Err(MetricError::DegenerateInput("predicted"))
        );
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(MetricError::TooFewSamples { .. })));
        assert_eq!(
            spearman(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(MetricError::NonFinite("gold"))
        );
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
        assert_eq!(average_ranks(&[3.0, 3.0, 3.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn pearson_examples() {
        let g = [0.1, 0.5, 0.2, 0.9];
        let affine: Vec<f64> = g.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&g, &affine).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert!((pearson(&g, &neg).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
        assert!((r - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((r - 0.866025).abs() < 1e-6);
    }

    #[test]
    fn binarized_examples() {
        let m = binarized_metrics(&[0.9, 0.2], &[0.8, 0.3], 0.5).unwrap();
        assert_eq!((m.accuracy, m.recall, m.f1), (1.0, 1.0, 1.0));

        let m = binarized_metrics(&[0.9, 0.9], &[0.1, 0.1], 0.5).unwrap();
        assert_eq!((m.accuracy, m.recall, m.f1), (0.0, 0.0, 0.0));

        let m = binarized_metrics(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.5, 0.5, 0.5, 0.5));

        assert_eq!(
            binarized_metrics(&[0.1], &[0.2], 1.0),
            Err(MetricError::InvalidThreshold(1.0))
        );
        assert_eq!(
            binarized_metrics(&[0.1], &[0.2, 0.3], 0.5),
            Err(MetricError::LengthMismatch(1, 2))
        );
        // threshold is inclusive
        let m = binarized_metrics(&[0.5], &[0.5], 0.5).unwrap();
        assert_eq!(m.recall, 1.0);
    }

    fn sample_report(model: &str) -> EvalReport {
        evaluate(
            &[0.1, 0.4, 0.8, 0.9],
            &[0.2, 0.3, 0.7, 0.95],
            DEFAULT_THRESHOLD,
            LanguageCode::Eng,
            Track::A,
            model,
        )
        .unwrap()
    }

    #[test]
    fn table_rendering() {
        let empty = String::from_utf8(render_report(&[], ReportFormat::Table)).unwrap();
        assert_eq!(empty.lines().count(), 1);
        assert!(empty.starts_with("Sr.No.  Language  Model  F1  Accuracy  Recall  Spearman"));

        let one = String::from_utf8(render_report(&[sample_report("SVR")], ReportFormat::Table)).unwrap();
        let lines: Vec<&str> = one.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("English"));
        assert!(lines[1].contains("SVR"));
        assert!(lines[1].ends_with("1.000"), "{}", lines[1]);
        assert_eq!(lines[0].find("Language"), lines[1].find("English"));
    }

    #[test]
    fn json_round_trip() {
        let reports = vec![sample_report("a"), sample_report("b")];
        let bytes = render_report(&reports, ReportFormat::Json);
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["reports"].as_array().unwrap().len(), 2);
        assert_eq!(parse_report_json(&bytes).unwrap(), reports);
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_maps(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30)
        ) {
            let (g, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(!all_equal(&g) && !all_equal(&p));
            let base = spearman(&g, &p).unwrap();
            let mapped: Vec<f64> = p.iter().map(|v| (v / 50.0).exp() * 3.0 - 7.0).collect();
            prop_assume!(!all_equal(&mapped));
            // exp may merge values that were distinct; only compare when ties are unchanged
            prop_assume!(average_ranks(&mapped) == average_ranks(&p));
            prop_assert!((spearman(&g, &mapped).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn binarized_in_unit_interval(
            pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..30),
            t in 0.01f64..0.99,
        ) {
            let (g, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = binarized_metrics(&g, &p, t).unwrap();
            for v in [m.precision, m.recall, m.f1, m.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
