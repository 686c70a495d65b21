//! Imbalance-aware binary metrics, multi-run aggregation and the
//! interaction-toxicity histogram.
//!
//! Toxic is the positive class: sensitivity is toxic recall, specificity is
//! non-toxic recall, and the G-mean is their geometric mean. Plain accuracy,
//! F1 and ROC AUC are only computed on request ([`ExtendedMetrics`]).

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn scaled(&self, k: u64) -> Self {
        ConfusionMatrix {
            tp: self.tp * k,
            fn_: self.fn_ * k,
            tn: self.tn * k,
            fp: self.fp * k,
        }
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (Label::Toxic, Label::Toxic) => cm.tp += 1,
            (Label::Toxic, Label::NonToxic) => cm.fn_ += 1,
            (Label::NonToxic, Label::NonToxic) => cm.tn += 1,
            (Label::NonToxic, Label::Toxic) => cm.fp += 1,
        }
    }
    Ok(cm)
}

/// Metrics that fell back to 0 because their denominator was empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateMetric {
    /// No toxic interactions in the evaluated set.
    Sensitivity,
    /// No non-toxic interactions in the evaluated set.
    Specificity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub gmean: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<DegenerateMetric>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let mut degenerate = Vec::new();
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_).unwrap_or_else(|| {
        degenerate.push(DegenerateMetric::Sensitivity);
        0.0
    });
    let specificity = ratio(cm.tn, cm.tn + cm.fp).unwrap_or_else(|| {
        degenerate.push(DegenerateMetric::Specificity);
        0.0
    });
    for d in &degenerate {
        log::warn!("{d:?} undefined on this set (no members of the class); reported as 0");
    }
    Metrics {
        sensitivity,
        specificity,
        gmean: (sensitivity * specificity).sqrt(),
        degenerate,
    }
}

pub fn evaluate_labels(y_true: &[Label], y_pred: &[Label]) -> Result<Metrics> {
    Ok(metrics(&confusion(y_true, y_pred)?))
}

/// Diagnostics that are misleading on imbalanced data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtendedMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
}

pub fn extended_metrics(cm: &ConfusionMatrix, roc_auc: Option<f64>) -> ExtendedMetrics {
    let accuracy = ratio(cm.tp + cm.tn, cm.total()).unwrap_or(0.0);
    let precision = ratio(cm.tp, cm.tp + cm.fp).unwrap_or(0.0);
    let recall = ratio(cm.tp, cm.tp + cm.fn_).unwrap_or(0.0);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ExtendedMetrics {
        accuracy,
        precision,
        f1,
        roc_auc,
    }
}

/// Rank-based (Mann-Whitney) ROC AUC with midranks for ties. `None` when
/// either class is absent.
pub fn roc_auc(y_true: &[Label], scores: &[f64]) -> Result<Option<f64>> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y_true[k].is_toxic() {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let pos = y_true.iter().filter(|l| l.is_toxic()).count() as f64;
    let neg = y_true.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Ok(None);
    }
    Ok(Some((rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub sensitivity: f64,
    pub specificity: f64,
    pub gmean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: Vec<Metrics>,
    pub seeds: Vec<u64>,
    pub mean: MetricSummary,
    /// Sample standard deviation (n - 1 denominator); 0 for a single run.
    pub std: MetricSummary,
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn aggregate(runs: Vec<Metrics>, seeds: Vec<u64>) -> RunAggregate {
    let column = |f: fn(&Metrics) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    let (s_mean, s_std) = column(|m| m.sensitivity);
    let (p_mean, p_std) = column(|m| m.specificity);
    let (g_mean, g_std) = column(|m| m.gmean);
    RunAggregate {
        mean: MetricSummary {
            sensitivity: s_mean,
            specificity: p_mean,
            gmean: g_mean,
        },
        std: MetricSummary {
            sensitivity: s_std,
            specificity: p_std,
            gmean: g_std,
        },
        runs,
        seeds,
    }
}

/// Runs `evaluate` with seeds `base_seed .. base_seed + n_runs`.
pub fn multi_run<F>(n_runs: usize, base_seed: u64, mut evaluate: F) -> Result<RunAggregate>
where
    F: FnMut(u64) -> Result<Metrics>,
{
    if n_runs == 0 {
        return Err(Error::Config("at least one run is required".into()));
    }
    let seeds: Vec<u64> = (0..n_runs as u64)
        .map(|i| base_seed.wrapping_add(i))
        .collect();
    let runs = seeds
        .iter()
        .map(|&s| evaluate(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(runs, seeds))
}

/// Equal-width bins over [0, 1]; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn toxicity_histogram(
    values: impl IntoIterator<Item = f64>,
    n_bins: usize,
) -> Result<Histogram> {
    if n_bins < 2 {
        return Err(Error::Config("histogram needs at least 2 bins".into()));
    }
    let mut counts = vec![0u64; n_bins];
    for v in values {
        let bin = ((v.clamp(0.0, 1.0) * n_bins as f64) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let edges = (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect();
    Ok(Histogram { edges, counts })
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.edges[i], self.edges[i + 1], c);
        }
        out
    }

    /// Bar chart with a log10 y-axis; empty bins draw no bar.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h) = (640.0, 360.0);
        let (left, right, top, bottom) = (60.0, 20.0, 30.0, 40.0);
        let plot_w = w - left - right;
        let plot_h = h - top - bottom;
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let decades = ((max as f64).log10().ceil()).max(1.0);
        let y_of = |c: f64| top + plot_h * (1.0 - (c.max(1.0)).log10() / decades);
        let bar_w = plot_w / self.counts.len() as f64;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            w / 2.0,
            xml_escape(title)
        );
        for k in 0..=(decades as u32) {
            let y = y_of(10f64.powi(k as i32));
            let _ = writeln!(
                svg,
                r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"##,
                w - right,
                left - 4.0,
                y + 4.0
            );
        }
        for (i, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let x = left + i as f64 * bar_w;
            let y = y_of(c as f64);
            let _ = writeln!(
                svg,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#4477aa"><title>[{:.3}, {:.3}]: {c}</title></rect>"##,
                (bar_w - 1.0).max(0.5),
                top + plot_h - y,
                self.edges[i],
                self.edges[i + 1]
            );
        }
        let _ = writeln!(
            svg,
            r#"<line x1="{left}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{0:.2}" stroke="black"/>"#,
            top + plot_h,
            w - right
        );
        for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{tick}</text>"#,
                left + tick * plot_w,
                top + plot_h + 16.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">mean interaction toxicity</text>"#,
            left + plot_w / 2.0,
            h - 6.0
        );
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub result: RunAggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended: Option<ExtendedMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6}{:>20}{:>20}{:>20}",
            "", "Sensitivity", "Specificity", "G. Mean"
        )?;
        for row in &self.rows {
            let (m, s) = (&row.result.mean, &row.result.std);
            writeln!(
                f,
                "{:<6}{:>20}{:>20}{:>20}",
                row.model,
                format!("{:.3} ± {:.3}", m.sensitivity, s.sensitivity),
                format!("{:.3} ± {:.3}", m.specificity, s.specificity),
                format!("{:.3} ± {:.3}", m.gmean, s.gmean),
            )?;
        }
        Ok(())
    }
}
