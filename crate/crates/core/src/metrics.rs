//! Confusion matrix, per-class precision/recall/F1 and the text classification report.

use std::fmt::Write as _;

use thiserror::Error;

use crate::Digit;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no samples to evaluate")]
    Empty,
}

/// Rows are true classes, columns predicted classes, both indexed by position
/// in `class_ids`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_ids: Vec<Digit>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn class_ids(&self) -> &[Digit] {
        &self.class_ids
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Count for positions `(t, p)` in `class_ids`.
    pub fn count(&self, t: usize, p: usize) -> u64 {
        self.counts[t * self.num_classes() + p]
    }

    pub fn row(&self, t: usize) -> &[u64] {
        let c = self.num_classes();
        &self.counts[t * c..(t + 1) * c]
    }

    pub fn row_sum(&self, t: usize) -> u64 {
        self.row(t).iter().sum()
    }

    pub fn col_sum(&self, p: usize) -> u64 {
        (0..self.num_classes()).map(|t| self.count(t, p)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.count(i, i)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn confusion(y_true: &[Digit], y_pred: &[Digit]) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut seen = [false; 256];
    for &d in y_true.iter().chain(y_pred) {
        seen[d as usize] = true;
    }
    let class_ids: Vec<Digit> = (0..=255u8).filter(|&d| seen[d as usize]).collect();
    let mut pos = [0usize; 256];
    for (i, &d) in class_ids.iter().enumerate() {
        pos[d as usize] = i;
    }
    let c = class_ids.len();
    let mut counts = vec![0u64; c * c];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[pos[t as usize] * c + pos[p as usize]] += 1;
    }
    Ok(ConfusionMatrix { class_ids, counts })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    pub class: Digit,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassReport {
    pub rows: Vec<ClassMetrics>,
    /// Support-weighted means over `rows`.
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f1: f64,
    pub total: u64,
    pub accuracy: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean; zero when both inputs are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

impl ClassReport {
    /// Builds the averages from per-class rows. Accuracy is taken as the
    /// support-weighted recall, which equals trace/total for rows derived from
    /// a confusion matrix.
    pub fn from_rows(rows: Vec<ClassMetrics>) -> Self {
        let total: u64 = rows.iter().map(|r| r.support).sum();
        let t = total as f64;
        let weighted = |f: fn(&ClassMetrics) -> f64| {
            ratio(rows.iter().map(|r| r.support as f64 * f(r)).sum(), t)
        };
        let avg_precision = weighted(|r| r.precision);
        let avg_recall = weighted(|r| r.recall);
        let avg_f1 = weighted(|r| r.f1);
        Self {
            avg_precision,
            avg_recall,
            avg_f1,
            total,
            accuracy: avg_recall,
            rows,
        }
    }
}

pub fn report(cm: &ConfusionMatrix) -> ClassReport {
    let rows = (0..cm.num_classes())
        .map(|i| {
            let tp = cm.count(i, i) as f64;
            let precision = ratio(tp, cm.col_sum(i) as f64);
            let recall = ratio(tp, cm.row_sum(i) as f64);
            ClassMetrics {
                class: cm.class_ids()[i],
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: cm.row_sum(i),
            }
        })
        .collect();
    let mut r = ClassReport::from_rows(rows);
    r.accuracy = ratio(cm.trace() as f64, cm.total() as f64);
    r
}

/// Two decimals, ties rounded up, always with a dot separator.
pub fn fixed2(v: f64) -> String {
    // the epsilon absorbs binary representation error at exact ties
    let cents = (v * 100.0 + 0.5 + 1e-9).floor() as i64;
    let sign = if cents < 0 { "-" } else { "" };
    let c = cents.abs();
    format!("{sign}{}.{:02}", c / 100, c % 100)
}

const AVG_LABEL: &str = "avg / total";

pub fn format_report(r: &ClassReport) -> String {
    let width = r
        .rows
        .iter()
        .map(|row| row.class.to_string().len())
        .chain([AVG_LABEL.len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let line = |out: &mut String, label: &str, p: f64, rc: f64, f: f64, s: u64| {
        let _ = writeln!(
            out,
            "{label:>width$}  {:>9} {:>9} {:>9} {s:>9}",
            fixed2(p),
            fixed2(rc),
            fixed2(f)
        );
    };
    let _ = writeln!(
        out,
        "{:>width$}  {:>9} {:>9} {:>9} {:>9}",
        "", "precision", "recall", "f1-score", "support"
    );
    out.push('\n');
    for row in &r.rows {
        line(
            &mut out,
            &row.class.to_string(),
            row.precision,
            row.recall,
            row.f1,
            row.support,
        );
    }
    out.push('\n');
    line(
        &mut out,
        AVG_LABEL,
        r.avg_precision,
        r.avg_recall,
        r.avg_f1,
        r.total,
    );
    out
}
