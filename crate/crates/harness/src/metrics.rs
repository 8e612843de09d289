//! Per-attribute accuracy reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use tenscorr_core::Mat;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub names: Vec<String>,
    /// Percentages in `[0, 100]`.
    pub accuracies: Vec<f64>,
    pub mean: f64,
}

/// A named set of 0-based attribute indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub members: Vec<usize>,
}

impl MetricsReport {
    pub fn new(names: Vec<String>, accuracies: Vec<f64>) -> Result<Self> {
        if names.len() != accuracies.len() || names.is_empty() {
            return Err(Error::Invalid(format!(
                "{} attribute names for {} accuracies",
                names.len(),
                accuracies.len()
            )));
        }
        if let Some(a) = accuracies.iter().find(|a| !(0.0..=100.0).contains(*a)) {
            return Err(Error::Invalid(format!("accuracy {a} outside [0, 100]")));
        }
        let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        Ok(MetricsReport {
            names,
            accuracies,
            mean,
        })
    }

    /// Accuracy of 0/1 `predictions` against `labels`, per column.
    pub fn from_predictions(names: Vec<String>, predictions: &Mat, labels: &Mat) -> Result<Self> {
        if predictions.shape() != labels.shape() || labels.rows() == 0 {
            return Err(Error::Invalid(format!(
                "predictions {:?} and labels {:?} must agree and be non-empty",
                predictions.shape(),
                labels.shape()
            )));
        }
        let n = labels.rows() as f64;
        let acc = (0..labels.cols())
            .map(|j| {
                let hits = (0..labels.rows())
                    .filter(|&i| predictions[(i, j)] == labels[(i, j)])
                    .count();
                100.0 * hits as f64 / n
            })
            .collect();
        MetricsReport::new(names, acc)
    }

    /// Accuracy of always predicting each attribute's more frequent value
    /// in `labels`.
    pub fn majority_baseline(names: Vec<String>, labels: &Mat) -> Result<Self> {
        if labels.rows() == 0 {
            return Err(Error::Invalid("no labels for a majority baseline".into()));
        }
        let n = labels.rows() as f64;
        let acc = (0..labels.cols())
            .map(|j| {
                let pos = (0..labels.rows())
                    .filter(|&i| labels[(i, j)] == 1.0)
                    .count() as f64;
                100.0 * pos.max(n - pos) / n
            })
            .collect();
        MetricsReport::new(names, acc)
    }

    /// Aligned plain-text table, one attribute per line plus the mean.
    pub fn to_text(&self, title: &str) -> String {
        let w = self.names.iter().map(|s| s.len()).max().unwrap_or(0).max(4);
        let mut s = format!("{title}\n");
        for (n, a) in self.names.iter().zip(&self.accuracies) {
            let _ = writeln!(s, "  {n:<w$}  {a:6.2}");
        }
        let _ = writeln!(s, "  {:<w$}  {:6.2}", "mean", self.mean);
        s
    }
}

/// Mean accuracy of each category's members.
pub fn category_averages(report: &MetricsReport, categories: &[Category]) -> Result<Vec<f64>> {
    categories
        .iter()
        .map(|c| {
            if c.members.is_empty() {
                return Err(Error::Invalid(format!("category `{}` is empty", c.name)));
            }
            let mut sum = 0.0;
            for &m in &c.members {
                sum += report.accuracies.get(m).ok_or_else(|| {
                    Error::Invalid(format!(
                        "category `{}` names attribute {m}, but the report has {}",
                        c.name,
                        report.accuracies.len()
                    ))
                })?;
            }
            Ok(sum / c.members.len() as f64)
        })
        .collect()
}

/// `attribute,variant,accuracy` rows for every report, plus one `mean` row
/// per variant.
pub fn to_csv(reports: &[(&str, &MetricsReport)]) -> String {
    let mut s = String::from("attribute,variant,accuracy\n");
    for (variant, r) in reports {
        for (n, a) in r.names.iter().zip(&r.accuracies) {
            let _ = writeln!(s, "{n},{variant},{a:.4}");
        }
        let _ = writeln!(s, "mean,{variant},{:.4}", r.mean);
    }
    s
}
