use std::fmt::Write;

use serde::{Serialize, Serializer};

use super::metrics::{cl_dice, dice, hausdorff, precision_recall, soft_dice};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ProbMap};

fn or_undefined<S: Serializer, T: Serialize>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => x.serialize(s),
        None => s.serialize_str("undefined"),
    }
}

/// Metrics of one prediction against its ground truth. Hausdorff distances
/// are `None` when either mask is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricsReport {
    pub dice: f64,
    pub soft_dice: f64,
    pub cl_dice: f64,
    pub precision: f64,
    pub recall: f64,
    #[serde(serialize_with = "or_undefined")]
    pub hausdorff: Option<f64>,
    #[serde(serialize_with = "or_undefined")]
    pub hausdorff95: Option<f64>,
}

impl MetricsReport {
    /// Scores a probability map, binarized at `value > threshold`.
    pub fn compute(pred: &ProbMap, gt: &BinaryMask, threshold: f64) -> Result<Self> {
        let binary = BinaryMask::from_threshold(pred, threshold);
        let (precision, recall) = precision_recall(&binary, gt)?;
        let defined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            dice: dice(&binary, gt)?,
            soft_dice: soft_dice(pred, gt)?,
            cl_dice: cl_dice(&binary, gt)?,
            precision,
            recall,
            hausdorff: defined(hausdorff(&binary, gt, 100.0))?,
            hausdorff95: defined(hausdorff(&binary, gt, 95.0))?,
        })
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// Aggregate over images. Hausdorff statistics cover the images where the
/// distance is defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricsSummary {
    pub count: usize,
    #[serde(serialize_with = "or_undefined")]
    pub dice: Option<Stat>,
    #[serde(serialize_with = "or_undefined")]
    pub soft_dice: Option<Stat>,
    #[serde(serialize_with = "or_undefined")]
    pub cl_dice: Option<Stat>,
    #[serde(serialize_with = "or_undefined")]
    pub precision: Option<Stat>,
    #[serde(serialize_with = "or_undefined")]
    pub recall: Option<Stat>,
    #[serde(serialize_with = "or_undefined")]
    pub hausdorff: Option<Stat>,
    #[serde(serialize_with = "or_undefined")]
    pub hausdorff95: Option<Stat>,
    pub hausdorff_undefined: usize,
}

impl MetricsSummary {
    pub fn from_reports(reports: &[MetricsReport]) -> Self {
        let col =
            |f: fn(&MetricsReport) -> f64| Stat::of(&reports.iter().map(f).collect::<Vec<_>>());
        let opt = |f: fn(&MetricsReport) -> Option<f64>| {
            Stat::of(&reports.iter().filter_map(f).collect::<Vec<_>>())
        };
        Self {
            count: reports.len(),
            dice: col(|r| r.dice),
            soft_dice: col(|r| r.soft_dice),
            cl_dice: col(|r| r.cl_dice),
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
            hausdorff: opt(|r| r.hausdorff),
            hausdorff95: opt(|r| r.hausdorff95),
            hausdorff_undefined: reports.iter().filter(|r| r.hausdorff.is_none()).count(),
        }
    }

    /// Aligned plain-text table: one row per image, then the aggregate.
    pub fn table(&self, rows: &[(String, MetricsReport)]) -> String {
        let header = [
            "image",
            "dice",
            "soft-dice",
            "cl-dice",
            "precision",
            "recall",
            "hausdorff",
            "hausdorff95",
        ];
        let num = |v: f64| format!("{v:.4}");
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), num);
        let stat = |v: Option<Stat>| v.map_or_else(|| "undefined".to_string(), |s| s.to_string());
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for (name, r) in rows {
            cells.push(vec![
                name.clone(),
                num(r.dice),
                num(r.soft_dice),
                num(r.cl_dice),
                num(r.precision),
                num(r.recall),
                opt(r.hausdorff),
                opt(r.hausdorff95),
            ]);
        }
        cells.push(vec![
            format!("mean ± std (n={})", self.count),
            stat(self.dice),
            stat(self.soft_dice),
            stat(self.cl_dice),
            stat(self.precision),
            stat(self.recall),
            stat(self.hausdorff),
            stat(self.hausdorff95),
        ]);
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                cells
                    .iter()
                    .map(|row| row[i].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, &w))| {
                    let pad = w - cell.chars().count();
                    if i == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
