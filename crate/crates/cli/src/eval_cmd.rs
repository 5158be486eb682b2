use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use tubegen::eval::{MetricsReport, MetricsSummary};
use tubegen::io::{load_image, load_mask};

use crate::error::CliError;
use crate::output::{create_dir, distinct_dirs, pair_by_stem, write_bytes};

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TABLE: &str = "metrics.txt";

#[derive(Serialize)]
struct ImageMetrics<'a> {
    image: &'a str,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct MetricsFile<'a> {
    threshold: f64,
    per_image: Vec<ImageMetrics<'a>>,
    summary: &'a MetricsSummary,
}

/// Scores every prediction against the ground truth with the same stem and
/// writes `metrics.json` and `metrics.txt`. Returns the table.
pub fn run(pred_dir: &Path, gt_dir: &Path, threshold: f64, out: &Path) -> Result<String, CliError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Config(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    create_dir(out)?;
    distinct_dirs(&[("prediction dir", pred_dir), ("ground-truth dir", gt_dir)])?;
    let pairs = pair_by_stem(pred_dir, gt_dir)?;
    let results: Vec<Result<MetricsReport, CliError>> = pairs
        .par_iter()
        .map(|(_, pred, gt)| {
            Ok(MetricsReport::compute(
                &load_image(pred)?,
                &load_mask(gt)?,
                threshold,
            )?)
        })
        .collect();
    let mut rows = Vec::new();
    for ((stem, _, _), r) in pairs.iter().zip(results) {
        match r {
            Ok(m) => rows.push((stem.clone(), m)),
            Err(e) => log::warn!("{stem}: {e}; skipped"),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Failed(
            "no prediction/ground-truth pair could be scored".into(),
        ));
    }
    let reports: Vec<MetricsReport> = rows.iter().map(|(_, m)| *m).collect();
    let summary = MetricsSummary::from_reports(&reports);
    let file = MetricsFile {
        threshold,
        per_image: rows
            .iter()
            .map(|(name, m)| ImageMetrics {
                image: name,
                metrics: m,
            })
            .collect(),
        summary: &summary,
    };
    let mut json = serde_json::to_vec_pretty(&file).map_err(|e| CliError::Failed(e.to_string()))?;
    json.push(b'\n');
    write_bytes(&out.join(METRICS_JSON), &json)?;
    let table = summary.table(&rows);
    write_bytes(&out.join(METRICS_TABLE), table.as_bytes())?;
    Ok(table)
}
