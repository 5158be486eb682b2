use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tubegen::frangi::masked_mean_response;
use tubegen::io::{load_image, load_mask, save_image};
use tubegen::maskgen::TubeRecord;
use tubegen::optimize::{inpaint, InpaintConfig, Status};
use tubegen::render::{render_hand_drawn, render_smoothed_mask, HandDrawnParams};
use tubegen::RngStream;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::gen_masks::MANIFEST;
use crate::manifest::{Method, SampleRecord};
use crate::output::{
    atomic, create_dir, distinct_dirs, images_by_stem, pair_by_stem, write_bytes, write_jsonl,
};

/// Where clean images come from: one per mask (matched by stem), or a
/// single image shared by every mask.
pub enum Backgrounds<'a> {
    Dir(&'a Path),
    Shared(&'a Path),
}

struct Job {
    stem: String,
    cxr: PathBuf,
    mask: PathBuf,
}

/// Tube metadata from the mask directory's manifest, keyed by mask file name.
fn mask_metadata(mask_dir: &Path) -> HashMap<String, Vec<TubeRecord>> {
    let path = mask_dir.join(MANIFEST);
    let Ok(text) = fs::read_to_string(&path) else {
        return HashMap::new();
    };
    let mut out = HashMap::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        match serde_json::from_str::<SampleRecord>(line) {
            Ok(rec) => {
                out.insert(rec.mask, rec.tubes);
            }
            Err(e) => log::warn!("{}:{}: {e}; tube metadata ignored", path.display(), n + 1),
        }
    }
    out
}

fn jobs(backgrounds: &Backgrounds, mask_dir: &Path) -> Result<Vec<Job>, CliError> {
    Ok(match backgrounds {
        Backgrounds::Dir(dir) => pair_by_stem(mask_dir, dir)?
            .into_iter()
            .map(|(stem, mask, cxr)| Job { stem, cxr, mask })
            .collect(),
        Backgrounds::Shared(file) => images_by_stem(mask_dir)?
            .into_iter()
            .map(|(stem, mask)| Job {
                stem,
                cxr: file.to_path_buf(),
                mask,
            })
            .collect(),
    })
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[allow(clippy::too_many_arguments)]
fn render_one(
    cfg: &RunConfig,
    inpaint_cfg: Option<&InpaintConfig>,
    method: Method,
    seed: u64,
    index: usize,
    job: &Job,
    tubes: Vec<TubeRecord>,
    out: &Path,
) -> Result<SampleRecord, CliError> {
    let cxr = load_image(&job.cxr)?;
    let mask = load_mask(&job.mask)?;
    if cxr.shape() != mask.shape() {
        return Err(CliError::Failed(format!(
            "{} is {:?} but {} is {:?}",
            job.cxr.display(),
            cxr.shape(),
            job.mask.display(),
            mask.shape()
        )));
    }
    let rng = RngStream::new(seed, index as u64);
    let mut trace_name = None;
    let mut status = None;
    let image = match method {
        Method::Smoothed => render_smoothed_mask(&cxr, &mask, &cfg.render.smoothed)?,
        Method::HandDrawn => {
            let p = HandDrawnParams {
                style: cfg.render.hand_drawn,
                rng,
            };
            render_hand_drawn(&cxr, &mask, &p)?
        }
        Method::Inpaint => {
            let mut ic = inpaint_cfg
                .expect("inpaint settings resolved up front")
                .clone();
            ic.rng = rng;
            let (img, trace) = inpaint(&cxr, &mask, &ic)?;
            let mut csv = Vec::new();
            trace
                .write_csv(&mut csv)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            let name = format!("{}_trace.csv", job.stem);
            write_bytes(&out.join(&name), &csv)?;
            trace_name = Some(name);
            status = Some(
                match trace.status {
                    Status::Converged => "converged",
                    Status::MaxSteps => "max-steps",
                }
                .to_string(),
            );
            img
        }
    };
    let response = masked_mean_response(&image, &mask, &cfg.frangi)?;
    let name = format!("{}.png", job.stem);
    atomic(&out.join(&name), |tmp| Ok(save_image(&image, tmp)?))?;
    Ok(SampleRecord {
        index,
        image: Some(name),
        mask: file_name(&job.mask),
        method: Some(method),
        seed,
        stream_id: index as u64,
        tubes,
        response: Some(response),
        trace: trace_name,
        status,
    })
}

/// Renders a tube into each (clean image, mask) pair. Failing pairs are
/// logged and skipped; the run fails only when no pair succeeds.
pub fn run(
    cfg: &RunConfig,
    method: Method,
    seed: u64,
    backgrounds: Backgrounds,
    mask_dir: &Path,
    out: &Path,
) -> Result<Vec<SampleRecord>, CliError> {
    let inpaint_cfg = match method {
        Method::Inpaint => Some(cfg.inpaint_config(seed)?),
        _ => None,
    };
    let mut dirs = vec![("mask dir", mask_dir), ("output dir", out)];
    if let Backgrounds::Dir(d) = &backgrounds {
        dirs.push(("image dir", d));
    }
    create_dir(out)?;
    distinct_dirs(&dirs)?;

    let jobs = jobs(&backgrounds, mask_dir)?;
    if jobs.is_empty() {
        return Err(CliError::Failed(format!(
            "no image/mask pairs found for {}",
            mask_dir.display()
        )));
    }
    let meta = mask_metadata(mask_dir);
    let results: Vec<Result<SampleRecord, CliError>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            let tubes = meta.get(&file_name(&job.mask)).cloned().unwrap_or_default();
            render_one(cfg, inpaint_cfg.as_ref(), method, seed, i, job, tubes, out)
        })
        .collect();

    let mut records = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => log::warn!("{}: {e}; skipped", job.stem),
        }
    }
    write_jsonl(&out.join(MANIFEST), &records)?;
    if records.is_empty() {
        return Err(CliError::Failed("every pair failed".into()));
    }
    log::info!("rendered {} of {} pairs", records.len(), jobs.len());
    Ok(records)
}
