use std::path::Path;

use rayon::prelude::*;
use tubegen::io::save_mask;
use tubegen::maskgen::generate_fake_mask;
use tubegen::RngStream;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{SampleRecord, TubeLine};
use crate::output::{atomic, create_dir, write_jsonl};

pub const MANIFEST: &str = "manifest.jsonl";
pub const TUBES: &str = "tubes.jsonl";

pub fn mask_name(index: usize) -> String {
    format!("mask_{index:05}.png")
}

/// Writes `count` masks; sample `i` draws from stream `i` of `seed`.
pub fn run(
    cfg: &RunConfig,
    seed: u64,
    count: usize,
    out: &Path,
) -> Result<Vec<SampleRecord>, CliError> {
    let priors = cfg.priors()?;
    let (h, w) = (cfg.image.height, cfg.image.width);
    create_dir(out)?;
    let results: Vec<Result<SampleRecord, CliError>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            let fake = generate_fake_mask(&priors, h, w, &mut rng)?;
            let name = mask_name(i);
            atomic(&out.join(&name), |tmp| Ok(save_mask(&fake.mask, tmp)?))?;
            Ok(SampleRecord {
                index: i,
                image: None,
                mask: name,
                method: None,
                seed,
                stream_id: i as u64,
                tubes: fake.tubes,
                response: None,
                trace: None,
                status: None,
            })
        })
        .collect();

    let mut records = Vec::with_capacity(count);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(format!("sample {i}: {e}")),
        }
    }
    let tubes: Vec<TubeLine> = records
        .iter()
        .flat_map(|r| {
            r.tubes.iter().map(|t| TubeLine {
                mask: &r.mask,
                tube: t,
            })
        })
        .collect();
    write_jsonl(&out.join(MANIFEST), &records)?;
    write_jsonl(&out.join(TUBES), &tubes)?;
    if !failures.is_empty() {
        for f in &failures {
            log::error!("{f}");
        }
        return Err(CliError::Failed(format!(
            "{} of {count} masks failed; partial manifest with {} records written",
            failures.len(),
            records.len()
        )));
    }
    Ok(records)
}
