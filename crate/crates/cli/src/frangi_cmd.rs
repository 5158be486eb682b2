use std::path::Path;

use tubegen::frangi::multiscale_vesselness;
use tubegen::io::{load_image, load_mask, save_grid, BitDepth};
use tubegen::BinaryMask;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::atomic;

/// Writes the 16-bit vesselness map of `image`. With a mask, returns the
/// mean response under it.
pub fn run(
    cfg: &RunConfig,
    image: &Path,
    mask: Option<&Path>,
    out: &Path,
) -> Result<Option<f64>, CliError> {
    let img = load_image(image)?;
    let mask: Option<BinaryMask> = mask.map(load_mask).transpose()?;
    if let Some(m) = &mask {
        if m.shape() != img.shape() {
            return Err(CliError::Failed(format!(
                "image is {:?} but mask is {:?}",
                img.shape(),
                m.shape()
            )));
        }
        if m.is_empty() {
            return Err(CliError::Failed("mask is empty".into()));
        }
    }
    let map = multiscale_vesselness(&img, &cfg.frangi)?.combined;
    atomic(out, |tmp| Ok(save_grid(&map, tmp, BitDepth::Sixteen)?))?;
    Ok(mask.map(|m| {
        let n = m.count() as f64;
        map.data()
            .iter()
            .zip(m.data())
            .filter(|(_, &s)| s)
            .map(|(v, _)| v)
            .sum::<f64>()
            / n
    }))
}
