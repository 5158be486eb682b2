//! Grayscale image and mask I/O: binary PGM (P5) and 8/16-bit PNG.
//!
//! Intensities are normalized to `[0, 1]` on load. Masks are written with
//! values {0, 255} and read back by thresholding at half the maximum value.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid, Image};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FileKind {
    Pgm,
    Png,
}

fn kind_from_extension(path: &Path) -> Result<FileKind> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("pgm") => Ok(FileKind::Pgm),
        Some("png") => Ok(FileKind::Png),
        _ => Err(Error::format(
            path,
            "unsupported extension (expected .pgm or .png)",
        )),
    }
}

/// Raw samples plus the maximum representable value.
struct Samples {
    height: usize,
    width: usize,
    max_value: f64,
    values: Vec<u16>,
}

fn read_samples(path: &Path) -> Result<Samples> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.is_empty() {
        return Err(Error::format(path, "file is empty"));
    }
    if bytes.starts_with(b"P5") {
        return parse_pgm(path, &bytes);
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(path, &bytes);
    }
    Err(Error::format(path, "not a binary PGM (P5) or PNG file"))
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Samples> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and comments between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed PGM header"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(path, "malformed PGM header"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::format(path, "PGM has zero extent"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            path,
            format!("PGM maxval {maxval} out of range"),
        ));
    }
    let n = width * height;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let raster = &bytes[pos..];
    if raster.len() < n * bytes_per {
        return Err(Error::format(path, "PGM raster is truncated"));
    }
    let values = if bytes_per == 1 {
        raster[..n].iter().map(|&b| u16::from(b)).collect()
    } else {
        raster[..2 * n]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect()
    };
    Ok(Samples {
        height,
        width,
        max_value: maxval as f64,
        values,
    })
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Samples> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("PNG decode failed: {e}")))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(Samples {
            height,
            width,
            max_value: 255.0,
            values: buf.into_raw().into_iter().map(u16::from).collect(),
        }),
        DynamicImage::ImageLuma16(buf) => Ok(Samples {
            height,
            width,
            max_value: 65535.0,
            values: buf.into_raw(),
        }),
        other => Err(Error::format(
            path,
            format!("expected a grayscale image, found {:?}", other.color()),
        )),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let s = read_samples(path.as_ref())?;
    let data = s
        .values
        .iter()
        .map(|&v| (f64::from(v) / s.max_value).min(1.0))
        .collect();
    Image::new(s.height, s.width, data)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let s = read_samples(path.as_ref())?;
    let half = s.max_value / 2.0;
    let data = s.values.iter().map(|&v| f64::from(v) > half).collect();
    BinaryMask::new(s.height, s.width, data)
}

fn quantize(grid: &Grid, depth: BitDepth) -> Vec<u16> {
    let max = depth.max_value();
    grid.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16)
        .collect()
}

fn write_samples(
    path: &Path,
    height: usize,
    width: usize,
    values: &[u16],
    depth: BitDepth,
) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    match kind_from_extension(path)? {
        FileKind::Pgm => {
            let file = fs::File::create(path).map_err(io_err)?;
            let mut out = BufWriter::new(file);
            write!(out, "P5\n{width} {height}\n{}\n", depth.max_value() as u32).map_err(io_err)?;
            match depth {
                BitDepth::Eight => {
                    let raw: Vec<u8> = values.iter().map(|&v| v as u8).collect();
                    out.write_all(&raw).map_err(io_err)?;
                }
                BitDepth::Sixteen => {
                    let raw: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
                    out.write_all(&raw).map_err(io_err)?;
                }
            }
            out.flush().map_err(io_err)
        }
        FileKind::Png => {
            let (w, h) = (width as u32, height as u32);
            let res = match depth {
                BitDepth::Eight => {
                    let raw: Vec<u8> = values.iter().map(|&v| v as u8).collect();
                    ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
                        .expect("buffer sized to image")
                        .save_with_format(path, ImageFormat::Png)
                }
                BitDepth::Sixteen => ImageBuffer::<Luma<u16>, _>::from_raw(w, h, values.to_vec())
                    .expect("buffer sized to image")
                    .save_with_format(path, ImageFormat::Png),
            };
            res.map_err(|e| match e {
                image::ImageError::IoError(source) => io_err(source),
                other => Error::format(path, other.to_string()),
            })
        }
    }
}

/// Writes a grid of `[0, 1]` values (clamped) at the requested depth. The
/// container is chosen by extension (`.pgm` or `.png`).
pub fn save_grid(grid: &Grid, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    write_samples(
        path,
        grid.height(),
        grid.width(),
        &quantize(grid, depth),
        depth,
    )
}

/// Writes a 16-bit image.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    save_grid(img, path, BitDepth::Sixteen)
}

pub fn save_image_with_depth(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    save_grid(img, path, depth)
}

/// Writes an 8-bit mask with values {0, 255}.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let values: Vec<u16> = mask
        .data()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    write_samples(
        path.as_ref(),
        mask.height(),
        mask.width(),
        &values,
        BitDepth::Eight,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        Image::from_grid(Grid::from_fn(h, w, |_, _| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn sixteen_bit_round_trip_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = random_image(13, 21);
        for name in ["a.png", "a.pgm"] {
            let p = dir.path().join(name);
            save_image(&img, &p).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.shape(), img.shape());
            assert!(back.max_abs_diff(&img) <= 1.0 / 65535.0, "{name}");
        }
    }

    #[test]
    fn eight_bit_round_trip_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = random_image(7, 5);
        for name in ["b.png", "b.pgm"] {
            let p = dir.path().join(name);
            save_image_with_depth(&img, &p, BitDepth::Eight).unwrap();
            assert!(load_image(&p).unwrap().max_abs_diff(&img) <= 1.0 / 255.0);
        }
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_fn(6, 9, |r, c| (r + c) % 3 == 0);
        for name in ["m.png", "m.pgm"] {
            let p = dir.path().join(name);
            save_mask(&m, &p).unwrap();
            assert_eq!(load_mask(&p).unwrap(), m);
        }
    }

    #[test]
    fn color_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        ImageBuffer::<image::Rgb<u8>, _>::from_raw(2, 2, vec![0u8; 12])
            .unwrap()
            .save(&p)
            .unwrap();
        match load_image(&p) {
            Err(Error::Format { message, .. }) => {
                assert!(message.contains("grayscale"), "{message}")
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_garbage_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.png");
        fs::write(&p, b"").unwrap();
        assert!(matches!(load_image(&p), Err(Error::Format { .. })));
        let q = dir.path().join("junk.pgm");
        fs::write(&q, b"P5\n4 4\n255\n\x01\x02").unwrap();
        assert!(matches!(load_image(&q), Err(Error::Format { .. })));
        let m = dir.path().join("missing.png");
        assert!(matches!(load_image(&m), Err(Error::Io { .. })));
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        fs::write(&p, b"P5\n# comment\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[0.0, 1.0]);
    }
}
