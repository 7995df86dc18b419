//! Image files, mask previews and simulation CSVs.
//!
//! Images are read from PNG or binary PNM (PGM/PPM) and always come back as
//! 8-bit tensors with 1 or 3 channels; alpha channels are discarded. Images
//! are written losslessly, the format chosen by extension. Real-valued
//! tensors are quantized with `u8 = round(255 * clamp(v, 0, 1))`, whose
//! inverse on the grid `k / 255` is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageError, ImageFormat};

use crate::augment::{ImageTensor, Samples};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::sim::FailureStats;

/// Gray level used for kept cells in mask previews.
pub const PREVIEW_GRAY: u8 = 128;

pub const CSV_HEADER: &str = "method,x,p_fail,p_removed,p_reserved,trials,seed";

/// True for the extensions [`load_image`] and [`save_image`] handle.
pub fn is_image_path(path: &Path) -> bool {
    matches!(
        extension(path).as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

pub fn load_image(path: &Path) -> Result<ImageTensor> {
    if !path.is_file() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    let format = image::guess_format(&bytes).map_err(|_| {
        Error::UnsupportedFormat(format!("{}: unrecognized signature", path.display()))
    })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {format:?} is not PNG or PNM",
            path.display()
        )));
    }
    let decoded = image::load_from_memory_with_format(&bytes, format).map_err(|e| match e {
        ImageError::Unsupported(u) => Error::UnsupportedFormat(format!("{}: {u}", path.display())),
        other => Error::Corrupt {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(buf) => ImageTensor::from_u8(h, w, 1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => ImageTensor::from_u8(h, w, 3, buf.into_raw()),
        DynamicImage::ImageLumaA8(_) => {
            ImageTensor::from_u8(h, w, 1, decoded.to_luma8().into_raw())
        }
        DynamicImage::ImageRgba8(_) => ImageTensor::from_u8(h, w, 3, decoded.to_rgb8().into_raw()),
        other => Err(Error::UnsupportedFormat(format!(
            "{}: only 8-bit images are supported, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// 8-bit samples of `image`, quantizing real-valued tensors.
pub fn to_u8_samples(image: &ImageTensor) -> Vec<u8> {
    match image.samples() {
        Samples::U8(v) => v.clone(),
        Samples::F32(v) => v.iter().map(|&x| quantize(x)).collect(),
    }
}

/// `round(255 * clamp(v, 0, 1))`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_image(image: &ImageTensor, path: &Path) -> Result<()> {
    let ext = extension(path).unwrap_or_default();
    let color = match image.channels() {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        c => {
            return Err(Error::UnsupportedFormat(format!(
                "cannot encode {c}-channel images"
            )))
        }
    };
    let pnm_subtype = |subtype: PnmSubtype| -> Result<PnmSubtype> {
        let wanted = match subtype {
            PnmSubtype::Graymap(_) => 1,
            _ => 3,
        };
        if image.channels() != wanted {
            return Err(Error::UnsupportedFormat(format!(
                ".{ext} needs {wanted} channel(s), image has {}",
                image.channels()
            )));
        }
        Ok(subtype)
    };
    let gray = PnmSubtype::Graymap(SampleEncoding::Binary);
    let rgb = PnmSubtype::Pixmap(SampleEncoding::Binary);
    let subtype = match ext.as_str() {
        "png" => None,
        "pgm" => Some(pnm_subtype(gray)?),
        "ppm" => Some(pnm_subtype(rgb)?),
        "pnm" if image.channels() == 1 => Some(gray),
        "pnm" => Some(rgb),
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unknown extension {ext:?}",
                path.display()
            )))
        }
    };

    let data = to_u8_samples(image);
    let (w, h) = (image.width() as u32, image.height() as u32);
    let mut out = BufWriter::new(File::create(path)?);
    let encoded = match subtype {
        None => PngEncoder::new(&mut out).write_image(&data, w, h, color),
        Some(s) => PnmEncoder::new(&mut out)
            .with_subtype(s)
            .write_image(&data, w, h, color),
    };
    encoded.map_err(|e| match e {
        ImageError::IoError(io) => Error::Io(io),
        other => Error::UnsupportedFormat(other.to_string()),
    })?;
    out.flush()?;
    Ok(())
}

/// Single-channel preview: kept cells gray, dropped cells black.
pub fn render_mask_preview(mask: &Mask) -> ImageTensor {
    let data = mask.cells().iter().map(|&v| v * PREVIEW_GRAY).collect();
    ImageTensor::from_u8(mask.height(), mask.width(), 1, data)
        .expect("mask dimensions are positive")
}

/// Read a mask back from an image: a pixel is kept when any channel is nonzero.
pub fn mask_from_image(image: &ImageTensor) -> Mask {
    let c = image.channels();
    let cells = to_u8_samples(image)
        .chunks_exact(c)
        .map(|px| u8::from(px.iter().any(|&v| v != 0)))
        .collect();
    Mask::from_cells(image.height(), image.width(), cells).expect("cells are binary")
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsRow {
    pub method: String,
    pub x: usize,
    pub p_fail: f64,
    pub p_removed: f64,
    pub p_reserved: f64,
    pub trials: usize,
    pub seed: u64,
}

impl StatsRow {
    pub fn new(stats: &FailureStats, seed: u64) -> Self {
        StatsRow {
            method: stats.method.clone(),
            x: stats.x,
            p_fail: stats.p_fail,
            p_removed: stats.p_removed,
            p_reserved: stats.p_reserved,
            trials: stats.trials,
            seed,
        }
    }
}

/// CSV text for `rows`: header line, one line per row, ratios with six
/// decimals, `\n` line endings.
pub fn format_stats_csv(rows: &[StatsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{},{}\n",
            r.method, r.x, r.p_fail, r.p_removed, r.p_reserved, r.trials, r.seed
        ));
    }
    out
}

pub fn write_stats_csv(rows: &[StatsRow], path: &Path) -> Result<()> {
    std::fs::write(path, format_stats_csv(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{render_grid_mask, GridSpec};

    #[test]
    fn preview_levels() {
        let ones = render_mask_preview(&Mask::ones(3, 4).unwrap());
        assert_eq!(ones.samples(), &Samples::U8(vec![128; 12]));
        let zeros = render_mask_preview(&Mask::zeros(3, 4).unwrap());
        assert_eq!(zeros.samples(), &Samples::U8(vec![0; 12]));
        let m = render_grid_mask(&GridSpec::aligned(0.5, 4).unwrap(), 4, 4).unwrap();
        let Samples::U8(px) = render_mask_preview(&m).samples().clone() else {
            unreachable!()
        };
        assert_eq!(px.iter().filter(|&&v| v == 128).count(), 12);
        assert_eq!(px.iter().filter(|&&v| v == 0).count(), 4);
        assert_eq!(mask_from_image(&render_mask_preview(&m)), m);
    }

    #[test]
    fn quantize_map() {
        assert_eq!(quantize(-0.5), 0);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(7.0), 255);
        for k in 0..=255u8 {
            assert_eq!(quantize(k as f32 / 255.0), k);
        }
    }

    #[test]
    fn csv_format() {
        assert_eq!(format_stats_csv(&[]), format!("{CSV_HEADER}\n"));
        let row = StatsRow {
            method: "gridmask".into(),
            x: 40,
            p_fail: 0.1234567,
            p_removed: 0.0,
            p_reserved: 0.1234567,
            trials: 10,
            seed: u64::MAX,
        };
        assert_eq!(
            format_stats_csv(&[row]).lines().nth(1).unwrap(),
            "gridmask,40,0.123457,0.000000,0.123457,10,18446744073709551615"
        );
    }
}
