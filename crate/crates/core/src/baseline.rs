//! Masks for the information-dropping methods GridMask is compared against.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mask::{check_dims, check_probability, Mask};

/// Single-square Cutout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CutoutParams {
    pub side: usize,
}

/// Hide-and-Seek: a grid of `cell x cell` patches, each hidden with
/// probability `p_hide`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HasParams {
    pub cell: usize,
    pub p_hide: f64,
}

/// Zero a `side x side` square centred on `(center_row, center_col)`, clipped
/// to the mask. For even sides the centre is the lower-right of the four
/// middle cells. Returns the number of cells newly dropped.
pub fn drop_centered_square(
    mask: &mut Mask,
    center_row: usize,
    center_col: usize,
    side: usize,
) -> usize {
    let half = (side / 2) as i64;
    mask.drop_rect(
        center_row as i64 - half,
        center_col as i64 - half,
        side as i64,
        side as i64,
    )
}

/// One square with a uniformly drawn centre anywhere on the image.
pub fn cutout_mask<R: Rng + ?Sized>(
    rng: &mut R,
    height: usize,
    width: usize,
    params: CutoutParams,
) -> Result<Mask> {
    let mut mask = Mask::ones(height, width)?;
    let cy = rng.gen_range(0..height);
    let cx = rng.gen_range(0..width);
    drop_centered_square(&mut mask, cy, cx, params.side);
    Ok(mask)
}

/// Iteration cap for [`multi_cutout_mask`]: `10 * ceil(H*W / max(1, side_min^2))`.
pub fn multi_cutout_cap(height: usize, width: usize, side_min: usize) -> usize {
    10 * (height * width).div_ceil((side_min * side_min).max(1))
}

/// Drop random squares (edge uniform in `[side_min, side_max]`, centre uniform)
/// until the keep ratio is at or below `target_keep`.
pub fn multi_cutout_mask<R: Rng + ?Sized>(
    rng: &mut R,
    height: usize,
    width: usize,
    side_min: usize,
    side_max: usize,
    target_keep: f64,
) -> Result<Mask> {
    if !(target_keep > 0.0 && target_keep <= 1.0) {
        return Err(Error::Config(format!(
            "target keep ratio {target_keep} is outside (0, 1]"
        )));
    }
    if side_min > side_max {
        return Err(Error::Config(format!(
            "side_min {side_min} exceeds side_max {side_max}"
        )));
    }
    let mut mask = Mask::ones(height, width)?;
    let total = (height * width) as f64;
    let mut kept = height * width;
    let cap = multi_cutout_cap(height, width, side_min);
    let mut iterations = 0;
    while kept as f64 / total > target_keep {
        if iterations == cap {
            return Err(Error::IterationCap {
                cap,
                target: target_keep,
            });
        }
        iterations += 1;
        let side = rng.gen_range(side_min..=side_max);
        let cy = rng.gen_range(0..height);
        let cx = rng.gen_range(0..width);
        kept -= drop_centered_square(&mut mask, cy, cx, side);
    }
    Ok(mask)
}

/// Hide-and-Seek mask. Border patches may be smaller than `cell`; every patch
/// is decided independently in row-major order.
pub fn has_mask<R: Rng + ?Sized>(
    rng: &mut R,
    height: usize,
    width: usize,
    params: HasParams,
) -> Result<Mask> {
    if params.cell == 0 {
        return Err(Error::Config("HaS cell size must be at least 1".into()));
    }
    check_probability("p_hide", params.p_hide)?;
    let mut mask = Mask::ones(height, width)?;
    let cell = params.cell as i64;
    for top in (0..height as i64).step_by(params.cell) {
        for left in (0..width as i64).step_by(params.cell) {
            if rng.gen::<f64>() < params.p_hide {
                mask.drop_rect(top, left, cell, cell);
            }
        }
    }
    Ok(mask)
}

/// Placement attempts before [`random_erase_mask`] falls back to clipping.
pub const ERASE_RETRIES: usize = 10;

/// Random Erasing: one rectangle whose area fraction and aspect ratio
/// (height / width) are drawn uniformly from the given closed ranges.
///
/// Up to [`ERASE_RETRIES`] shapes are drawn looking for one that fits inside
/// the image; if none does, the last shape is clamped to the image size.
pub fn random_erase_mask<R: Rng + ?Sized>(
    rng: &mut R,
    height: usize,
    width: usize,
    area_frac_range: (f64, f64),
    aspect_range: (f64, f64),
) -> Result<Mask> {
    let (a0, a1) = area_frac_range;
    let (s0, s1) = aspect_range;
    if !(a0 > 0.0 && a0 <= a1 && a1 < 1.0) {
        return Err(Error::Config(format!(
            "area fraction range [{a0}, {a1}] must be ordered and inside (0, 1)"
        )));
    }
    if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) {
        return Err(Error::Config(format!(
            "aspect range [{s0}, {s1}] must be ordered and positive"
        )));
    }
    check_dims(height, width)?;
    let area = (height * width) as f64;
    let mut shape = (0, 0);
    for _ in 0..ERASE_RETRIES {
        let frac = uniform_closed(rng, a0, a1);
        let aspect = uniform_closed(rng, s0, s1);
        let h = (frac * area * aspect).sqrt().round() as usize;
        let w = (frac * area / aspect).sqrt().round() as usize;
        shape = (h, w);
        if h <= height && w <= width {
            break;
        }
    }
    let h = shape.0.min(height);
    let w = shape.1.min(width);
    let top = rng.gen_range(0..=height - h);
    let left = rng.gen_range(0..=width - w);
    let mut mask = Mask::ones(height, width)?;
    mask.drop_rect(top as i64, left as i64, h as i64, w as i64);
    Ok(mask)
}

fn uniform_closed<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}
