//! GridMask geometry.
//!
//! A grid mask is a lattice of `d x d` units. Inside each unit an L-shaped
//! band of width `l_keep = ceil(r * d)` is kept and the remaining
//! `l_drop x l_drop` square (with `l_drop = d - l_keep`) is dropped. The
//! lattice is shifted by `(delta_y, delta_x)` so every phase is reachable:
//!
//! ```text
//! keep(i, j) = ((i - delta_y) mod d) < l_keep  ||  ((j - delta_x) mod d) < l_keep
//! ```
//!
//! With boundary effects ignored the keep ratio is `1 - (1 - r)^2 = 2r - r^2`,
//! up to the quantization introduced by the ceiling.

use rand::Rng;

use crate::error::{Error, Result};

/// Products `r * d` within this distance above an integer are treated as that
/// integer before taking the ceiling, so `0.7 * 10` yields 7 and not 8.
const CEIL_SLACK: f64 = 1e-9;

/// A binary field; 1 keeps a pixel, 0 drops it. Row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    cells: Vec<u8>,
}

impl Mask {
    /// A mask with every cell set to `value` (0 or 1).
    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        check_dims(height, width)?;
        if value > 1 {
            return Err(Error::Contract(format!("mask value {value} is not binary")));
        }
        Ok(Mask {
            height,
            width,
            cells: vec![value; height * width],
        })
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 1)
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0)
    }

    /// Build a mask from row-major cells, rejecting non-binary values.
    pub fn from_cells(height: usize, width: usize, cells: Vec<u8>) -> Result<Self> {
        check_dims(height, width)?;
        if cells.len() != height * width {
            return Err(Error::Contract(format!(
                "{} cells given for a {height}x{width} mask",
                cells.len()
            )));
        }
        if let Some(v) = cells.iter().find(|&&v| v > 1) {
            return Err(Error::Contract(format!("mask value {v} is not binary")));
        }
        Ok(Mask {
            height,
            width,
            cells,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn is_kept(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == 1
    }

    pub fn count_kept(&self) -> usize {
        self.cells.iter().filter(|&&v| v == 1).count()
    }

    /// Number of kept cells inside the rectangle, clipped to the mask.
    pub fn count_kept_in(&self, top: usize, left: usize, height: usize, width: usize) -> usize {
        let bottom = (top + height).min(self.height);
        let right = (left + width).min(self.width);
        if left >= right {
            return 0;
        }
        (top.min(bottom)..bottom)
            .map(|i| {
                let row = &self.cells[i * self.width..(i + 1) * self.width];
                row[left..right].iter().filter(|&&v| v == 1).count()
            })
            .sum()
    }

    /// Zero the rectangle with top-left corner `(top, left)`, clipped to the
    /// mask. Coordinates may be negative or run past the border. Returns the
    /// number of cells that flipped from 1 to 0.
    pub fn drop_rect(&mut self, top: i64, left: i64, height: i64, width: i64) -> usize {
        let r0 = top.clamp(0, self.height as i64) as usize;
        let r1 = (top + height.max(0)).clamp(0, self.height as i64) as usize;
        let c0 = left.clamp(0, self.width as i64) as usize;
        let c1 = (left + width.max(0)).clamp(0, self.width as i64) as usize;
        let mut flipped = 0;
        for i in r0..r1 {
            for v in &mut self.cells[i * self.width + c0..i * self.width + c1] {
                flipped += *v as usize;
                *v = 0;
            }
        }
        flipped
    }

    /// The `height x width` window starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        if top + height > self.height || left + width > self.width {
            return Err(Error::Contract(format!(
                "crop {height}x{width}+{top}+{left} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut cells = Vec::with_capacity(height * width);
        for i in top..top + height {
            let start = i * self.width + left;
            cells.extend_from_slice(&self.cells[start..start + width]);
        }
        Ok(Mask {
            height,
            width,
            cells,
        })
    }
}

/// Fraction of kept cells.
pub fn keep_ratio(mask: &Mask) -> f64 {
    mask.count_kept() as f64 / (mask.height * mask.width) as f64
}

/// Swap kept and dropped cells.
pub fn reverse_mask(mask: &Mask) -> Mask {
    Mask {
        height: mask.height,
        width: mask.width,
        cells: mask.cells.iter().map(|&v| 1 - v).collect(),
    }
}

/// One concrete mask configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Width of the kept band relative to the unit period.
    pub r: f64,
    /// Unit period in pixels.
    pub d: u32,
    pub delta_x: u32,
    pub delta_y: u32,
    pub angle_deg: f64,
}

impl GridSpec {
    pub fn new(r: f64, d: u32, delta_x: u32, delta_y: u32, angle_deg: f64) -> Result<Self> {
        let spec = GridSpec {
            r,
            d,
            delta_x,
            delta_y,
            angle_deg,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Axis-aligned spec with zero offsets.
    pub fn aligned(r: f64, d: u32) -> Result<Self> {
        Self::new(r, d, 0, 0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::config(format!("r = {} is outside [0, 1]", self.r)));
        }
        if self.d == 0 {
            return Err(Error::config("d must be at least 1"));
        }
        if self.delta_x >= self.d || self.delta_y >= self.d {
            return Err(Error::config(format!(
                "offsets ({}, {}) must lie in [0, {}]",
                self.delta_x,
                self.delta_y,
                self.d - 1
            )));
        }
        if !(0.0..360.0).contains(&self.angle_deg) {
            return Err(Error::config(format!(
                "angle {} is outside [0, 360)",
                self.angle_deg
            )));
        }
        Ok(())
    }

    /// Width of the kept band, `ceil(r * d)`.
    pub fn l_keep(&self) -> u32 {
        let raw = (self.r * self.d as f64 - CEIL_SLACK).ceil();
        (raw.max(0.0) as u32).min(self.d)
    }

    /// Side of each dropped square, `d - l_keep`.
    pub fn l_drop(&self) -> u32 {
        self.d - self.l_keep()
    }

    fn lattice(&self) -> Lattice {
        Lattice {
            d: self.d as i64,
            keep: self.l_keep() as i64,
            dx: self.delta_x as i64,
            dy: self.delta_y as i64,
        }
    }
}

/// Sampling ranges for [`GridSpec`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConfig {
    pub r: f64,
    pub d_min: u32,
    pub d_max: u32,
    /// Draw a uniform rotation angle in `[0, 360)`.
    pub rotate: bool,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::config(format!("r = {} is outside [0, 1]", self.r)));
        }
        if self.d_min == 0 {
            return Err(Error::config("d_min must be at least 1"));
        }
        if self.d_min > self.d_max {
            return Err(Error::config(format!(
                "d_min {} exceeds d_max {}",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }
}

/// Draw a spec: `d` first, then `delta_x`, `delta_y`, then the angle (only
/// when rotation is enabled).
pub fn sample_grid_spec<R: Rng + ?Sized>(rng: &mut R, config: &GridConfig) -> Result<GridSpec> {
    config.validate()?;
    let d = rng.gen_range(config.d_min..=config.d_max);
    let delta_x = rng.gen_range(0..d);
    let delta_y = rng.gen_range(0..d);
    let angle_deg = if config.rotate {
        rng.gen_range(0.0..360.0)
    } else {
        0.0
    };
    Ok(GridSpec {
        r: config.r,
        d,
        delta_x,
        delta_y,
        angle_deg,
    })
}

/// Render the axis-aligned mask for `spec`.
pub fn render_grid_mask(spec: &GridSpec, height: usize, width: usize) -> Result<Mask> {
    spec.validate()?;
    require_axis_aligned(spec)?;
    check_dims(height, width)?;
    Ok(render_lattice(&spec.lattice(), height, width, None))
}

/// Render `spec` rotated by its angle.
///
/// An axis-aligned mask of side `ceil(sqrt(h^2 + w^2))` is rotated about its
/// center with nearest-neighbour sampling and the central `height x width`
/// window is returned.
pub fn render_rotated_grid_mask(spec: &GridSpec, height: usize, width: usize) -> Result<Mask> {
    spec.validate()?;
    check_dims(height, width)?;
    Ok(render_rotated_lattice(spec, height, width, None))
}

/// Random GridMask: each unit drops its square independently with
/// probability `p_u`, otherwise the whole unit is kept.
///
/// One uniform draw is consumed per unit touching the canvas, in row-major
/// unit order, regardless of `p_u`.
pub fn render_random_grid_mask<R: Rng + ?Sized>(
    spec: &GridSpec,
    height: usize,
    width: usize,
    p_u: f64,
    rng: &mut R,
) -> Result<Mask> {
    spec.validate()?;
    require_axis_aligned(spec)?;
    check_dims(height, width)?;
    check_probability("p_u", p_u)?;
    let lattice = spec.lattice();
    let units = UnitDraws::sample(&lattice, height, width, p_u, rng);
    Ok(render_lattice(&lattice, height, width, Some(&units)))
}

/// Random GridMask followed by the rotation of [`render_rotated_grid_mask`].
/// Unit draws cover the oversized canvas.
pub fn render_random_rotated_grid_mask<R: Rng + ?Sized>(
    spec: &GridSpec,
    height: usize,
    width: usize,
    p_u: f64,
    rng: &mut R,
) -> Result<Mask> {
    spec.validate()?;
    check_dims(height, width)?;
    check_probability("p_u", p_u)?;
    let side = oversized_side(height, width);
    let units = UnitDraws::sample(&spec.lattice(), side, side, p_u, rng);
    Ok(render_rotated_lattice(spec, height, width, Some(&units)))
}

/// Smallest integer `s` with `s^2 >= h^2 + w^2`.
pub fn oversized_side(height: usize, width: usize) -> usize {
    let sq = (height * height + width * width) as u64;
    let mut s = (sq as f64).sqrt() as u64;
    while s * s < sq {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= sq {
        s -= 1;
    }
    s as usize
}

pub(crate) fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Contract(format!(
            "mask dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("{name} = {p} is outside [0, 1]")));
    }
    Ok(())
}

fn require_axis_aligned(spec: &GridSpec) -> Result<()> {
    if spec.angle_deg != 0.0 {
        return Err(Error::Contract(format!(
            "angle {} requires the rotated renderer",
            spec.angle_deg
        )));
    }
    Ok(())
}

/// Integer lattice behind a spec.
#[derive(Clone, Copy, Debug)]
struct Lattice {
    d: i64,
    keep: i64,
    dx: i64,
    dy: i64,
}

impl Lattice {
    fn row_in_drop(&self, i: i64) -> bool {
        (i - self.dy).rem_euclid(self.d) >= self.keep
    }

    fn col_in_drop(&self, j: i64) -> bool {
        (j - self.dx).rem_euclid(self.d) >= self.keep
    }

    fn unit_row(&self, i: i64) -> i64 {
        (i - self.dy).div_euclid(self.d)
    }

    fn unit_col(&self, j: i64) -> i64 {
        (j - self.dx).div_euclid(self.d)
    }
}

/// Per-unit drop decisions over a canvas.
struct UnitDraws {
    row0: i64,
    col0: i64,
    cols: usize,
    drop: Vec<bool>,
}

impl UnitDraws {
    fn sample<R: Rng + ?Sized>(
        lattice: &Lattice,
        height: usize,
        width: usize,
        p_u: f64,
        rng: &mut R,
    ) -> Self {
        let row0 = lattice.unit_row(0);
        let row1 = lattice.unit_row(height as i64 - 1);
        let col0 = lattice.unit_col(0);
        let col1 = lattice.unit_col(width as i64 - 1);
        let rows = (row1 - row0 + 1) as usize;
        let cols = (col1 - col0 + 1) as usize;
        let drop = (0..rows * cols).map(|_| rng.gen::<f64>() < p_u).collect();
        UnitDraws {
            row0,
            col0,
            cols,
            drop,
        }
    }

    fn drops(&self, unit_row: i64, unit_col: i64) -> bool {
        let r = (unit_row - self.row0) as usize;
        let c = (unit_col - self.col0) as usize;
        self.drop[r * self.cols + c]
    }
}

fn render_lattice(
    lattice: &Lattice,
    height: usize,
    width: usize,
    units: Option<&UnitDraws>,
) -> Mask {
    let col_drop: Vec<bool> = (0..width as i64).map(|j| lattice.col_in_drop(j)).collect();
    let mut cells = vec![1u8; height * width];
    for (i, row) in cells.chunks_exact_mut(width).enumerate() {
        let i = i as i64;
        if !lattice.row_in_drop(i) {
            continue;
        }
        for (j, cell) in row.iter_mut().enumerate() {
            if !col_drop[j] {
                continue;
            }
            let unit_drops =
                units.is_none_or(|u| u.drops(lattice.unit_row(i), lattice.unit_col(j as i64)));
            if unit_drops {
                *cell = 0;
            }
        }
    }
    Mask {
        height,
        width,
        cells,
    }
}

fn render_rotated_lattice(
    spec: &GridSpec,
    height: usize,
    width: usize,
    units: Option<&UnitDraws>,
) -> Mask {
    let lattice = spec.lattice();
    let side = oversized_side(height, width);
    let top = (side - height) / 2;
    let left = (side - width) / 2;
    let center = (side as f64 - 1.0) / 2.0;
    let (sin, cos) = spec.angle_deg.to_radians().sin_cos();
    let max = side as f64 - 1.0;

    let mut cells = vec![1u8; height * width];
    for (y, row) in cells.chunks_exact_mut(width).enumerate() {
        let oy = (y + top) as f64 - center;
        for (x, cell) in row.iter_mut().enumerate() {
            let ox = (x + left) as f64 - center;
            // Inverse rotation: where on the unrotated canvas this pixel came from.
            let sx = (center + cos * ox + sin * oy).round().clamp(0.0, max) as i64;
            let sy = (center - sin * ox + cos * oy).round().clamp(0.0, max) as i64;
            if lattice.row_in_drop(sy) && lattice.col_in_drop(sx) {
                let unit_drops =
                    units.is_none_or(|u| u.drops(lattice.unit_row(sy), lattice.unit_col(sx)));
                if unit_drops {
                    *cell = 0;
                }
            }
        }
    }
    Mask {
        height,
        width,
        cells,
    }
}
