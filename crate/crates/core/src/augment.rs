//! Applying masks to images and deciding when to apply them.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mask::{
    check_probability, render_grid_mask, render_random_grid_mask, render_random_rotated_grid_mask,
    render_rotated_grid_mask, reverse_mask, sample_grid_spec, GridConfig, Mask,
};
use crate::rng;

/// Sample storage: raw 8-bit or normalized real values.
#[derive(Clone, Debug, PartialEq)]
pub enum Samples {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::U8(v) => v.len(),
            Samples::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An `H x W x C` image, samples interleaved per pixel, rows top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    samples: Samples,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, samples: Samples) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Contract(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if samples.len() != height * width * channels {
            return Err(Error::Contract(format!(
                "{} samples for a {height}x{width}x{channels} image",
                samples.len()
            )));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            samples,
        })
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(height, width, channels, Samples::U8(data))
    }

    pub fn from_f32(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(height, width, channels, Samples::F32(data))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    /// Sample at `(row, col, channel)` as `f32`.
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        let idx = (row * self.width + col) * self.channels + channel;
        match &self.samples {
            Samples::U8(v) => v[idx] as f32,
            Samples::F32(v) => v[idx],
        }
    }

    /// Mean of each channel over all pixels.
    pub fn channel_means(&self) -> Vec<f32> {
        let mut sums = vec![0f64; self.channels];
        let c = self.channels;
        match &self.samples {
            Samples::U8(v) => v
                .chunks_exact(c)
                .for_each(|px| sums.iter_mut().zip(px).for_each(|(s, &x)| *s += x as f64)),
            Samples::F32(v) => v
                .chunks_exact(c)
                .for_each(|px| sums.iter_mut().zip(px).for_each(|(s, &x)| *s += x as f64)),
        }
        let n = (self.height * self.width) as f64;
        sums.into_iter().map(|s| (s / n) as f32).collect()
    }

    fn with_samples(&self, samples: Samples) -> Self {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            samples,
        }
    }
}

/// Replace dropped pixels with `fill` in every channel. Zero fill on
/// normalized data is the plain product `image * mask`.
pub fn apply_mask(image: &ImageTensor, mask: &Mask, fill: f32) -> Result<ImageTensor> {
    apply_mask_per_channel(image, mask, &vec![fill; image.channels])
}

/// Like [`apply_mask`] with one fill value per channel. For 8-bit images fill
/// values are rounded and clamped to `[0, 255]`.
pub fn apply_mask_per_channel(
    image: &ImageTensor,
    mask: &Mask,
    fills: &[f32],
) -> Result<ImageTensor> {
    if (mask.height(), mask.width()) != (image.height, image.width) {
        return Err(Error::DimensionMismatch {
            expected: (image.height, image.width),
            actual: (mask.height(), mask.width()),
        });
    }
    if fills.len() != image.channels {
        return Err(Error::Contract(format!(
            "{} fill values for {} channels",
            fills.len(),
            image.channels
        )));
    }
    let samples = match &image.samples {
        Samples::U8(v) => {
            let fills: Vec<u8> = fills
                .iter()
                .map(|f| f.round().clamp(0.0, 255.0) as u8)
                .collect();
            Samples::U8(fill_dropped(v, mask, &fills))
        }
        Samples::F32(v) => Samples::F32(fill_dropped(v, mask, fills)),
    };
    Ok(image.with_samples(samples))
}

fn fill_dropped<T: Copy>(samples: &[T], mask: &Mask, fills: &[T]) -> Vec<T> {
    let mut out = samples.to_vec();
    for (px, &m) in out.chunks_exact_mut(fills.len()).zip(mask.cells()) {
        if m == 0 {
            px.copy_from_slice(fills);
        }
    }
    out
}

/// Probability of applying the mask to an image at a given epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchedulePolicy {
    Constant {
        p: f64,
    },
    /// Grows linearly from 0 at epoch 0 to `upper` at `end_epoch`, then stays.
    LinearRamp {
        upper: f64,
        end_epoch: u32,
    },
}

impl SchedulePolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SchedulePolicy::Constant { p } => check_probability("p", p),
            SchedulePolicy::LinearRamp { upper, end_epoch } => {
                check_probability("P", upper)?;
                if end_epoch == 0 {
                    return Err(Error::Config("ramp end epoch must be at least 1".into()));
                }
                Ok(())
            }
        }
    }
}

pub fn schedule_probability(policy: &SchedulePolicy, epoch: u32) -> f64 {
    match *policy {
        SchedulePolicy::Constant { p } => p,
        SchedulePolicy::LinearRamp { upper, end_epoch } => {
            upper * (epoch as f64 / end_epoch as f64).min(1.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Variant {
    Standard,
    /// Keep what the standard mask drops and drop what it keeps.
    Reversed,
    /// Each unit drops its square with probability `p_u`.
    Random {
        p_u: f64,
    },
}

/// Value written into dropped pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fill {
    Value(f32),
    /// Per-channel mean of the image being augmented.
    ChannelMean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub grid: GridConfig,
    pub policy: SchedulePolicy,
    pub variant: Variant,
    pub fill: Fill,
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.policy.validate()?;
        if let Variant::Random { p_u } = self.variant {
            check_probability("p_u", p_u)?;
        }
        Ok(())
    }
}

/// Draw a spec and render the mask for `variant`, rotated when the config
/// asks for it.
pub fn sample_mask<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &GridConfig,
    variant: Variant,
    height: usize,
    width: usize,
) -> Result<Mask> {
    let spec = sample_grid_spec(rng, grid)?;
    let render = |spec| {
        if grid.rotate {
            render_rotated_grid_mask(spec, height, width)
        } else {
            render_grid_mask(spec, height, width)
        }
    };
    match variant {
        Variant::Standard => render(&spec),
        Variant::Reversed => render(&spec).map(|m| reverse_mask(&m)),
        Variant::Random { p_u } if grid.rotate => {
            render_random_rotated_grid_mask(&spec, height, width, p_u, rng)
        }
        Variant::Random { p_u } => render_random_grid_mask(&spec, height, width, p_u, rng),
    }
}

/// Augment one image. The application decision is drawn first; when it
/// succeeds a spec is sampled, rendered and applied, otherwise the image is
/// returned unchanged.
pub fn augment_image<R: Rng + ?Sized>(
    rng: &mut R,
    image: &ImageTensor,
    config: &AugmentConfig,
    epoch: u32,
) -> Result<ImageTensor> {
    config.validate()?;
    let p = schedule_probability(&config.policy, epoch);
    if rng.gen::<f64>() >= p {
        return Ok(image.clone());
    }
    let mask = sample_mask(rng, &config.grid, config.variant, image.height, image.width)?;
    let fills = match config.fill {
        Fill::Value(v) => vec![v; image.channels],
        Fill::ChannelMean => image.channel_means(),
    };
    apply_mask_per_channel(image, &mask, &fills)
}

#[derive(Debug, thiserror::Error)]
#[error("image {index}: {source}")]
pub struct BatchError {
    pub index: usize,
    #[source]
    pub source: Error,
}

/// Augment the image at position `index` of a batch seeded by `master_seed`.
pub fn augment_indexed(
    master_seed: u64,
    index: usize,
    image: &ImageTensor,
    config: &AugmentConfig,
    epoch: u32,
) -> Result<ImageTensor> {
    let mut rng = rng::stream(master_seed, &[index as u64]);
    augment_image(&mut rng, image, config, epoch)
}

/// Augment a batch. Image `i` uses the stream `rng::stream(master_seed, [i])`,
/// so the output does not depend on `jobs`. Failures are reported per index.
pub fn augment_batch(
    master_seed: u64,
    images: &[ImageTensor],
    config: &AugmentConfig,
    epoch: u32,
    jobs: usize,
) -> Vec<Result<ImageTensor, BatchError>> {
    let one = |(index, image): (usize, &ImageTensor)| {
        augment_indexed(master_seed, index, image, config, epoch)
            .map_err(|source| BatchError { index, source })
    };
    if jobs <= 1 {
        return images.iter().enumerate().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| images.par_iter().enumerate().map(one).collect()),
        Err(_) => images.iter().enumerate().map(one).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Mask;

    fn grid() -> GridConfig {
        GridConfig {
            r: 0.5,
            d_min: 4,
            d_max: 9,
            rotate: false,
        }
    }

    fn config(policy: SchedulePolicy, variant: Variant) -> AugmentConfig {
        AugmentConfig {
            grid: grid(),
            policy,
            variant,
            fill: Fill::Value(0.0),
        }
    }

    fn ramp() -> SchedulePolicy {
        SchedulePolicy::LinearRamp {
            upper: 0.8,
            end_epoch: 240,
        }
    }

    fn gradient(h: usize, w: usize, c: usize) -> ImageTensor {
        let data = (0..h * w * c).map(|i| (i % 250 + 1) as u8).collect();
        ImageTensor::from_u8(h, w, c, data).unwrap()
    }

    #[test]
    fn eq1_small_example() {
        let img = ImageTensor::from_f32(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = Mask::from_cells(2, 2, vec![1, 0, 0, 1]).unwrap();
        let out = apply_mask(&img, &mask, 0.0).unwrap();
        assert_eq!(out.samples(), &Samples::F32(vec![1.0, 0.0, 0.0, 4.0]));
        assert_eq!(img.samples(), &Samples::F32(vec![1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn apply_trivial_masks() {
        let img = gradient(5, 6, 3);
        let ones = Mask::ones(5, 6).unwrap();
        assert_eq!(apply_mask(&img, &ones, 0.0).unwrap(), img);
        let zeros = Mask::zeros(5, 6).unwrap();
        assert_eq!(
            apply_mask(&img, &zeros, 0.0).unwrap().samples(),
            &Samples::U8(vec![0; 90])
        );
    }

    #[test]
    fn apply_rejects_mismatch() {
        let img = gradient(5, 6, 1);
        let mask = Mask::ones(6, 5).unwrap();
        assert!(matches!(
            apply_mask(&img, &mask, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn u8_fill_is_rounded_and_clamped() {
        let img = gradient(1, 3, 2);
        let mask = Mask::zeros(1, 3).unwrap();
        let out = apply_mask_per_channel(&img, &mask, &[300.0, 7.6]).unwrap();
        assert_eq!(out.samples(), &Samples::U8(vec![255, 8, 255, 8, 255, 8]));
    }

    #[test]
    fn channel_means() {
        let img = ImageTensor::from_u8(1, 2, 2, vec![10, 0, 20, 5]).unwrap();
        assert_eq!(img.channel_means(), vec![15.0, 2.5]);
    }

    #[test]
    fn ramp_schedule_points() {
        assert_eq!(schedule_probability(&ramp(), 0), 0.0);
        assert_eq!(schedule_probability(&ramp(), 120), 0.4);
        assert_eq!(schedule_probability(&ramp(), 240), 0.8);
        assert_eq!(schedule_probability(&ramp(), 300), 0.8);
        let c = SchedulePolicy::Constant { p: 0.3 };
        assert_eq!(schedule_probability(&c, 17), 0.3);
        assert!(SchedulePolicy::LinearRamp {
            upper: 0.8,
            end_epoch: 0
        }
        .validate()
        .is_err());
        assert!(SchedulePolicy::Constant { p: 1.1 }.validate().is_err());
    }

    #[test]
    fn zero_probability_is_identity() {
        let img = gradient(16, 16, 3);
        let cfg = config(SchedulePolicy::Constant { p: 0.0 }, Variant::Standard);
        for seed in 0..20 {
            let mut rng = rng::stream(seed, &[]);
            assert_eq!(augment_image(&mut rng, &img, &cfg, 0).unwrap(), img);
        }
    }

    #[test]
    fn always_apply_changes_exactly_dropped_cells() {
        let img = gradient(24, 20, 3);
        let cfg = config(SchedulePolicy::Constant { p: 1.0 }, Variant::Standard);
        for seed in 0..20 {
            let out = augment_image(&mut rng::stream(seed, &[]), &img, &cfg, 0).unwrap();
            let mut replay = rng::stream(seed, &[]);
            let _decision: f64 = replay.gen();
            let mask = sample_mask(&mut replay, &grid(), Variant::Standard, 24, 20).unwrap();
            for i in 0..24 {
                for j in 0..20 {
                    for c in 0..3 {
                        let changed = out.get(i, j, c) != img.get(i, j, c);
                        assert_eq!(changed, !mask.is_kept(i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn reversed_variant_is_complement() {
        for seed in 0..20 {
            let std = sample_mask(
                &mut rng::stream(seed, &[]),
                &grid(),
                Variant::Standard,
                30,
                30,
            )
            .unwrap();
            let rev = sample_mask(
                &mut rng::stream(seed, &[]),
                &grid(),
                Variant::Reversed,
                30,
                30,
            )
            .unwrap();
            assert_eq!(rev, reverse_mask(&std));
        }
    }

    #[test]
    fn config_errors_propagate() {
        let img = gradient(4, 4, 1);
        let mut cfg = config(
            SchedulePolicy::Constant { p: 1.0 },
            Variant::Random { p_u: 2.0 },
        );
        assert!(augment_image(&mut rng::stream(0, &[]), &img, &cfg, 0).is_err());
        cfg.variant = Variant::Standard;
        cfg.grid.d_min = 20;
        assert!(augment_image(&mut rng::stream(0, &[]), &img, &cfg, 0).is_err());
    }

    #[test]
    fn batch_empty_and_deterministic() {
        let cfg = AugmentConfig {
            grid: GridConfig {
                r: 0.6,
                d_min: 4,
                d_max: 12,
                rotate: true,
            },
            policy: ramp(),
            variant: Variant::Random { p_u: 0.7 },
            fill: Fill::ChannelMean,
        };
        assert!(augment_batch(1, &[], &cfg, 100, 4).is_empty());
        let images: Vec<_> = (0..24)
            .map(|k| gradient(10 + k, 13, 1 + 2 * (k % 2)))
            .collect();
        let collect = |jobs| -> Vec<ImageTensor> {
            augment_batch(42, &images, &cfg, 200, jobs)
                .into_iter()
                .map(|r| r.unwrap())
                .collect()
        };
        let serial = collect(1);
        assert_eq!(serial, collect(1));
        assert_eq!(serial, collect(8));
        assert!(serial.iter().zip(&images).any(|(a, b)| a != b));
    }

    #[test]
    fn batch_reports_failures_by_index() {
        let mut cfg = config(SchedulePolicy::Constant { p: 1.0 }, Variant::Standard);
        cfg.grid.d_min = 0;
        let images = vec![gradient(4, 4, 1), gradient(5, 5, 1)];
        let out = augment_batch(0, &images, &cfg, 0, 2);
        let indices: Vec<usize> = out.iter().map(|r| r.as_ref().unwrap_err().index).collect();
        assert_eq!(indices, vec![0, 1]);
    }
}
