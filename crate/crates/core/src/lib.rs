//! GridMask: structured information-dropping augmentation.
//!
//! The crate renders GridMask masks and their variants (reversed, random-unit,
//! rotated), generates the baseline dropping masks it is usually compared
//! against (Cutout, multi-region Cutout, Hide-and-Seek, Random Erasing),
//! applies masks to images under epoch-dependent probability schedules, and
//! runs a Monte Carlo simulator that measures how often each method removes or
//! keeps almost all of a synthetic object.
//!
//! All randomness is seeded. Every renderer is a pure function of its
//! parameters and the random stream it is handed, so batch and simulation
//! results do not depend on thread count.

pub mod augment;
pub mod baseline;
pub mod cli;
mod error;
pub mod io;
pub mod mask;
pub mod rng;
pub mod sim;

pub use augment::{
    apply_mask, augment_batch, augment_image, schedule_probability, AugmentConfig, Fill,
    ImageTensor, Samples, SchedulePolicy, Variant,
};
pub use error::{Error, Result};
pub use mask::{
    keep_ratio, render_grid_mask, render_random_grid_mask, render_rotated_grid_mask, reverse_mask,
    sample_grid_spec, GridConfig, GridSpec, Mask,
};
pub use sim::{FailureStats, Method, Outcome, SimScenario};
