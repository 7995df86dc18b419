//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors
//! (bad flags, out-of-range parameters, missing input directory).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::augment::{augment_indexed, AugmentConfig, Fill, SchedulePolicy, Variant};
use crate::error::Error;
use crate::io::{
    is_image_path, load_image, mask_from_image, render_mask_preview, save_image, write_stats_csv,
    StatsRow,
};
use crate::mask::{
    keep_ratio, render_grid_mask, render_rotated_grid_mask, GridConfig, GridSpec, Mask,
};
use crate::sim::{sweep, GridSizing, Method, SimScenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "gridmask",
    version,
    about = "GridMask augmentation and failure-case simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Augment every image in a directory (or a single file).
    Augment(AugmentArgs),
    /// Render a mask preview image for one fixed geometry.
    Preview(PreviewArgs),
    /// Estimate failure-case probabilities and write them as CSV.
    Simulate(SimulateArgs),
    /// Print the keep ratio of a mask file or a rendered geometry.
    KeepRatio(KeepRatioArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long = "out", value_name = "DIR")]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.6)]
    pub r: f64,
    #[arg(long, default_value_t = 96)]
    pub d_min: u32,
    #[arg(long, default_value_t = 224)]
    pub d_max: u32,
    /// Rotate masks by a random angle (the default).
    #[arg(long, overrides_with = "no_rotate")]
    pub rotate: bool,
    #[arg(long)]
    pub no_rotate: bool,
    /// standard, reversed, or random:PU
    #[arg(long, default_value = "standard", value_parser = parse_variant)]
    pub variant: Variant,
    /// Constant application probability.
    #[arg(long, conflicts_with = "ramp")]
    pub p: Option<f64>,
    /// Linear ramp `P,END`: probability grows to P by epoch END (default 0.8,240).
    #[arg(long, value_parser = parse_ramp)]
    pub ramp: Option<(f64, u32)>,
    /// Current epoch; required unless --p is given.
    #[arg(long)]
    pub epoch: Option<u32>,
    /// zero or mean
    #[arg(long, default_value = "zero", value_parser = parse_fill)]
    pub fill: Fill,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub geometry: Geometry,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Geometry {
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub d: u32,
    #[arg(long, default_value_t = 0)]
    pub dx: u32,
    #[arg(long, default_value_t = 0)]
    pub dy: u32,
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
    #[arg(long)]
    pub h: usize,
    #[arg(long)]
    pub w: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated subset of gridmask,has,multi_cutout.
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<String>,
    /// Comma-separated removal sizes x; squares are drawn from [x, 2x].
    #[arg(long, value_delimiter = ',', required = true)]
    pub xs: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 224)]
    pub image_side: usize,
    #[arg(long, default_value = "40,160", value_parser = parse_range)]
    pub object_range: (usize, usize),
    #[arg(long, default_value_t = 0.75)]
    pub keep: f64,
    #[arg(long, default_value_t = 0.99)]
    pub threshold: f64,
    /// GridMask length drawn from [x, 2x]: unit (period d) or square (dropped side).
    #[arg(long, default_value = "unit", value_parser = parse_grid_sizing)]
    pub grid_sizing: GridSizing,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["mask", "r"]))]
pub struct KeepRatioArgs {
    #[arg(long, value_name = "FILE")]
    pub mask: Option<PathBuf>,
    #[arg(long, requires_all = ["d", "h", "w"])]
    pub r: Option<f64>,
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub dx: u32,
    #[arg(long, default_value_t = 0)]
    pub dy: u32,
    #[arg(long, default_value_t = 0.0)]
    pub angle: f64,
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long)]
    pub w: Option<usize>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "standard" => Ok(Variant::Standard),
        "reversed" => Ok(Variant::Reversed),
        _ => {
            let p_u = s
                .strip_prefix("random:")
                .ok_or_else(|| format!("unknown variant {s:?}"))?
                .parse::<f64>()
                .map_err(|e| format!("bad p_u in {s:?}: {e}"))?;
            if !(0.0..=1.0).contains(&p_u) {
                return Err(format!("p_u {p_u} is outside [0, 1]"));
            }
            Ok(Variant::Random { p_u })
        }
    }
}

fn parse_ramp(s: &str) -> Result<(f64, u32), String> {
    let (p, end) = s.split_once(',').ok_or("expected P,END")?;
    let p = p.trim().parse().map_err(|e| format!("bad P: {e}"))?;
    let end = end.trim().parse().map_err(|e| format!("bad END: {e}"))?;
    Ok((p, end))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected A,B")?;
    let a = a.trim().parse().map_err(|e| format!("bad A: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("bad B: {e}"))?;
    Ok((a, b))
}

fn parse_grid_sizing(s: &str) -> Result<GridSizing, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fill(s: &str) -> Result<Fill, String> {
    match s {
        "zero" => Ok(Fill::Value(0.0)),
        "mean" => Ok(Fill::ChannelMean),
        _ => Err(format!("unknown fill {s:?}; expected zero or mean")),
    }
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Contract(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Parse `args` (including the program name) and run. Normal output goes to
/// `out`, diagnostics to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Augment(a) => run_augment(a, out),
        Command::Preview(a) => run_preview(a, out),
        Command::Simulate(a) => run_simulate(a, out),
        Command::KeepRatio(a) => run_keep_ratio(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run(std::env::args_os(), &mut lock)
}

fn augment_config(a: &AugmentArgs) -> Result<(AugmentConfig, u32), Failure> {
    let (policy, epoch) = match (a.p, a.ramp, a.epoch) {
        (Some(p), _, epoch) => (SchedulePolicy::Constant { p }, epoch.unwrap_or(0)),
        (None, ramp, Some(epoch)) => {
            let (upper, end_epoch) = ramp.unwrap_or((0.8, 240));
            (SchedulePolicy::LinearRamp { upper, end_epoch }, epoch)
        }
        (None, _, None) => return Err(Failure::usage("--epoch is required with a ramp schedule")),
    };
    let config = AugmentConfig {
        grid: GridConfig {
            r: a.r,
            d_min: a.d_min,
            d_max: a.d_max,
            rotate: !a.no_rotate,
        },
        policy,
        variant: a.variant,
        fill: a.fill,
    };
    config.validate()?;
    Ok((config, epoch))
}

fn list_inputs(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(Failure::usage(format!(
            "input {} does not exist",
            input.display()
        )));
    }
    let entries = std::fs::read_dir(input).map_err(Error::from)?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(Error::from)?.path();
        if path.is_file() && is_image_path(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Augment one file. Images the schedule leaves untouched are copied byte
/// for byte.
fn augment_file(
    index: usize,
    src: &Path,
    out_dir: &Path,
    seed: u64,
    config: &AugmentConfig,
    epoch: u32,
) -> Result<bool, Error> {
    let image = load_image(src)?;
    let augmented = augment_indexed(seed, index, &image, config, epoch)?;
    let dst = out_dir.join(src.file_name().expect("listed paths are files"));
    if augmented == image {
        std::fs::copy(src, &dst)?;
        Ok(false)
    } else {
        save_image(&augmented, &dst)?;
        Ok(true)
    }
}

fn run_augment(a: &AugmentArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let (config, epoch) = augment_config(a)?;
    let files = list_inputs(&a.input)?;
    std::fs::create_dir_all(&a.output).map_err(Error::from)?;
    let work =
        |(i, path): (usize, &PathBuf)| augment_file(i, path, &a.output, a.seed, &config, epoch);
    let results: Vec<Result<bool, Error>> = if a.jobs <= 1 {
        files.iter().enumerate().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs)
            .build()
            .map_err(|e| Failure::usage(format!("--jobs {}: {e}", a.jobs)))?;
        pool.install(|| files.par_iter().enumerate().map(work).collect())
    };
    let (mut masked, mut failed) = (0, 0);
    for (path, r) in files.iter().zip(&results) {
        match r {
            Ok(changed) => masked += usize::from(*changed),
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e}", path.display());
            }
        }
    }
    writeln!(
        out,
        "augmented {masked} of {} images ({failed} failed)",
        files.len()
    )
    .map_err(Error::from)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn render_geometry(g: &Geometry) -> Result<Mask, Failure> {
    let spec = GridSpec::new(g.r, g.d, g.dx, g.dy, g.angle)?;
    let mask = if g.angle == 0.0 {
        render_grid_mask(&spec, g.h, g.w)?
    } else {
        render_rotated_grid_mask(&spec, g.h, g.w)?
    };
    Ok(mask)
}

fn run_preview(a: &PreviewArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mask = render_geometry(&a.geometry)?;
    save_image(&render_mask_preview(&mask), &a.out)?;
    writeln!(
        out,
        "wrote {}x{} preview to {} (keep ratio {:.6})",
        mask.height(),
        mask.width(),
        a.out.display(),
        keep_ratio(&mask)
    )
    .map_err(Error::from)?;
    Ok(EXIT_OK)
}

fn run_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    let scenario = SimScenario {
        image_side: a.image_side,
        object_side_range: a.object_range,
        target_keep: a.keep,
        trials: a.trials,
        failure_threshold: a.threshold,
        grid_sizing: a.grid_sizing,
    };
    scenario.validate()?;
    let stats = sweep(a.seed, &scenario, &methods, &a.xs, a.jobs)?;
    for s in &stats {
        writeln!(
            out,
            "{:<12} x={:<4} p_fail={:.6} removed={:.6} reserved={:.6} mean_keep={:.4}",
            s.method, s.x, s.p_fail, s.p_removed, s.p_reserved, s.mean_keep
        )
        .map_err(Error::from)?;
    }
    let rows: Vec<StatsRow> = stats.iter().map(|s| StatsRow::new(s, a.seed)).collect();
    write_stats_csv(&rows, &a.out)?;
    Ok(EXIT_OK)
}

fn run_keep_ratio(a: &KeepRatioArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mask = match (&a.mask, a.r) {
        (Some(path), _) => mask_from_image(&load_image(path)?),
        (None, Some(r)) => render_geometry(&Geometry {
            r,
            d: a.d.expect("clap enforces --d"),
            dx: a.dx,
            dy: a.dy,
            angle: a.angle,
            h: a.h.expect("clap enforces --h"),
            w: a.w.expect("clap enforces --w"),
        })?,
        (None, None) => return Err(Failure::usage("give --mask or geometry flags")),
    };
    writeln!(out, "{:.6}", keep_ratio(&mask)).map_err(Error::from)?;
    Ok(EXIT_OK)
}
