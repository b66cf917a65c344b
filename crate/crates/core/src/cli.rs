//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diffeo::{checked_steps, DEFAULT_STEPS};
use crate::error::{Error, Result};
use crate::io::{
    pad_to_multiple, read_field, read_image, read_labels, write_field, write_image, write_labels, write_pyramid,
};
use crate::metrics::{dice, hausdorff, mean_dice, neg_jac_fraction, LabelVolume};
use crate::optimizer::{register_with_observer, RegistrationConfig, DEFAULT_LR, DEFAULT_STAGES};
use crate::similarity::{LossConfig, SimilarityKind};
use crate::synth::{synth_pair, SynthKind, SynthSpec};
use crate::volume::{check_same_dims, warp, warp_nearest, Dims, ScalarVolume};
use crate::wavelet::{dwt3_volume, FilterBank, Subband, WaveletKind};

#[derive(Parser, Debug)]
#[command(name = "wavereg", version, about = "Wavelet-pyramid deformable registration of 3D volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Register a moving volume onto a fixed one and write the deformation.
    Register(RegisterArgs),
    /// Warp a volume through a deformation.
    Transform(TransformArgs),
    /// Report folding and, given label maps, Dice and Hausdorff distance.
    Metrics(MetricsArgs),
    /// Write the eight single-level wavelet sub-bands of a volume.
    Dwt(DwtArgs),
    /// Generate a synthetic pair with a known deformation.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    #[arg(long)]
    pub moving: PathBuf,
    #[arg(long)]
    pub fixed: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Optimize a stationary velocity and exponentiate it.
    #[arg(long)]
    pub diff: bool,
    #[arg(long, default_value = "ncc")]
    pub loss: SimilarityKind,
    /// Smoothness weight; defaults to 2 for ncc and 0.01 for mse.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value = "haar")]
    pub wavelet: WaveletKind,
    /// Iterations per stage, e.g. 100,100,100.
    #[arg(long, value_parser = parse_stages)]
    pub stages: Option<[usize; 3]>,
    #[arg(long, default_value_t = DEFAULT_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_STEPS as i64, allow_negative_numbers = true)]
    pub sq_steps: i64,
    #[arg(long)]
    pub save_pyramid: Option<PathBuf>,
    /// Write the per-iteration objective as CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Treat the input as a label map (nearest-neighbour sampling).
    #[arg(long)]
    pub labels: bool,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub flow: PathBuf,
    /// Moving label map; it is warped through the flow before comparison.
    #[arg(long, requires = "seg_b")]
    pub seg_a: Option<PathBuf>,
    /// Fixed label map.
    #[arg(long, requires = "seg_a")]
    pub seg_b: Option<PathBuf>,
    /// Labels to score, e.g. 1,2; defaults to every non-zero label present.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<u32>>,
}

#[derive(Args, Debug)]
pub struct DwtArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[arg(long, default_value = "haar")]
    pub wavelet: WaveletKind,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "gaussian_bumps")]
    pub kind: SynthKind,
    /// Grid size as D,H,W.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Dims,
    #[arg(long)]
    pub max_disp: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_prefix: PathBuf,
    /// Also write concentric-sphere label maps.
    #[arg(long)]
    pub labels: bool,
}

fn parse_triple(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated integers, got {s:?}"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("{p:?} is not a non-negative integer"))?;
    }
    Ok(out)
}

fn parse_stages(s: &str) -> std::result::Result<[usize; 3], String> {
    parse_triple(s)
}

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    let dims = Dims::from_array(parse_triple(s)?);
    if dims.is_empty() {
        return Err(format!("dims must be positive, got {s:?}"));
    }
    Ok(dims)
}

/// `prefix` with `suffix` appended to its file name.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Runs a parsed command; the returned text goes to standard output.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Register(a) => register_cmd(a),
        Command::Transform(a) => transform_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Dwt(a) => dwt_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn register_cmd(a: RegisterArgs) -> Result<String> {
    let moving = read_image(&a.moving)?;
    let fixed = read_image(&a.fixed)?;
    check_same_dims(moving.dims(), fixed.dims(), "register")?;
    let mut loss = LossConfig::new(a.loss);
    if let Some(l) = a.lambda {
        loss = loss.with_lambda(l);
    }
    let config = RegistrationConfig {
        loss,
        diffeomorphic: a.diff,
        wavelet: a.wavelet,
        stage_iterations: a.stages.unwrap_or(DEFAULT_STAGES),
        lr: a.lr,
        sq_steps: checked_steps(a.sq_steps)?,
    };
    config.validate()?;
    let (moving_p, record) = pad_to_multiple(&moving.normalized(), 8)?;
    let (fixed_p, _) = pad_to_multiple(&fixed.normalized(), 8)?;
    if config.loss.kind == SimilarityKind::Ncc && config.loss.ncc_window > fixed_p.dims().min_extent() {
        return Err(Error::Config(format!(
            "NCC window {} is larger than the padded grid {}",
            config.loss.ncc_window,
            fixed_p.dims()
        )));
    }
    let mut stages = Vec::with_capacity(config.total_iterations());
    let result = register_with_observer(&moving_p, &fixed_p, &config, |r| stages.push(r.stage))?;
    let flow = record.crop_field(&result.flow)?.with_spacing(fixed.spacing());
    write_field(&a.out, &flow)?;
    if let Some(p) = &a.save_pyramid {
        write_pyramid(p, &result.pyramid)?;
    }
    if let Some(p) = &a.history {
        let mut csv = String::from("iteration,stage,loss\n");
        for (i, (loss, stage)) in result.loss_history.iter().zip(&stages).enumerate() {
            writeln!(csv, "{i},{},{loss:e}", stage + 1).expect("writing to a String");
        }
        fs::write(p, csv)?;
    }
    let d = &result.diagnostics;
    let mut out = String::new();
    writeln!(out, "iterations = {}", result.loss_history.len()).unwrap();
    writeln!(out, "loss = {}", d.loss).unwrap();
    writeln!(out, "similarity = {}", d.similarity).unwrap();
    writeln!(out, "smoothness = {}", d.smoothness).unwrap();
    writeln!(out, "neg_jac_percent = {}", neg_jac_fraction(&flow)?).unwrap();
    Ok(out)
}

fn transform_cmd(a: TransformArgs) -> Result<String> {
    let flow = read_field(&a.flow)?;
    let input = read_image(&a.input)?;
    check_same_dims(input.dims(), flow.dims(), "transform")?;
    if a.labels {
        let labels = LabelVolume::from_volume(&input)?;
        let warped = LabelVolume::from_volume(&warp_nearest(&labels.to_volume(), &flow)?)?;
        write_labels(&a.out, &warped)?;
    } else {
        write_image(&a.out, &warp(&input, &flow)?)?;
    }
    Ok(String::new())
}

fn metrics_cmd(a: MetricsArgs) -> Result<String> {
    let flow = read_field(&a.flow)?;
    let mut out = String::new();
    writeln!(out, "neg_jac_percent = {}", neg_jac_fraction(&flow)?).unwrap();
    let (Some(seg_a), Some(seg_b)) = (&a.seg_a, &a.seg_b) else {
        return Ok(out);
    };
    let moving = read_labels(seg_a)?;
    let fixed = read_labels(seg_b)?;
    check_same_dims(moving.dims(), flow.dims(), "metrics")?;
    check_same_dims(fixed.dims(), flow.dims(), "metrics")?;
    let warped = LabelVolume::from_volume(&warp_nearest(&moving.to_volume(), &flow)?)?;
    let labels = match a.labels {
        Some(l) => l,
        None => {
            let mut l = warped.present_labels();
            l.extend(fixed.present_labels());
            l.sort_unstable();
            l.dedup();
            l
        }
    };
    let scores = dice(&warped, &fixed, &labels)?;
    for (label, score) in &scores {
        match score {
            Some(s) => writeln!(out, "dice.{label} = {s}").unwrap(),
            None => writeln!(out, "dice.{label} = undefined").unwrap(),
        }
    }
    for &label in &labels {
        match hausdorff(&warped, &fixed, label) {
            Ok(h) => writeln!(out, "hd.{label} = {h}").unwrap(),
            Err(Error::UndefinedMetric(_)) => writeln!(out, "hd.{label} = undefined").unwrap(),
            Err(e) => return Err(e),
        }
    }
    match mean_dice(&scores) {
        Some(m) => writeln!(out, "mean_dice = {m}").unwrap(),
        None => writeln!(out, "mean_dice = undefined").unwrap(),
    }
    Ok(out)
}

fn dwt_cmd(a: DwtArgs) -> Result<String> {
    let vol = read_image(&a.input)?;
    let fb = FilterBank::new(a.wavelet);
    let coeffs = dwt3_volume(&vol, &fb)?;
    let half = coeffs.dims();
    let mut out = String::new();
    for band in Subband::ALL {
        // stored at half resolution with doubled spacing
        let spacing = vol.spacing().map(|s| 2.0 * s);
        let data = coeffs.band(band).to_vec();
        let path = with_suffix(&a.out_prefix, &format!("_{}.raw", band.label()));
        write_image(&path, &ScalarVolume::new(half, spacing, data)?)?;
        writeln!(out, "{} = {}", band.label(), path.display()).unwrap();
    }
    Ok(out)
}

fn synth_cmd(a: SynthArgs) -> Result<String> {
    let mut spec = SynthSpec::new(a.kind, a.dims, a.max_disp, a.seed);
    if a.labels {
        spec = spec.with_labels();
    }
    let pair = synth_pair(&spec)?;
    let path = |s: &str| with_suffix(&a.out_prefix, s);
    let mut out = String::new();
    let mut emit = |key: &str, p: PathBuf| writeln!(out, "{key} = {}", p.display()).unwrap();
    write_image(&path("_moving.raw"), &pair.moving)?;
    emit("moving", path("_moving.raw"));
    write_image(&path("_fixed.raw"), &pair.fixed)?;
    emit("fixed", path("_fixed.raw"));
    write_field(&path("_gt_flow.raw"), &pair.gt_flow)?;
    emit("gt_flow", path("_gt_flow.raw"));
    write_field(&path("_target_flow.raw"), &pair.target_flow)?;
    emit("target_flow", path("_target_flow.raw"));
    if let Some(l) = &pair.labels {
        write_labels(&path("_moving_labels.raw"), &l.moving)?;
        emit("moving_labels", path("_moving_labels.raw"));
        write_labels(&path("_fixed_labels.raw"), &l.fixed)?;
        emit("fixed_labels", path("_fixed_labels.raw"));
    }
    Ok(out)
}
