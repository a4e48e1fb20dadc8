use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use globhand::canonical::canonicalize;
use globhand::dataset::{read_dataset, write_records, FrameRecord, HandEntry};
use globhand::evaluate::{evaluate_dataset, EvalConfig};
use globhand::heatmap::{decode_heatmaps, encode_z_heatmaps, energy_bbox, DetectionConfig, Heatmap, ZHeatmapConfig};
use globhand::recon::reconstruct_hand;
use globhand::synth::{perturb, sample_frame, sample_sequence, NoiseModel, SynthParams};
use globhand::tracking::{FitMode, TrackState};
use globhand::{BBox, CameraIntrinsics, Handedness, Skeleton, NUM_JOINTS};

#[derive(Parser)]
#[command(name = "globhand", version, about = "Two-hand global 3D pose geometry, evaluation and synthesis")]
struct Cli {
    /// TOML file whose keys are flag names; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Fill in canonical poses from global joints.
    Canonicalize(InOut),
    /// Recover global joints from 2D keypoints and canonical poses.
    Reconstruct(ReconstructArgs),
    /// Replace 2D and canonical poses with noisy estimates of the ground truth.
    Perturb(PerturbArgs),
    /// Smooth the root distance over time.
    Track(TrackArgs),
    /// Presence and boxes from per-hand energy maps.
    Detect(DetectArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Depth-heatmap encoding and decoding.
    #[command(subcommand)]
    Heatmap(HeatmapCommand),
}

#[derive(Args)]
struct InOut {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output path, `-` for stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frames per sequence, or the number of independent frames.
    #[arg(long, default_value_t = 500)]
    frames: usize,
    /// Number of sequences; 0 emits independent frames.
    #[arg(long, default_value_t = 0)]
    sequences: u64,
    #[arg(long, default_value_t = 0.1)]
    drop_rate: f64,
    #[arg(long, default_value_t = 25.0)]
    depth_min: f64,
    #[arg(long, default_value_t = 100.0)]
    depth_max: f64,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    /// Wrist to middle-MCP distance, cm.
    #[arg(long, default_value_t = 10.0)]
    key_bone_length: f64,
    #[arg(long, default_value_t = 2.0)]
    max_root_step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    io: InOut,
    #[arg(long, default_value_t = 10.0)]
    key_bone_length: f64,
}

#[derive(Args)]
struct PerturbArgs {
    #[command(flatten)]
    io: InOut,
    #[arg(long, default_value_t = 0.0)]
    sigma_2d: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_can: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    io: InOut,
    #[arg(long, default_value_t = TrackState::DEFAULT_CAPACITY)]
    window: usize,
    #[arg(long, default_value_t = TrackState::DEFAULT_DEGREE)]
    degree: usize,
    /// Predict from previous frames only instead of smoothing the current one.
    #[arg(long)]
    extrapolate: bool,
}

#[derive(Args)]
struct DetectArgs {
    /// Directory of `<frame>_<left|right>.bin` or `.pgm` energy maps.
    #[arg(long)]
    energy_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    presence_threshold: f64,
    #[arg(long, default_value_t = 0.15)]
    margin: f64,
    #[arg(long, default_value_t = 270)]
    height: u32,
    #[arg(long, default_value_t = 480)]
    width: u32,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// JSON report path, `-` for stdout.
    #[arg(long, default_value = "-")]
    report: PathBuf,
    /// Directory receiving one CSV per PCK curve.
    #[arg(long)]
    curves_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum HeatmapCommand {
    /// Write 21 depth heatmaps per present hand.
    Encode(HeatmapEncodeArgs),
    /// Decode heatmaps back into keypoints and canonical depths (JSON lines).
    Decode(HeatmapDecodeArgs),
}

#[derive(Args)]
struct HeatmapEncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    #[arg(long, default_value_t = 1.5)]
    sigma: f64,
    /// Write 8-bit PGM instead of f32 binary.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct HeatmapDecodeArgs {
    #[arg(long)]
    in_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn open_out(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn load(path: &Path) -> Result<Vec<FrameRecord>> {
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn save(records: &[FrameRecord], path: &Path) -> Result<()> {
    write_records(records, open_out(path)?).with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let params = SynthParams {
        seed: a.seed,
        depth: a.depth_min..=a.depth_max,
        image_margin: a.margin,
        drop_rate: a.drop_rate,
        skeleton: Skeleton::with_key_bone_length(a.key_bone_length)?,
        max_root_step_cm: a.max_root_step,
        ..SynthParams::default()
    };
    params.validate()?;
    let cam = params.camera;
    let mut records = Vec::new();
    if a.sequences == 0 {
        for i in 0..a.frames as u64 {
            records.push(FrameRecord::from_poses(i as i64, cam, &sample_frame(&params, i)?)?);
        }
    } else {
        for s in 0..a.sequences {
            for (f, poses) in sample_sequence(&params, a.frames, s)?.iter().enumerate() {
                let mut rec = FrameRecord::from_poses(f as i64, cam, poses)?;
                rec.sequence = Some(s);
                records.push(rec);
            }
        }
    }
    save(&records, &a.out)
}

fn canonicalize_cmd(a: InOut) -> Result<()> {
    let mut records = load(&a.input)?;
    for rec in &mut records {
        let (cam, frame) = (rec.camera, rec.frame);
        for side in Handedness::BOTH {
            let entry = rec.hand_mut(side);
            if let Some(pose) = entry.global(side) {
                let can = canonicalize(&pose, &cam)
                    .with_context(|| format!("frame {frame} {}", side.name()))?;
                entry.set_canonical(&can.canonical);
            }
        }
    }
    save(&records, &a.out)
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let mut records = load(&a.io.input)?;
    let mut failed = 0usize;
    for rec in &mut records {
        let cam = rec.camera;
        for side in Handedness::BOTH {
            let entry = rec.hand_mut(side);
            if !entry.present {
                continue;
            }
            let (can, p) = (entry.canonical(side), entry.pose_2d(side));
            if can.is_none() || p.is_none() {
                bail!("frame {} {}: reconstruction needs rc and can", rec.frame, side.name());
            }
            match reconstruct_hand(can.as_ref(), p.as_ref(), &cam, a.key_bone_length) {
                Ok(Some(res)) => entry.set_global(&res.pose),
                // left without global joints; evaluation counts it as a failure
                Ok(None) | Err(_) => {
                    entry.xyz_cm = None;
                    failed += 1;
                }
            }
        }
    }
    if failed > 0 {
        eprintln!("{}", json!({"warning": "reconstruction", "failed_hands": failed}));
    }
    save(&records, &a.io.out)
}

fn perturb_cmd(a: PerturbArgs) -> Result<()> {
    let noise = NoiseModel {
        sigma_2d: a.sigma_2d,
        sigma_can: a.sigma_can,
        seed: a.seed,
    };
    noise.validate()?;
    let mut records = load(&a.io.input)?;
    for (i, rec) in records.iter_mut().enumerate() {
        let (cam, frame) = (rec.camera, rec.frame);
        let mut rng = noise.rng(i as u64);
        for side in Handedness::BOTH {
            let entry = rec.hand_mut(side);
            if !entry.present {
                continue;
            }
            let gt = entry
                .global(side)
                .with_context(|| format!("frame {frame} {}: perturb needs xyz_cm", side.name()))?;
            let (p, can) = perturb(&gt, &cam, &noise, &mut rng)?;
            let mut out = HandEntry::present();
            out.set_2d(&p);
            out.set_canonical(&can);
            out.set_bbox(BBox::around_points(&p.joints, cam.height_px, cam.width_px));
            *entry = out;
        }
    }
    save(&records, &a.io.out)
}

fn track(a: TrackArgs) -> Result<()> {
    let mode = if a.extrapolate { FitMode::Extrapolate } else { FitMode::Smooth };
    let mut records = load(&a.io.input)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].key());
    let mut states: BTreeMap<(Option<u64>, Handedness), TrackState> = BTreeMap::new();
    for i in order {
        let rec = &mut records[i];
        let (seq, frame) = rec.key();
        for side in Handedness::BOTH {
            let entry = rec.hand_mut(side);
            let Some(pose) = entry.global(side) else { continue };
            let state = match states.get_mut(&(seq, side)) {
                Some(s) => s,
                None => states
                    .entry((seq, side))
                    .or_insert(TrackState::new(side, a.window, a.degree, mode)?),
            };
            let root = pose.root();
            let r = root.norm();
            let smoothed = state
                .push_and_estimate(frame, r)
                .with_context(|| format!("frame {frame} {}", side.name()))?;
            // moving along the root ray changes only the radius
            let shift = root / r * (smoothed - r);
            entry.set_global(&pose.map(|j| j + shift));
        }
    }
    save(&records, &a.io.out)
}

fn load_energy(path: &Path) -> Result<Heatmap> {
    let file = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let map = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => Heatmap::read_pgm(file),
        _ => Heatmap::read_bin(file),
    };
    map.with_context(|| format!("reading {}", path.display()))
}

fn detect(a: DetectArgs) -> Result<()> {
    let cfg = DetectionConfig {
        presence_threshold: a.presence_threshold,
        margin: a.margin,
    };
    let cam = CameraIntrinsics {
        height_px: a.height,
        width_px: a.width,
        ..CameraIntrinsics::default()
    };
    cam.validate()?;
    let mut files: BTreeMap<i64, BTreeMap<Handedness, PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(&a.energy_dir).with_context(|| format!("listing {}", a.energy_dir.display()))? {
        let path = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some((frame, side)) = stem.split_once('_') else { continue };
        let side = match side {
            "left" => Handedness::Left,
            "right" => Handedness::Right,
            _ => continue,
        };
        let Ok(frame) = frame.parse::<i64>() else { continue };
        files.entry(frame).or_default().insert(side, path);
    }
    let mut records = Vec::with_capacity(files.len());
    for (frame, maps) in files {
        let mut rec = FrameRecord::new(frame, cam);
        for (side, path) in maps {
            let outcome = energy_bbox(&load_energy(&path)?, cam.height_px, cam.width_px, &cfg);
            if outcome.present {
                let entry = rec.hand_mut(side);
                *entry = HandEntry::present();
                entry.set_bbox(outcome.bbox);
            }
        }
        records.push(rec);
    }
    save(&records, &a.out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let gt = load(&a.gt)?;
    let pred = load(&a.pred)?;
    let report = evaluate_dataset(&gt, &pred, &EvalConfig::default())?;
    let mut out = open_out(&a.report)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    if let Some(dir) = a.curves_dir {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let groups = [
            ("left", &report.left.curves),
            ("right", &report.right.curves),
            ("average", &report.average_curves),
        ];
        for (which, curves) in groups {
            for (name, curve) in curves {
                let path = dir.join(format!("{which}_{name}.csv"));
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                curve.write_csv(BufWriter::new(file))?;
            }
        }
    }
    Ok(())
}

fn hand_prefix(rec: &FrameRecord, side: Handedness) -> String {
    match rec.sequence {
        Some(s) => format!("s{s}-{}_{}", rec.frame, side.name()),
        None => format!("{}_{}", rec.frame, side.name()),
    }
}

fn heatmap_encode(a: HeatmapEncodeArgs) -> Result<()> {
    let cfg = ZHeatmapConfig {
        resolution: a.resolution,
        sigma: a.sigma,
        ..ZHeatmapConfig::default()
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for rec in load(&a.input)? {
        for side in Handedness::BOTH {
            let entry = rec.hand(side);
            let (Some(p), Some(can)) = (entry.pose_2d(side), entry.canonical(side)) else { continue };
            let z = can.joints.map(|j| j.z);
            for (j, map) in encode_z_heatmaps(&p, &z, &cfg).iter().enumerate() {
                let ext = if a.pgm { "pgm" } else { "bin" };
                let path = a.out_dir.join(format!("{}_{j:02}.{ext}", hand_prefix(&rec, side)));
                let file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                if a.pgm {
                    map.write_pgm(file)?;
                } else {
                    map.write_bin(file)?;
                }
            }
        }
    }
    Ok(())
}

fn heatmap_decode(a: HeatmapDecodeArgs) -> Result<()> {
    let mut hands: BTreeMap<String, BTreeMap<usize, PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(&a.in_dir).with_context(|| format!("listing {}", a.in_dir.display()))? {
        let path = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some((hand, joint)) = stem.rsplit_once('_') else { continue };
        let Ok(joint) = joint.parse::<usize>() else { continue };
        if joint < NUM_JOINTS {
            hands.entry(hand.to_string()).or_default().insert(joint, path);
        }
    }
    let cfg = ZHeatmapConfig::default();
    let mut out = open_out(&a.out)?;
    for (hand, joints) in hands {
        if joints.len() != NUM_JOINTS {
            bail!("{hand}: found {} of {NUM_JOINTS} joint maps", joints.len());
        }
        let maps = joints.values().map(|p| load_energy(p)).collect::<Result<Vec<_>>>()?;
        let decoded = decode_heatmaps(&maps);
        let rc: Vec<Option<[f64; 2]>> = decoded.positions.iter().map(|p| p.map(|q| [q.row, q.col])).collect();
        let z: Vec<Option<f64>> = decoded
            .amplitudes
            .iter()
            .map(|&amp| cfg.depth_from_amplitude(amp))
            .collect();
        writeln!(out, "{}", json!({"hand": hand, "rc": rc, "z_can": z}))?;
    }
    out.flush()?;
    Ok(())
}

/// Appends `--key value` for every config entry whose flag is not already on
/// the command line.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    let Some(path) = args.get(pos + 1) else { return Ok(args) };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let table: toml::Table = text.parse().context("parsing config")?;
    let mut out = args.clone();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        if args.iter().any(|a| a.to_str().is_some_and(|s| s == flag || s.starts_with(&format!("{flag}=")))) {
            continue;
        }
        match value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => out.extend([flag.into(), s.into()]),
            toml::Value::Integer(_) | toml::Value::Float(_) => out.extend([flag.into(), value.to_string().into()]),
            other => bail!("config key {key}: unsupported value {other}"),
        }
    }
    Ok(out)
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    use globhand::{canonical, dataset, evaluate, heatmap, metrics, recon, synth, tracking};
    for cause in err.chain() {
        let kind = if cause.is::<dataset::DatasetError>() {
            "dataset"
        } else if cause.is::<evaluate::EvalError>() {
            "evaluation"
        } else if cause.is::<synth::SynthError>() {
            "synthesis"
        } else if cause.is::<recon::ReconError>() {
            "reconstruction"
        } else if cause.is::<canonical::CanonicalError>() {
            "canonicalization"
        } else if cause.is::<heatmap::HeatmapError>() {
            "heatmap"
        } else if cause.is::<metrics::MetricsError>() {
            "metrics"
        } else if cause.is::<tracking::TrackError>() {
            "tracking"
        } else if cause.is::<toml::de::Error>() {
            "config"
        } else if cause.is::<io::Error>() {
            "io"
        } else {
            continue;
        };
        return kind;
    }
    "runtime"
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Canonicalize(a) => canonicalize_cmd(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Perturb(a) => perturb_cmd(a),
        Command::Track(a) => track(a),
        Command::Detect(a) => detect(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Heatmap(HeatmapCommand::Encode(a)) => heatmap_encode(a),
        Command::Heatmap(HeatmapCommand::Decode(a)) => heatmap_decode(a),
    }
}

fn report(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return report("config", format!("{e:#}")),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            return report("usage", first.trim_start_matches("error: ").to_string());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(error_kind(&e), format!("{e:#}")),
    }
}
