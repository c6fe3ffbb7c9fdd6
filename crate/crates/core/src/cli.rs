//! Command-line driver. Every subcommand is a pure function of its flags,
//! the configuration file and its input files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::degrade::DegradeConfig;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::io::{checkpoint, config as cfgio, lvtf, plot, write_bytes};
use crate::model::ControlDiT;
use crate::noise::NoiseMode;
use crate::pipeline::{self, PipelineConfig};
use crate::signal::{self, Normalization};
use crate::synth::{self, SyntheticScene};
use crate::tensor::VideoTensor;

#[derive(Debug, Parser)]
#[command(
    name = "clipchain",
    version,
    about = "Controllable long-video diffusion at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic training set and the long evaluation scene.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the control branches (after optional base pretraining).
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a long video from a depth control video.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Raw depth video (LVTF, [T, 1, H, W]).
        #[arg(long)]
        depth: PathBuf,
        /// Scene file supplying motion and the first frame; defaults to the
        /// evaluation scene for the seed.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Model checkpoint; defaults to a freshly initialized model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Normalization × noise × degradation matrix, one report per cell.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Metrics of an existing video against a reference.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// SVG plots from an ablation summary or a single report.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        report: PathBuf,
    },
}

/// Parses `argv` (program name first) and runs it. Returns the process exit
/// code: 0 on success, 2 on usage errors, 1 on operational errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => cfgio::load_pipeline_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let value = serde_json::to_value(value)?;
    write_bytes(path, (serde_json::to_string_pretty(&value)? + "\n").as_bytes())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData { common } => gen_data(&common),
        Command::Train { common } => train(&common),
        Command::Infer {
            common,
            depth,
            scene,
            checkpoint,
        } => infer(&common, &depth, scene.as_deref(), checkpoint.as_deref()),
        Command::Ablate { common } => ablate(&common),
        Command::Eval {
            common,
            video,
            reference,
        } => eval(&common, &video, &reference),
        Command::Plot { common, report } => plot_report(&common, &report),
    }
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let out = &common.out_dir;
    let data = pipeline::training_set(&cfg)?;
    let mut entries = Vec::with_capacity(data.len());
    for (i, pair) in data.iter().enumerate() {
        let stem = format!("pair_{i:04}");
        let files = [
            ("clip", &pair.clip),
            ("dense", &pair.control.dense),
            ("sparse", &pair.control.sparse),
        ];
        for (kind, video) in files {
            lvtf::write_video(
                &out.join("dataset").join(format!("{stem}_{kind}.lvtf")),
                video,
                lvtf::Dtype::F32,
            )?;
        }
        entries.push(json!({
            "index": i,
            "clip": format!("{stem}_clip.lvtf"),
            "dense": format!("{stem}_dense.lvtf"),
            "sparse": format!("{stem}_sparse.lvtf"),
            "frames": pair.clip.frames(),
        }));
    }
    write_json(
        &out.join("dataset").join("manifest.json"),
        &json!({ "seed": cfg.seed, "pairs": entries, "config": cfg }),
    )?;
    let scene = pipeline::eval_scene(&cfg);
    let rendered = synth::render_scene(&scene)?;
    write_bytes(&out.join("scene.toml"), cfgio::to_toml(&scene)?.as_bytes())?;
    lvtf::write_video(&out.join("frames.lvtf"), &rendered.frames, lvtf::Dtype::F32)?;
    lvtf::write_video(&out.join("depth.lvtf"), &rendered.depth, lvtf::Dtype::F32)?;
    println!(
        "wrote {} training pairs and a {}-frame scene to {}",
        data.len(),
        scene.n_frames,
        out.display()
    );
    Ok(())
}

fn train(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let data = pipeline::training_set(&cfg)?;
    let outcome = pipeline::train(&cfg, &data)?;
    let out = &common.out_dir;
    checkpoint::save(&out.join("model.lvck"), &outcome.model)?;
    write_json(
        &out.join("losses.json"),
        &json!({ "pretrain": outcome.pretrain_losses, "train": outcome.losses }),
    )?;
    println!(
        "trained {} steps (final loss {:.4}); checkpoint at {}",
        outcome.losses.len(),
        outcome.losses.last().copied().unwrap_or(f64::NAN),
        out.join("model.lvck").display()
    );
    Ok(())
}

/// Generates and scores one long video.
fn run_generation(
    model: &ControlDiT,
    depth: &VideoTensor,
    scene: &SyntheticScene,
    cfg: &PipelineConfig,
) -> Result<(VideoTensor, pipeline::GenerationTrace, MetricsReport)> {
    let (video, trace) = pipeline::generate_long(model, depth, scene, cfg)?;
    let mut reference_scene = scene.clone();
    reference_scene.n_frames = depth.frames();
    let reference = synth::render_scene(&reference_scene)?.frames;
    let report = MetricsReport::evaluate(
        &video,
        &reference,
        &trace.plan,
        &trace.noise_rmse_to_first,
        serde_json::to_value(cfg)?,
    )?;
    Ok((video, trace, report))
}

fn infer(common: &Common, depth: &Path, scene: Option<&Path>, ckpt: Option<&Path>) -> Result<()> {
    let cfg = load_config(common)?;
    let depth = lvtf::read_video(depth)?;
    // Fail on an uncoverable length before any expensive work.
    signal::plan_clips(depth.frames(), cfg.clip_len, cfg.overlap)?;
    let scene = match scene {
        Some(path) => cfgio::load_scene(path)?,
        None => pipeline::eval_scene(&cfg),
    };
    let model = match ckpt {
        Some(path) => checkpoint::load(path)?,
        None => ControlDiT::new(cfg.model.clone(), cfg.seed)?,
    };
    let (video, trace, report) = run_generation(&model, &depth, &scene, &cfg)?;
    let out = &common.out_dir;
    lvtf::write_video(&out.join("video.lvtf"), &video, lvtf::Dtype::F32)?;
    write_json(&out.join("trace.json"), &trace)?;
    write_bytes(&out.join("report.json"), report.to_json()?.as_bytes())?;
    write_bytes(&out.join("report.csv"), report.to_csv()?.as_bytes())?;
    println!(
        "generated {} frames in {} clips; mean boundary SSIM {:.4}",
        video.frames(),
        trace.plan.n_clips(),
        report.global.mean_boundary_ssim
    );
    Ok(())
}

/// Alpha used by the perturbed-noise cell when the config leaves it at 0.
pub const ABLATION_PERTURB_ALPHA: f64 = 0.5;

#[derive(Debug, Serialize)]
struct Cell {
    normalization: Normalization,
    noise: NoiseMode,
    degradation: bool,
    report: MetricsReport,
}

fn ablate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let scene = pipeline::eval_scene(&cfg);
    let depth = synth::render_scene(&scene)?.depth;
    let out = &common.out_dir;
    let mut cells = Vec::new();
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "normalization",
        "noise",
        "degradation",
        "mean_ssim",
        "mean_boundary_ssim",
        "flicker",
        "video_rmse",
    ])?;
    for normalization in [Normalization::Global, Normalization::PerClip] {
        for degradation in [true, false] {
            let mut train_cfg = cfg.clone();
            train_cfg.normalization = normalization;
            if !degradation {
                train_cfg.degrade = DegradeConfig {
                    warmup_steps: cfg.degrade.warmup_steps,
                    ..DegradeConfig::disabled()
                };
            }
            let data = pipeline::training_set(&train_cfg)?;
            let model = pipeline::train(&train_cfg, &data)?.model;
            for noise in [NoiseMode::Unified, NoiseMode::PerClip, NoiseMode::Perturbed] {
                let mut cell_cfg = train_cfg.clone();
                cell_cfg.noise.mode = noise;
                if noise == NoiseMode::Perturbed && cell_cfg.noise.perturb_alpha == 0.0 {
                    cell_cfg.noise.perturb_alpha = ABLATION_PERTURB_ALPHA;
                }
                let (_, _, report) = run_generation(&model, &depth, &scene, &cell_cfg)?;
                let name = format!(
                    "{}_{}_{}",
                    normalization.as_str(),
                    noise.as_str(),
                    if degradation { "degrade" } else { "clean" }
                );
                write_bytes(
                    &out.join("ablate").join(format!("{name}.json")),
                    report.to_json()?.as_bytes(),
                )?;
                let g = &report.global;
                csv.write_record([
                    normalization.as_str().to_string(),
                    noise.as_str().to_string(),
                    degradation.to_string(),
                    g.mean_ssim.to_string(),
                    g.mean_boundary_ssim.to_string(),
                    g.flicker.to_string(),
                    g.video_rmse.to_string(),
                ])?;
                println!(
                    "{name}: boundary SSIM {:.4}, flicker {:.4}",
                    g.mean_boundary_ssim, g.flicker
                );
                cells.push(Cell {
                    normalization,
                    noise,
                    degradation,
                    report,
                });
            }
        }
    }
    write_json(&out.join("ablate.json"), &json!({ "seed": cfg.seed, "cells": cells }))?;
    let bytes = csv
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    write_bytes(&out.join("ablate.csv"), &bytes)?;
    Ok(())
}

fn eval(common: &Common, video: &Path, reference: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let video = lvtf::read_video(video)?;
    let reference = lvtf::read_video(reference)?;
    let plan = signal::plan_clips(video.frames(), cfg.clip_len, cfg.overlap)?;
    // Noise is unknown for an arbitrary video; record zeros.
    let report = MetricsReport::evaluate(
        &video,
        &reference,
        &plan,
        &vec![0.0; plan.n_clips()],
        serde_json::to_value(&cfg)?,
    )?;
    write_bytes(&common.out_dir.join("report.json"), report.to_json()?.as_bytes())?;
    write_bytes(&common.out_dir.join("report.csv"), report.to_csv()?.as_bytes())?;
    println!(
        "mean SSIM {:.4}, boundary SSIM {:.4}, flicker {:.4}, RMSE {:.4}",
        report.global.mean_ssim, report.global.mean_boundary_ssim, report.global.flicker, report.global.video_rmse
    );
    Ok(())
}

fn plot_report(common: &Common, path: &Path) -> Result<()> {
    let value: serde_json::Value = serde_json::from_str(&crate::io::read_text(path)?)?;
    let labelled: Vec<(String, MetricsReport)> = match value.get("cells").and_then(|c| c.as_array()) {
        Some(cells) => cells
            .iter()
            .map(|c| {
                let label = format!(
                    "{}/{}/{}",
                    c["normalization"].as_str().unwrap_or("?"),
                    c["noise"].as_str().unwrap_or("?"),
                    if c["degradation"].as_bool().unwrap_or(false) {
                        "deg"
                    } else {
                        "clean"
                    }
                );
                Ok((label, serde_json::from_value(c["report"].clone())?))
            })
            .collect::<Result<_>>()?,
        None => vec![("report".to_string(), serde_json::from_value(value)?)],
    };
    let curves: Vec<(String, Vec<f64>)> = labelled
        .iter()
        .map(|(l, r)| {
            (
                l.clone(),
                r.per_boundary.iter().map(|b| b.ssim_across_boundary).collect(),
            )
        })
        .collect();
    let points: Vec<(String, f64, f64)> = labelled
        .iter()
        .map(|(l, r)| {
            let n = r.per_clip.len().max(1) as f64;
            let rmse = r.per_clip.iter().map(|c| c.noise_rmse_to_first).sum::<f64>() / n;
            (l.clone(), rmse, r.global.mean_boundary_ssim)
        })
        .collect();
    let out = &common.out_dir;
    write_bytes(
        &out.join("ssim_curves.svg"),
        plot::line_plot("Boundary SSIM per clip transition", "clip boundary", "SSIM", &curves).as_bytes(),
    )?;
    write_bytes(
        &out.join("rmse_vs_ssim.svg"),
        plot::scatter_plot(
            "Initial-noise RMSE vs boundary SSIM",
            "noise RMSE to first clip",
            "mean boundary SSIM",
            &points,
        )
        .as_bytes(),
    )?;
    println!("wrote {} curves to {}", curves.len(), out.display());
    Ok(())
}
