//! The acceptance suite: twelve end-to-end criteria, one PASS/FAIL line
//! each. Runs without the libtest harness so the lines always print.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use clipchain::degrade::{self, DegradeConfig};
use clipchain::eval;
use clipchain::model::{init_control_branches, merge_branches, AdamW, ControlDiT, FusionVariant, ParamGroup};
use clipchain::noise::NoiseMode;
use clipchain::pipeline::{self, generate_long, train, training_set, PipelineConfig};
use clipchain::rng;
use clipchain::signal::{self, Normalization};
use clipchain::synth::{self, Background, DepthDrift, SceneConfig, SyntheticScene};
use clipchain::VideoTensor;
use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T>(r: clipchain::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("zero-init equivalence", zero_init_equivalence),
        ("global normalization oracle", global_normalization_oracle),
        ("clip arithmetic", clip_arithmetic),
        ("unified noise improves boundaries", unified_noise_trend),
        ("per-clip normalization discontinuity", normalization_discontinuity),
        ("degradation statistics", degradation_statistics),
        ("degradation structure", degradation_structure),
        ("gradient correctness", gradient_correctness),
        ("frozen base", frozen_base),
        ("half-copy round trip", half_copy_round_trip),
        ("end-to-end determinism", end_to_end_determinism),
        ("metric oracles", metric_oracles),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn zero_init_equivalence() -> Outcome {
    for i in 0..50u64 {
        let fusion = if i % 2 == 0 {
            FusionVariant::Unified
        } else {
            FusionVariant::Separate
        };
        let cfg = micro_config(fusion);
        let m = ok(ControlDiT::new(cfg.clone(), i))?;
        let inp = inputs(&cfg, &mut rng::seeded(i));
        let scale = [1.0, 0.3, 0.05][i as usize % 3];
        let controlled = ok(m.controlled_forward(&inp.x, inp.t, &inp.control, &inp.anchor, scale))?;
        let base = ok(m.base_forward(&inp.x, inp.t, &inp.anchor))?;
        let diff = controlled
            .data()
            .iter()
            .zip(base.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure!(diff == 0.0, "input {i}: max abs diff {diff:e}");
    }
    Ok("50 inputs, max abs diff 0".into())
}

/// Flatten, sort, take 1-based ranks `ceil(p n / 100)`, clamp and rescale.
fn normalize_oracle(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = |p: f64| ((p / 100.0 * n as f64).ceil() as usize).max(1);
    let (lo, hi) = (sorted[rank(5.0) - 1], sorted[rank(95.0) - 1]);
    if lo == hi {
        return vec![0.0; n];
    }
    values.iter().map(|&v| (v.max(lo).min(hi) - lo) / (hi - lo)).collect()
}

fn global_normalization_oracle() -> Outcome {
    let mut r = rng::seeded(2);
    for i in 0..200usize {
        let shape = match i {
            0 => [4, 1, 8, 8],
            1 => [2, 1, 250, 200],
            _ => [
                1 + rng::below(&mut r, 8),
                1,
                1 + rng::below(&mut r, 64),
                1 + rng::below(&mut r, 64),
            ],
        };
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match i % 4 {
            // Constant, tie-heavy integer, Gaussian, and wide-range inputs.
            0 => vec![3.25; n],
            1 => (0..n).map(|_| rng::below(&mut r, 5) as f64).collect(),
            2 => rng::normal_vec(&mut r, n),
            _ => (0..n).map(|_| 1e3 * rng::uniform(&mut r).powi(3)).collect(),
        };
        let video = ok(VideoTensor::new(shape, data))?;
        let got = ok(signal::global_normalize(&video))?;
        let want = normalize_oracle(video.data());
        ensure!(
            got.data() == want.as_slice(),
            "video {i} ({n} elements) differs from the oracle"
        );
    }
    Ok("200 videos up to 1e5 elements match exactly, constant case included".into())
}

fn clip_arithmetic() -> Outcome {
    let plan = ok(signal::plan_clips(481, 49, 1))?;
    ensure!(plan.n_clips() == 10, "481/49/1 gave {} clips", plan.n_clips());
    let clips: Vec<VideoTensor> = (0..10).map(|i| VideoTensor::filled([49, 1, 2, 2], i as f64)).collect();
    let video = ok(pipeline::stitch(&clips, 1))?;
    ensure!(video.frames() == 481, "stitch gave {} frames", video.frames());
    ensure!(signal::plan_clips(480, 49, 1).is_err(), "480/49/1 did not error");
    Ok("10 clips, 481 stitched frames, 480 rejected".into())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// The trained configuration: 9-frame clips on 32x32 scenes, a pretrained
/// and frozen base, then control training with degradation after warmup.
fn trend_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        clip_len: 9,
        pretrain_steps: 3000,
        train_steps: 300,
        sampling_steps: 16,
        ..PipelineConfig::default()
    };
    cfg.model.latent_shape = [9, 1, 16, 16];
    cfg.scene.n_frames = 9;
    cfg.degrade.warmup_steps = 200;
    cfg
}

fn unified_noise_trend() -> Outcome {
    let cfg = trend_config();
    let model = ok(train(&cfg, &ok(training_set(&cfg))?))?.model;
    let scene = synth::random_scene(
        &SceneConfig {
            n_frames: 33,
            ..SceneConfig::default()
        },
        &mut rng::seeded(99),
    );
    let depth = ok(synth::render_scene(&scene))?.depth;
    let policies = [
        (NoiseMode::Unified, 0.0),
        (NoiseMode::PerClip, 0.0),
        (NoiseMode::Perturbed, 0.05),
        (NoiseMode::Perturbed, 0.5),
        (NoiseMode::Perturbed, 1.0),
    ];
    let mut scores = vec![Vec::new(); policies.len()];
    for seed in 0..20u64 {
        for (k, &(mode, alpha)) in policies.iter().enumerate() {
            let mut run = cfg.clone();
            run.seed = seed;
            run.noise.mode = mode;
            run.noise.perturb_alpha = alpha;
            let (_, trace) = ok(generate_long(&model, &depth, &scene, &run))?;
            scores[k].push(mean(&trace.boundary_ssim));
        }
    }
    let wins = |a: usize, b: usize| (0..20).filter(|&s| scores[a][s] > scores[b][s]).count();
    let (unified, alpha) = (wins(0, 1), wins(2, 4));
    let means: Vec<String> = scores.iter().map(|s| format!("{:.3}", mean(s))).collect();
    let detail = format!(
        "unified beats per-clip {unified}/20, alpha 0.05 beats 1.0 {alpha}/20; mean boundary SSIM \
         unified/per-clip/a0.05/a0.5/a1.0 = {}",
        means.join("/")
    );
    ensure!(unified >= 18 && alpha >= 16, "{detail}");
    Ok(detail)
}

fn normalization_discontinuity() -> Outcome {
    let scene = SyntheticScene {
        width: 32,
        height: 32,
        n_frames: 33,
        background: Background {
            near: 4.0,
            gradient: [1.0, 3.0],
            intensity: 0.2,
        },
        objects: vec![],
        depth_drift: DepthDrift::Linear { rate: 0.15 },
    };
    let depth = ok(synth::render_scene(&scene))?.depth;
    let plan = ok(signal::plan_clips(33, 9, 1))?;
    let pixels: Vec<(usize, usize)> = (0..32).step_by(3).flat_map(|y| [(2, y), (16, y), (29, y)]).collect();
    let global = ok(pipeline::control_discontinuity(
        &depth,
        &plan,
        Normalization::Global,
        &pixels,
    ))?;
    let per_clip = ok(pipeline::control_discontinuity(
        &depth,
        &plan,
        Normalization::PerClip,
        &pixels,
    ))?;
    let detail = format!(
        "per-clip {per_clip:.4} vs global {global:.4} ({:.1}x)",
        per_clip / global
    );
    ensure!(per_clip >= 2.0 * global, "{detail}");
    Ok(detail)
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic against `cdf`.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn degradation_statistics() -> Outcome {
    const N: usize = 100_000;
    let cfg = DegradeConfig::default();
    let mut r = rng::seeded(6);
    let scales: Vec<f64> = (0..N).map(|_| degrade::draw_feature_scale(&cfg, &mut r)).collect();
    let degraded: Vec<f64> = scales.iter().copied().filter(|&s| s != 1.0).collect();
    let feature = degraded.len() as f64 / N as f64;
    let data = (0..N)
        .filter(|_| degrade::draw_data_degradation(&cfg, &mut r).is_some())
        .count() as f64
        / N as f64;
    let [lo, hi] = cfg.scale_range;
    ensure!(
        degraded.iter().all(|&s| (lo..=hi).contains(&s)),
        "a scale left [{lo}, {hi}]"
    );
    let n = degraded.len() as f64;
    let d = ks_statistic(degraded, |x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0));
    // Asymptotic 1% critical value of the KS distribution.
    let critical = 1.628 / n.sqrt();
    let detail = format!("feature {feature:.4}, data {data:.4}, KS D = {d:.4} (1% critical {critical:.4})");
    ensure!(
        (feature - 0.15).abs() <= 0.01 && (data - 0.10).abs() <= 0.01 && d < critical,
        "{detail}"
    );
    Ok(detail)
}

fn degradation_structure() -> Outcome {
    let cfg = DegradeConfig::default();
    let mut r = rng::seeded(7);
    let mut worst_sum = 0.0f64;
    for i in 0..100 {
        let draw = degrade::draw_fusion(cfg.n_scales, &mut r);
        worst_sum = worst_sum.max((draw.weights.iter().sum::<f64>() - 1.0).abs());
        ensure!(worst_sum <= 1e-9, "draw {i}: weights sum off by {worst_sum:e}");

        let shape = [2, 1, 32 + rng::below(&mut r, 9), 32 + rng::below(&mut r, 9)];
        let dense = uniform_video(shape, &mut r);
        let fused = ok(degrade::fuse_scales(&dense, &draw))?;
        let candidates: Vec<VideoTensor> = draw
            .scales
            .iter()
            .map(|&s| degrade::resample_through(&dense, s))
            .collect();
        for (p, &v) in fused.data().iter().enumerate() {
            let lo = candidates.iter().map(|c| c.data()[p]).fold(f64::INFINITY, f64::min);
            let hi = candidates.iter().map(|c| c.data()[p]).fold(f64::NEG_INFINITY, f64::max);
            ensure!(lo <= v && v <= hi, "input {i} pixel {p}: {v} outside [{lo}, {hi}]");
        }
        let (in_lo, in_hi) = dense.min_max();
        let (out_lo, out_hi) = fused.min_max();
        ensure!(
            in_lo <= out_lo && out_hi <= in_hi,
            "input {i}: fusion left the input range"
        );

        let kernel = cfg.blur_kernels[i % cfg.blur_kernels.len()];
        let blurred = ok(degrade::box_blur(&dense, kernel))?;
        let (b_lo, b_hi) = blurred.min_max();
        ensure!(in_lo <= b_lo && b_hi <= in_hi, "input {i}: blur left the input range");

        let c = rng::uniform(&mut r) * 10.0 - 5.0;
        let constant = VideoTensor::filled(shape, c);
        let cf = ok(degrade::fuse_scales(&constant, &draw))?;
        let cb = ok(degrade::box_blur(&constant, kernel))?;
        ensure!(
            cf == constant && cb == constant,
            "input {i}: constant {c} not preserved exactly"
        );
    }
    Ok(format!(
        "100 draws: max |sum w - 1| = {worst_sum:.1e}, convex per pixel, constants exact"
    ))
}

fn gradient_correctness() -> Outcome {
    let mut worst = (0.0, String::new());
    for instance in 0..20u64 {
        let fusion = if instance % 2 == 0 {
            FusionVariant::Unified
        } else {
            FusionVariant::Separate
        };
        let cfg = micro_config(fusion);
        let m = model_with_live_fusion(cfg.clone(), 100 + instance);
        let inp = inputs(&cfg, &mut rng::seeded(2000 + instance));
        let scale = [1.0, 0.5, 0.05][instance as usize % 3];
        let (rel, name) = worst_relative_error(&m, &inp, scale, 6);
        ensure!(rel < 1e-3, "instance {instance}: {name} relative error {rel:e}");
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    Ok(format!(
        "20 instances, token_dim 8, worst relative error {:.1e} ({})",
        worst.0, worst.1
    ))
}

fn micro_pipeline(steps: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        clip_len: 5,
        eval_frames: 13,
        train_scenes: 1,
        pretrain_steps: 0,
        train_steps: steps,
        sampling_steps: 4,
        ..PipelineConfig::default()
    };
    cfg.model.token_dim = 8;
    cfg.model.n_base_blocks = 2;
    cfg.model.n_control_blocks = 1;
    cfg.model.latent_shape = [5, 1, 16, 16];
    cfg.model.timesteps = 16;
    cfg.scene.n_frames = 5;
    cfg.degrade.warmup_steps = steps / 2;
    cfg
}

fn frozen_base() -> Outcome {
    let cfg = micro_pipeline(200);
    let data = ok(training_set(&cfg))?;
    let init = ok(ControlDiT::new(cfg.model.clone(), cfg.seed))?;
    let trained = ok(train(&cfg, &data))?.model;
    ensure!(
        trained.group_hash(ParamGroup::Base) == init.group_hash(ParamGroup::Base),
        "base weights changed during control training"
    );
    ensure!(
        trained.group_hash(ParamGroup::Control) != init.group_hash(ParamGroup::Control),
        "control weights never moved"
    );

    // Overfit one fixed (clip, timestep, noise) example.
    let pair = &data[0];
    let (x0, anchor) = (ok(pair.latent())?, ok(pair.anchor())?);
    let mut r = rng::seeded(9);
    let eps = normal_video(cfg.model.latent_shape, &mut r);
    let t = cfg.model.timesteps / 2;
    let mut model = init.clone();
    let mut opt = AdamW::new(0.0);
    let mut losses = Vec::with_capacity(200);
    for _ in 0..200 {
        let graph = ok(model.loss_graph(&x0, &pair.control, &anchor, t, &eps, 1.0))?;
        losses.push(graph.value());
        model.backward_and_step(&graph, &mut opt, cfg.learning_rate);
    }
    ensure!(
        model.group_hash(ParamGroup::Base) == init.group_hash(ParamGroup::Base),
        "base weights changed while overfitting"
    );
    let (first, last) = (mean(&losses[..50]), mean(&losses[150..]));
    let detail = format!("base hash unchanged after 200 steps; overfit trailing mean {first:.4} -> {last:.4}");
    ensure!(last < first, "{detail}");
    Ok(detail)
}

fn half_copy_round_trip() -> Outcome {
    let mut checked = 0;
    let configs = [
        micro_config(FusionVariant::Unified),
        micro_pipeline(1).model,
        clipchain::model::ModelConfig::default(),
    ];
    for (i, cfg) in configs.iter().enumerate() {
        let m = ok(ControlDiT::new(cfg.clone(), 10 + i as u64))?;
        let base = &m.weights().base_blocks;
        let (dense, sparse) = init_control_branches(base, cfg);
        ensure!(
            dense == m.weights().dense_branch && sparse == m.weights().sparse_branch,
            "config {i}: model branches are not the half copies of its base"
        );
        for (layer, (d, s)) in dense.iter().zip(&sparse).enumerate() {
            let merged = merge_branches(d, s);
            let bitwise = |a: &[f64], b: &[f64]| a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits()));
            let src = &base[layer];
            let same = [
                (&merged.q, &src.q),
                (&merged.k, &src.k),
                (&merged.v, &src.v),
                (&merged.o, &src.o),
                (&merged.up, &src.up),
                (&merged.down, &src.down),
            ]
            .iter()
            .all(|(a, b)| a.w.shape() == b.w.shape() && bitwise(&a.w.data, &b.w.data) && bitwise(&a.b.data, &b.b.data));
            ensure!(same, "config {i} layer {layer}: merge differs from the source block");
            checked += 1;
        }
    }
    Ok(format!("{checked} blocks rebuilt bitwise"))
}

const MICRO_TOML: &str = r#"
clip_len = 5
overlap = 1
eval_frames = 13
train_scenes = 2
pretrain_steps = 10
train_steps = 10
sampling_steps = 4

[degrade]
warmup_steps = 5

[model]
token_dim = 8
n_base_blocks = 2
n_control_blocks = 1
latent_shape = [5, 1, 16, 16]
timesteps = 16

[scene]
n_frames = 5
"#;

fn read_tree(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("micro.toml");
    std::fs::write(&config, MICRO_TOML).map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_clipchain"))
            .args(["ablate", "--seed", "7", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            status.status.success(),
            "ablate run {run} failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        trees.push(read_tree(&out)?);
    }
    ensure!(trees[0].len() > 2, "ablate wrote only {} files", trees[0].len());
    for ((na, a), (nb, b)) in trees[0].iter().zip(&trees[1]) {
        ensure!(na == nb && a == b, "ablate outputs differ at {na} / {nb}");
    }
    ensure!(
        trees[0].len() == trees[1].len(),
        "ablate runs wrote different file sets"
    );

    let cfg = ok(clipchain::io::config::parse::<PipelineConfig>(MICRO_TOML, "micro"))?;
    let model = ok(train(&cfg, &ok(training_set(&cfg))?))?.model;
    let scene = pipeline::eval_scene(&cfg);
    let depth = ok(synth::render_scene(&scene))?.depth;
    let (v1, t1) = ok(generate_long(&model, &depth, &scene, &cfg))?;
    let (v2, t2) = ok(generate_long(&model, &depth, &scene, &cfg))?;
    let bits = |v: &VideoTensor| v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure!(
        bits(&v1) == bits(&v2) && t1 == t2,
        "generate_long is not bitwise reproducible"
    );
    Ok(format!(
        "ablate --seed 7 twice: {} identical files; generate_long bitwise equal",
        trees[0].len()
    ))
}

fn ssim_oracle(a: &VideoTensor, b: &VideoTensor) -> f64 {
    let (h, w) = (a.height(), a.width());
    let (wh, ww) = (7.min(h), 7.min(w));
    let mut planes = 0.0;
    for t in 0..a.frames() {
        for c in 0..a.channels() {
            let mut total = 0.0;
            let mut count = 0.0;
            for y0 in 0..=h - wh {
                for x0 in 0..=w - ww {
                    let mut pa = Vec::new();
                    let mut pb = Vec::new();
                    for y in y0..y0 + wh {
                        for x in x0..x0 + ww {
                            pa.push(a.get(t, c, y, x));
                            pb.push(b.get(t, c, y, x));
                        }
                    }
                    let n = pa.len() as f64;
                    let ma = pa.iter().sum::<f64>() / n;
                    let mb = pb.iter().sum::<f64>() / n;
                    // Two-pass central moments, unlike the production one-pass sums.
                    let va = pa.iter().map(|p| (p - ma).powi(2)).sum::<f64>() / n;
                    let vb = pb.iter().map(|q| (q - mb).powi(2)).sum::<f64>() / n;
                    let cov = pa.iter().zip(&pb).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
                    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
                    total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1.0;
                }
            }
            planes += total / count;
        }
    }
    planes / (a.frames() * a.channels()) as f64
}

fn flicker_oracle(v: &VideoTensor) -> f64 {
    let [t, c, h, w] = v.shape();
    let mut total = 0.0;
    for i in 1..t {
        let mut s = 0.0;
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    s += (v.get(i, ch, y, x) - v.get(i - 1, ch, y, x)).abs();
                }
            }
        }
        total += s / (c * h * w) as f64;
    }
    total / (t - 1) as f64
}

fn rmse_oracle(a: &VideoTensor, b: &VideoTensor) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a.data()[i] - b.data()[i]).powi(2);
    }
    (s / a.len() as f64).sqrt()
}

fn metric_oracles() -> Outcome {
    let mut r = rng::seeded(12);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let shape = [
            2 + rng::below(&mut r, 3),
            1 + rng::below(&mut r, 2),
            3 + rng::below(&mut r, 14),
            3 + rng::below(&mut r, 14),
        ];
        let a = uniform_video(shape, &mut r);
        // Correlated partner so SSIM is not pinned near zero.
        let noise = uniform_video(shape, &mut r);
        let mix = rng::uniform(&mut r);
        let b = VideoTensor::from_fn(shape, |t, c, y, x| {
            (1.0 - mix) * a.get(t, c, y, x) + mix * noise.get(t, c, y, x)
        });
        let pairs = [
            (ok(eval::ssim(&a, &b))?, ssim_oracle(&a, &b)),
            (ok(eval::flicker(&a))?, flicker_oracle(&a)),
            (ok(eval::video_rmse(&a, &b))?, rmse_oracle(&a, &b)),
        ];
        for (k, (got, want)) in pairs.iter().enumerate() {
            let err = (got - want).abs();
            worst = worst.max(err);
            ensure!(err <= 1e-9, "input {i} metric {k}: {got} vs oracle {want}");
        }
        let self_ssim = ok(eval::ssim(&a, &a))?;
        ensure!(self_ssim == 1.0, "input {i}: ssim(a, a) = {self_ssim:.17}");
    }
    Ok(format!(
        "100 inputs, worst deviation {worst:.1e}, ssim(a, a) = 1 exactly"
    ))
}
