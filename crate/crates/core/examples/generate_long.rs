//! Long-video generation under the three noise policies.
//!
//! A small model is trained, then the same control video is generated
//! with unified, perturbed and per-clip initial noise. Pass a larger step
//! count as the first argument for a better-trained model.

use clipchain::noise::NoiseMode;
use clipchain::pipeline::{eval_scene, generate_long, train, training_set, PipelineConfig};
use clipchain::synth::render_scene;

fn main() -> clipchain::Result<()> {
    let pretrain: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let mut cfg = PipelineConfig {
        clip_len: 9,
        eval_frames: 33,
        pretrain_steps: pretrain,
        train_steps: 100,
        ..PipelineConfig::default()
    };
    cfg.model.latent_shape = [9, 1, 16, 16];
    cfg.scene.n_frames = 9;
    cfg.degrade.warmup_steps = 70;

    let model = train(&cfg, &training_set(&cfg)?)?.model;
    let scene = eval_scene(&cfg);
    let depth = render_scene(&scene)?.depth;
    for (mode, alpha) in [
        (NoiseMode::Unified, 0.0),
        (NoiseMode::Perturbed, 0.5),
        (NoiseMode::PerClip, 0.0),
    ] {
        let mut run = cfg.clone();
        run.noise.mode = mode;
        run.noise.perturb_alpha = alpha;
        let (video, trace) = generate_long(&model, &depth, &scene, &run)?;
        let ssim: Vec<String> = trace.boundary_ssim.iter().map(|s| format!("{s:.3}")).collect();
        println!(
            "{:>9}: {} frames, boundary SSIM [{}]",
            mode.as_str(),
            video.frames(),
            ssim.join(", ")
        );
    }
    Ok(())
}
