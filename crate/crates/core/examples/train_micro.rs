//! Train the control branches of a micro model and check the frozen base.

use clipchain::model::ParamGroup;
use clipchain::pipeline::{train, training_set, PipelineConfig};

fn main() -> clipchain::Result<()> {
    let mut cfg = PipelineConfig {
        clip_len: 5,
        train_scenes: 2,
        pretrain_steps: 100,
        train_steps: 100,
        ..PipelineConfig::default()
    };
    cfg.model.latent_shape = [5, 1, 16, 16];
    cfg.model.token_dim = 16;
    cfg.scene.n_frames = 5;
    cfg.degrade.warmup_steps = 60;

    let data = training_set(&cfg)?;
    let outcome = train(&cfg, &data)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (pre, ctl) = (&outcome.pretrain_losses, &outcome.losses);
    println!(
        "base pretraining loss {:.4} -> {:.4}",
        mean(&pre[..10]),
        mean(&pre[pre.len() - 10..])
    );
    println!(
        "control training loss {:.4} -> {:.4}",
        mean(&ctl[..10]),
        mean(&ctl[ctl.len() - 10..])
    );
    println!(
        "base hash {:016x}, control hash {:016x}",
        outcome.model.group_hash(ParamGroup::Base),
        outcome.model.group_hash(ParamGroup::Control)
    );
    Ok(())
}
