//! Feature- and data-level degradation of a dense control.

use clipchain::degrade::{self, DataDegradation, DegradeConfig};
use clipchain::rng;
use clipchain::VideoTensor;

fn main() -> clipchain::Result<()> {
    let cfg = DegradeConfig::default();
    let mut r = rng::seeded(11);

    let draws: Vec<f64> = (0..20_000).map(|_| degrade::draw_feature_scale(&cfg, &mut r)).collect();
    let degraded = draws.iter().filter(|&&s| s != 1.0).count();
    println!(
        "feature scale degraded in {:.2}% of draws (target {:.0}%)",
        100.0 * degraded as f64 / draws.len() as f64,
        100.0 * cfg.feature_prob
    );

    // A diagonal ramp shows the smoothing of each operation.
    let dense = VideoTensor::from_fn([1, 1, 32, 32], |_, _, y, x| ((x + y) % 8) as f64 / 7.0);
    let draw = degrade::draw_fusion(cfg.n_scales, &mut r);
    println!(
        "fusion excluded scale index {} and weights {:?}",
        draw.excluded, draw.weights
    );
    let fused = degrade::fuse_scales(&dense, &draw)?;
    let blurred = degrade::box_blur(&dense, 5)?;
    let both = degrade::degrade_with(&dense, DataDegradation::Both, &cfg, &mut r)?;
    for (name, v) in [
        ("input", &dense),
        ("fusion", &fused),
        ("blur 5x5", &blurred),
        ("both", &both),
    ] {
        let (lo, hi) = v.min_max();
        println!("{name:>9}: mean {:.4} range [{lo:.3}, {hi:.3}]", v.mean());
    }
    Ok(())
}
