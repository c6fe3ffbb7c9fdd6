//! Unified, per-clip and perturbed initial noise, measured by RMSE to the
//! first clip's noise.

use clipchain::noise::{noise_rmse, NoiseMode, NoisePlan};

fn main() -> clipchain::Result<()> {
    let shape = [13, 1, 16, 16];
    let policies = [
        (NoiseMode::Unified, 0.0),
        (NoiseMode::Perturbed, 0.05),
        (NoiseMode::Perturbed, 0.5),
        (NoiseMode::Perturbed, 1.0),
        (NoiseMode::PerClip, 0.0),
    ];
    for (mode, alpha) in policies {
        let plan = NoisePlan::new(mode, 42, alpha, shape)?;
        let first = plan.noise_for_clip(0);
        let rmse: Vec<String> = (1..5)
            .map(|i| noise_rmse(&plan.noise_for_clip(i), &first).map(|r| format!("{r:.3}")))
            .collect::<clipchain::Result<_>>()?;
        println!(
            "{:>9} alpha={alpha:<4} rmse to clip 0: {}",
            mode.as_str(),
            rmse.join(" ")
        );
    }
    Ok(())
}
