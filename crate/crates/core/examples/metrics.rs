//! SSIM, boundary consistency and flicker on a video with an injected cut.

use clipchain::eval::{boundary_consistency, flicker, ssim, MetricsReport};
use clipchain::signal::plan_clips;
use clipchain::VideoTensor;

fn main() -> clipchain::Result<()> {
    let plan = plan_clips(25, 9, 1)?;
    // A slowly sliding stripe pattern, with a hard cut after frame 16.
    let video = VideoTensor::from_fn([25, 1, 16, 16], |t, _, y, x| {
        let shift = if t > 16 { t + 3 } else { t };
        (((x + y + shift) / 3) % 2) as f64
    });
    println!(
        "ssim(frame 0, frame 1) = {:.4}",
        ssim(&video.frame(0), &video.frame(1))?
    );
    println!("boundary SSIM: {:?}", boundary_consistency(&video, &plan)?);
    println!("flicker: {:.4}", flicker(&video)?);

    let report = MetricsReport::evaluate(&video, &video, &plan, &[0.0; 3], serde_json::json!({"demo": true}))?;
    print!("{}", report.to_csv()?);
    Ok(())
}
