//! Clip arithmetic for long videos and earlier-wins stitching.

use clipchain::pipeline::stitch;
use clipchain::signal::plan_clips;
use clipchain::VideoTensor;

fn main() -> clipchain::Result<()> {
    let plan = plan_clips(481, 49, 1)?;
    println!("481 frames -> {} clips starting at {:?}", plan.n_clips(), plan.starts);

    match plan_clips(480, 49, 1) {
        Ok(_) => unreachable!(),
        Err(e) => println!("480 frames -> {e}"),
    }

    // Each clip is filled with its own index so the seams are visible.
    let clips: Vec<VideoTensor> = (0..plan.n_clips())
        .map(|i| VideoTensor::filled([49, 1, 2, 2], i as f64))
        .collect();
    let video = stitch(&clips, plan.overlap)?;
    println!("stitched length {} (plan says {})", video.frames(), plan.stitched_len());
    for &s in &plan.starts[1..3] {
        println!("frame {s} comes from clip {}", video.get(s, 0, 0, 0));
    }
    Ok(())
}
