//! Render a synthetic scene and track keypoints through its exact motion.

use clipchain::signal::{global_normalize, render_point_map, sample_keypoints, track_keypoints};
use clipchain::synth::{render_scene, Background, DepthDrift, SceneObject, Shape, SyntheticScene};

fn main() -> clipchain::Result<()> {
    let scene = SyntheticScene {
        width: 32,
        height: 32,
        n_frames: 8,
        background: Background {
            near: 6.0,
            gradient: [0.5, 2.0],
            intensity: 0.15,
        },
        objects: vec![SceneObject {
            shape: Shape::Circle { radius: 5.0 },
            position: [8.0, 16.0],
            velocity: [2.0, 0.0],
            depth: 2.0,
            intensity: 0.9,
        }],
        depth_drift: DepthDrift::None,
    };
    let rendered = render_scene(&scene)?;
    let depth = global_normalize(&rendered.depth)?;
    let points = sample_keypoints(32, 32, 16)?;
    let tracks = track_keypoints(&rendered.motion, &depth, 0, &points);

    for track in tracks.iter().filter(|t| t.positions[0].x != t.positions[7].x) {
        let xs: Vec<f64> = track.positions.iter().map(|p| p.x).collect();
        println!(
            "point {} moves: x = {xs:?}, depth = {:.3}",
            track.point_id, track.depth_values[0]
        );
    }
    let map = render_point_map(&tracks, 8, 32, 32);
    let lit = map.frame_slice(0).iter().filter(|&&v| v != 0.0).count();
    println!("point map frame 0 has {lit} lit pixels");
    Ok(())
}
