//! Procedural scenes with exact depth and motion.
//!
//! Pixel `(x, y)` is sampled at its integer center. Objects translate with
//! constant velocity, so with integer velocities the motion field moves
//! every covered pixel exactly onto its position in the next frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::latent;
use crate::rng::{self, domain, Rng};
use crate::signal::{self, ControlPair, MotionField, Normalization};
use crate::tensor::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Circle { radius: f64 },
    Rectangle { half_width: f64, half_height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub position: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    pub depth: f64,
    pub intensity: f64,
}

impl SceneObject {
    pub fn center(&self, t: usize) -> (f64, f64) {
        let t = t as f64;
        (
            self.position[0] + t * self.velocity[0],
            self.position[1] + t * self.velocity[1],
        )
    }

    pub fn covers(&self, t: usize, x: f64, y: f64) -> bool {
        let (cx, cy) = self.center(t);
        let (dx, dy) = (x - cx, y - cy);
        match self.shape {
            Shape::Circle { radius } => dx * dx + dy * dy <= radius * radius,
            Shape::Rectangle {
                half_width,
                half_height,
            } => dx.abs() <= half_width && dy.abs() <= half_height,
        }
    }
}

/// Background depth `near + gradient · (x / W, y / H)` and a flat intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub near: f64,
    pub gradient: [f64; 2],
    pub intensity: f64,
}

impl Background {
    pub fn depth(&self, x: usize, y: usize, width: usize, height: usize) -> f64 {
        self.near + self.gradient[0] * x as f64 / width as f64 + self.gradient[1] * y as f64 / height as f64
    }
}

/// Additive depth offset per frame, applied to every pixel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthDrift {
    #[default]
    None,
    /// `rate · t`.
    Linear { rate: f64 },
    /// Explicit offsets; frames past the end reuse the last value.
    Table { offsets: Vec<f64> },
}

impl DepthDrift {
    pub fn offset(&self, t: usize) -> f64 {
        match self {
            DepthDrift::None => 0.0,
            DepthDrift::Linear { rate } => rate * t as f64,
            DepthDrift::Table { offsets } => offsets.get(t).or(offsets.last()).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub background: Background,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub depth_drift: DepthDrift,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return Err(Error::invalid(format!(
                "scene dimensions must be positive, got {}x{} with {} frames",
                self.width, self.height, self.n_frames
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        for (i, o) in self.objects.iter().enumerate() {
            let size_ok = match o.shape {
                Shape::Circle { radius } => radius > 0.0 && radius.is_finite(),
                Shape::Rectangle {
                    half_width,
                    half_height,
                } => half_width > 0.0 && half_height > 0.0 && finite(&[half_width, half_height]),
            };
            if !size_ok
                || !finite(&[
                    o.position[0],
                    o.position[1],
                    o.velocity[0],
                    o.velocity[1],
                    o.depth,
                    o.intensity,
                ])
            {
                return Err(Error::invalid(format!(
                    "object {i} has a non-positive size or non-finite field"
                )));
            }
        }
        Ok(())
    }

    /// Index of the object visible at pixel `(x, y)` in frame `t`, if any
    /// covering object is nearer than the background. Ties go to the later
    /// object.
    pub fn visible_object(&self, t: usize, x: usize, y: usize) -> Option<usize> {
        let bg = self.background.depth(x, y, self.width, self.height);
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if o.covers(t, x as f64, y as f64) && o.depth <= bg && best.is_none_or(|(_, d)| o.depth <= d) {
                best = Some((i, o.depth));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Depth before drift: the nearest of the background and every covering
    /// object.
    pub fn static_depth(&self, t: usize, x: usize, y: usize) -> f64 {
        let bg = self.background.depth(x, y, self.width, self.height);
        self.objects
            .iter()
            .filter(|o| o.covers(t, x as f64, y as f64))
            .fold(bg, |d, o| d.min(o.depth))
    }
}

/// Exact motion of a rendered scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMotion {
    scene: SyntheticScene,
}

impl MotionField for SceneMotion {
    fn displacement(&self, t: usize, x: usize, y: usize) -> (f64, f64) {
        match self.scene.visible_object(t, x, y) {
            Some(i) => {
                let v = self.scene.objects[i].velocity;
                (v[0], v[1])
            }
            None => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    /// `[T, 1, H, W]` intensities in `[0, 1]`.
    pub frames: VideoTensor,
    /// `[T, 1, H, W]` raw depth, drift included.
    pub depth: VideoTensor,
    pub motion: SceneMotion,
}

pub fn render_scene(scene: &SyntheticScene) -> Result<RenderedScene> {
    scene.validate()?;
    let shape = [scene.n_frames, 1, scene.height, scene.width];
    let frames = VideoTensor::from_fn(shape, |t, _, y, x| match scene.visible_object(t, x, y) {
        Some(i) => scene.objects[i].intensity,
        None => scene.background.intensity,
    });
    let depth = VideoTensor::from_fn(shape, |t, _, y, x| {
        scene.static_depth(t, x, y) + scene.depth_drift.offset(t)
    });
    frames.ensure_finite()?;
    depth.ensure_finite()?;
    Ok(RenderedScene {
        frames,
        depth,
        motion: SceneMotion { scene: scene.clone() },
    })
}

/// Knobs for random scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub max_objects: usize,
    /// Largest absolute per-axis integer velocity.
    pub max_speed: i64,
    /// Largest absolute linear drift rate; rates are drawn uniformly.
    pub max_drift: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            n_frames: 49,
            max_objects: 3,
            max_speed: 1,
            max_drift: 0.05,
        }
    }
}

/// How scenes are cut into training pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub scene: SceneConfig,
    pub clip_len: usize,
    pub overlap: usize,
    pub keypoints: usize,
    pub normalization: Normalization,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            clip_len: 49,
            overlap: 1,
            keypoints: 16,
            normalization: Normalization::Global,
        }
    }
}

fn between(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::uniform(rng)
}

/// A seeded random scene: a tilted depth plane with up to `max_objects`
/// moving shapes in front of it.
pub fn random_scene(cfg: &SceneConfig, rng: &mut Rng) -> SyntheticScene {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let near = between(rng, 4.0, 6.0);
    let background = Background {
        near,
        gradient: [between(rng, -1.0, 1.0), between(rng, 1.0, 3.0)],
        intensity: between(rng, 0.1, 0.3),
    };
    let n_objects = 1 + rng::below(rng, cfg.max_objects.max(1));
    let min_side = w.min(h);
    let objects = (0..n_objects)
        .map(|_| {
            let shape = if rng::below(rng, 2) == 0 {
                Shape::Circle {
                    radius: between(rng, 0.08, 0.2) * min_side,
                }
            } else {
                Shape::Rectangle {
                    half_width: between(rng, 0.06, 0.18) * w,
                    half_height: between(rng, 0.06, 0.18) * h,
                }
            };
            let speed = cfg.max_speed.max(0);
            let mut velocity = || (rng::below(rng, (2 * speed + 1) as usize) as i64 - speed) as f64;
            let velocity = [velocity(), velocity()];
            SceneObject {
                shape,
                position: [between(rng, 0.2, 0.8) * w, between(rng, 0.2, 0.8) * h],
                velocity,
                depth: between(rng, 1.0, near - 0.5),
                intensity: between(rng, 0.5, 1.0),
            }
        })
        .collect();
    SyntheticScene {
        width: cfg.width,
        height: cfg.height,
        n_frames: cfg.n_frames,
        background,
        objects,
        depth_drift: DepthDrift::Linear {
            rate: between(rng, -cfg.max_drift, cfg.max_drift),
        },
    }
}

/// Dense and sparse controls for every clip of a rendered scene: depth is
/// normalized over the whole video (or per clip), keypoints are resampled
/// at the start of each clip and tracked through it.
pub fn scene_controls(
    rendered: &RenderedScene,
    plan: &signal::ClipPlan,
    normalization: Normalization,
    keypoints: usize,
) -> Result<Vec<ControlPair>> {
    let windows = signal::control_windows(&rendered.depth, plan, normalization)?;
    let (h, w) = (rendered.depth.height(), rendered.depth.width());
    let points = signal::sample_keypoints(h, w, keypoints)?;
    plan.starts
        .iter()
        .zip(windows)
        .map(|(&start, dense)| {
            let tracks = signal::track_keypoints(&rendered.motion, &dense, start, &points);
            let sparse = signal::render_point_map(&tracks, dense.frames(), h, w);
            ControlPair::new(dense, sparse)
        })
        .collect()
}

/// One training example in pixel space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    /// `[clip_len, 1, H, W]` intensities.
    pub clip: VideoTensor,
    pub control: ControlPair,
}

impl TrainingPair {
    /// Latent clip, used as the diffusion target.
    pub fn latent(&self) -> Result<VideoTensor> {
        latent::encode_video(&self.clip)
    }

    /// Latent first frame, the anchor a clip is conditioned on.
    pub fn anchor(&self) -> Result<VideoTensor> {
        latent::encode_video(&self.clip.frame(0))
    }
}

/// Renders `n_scenes` random scenes (scene `i` keyed by `(seed, i)`) and
/// cuts each into aligned training pairs.
pub fn make_dataset(n_scenes: usize, seed: u64, cfg: &DatasetConfig) -> Result<Vec<TrainingPair>> {
    let plan = signal::plan_clips(cfg.scene.n_frames, cfg.clip_len, cfg.overlap)?;
    let mut out = Vec::new();
    for i in 0..n_scenes {
        let scene = random_scene(&cfg.scene, &mut rng::keyed(seed, domain::SCENE, i as u64));
        let rendered = render_scene(&scene)?;
        let controls = scene_controls(&rendered, &plan, cfg.normalization, cfg.keypoints)?;
        for ((start, len), control) in plan.windows().zip(controls) {
            out.push(TrainingPair {
                clip: rendered.frames.window(start, len),
                control,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(objects: Vec<SceneObject>, drift: DepthDrift) -> SyntheticScene {
        SyntheticScene {
            width: 24,
            height: 16,
            n_frames: 6,
            background: Background {
                near: 5.0,
                gradient: [1.0, 2.0],
                intensity: 0.2,
            },
            objects,
            depth_drift: drift,
        }
    }

    fn circle(x: f64, y: f64, vx: f64) -> SceneObject {
        SceneObject {
            shape: Shape::Circle { radius: 3.0 },
            position: [x, y],
            velocity: [vx, 0.0],
            depth: 2.0,
            intensity: 0.9,
        }
    }

    #[test]
    fn empty_scene_depth_is_static_background() {
        let r = render_scene(&plain(vec![], DepthDrift::None)).unwrap();
        for t in 0..6 {
            assert_eq!(r.depth.frame_slice(t), r.depth.frame_slice(0));
        }
        assert_eq!(r.depth.get(0, 0, 8, 12), 5.0 + 0.5 + 1.0);
    }

    #[test]
    fn circle_centroid_advances_by_velocity() {
        let r = render_scene(&plain(vec![circle(6.0, 8.0, 2.0)], DepthDrift::None)).unwrap();
        let centroid = |t: usize| {
            let (mut sx, mut n) = (0.0, 0.0);
            for y in 0..16 {
                for x in 0..24 {
                    if r.frames.get(t, 0, y, x) == 0.9 {
                        sx += x as f64;
                        n += 1.0;
                    }
                }
            }
            sx / n
        };
        for t in 0..6 {
            assert!((centroid(t) - (6.0 + 2.0 * t as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_drift_adds_to_background() {
        let s = plain(vec![], DepthDrift::Linear { rate: 0.25 });
        let r = render_scene(&s).unwrap();
        for t in 0..6 {
            assert_eq!(r.depth.get(t, 0, 3, 4), r.depth.get(0, 0, 3, 4) + 0.25 * t as f64);
        }
    }

    #[test]
    fn farther_object_stays_hidden() {
        let mut o = circle(12.0, 8.0, 0.0);
        o.depth = 100.0;
        let r = render_scene(&plain(vec![o], DepthDrift::None)).unwrap();
        assert_eq!(r.frames.get(0, 0, 8, 12), 0.2);
    }

    #[test]
    fn dataset_is_deterministic_and_counts_clips() {
        let cfg = DatasetConfig::default();
        let a = make_dataset(1, 3, &cfg).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, make_dataset(1, 3, &cfg).unwrap());
        let longer = DatasetConfig {
            scene: SceneConfig {
                n_frames: 17,
                ..SceneConfig::default()
            },
            clip_len: 9,
            ..cfg
        };
        assert_eq!(make_dataset(2, 3, &longer).unwrap().len(), 4);
    }
}
