//! Training loop and autoregressive long-video generation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degrade::{self, DegradeConfig};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{latent, AdamW, ControlDiT, ModelConfig, ParamGrads, Trainable};
use crate::noise::{noise_rmse, NoiseMode, NoisePlan};
use crate::rng::{self, domain};
use crate::signal::{self, ClipPlan, ControlPair, Normalization};
use crate::synth::{self, DatasetConfig, SceneConfig, SyntheticScene, TrainingPair};
use crate::tensor::VideoTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSettings {
    pub mode: NoiseMode,
    pub perturb_alpha: f64,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            mode: NoiseMode::Unified,
            perturb_alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub clip_len: usize,
    pub overlap: usize,
    pub normalization: Normalization,
    /// Tracked keypoints per clip for the sparse control.
    pub keypoints: usize,
    pub noise: NoiseSettings,
    pub degrade: DegradeConfig,
    pub model: ModelConfig,
    pub scene: SceneConfig,
    /// Random scenes rendered for the training set.
    pub train_scenes: usize,
    /// Length of the long evaluation video.
    pub eval_frames: usize,
    /// Optional steps fitting the base model alone before it is frozen.
    pub pretrain_steps: usize,
    pub train_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub sampling_steps: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            clip_len: 49,
            overlap: 1,
            normalization: Normalization::Global,
            keypoints: 16,
            noise: NoiseSettings::default(),
            degrade: DegradeConfig::default(),
            model: ModelConfig::default(),
            scene: SceneConfig::default(),
            train_scenes: 4,
            eval_frames: 97,
            pretrain_steps: 1000,
            train_steps: 300,
            batch_size: 2,
            learning_rate: 3e-3,
            weight_decay: 0.0,
            sampling_steps: 16,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.degrade.validate()?;
        let [t, c, h, w] = self.model.latent_shape;
        if t != self.clip_len {
            return Err(Error::config(format!(
                "model.latent_shape has {t} frames but clip_len is {}",
                self.clip_len
            )));
        }
        if c != 1 || self.model.control_channels != 1 {
            return Err(Error::config("synthetic videos and controls are single-channel"));
        }
        if 2 * h != self.scene.height || 2 * w != self.scene.width {
            return Err(Error::config(format!(
                "latent {h}x{w} must be half of the {}x{} scene",
                self.scene.height, self.scene.width
            )));
        }
        if self.overlap >= self.clip_len {
            return Err(Error::config("overlap must be smaller than clip_len"));
        }
        if self.batch_size == 0 || self.sampling_steps == 0 || self.keypoints == 0 {
            return Err(Error::config(
                "batch_size, sampling_steps and keypoints must be positive",
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite())
            || self.weight_decay.is_nan()
            || self.weight_decay < 0.0
        {
            return Err(Error::config(
                "learning_rate and weight_decay must be finite and non-negative",
            ));
        }
        NoisePlan::new(
            self.noise.mode,
            self.seed,
            self.noise.perturb_alpha,
            self.model.latent_shape,
        )?;
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            scene: self.scene.clone(),
            clip_len: self.clip_len,
            overlap: self.overlap,
            keypoints: self.keypoints,
            normalization: self.normalization,
        }
    }

    pub fn noise_plan(&self) -> Result<NoisePlan> {
        NoisePlan::new(
            self.noise.mode,
            self.seed,
            self.noise.perturb_alpha,
            self.model.latent_shape,
        )
    }
}

/// The long evaluation scene for `config`: a random scene of
/// `eval_frames` frames keyed by the seed, independent of the training set.
pub fn eval_scene(config: &PipelineConfig) -> SyntheticScene {
    let scene_cfg = SceneConfig {
        n_frames: config.eval_frames,
        ..config.scene.clone()
    };
    synth::random_scene(&scene_cfg, &mut rng::keyed(config.seed, domain::EXPERIMENT, 0))
}

/// Training set for `config`: `train_scenes` random scenes keyed by the seed.
pub fn training_set(config: &PipelineConfig) -> Result<Vec<TrainingPair>> {
    synth::make_dataset(config.train_scenes, config.seed, &config.dataset_config())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ControlDiT,
    /// Mean batch loss per control-training step.
    pub losses: Vec<f64>,
    pub pretrain_losses: Vec<f64>,
}

/// One batch item with every random choice already made.
struct Item {
    x0: VideoTensor,
    anchor: VideoTensor,
    control: ControlPair,
    t: usize,
    eps: VideoTensor,
    fusion_scale: f64,
}

fn draw_items(
    model: &ControlDiT,
    data: &[(VideoTensor, VideoTensor, &TrainingPair)],
    config: &PipelineConfig,
    step: u64,
    stream: u64,
    degrade_on: bool,
) -> Result<Vec<Item>> {
    let mut r = rng::keyed(config.seed ^ stream, domain::TRAIN, step);
    let shape = model.config().latent_shape;
    (0..config.batch_size)
        .map(|_| {
            let (x0, anchor, pair) = &data[rng::below(&mut r, data.len())];
            let t = rng::below(&mut r, model.schedule().timesteps());
            let eps = VideoTensor::new(shape, rng::normal_vec(&mut r, shape.iter().product()))?;
            let mut fusion_scale = 1.0;
            let mut control = pair.control.clone();
            if degrade_on {
                fusion_scale = degrade::draw_feature_scale(&config.degrade, &mut r);
                if fusion_scale == 1.0 || config.degrade.allow_cooccur {
                    control.dense = degrade::apply_data_degradation(&control.dense, &config.degrade, &mut r)?;
                }
            }
            Ok(Item {
                x0: x0.clone(),
                anchor: anchor.clone(),
                control,
                t,
                eps,
                fusion_scale,
            })
        })
        .collect()
}

/// Losses and gradients for a batch, evaluated in parallel and reduced in
/// item order so results do not depend on thread scheduling.
fn batch_gradients(model: &ControlDiT, items: &[Item], with_control: bool) -> Result<(f64, ParamGrads)> {
    let parts: Vec<(f64, ParamGrads)> = items
        .par_iter()
        .map(|it| {
            let graph = if with_control {
                model.loss_graph(&it.x0, &it.control, &it.anchor, it.t, &it.eps, it.fusion_scale)?
            } else {
                model.base_loss_graph(&it.x0, &it.anchor, it.t, &it.eps)?
            };
            Ok((graph.value(), graph.gradients()))
        })
        .collect::<Result<_>>()?;
    let n = parts.len() as f64;
    let mut loss = 0.0;
    let mut grads = ParamGrads::default();
    for (l, g) in parts {
        loss += l;
        grads.accumulate(g);
    }
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// Fits the model to `dataset`. Each step draws a batch with replacement,
/// a timestep and noise per item, and (after warmup) a feature-level scale
/// and a data-level degradation of the dense control. With
/// `pretrain_steps > 0` the base is first fitted without controls, then
/// frozen.
pub fn train(config: &PipelineConfig, dataset: &[TrainingPair]) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = ControlDiT::new(config.model.clone(), config.seed)?;
    let pixel = model.config().pixel_shape();
    let control_shape = model.config().control_shape();
    let mut data = Vec::with_capacity(dataset.len());
    for (i, pair) in dataset.iter().enumerate() {
        if pair.clip.shape() != pixel || pair.control.dense.shape() != control_shape {
            return Err(Error::invalid(format!(
                "training pair {i}: clip {:?} / control {:?}, model expects {pixel:?} / {control_shape:?}",
                pair.clip.shape(),
                pair.control.dense.shape()
            )));
        }
        data.push((pair.latent()?, pair.anchor()?, pair));
    }

    let mut pretrain_losses = Vec::with_capacity(config.pretrain_steps);
    if config.pretrain_steps > 0 {
        model.set_trainable(Trainable::Base);
        let mut opt = AdamW::new(config.weight_decay);
        for step in 0..config.pretrain_steps {
            let items = draw_items(&model, &data, config, step as u64, 1 << 63, false)?;
            let (loss, grads) = batch_gradients(&model, &items, false)?;
            model.apply_gradients(&grads, &mut opt, config.learning_rate);
            pretrain_losses.push(loss);
        }
        model.set_trainable(Trainable::Control);
    }

    let mut opt = AdamW::new(config.weight_decay);
    let mut losses = Vec::with_capacity(config.train_steps);
    for step in 0..config.train_steps {
        let degrade_on = step >= config.degrade.warmup_steps;
        let items = draw_items(&model, &data, config, step as u64, 0, degrade_on)?;
        let (loss, grads) = batch_gradients(&model, &items, true)?;
        model.apply_gradients(&grads, &mut opt, config.learning_rate);
        losses.push(loss);
    }
    Ok(TrainOutcome {
        model,
        losses,
        pretrain_losses,
    })
}

/// Concatenates clips, dropping the first `overlap` frames of every clip
/// after the first (the earlier clip's copy of an overlapped frame wins).
pub fn stitch(clips: &[VideoTensor], overlap: usize) -> Result<VideoTensor> {
    let first = clips.first().ok_or_else(|| Error::invalid("nothing to stitch"))?;
    let [_, c, h, w] = first.shape();
    let mut parts = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let [t, ci, hi, wi] = clip.shape();
        if (ci, hi, wi) != (c, h, w) {
            return Err(Error::invalid(format!(
                "clip {i} has frames {ci}x{hi}x{wi}, expected {c}x{h}x{w}"
            )));
        }
        if t <= overlap {
            return Err(Error::invalid(format!(
                "clip {i} has {t} frames, not more than overlap {overlap}"
            )));
        }
        parts.push(if i == 0 {
            clip.clone()
        } else {
            clip.window(overlap, t - overlap)
        });
    }
    VideoTensor::concat_frames(&parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub plan: ClipPlan,
    /// Generated latent clips.
    pub clips: Vec<VideoTensor>,
    /// Latent anchor frame each clip was conditioned on.
    pub anchors: Vec<VideoTensor>,
    pub noise_rmse_to_first: Vec<f64>,
    pub boundary_ssim: Vec<f64>,
}

/// Controls for every clip of a long depth video: normalization per
/// `config`, keypoints resampled and tracked per clip.
pub fn long_controls(
    depth: &VideoTensor,
    scene: &SyntheticScene,
    config: &PipelineConfig,
) -> Result<(ClipPlan, Vec<ControlPair>)> {
    let plan = signal::plan_clips(depth.frames(), config.clip_len, config.overlap)?;
    let rendered = synth::render_scene(scene)?;
    if (depth.height(), depth.width()) != (scene.height, scene.width) {
        return Err(Error::invalid(format!(
            "depth video is {}x{}, scene is {}x{}",
            depth.height(),
            depth.width(),
            scene.height,
            scene.width
        )));
    }
    let windows = signal::control_windows(depth, &plan, config.normalization)?;
    let points = signal::sample_keypoints(scene.height, scene.width, config.keypoints)?;
    let controls = plan
        .starts
        .iter()
        .zip(windows)
        .map(|(&start, dense)| {
            let tracks = signal::track_keypoints(&rendered.motion, &dense, start, &points);
            let sparse = signal::render_point_map(&tracks, dense.frames(), scene.height, scene.width);
            ControlPair::new(dense, sparse)
        })
        .collect::<Result<_>>()?;
    Ok((plan, controls))
}

/// Generates a long pixel video clip by clip. Clip 0 is anchored on the
/// scene's true first frame and every later clip on the final generated
/// frame of its predecessor; clips are stitched earlier-wins.
pub fn generate_long(
    model: &ControlDiT,
    depth: &VideoTensor,
    scene: &SyntheticScene,
    config: &PipelineConfig,
) -> Result<(VideoTensor, GenerationTrace)> {
    config.validate()?;
    if model.config().latent_shape != config.model.latent_shape {
        return Err(Error::invalid(
            "model latent shape differs from the pipeline configuration",
        ));
    }
    let (plan, controls) = long_controls(depth, scene, config)?;
    let mut first = scene.clone();
    first.n_frames = 1;
    let mut anchor = latent::encode_video(&synth::render_scene(&first)?.frames)?;
    let noise = config.noise_plan()?;
    let base_noise = noise.noise_for_clip(0);
    let mut clips = Vec::with_capacity(plan.n_clips());
    let mut anchors = Vec::with_capacity(plan.n_clips());
    let mut rmse = Vec::with_capacity(plan.n_clips());
    for (i, control) in controls.iter().enumerate() {
        let eps = noise.noise_for_clip(i);
        rmse.push(noise_rmse(&eps, &base_noise)?);
        let clip = model.sample_clip(&eps, control, &anchor, config.sampling_steps)?;
        anchors.push(anchor);
        anchor = clip.frame(clip.frames() - 1);
        clips.push(clip);
    }
    let video = latent::decode_video(&stitch(&clips, plan.overlap)?);
    let boundary_ssim = eval::boundary_consistency(&video, &plan)?;
    Ok((
        video,
        GenerationTrace {
            plan,
            clips,
            anchors,
            noise_rmse_to_first: rmse,
            boundary_ssim,
        },
    ))
}

/// Mean absolute jump of the dense control at static pixels across every
/// clip boundary: the earlier window's value on its last owned frame
/// against the later window's value on the next frame, each as the
/// respective clip sees it.
pub fn control_discontinuity(
    depth: &VideoTensor,
    plan: &ClipPlan,
    mode: Normalization,
    pixels: &[(usize, usize)],
) -> Result<f64> {
    if pixels.is_empty() || plan.n_clips() < 2 {
        return Err(Error::invalid("need at least one pixel and one clip boundary"));
    }
    let windows = signal::control_windows(depth, plan, mode)?;
    let (h, w) = (depth.height(), depth.width());
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 1..plan.n_clips() {
        let (prev_start, start) = (plan.starts[i - 1], plan.starts[i]);
        let (a, b) = (start + plan.overlap - 1, start + plan.overlap);
        for &(x, y) in pixels {
            if x >= w || y >= h {
                return Err(Error::invalid(format!("pixel ({x}, {y}) outside {h}x{w} frame")));
            }
            let before = windows[i - 1].get(a - prev_start, 0, y, x);
            let after = windows[i].get(b - start, 0, y, x);
            total += (after - before).abs();
            n += 1;
        }
    }
    Ok(total / n as f64)
}
