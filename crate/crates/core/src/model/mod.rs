//! Toy multi-modal control transformer.
//!
//! A frozen stack of base transformer blocks denoises latent tokens. The
//! first `n_control_blocks` blocks are paired with two trainable half-width
//! branches, one reading the dense (depth) control and one the sparse (point
//! map) control. After each paired block the branch features are injected
//! through a zero-initialized linear layer:
//!
//! ```text
//! z[l] = F[l](z[l-1]) + phi[l](s · F_dense[l](c_dense[l-1]) + F_sparse[l](c_sparse[l-1]))
//! ```
//!
//! where `s` is the fusion scale used for feature-level degradation. Branch
//! streams start from their parity half of the embedded latent tokens plus
//! their own control tokenizer.

mod config;
pub mod latent;
mod optim;
mod schedule;
pub mod weights;

pub use config::{FusionVariant, ModelConfig, Trainable};
pub use optim::{AdamW, ParamGrads};
pub use schedule::{add_noise, DiffusionSchedule};
pub use weights::{init_control_branches, merge_branches, Block, Fusion, Linear, ParamGroup, Weights};

use fnv::FnvHasher;
use std::hash::Hasher;

use crate::autograd::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::signal::ControlPair;
use crate::tensor::VideoTensor;

/// Anything that predicts the noise in a noisy latent clip.
pub trait NoisePredictor {
    fn predict_noise(
        &self,
        x_t: &VideoTensor,
        t: usize,
        control: &ControlPair,
        anchor: &VideoTensor,
        fusion_scale: f64,
    ) -> Result<VideoTensor>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDiT {
    config: ModelConfig,
    schedule: DiffusionSchedule,
    weights: Weights<Mat>,
    positions: Mat,
    parity_select: [Mat; 2],
}

/// A recorded forward pass whose scalar output is a diffusion loss.
pub struct LossGraph {
    pub tape: Tape,
    pub loss: Var,
    pub bound: Weights<Var>,
}

impl LossGraph {
    pub fn value(&self) -> f64 {
        self.tape.value(self.loss).data[0]
    }

    /// Gradients of the loss, one slot per parameter in canonical order.
    pub fn gradients(&self) -> ParamGrads {
        let mut grads = self.tape.backward(self.loss);
        ParamGrads::new(self.bound.named().into_iter().map(|(_, _, v)| grads.take(*v)).collect())
    }
}

struct Streams {
    z: Var,
    dense: Var,
    sparse: Var,
}

fn selection(half: usize, parity: usize) -> Mat {
    Mat::from_fn(half, 2 * half, |r, c| if c == 2 * r + parity { 1.0 } else { 0.0 })
}

impl ControlDiT {
    /// Seeded random base, control branches half-copied from the base, and
    /// all fusion layers exactly zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::keyed(seed, domain::MODEL_INIT, 0);
        let weights = weights::init_weights(&config, &mut rng);
        Self::from_weights(config, weights)
    }

    pub fn from_weights(config: ModelConfig, weights: Weights<Mat>) -> Result<Self> {
        config.validate()?;
        let expected = weights::init_weights(&config, &mut rng::seeded(0));
        let shapes = |w: &Weights<Mat>| -> Vec<(String, (usize, usize))> {
            w.named().into_iter().map(|(n, _, m)| (n, m.shape())).collect()
        };
        if shapes(&expected) != shapes(&weights) {
            return Err(Error::config("weights do not match the model configuration"));
        }
        let [t, _, h, w] = config.latent_shape;
        let positions = latent::position_codes(t, h / config.patch, w / config.patch, config.token_dim);
        let half = config.half_dim();
        Ok(Self {
            schedule: DiffusionSchedule::linear(config.timesteps),
            parity_select: [selection(half, 0), selection(half, 1)],
            config,
            weights,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn weights(&self) -> &Weights<Mat> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights<Mat> {
        &mut self.weights
    }

    pub fn set_trainable(&mut self, trainable: Trainable) {
        self.config.trainable = trainable;
    }

    pub fn is_trainable(&self, group: ParamGroup) -> bool {
        matches!(
            (self.config.trainable, group),
            (Trainable::Control, ParamGroup::Control) | (Trainable::Base, ParamGroup::Base)
        )
    }

    /// FNV-1a over the little-endian bytes of every parameter in `group`.
    pub fn group_hash(&self, group: ParamGroup) -> u64 {
        let mut h = FnvHasher::default();
        for (name, g, m) in self.weights.named() {
            if g == group {
                h.write(name.as_bytes());
                for v in &m.data {
                    h.write(&v.to_le_bytes());
                }
            }
        }
        h.finish()
    }

    fn check_inputs(&self, x_t: &VideoTensor, control: Option<&ControlPair>, anchor: &VideoTensor) -> Result<()> {
        let cfg = &self.config;
        if x_t.shape() != cfg.latent_shape {
            return Err(Error::invalid(format!(
                "latent shape {:?}, model expects {:?}",
                x_t.shape(),
                cfg.latent_shape
            )));
        }
        let [_, c, h, w] = cfg.latent_shape;
        if anchor.shape() != [1, c, h, w] {
            return Err(Error::invalid(format!(
                "anchor frame shape {:?}, expected {:?}",
                anchor.shape(),
                [1, c, h, w]
            )));
        }
        if let Some(ctrl) = control {
            for (name, v) in [("dense", &ctrl.dense), ("sparse", &ctrl.sparse)] {
                if v.shape() != cfg.control_shape() {
                    return Err(Error::invalid(format!(
                        "{name} control shape {:?}, expected {:?}",
                        v.shape(),
                        cfg.control_shape()
                    )));
                }
            }
        }
        Ok(())
    }

    fn bind(&self, tape: &mut Tape, with_grad: bool) -> Weights<Var> {
        self.weights
            .map(|_, group, m| tape.leaf(m.clone(), with_grad && self.is_trainable(group)))
    }

    fn block(&self, tape: &mut Tape, x: Var, b: &Block<Var>) -> Var {
        let heads = self.config.n_heads;
        let h = tape.layer_norm(x);
        let q = tape.linear(h, b.q.w, b.q.b);
        let k = tape.linear(h, b.k.w, b.k.b);
        let v = tape.linear(h, b.v.w, b.v.b);
        let inner = tape.value(q).cols;
        let dh = inner / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let outs: Vec<Var> = (0..heads)
            .map(|i| {
                let qh = tape.slice_cols(q, i * dh, dh);
                let kh = tape.slice_cols(k, i * dh, dh);
                let vh = tape.slice_cols(v, i * dh, dh);
                let s = tape.matmul_t(qh, kh);
                let s = tape.scale(s, scale);
                let p = tape.softmax_rows(s);
                tape.matmul(p, vh)
            })
            .collect();
        let a = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)
        };
        let a = tape.linear(a, b.o.w, b.o.b);
        let x = tape.add(x, a);
        let h = tape.layer_norm(x);
        let u = tape.linear(h, b.up.w, b.up.b);
        let u = tape.gelu(u);
        let m = tape.linear(u, b.down.w, b.down.b);
        tape.add(x, m)
    }

    fn fuse(&self, tape: &mut Tape, fusion: &Fusion<Var>, dense: Var, sparse: Var, scale: f64) -> Var {
        let scaled = tape.scale(dense, scale);
        match fusion {
            Fusion::Unified(phi) => {
                let sum = tape.add(scaled, sparse);
                tape.linear(sum, phi.w, phi.b)
            }
            Fusion::Separate { dense: pd, sparse: ps } => {
                let a = tape.linear(scaled, pd.w, pd.b);
                let b = tape.linear(sparse, ps.w, ps.b);
                tape.add(a, b)
            }
        }
    }

    /// Latent token embedding with position, timestep and anchor codes.
    fn embed(&self, tape: &mut Tape, w: &Weights<Var>, x_t: &VideoTensor, t: usize, anchor: &VideoTensor) -> Var {
        let p = self.config.patch;
        let tokens = tape.constant(latent::patchify(x_t, p));
        let z = tape.linear(tokens, w.latent_embed.w, w.latent_embed.b);
        let pos = tape.constant(self.positions.clone());
        let z = tape.add(z, pos);
        let temb = tape.constant(latent::timestep_embedding(t, self.config.token_dim));
        let z = tape.add_row(z, temb);
        let anchor_tokens = tape.constant(latent::patchify(anchor, p));
        let a = tape.linear(anchor_tokens, w.anchor_embed.w, w.anchor_embed.b);
        tape.add_rows_at(z, a, 0)
    }

    fn control_streams(&self, tape: &mut Tape, w: &Weights<Var>, z: Var, control: &ControlPair) -> Result<(Var, Var)> {
        let p = self.config.patch;
        let mut out = [z; 2];
        for (i, (video, embed)) in [(&control.dense, &w.dense_embed), (&control.sparse, &w.sparse_embed)]
            .into_iter()
            .enumerate()
        {
            let tokens = tape.constant(latent::patchify(&latent::encode_control(video)?, p));
            let e = tape.linear(tokens, embed.w, embed.b);
            let select = tape.constant(self.parity_select[i].clone());
            let half = tape.matmul_t(z, select);
            out[i] = tape.add(half, e);
        }
        Ok((out[0], out[1]))
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_tape(
        &self,
        tape: &mut Tape,
        w: &Weights<Var>,
        x_t: &VideoTensor,
        t: usize,
        control: Option<&ControlPair>,
        anchor: &VideoTensor,
        fusion_scale: f64,
    ) -> Result<Var> {
        self.check_inputs(x_t, control, anchor)?;
        self.schedule.check_step(t)?;
        let z = self.embed(tape, w, x_t, t, anchor);
        let mut streams = match control {
            Some(c) => {
                let (dense, sparse) = self.control_streams(tape, w, z, c)?;
                Some(Streams { z, dense, sparse })
            }
            None => None,
        };
        let mut z = z;
        for (l, base) in w.base_blocks.iter().enumerate() {
            let zb = self.block(tape, z, base);
            z = match streams.as_mut() {
                Some(s) if l < self.config.n_control_blocks => {
                    s.dense = self.block(tape, s.dense, &w.dense_branch[l]);
                    s.sparse = self.block(tape, s.sparse, &w.sparse_branch[l]);
                    let fused = self.fuse(tape, &w.fusion[l], s.dense, s.sparse, fusion_scale);
                    tape.add(zb, fused)
                }
                _ => zb,
            };
            if let Some(s) = streams.as_mut() {
                s.z = z;
            }
        }
        let h = tape.layer_norm(z);
        Ok(tape.linear(h, w.head.w, w.head.b))
    }

    fn untokenize(&self, tokens: &Mat) -> VideoTensor {
        latent::unpatchify(tokens, self.config.latent_shape, self.config.patch)
    }

    fn check_scale(fusion_scale: f64) -> Result<()> {
        if !(fusion_scale > 0.0 && fusion_scale <= 1.0) {
            return Err(Error::invalid(format!(
                "fusion_scale must be in (0, 1], got {fusion_scale}"
            )));
        }
        Ok(())
    }

    /// Noise prediction with both control branches active.
    pub fn controlled_forward(
        &self,
        x_t: &VideoTensor,
        t: usize,
        control: &ControlPair,
        anchor: &VideoTensor,
        fusion_scale: f64,
    ) -> Result<VideoTensor> {
        Self::check_scale(fusion_scale)?;
        let mut tape = Tape::new();
        let w = self.bind(&mut tape, false);
        let out = self.forward_tape(&mut tape, &w, x_t, t, Some(control), anchor, fusion_scale)?;
        Ok(self.untokenize(tape.value(out)))
    }

    /// Noise prediction of the base model alone (control branches removed).
    pub fn base_forward(&self, x_t: &VideoTensor, t: usize, anchor: &VideoTensor) -> Result<VideoTensor> {
        let mut tape = Tape::new();
        let w = self.bind(&mut tape, false);
        let out = self.forward_tape(&mut tape, &w, x_t, t, None, anchor, 1.0)?;
        Ok(self.untokenize(tape.value(out)))
    }

    /// One controlled block on raw token matrices: returns the new main,
    /// dense and sparse streams. Any finite fusion scale is accepted here.
    pub fn controlled_block(
        &self,
        layer: usize,
        z: &Mat,
        dense: &Mat,
        sparse: &Mat,
        fusion_scale: f64,
    ) -> Result<(Mat, Mat, Mat)> {
        if layer >= self.config.n_control_blocks {
            return Err(Error::invalid(format!("layer {layer} has no control branches")));
        }
        let (d, half) = (self.config.token_dim, self.config.half_dim());
        if z.cols != d || dense.cols != half || sparse.cols != half || dense.rows != z.rows || sparse.rows != z.rows {
            return Err(Error::invalid("controlled_block stream shapes disagree with the model"));
        }
        let mut tape = Tape::new();
        let w = self.bind(&mut tape, false);
        let (zv, dv, sv) = (
            tape.constant(z.clone()),
            tape.constant(dense.clone()),
            tape.constant(sparse.clone()),
        );
        let zb = self.block(&mut tape, zv, &w.base_blocks[layer]);
        let dn = self.block(&mut tape, dv, &w.dense_branch[layer]);
        let sp = self.block(&mut tape, sv, &w.sparse_branch[layer]);
        let fused = self.fuse(&mut tape, &w.fusion[layer], dn, sp, fusion_scale);
        let out = tape.add(zb, fused);
        Ok((tape.value(out).clone(), tape.value(dn).clone(), tape.value(sp).clone()))
    }

    /// Records the diffusion loss for one training example.
    pub fn loss_graph(
        &self,
        x0: &VideoTensor,
        control: &ControlPair,
        anchor: &VideoTensor,
        t: usize,
        eps: &VideoTensor,
        fusion_scale: f64,
    ) -> Result<LossGraph> {
        Self::check_scale(fusion_scale)?;
        self.record_loss(x0, Some(control), anchor, t, eps, fusion_scale)
    }

    /// Diffusion loss of the base model alone, for pretraining the base.
    pub fn base_loss_graph(
        &self,
        x0: &VideoTensor,
        anchor: &VideoTensor,
        t: usize,
        eps: &VideoTensor,
    ) -> Result<LossGraph> {
        self.record_loss(x0, None, anchor, t, eps, 1.0)
    }

    fn record_loss(
        &self,
        x0: &VideoTensor,
        control: Option<&ControlPair>,
        anchor: &VideoTensor,
        t: usize,
        eps: &VideoTensor,
        fusion_scale: f64,
    ) -> Result<LossGraph> {
        self.schedule.check_step(t)?;
        let x_t = add_noise(x0, t, eps, &self.schedule)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, true);
        let out = self.forward_tape(&mut tape, &bound, &x_t, t, control, anchor, fusion_scale)?;
        let target = latent::patchify(eps, self.config.patch);
        let loss = tape.mse(out, &target);
        Ok(LossGraph { tape, loss, bound })
    }

    /// Applies averaged gradients with AdamW to the trainable group only.
    /// Updated values are rounded to f32 precision.
    pub fn apply_gradients(&mut self, grads: &ParamGrads, opt: &mut AdamW, learning_rate: f64) {
        let trainable = self.config.trainable;
        let slots = self
            .weights
            .params_mut()
            .into_iter()
            .zip(grads.slots())
            .map(|((group, param), grad)| {
                let on = matches!(
                    (trainable, group),
                    (Trainable::Control, ParamGroup::Control) | (Trainable::Base, ParamGroup::Base)
                );
                (param, grad.as_ref().filter(|_| on))
            })
            .collect();
        opt.step(slots, learning_rate);
    }

    /// Backward pass of `graph` followed by one optimizer step.
    pub fn backward_and_step(&mut self, graph: &LossGraph, opt: &mut AdamW, learning_rate: f64) {
        let grads = graph.gradients();
        self.apply_gradients(&grads, opt, learning_rate);
    }

    /// Deterministic sampling from `noise` (see [`sample_clip`]).
    pub fn sample_clip(
        &self,
        noise: &VideoTensor,
        control: &ControlPair,
        anchor: &VideoTensor,
        steps: usize,
    ) -> Result<VideoTensor> {
        sample_clip(self, &self.schedule, noise, control, anchor, steps)
    }
}

impl NoisePredictor for ControlDiT {
    fn predict_noise(
        &self,
        x_t: &VideoTensor,
        t: usize,
        control: &ControlPair,
        anchor: &VideoTensor,
        fusion_scale: f64,
    ) -> Result<VideoTensor> {
        self.controlled_forward(x_t, t, control, anchor, fusion_scale)
    }
}

/// Mean squared error between `eps` and the model's prediction on
/// `add_noise(x0, t, eps)`.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_loss(
    model: &impl NoisePredictor,
    schedule: &DiffusionSchedule,
    x0: &VideoTensor,
    control: &ControlPair,
    anchor: &VideoTensor,
    t: usize,
    eps: &VideoTensor,
    fusion_scale: f64,
) -> Result<f64> {
    let x_t = add_noise(x0, t, eps, schedule)?;
    let pred = model.predict_noise(&x_t, t, control, anchor, fusion_scale)?;
    pred.ensure_same_shape(eps, "diffusion_loss")?;
    let s: f64 = pred.data().iter().zip(eps.data()).map(|(p, e)| (p - e) * (p - e)).sum();
    Ok(s / eps.len() as f64)
}

/// Deterministic (zero-variance) DDIM-style sampler over `steps` evenly
/// spaced timesteps. The output is a pure function of the inputs.
pub fn sample_clip(
    model: &impl NoisePredictor,
    schedule: &DiffusionSchedule,
    noise: &VideoTensor,
    control: &ControlPair,
    anchor: &VideoTensor,
    steps: usize,
) -> Result<VideoTensor> {
    let ts = schedule.sampling_steps(steps)?;
    let mut x = noise.clone();
    for (i, &t) in ts.iter().enumerate() {
        let eps = model.predict_noise(&x, t, control, anchor, 1.0)?;
        let ab = schedule.alpha_bar(t);
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        let next = ts.get(i + 1).map(|&tp| schedule.alpha_bar(tp));
        for (xv, e) in x.data_mut().iter_mut().zip(eps.data()) {
            let x0 = (*xv - sb * e) / sa;
            *xv = match next {
                Some(abp) => abp.sqrt() * x0 + (1.0 - abp).sqrt() * e,
                None => x0,
            };
        }
    }
    Ok(x)
}
