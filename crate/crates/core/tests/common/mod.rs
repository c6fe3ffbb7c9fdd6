//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use clipchain::model::{ControlDiT, Fusion, FusionVariant, ModelConfig, ParamGroup};
use clipchain::rng::{self, Rng};
use clipchain::signal::ControlPair;
use clipchain::VideoTensor;

pub fn micro_config(fusion: FusionVariant) -> ModelConfig {
    ModelConfig {
        token_dim: 8,
        n_heads: 2,
        mlp_ratio: 2,
        n_base_blocks: 2,
        n_control_blocks: 1,
        latent_shape: [2, 1, 4, 4],
        control_channels: 1,
        patch: 2,
        timesteps: 16,
        fusion,
        ..ModelConfig::default()
    }
}

pub fn normal_video(shape: [usize; 4], rng: &mut Rng) -> VideoTensor {
    VideoTensor::new(shape, rng::normal_vec(rng, shape.iter().product())).unwrap()
}

pub fn uniform_video(shape: [usize; 4], rng: &mut Rng) -> VideoTensor {
    let n = shape.iter().product();
    VideoTensor::new(shape, (0..n).map(|_| rng::uniform(rng)).collect()).unwrap()
}

pub struct Inputs {
    pub x: VideoTensor,
    pub control: ControlPair,
    pub anchor: VideoTensor,
    pub eps: VideoTensor,
    pub t: usize,
}

pub fn inputs(cfg: &ModelConfig, rng: &mut Rng) -> Inputs {
    let [_, c, h, w] = cfg.latent_shape;
    Inputs {
        x: normal_video(cfg.latent_shape, rng),
        control: ControlPair::new(
            uniform_video(cfg.control_shape(), rng),
            uniform_video(cfg.control_shape(), rng),
        )
        .unwrap(),
        anchor: normal_video([1, c, h, w], rng),
        eps: normal_video(cfg.latent_shape, rng),
        t: rng::below(rng, cfg.timesteps),
    }
}

/// A model whose fusion layers are random instead of zero, so gradients
/// reach the control branches.
pub fn model_with_live_fusion(cfg: ModelConfig, seed: u64) -> ControlDiT {
    let mut m = ControlDiT::new(cfg, seed).unwrap();
    let mut r = rng::keyed(seed, 99, 0);
    for f in &mut m.weights_mut().fusion {
        let linears = match f {
            Fusion::Unified(l) => vec![l],
            Fusion::Separate { dense, sparse } => vec![dense, sparse],
        };
        for l in linears {
            for v in l.w.data.iter_mut().chain(l.b.data.iter_mut()) {
                *v = 0.3 * rng::normal_vec(&mut r, 1)[0];
            }
        }
    }
    m
}

const H: f64 = 1e-4;

pub fn loss(m: &ControlDiT, inp: &Inputs, scale: f64) -> f64 {
    m.loss_graph(&inp.x, &inp.control, &inp.anchor, inp.t, &inp.eps, scale)
        .unwrap()
        .value()
}

/// Largest per-tensor relative error `|g - fd| / max(|g|, |fd|)` over the
/// control parameters, probing up to `probes` entries per tensor.
pub fn worst_relative_error(m: &ControlDiT, inp: &Inputs, scale: f64, probes: usize) -> (f64, String) {
    let grads = m
        .loss_graph(&inp.x, &inp.control, &inp.anchor, inp.t, &inp.eps, scale)
        .unwrap()
        .gradients();
    let names: Vec<(String, ParamGroup)> = m.weights().named().into_iter().map(|(n, g, _)| (n, g)).collect();
    let mut worst = (0.0, String::new());
    for (slot, (name, group)) in names.iter().enumerate() {
        if *group != ParamGroup::Control {
            assert!(grads.slots()[slot].is_none(), "{name} is frozen but got a gradient");
            continue;
        }
        let g = grads.slots()[slot]
            .as_ref()
            .unwrap_or_else(|| panic!("{name} has no gradient"));
        let len = g.data.len();
        let (mut num, mut an) = (Vec::new(), Vec::new());
        for k in 0..probes.min(len) {
            let idx = (k * 7919) % len;
            let mut plus = m.clone();
            plus.weights_mut().params_mut()[slot].1.data[idx] += H;
            let mut minus = m.clone();
            minus.weights_mut().params_mut()[slot].1.data[idx] -= H;
            num.push((loss(&plus, inp, scale) - loss(&minus, inp, scale)) / (2.0 * H));
            an.push(g.data[idx]);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = num.iter().zip(&an).map(|(a, b)| a - b).collect();
        let denom = norm(&num).max(norm(&an));
        if denom < 1e-9 {
            continue;
        }
        let rel = norm(&diff) / denom;
        if rel > worst.0 {
            worst = (rel, name.clone());
        }
    }
    worst
}
