//! Identity-style latent codec and patch tokenization.
//!
//! A latent is the pixel clip average-pooled 2x spatially and mapped from
//! `[0, 1]` to `[-1, 1]`. Control videos are pooled the same way but keep
//! their `[0, 1]` range.

use crate::autograd::Mat;
use crate::error::{Error, Result};
use crate::tensor::VideoTensor;

fn pool2(video: &VideoTensor, f: impl Fn(f64) -> f64) -> Result<VideoTensor> {
    let [t, c, h, w] = video.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!("{h}x{w} frames cannot be pooled 2x")));
    }
    Ok(VideoTensor::from_fn([t, c, h / 2, w / 2], |ti, ci, y, x| {
        let s = video.get(ti, ci, 2 * y, 2 * x)
            + video.get(ti, ci, 2 * y, 2 * x + 1)
            + video.get(ti, ci, 2 * y + 1, 2 * x)
            + video.get(ti, ci, 2 * y + 1, 2 * x + 1);
        f(s / 4.0)
    }))
}

pub fn encode_video(pixels: &VideoTensor) -> Result<VideoTensor> {
    pool2(pixels, |v| 2.0 * v - 1.0)
}

pub fn encode_control(control: &VideoTensor) -> Result<VideoTensor> {
    pool2(control, |v| v)
}

/// Nearest 2x upsampling back to pixels, clamped to `[0, 1]`.
pub fn decode_video(latent: &VideoTensor) -> VideoTensor {
    let [t, c, h, w] = latent.shape();
    VideoTensor::from_fn([t, c, 2 * h, 2 * w], |ti, ci, y, x| {
        ((latent.get(ti, ci, y / 2, x / 2) + 1.0) / 2.0).clamp(0.0, 1.0)
    })
}

/// `[T, C, H, W]` to a `[T·(H/p)·(W/p), C·p·p]` token matrix, time-major.
pub fn patchify(video: &VideoTensor, p: usize) -> Mat {
    let [t, c, h, w] = video.shape();
    let (gh, gw) = (h / p, w / p);
    let dim = c * p * p;
    let mut m = Mat::zeros(t * gh * gw, dim);
    for ti in 0..t {
        for i in 0..gh {
            for j in 0..gw {
                let row = (ti * gh + i) * gw + j;
                for ci in 0..c {
                    for dy in 0..p {
                        for dx in 0..p {
                            *m.at_mut(row, (ci * p + dy) * p + dx) = video.get(ti, ci, i * p + dy, j * p + dx);
                        }
                    }
                }
            }
        }
    }
    m
}

pub fn unpatchify(tokens: &Mat, shape: [usize; 4], p: usize) -> VideoTensor {
    let [_, _, h, w] = shape;
    let (gh, gw) = (h / p, w / p);
    VideoTensor::from_fn(shape, |ti, ci, y, x| {
        let row = (ti * gh + y / p) * gw + x / p;
        tokens.at(row, (ci * p + y % p) * p + x % p)
    })
}

fn sinusoid(pos: f64, i: usize, n: usize) -> f64 {
    let pair = (i / 2) as f64;
    let freq = (-(10_000f64.ln()) * 2.0 * pair / n.max(1) as f64).exp();
    if i.is_multiple_of(2) {
        (pos * freq).sin()
    } else {
        (pos * freq).cos()
    }
}

/// Fixed sinusoidal timestep embedding, `1 x dim`.
pub fn timestep_embedding(t: usize, dim: usize) -> Mat {
    Mat::from_fn(1, dim, |_, i| sinusoid(t as f64, i, dim))
}

/// Fixed positional code for every token. Feature `k` encodes axis `k % 3`
/// (time, row, column) at frequency index `k / 3`.
pub fn position_codes(frames: usize, grid_h: usize, grid_w: usize, dim: usize) -> Mat {
    let per_axis = dim.div_ceil(3);
    Mat::from_fn(frames * grid_h * grid_w, dim, |n, k| {
        let j = n % grid_w;
        let i = (n / grid_w) % grid_h;
        let t = n / (grid_w * grid_h);
        let coord = [t, i, j][k % 3] as f64;
        0.5 * sinusoid(coord, k / 3, per_axis)
    })
}
