//! Degradation-aware training augmentations for the dense control.
//!
//! Feature level: the dense branch output is scaled by a random factor
//! before fusion ([`draw_feature_scale`]). Data level: the dense video itself
//! is corrupted by multi-scale resampling and/or box blur
//! ([`apply_data_degradation`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::VideoTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeConfig {
    pub feature_prob: f64,
    pub data_prob: f64,
    pub scale_range: [f64; 2],
    /// Scale set is `{1, 1/2, ..., 1/2^n_scales}`.
    pub n_scales: usize,
    pub blur_kernels: Vec<usize>,
    /// Training steps before any degradation is applied.
    pub warmup_steps: usize,
    /// Whether feature- and data-level degradation may hit the same step.
    pub allow_cooccur: bool,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            feature_prob: 0.15,
            data_prob: 0.10,
            scale_range: [0.05, 1.0],
            n_scales: 5,
            blur_kernels: vec![3, 5, 7],
            warmup_steps: 200,
            allow_cooccur: true,
        }
    }
}

impl DegradeConfig {
    /// No degradation of any kind.
    pub fn disabled() -> Self {
        Self {
            feature_prob: 0.0,
            data_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("feature_prob", self.feature_prob), ("data_prob", self.data_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::config(format!(
                "scale_range must satisfy 0 < lo <= hi <= 1, got [{lo}, {hi}]"
            )));
        }
        if self.n_scales == 0 || self.n_scales > 16 {
            return Err(Error::config(format!(
                "n_scales must be in 1..=16, got {}",
                self.n_scales
            )));
        }
        if self.blur_kernels.is_empty() || self.blur_kernels.iter().any(|&k| k < 3 || k % 2 == 0) {
            return Err(Error::config("blur_kernels must be a non-empty list of odd sizes >= 3"));
        }
        Ok(())
    }
}

/// Fusion scale for one training example: `1.0` unless the feature-level
/// degradation fires (probability `feature_prob`), in which case a uniform
/// draw from `scale_range`.
pub fn draw_feature_scale(config: &DegradeConfig, rng: &mut Rng) -> f64 {
    if rng::uniform(rng) < config.feature_prob {
        let [lo, hi] = config.scale_range;
        lo + (hi - lo) * rng::uniform(rng)
    } else {
        1.0
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // Exact when a == b, so constants survive resampling unchanged.
    a + t * (b - a)
}

/// Source taps for 1-D linear resampling with half-pixel centers.
fn taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of one `h × w` plane (row-major) to `oh × ow`.
pub fn resize_bilinear(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    assert_eq!(plane.len(), h * w);
    let tx = taps(w, ow);
    let ty = taps(h, oh);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for (x, &(i0, i1, t)) in tx.iter().enumerate() {
            rows[y * ow + x] = lerp(src[i0], src[i1], t);
        }
    }
    let mut out = vec![0.0; oh * ow];
    for (y, &(i0, i1, t)) in ty.iter().enumerate() {
        for x in 0..ow {
            out[y * ow + x] = lerp(rows[i0 * ow + x], rows[i1 * ow + x], t);
        }
    }
    out
}

/// Down- then up-sample every plane through resolution `scale`.
pub fn resample_through(video: &VideoTensor, scale: f64) -> VideoTensor {
    let (h, w) = (video.height(), video.width());
    let (sh, sw) = (
        ((scale * h as f64).floor() as usize).max(1),
        ((scale * w as f64).floor() as usize).max(1),
    );
    let mut out = video.clone();
    if (sh, sw) == (h, w) {
        return out;
    }
    for t in 0..video.frames() {
        for c in 0..video.channels() {
            let small = resize_bilinear(video.plane(t, c), h, w, sh, sw);
            out.plane_mut(t, c)
                .copy_from_slice(&resize_bilinear(&small, sh, sw, h, w));
        }
    }
    out
}

/// The random choices behind one [`random_scale_fusion`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionDraw {
    /// Index into the scale set `{1, 1/2, ..., 1/2^n}` that was dropped.
    pub excluded: usize,
    pub scales: Vec<f64>,
    /// Normalized to sum to one, aligned with `scales`.
    pub weights: Vec<f64>,
}

pub fn draw_fusion(n_scales: usize, rng: &mut Rng) -> FusionDraw {
    let excluded = rng::below(rng, n_scales + 1);
    let scales: Vec<f64> = (0..=n_scales)
        .filter(|&j| j != excluded)
        .map(|j| 0.5f64.powi(j as i32))
        .collect();
    // 1 - U is in (0, 1], so every weight is strictly positive.
    let raw: Vec<f64> = scales.iter().map(|_| 1.0 - rng::uniform(rng)).collect();
    let total: f64 = raw.iter().sum();
    FusionDraw {
        excluded,
        scales,
        weights: raw.iter().map(|r| r / total).collect(),
    }
}

/// Applies a fixed [`FusionDraw`]; see [`random_scale_fusion`].
pub fn fuse_scales(dense: &VideoTensor, draw: &FusionDraw) -> Result<VideoTensor> {
    let min_side = dense.height().min(dense.width()) as f64;
    if let Some(&smallest) = draw.scales.iter().min_by(|a, b| a.total_cmp(b)) {
        if (smallest * min_side).floor() < 1.0 {
            return Err(Error::invalid(format!(
                "{}x{} frame is too small for scale {smallest}",
                dense.height(),
                dense.width()
            )));
        }
    }
    let candidates: Vec<VideoTensor> = draw.scales.iter().map(|&s| resample_through(dense, s)).collect();
    let mut out = candidates[0].clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let base = *v;
        let (mut lo, mut hi) = (base, base);
        let mut acc = base;
        for (cand, &w) in candidates.iter().zip(&draw.weights).skip(1) {
            let c = cand.data()[i];
            acc += w * (c - base);
            lo = lo.min(c);
            hi = hi.max(c);
        }
        // Rounding can push a convex combination a hair outside its hull.
        *v = acc.clamp(lo, hi);
    }
    Ok(out)
}

/// Random scale fusion: drop one scale of `{1, ..., 1/2^n}` at random,
/// resample the video down and back up through each remaining scale, and
/// blend the results with random normalized weights.
pub fn random_scale_fusion(dense: &VideoTensor, config: &DegradeConfig, rng: &mut Rng) -> Result<VideoTensor> {
    let need = 1usize << config.n_scales;
    if dense.height() < need || dense.width() < need {
        return Err(Error::invalid(format!(
            "random scale fusion with {} scales needs frames of at least {need}x{need}, got {}x{}",
            config.n_scales,
            dense.height(),
            dense.width()
        )));
    }
    let draw = draw_fusion(config.n_scales, rng);
    fuse_scales(dense, &draw)
}

/// Symmetric (edge-repeating) reflection of `i` into `0..n`; valid for
/// offsets up to `n` outside the range.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - 1 - i
    } else {
        i
    };
    r as usize
}

fn box_1d(src: &[f64], dst: &mut [f64], stride: usize, n: usize, radius: usize) {
    let k = (2 * radius + 1) as f64;
    for i in 0..n {
        let center = src[i * stride];
        // Summing differences from the center keeps constants exact.
        let dev: f64 = (-(radius as isize)..=radius as isize)
            .map(|d| src[reflect(i as isize + d, n) * stride] - center)
            .sum();
        dst[i * stride] = center + dev / k;
    }
}

/// Separable `kernel × kernel` mean filter with symmetric reflect padding.
/// Symmetric padding makes the filter doubly stochastic, so frame means are
/// preserved. Requires `kernel / 2 <= min(H, W)`.
pub fn box_blur(video: &VideoTensor, kernel: usize) -> Result<VideoTensor> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::invalid(format!("blur kernel must be odd, got {kernel}")));
    }
    let (h, w) = (video.height(), video.width());
    let radius = kernel / 2;
    if radius > h.min(w) {
        return Err(Error::invalid(format!(
            "blur kernel {kernel} is too large for a {h}x{w} frame"
        )));
    }
    let mut out = video.clone();
    let mut tmp = vec![0.0; h * w];
    for t in 0..video.frames() {
        for c in 0..video.channels() {
            let src = video.plane(t, c);
            for y in 0..h {
                box_1d(&src[y * w..], &mut tmp[y * w..], 1, w, radius);
            }
            let dst = out.plane_mut(t, c);
            for x in 0..w {
                box_1d(&tmp[x..], &mut dst[x..], w, h, radius);
            }
        }
    }
    Ok(out)
}

/// Box blur with a kernel size drawn uniformly from `blur_kernels`.
pub fn adaptive_blur(dense: &VideoTensor, config: &DegradeConfig, rng: &mut Rng) -> Result<VideoTensor> {
    if config.blur_kernels.is_empty() {
        return Err(Error::config("blur_kernels is empty"));
    }
    let kernel = config.blur_kernels[rng::below(rng, config.blur_kernels.len())];
    box_blur(dense, kernel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataDegradation {
    Fusion,
    Blur,
    Both,
}

/// Applies one data-level degradation; `Both` is fusion followed by blur.
pub fn degrade_with(
    dense: &VideoTensor,
    choice: DataDegradation,
    config: &DegradeConfig,
    rng: &mut Rng,
) -> Result<VideoTensor> {
    match choice {
        DataDegradation::Fusion => random_scale_fusion(dense, config, rng),
        DataDegradation::Blur => adaptive_blur(dense, config, rng),
        DataDegradation::Both => adaptive_blur(&random_scale_fusion(dense, config, rng)?, config, rng),
    }
}

/// Whether the data-level degradation fires and, if so, which one.
pub fn draw_data_degradation(config: &DegradeConfig, rng: &mut Rng) -> Option<DataDegradation> {
    if rng::uniform(rng) < config.data_prob {
        Some([DataDegradation::Fusion, DataDegradation::Blur, DataDegradation::Both][rng::below(rng, 3)])
    } else {
        None
    }
}

/// With probability `data_prob`, degrades the dense video with fusion, blur
/// or both (uniformly); otherwise returns it unchanged.
pub fn apply_data_degradation(dense: &VideoTensor, config: &DegradeConfig, rng: &mut Rng) -> Result<VideoTensor> {
    match draw_data_degradation(config, rng) {
        Some(choice) => degrade_with(dense, choice, config, rng),
        None => Ok(dense.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_scale_edge_cases() {
        let mut rng = rng::seeded(1);
        let off = DegradeConfig {
            feature_prob: 0.0,
            ..Default::default()
        };
        assert!((0..1000).all(|_| draw_feature_scale(&off, &mut rng) == 1.0));
        let point = DegradeConfig {
            feature_prob: 1.0,
            scale_range: [0.5, 0.5],
            ..Default::default()
        };
        assert!((0..1000).all(|_| draw_feature_scale(&point, &mut rng) == 0.5));
    }

    #[test]
    fn blur_hand_example() {
        let v = VideoTensor::new([1, 1, 1, 5], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let b = box_blur(&v, 3).unwrap();
        let third = 1.0 / 3.0;
        for (got, want) in b.data().iter().zip([0.0, third, third, third, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(box_blur(&VideoTensor::zeros([1, 1, 2, 2]), 7).is_err());
    }

    #[test]
    fn constants_pass_through_exactly() {
        let v = VideoTensor::filled([2, 1, 32, 32], 0.3);
        let cfg = DegradeConfig::default();
        let mut rng = rng::seeded(3);
        for _ in 0..5 {
            assert_eq!(random_scale_fusion(&v, &cfg, &mut rng).unwrap(), v);
            assert_eq!(adaptive_blur(&v, &cfg, &mut rng).unwrap(), v);
        }
    }

    #[test]
    fn fusion_rejects_small_frames() {
        let v = VideoTensor::zeros([1, 1, 16, 32]);
        assert!(random_scale_fusion(&v, &DegradeConfig::default(), &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn fusion_weights_are_normalized_and_positive() {
        let mut rng = rng::seeded(9);
        for _ in 0..100 {
            let d = draw_fusion(5, &mut rng);
            assert_eq!(d.scales.len(), 5);
            assert!(d.weights.iter().all(|&w| w > 0.0));
            assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(!d.scales.contains(&0.5f64.powi(d.excluded as i32)));
        }
    }

    #[test]
    fn zero_data_prob_is_identity() {
        let v = VideoTensor::from_fn([1, 1, 32, 32], |_, _, y, x| (y * 32 + x) as f64 / 1024.0);
        let cfg = DegradeConfig::disabled();
        let mut rng = rng::seeded(2);
        for _ in 0..50 {
            assert_eq!(apply_data_degradation(&v, &cfg, &mut rng).unwrap(), v);
        }
    }
}
