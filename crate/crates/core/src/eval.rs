//! Temporal-consistency metrics and their report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ClipPlan;
use crate::tensor::VideoTensor;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// SSIM of two `h × w` planes: mean over all valid `7 × 7` uniform windows
/// (the window shrinks to the plane for smaller inputs).
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    assert_eq!(a.len(), h * w);
    assert_eq!(b.len(), h * w);
    let (wh, ww) = (SSIM_WINDOW.min(h), SSIM_WINDOW.min(w));
    let n = (wh * ww) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - wh {
        for x0 in 0..=w - ww {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + wh {
                for x in x0..x0 + ww {
                    let (p, q) = (a[y * w + x], b[y * w + x]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    total / count as f64
}

/// Mean SSIM over every frame and channel of two equally shaped videos
/// (typically single frames).
pub fn ssim(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    a.ensure_same_shape(b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    let mut total = 0.0;
    for t in 0..a.frames() {
        for c in 0..a.channels() {
            total += ssim_plane(a.plane(t, c), b.plane(t, c), h, w);
        }
    }
    Ok(total / (a.frames() * a.channels()) as f64)
}

/// Frame pairs `(before, after)` straddling each internal clip boundary of
/// a stitched video.
pub fn boundary_pairs(plan: &ClipPlan) -> Vec<(usize, usize)> {
    plan.starts
        .iter()
        .skip(1)
        .map(|&s| (s + plan.overlap - 1, s + plan.overlap))
        .collect()
}

/// SSIM across each of the `n_clips - 1` boundaries of a stitched video:
/// the last frame the earlier clip owns against the first new frame of the
/// later clip.
pub fn boundary_consistency(video: &VideoTensor, plan: &ClipPlan) -> Result<Vec<f64>> {
    plan.ensure_matches(video.frames())?;
    boundary_pairs(plan)
        .into_iter()
        .map(|(a, b)| ssim(&video.frame(a), &video.frame(b)))
        .collect()
}

/// Mean absolute difference between consecutive frames, averaged over
/// pairs.
pub fn flicker(video: &VideoTensor) -> Result<f64> {
    let t = video.frames();
    if t < 2 {
        return Err(Error::invalid(format!("flicker needs at least 2 frames, got {t}")));
    }
    let per_pair: f64 = (1..t)
        .map(|i| {
            let (a, b) = (video.frame_slice(i - 1), video.frame_slice(i));
            a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64
        })
        .sum();
    Ok(per_pair / (t - 1) as f64)
}

pub fn video_rmse(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    a.ensure_same_shape(b, "video_rmse")?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok((s / a.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_index: usize,
    pub mean_ssim_to_reference: f64,
    pub noise_rmse_to_first: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub boundary_index: usize,
    pub ssim_across_boundary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    pub mean_ssim: f64,
    /// Mean SSIM over clip boundaries.
    pub mean_boundary_ssim: f64,
    /// Proxy for perceptual temporal flickering.
    pub flicker: f64,
    pub video_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_clip: Vec<ClipRecord>,
    pub per_boundary: Vec<BoundaryRecord>,
    pub global: GlobalMetrics,
    pub config_echo: serde_json::Value,
}

impl MetricsReport {
    /// Scores a stitched `generated` video against `reference`.
    pub fn evaluate(
        generated: &VideoTensor,
        reference: &VideoTensor,
        plan: &ClipPlan,
        noise_rmse_to_first: &[f64],
        config_echo: serde_json::Value,
    ) -> Result<Self> {
        generated.ensure_same_shape(reference, "generated vs reference")?;
        plan.ensure_matches(generated.frames())?;
        if noise_rmse_to_first.len() != plan.n_clips() {
            return Err(Error::invalid(format!(
                "{} noise RMSE values for {} clips",
                noise_rmse_to_first.len(),
                plan.n_clips()
            )));
        }
        let per_clip = plan
            .windows()
            .zip(noise_rmse_to_first)
            .enumerate()
            .map(|(clip_index, ((start, len), &rmse))| {
                Ok(ClipRecord {
                    clip_index,
                    mean_ssim_to_reference: ssim(&generated.window(start, len), &reference.window(start, len))?,
                    noise_rmse_to_first: rmse,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let boundary = boundary_consistency(generated, plan)?;
        let mean = |v: &[f64]| {
            if v.is_empty() {
                1.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        Ok(Self {
            global: GlobalMetrics {
                mean_ssim: ssim(generated, reference)?,
                mean_boundary_ssim: mean(&boundary),
                flicker: flicker(generated)?,
                video_rmse: video_rmse(generated, reference)?,
            },
            per_boundary: boundary
                .into_iter()
                .enumerate()
                .map(|(boundary_index, s)| BoundaryRecord {
                    boundary_index,
                    ssim_across_boundary: s,
                })
                .collect(),
            per_clip,
            config_echo,
        })
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_json(&self) -> Result<String> {
        // Routing through Value sorts every object's keys.
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per clip and per boundary.
    pub fn to_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row {
            record: &'static str,
            index: usize,
            mean_ssim_to_reference: Option<f64>,
            noise_rmse_to_first: Option<f64>,
            ssim_across_boundary: Option<f64>,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.per_clip {
            w.serialize(Row {
                record: "clip",
                index: c.clip_index,
                mean_ssim_to_reference: Some(c.mean_ssim_to_reference),
                noise_rmse_to_first: Some(c.noise_rmse_to_first),
                ssim_across_boundary: None,
            })?;
        }
        for b in &self.per_boundary {
            w.serialize(Row {
                record: "boundary",
                index: b.boundary_index,
                mean_ssim_to_reference: None,
                noise_rmse_to_first: None,
                ssim_across_boundary: Some(b.ssim_across_boundary),
            })?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv is not UTF-8: {e}")))
    }
}
