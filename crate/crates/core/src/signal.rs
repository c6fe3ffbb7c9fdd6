//! Control-signal preparation: percentile normalization of dense depth
//! videos, overlapping clip plans, and depth-coloured sparse point maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::VideoTensor;

/// Lower and upper percentiles used as normalization bounds.
pub const LOWER_PERCENTILE: usize = 5;
pub const UPPER_PERCENTILE: usize = 95;

/// 1-based nearest rank `ceil(p * n / 100)`, at least 1.
pub fn nearest_rank(percentile: usize, n: usize) -> usize {
    (percentile * n).div_ceil(100).max(1)
}

/// Nearest-rank percentile bounds `(p5, p95)` over every element.
pub fn percentile_bounds(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("cannot normalize an empty video"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value at index {i}")));
    }
    let mut scratch = values.to_vec();
    let n = scratch.len();
    let lo_idx = nearest_rank(LOWER_PERCENTILE, n) - 1;
    let hi_idx = nearest_rank(UPPER_PERCENTILE, n) - 1;
    let (_, hi, _) = scratch.select_nth_unstable_by(hi_idx, f64::total_cmp);
    let hi = *hi;
    // Everything left of hi_idx is <= hi; lo_idx <= hi_idx so it lives there.
    let (_, lo, _) = scratch[..=hi_idx].select_nth_unstable_by(lo_idx, f64::total_cmp);
    Ok((*lo, hi))
}

fn rescale_in_place(values: &mut [f64], lo: f64, hi: f64) {
    if hi == lo {
        values.fill(0.0);
        return;
    }
    let span = hi - lo;
    for v in values {
        *v = (v.clamp(lo, hi) - lo) / span;
    }
}

/// Clamps to the 5th/95th nearest-rank percentiles of all values and maps
/// that range linearly onto `[0, 1]`. A degenerate range yields zeros.
pub fn global_normalize(video: &VideoTensor) -> Result<VideoTensor> {
    let (lo, hi) = percentile_bounds(video.data())?;
    let mut out = video.clone();
    rescale_in_place(out.data_mut(), lo, hi);
    Ok(out)
}

/// How a long control video is normalized before segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Global,
    PerClip,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Global => "global",
            Normalization::PerClip => "per_clip",
        }
    }
}

/// Fixed-length clips with a constant overlap that tile a video exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipPlan {
    pub clip_len: usize,
    pub overlap: usize,
    pub starts: Vec<usize>,
    pub total_frames: usize,
}

impl ClipPlan {
    pub fn n_clips(&self) -> usize {
        self.starts.len()
    }

    pub fn stride(&self) -> usize {
        self.clip_len - self.overlap
    }

    /// `(start, len)` of every clip.
    pub fn windows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.starts.iter().map(move |&s| (s, self.clip_len))
    }

    pub fn ensure_matches(&self, frames: usize) -> Result<()> {
        if frames != self.total_frames {
            return Err(Error::invalid(format!(
                "clip plan covers {} frames but the video has {frames}",
                self.total_frames
            )));
        }
        Ok(())
    }

    /// Frame count produced by stitching clips of this plan.
    pub fn stitched_len(&self) -> usize {
        self.clip_len + (self.n_clips() - 1) * self.stride()
    }
}

pub fn plan_clips(total_frames: usize, clip_len: usize, overlap: usize) -> Result<ClipPlan> {
    if clip_len < 2 {
        return Err(Error::invalid(format!(
            "clip length must be at least 2, got {clip_len}"
        )));
    }
    if overlap >= clip_len {
        return Err(Error::invalid(format!(
            "overlap {overlap} must be smaller than the clip length {clip_len}"
        )));
    }
    if total_frames < clip_len {
        return Err(Error::invalid(format!(
            "{total_frames} frames is shorter than one {clip_len}-frame clip"
        )));
    }
    let stride = clip_len - overlap;
    if !(total_frames - clip_len).is_multiple_of(stride) {
        return Err(Error::NonCoverableLength {
            total: total_frames,
            clip_len,
            overlap,
            stride,
        });
    }
    let n = (total_frames - clip_len) / stride + 1;
    Ok(ClipPlan {
        clip_len,
        overlap,
        starts: (0..n).map(|i| i * stride).collect(),
        total_frames,
    })
}

/// Normalizes every clip window on its own. Overlapped frames keep the
/// values computed for the later clip.
pub fn per_clip_normalize(video: &VideoTensor, plan: &ClipPlan) -> Result<VideoTensor> {
    plan.ensure_matches(video.frames())?;
    video.ensure_finite()?;
    let mut out = video.clone();
    for (start, len) in plan.windows() {
        let clip = global_normalize(&video.window(start, len))?;
        out.write_window(start, &clip);
    }
    Ok(out)
}

/// Applies the requested normalization mode to a full-length control video.
pub fn normalize(video: &VideoTensor, plan: &ClipPlan, mode: Normalization) -> Result<VideoTensor> {
    match mode {
        Normalization::Global => global_normalize(video),
        Normalization::PerClip => per_clip_normalize(video, plan),
    }
}

/// The control windows as a clip-wise consumer sees them. Under per-clip
/// normalization each window is normalized on its own, so an overlapped
/// frame may carry different values in adjacent windows.
pub fn control_windows(video: &VideoTensor, plan: &ClipPlan, mode: Normalization) -> Result<Vec<VideoTensor>> {
    plan.ensure_matches(video.frames())?;
    match mode {
        Normalization::Global => {
            let norm = global_normalize(video)?;
            Ok(plan.windows().map(|(s, l)| norm.window(s, l)).collect())
        }
        Normalization::PerClip => plan
            .windows()
            .map(|(s, l)| global_normalize(&video.window(s, l)))
            .collect(),
    }
}

/// Grid shape `(rows, cols)` with `rows * cols == k` whose aspect ratio is
/// closest to `height / width`; ties go to more rows.
pub fn keypoint_grid(height: usize, width: usize, k: usize) -> (usize, usize) {
    let target = height as f64 / width as f64;
    let mut best = (1, k);
    let mut best_err = f64::INFINITY;
    for rows in 1..=k {
        if !k.is_multiple_of(rows) {
            continue;
        }
        let cols = k / rows;
        let err = (rows as f64 / cols as f64 - target).abs();
        if err < best_err || (err == best_err && rows > best.0) {
            best = (rows, cols);
            best_err = err;
        }
    }
    best
}

/// `k` points `(x, y)` on a uniform grid with half-cell offsets, row-major.
pub fn sample_keypoints(height: usize, width: usize, k: usize) -> Result<Vec<(f64, f64)>> {
    if k == 0 {
        return Err(Error::invalid("at least one keypoint is required"));
    }
    if height == 0 || width == 0 || k > height * width {
        return Err(Error::invalid(format!(
            "cannot place {k} keypoints on a {height}x{width} frame"
        )));
    }
    let (rows, cols) = keypoint_grid(height, width, k);
    let mut points = Vec::with_capacity(k);
    for i in 0..rows {
        let y = (i as f64 + 0.5) * height as f64 / rows as f64;
        for j in 0..cols {
            let x = (j as f64 + 0.5) * width as f64 / cols as f64;
            points.push((x, y));
        }
    }
    Ok(points)
}

/// Per-frame displacement of whatever scene surface is visible at a pixel.
pub trait MotionField {
    /// Displacement `(dx, dy)` between frame `t` and `t + 1` of the scene
    /// point visible at pixel `(x, y)` in frame `t`.
    fn displacement(&self, t: usize, x: usize, y: usize) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    /// Frame index relative to the start of the tracked window.
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub in_view: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointTrack {
    pub point_id: usize,
    pub positions: Vec<TrackPoint>,
    /// Normalized depth under each position; 0 while out of view.
    pub depth_values: Vec<f64>,
}

/// Nearest pixel `(col, row)` of a sub-pixel position, if inside the frame.
pub fn nearest_pixel(x: f64, y: f64, height: usize, width: usize) -> Option<(usize, usize)> {
    let col = (x + 0.5).floor();
    let row = (y + 0.5).floor();
    if col < 0.0 || row < 0.0 || col >= width as f64 || row >= height as f64 {
        None
    } else {
        Some((col as usize, row as usize))
    }
}

/// Advects every point through `motion` starting at absolute frame
/// `start`, reading depth from `window_depth` (the normalized depth of the
/// window, frame 0 = absolute frame `start`). A point that leaves the frame
/// stays flagged out of view for the rest of the window.
pub fn track_keypoints(
    motion: &impl MotionField,
    window_depth: &VideoTensor,
    start: usize,
    points: &[(f64, f64)],
) -> Vec<KeypointTrack> {
    let (len, h, w) = (window_depth.frames(), window_depth.height(), window_depth.width());
    points
        .iter()
        .enumerate()
        .map(|(point_id, &(x0, y0))| {
            let mut positions = Vec::with_capacity(len);
            let mut depth_values = Vec::with_capacity(len);
            let (mut x, mut y) = (x0, y0);
            let mut in_view = true;
            for t in 0..len {
                let pixel = if in_view { nearest_pixel(x, y, h, w) } else { None };
                in_view = pixel.is_some();
                positions.push(TrackPoint { t, x, y, in_view });
                match pixel {
                    Some((col, row)) => {
                        depth_values.push(window_depth.get(t, 0, row, col));
                        let (dx, dy) = motion.displacement(start + t, col, row);
                        x += dx;
                        y += dy;
                    }
                    None => depth_values.push(0.0),
                }
            }
            KeypointTrack {
                point_id,
                positions,
                depth_values,
            }
        })
        .collect()
}

/// Rasterizes tracks into a one-channel video: one pixel per in-view point
/// holding its depth; later tracks overwrite earlier ones.
pub fn render_point_map(tracks: &[KeypointTrack], t_frames: usize, height: usize, width: usize) -> VideoTensor {
    let mut out = VideoTensor::zeros([t_frames, 1, height, width]);
    for track in tracks {
        for (p, &d) in track.positions.iter().zip(&track.depth_values) {
            if !p.in_view || p.t >= t_frames {
                continue;
            }
            if let Some((col, row)) = nearest_pixel(p.x, p.y, height, width) {
                out.set(p.t, 0, row, col, d);
            }
        }
    }
    out
}

/// Dense plus sparse control for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub dense: VideoTensor,
    pub sparse: VideoTensor,
}

impl ControlPair {
    pub fn new(dense: VideoTensor, sparse: VideoTensor) -> Result<Self> {
        let (d, s) = (dense.shape(), sparse.shape());
        if d[0] != s[0] || d[2] != s[2] || d[3] != s[3] {
            return Err(Error::invalid(format!(
                "dense {d:?} and sparse {s:?} controls disagree on T/H/W"
            )));
        }
        for (name, v) in [("dense", &dense), ("sparse", &sparse)] {
            let (lo, hi) = v.min_max();
            if lo < 0.0 || hi > 1.0 {
                return Err(Error::invalid(format!("{name} control outside [0, 1]: [{lo}, {hi}]")));
            }
        }
        Ok(Self { dense, sparse })
    }

    pub fn frames(&self) -> usize {
        self.dense.frames()
    }
}
