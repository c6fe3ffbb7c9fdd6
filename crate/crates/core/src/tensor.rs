//! Time-major dense video tensors.
//!
//! [`VideoTensor`] is the single carrier for pixel videos, depth maps, point
//! maps and latents. Layout is `[T, C, H, W]`, row-major, `f64` elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTensor {
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl VideoTensor {
    /// Builds a tensor from raw data, validating the element count and that
    /// every value is finite.
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let [t, c, h, w] = shape;
        if shape.contains(&0) {
            return Err(Error::invalid(format!("tensor shape {shape:?} has a zero dimension")));
        }
        let expected = t * c * h * w;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value {} at index {i}", data[i])));
        }
        Ok(Self {
            frames: t,
            channels: c,
            height: h,
            width: w,
            data,
        })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        assert!(!shape.contains(&0), "zero dimension in {shape:?}");
        let [t, c, h, w] = shape;
        Self {
            frames: t,
            channels: c,
            height: h,
            width: w,
            data: vec![value; t * c * h * w],
        }
    }

    /// Builds a tensor by evaluating `f(t, c, y, x)` at every element.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(shape);
        let [t, c, h, w] = shape;
        let mut i = 0;
        for ti in 0..t {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        out.data[i] = f(ti, ci, y, x);
                        i += 1;
                    }
                }
            }
        }
        out
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Elements per frame (`C * H * W`).
    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.channels + c) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(t, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(t, c, y, x);
        self.data[i] = v;
    }

    pub fn frame_slice(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_slice_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn plane(&self, t: usize, c: usize) -> &[f64] {
        let n = self.plane_len();
        let start = (t * self.channels + c) * n;
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, t: usize, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        let start = (t * self.channels + c) * n;
        &mut self.data[start..start + n]
    }

    /// Copy of frame `t` as a one-frame tensor.
    pub fn frame(&self, t: usize) -> VideoTensor {
        self.window(t, 1)
    }

    /// Copy of frames `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> VideoTensor {
        assert!(
            len > 0 && start + len <= self.frames,
            "window {start}+{len} out of {}",
            self.frames
        );
        let n = self.frame_len();
        Self {
            frames: len,
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + len) * n].to_vec(),
        }
    }

    /// Overwrites frames starting at `start` with the frames of `src`.
    pub fn write_window(&mut self, start: usize, src: &VideoTensor) {
        assert_eq!(src.frame_len(), self.frame_len());
        assert!(start + src.frames <= self.frames);
        let n = self.frame_len();
        self.data[start * n..(start + src.frames) * n].copy_from_slice(&src.data);
    }

    /// Concatenates along the time axis.
    pub fn concat_frames(parts: &[VideoTensor]) -> Result<VideoTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot concatenate zero tensors"))?;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let mut frames = 0;
        for (i, p) in parts.iter().enumerate() {
            if p.shape()[1..] != first.shape()[1..] {
                return Err(Error::invalid(format!(
                    "part {i} has frame shape {:?}, expected {:?}",
                    &p.shape()[1..],
                    &first.shape()[1..]
                )));
            }
            frames += p.frames;
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            frames,
            channels: first.channels,
            height: first.height,
            width: first.width,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> VideoTensor {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn same_shape(&self, other: &VideoTensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &VideoTensor, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::invalid(format!("non-finite value at index {i}"))),
            None => Ok(()),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(VideoTensor::new([1, 1, 2, 2], vec![0.0; 3]).is_err());
        assert!(VideoTensor::new([0, 1, 2, 2], vec![]).is_err());
        assert!(VideoTensor::new([1, 1, 1, 2], vec![0.0, f64::NAN]).is_err());
        assert!(VideoTensor::new([1, 1, 1, 2], vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn layout_is_time_major() {
        let v = VideoTensor::from_fn([2, 2, 2, 3], |t, c, y, x| (t * 1000 + c * 100 + y * 10 + x) as f64);
        assert_eq!(v.get(1, 1, 1, 2), 1112.0);
        assert_eq!(v.data()[v.frame_len()], 1000.0);
        assert_eq!(v.plane(1, 0)[4], 1011.0);
    }

    #[test]
    fn window_and_concat_round_trip() {
        let v = VideoTensor::from_fn([5, 1, 2, 2], |t, _, y, x| (t * 4 + y * 2 + x) as f64);
        let a = v.window(0, 2);
        let b = v.window(2, 3);
        assert_eq!(VideoTensor::concat_frames(&[a, b]).unwrap(), v);
    }
}
