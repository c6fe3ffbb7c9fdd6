//! Initial-noise policies for clip-wise generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::tensor::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One tensor shared by every clip.
    Unified,
    /// A fresh tensor per clip.
    PerClip,
    /// The shared tensor plus `perturb_alpha` times a per-clip tensor.
    Perturbed,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::Unified => "unified",
            NoiseMode::PerClip => "per_clip",
            NoiseMode::Perturbed => "perturbed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub mode: NoiseMode,
    pub seed: u64,
    #[serde(default)]
    pub perturb_alpha: f64,
    /// Latent shape `[T, C, H, W]`.
    pub shape: [usize; 4],
}

impl NoisePlan {
    pub fn new(mode: NoiseMode, seed: u64, perturb_alpha: f64, shape: [usize; 4]) -> Result<Self> {
        let plan = Self {
            mode,
            seed,
            perturb_alpha,
            shape,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.contains(&0) {
            return Err(Error::config(format!(
                "noise shape {:?} has a zero dimension",
                self.shape
            )));
        }
        if !(self.perturb_alpha >= 0.0 && self.perturb_alpha.is_finite()) {
            return Err(Error::config(format!(
                "perturb_alpha must be a finite non-negative number, got {}",
                self.perturb_alpha
            )));
        }
        Ok(())
    }

    fn stream(&self, domain: u64, index: u64) -> VideoTensor {
        let n: usize = self.shape.iter().product();
        let data = rng::normal_vec(&mut rng::keyed(self.seed, domain, index), n);
        VideoTensor::new(self.shape, data).expect("normal samples are finite")
    }

    /// The shared tensor used by unified and perturbed modes. It is the
    /// per-clip stream of clip 0, so clip 0 starts identically in all modes.
    pub fn base(&self) -> VideoTensor {
        self.stream(domain::CLIP_NOISE, 0)
    }

    /// Initial noise for clip `clip_index`.
    pub fn noise_for_clip(&self, clip_index: usize) -> VideoTensor {
        match self.mode {
            NoiseMode::Unified => self.base(),
            NoiseMode::PerClip => self.stream(domain::CLIP_NOISE, clip_index as u64),
            NoiseMode::Perturbed => {
                let mut out = self.base();
                if self.perturb_alpha != 0.0 {
                    let g = self.stream(domain::PERTURB_NOISE, clip_index as u64);
                    for (o, gi) in out.data_mut().iter_mut().zip(g.data()) {
                        *o += self.perturb_alpha * gi;
                    }
                }
                out
            }
        }
    }
}

/// Root mean squared difference between two tensors of equal shape.
pub fn noise_rmse(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    a.ensure_same_shape(b, "noise_rmse")?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}
