use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::VideoTensor;

/// Linear-beta DDPM noise schedule.
///
/// The beta endpoints are the usual `1e-4 .. 0.02` for 1000 steps, rescaled by
/// `1000 / timesteps` so short schedules still reach near-pure noise. Betas
/// are capped at `MAX_BETA` so very short schedules stay valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

pub const MAX_BETA: f64 = 0.999;

impl DiffusionSchedule {
    pub fn linear(timesteps: usize) -> Self {
        assert!(timesteps >= 2);
        let scale = 1000.0 / timesteps as f64;
        let (b0, b1) = (1e-4 * scale, 0.02 * scale);
        let betas: Vec<f64> = (0..timesteps)
            .map(|i| (b0 + (b1 - b0) * i as f64 / (timesteps - 1) as f64).min(MAX_BETA))
            .collect();
        let mut alpha_bars = Vec::with_capacity(timesteps);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Self { betas, alpha_bars }
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.timesteps() {
            return Err(Error::invalid(format!(
                "timestep {t} out of range 0..{}",
                self.timesteps()
            )));
        }
        Ok(())
    }

    /// Descending timesteps visited by a `steps`-step sampler, evenly spaced
    /// over `0..=T-1` and always ending at 0.
    pub fn sampling_steps(&self, steps: usize) -> Result<Vec<usize>> {
        let t_max = self.timesteps() - 1;
        if steps == 0 || steps > self.timesteps() {
            return Err(Error::invalid(format!(
                "sampling steps must be in 1..={}, got {steps}",
                self.timesteps()
            )));
        }
        if steps == 1 {
            return Ok(vec![t_max]);
        }
        let mut ts: Vec<usize> = (0..steps)
            .map(|i| ((i * t_max) as f64 / (steps - 1) as f64).round() as usize)
            .collect();
        ts.dedup();
        ts.reverse();
        Ok(ts)
    }
}

/// `x_t = sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps`.
pub fn add_noise(x0: &VideoTensor, t: usize, eps: &VideoTensor, schedule: &DiffusionSchedule) -> Result<VideoTensor> {
    schedule.check_step(t)?;
    x0.ensure_same_shape(eps, "add_noise")?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x0.data().iter().zip(eps.data()).map(|(x, e)| a * x + b * e).collect();
    VideoTensor::new(x0.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_bars_strictly_decrease() {
        let s = DiffusionSchedule::linear(64);
        assert!(s.alpha_bars[0] > 0.99);
        assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
        assert!(*s.alpha_bars.last().unwrap() > 0.0);
        assert!(*s.alpha_bars.last().unwrap() < 1e-3);
        for &ab in &s.alpha_bars {
            assert!((ab.sqrt().powi(2) + (1.0 - ab).sqrt().powi(2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn short_schedules_stay_valid() {
        for t in [2, 4, 16] {
            let s = DiffusionSchedule::linear(t);
            assert!(s.betas.iter().all(|&b| b > 0.0 && b < 1.0));
            assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
            assert!(*s.alpha_bars.last().unwrap() > 0.0);
        }
    }

    #[test]
    fn closed_form_noising() {
        let s = DiffusionSchedule {
            betas: vec![0.0, 0.75],
            alpha_bars: vec![1.0, 0.25],
        };
        let x0 = VideoTensor::filled([1, 1, 2, 2], 2.0);
        let eps = VideoTensor::filled([1, 1, 2, 2], 0.0);
        assert_eq!(
            add_noise(&x0, 1, &eps, &s).unwrap(),
            VideoTensor::filled([1, 1, 2, 2], 1.0)
        );
        let e = VideoTensor::filled([1, 1, 2, 2], -3.0);
        assert_eq!(add_noise(&x0, 0, &e, &s).unwrap(), x0);
        assert!(add_noise(&x0, 2, &e, &s).is_err());
    }

    #[test]
    fn sampling_step_grids() {
        let s = DiffusionSchedule::linear(64);
        assert_eq!(s.sampling_steps(1).unwrap(), vec![63]);
        let ts = s.sampling_steps(8).unwrap();
        assert_eq!(ts.first(), Some(&63));
        assert_eq!(ts.last(), Some(&0));
        assert_eq!(ts.len(), 8);
        assert_eq!(s.sampling_steps(64).unwrap(), (0..64).rev().collect::<Vec<_>>());
        assert!(s.sampling_steps(65).is_err());
    }
}
