//! AdamW over the canonical parameter list.

use crate::autograd::Mat;

use super::weights::round_f32;

/// Per-parameter gradients in canonical order; `None` marks a parameter that
/// received no gradient (frozen, or unreachable from the loss).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGrads {
    slots: Vec<Option<Mat>>,
}

impl ParamGrads {
    pub fn new(slots: Vec<Option<Mat>>) -> Self {
        Self { slots }
    }

    pub fn slots(&self) -> &[Option<Mat>] {
        &self.slots
    }

    /// Element-wise sum; slots present in only one side are kept as is.
    pub fn accumulate(&mut self, other: ParamGrads) {
        if self.slots.is_empty() {
            *self = other;
            return;
        }
        assert_eq!(self.slots.len(), other.slots.len(), "gradient lists disagree");
        for (a, b) in self.slots.iter_mut().zip(other.slots) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(&b),
                (None, Some(b)) => *a = Some(b),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.slots.iter_mut().flatten() {
            m.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .flat_map(|m| &m.data)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Adam with decoupled weight decay. Moments are created lazily per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates every `(param, grad)` slot that has a gradient. Slot indices
    /// must stay stable across calls. A zero learning rate leaves every
    /// parameter bit-identical.
    pub fn step(&mut self, slots: Vec<(&mut Mat, Option<&Mat>)>, lr: f64) {
        if self.moments.len() < slots.len() {
            self.moments.resize(slots.len(), None);
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (param, grad)) in slots.into_iter().enumerate() {
            let Some(grad) = grad else { continue };
            let (m, v) =
                self.moments[i].get_or_insert_with(|| (vec![0.0; grad.data.len()], vec![0.0; grad.data.len()]));
            for (j, (p, &g)) in param.data.iter_mut().zip(&grad.data).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                if lr == 0.0 {
                    continue;
                }
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                *p = round_f32(*p - lr * (update + self.weight_decay * *p));
            }
        }
    }
}
