//! Backpropagated gradients against central finite differences.

mod common;

use clipchain::model::{ControlDiT, FusionVariant};
use clipchain::rng;
use common::*;

#[test]
fn control_gradients_match_finite_differences() {
    for instance in 0..20u64 {
        let fusion = if instance % 2 == 0 {
            FusionVariant::Unified
        } else {
            FusionVariant::Separate
        };
        let cfg = micro_config(fusion);
        let m = model_with_live_fusion(cfg.clone(), instance);
        let inp = inputs(&cfg, &mut rng::seeded(1000 + instance));
        let scale = [1.0, 0.5, 0.05][instance as usize % 3];
        let (rel, name) = worst_relative_error(&m, &inp, scale, 6);
        assert!(rel < 1e-3, "instance {instance}: {name} relative error {rel}");
    }
}

#[test]
fn fresh_model_gradients_reach_fusion() {
    let cfg = micro_config(FusionVariant::Unified);
    let m = ControlDiT::new(cfg.clone(), 3).unwrap();
    let inp = inputs(&cfg, &mut rng::seeded(4));
    let (rel, name) = worst_relative_error(&m, &inp, 1.0, 6);
    assert!(rel < 1e-3, "{name}: {rel}");
}
