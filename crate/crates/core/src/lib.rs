//! Desk-scale controllable long-video diffusion.
//!
//! Long videos are generated as a chain of overlapping clips. Each clip is
//! denoised by a small transformer steered by two control signals — a dense
//! depth map and a sparse tracked-keypoint map — whose normalization and
//! noise initialization are shared across the whole video so clip
//! boundaries stay consistent.

pub mod autograd;
pub mod cli;
pub mod degrade;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod noise;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::VideoTensor;
