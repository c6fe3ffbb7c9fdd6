//! TOML configuration files. Every pipeline key is optional and falls back
//! to its default; unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! clip_len = 9
//! overlap = 1
//! normalization = "global"     # or "per_clip"
//!
//! [noise]
//! mode = "unified"             # "per_clip" | "perturbed"
//! perturb_alpha = 0.0
//!
//! [degrade]
//! feature_prob = 0.15
//! data_prob = 0.10
//!
//! [model]
//! latent_shape = [9, 1, 16, 16]
//!
//! [scene]
//! n_frames = 33
//! ```

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::synth::SyntheticScene;

pub fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::config(format!("{origin}: {e}")))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))
}

pub fn load_pipeline_config(path: &Path) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = parse(&super::read_text(path)?, &path.display().to_string())?;
    cfg.validate()?;
    Ok(cfg)
}

/// A scene file: width, height, n_frames, `[background]`, `[[objects]]`
/// (each with a `[objects.shape]` table tagged by `kind`) and an optional
/// `[depth_drift]`.
pub fn load_scene(path: &Path) -> Result<SyntheticScene> {
    let scene: SyntheticScene = parse(&super::read_text(path)?, &path.display().to_string())?;
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_scene, SceneConfig};

    #[test]
    fn pipeline_config_round_trips() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = parse(&to_toml(&cfg).unwrap(), "test").unwrap();
        assert_eq!(back, cfg);
        let partial: PipelineConfig = parse("seed = 3\n[noise]\nmode = \"per_clip\"\n", "test").unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.clip_len, 49);
        assert!(parse::<PipelineConfig>("bogus = 1", "test").is_err());
    }

    #[test]
    fn scene_round_trips() {
        let scene = random_scene(&SceneConfig::default(), &mut crate::rng::seeded(4));
        let back: SyntheticScene = parse(&to_toml(&scene).unwrap(), "test").unwrap();
        assert_eq!(back, scene);
    }
}
