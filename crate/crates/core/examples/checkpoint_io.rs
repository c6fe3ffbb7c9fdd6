//! LVTF tensors and LVCK checkpoints round-trip through disk.

use clipchain::io::{checkpoint, lvtf};
use clipchain::model::{ControlDiT, ModelConfig};
use clipchain::VideoTensor;

fn main() -> clipchain::Result<()> {
    let dir = std::env::temp_dir().join("clipchain-checkpoint-demo");
    let video = VideoTensor::from_fn([2, 1, 4, 4], |t, _, y, x| (t * 16 + y * 4 + x) as f64 / 32.0);
    let path = dir.join("video.lvtf");
    lvtf::write_video(&path, &video, lvtf::Dtype::F32)?;
    assert_eq!(lvtf::read_video(&path)?, video);
    println!(
        "{}: {} bytes",
        path.display(),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0)
    );

    let model = ControlDiT::new(ModelConfig::default(), 3)?;
    let path = dir.join("model.lvck");
    checkpoint::save(&path, &model)?;
    let back = checkpoint::load(&path)?;
    println!(
        "{}: {} tensors, identical = {}",
        path.display(),
        model.weights().named().len(),
        back == model
    );
    Ok(())
}
