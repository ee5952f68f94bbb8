//! Saves a model to a checkpoint, reloads it and compares predictions.
//!
//! ```text
//! cargo run --release --example checkpoint -- [path]
//! ```

use glareseg::dataset::{synthesize_glare, Resolution, SynthParams};
use glareseg::imgrep::{build_plane_set, Combo, ContrastParams};
use glareseg::nncore::CHECKPOINT_MAGIC;
use glareseg::unet::{build_model, Model};

fn main() -> glareseg::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example.ck".into());
    let combo: Combo = "RGB+G".parse()?;
    let cfg = glareseg::evalkit::ModelConfig {
        depth: 2,
        base_width: 4,
        convs_per_block: 2,
    }
    .unet(combo);
    let model: Model<f32> = build_model(&cfg, 42)?;

    let bytes =
        model.to_checkpoint(serde_json::json!({ "combo": combo.label(), "note": "untrained" }))?;
    std::fs::write(&path, &bytes).expect("write checkpoint");
    println!(
        "{} bytes, magic {:?}",
        bytes.len(),
        String::from_utf8_lossy(&bytes[..8])
    );
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);

    let (restored, meta) =
        Model::<f32>::from_checkpoint(&std::fs::read(&path).expect("read checkpoint"))?;
    println!("metadata {meta}");
    let sample = synthesize_glare(0, 1, Resolution::square(64), &SynthParams::default())?.remove(0);
    let planes = build_plane_set(&sample.image, combo, &ContrastParams::default())?;
    let (a, b) = (model.forward(&planes)?, restored.forward(&planes)?);
    println!(
        "{} parameters, predictions identical: {}",
        restored.param_count(),
        a == b
    );
    Ok(())
}
