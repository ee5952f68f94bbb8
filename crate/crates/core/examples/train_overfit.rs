//! Overfits a one-branch RGB model on four synthetic images.
//!
//! ```text
//! cargo run --release --example train_overfit -- [steps]
//! ```

use std::time::Instant;

use glareseg::dataset::{synthesize_glare, Resolution, SynthParams};
use glareseg::evalkit::{evaluate, prepare_samples, train_fold, ModelConfig, TrainConfig};

fn main() -> glareseg::Result<()> {
    let steps: usize = std::env::args()
        .nth(1)
        .map_or(500, |s| s.parse().expect("steps"));
    let samples = synthesize_glare(3, 4, Resolution::square(64), &SynthParams::default())?;
    let train = TrainConfig {
        combo: "RGB".parse()?,
        steps: Some(steps),
        batch_size: 4,
        ..TrainConfig::default()
    };
    let unet = ModelConfig {
        depth: 2,
        base_width: 8,
        convs_per_block: 2,
    }
    .unet(train.combo);
    let prepared = prepare_samples(&samples, train.combo, &train.contrast)?;
    let refs: Vec<_> = prepared.iter().collect();

    let t0 = Instant::now();
    let outcome = train_fold(&unet, &train, 0, &refs)?;
    for (i, loss) in outcome.losses.iter().enumerate().step_by(50) {
        println!("step {i:>4}  loss {loss:.5}");
    }
    let summary = evaluate(&outcome.model, &refs)?;
    println!("{}", summary.render_table());
    println!("{} steps in {:.1}s", steps, t0.elapsed().as_secs_f64());
    Ok(())
}
