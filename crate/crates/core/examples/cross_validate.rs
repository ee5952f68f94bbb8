//! k-fold cross-validation of one or more combinations on a synthetic corpus.
//!
//! ```text
//! cargo run --release --example cross_validate -- [combos] [count] [side] [epochs] [width]
//! cargo run --release --example cross_validate -- 'RGB+G;C' 32 64 10
//! ```

use std::time::Instant;

use glareseg::dataset::{synthesize_glare, Resolution, SynthParams};
use glareseg::evalkit::{cross_validate, ModelConfig, TrainConfig};
use glareseg::imgrep::Combo;

fn main() -> glareseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let combos: Vec<Combo> = arg(0, "RGB+G;C")
        .split(';')
        .map(str::parse)
        .collect::<glareseg::Result<_>>()?;
    let count: usize = arg(1, "32").parse().expect("count");
    let side: usize = arg(2, "64").parse().expect("side");
    let epochs: usize = arg(3, "10").parse().expect("epochs");
    let width: usize = arg(4, "8").parse().expect("width");

    let samples = synthesize_glare(7, count, Resolution::square(side), &SynthParams::default())?;
    let model = ModelConfig {
        depth: 2,
        base_width: width,
        convs_per_block: 2,
    };
    for combo in combos {
        let train = TrainConfig {
            combo,
            epochs,
            folds: 8.min(count),
            ..TrainConfig::default()
        };
        let t0 = Instant::now();
        let cv = cross_validate(&model, &train, &samples)?;
        let m = cv.summary.stats.mean;
        println!(
            "{:<12} P {:.4}  R {:.4}  F1 {:.4}  Acc {:.4}  ({:.1}s)",
            combo.label(),
            m.precision,
            m.recall,
            m.f1,
            m.accuracy,
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
