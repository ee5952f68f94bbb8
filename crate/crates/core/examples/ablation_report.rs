//! Small cross-validated ablation over a few combinations, rendered as
//! Markdown and CSV.
//!
//! ```text
//! cargo run --release --example ablation_report -- [combos] [count] [side]
//! cargo run --release --example ablation_report -- 'RGB;G;RGB+G;C' 16 64
//! ```

use glareseg::dataset::{synthesize_glare, Resolution, SynthParams};
use glareseg::evalkit::{run_ablation, AblationConfig, ModelConfig, RunConfig, TrainConfig};
use glareseg::imgrep::Combo;

fn main() -> glareseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let combos = args
        .first()
        .map_or("RGB;G;RGB+G;C", String::as_str)
        .split([';', ' '])
        .map(str::parse)
        .collect::<glareseg::Result<Vec<Combo>>>()?;
    let count: usize = args.get(1).map_or(16, |s| s.parse().expect("count"));
    let side: usize = args.get(2).map_or(64, |s| s.parse().expect("side"));

    let samples = synthesize_glare(2, count, Resolution::square(side), &SynthParams::default())?;
    let mut cfg = RunConfig {
        model: ModelConfig {
            depth: 2,
            base_width: 4,
            convs_per_block: 2,
        },
        train: TrainConfig {
            epochs: 5,
            folds: 4,
            ..TrainConfig::default()
        },
        ablation: AblationConfig {
            combos: Some(combos),
        },
        ..RunConfig::default()
    };
    cfg.dataset.resolution = Resolution::square(side);
    let (report, _) = run_ablation(&cfg, &samples)?;
    println!("{}", report.to_markdown());
    print!("{}", report.to_csv());
    println!("best F1: {}", report.best_f1().expect("non-empty").label());
    Ok(())
}
