//! Writes a synthetic glare dataset to disk, then scans and validates it.
//!
//! ```text
//! cargo run --release --example synth_dataset -- [out_dir] [count] [side]
//! ```

use glareseg::dataset::{
    scan_dataset, synthesize_glare, validate_dataset, write_dataset, Resolution, SynthParams,
};

fn main() -> glareseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map_or("target/synth_dataset", String::as_str);
    let count: usize = args.get(1).map_or(8, |s| s.parse().expect("count"));
    let side: usize = args.get(2).map_or(128, |s| s.parse().expect("side"));

    let samples = synthesize_glare(0, count, Resolution::square(side), &SynthParams::default())?;
    write_dataset(out, &samples)?;
    let manifest = scan_dataset(out)?;
    let report = validate_dataset(out)?;
    println!("{} pairs under {out}", manifest.len());
    for s in &report.samples {
        println!(
            "  {}  {:?}  glare {:5.2}%",
            s.id,
            s.image_size,
            100.0 * s.glare_fraction
        );
    }
    println!("{} issues", report.issue_count());
    Ok(())
}
