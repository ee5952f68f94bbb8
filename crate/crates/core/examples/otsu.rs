//! Otsu binarization of a two-population probability map.
//!
//! ```text
//! cargo run --release --example otsu
//! ```

use glareseg::imgrep::ScalarMap;
use glareseg::threshold::{binarize, otsu_bin, segment, Histogram256};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> glareseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // 70% background around 0.15, 30% glare around 0.7
    let data: Vec<f64> = (0..64 * 64)
        .map(|_| {
            let centre = if rng.random_bool(0.3) { 0.7 } else { 0.15 };
            (centre + rng.random_range(-0.12..0.12f64)).clamp(0.0, 1.0)
        })
        .collect();
    let map = ScalarMap::new(64, 64, data)?;

    let hist = Histogram256::from_values(&map.data)?;
    let bin = otsu_bin(&hist).expect("two populations");
    let (t, mask) = segment(&map)?;
    println!("boundary bin {bin}, threshold {t:.4}");
    println!("glare fraction {:.3}", mask.fraction());
    for probe in [0.1, 0.3, 0.5, 0.9] {
        println!(
            "  at t = {probe}: {:.3} glare",
            binarize(&map, probe).fraction()
        );
    }
    let flat = ScalarMap::filled(4, 4, 0.5);
    let (t, mask) = segment(&flat)?;
    println!(
        "constant map: threshold {t}, {} glare pixels",
        mask.count_ones()
    );
    Ok(())
}
