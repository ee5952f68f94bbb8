//! Computes every representation of one image and writes them as PNGs.
//!
//! ```text
//! cargo run --release --example representations -- [image.png] [out_dir]
//! ```
//! Without an image a synthetic glare sample is used.

use std::path::PathBuf;

use glareseg::dataset::{
    load_rgb, save_gray_png, save_rgb_png, synthesize_glare, Resolution, SynthParams,
};
use glareseg::imgrep::{
    build_plane_set, contrast_map, luminance, rgb_to_hsv, unit_to_u8, value_plane_255, Combo,
    ContrastParams,
};

fn main() -> glareseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rgb = match args.first() {
        Some(p) => load_rgb(p.as_ref(), None)?,
        None => {
            synthesize_glare(11, 1, Resolution::square(128), &SynthParams::default())?
                .remove(0)
                .image
        }
    };
    let out = PathBuf::from(args.get(1).map_or("target/representations", String::as_str));
    std::fs::create_dir_all(&out).expect("create output dir");

    let params = ContrastParams::default();
    let all: Combo = "RGB+HSV+G+C".parse()?;
    let planes = build_plane_set(&rgb, all, &params)?;
    for e in &planes.entries {
        let r = &e.raster;
        let (lo, hi) = r
            .data()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let mean = r.data().iter().sum::<f64>() / r.data().len() as f64;
        println!(
            "{:<4} {} channel(s)  min {lo:.4}  max {hi:.4}  mean {mean:.4}",
            e.representation.name(),
            r.channels()
        );
        for c in 0..r.channels() {
            let scale = if hi > 1.0 { 1.0 / hi } else { 1.0 };
            let gray = r.plane(c).iter().map(|&v| unit_to_u8(v * scale)).collect();
            let path = out.join(format!("{}_{c}.png", e.representation.name()));
            save_gray_png(&path, r.height(), r.width(), gray)?;
        }
    }
    save_rgb_png(&out.join("input.png"), &rgb)?;

    let l = luminance(&value_plane_255(&rgb_to_hsv(&rgb)));
    let dense = contrast_map(&l, &params)?;
    let strided = planes
        .get(glareseg::imgrep::Representation::C)
        .expect("C requested");
    let gap = dense
        .data
        .iter()
        .zip(strided.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "stride {} vs dense contrast: max |diff| {gap:.4}",
        params.stride_k
    );
    println!("planes written to {}", out.display());
    Ok(())
}
