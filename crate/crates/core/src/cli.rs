//! Command-line front end.
//!
//! Every subcommand is a thin wrapper over the library. Exit codes: 0 on
//! success, 1 when a run fails, 2 for usage or configuration errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dataset::{
    load_mask, load_rgb, save_gray_png, save_rgb_png, scan_dataset, synthesize_glare,
    validate_dataset, write_dataset, Resolution, SamplePair,
};
use crate::error::{config_err, Error, Result};
use crate::evalkit::{
    evaluate, prepare_samples, run_ablation, train_fold, ImageMetrics, MetricSummary,
    PixelConfusion, RunConfig,
};
use crate::imgrep::{
    build_plane_set, contrast_map_strided, luminance, rgb_to_hsv, unit_to_u8, value_plane_255,
    Combo, ContrastParams, Raster, Representation, ScalarMap,
};
use crate::threshold::segment;
use crate::unet::Model;

#[derive(Debug, Parser)]
#[command(name = "glareseg", version, about = "Glare segmentation toolkit")]
pub struct Cli {
    /// Run configuration (JSON with dataset/model/train/ablation sections).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed (and the corpus seed for `synth`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the representation planes of one image.
    Represent(RepresentArgs),
    /// Train one model on a whole dataset.
    Train(TrainArgs),
    /// Glare probability and Otsu mask for images.
    Predict(PredictArgs),
    /// Metrics of a model on a dataset, or of mask folders against each other.
    Eval(EvalArgs),
    /// Cross-validated comparison of representation combinations.
    Ablate(AblateArgs),
    /// Write a synthetic glare dataset.
    Synth(SynthArgs),
    /// Check a dataset directory.
    ValidateData(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RepresentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub combo: Combo,
    #[arg(long)]
    pub out: PathBuf,
    /// Lattice spacing of the contrast map.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Contrast window side (odd).
    #[arg(long)]
    pub window: Option<usize>,
    /// Also write hue/saturation/value, luminance and contrast when the
    /// combination does not include them.
    #[arg(long)]
    pub keep_intermediates: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root; overrides the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub combo: Option<Combo>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, conflicts_with_all = ["pred_dir", "truth_dir"], requires = "data")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Predicted masks (oracle mode, no model).
    #[arg(long, requires = "truth_dir")]
    pub pred_dir: Option<PathBuf>,
    #[arg(long, requires = "pred_dir")]
    pub truth_dir: Option<PathBuf>,
    /// JSON output path.
    #[arg(long, default_value = "eval.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated subset of combinations, e.g. `RGB+G,C`.
    #[arg(long, value_delimiter = ',')]
    pub combos: Option<Vec<Combo>>,
    /// Output directory for ablation.csv, ablation.json, ablation.md and
    /// ablation.timing.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    /// `128` or `128x96`.
    #[arg(long)]
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Entry point of the `glareseg` binary.
pub fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_usage() { 2 } else { 1 });
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(config_err("--jobs must be >= 1"));
        }
        // A second call in the same process fails; the first pool stays.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    match cli.command {
        Command::Represent(a) => represent(&cfg, &a),
        Command::Train(a) => train(cfg, &a),
        Command::Predict(a) => predict(&a),
        Command::Eval(a) => eval(&a),
        Command::Ablate(a) => ablate(cfg, &a),
        Command::Synth(a) => synth(&cfg, cli.seed, &a),
        Command::ValidateData(a) => validate(&a),
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_file(p: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(p, bytes).map_err(|e| Error::io(p, e))
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ))
    }
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

/// Samples from `--data`, `dataset.root` or `dataset.synthetic`, in that
/// order of preference, at the configured resolution.
fn load_samples(cfg: &RunConfig, data: Option<&Path>) -> Result<Vec<SamplePair>> {
    let res = cfg.dataset.resolution;
    if let Some(root) = data.or(cfg.dataset.root.as_deref()) {
        let mut manifest = scan_dataset(root)?;
        manifest.resolution = res;
        return manifest.load_all();
    }
    match &cfg.dataset.synthetic {
        Some(s) => synthesize_glare(s.seed, s.count, res, &s.params),
        None => Err(config_err(
            "no dataset: pass --data or set dataset.root or dataset.synthetic",
        )),
    }
}

fn gray_png(dir: &Path, name: &str, map: &ScalarMap, scale: f64) -> Result<()> {
    let gray = map.data.iter().map(|&v| unit_to_u8(v * scale)).collect();
    save_gray_png(
        &dir.join(format!("{name}.png")),
        map.height,
        map.width,
        gray,
    )
}

fn write_f32(
    dir: &Path,
    name: &str,
    raster: &Raster,
    index: &mut BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    let file = format!("{name}.f32");
    write_file(&dir.join(&file), raster.to_f32_le_bytes())?;
    index.insert(
        name.to_string(),
        json!({
            "file": file,
            "channels": raster.channels(),
            "height": raster.height(),
            "width": raster.width(),
        }),
    );
    Ok(())
}

fn max_scale(map: &ScalarMap) -> f64 {
    let m = map.data.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        1.0 / m
    } else {
        1.0
    }
}

fn represent(cfg: &RunConfig, a: &RepresentArgs) -> Result<()> {
    require_file(&a.input)?;
    let mut params = cfg.train.contrast;
    if let Some(k) = a.stride {
        params.stride_k = k;
    }
    if let Some(n) = a.window {
        params.window_n = n;
        params.window_m = n;
    }
    params.validate()?;
    let rgb = load_rgb(&a.input, None)?;
    let planes = build_plane_set(&rgb, a.combo, &params)?;
    create_dir(&a.out)?;
    let mut index = BTreeMap::new();
    for e in &planes.entries {
        let r = &e.raster;
        match e.representation {
            Representation::Rgb => save_rgb_png(&a.out.join("rgb.png"), &rgb)?,
            Representation::Hsv => {
                for (c, name) in ["hsv_h", "hsv_s", "hsv_v"].iter().enumerate() {
                    gray_png(&a.out, name, &r.channel(c), 1.0)?;
                }
            }
            Representation::G => {
                let bytes = (0..r.pixels())
                    .flat_map(|i| (0..3).map(move |c| unit_to_u8(r.data()[c * r.pixels() + i])))
                    .collect::<Vec<u8>>();
                let img = crate::imgrep::RgbImage::from_rgb8(r.height(), r.width(), &bytes)?;
                save_rgb_png(&a.out.join("photometric.png"), &img)?;
            }
            Representation::C => {
                let c = r.channel(0);
                gray_png(&a.out, "contrast", &c, max_scale(&c))?;
            }
        }
        write_f32(&a.out, e.representation.name(), r, &mut index)?;
    }
    if a.keep_intermediates {
        let hsv = rgb_to_hsv(&rgb);
        for (c, name) in ["hue", "saturation", "value"].iter().enumerate() {
            gray_png(&a.out, name, &hsv.channel(c), 1.0)?;
        }
        let l = luminance(&value_plane_255(&hsv));
        gray_png(&a.out, "luminance", &l, max_scale(&l))?;
        write_f32(&a.out, "luminance", &l.clone().into(), &mut index)?;
        if !a.combo.contains(Representation::C) {
            let c = contrast_map_strided(&l, &params)?;
            gray_png(&a.out, "contrast", &c, max_scale(&c))?;
            write_f32(&a.out, "contrast", &c.into(), &mut index)?;
        }
    }
    let doc = json!({ "combo": a.combo.label(), "contrast": params, "planes": index });
    write_file(
        &a.out.join("planes.json"),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    println!("wrote {} planes to {}", index.len(), a.out.display());
    Ok(())
}

/// Settings a checkpoint needs to reproduce its inputs.
#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointMeta {
    combo: Combo,
    resolution: Resolution,
    contrast: ContrastParams,
    seed: u64,
    config_digest: String,
}

fn train(mut cfg: RunConfig, a: &TrainArgs) -> Result<()> {
    if let Some(c) = a.combo {
        cfg.train.combo = c;
    }
    cfg.validate()?;
    let samples = load_samples(&cfg, a.data.as_deref())?;
    let unet = cfg.model.unet(cfg.train.combo);
    let prepared = prepare_samples(&samples, cfg.train.combo, &cfg.train.contrast)?;
    let refs: Vec<_> = prepared.iter().collect();
    let t0 = Instant::now();
    let outcome = train_fold(&unet, &cfg.train, cfg.train.seed, &refs)?;
    log::info!(
        "trained {} on {} samples for {} steps in {:.1}s",
        cfg.train.combo.label(),
        samples.len(),
        outcome.losses.len(),
        t0.elapsed().as_secs_f64()
    );
    let meta = CheckpointMeta {
        combo: cfg.train.combo,
        resolution: cfg.dataset.resolution,
        contrast: cfg.train.contrast,
        seed: cfg.train.seed,
        config_digest: cfg.digest(),
    };
    write_file(
        &a.out,
        outcome.model.to_checkpoint(serde_json::to_value(&meta)?)?,
    )?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        csv += &format!("{i},{l}\n");
    }
    let loss_path = a
        .loss_csv
        .clone()
        .unwrap_or_else(|| a.out.with_extension("loss.csv"));
    write_file(&loss_path, csv)?;
    println!(
        "checkpoint {} ({} steps)",
        a.out.display(),
        outcome.losses.len()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<(Model<f32>, CheckpointMeta)> {
    require_file(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (model, meta) = Model::<f32>::from_checkpoint(&bytes)?;
    let meta: CheckpointMeta = serde_json::from_value(meta)
        .map_err(|e| Error::Checkpoint(format!("{}: missing run metadata: {e}", path.display())))?;
    Ok((model, meta))
}

fn predict(a: &PredictArgs) -> Result<()> {
    let (model, meta) = load_model(&a.model)?;
    create_dir(&a.out)?;
    for input in &a.input {
        require_file(input)?;
        let rgb = load_rgb(input, Some(meta.resolution))?;
        let planes = build_plane_set(&rgb, meta.combo, &meta.contrast)?;
        let prob = model.forward(&planes)?;
        let (t, mask) = segment(&prob)?;
        let name = stem(input);
        gray_png(&a.out, &format!("{name}_prob"), &prob, 1.0)?;
        save_gray_png(
            &a.out.join(format!("{name}_mask.png")),
            mask.height,
            mask.width,
            mask.to_gray8(),
        )?;
        println!(
            "{name}: threshold {t:.4}, glare fraction {:.4}",
            mask.fraction()
        );
    }
    Ok(())
}

/// `dir/masks` when it exists, else `dir`.
fn mask_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("masks");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.insert(stem(&p), p);
        }
    }
    Ok(out)
}

/// Compares masks with equal stems in two folders.
fn oracle_summary(pred_dir: &Path, truth_dir: &Path) -> Result<MetricSummary> {
    let preds = png_stems(&mask_dir(pred_dir))?;
    let truths = png_stems(&mask_dir(truth_dir))?;
    if let Some(id) = truths.keys().find(|k| !preds.contains_key(*k)) {
        return Err(Error::Validation(format!(
            "no prediction for {id:?} in {}",
            pred_dir.display()
        )));
    }
    if truths.is_empty() {
        return Err(Error::NoSamples(truth_dir.to_path_buf()));
    }
    let images = truths
        .iter()
        .map(|(id, t)| {
            let truth = load_mask(t, None)?;
            let pred = load_mask(&preds[id], None)?;
            let confusion = PixelConfusion::compare(&pred, &truth)?;
            Ok(ImageMetrics {
                id: id.clone(),
                confusion,
                threshold: 0.5,
                metrics: confusion.metrics(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricSummary::from_images(images)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let summary = match (&a.model, &a.pred_dir, &a.truth_dir) {
        (Some(model), _, _) => {
            let (model, meta) = load_model(model)?;
            let data = a
                .data
                .as_deref()
                .ok_or_else(|| config_err("--model needs --data"))?;
            let mut manifest = scan_dataset(data)?;
            manifest.resolution = meta.resolution;
            let samples = manifest.load_all()?;
            let prepared = prepare_samples(&samples, meta.combo, &meta.contrast)?;
            evaluate(&model, &prepared.iter().collect::<Vec<_>>())?
        }
        (None, Some(p), Some(t)) => oracle_summary(p, t)?,
        _ => {
            return Err(config_err(
                "eval needs --model with --data, or --pred-dir with --truth-dir",
            ))
        }
    };
    print!("{}", summary.render_table());
    write_file(&a.out, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

fn ablate(mut cfg: RunConfig, a: &AblateArgs) -> Result<()> {
    if let Some(c) = &a.combos {
        cfg.ablation.combos = Some(c.clone());
    }
    cfg.validate()?;
    let samples = load_samples(&cfg, a.data.as_deref())?;
    let t0 = Instant::now();
    let (report, _) = run_ablation(&cfg, &samples)?;
    let seconds = t0.elapsed().as_secs_f64();
    create_dir(&a.out)?;
    write_file(&a.out.join("ablation.csv"), report.to_csv())?;
    write_file(&a.out.join("ablation.json"), report.to_json())?;
    write_file(&a.out.join("ablation.md"), report.to_markdown())?;
    let timing = json!({ "wall_seconds": seconds, "samples": samples.len(), "columns": report.columns.len() });
    write_file(
        &a.out.join("ablation.timing.json"),
        serde_json::to_string_pretty(&timing)? + "\n",
    )?;
    print!("{}", report.to_markdown());
    Ok(())
}

fn synth(cfg: &RunConfig, seed: Option<u64>, a: &SynthArgs) -> Result<()> {
    let base = cfg.dataset.synthetic.clone().unwrap_or_default();
    let count = a.count.unwrap_or(base.count);
    let res = a.resolution.unwrap_or(cfg.dataset.resolution);
    let samples = synthesize_glare(seed.unwrap_or(base.seed), count, res, &base.params)?;
    let manifest = write_dataset(&a.out, &samples)?;
    println!(
        "wrote {} samples at {res} to {}",
        manifest.len(),
        a.out.display()
    );
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let report = validate_dataset(&a.data)?;
    for s in &report.samples {
        for issue in &s.issues {
            println!("{}: {issue}", s.id);
        }
    }
    if let Some(p) = &a.json {
        write_file(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    let n = report.issue_count();
    println!("{} samples, {n} issues", report.samples.len());
    if n > 0 {
        return Err(Error::Validation(format!(
            "{n} issues in {}",
            a.data.display()
        )));
    }
    Ok(())
}
