use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::metrics::{ImageMetrics, MetricSummary, PixelConfusion};
use crate::dataset::SamplePair;
use crate::error::{config_err, Error, Result};
use crate::imgrep::{build_plane_set, BinaryMask, Combo, ContrastParams};
use crate::nncore::{LossWeights, Optimizer, Tensor};
use crate::threshold::segment;
use crate::unet::{build_model, Model, UNetConfig};

/// One cross-validation split, as indices into the sample list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded shuffle of `0..n`, cut into `k` contiguous validation blocks
/// whose sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k == 0 || k > n {
        return Err(config_err(format!(
            "cannot make {k} folds from {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = n / k + usize::from(i < n % k);
        let validation = order[start..start + len].to_vec();
        let train = order[..start]
            .iter()
            .chain(&order[start + len..])
            .copied()
            .collect();
        folds.push(Fold {
            index: i,
            train,
            validation,
        });
        start += len;
    }
    Ok(folds)
}

pub fn class_weights(mask: &BinaryMask) -> LossWeights {
    LossWeights::balanced(mask.height, mask.width, &mask.data).expect("mask geometry is consistent")
}

/// A sample with its network inputs computed once.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub id: String,
    /// One `(1, C, H, W)` tensor per branch, canonical order.
    pub inputs: Vec<Tensor<f32>>,
    pub mask: BinaryMask,
    pub weights: Vec<f32>,
}

pub fn prepare_samples(
    samples: &[SamplePair],
    combo: Combo,
    contrast: &ContrastParams,
) -> Result<Vec<PreparedSample>> {
    samples
        .par_iter()
        .map(|s| {
            if (s.mask.height, s.mask.width) != (s.image.height(), s.image.width()) {
                return Err(config_err(format!("{}: image and mask sizes differ", s.id)));
            }
            let planes = build_plane_set(&s.image, combo, contrast)?;
            let inputs = planes
                .entries
                .iter()
                .map(|e| {
                    let r = &e.raster;
                    let data = r.data().iter().map(|&v| v as f32).collect();
                    Tensor::from_vec(&[1, r.channels(), r.height(), r.width()], data)
                })
                .collect::<Result<Vec<_>>>()?;
            let weights = class_weights(&s.mask)
                .data
                .iter()
                .map(|&w| w as f32)
                .collect();
            Ok(PreparedSample {
                id: s.id.clone(),
                inputs,
                mask: s.mask.clone(),
                weights,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    /// Mini-batch loss before each optimizer step.
    pub losses: Vec<f64>,
}

/// Stacked branch inputs, labels and loss weights of one mini-batch.
type Batch = (Vec<Tensor<f32>>, Vec<u8>, Vec<f32>);

fn batch_of(samples: &[&PreparedSample], idx: &[usize]) -> Result<Batch> {
    let branches = samples[idx[0]].inputs.len();
    let inputs = (0..branches)
        .map(|b| {
            Tensor::stack_batch(
                &idx.iter()
                    .map(|&i| &samples[i].inputs[b])
                    .collect::<Vec<_>>(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = idx
        .iter()
        .flat_map(|&i| samples[i].mask.data.iter().copied())
        .collect();
    let weights = idx
        .iter()
        .flat_map(|&i| samples[i].weights.iter().copied())
        .collect();
    Ok((inputs, labels, weights))
}

/// Trains a freshly initialized model on `samples`. Initialization and
/// batch order both derive from `seed`.
pub fn train_fold(
    unet: &UNetConfig,
    train: &TrainConfig,
    seed: u64,
    samples: &[&PreparedSample],
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(config_err("training split is empty"));
    }
    train.validate()?;
    let mut model: Model<f32> = build_model(unet, seed)?;
    let mut opt = Optimizer::new(train.optimizer, train.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let steps = train.total_steps(samples.len());
    let mut losses = Vec::with_capacity(steps);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    for step in 0..steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + train.batch_size).min(order.len());
        let (inputs, labels, weights) = batch_of(samples, &order[cursor..end])?;
        cursor = end;
        let (loss, grads) =
            model
                .loss_and_grads(&inputs, &labels, &weights)
                .map_err(|e| match e {
                    Error::Divergence { loss, .. } => Error::Divergence { step, loss },
                    other => other,
                })?;
        model.zero_grad();
        model.accumulate_grads(&grads);
        opt.step(&mut model.params_mut());
        losses.push(loss);
    }
    Ok(TrainOutcome { model, losses })
}

/// Glare probabilities for one prepared sample.
pub fn predict(model: &Model<f32>, sample: &PreparedSample) -> Result<crate::imgrep::ScalarMap> {
    Ok(model.predict_batch(&sample.inputs)?.remove(0))
}

/// Per image: forward, Otsu threshold, binarize, compare with the mask.
pub fn evaluate(model: &Model<f32>, samples: &[&PreparedSample]) -> Result<MetricSummary> {
    let images = samples
        .iter()
        .map(|s| {
            let (threshold, pred) = segment(&predict(model, s)?)?;
            let confusion = PixelConfusion::compare(&pred, &s.mask)?;
            Ok(ImageMetrics {
                id: s.id.clone(),
                confusion,
                threshold,
                metrics: confusion.metrics(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricSummary::from_images(images)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub index: usize,
    pub seed: u64,
    pub summary: MetricSummary,
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub combo: Combo,
    /// Per-image results of every fold, pooled.
    pub summary: MetricSummary,
    pub folds: Vec<FoldResult>,
}

/// k-fold cross-validation of `train.combo`. Fold `i` trains with seed
/// `train.seed + i`; folds run on the current rayon pool.
pub fn cross_validate(
    model: &ModelConfig,
    train: &TrainConfig,
    samples: &[SamplePair],
) -> Result<CrossValidation> {
    train.validate()?;
    let unet = model.unet(train.combo);
    unet.validate()?;
    let prepared = prepare_samples(samples, train.combo, &train.contrast)?;
    let folds = make_folds(prepared.len(), train.folds, train.seed)?;
    let results = folds
        .par_iter()
        .map(|fold| {
            let seed = train.seed.wrapping_add(fold.index as u64);
            let train_set: Vec<_> = fold.train.iter().map(|&i| &prepared[i]).collect();
            let val_set: Vec<_> = fold.validation.iter().map(|&i| &prepared[i]).collect();
            let outcome = train_fold(&unet, train, seed, &train_set)?;
            let summary = evaluate(&outcome.model, &val_set)?;
            log::info!(
                "{} fold {}/{}: F1 {:.4}, final loss {:.5}",
                train.combo,
                fold.index + 1,
                folds.len(),
                summary.stats.mean.f1,
                outcome.losses.last().copied().unwrap_or(f64::NAN)
            );
            Ok(FoldResult {
                index: fold.index,
                seed,
                summary,
                losses: outcome.losses,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = MetricSummary::pool(results.iter().map(|r| r.summary.clone()))?;
    Ok(CrossValidation {
        combo: train.combo,
        summary,
        folds: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize_glare, Resolution, SynthParams};
    use proptest::prelude::*;

    #[test]
    fn two_hundred_in_eight_folds() {
        let folds = make_folds(200, 8, 3).unwrap();
        assert!(folds
            .iter()
            .all(|f| f.validation.len() == 25 && f.train.len() == 175));
    }

    #[test]
    fn leave_one_out_and_errors() {
        let folds = make_folds(5, 5, 0).unwrap();
        assert!(folds.iter().all(|f| f.validation.len() == 1));
        assert!(make_folds(3, 4, 0).is_err());
        assert_eq!(make_folds(10, 3, 7).unwrap(), make_folds(10, 3, 7).unwrap());
    }

    proptest! {
        #[test]
        fn folds_partition(n in 1usize..60, k in 1usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = make_folds(n, k, seed).unwrap();
            let mut seen = vec![0u8; n];
            for f in &folds {
                for &i in &f.validation { seen[i] += 1; }
                prop_assert_eq!(f.train.len() + f.validation.len(), n);
                prop_assert!(f.train.iter().all(|i| !f.validation.contains(i)));
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<_> = folds.iter().map(|f| f.validation.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn weights_average_to_one(bits in prop::collection::vec(0u8..2, 2..80)) {
            let n = bits.len();
            let m = BinaryMask::new(1, n, bits).unwrap();
            let w = class_weights(&m);
            let mean = w.data.iter().sum::<f64>() / n as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn class_weight_examples() {
        let mut data = vec![0u8; 100];
        data[..10].fill(1);
        let w = class_weights(&BinaryMask::new(10, 10, data).unwrap());
        assert!((w.data[0] - 5.0).abs() < 1e-12);
        assert!((w.data[99] - 5.0 / 9.0).abs() < 1e-12);
        let half = class_weights(&BinaryMask::new(1, 2, vec![0, 1]).unwrap());
        assert_eq!(half.data, vec![1.0, 1.0]);
        assert_eq!(class_weights(&BinaryMask::empty(2, 2)).data, vec![1.0; 4]);
    }

    fn tiny() -> (Vec<SamplePair>, ModelConfig, TrainConfig) {
        let samples =
            synthesize_glare(1, 4, Resolution::square(16), &SynthParams::default()).unwrap();
        let model = ModelConfig {
            depth: 1,
            base_width: 2,
            convs_per_block: 1,
        };
        let train = TrainConfig {
            combo: "RGB".parse().unwrap(),
            epochs: 2,
            batch_size: 2,
            folds: 2,
            ..TrainConfig::default()
        };
        (samples, model, train)
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (samples, model, mut train) = tiny();
        train.learning_rate = 0.0;
        let prepared = prepare_samples(&samples, train.combo, &train.contrast).unwrap();
        let refs: Vec<_> = prepared.iter().collect();
        let unet = model.unet(train.combo);
        let out = train_fold(&unet, &train, 9, &refs).unwrap();
        let init: Model<f32> = build_model(&unet, 9).unwrap();
        assert_eq!(out.model.flat_params(), init.flat_params());
        assert_eq!(out.losses.len(), 4);
    }

    #[test]
    fn training_is_deterministic() {
        let (samples, model, train) = tiny();
        let a = cross_validate(&model, &train, &samples).unwrap();
        let b = cross_validate(&model, &train, &samples).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summary.images.len(), 4);
        assert_eq!(a.folds[1].seed, 1);
    }

    #[test]
    fn identical_folds_with_no_steps_agree() {
        let one = synthesize_glare(4, 1, Resolution::square(16), &SynthParams::default()).unwrap();
        let samples = vec![one[0].clone(); 4];
        let (_, model, mut train) = tiny();
        train.steps = Some(0);
        train.seed = 5;
        let prepared = prepare_samples(&samples, train.combo, &train.contrast).unwrap();
        let unet = model.unet(train.combo);
        let m: Model<f32> = build_model(&unet, 5).unwrap();
        let refs: Vec<_> = prepared.iter().collect();
        let a = evaluate(&m, &refs[..2]).unwrap();
        let b = evaluate(&m, &refs[2..]).unwrap();
        assert_eq!(a, b);
    }
}
