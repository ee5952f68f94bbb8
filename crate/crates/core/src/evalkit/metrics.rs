use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::imgrep::BinaryMask;

/// Pixel counts with glare as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelConfusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl PixelConfusion {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn compare(pred: &BinaryMask, truth: &BinaryMask) -> Result<Self> {
        if (pred.height, pred.width) != (truth.height, truth.width) {
            return Err(config_err(format!(
                "prediction is {}x{} but ground truth is {}x{}",
                pred.height, pred.width, truth.height, truth.width
            )));
        }
        let mut c = Self::default();
        for (&p, &t) in pred.data.iter().zip(&truth.data) {
            match (p, t) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Empty prediction and empty ground truth: a perfect result.
    fn both_empty(&self) -> bool {
        self.tp + self.fp == 0 && self.tp + self.fn_ == 0
    }

    pub fn precision(&self) -> f64 {
        match self.tp + self.fp {
            0 if self.both_empty() => 1.0,
            0 => 0.0,
            n => self.tp as f64 / n as f64,
        }
    }

    pub fn recall(&self) -> f64 {
        match self.tp + self.fn_ {
            0 if self.both_empty() => 1.0,
            0 => 0.0,
            n => self.tp as f64 / n as f64,
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
            accuracy: self.accuracy(),
        }
    }
}

/// The four reported metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["Precision", "Recall", "F1", "Accuracy"];

    pub fn values(&self) -> [f64; 4] {
        [self.precision, self.recall, self.f1, self.accuracy]
    }

    pub fn from_values(v: [f64; 4]) -> Self {
        Self {
            precision: v[0],
            recall: v[1],
            f1: v[2],
            accuracy: v[3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub confusion: PixelConfusion,
    pub threshold: f64,
    pub metrics: Metrics,
}

/// Mean and population std of per-image metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Metrics,
    pub std: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub images: Vec<ImageMetrics>,
    #[serde(flatten)]
    pub stats: MeanStd,
}

/// Sum of values in ascending order, so the result does not depend on the
/// order the values arrive in.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut v = values.to_vec();
    let mean = ordered_sum(&mut v) / n;
    let mut sq: Vec<f64> = values.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (ordered_sum(&mut sq) / n).sqrt())
}

impl MetricSummary {
    /// Pools per-image results; the statistics are independent of their order.
    pub fn from_images(images: Vec<ImageMetrics>) -> Result<Self> {
        if images.is_empty() {
            return Err(config_err("cannot summarize an empty split"));
        }
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        for k in 0..4 {
            let col: Vec<f64> = images.iter().map(|m| m.metrics.values()[k]).collect();
            (mean[k], std[k]) = mean_std(&col);
        }
        Ok(Self {
            images,
            stats: MeanStd {
                mean: Metrics::from_values(mean),
                std: Metrics::from_values(std),
            },
        })
    }

    /// Pools the per-image results of several summaries.
    pub fn pool(parts: impl IntoIterator<Item = MetricSummary>) -> Result<Self> {
        Self::from_images(parts.into_iter().flat_map(|s| s.images).collect())
    }

    /// Aligned two-column table (metric, mean ± std).
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<10} {:>8} {:>8}\n", "metric", "mean", "std");
        for (k, name) in Metrics::NAMES.iter().enumerate() {
            out += &format!(
                "{:<10} {:>8.4} {:>8.4}\n",
                name,
                self.stats.mean.values()[k],
                self.stats.std.values()[k]
            );
        }
        out += &format!("{:<10} {:>8}\n", "images", self.images.len());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(id: &str, c: PixelConfusion) -> ImageMetrics {
        ImageMetrics {
            id: id.into(),
            confusion: c,
            threshold: 0.5,
            metrics: c.metrics(),
        }
    }

    #[test]
    fn worked_example() {
        let c = PixelConfusion::new(3, 1, 2, 4);
        assert_eq!(c.precision(), 0.75);
        assert_eq!(c.recall(), 0.6);
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.accuracy(), 0.7);
    }

    #[test]
    fn empty_class_conventions() {
        let both = PixelConfusion::new(0, 0, 0, 9);
        assert_eq!(both.metrics().values(), [1.0; 4]);
        let missed = PixelConfusion::new(0, 0, 4, 5);
        assert_eq!(
            (missed.precision(), missed.recall(), missed.f1()),
            (0.0, 0.0, 0.0)
        );
        let false_alarm = PixelConfusion::new(0, 3, 0, 6);
        assert_eq!((false_alarm.precision(), false_alarm.recall()), (0.0, 0.0));
    }

    #[test]
    fn inverted_prediction_has_zero_accuracy() {
        let truth = BinaryMask::new(2, 2, vec![1, 0, 1, 0]).unwrap();
        let pred = BinaryMask::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        let c = PixelConfusion::compare(&pred, &truth).unwrap();
        assert_eq!(c.accuracy(), 0.0);
        assert_eq!(c, PixelConfusion::new(0, 2, 2, 0));
        assert!(PixelConfusion::compare(&BinaryMask::empty(1, 4), &truth).is_err());
    }

    #[test]
    fn perfect_split_summary() {
        let s = MetricSummary::from_images(vec![
            image("a", PixelConfusion::new(5, 0, 0, 3)),
            image("b", PixelConfusion::new(0, 0, 0, 8)),
        ])
        .unwrap();
        assert_eq!(s.stats.mean.values(), [1.0; 4]);
        assert_eq!(s.stats.std.values(), [0.0; 4]);
        assert!(MetricSummary::from_images(vec![]).is_err());
    }

    #[test]
    fn pooled_mean_is_per_image_not_per_fold() {
        let fold_a =
            MetricSummary::from_images(vec![image("a", PixelConfusion::new(1, 0, 0, 1))]).unwrap();
        let fold_b = MetricSummary::from_images(vec![
            image("b", PixelConfusion::new(0, 1, 1, 0)),
            image("c", PixelConfusion::new(0, 1, 1, 0)),
        ])
        .unwrap();
        let pooled = MetricSummary::pool([fold_a, fold_b]).unwrap();
        assert!((pooled.stats.mean.accuracy - 1.0 / 3.0).abs() < 1e-15);
        let expected_std =
            ((2.0f64 / 3.0).powi(2) / 3.0 + 2.0 * (1.0f64 / 3.0).powi(2) / 3.0).sqrt();
        assert!((pooled.stats.std.accuracy - expected_std).abs() < 1e-15);
    }

    fn confusion() -> impl Strategy<Value = PixelConfusion> {
        (0u64..50, 0u64..50, 0u64..50, 0u64..50)
            .prop_map(|(a, b, c, d)| PixelConfusion::new(a, b, c, d))
    }

    proptest! {
        #[test]
        fn metrics_in_unit_range(c in confusion()) {
            for v in c.metrics().values() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if c.tp == 0 && !(c.fp == 0 && c.fn_ == 0) {
                prop_assert_eq!(c.f1(), 0.0);
            }
            let (p, r) = (c.precision(), c.recall());
            prop_assert!(c.f1() <= p.max(r) + 1e-12);
            prop_assert!(c.f1() >= p.min(r) - 1e-12 || c.f1() == 0.0);
        }

        #[test]
        fn summary_is_order_invariant(cs in prop::collection::vec(confusion(), 1..12), rot in 0usize..12) {
            let imgs: Vec<_> = cs.iter().enumerate().map(|(i, &c)| image(&i.to_string(), c)).collect();
            let mut shuffled = imgs.clone();
            shuffled.rotate_left(rot % imgs.len());
            shuffled.reverse();
            let a = MetricSummary::from_images(imgs).unwrap();
            let b = MetricSummary::from_images(shuffled).unwrap();
            prop_assert_eq!(a.stats, b.stats);
            for v in a.stats.std.values() {
                prop_assert!(v >= 0.0);
            }
        }
    }
}
