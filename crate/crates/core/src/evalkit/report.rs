use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{MeanStd, Metrics};
use super::train::{cross_validate, CrossValidation};
use crate::dataset::SamplePair;
use crate::error::{config_err, Error, Result};
use crate::imgrep::Combo;

/// Row labels of the CSV report, in order.
pub const ROW_LABELS: [&str; 8] = [
    "Precision",
    "Std Precision",
    "Recall",
    "Std Recall",
    "F1",
    "Std F1",
    "Accuracy",
    "Std Accuracy",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportColumn {
    pub combo: Combo,
    #[serde(flatten)]
    pub stats: MeanStd,
}

impl ReportColumn {
    /// Values in CSV row order.
    fn rows(&self) -> [f64; 8] {
        let (m, s) = (self.stats.mean.values(), self.stats.std.values());
        [m[0], s[0], m[1], s[1], m[2], s[2], m[3], s[3]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub config_digest: String,
    pub folds: usize,
    pub samples: usize,
}

/// Cross-validated metrics per representation combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub meta: Option<ReportMeta>,
    pub columns: Vec<ReportColumn>,
}

impl AblationReport {
    pub fn column(&self, combo: Combo) -> Option<&ReportColumn> {
        self.columns.iter().find(|c| c.combo == combo)
    }

    /// Column with the highest mean of metric `k` (0 precision, 1 recall,
    /// 2 F1, 3 accuracy); the first one wins ties.
    pub fn best(&self, k: usize) -> Option<Combo> {
        let mut best: Option<&ReportColumn> = None;
        for c in &self.columns {
            if best.is_none_or(|b| c.stats.mean.values()[k] > b.stats.mean.values()[k]) {
                best = Some(c);
            }
        }
        best.map(|c| c.combo)
    }

    pub fn best_f1(&self) -> Option<Combo> {
        self.best(2)
    }

    /// Header plus eight metric rows, four decimals, `\n` line ends.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Metric");
        for c in &self.columns {
            out.push(',');
            out.push_str(c.combo.label());
        }
        out.push('\n');
        let rows: Vec<[f64; 8]> = self.columns.iter().map(ReportColumn::rows).collect();
        for (r, label) in ROW_LABELS.iter().enumerate() {
            out.push_str(label);
            for col in &rows {
                write!(out, ",{:.4}", col[r]).expect("string write");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV layout produced by [`AblationReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| config_err("empty report"))?;
        let mut cells = header.split(',');
        if cells.next() != Some("Metric") {
            return Err(config_err("report header must start with \"Metric\""));
        }
        let combos = cells.map(str::parse::<Combo>).collect::<Result<Vec<_>>>()?;
        let mut values = vec![[0.0; 8]; combos.len()];
        for (r, label) in ROW_LABELS.iter().enumerate() {
            let line = lines
                .next()
                .ok_or_else(|| config_err(format!("report is missing row {label:?}")))?;
            let mut cells = line.split(',');
            if cells.next() != Some(*label) {
                return Err(config_err(format!(
                    "expected row {label:?}, found {line:?}"
                )));
            }
            let row: Vec<&str> = cells.collect();
            if row.len() != combos.len() {
                return Err(config_err(format!(
                    "row {label:?} has {} values",
                    row.len()
                )));
            }
            for (c, v) in row.iter().enumerate() {
                values[c][r] = v
                    .trim()
                    .parse()
                    .map_err(|_| config_err(format!("bad number {v:?} in row {label:?}")))?;
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(config_err("unexpected trailing rows in report"));
        }
        let columns = combos
            .into_iter()
            .zip(values)
            .map(|(combo, v)| ReportColumn {
                combo,
                stats: MeanStd {
                    mean: Metrics::from_values([v[0], v[2], v[4], v[6]]),
                    std: Metrics::from_values([v[1], v[3], v[5], v[7]]),
                },
            })
            .collect();
        Ok(Self {
            meta: None,
            columns,
        })
    }

    /// JSON twin of the CSV with metadata and the per-metric best column.
    pub fn to_json(&self) -> String {
        let best: serde_json::Map<String, serde_json::Value> = Metrics::NAMES
            .iter()
            .enumerate()
            .filter_map(|(k, name)| Some((name.to_string(), self.best(k)?.label().into())))
            .collect();
        let doc = serde_json::json!({
            "meta": self.meta,
            "columns": self.columns,
            "best": best,
        });
        serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
    }

    /// Markdown table; the best mean of each metric is bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Metric |");
        for c in &self.columns {
            write!(out, " {} |", c.combo.label()).expect("string write");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        let best: Vec<Option<Combo>> = (0..4).map(|k| self.best(k)).collect();
        for (r, label) in ROW_LABELS.iter().enumerate() {
            write!(out, "| {label} |").expect("string write");
            for c in &self.columns {
                let v = c.rows()[r];
                if r % 2 == 0 && best[r / 2] == Some(c.combo) {
                    write!(out, " **{v:.4}** |").expect("string write");
                } else {
                    write!(out, " {v:.4} |").expect("string write");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Cross-validates every configured combination (in parallel on the
/// current rayon pool) and assembles the report in table order.
pub fn run_ablation(
    cfg: &RunConfig,
    samples: &[SamplePair],
) -> Result<(AblationReport, Vec<CrossValidation>)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "ablation needs at least one sample".into(),
        ));
    }
    let runs = cfg
        .ablation
        .columns()
        .into_par_iter()
        .map(|combo| {
            let mut train = cfg.train.clone();
            train.combo = combo;
            cross_validate(&cfg.model, &train, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = AblationReport {
        meta: Some(ReportMeta {
            seed: cfg.train.seed,
            config_digest: cfg.digest(),
            folds: cfg.train.folds,
            samples: samples.len(),
        }),
        columns: runs
            .iter()
            .map(|r| ReportColumn {
                combo: r.combo,
                stats: r.summary.stats,
            })
            .collect(),
    };
    Ok((report, runs))
}
