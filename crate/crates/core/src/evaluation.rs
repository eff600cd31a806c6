//! Metrics and reports against the empirical label distributions.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::divergence::{kl_unchecked, SmoothingPolicy};
use crate::error::{Error, Result};
use crate::learner::TrainedLearner;
use crate::types::{Dataset, LabelDistribution, Split};
use crate::util::{argmax, rng};

pub const HISTOGRAM_BINS: usize = 20;
pub const EXTREME_ITEMS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub kl: f64,
    pub true_argmax: usize,
    pub pred_argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyHistogram {
    /// Upper edge of the range, `ln d`.
    pub max: f64,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Option<Split>,
    pub mean_kl: f64,
    pub accuracy: f64,
    pub per_item: Vec<ItemResult>,
    pub entropy_histogram: EntropyHistogram,
    /// Free-form description of what produced the predictions (method, w,
    /// hyperparameter, learner config, seeds).
    pub fingerprint: BTreeMap<String, String>,
}

impl EvalReport {
    /// `id,kl,true_argmax,pred_argmax` rows.
    pub fn per_item_csv(&self) -> String {
        let mut out = String::from("id,kl,true_argmax,pred_argmax\n");
        for r in &self.per_item {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.id, r.kl, r.true_argmax, r.pred_argmax
            ));
        }
        out
    }
}

/// Scores any predictor against the empirical distributions of `split`.
pub fn evaluate_with<F>(split: &Dataset, s: SmoothingPolicy, mut predict: F) -> Result<EvalReport>
where
    F: FnMut(&[f64]) -> Result<LabelDistribution>,
{
    if split.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let mut per_item = Vec::with_capacity(split.len());
    for (item, y) in split.items().iter().zip(split.empirical()) {
        let pred = predict(&item.features)?;
        if pred.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                actual: pred.len(),
            });
        }
        per_item.push(ItemResult {
            id: item.id.clone(),
            kl: kl_unchecked(y.probs(), pred.probs(), s.epsilon()),
            true_argmax: argmax(y.probs()),
            pred_argmax: argmax(pred.probs()),
        });
    }
    let n = per_item.len() as f64;
    let mean_kl = per_item.iter().map(|r| r.kl).sum::<f64>() / n;
    let accuracy = per_item
        .iter()
        .filter(|r| r.true_argmax == r.pred_argmax)
        .count() as f64
        / n;
    Ok(EvalReport {
        split: split.split(),
        mean_kl,
        accuracy,
        per_item,
        entropy_histogram: entropy_histogram(split),
        fingerprint: BTreeMap::new(),
    })
}

pub fn evaluate(model: &TrainedLearner, split: &Dataset) -> Result<EvalReport> {
    let mut report = evaluate_with(split, SmoothingPolicy::default(), |x| model.predict(x))?;
    let c = &model.config;
    for (k, v) in [
        ("architecture", c.architecture.to_string()),
        ("hidden_dim", c.hidden_dim.to_string()),
        ("dropout", c.dropout.to_string()),
        ("learning_rate", c.learning_rate.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("max_epochs", c.max_epochs.to_string()),
        ("patience", c.patience.to_string()),
        ("learner_seed", c.seed.to_string()),
        ("best_epoch", model.best_epoch.to_string()),
    ] {
        report.fingerprint.insert(k.to_string(), v);
    }
    Ok(report)
}

/// Bin index of entropy `h` among `HISTOGRAM_BINS` equal bins over `[0, max]`.
fn bin_of(h: f64, max: f64) -> usize {
    if max <= 0.0 {
        return 0;
    }
    // snap values within rounding of the top edge into the last bin
    let x = (h / max * HISTOGRAM_BINS as f64).floor();
    (x.max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn entropy_histogram(ds: &Dataset) -> EntropyHistogram {
    let max = (ds.num_labels() as f64).ln();
    let mut counts = vec![0; HISTOGRAM_BINS];
    for y in ds.empirical() {
        counts[bin_of(y.entropy(), max)] += 1;
    }
    EntropyHistogram { max, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyItem {
    pub id: String,
    pub entropy: f64,
    pub distribution: LabelDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub mean_entropy: f64,
    pub histogram: EntropyHistogram,
    /// Highest entropy first.
    pub top: Vec<EntropyItem>,
    /// Lowest entropy first.
    pub bottom: Vec<EntropyItem>,
}

impl EntropyReport {
    /// Whitespace-separated `lower upper count` lines, one per bin.
    pub fn histogram_dat(&self) -> String {
        let w = self.histogram.max / HISTOGRAM_BINS as f64;
        self.histogram
            .counts
            .iter()
            .enumerate()
            .map(|(b, c)| format!("{} {} {}\n", b as f64 * w, (b + 1) as f64 * w, c))
            .collect()
    }
}

/// Histogram plus the `EXTREME_ITEMS` highest- and lowest-entropy items.
/// Ties keep dataset order.
pub fn entropy_report(ds: &Dataset) -> Result<EntropyReport> {
    let mut items: Vec<EntropyItem> = ds
        .items()
        .iter()
        .zip(ds.empirical())
        .map(|(i, y)| EntropyItem {
            id: i.id.clone(),
            entropy: y.entropy(),
            distribution: y,
        })
        .collect();
    let mean_entropy = ds.mean_entropy()?;
    items.sort_by(|a, b| a.entropy.total_cmp(&b.entropy));
    let bottom: Vec<EntropyItem> = items.iter().take(EXTREME_ITEMS).cloned().collect();
    items.sort_by(|a, b| b.entropy.total_cmp(&a.entropy));
    let top = items.into_iter().take(EXTREME_ITEMS).collect();
    Ok(EntropyReport {
        mean_entropy,
        histogram: entropy_histogram(ds),
        top,
        bottom,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMode {
    LowestKl,
    DisagreeArgmax,
}

impl std::str::FromStr for SurfaceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest_kl" | "lowest-kl" => Ok(Self::LowestKl),
            "disagree_argmax" | "disagree-argmax" => Ok(Self::DisagreeArgmax),
            other => Err(Error::param(
                "mode",
                format!("unknown surface mode `{other}`"),
            )),
        }
    }
}

/// Picks `k` items for inspection. `k` larger than the split is clamped.
pub fn surface_examples(
    report: &EvalReport,
    k: usize,
    mode: SurfaceMode,
    seed: u64,
) -> Vec<ItemResult> {
    if k > report.per_item.len() {
        log::warn!(
            "requested {k} examples from a split of {}; clamping",
            report.per_item.len()
        );
    }
    match mode {
        SurfaceMode::LowestKl => {
            let mut sorted = report.per_item.clone();
            sorted.sort_by(|a, b| a.kl.total_cmp(&b.kl));
            sorted.truncate(k);
            sorted
        }
        SurfaceMode::DisagreeArgmax => {
            let pool: Vec<&ItemResult> = report
                .per_item
                .iter()
                .filter(|r| r.true_argmax != r.pred_argmax)
                .collect();
            pool.choose_multiple(&mut rng(seed), k.min(pool.len()))
                .map(|r| (*r).clone())
                .collect()
        }
    }
}
