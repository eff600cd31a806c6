//! Domain types shared by every stage.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::argmax;

/// Tolerance on the unit-sum constraint of a distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A point on the probability simplex over `d ≥ 2` label choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 label choices, got {}",
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {bad} out of range"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative counts.
    pub fn from_counts(counts: &[u32]) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total == 0 {
            return Err(Error::InvalidDistribution("all counts are zero".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    /// Point mass at `index`.
    pub fn one_hot(d: usize, index: usize) -> Result<Self> {
        if index >= d {
            return Err(Error::param("index", format!("{index} >= {d}")));
        }
        let mut probs = vec![0.0; d];
        probs[index] = 1.0;
        Self::new(probs)
    }

    pub fn uniform(d: usize) -> Result<Self> {
        Self::new(vec![1.0 / d as f64; d])
    }

    /// Mean of several distributions, accumulated in iteration order.
    pub fn mean<'a, I>(dists: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a LabelDistribution>,
    {
        let mut iter = dists.into_iter();
        let first = iter.next().ok_or(Error::Empty("distribution list"))?;
        let mut acc = first.0.clone();
        let mut n = 1usize;
        for dist in iter {
            if dist.len() != acc.len() {
                return Err(Error::LengthMismatch {
                    expected: acc.len(),
                    actual: dist.len(),
                });
            }
            for (a, p) in acc.iter_mut().zip(&dist.0) {
                *a += p;
            }
            n += 1;
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        Self::new(acc)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable label, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(d: LabelDistribution) -> Self {
        d.0
    }
}

/// Shannon entropy (nats) of one item's distribution.
pub fn item_entropy(y: &LabelDistribution) -> f64 {
    y.entropy()
}

/// One annotator's response to one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator: String,
    pub label: usize,
}

/// One annotated item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItem {
    pub id: String,
    pub text: Option<String>,
    pub features: Vec<f64>,
    pub counts: Vec<u32>,
    pub annotations: Option<Vec<Annotation>>,
}

impl DataItem {
    pub fn new(id: impl Into<String>, features: Vec<f64>, counts: Vec<u32>) -> Result<Self> {
        let item = Self {
            id: id.into(),
            text: None,
            features,
            counts,
            annotations: None,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    /// Attaches annotator-level labels; their histogram must equal `counts`.
    pub fn with_annotations(mut self, annotations: Vec<Annotation>) -> Result<Self> {
        self.annotations = Some(annotations);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidItem {
            id: self.id.clone(),
            reason,
        };
        if self.counts.iter().all(|&c| c == 0) {
            return Err(bad("no annotations (all counts are zero)".into()));
        }
        if let Some(bad_f) = self.features.iter().find(|f| !f.is_finite()) {
            return Err(bad(format!("non-finite feature {bad_f}")));
        }
        if let Some(anns) = &self.annotations {
            let mut hist = vec![0u32; self.counts.len()];
            for a in anns {
                let slot = hist.get_mut(a.label).ok_or_else(|| {
                    bad(format!("annotation label index {} out of range", a.label))
                })?;
                *slot += 1;
            }
            if hist != self.counts {
                return Err(bad(format!(
                    "annotation histogram {hist:?} disagrees with counts {:?}",
                    self.counts
                )));
            }
        }
        Ok(())
    }

    pub fn total_annotations(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// `counts / sum(counts)`.
    pub fn empirical_distribution(&self) -> Result<LabelDistribution> {
        LabelDistribution::from_counts(&self.counts).map_err(|_| Error::InvalidItem {
            id: self.id.clone(),
            reason: "cannot normalize all-zero counts".into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::param("split", format!("unknown split `{other}`"))),
        }
    }
}

/// A validated corpus: unique ids, one label set, one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    items: Vec<DataItem>,
    label_names: Vec<String>,
    split: Option<Split>,
}

impl Dataset {
    pub fn new(items: Vec<DataItem>, label_names: Vec<String>) -> Result<Self> {
        let ds = Self {
            items,
            label_names,
            split: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let d = self.label_names.len();
        if d < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 label names, got {d}"
            )));
        }
        let mut seen = HashSet::with_capacity(self.items.len());
        let feature_dim = self.items.first().map(|i| i.features.len());
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate id `{}`", item.id)));
            }
            if item.counts.len() != d {
                return Err(Error::InvalidItem {
                    id: item.id.clone(),
                    reason: format!("{} counts for {d} labels", item.counts.len()),
                });
            }
            if Some(item.features.len()) != feature_dim {
                return Err(Error::InvalidItem {
                    id: item.id.clone(),
                    reason: format!(
                        "feature length {} differs from dataset dimension {}",
                        item.features.len(),
                        feature_dim.unwrap_or(0)
                    ),
                });
            }
            item.validate()?;
        }
        Ok(())
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn split(&self) -> Option<Split> {
        self.split
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of label choices `d`.
    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    /// Feature dimension `D` (0 when the corpus carries no features).
    pub fn feature_dim(&self) -> usize {
        self.items.first().map_or(0, |i| i.features.len())
    }

    pub fn require_features(&self) -> Result<usize> {
        match self.feature_dim() {
            0 => Err(Error::InvalidDataset(
                "items carry no feature vectors; run the embedding exporter first".into(),
            )),
            dim => Ok(dim),
        }
    }

    /// Empirical label distributions in item order.
    pub fn empirical(&self) -> Vec<LabelDistribution> {
        // Items are validated on construction, so normalization cannot fail.
        self.items
            .iter()
            .map(|i| i.empirical_distribution().expect("validated item"))
            .collect()
    }

    /// Unweighted mean entropy over items.
    pub fn mean_entropy(&self) -> Result<f64> {
        if self.items.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let total: f64 = self.empirical().iter().map(item_entropy).sum();
        Ok(total / self.items.len() as f64)
    }

    /// A new dataset over the items at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            label_names: self.label_names.clone(),
            split: self.split,
        }
    }

    pub fn into_items(self) -> Vec<DataItem> {
        self.items
    }
}

/// Mean per-item entropy of a dataset.
pub fn dataset_mean_entropy(ds: &Dataset) -> Result<f64> {
    ds.mean_entropy()
}

/// Per-item target distributions (pooled `ŷ` or baseline targets), keyed by id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PooledLabels(BTreeMap<String, LabelDistribution>);

impl PooledLabels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, dist: LabelDistribution) {
        self.0.insert(id.into(), dist);
    }

    pub fn get(&self, id: &str) -> Option<&LabelDistribution> {
        self.0.get(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &LabelDistribution)> {
        self.0.iter()
    }

    /// Checks that the keys are exactly the ids of `ds` and dimensions agree.
    pub fn validate_for(&self, ds: &Dataset) -> Result<()> {
        if self.0.len() != ds.len() {
            return Err(Error::InvalidDataset(format!(
                "{} pooled labels for {} items",
                self.0.len(),
                ds.len()
            )));
        }
        for item in ds.items() {
            let dist = self.0.get(&item.id).ok_or_else(|| Error::InvalidItem {
                id: item.id.clone(),
                reason: "no pooled label".into(),
            })?;
            if dist.len() != ds.num_labels() {
                return Err(Error::LengthMismatch {
                    expected: ds.num_labels(),
                    actual: dist.len(),
                });
            }
        }
        Ok(())
    }

    /// Targets for the items of `ds`, in item order.
    pub fn targets_for(&self, ds: &Dataset) -> Result<Vec<LabelDistribution>> {
        self.validate_for(ds)?;
        Ok(ds.items().iter().map(|i| self.0[&i.id].clone()).collect())
    }
}

impl FromIterator<(String, LabelDistribution)> for PooledLabels {
    fn from_iter<T: IntoIterator<Item = (String, LabelDistribution)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}
