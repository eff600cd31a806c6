//! Planted-cluster synthetic corpus.
//!
//! Items belong to one of `clusters` latent groups. Each group has a
//! feature centre and a population label distribution; an item's features
//! are its centre plus Gaussian noise, and its 3-10 annotations are drawn
//! from the group's label distribution by annotators sampled from a shared
//! pool. Pooling items of the same group recovers the population
//! distribution that a handful of annotations only estimates.

use rand::distr::weighted::WeightedIndex;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Annotation, DataItem, Dataset};
use crate::util::{rng, sub_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub clusters: usize,
    pub feature_dim: usize,
    pub labels: usize,
    pub min_annotators: usize,
    pub max_annotators: usize,
    pub annotator_pool: usize,
    /// Standard deviation of feature noise around the centre.
    pub feature_noise: f64,
    /// Standard deviation of the centres themselves.
    pub centre_scale: f64,
    /// Dirichlet concentration of each group's label distribution. Below 1,
    /// most groups have a dominant label.
    pub label_concentration: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            clusters: 8,
            feature_dim: 64,
            labels: 5,
            min_annotators: 3,
            max_annotators: 10,
            annotator_pool: 100,
            feature_noise: 0.75,
            centre_scale: 1.0,
            label_concentration: 0.3,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.clusters == 0 || self.clusters > self.n {
            return Err(Error::param("n", "need 1 ≤ clusters ≤ n"));
        }
        if self.labels < 2 {
            return Err(Error::param("labels", "need at least 2"));
        }
        if self.min_annotators == 0 || self.min_annotators > self.max_annotators {
            return Err(Error::param("annotators", "need 1 ≤ min ≤ max"));
        }
        if self.max_annotators > self.annotator_pool {
            return Err(Error::param(
                "annotator_pool",
                "smaller than max annotators per item",
            ));
        }
        if !(self.feature_noise >= 0.0
            && self.centre_scale >= 0.0
            && self.label_concentration > 0.0)
        {
            return Err(Error::param(
                "synth",
                "scales must be non-negative, concentration positive",
            ));
        }
        Ok(())
    }
}

/// A generated corpus together with its planted structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: Dataset,
    /// Planted group of each item, in item order.
    pub cluster_of: Vec<usize>,
    pub cluster_labels: Vec<Vec<f64>>,
    pub centres: Vec<Vec<f64>>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut r = rng(sub_seed(cfg.seed, 0));
    let centre = Normal::new(0.0, cfg.centre_scale)
        .map_err(|e| Error::param("centre_scale", e.to_string()))?;
    let noise = Normal::new(0.0, cfg.feature_noise)
        .map_err(|e| Error::param("feature_noise", e.to_string()))?;
    let gamma = Gamma::new(cfg.label_concentration, 1.0)
        .map_err(|e| Error::param("label_concentration", e.to_string()))?;

    let centres: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| {
            (0..cfg.feature_dim)
                .map(|_| centre.sample(&mut r))
                .collect()
        })
        .collect();
    // Dirichlet draws as normalized gammas
    let cluster_labels: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| {
            let g: Vec<f64> = (0..cfg.labels).map(|_| gamma.sample(&mut r)).collect();
            let z: f64 = g.iter().sum();
            g.into_iter().map(|v| v / z).collect()
        })
        .collect();
    let samplers = cluster_labels
        .iter()
        .map(|theta| WeightedIndex::new(theta).map_err(|e| Error::Numerical(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let mut items = Vec::with_capacity(cfg.n);
    let mut cluster_of = Vec::with_capacity(cfg.n);
    let width = cfg.n.to_string().len().max(5);
    for i in 0..cfg.n {
        // every group gets at least one item; the rest are uniform
        let c = if i < cfg.clusters {
            i
        } else {
            r.random_range(0..cfg.clusters)
        };
        let features = centres[c]
            .iter()
            .map(|m| m + noise.sample(&mut r))
            .collect();
        let k = r.random_range(cfg.min_annotators..=cfg.max_annotators);
        let who = index::sample(&mut r, cfg.annotator_pool, k);
        let mut counts = vec![0u32; cfg.labels];
        let annotations = who
            .iter()
            .map(|a| {
                let label = samplers[c].sample(&mut r);
                counts[label] += 1;
                Annotation {
                    annotator: format!("ann{a:03}"),
                    label,
                }
            })
            .collect();
        items.push(
            DataItem::new(format!("s{i:0width$}"), features, counts)?
                .with_annotations(annotations)?,
        );
        cluster_of.push(c);
    }
    let label_names = (0..cfg.labels).map(|j| format!("label{j}")).collect();
    Ok(SynthData {
        dataset: Dataset::new(items, label_names)?,
        cluster_of,
        cluster_labels,
        centres,
    })
}
