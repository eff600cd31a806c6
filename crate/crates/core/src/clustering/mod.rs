//! Generative and partitional stage-1 models.
//!
//! K-Means and the Gaussian mixture cluster the raw weighted concatenation;
//! the multinomial mixture and LDA consume the simplex embedding. All four
//! produce hard assignments, and an item's pooled label is the unweighted
//! mean of the empirical distributions in its cluster.

pub mod fmm;
pub mod gmm;
pub mod kmeans;
pub mod lda;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fmm::FmmPriors;

use crate::divergence::SmoothingPolicy;
use crate::error::{Error, Result};
use crate::mixing::{mix_dataset, FeatureSimplexTransform, MixedSpace};
use crate::types::{Dataset, LabelDistribution, PooledLabels};
use crate::util::mean_rows;
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    KMeans,
    Gmm,
    Fmm,
    Lda,
}

impl ClusterMethod {
    pub const ALL: [ClusterMethod; 4] = [Self::KMeans, Self::Gmm, Self::Fmm, Self::Lda];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::KMeans => "kmeans",
            Self::Gmm => "gmm",
            Self::Fmm => "fmm",
            Self::Lda => "lda",
        }
    }
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" | "km" => Ok(Self::KMeans),
            "gmm" => Ok(Self::Gmm),
            "fmm" => Ok(Self::Fmm),
            "lda" => Ok(Self::Lda),
            other => Err(Error::param(
                "method",
                format!("unknown clustering method `{other}`"),
            )),
        }
    }
}

/// How the multinomial mixture scales simplex points into pseudo-counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudocountMode {
    /// Each item's own annotation count.
    #[default]
    PerItem,
    /// `FmmPriors::pseudocount_scale` for every item.
    Fixed,
}

/// Method-specific fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClusterParams {
    KMeans {
        centroids: Vec<Vec<f64>>,
        inertia: f64,
        restart_inertias: Vec<f64>,
    },
    Gmm {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
        log_likelihood_trace: Vec<f64>,
    },
    Fmm {
        priors: FmmPriors,
        pseudocounts: PseudocountMode,
        weights: Vec<f64>,
        theta: Vec<Vec<f64>>,
        objective_trace: Vec<f64>,
    },
    Lda {
        alpha: f64,
        beta: f64,
        topic_word: Vec<Vec<f64>>,
    },
}

/// A fitted stage-1 clustering over a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub version: u32,
    pub method: ClusterMethod,
    pub p: usize,
    pub w: f64,
    pub seed: u64,
    pub params: ClusterParams,
    /// Item id → cluster index.
    pub assignments: BTreeMap<String, usize>,
    /// Mean empirical label distribution per cluster (`None` when empty).
    pub cluster_label_means: Vec<Option<LabelDistribution>>,
    pub cluster_sizes: Vec<usize>,
}

impl ClusterModel {
    fn build(
        method: ClusterMethod,
        ds: &Dataset,
        p: usize,
        w: f64,
        seed: u64,
        params: ClusterParams,
        assignments: &[usize],
    ) -> Result<Self> {
        let ys = ds.empirical();
        let mut members: Vec<Vec<&LabelDistribution>> = vec![Vec::new(); p];
        for (y, &k) in ys.iter().zip(assignments) {
            members[k].push(y);
        }
        let cluster_label_means = members
            .iter()
            .map(|m| {
                if m.is_empty() {
                    Ok(None)
                } else {
                    LabelDistribution::mean(m.iter().copied()).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            version: FORMAT_VERSION,
            method,
            p,
            w,
            seed,
            params,
            assignments: ds
                .items()
                .iter()
                .zip(assignments)
                .map(|(i, &k)| (i.id.clone(), k))
                .collect(),
            cluster_label_means,
            cluster_sizes: members.iter().map(Vec::len).collect(),
        })
    }

    /// Assignments in the item order of `ds`.
    pub fn assignments_for(&self, ds: &Dataset) -> Result<Vec<usize>> {
        ds.items()
            .iter()
            .map(|item| {
                self.assignments
                    .get(&item.id)
                    .copied()
                    .ok_or_else(|| Error::InvalidItem {
                        id: item.id.clone(),
                        reason: "not assigned to any cluster".into(),
                    })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        if model.version != FORMAT_VERSION {
            return Err(Error::Version {
                found: model.version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(model)
    }
}

fn points_of(
    ds: &Dataset,
    w: f64,
    t: &FeatureSimplexTransform,
    raw: bool,
) -> Result<Vec<Vec<f64>>> {
    let (_, mixed) = mix_dataset(ds, w, t)?;
    Ok(mixed
        .into_iter()
        .map(|m| if raw { m.raw } else { m.simplex })
        .collect())
}

/// K-Means on the raw mixed points of `ds`.
pub fn fit_kmeans(
    ds: &Dataset,
    w: f64,
    p: usize,
    seed: u64,
    t: &FeatureSimplexTransform,
) -> Result<ClusterModel> {
    let points = points_of(ds, w, t, true)?;
    let fit = kmeans::fit(&points, p, seed)?;
    let params = ClusterParams::KMeans {
        centroids: fit.centroids,
        inertia: fit.inertia,
        restart_inertias: fit.restart_inertias,
    };
    ClusterModel::build(
        ClusterMethod::KMeans,
        ds,
        p,
        w,
        seed,
        params,
        &fit.assignments,
    )
}

/// Diagonal GMM on the raw mixed points of `ds`.
pub fn fit_gmm(
    ds: &Dataset,
    w: f64,
    p: usize,
    seed: u64,
    t: &FeatureSimplexTransform,
) -> Result<ClusterModel> {
    let points = points_of(ds, w, t, true)?;
    let fit = gmm::fit(&points, p, seed)?;
    let params = ClusterParams::Gmm {
        weights: fit.weights,
        means: fit.means,
        variances: fit.variances,
        log_likelihood_trace: fit.log_likelihood_trace,
    };
    ClusterModel::build(ClusterMethod::Gmm, ds, p, w, seed, params, &fit.assignments)
}

/// Multinomial mixture on the simplex points of `ds`.
pub fn fit_fmm(
    ds: &Dataset,
    w: f64,
    p: usize,
    seed: u64,
    t: &FeatureSimplexTransform,
    priors: &FmmPriors,
    mode: PseudocountMode,
) -> Result<ClusterModel> {
    let points = points_of(ds, w, t, false)?;
    let scales: Vec<u32> = ds
        .items()
        .iter()
        .map(|i| match mode {
            PseudocountMode::PerItem => i.total_annotations(),
            PseudocountMode::Fixed => priors.pseudocount_scale,
        })
        .collect();
    let fit = fmm::fit(&points, &scales, p, seed, priors)?;
    let params = ClusterParams::Fmm {
        priors: *priors,
        pseudocounts: mode,
        weights: fit.weights,
        theta: fit.theta,
        objective_trace: fit.objective_trace,
    };
    ClusterModel::build(ClusterMethod::Fmm, ds, p, w, seed, params, &fit.assignments)
}

/// LDA on the simplex points of `ds`.
pub fn fit_lda(
    ds: &Dataset,
    w: f64,
    p: usize,
    seed: u64,
    t: &FeatureSimplexTransform,
) -> Result<ClusterModel> {
    let points = points_of(ds, w, t, false)?;
    let fit = lda::fit(&points, p, seed)?;
    let params = ClusterParams::Lda {
        alpha: fit.alpha,
        beta: fit.beta,
        topic_word: fit.topic_word,
    };
    ClusterModel::build(ClusterMethod::Lda, ds, p, w, seed, params, &fit.assignments)
}

/// Dispatches on `method` with default priors.
pub fn fit_cluster_model(
    method: ClusterMethod,
    ds: &Dataset,
    w: f64,
    p: usize,
    seed: u64,
    t: &FeatureSimplexTransform,
) -> Result<ClusterModel> {
    match method {
        ClusterMethod::KMeans => fit_kmeans(ds, w, p, seed, t),
        ClusterMethod::Gmm => fit_gmm(ds, w, p, seed, t),
        ClusterMethod::Fmm => fit_fmm(
            ds,
            w,
            p,
            seed,
            t,
            &FmmPriors::default(),
            PseudocountMode::PerItem,
        ),
        ClusterMethod::Lda => fit_lda(ds, w, p, seed, t),
    }
}

/// `ŷ_i` = mean empirical distribution of item i's cluster.
pub fn pooled_labels(model: &ClusterModel, ds: &Dataset) -> Result<PooledLabels> {
    let assignments = model.assignments_for(ds)?;
    ds.items()
        .iter()
        .zip(assignments)
        .map(|(item, k)| {
            let mean = model
                .cluster_label_means
                .get(k)
                .and_then(Option::as_ref)
                .ok_or_else(|| Error::InvalidItem {
                    id: item.id.clone(),
                    reason: format!("assigned to empty or unknown cluster {k}"),
                })?;
            Ok((item.id.clone(), mean.clone()))
        })
        .collect()
}

/// Mean over items of `KL(simplex_i ‖ centroid of its cluster)`, where the
/// centroid is the mean simplex vector of the cluster's members.
pub fn assignment_score(
    space: &MixedSpace,
    simplex: &[Vec<f64>],
    assignments: &[usize],
    s: SmoothingPolicy,
) -> Result<f64> {
    if simplex.is_empty() {
        return Err(Error::Empty("point set"));
    }
    if simplex.len() != assignments.len() {
        return Err(Error::LengthMismatch {
            expected: simplex.len(),
            actual: assignments.len(),
        });
    }
    let p = assignments.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); p];
    for (x, &k) in simplex.iter().zip(assignments) {
        members[k].push(x);
    }
    let centroids: Vec<Vec<f64>> = members
        .iter()
        .map(|m| mean_rows(m.iter().copied(), space.dim()))
        .collect();
    let total: f64 = simplex
        .iter()
        .zip(assignments)
        .map(|(x, &k)| space.kl(x, &centroids[k], s))
        .sum();
    Ok(total / simplex.len() as f64)
}

/// Stage-1 objective of a fitted cluster model on the split it was fitted on.
pub fn cluster_stage1_score(
    model: &ClusterModel,
    ds: &Dataset,
    t: &FeatureSimplexTransform,
    s: SmoothingPolicy,
) -> Result<f64> {
    let (space, mixed) = mix_dataset(ds, model.w, t)?;
    let simplex: Vec<Vec<f64>> = mixed.into_iter().map(|m| m.simplex).collect();
    assignment_score(&space, &simplex, &model.assignments_for(ds)?, s)
}
