//! Reference target sources: raw empirical distributions (PD), one-hot
//! majority labels (SL), and Dawid-Skene posteriors (DS).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, LabelDistribution, PooledLabels};
use crate::util::{log_sum_exp, rng, sub_seed};

/// Empirical distributions, unchanged.
pub fn pd_targets(ds: &Dataset) -> PooledLabels {
    ds.items()
        .iter()
        .zip(ds.empirical())
        .map(|(i, y)| (i.id.clone(), y))
        .collect()
}

/// One-hot at the most frequent label, lowest index on ties.
pub fn sl_targets(ds: &Dataset) -> PooledLabels {
    let d = ds.num_labels();
    ds.items()
        .iter()
        .map(|item| {
            let mut best = 0;
            for (j, &c) in item.counts.iter().enumerate() {
                if c > item.counts[best] {
                    best = j;
                }
            }
            (
                item.id.clone(),
                LabelDistribution::one_hot(d, best).expect("index below d"),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DawidSkeneConfig {
    /// Additive smoothing on the class prior and every confusion row.
    pub smoothing: f64,
    pub max_iter: usize,
    /// Stop once no posterior entry moves more than this.
    pub tol: f64,
    pub seed: u64,
    /// Build positional pseudo-annotators from counts when annotator ids
    /// are missing.
    pub synthesize: bool,
}

impl Default for DawidSkeneConfig {
    fn default() -> Self {
        Self {
            smoothing: 0.01,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            synthesize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DawidSkeneModel {
    pub class_prior: LabelDistribution,
    /// `confusion[a][true][observed]`, rows sum to 1.
    pub confusion: Vec<Vec<Vec<f64>>>,
    pub annotator_index: BTreeMap<String, usize>,
    pub item_posteriors: BTreeMap<String, LabelDistribution>,
    /// True when annotators were synthesized from counts.
    pub synthetic: bool,
    /// Penalized log-likelihood after each E-step; non-decreasing.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DawidSkeneModel {
    pub fn targets(&self) -> PooledLabels {
        self.item_posteriors
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

/// Per-item `(annotator index, label)` lists plus the annotator index.
type Observations = (Vec<Vec<(usize, usize)>>, BTreeMap<String, usize>);

fn observations(ds: &Dataset, cfg: &DawidSkeneConfig) -> Result<(Observations, bool)> {
    let with = ds
        .items()
        .iter()
        .filter(|i| i.annotations.is_some())
        .count();
    let mut index = BTreeMap::new();
    if with == ds.len() && !cfg.synthesize {
        let mut obs = Vec::with_capacity(ds.len());
        for item in ds.items() {
            let anns = item.annotations.as_ref().expect("checked above");
            let row = anns
                .iter()
                .map(|a| {
                    let next = index.len();
                    (*index.entry(a.annotator.clone()).or_insert(next), a.label)
                })
                .collect();
            obs.push(row);
        }
        return Ok(((obs, index), false));
    }
    if !cfg.synthesize {
        return Err(Error::InvalidDataset(if with == 0 {
            "Dawid-Skene needs annotator ids, but the dataset has none; \
             enable synthesis mode to use positional pseudo-annotators"
                .into()
        } else {
            format!(
                "{} of {} items lack annotator ids; enable synthesis mode to use \
                 positional pseudo-annotators",
                ds.len() - with,
                ds.len()
            )
        }));
    }
    // annotation k of each item (in a seeded shuffle of its counts) → "pos-k"
    let mut obs = Vec::with_capacity(ds.len());
    for (i, item) in ds.items().iter().enumerate() {
        let mut labels: Vec<usize> = item
            .counts
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| std::iter::repeat_n(j, c as usize))
            .collect();
        labels.shuffle(&mut rng(sub_seed(cfg.seed, i as u64)));
        let row = labels
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                let name = format!("pos-{k}");
                let next = index.len();
                (*index.entry(name).or_insert(next), l)
            })
            .collect();
        obs.push(row);
    }
    Ok(((obs, index), true))
}

struct Params {
    prior: Vec<f64>,
    confusion: Vec<Vec<Vec<f64>>>,
}

fn m_step(
    obs: &[Vec<(usize, usize)>],
    post: &[Vec<f64>],
    n_ann: usize,
    d: usize,
    s: f64,
) -> Params {
    let mut prior = vec![s; d];
    let mut confusion = vec![vec![vec![s; d]; d]; n_ann];
    for (row, t) in obs.iter().zip(post) {
        for (k, &tk) in t.iter().enumerate() {
            prior[k] += tk;
        }
        for &(a, l) in row {
            for (k, &tk) in t.iter().enumerate() {
                confusion[a][k][l] += tk;
            }
        }
    }
    let z: f64 = prior.iter().sum();
    prior.iter_mut().for_each(|p| *p /= z);
    for rows in &mut confusion {
        for r in rows.iter_mut() {
            let z: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= z);
        }
    }
    Params { prior, confusion }
}

/// Returns the penalized log-likelihood and writes normalized posteriors.
fn e_step(obs: &[Vec<(usize, usize)>], params: &Params, s: f64, post: &mut [Vec<f64>]) -> f64 {
    let log_prior: Vec<f64> = params.prior.iter().map(|p| p.ln()).collect();
    let mut ll = 0.0;
    for (row, t) in obs.iter().zip(post.iter_mut()) {
        for (k, v) in t.iter_mut().enumerate() {
            *v = log_prior[k]
                + row
                    .iter()
                    .map(|&(a, l)| params.confusion[a][k][l].ln())
                    .sum::<f64>();
        }
        let lse = log_sum_exp(t);
        ll += lse;
        t.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    let penalty: f64 = log_prior.iter().sum::<f64>()
        + params
            .confusion
            .iter()
            .flatten()
            .flatten()
            .map(|v| v.ln())
            .sum::<f64>();
    ll + s * penalty
}

/// Dawid-Skene EM. Posteriors start at the empirical distributions.
pub fn dawid_skene_fit(ds: &Dataset, cfg: &DawidSkeneConfig) -> Result<DawidSkeneModel> {
    if !(cfg.smoothing > 0.0) {
        return Err(Error::param("smoothing", "must be positive"));
    }
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let d = ds.num_labels();
    let ((obs, index), synthetic) = observations(ds, cfg)?;
    let mut post: Vec<Vec<f64>> = ds.empirical().into_iter().map(|y| y.into_vec()).collect();
    let mut trace = Vec::new();
    let mut params = m_step(&obs, &post, index.len(), d, cfg.smoothing);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let prev = post.clone();
        let obj = e_step(&obs, &params, cfg.smoothing, &mut post);
        if !obj.is_finite() {
            return Err(Error::Numerical(format!(
                "Dawid-Skene objective became {obj}"
            )));
        }
        if let Some(&last) = trace.last() {
            let last: f64 = last;
            debug_assert!(
                obj >= last - 1e-8 * last.abs().max(1.0),
                "Dawid-Skene objective decreased: {last} -> {obj}"
            );
        }
        trace.push(obj);
        let delta = prev
            .iter()
            .flatten()
            .zip(post.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if delta < cfg.tol {
            converged = true;
            break;
        }
        params = m_step(&obs, &post, index.len(), d, cfg.smoothing);
    }
    let item_posteriors = ds
        .items()
        .iter()
        .zip(post)
        .map(|(item, p)| Ok((item.id.clone(), LabelDistribution::new(p)?)))
        .collect::<Result<_>>()?;
    Ok(DawidSkeneModel {
        class_prior: LabelDistribution::new(params.prior)?,
        confusion: params.confusion,
        annotator_index: index,
        item_posteriors,
        synthetic,
        objective_trace: trace,
        iterations,
        converged,
    })
}
