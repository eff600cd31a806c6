//! Stage-1 method dispatch and end-to-end helpers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{dawid_skene_fit, pd_targets, sl_targets, DawidSkeneConfig};
use crate::clustering::{
    cluster_stage1_score, fit_fmm, fit_gmm, fit_kmeans, fit_lda, pooled_labels, ClusterMethod,
    ClusterModel, FmmPriors, PseudocountMode,
};
use crate::divergence::SmoothingPolicy;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::learner::{train, LearnerConfig, Pair, TrainedLearner};
use crate::mixing::FeatureSimplexTransform;
use crate::nbp::{nbp_pool, nbp_stage1_score, NbpConfig};
use crate::types::{Dataset, PooledLabels};
use crate::FORMAT_VERSION;

/// Any stage-1 pooling method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    KMeans,
    Gmm,
    Fmm,
    Lda,
    Nbp,
}

impl Method {
    pub const ALL: [Method; 5] = [Self::KMeans, Self::Gmm, Self::Fmm, Self::Lda, Self::Nbp];

    pub fn cluster(&self) -> Option<ClusterMethod> {
        match self {
            Self::KMeans => Some(ClusterMethod::KMeans),
            Self::Gmm => Some(ClusterMethod::Gmm),
            Self::Fmm => Some(ClusterMethod::Fmm),
            Self::Lda => Some(ClusterMethod::Lda),
            Self::Nbp => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self.cluster() {
            Some(c) => c.as_str(),
            None => "nbp",
        }
    }

    /// Name of the method's hyperparameter, `p` or `r`.
    pub fn hyperparameter_name(&self) -> &'static str {
        if *self == Self::Nbp {
            "r"
        } else {
            "p"
        }
    }
}

impl From<ClusterMethod> for Method {
    fn from(m: ClusterMethod) -> Self {
        match m {
            ClusterMethod::KMeans => Self::KMeans,
            ClusterMethod::Gmm => Self::Gmm,
            ClusterMethod::Fmm => Self::Fmm,
            ClusterMethod::Lda => Self::Lda,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("nbp") {
            return Ok(Self::Nbp);
        }
        s.parse::<ClusterMethod>().map(Self::from)
    }
}

/// Settings shared by every stage-1 fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stage1Options {
    pub priors: FmmPriors,
    pub pseudocounts: PseudocountMode,
    pub smoothing: SmoothingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PoolingFit {
    Cluster(ClusterModel),
    Nbp(NbpConfig),
}

/// A fitted stage-1 model over a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingModel {
    pub version: u32,
    pub method: Method,
    pub w: f64,
    /// `p` for clustering methods, `r` for NBP.
    pub hyperparameter: f64,
    pub seed: u64,
    pub transform: FeatureSimplexTransform,
    pub options: Stage1Options,
    /// Mean stage-1 KL on the training split.
    pub stage1_score: f64,
    pub fit: PoolingFit,
}

pub(crate) fn p_from(h: f64) -> Result<usize> {
    if h >= 1.0 && h.fract() == 0.0 && h <= u32::MAX as f64 {
        Ok(h as usize)
    } else {
        Err(Error::param("p", format!("{h} is not a positive integer")))
    }
}

/// Fits `method` at `(w, hyperparameter)` on `train` and scores it.
pub fn fit_pooling(
    method: Method,
    train: &Dataset,
    w: f64,
    hyperparameter: f64,
    seed: u64,
    t: &FeatureSimplexTransform,
    opts: &Stage1Options,
) -> Result<PoolingModel> {
    let (fit, score) = match method.cluster() {
        Some(cm) => {
            let p = p_from(hyperparameter)?;
            let model = match cm {
                ClusterMethod::KMeans => fit_kmeans(train, w, p, seed, t)?,
                ClusterMethod::Gmm => fit_gmm(train, w, p, seed, t)?,
                ClusterMethod::Fmm => {
                    fit_fmm(train, w, p, seed, t, &opts.priors, opts.pseudocounts)?
                }
                ClusterMethod::Lda => fit_lda(train, w, p, seed, t)?,
            };
            let score = cluster_stage1_score(&model, train, t, opts.smoothing)?;
            (PoolingFit::Cluster(model), score)
        }
        None => {
            let cfg = NbpConfig {
                r: hyperparameter,
                w,
                smoothing: opts.smoothing,
            };
            let score = nbp_stage1_score(train, &cfg, t)?;
            (PoolingFit::Nbp(cfg), score)
        }
    };
    Ok(PoolingModel {
        version: FORMAT_VERSION,
        method,
        w,
        hyperparameter,
        seed,
        transform: t.clone(),
        options: *opts,
        stage1_score: score,
        fit,
    })
}

impl PoolingModel {
    /// Pooled labels for the training split the model was fitted on.
    pub fn pooled_labels(&self, train: &Dataset) -> Result<PooledLabels> {
        match &self.fit {
            PoolingFit::Cluster(m) => pooled_labels(m, train),
            PoolingFit::Nbp(cfg) => nbp_pool(train, cfg, &self.transform),
        }
    }

    /// Recomputes the stage-1 objective from the stored fit.
    pub fn recompute_score(&self, train: &Dataset) -> Result<f64> {
        match &self.fit {
            PoolingFit::Cluster(m) => {
                cluster_stage1_score(m, train, &self.transform, self.options.smoothing)
            }
            PoolingFit::Nbp(cfg) => nbp_stage1_score(train, cfg, &self.transform),
        }
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

/// Where stage-2 training targets come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSource {
    Pooled(PooledLabels),
    Pd,
    Sl,
    Ds(DawidSkeneConfig),
}

impl TargetSource {
    /// Targets for every item of `train`. Also reports whether DS ran on
    /// synthesized annotators.
    pub fn targets(&self, train: &Dataset) -> Result<(PooledLabels, bool)> {
        Ok(match self {
            Self::Pooled(p) => {
                p.validate_for(train)?;
                (p.clone(), false)
            }
            Self::Pd => (pd_targets(train), false),
            Self::Sl => (sl_targets(train), false),
            Self::Ds(cfg) => {
                let model = dawid_skene_fit(train, cfg)?;
                (model.targets(), model.synthetic)
            }
        })
    }
}

/// `(features, target)` pairs in item order.
pub fn pairs(ds: &Dataset, targets: &PooledLabels) -> Result<Vec<Pair>> {
    Ok(ds
        .items()
        .iter()
        .zip(targets.targets_for(ds)?)
        .map(|(i, y)| (i.features.clone(), y))
        .collect())
}

/// Trains on `targets` over `train`; dev always uses empirical distributions.
pub fn train_on(
    train_ds: &Dataset,
    dev: &Dataset,
    targets: &PooledLabels,
    cfg: &LearnerConfig,
) -> Result<TrainedLearner> {
    train_ds.require_features()?;
    let train_pairs = pairs(train_ds, targets)?;
    let dev_pairs = pairs(dev, &pd_targets(dev))?;
    train(&train_pairs, &dev_pairs, cfg)
}

/// Result of one full stage-1 + stage-2 run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub name: String,
    pub dev: EvalReport,
    pub test: EvalReport,
}

/// Trains on `source` and evaluates on dev and test.
pub fn run_targets(
    name: &str,
    source: &TargetSource,
    splits: (&Dataset, &Dataset, &Dataset),
    cfg: &LearnerConfig,
) -> Result<RunOutcome> {
    let (train_ds, dev, test) = splits;
    let (targets, synthetic) = source.targets(train_ds)?;
    let model = train_on(train_ds, dev, &targets, cfg)?;
    let mut dev_report = evaluate(&model, dev)?;
    let mut test_report = evaluate(&model, test)?;
    for r in [&mut dev_report, &mut test_report] {
        r.fingerprint.insert("targets".into(), name.into());
        if synthetic {
            r.fingerprint
                .insert("ds_synthetic_annotators".into(), "true".into());
        }
    }
    Ok(RunOutcome {
        name: name.into(),
        dev: dev_report,
        test: test_report,
    })
}

/// Stage-1 fit at fixed hyperparameters followed by stage 2.
pub fn run_pooling(
    model: &PoolingModel,
    splits: (&Dataset, &Dataset, &Dataset),
    cfg: &LearnerConfig,
) -> Result<RunOutcome> {
    let pooled = model.pooled_labels(splits.0)?;
    let name = format!("co-{}-{}-{}", model.method, model.w, model.hyperparameter);
    let mut out = run_targets(&name, &TargetSource::Pooled(pooled), splits, cfg)?;
    for r in [&mut out.dev, &mut out.test] {
        r.fingerprint
            .insert("method".into(), model.method.to_string());
        r.fingerprint.insert("w".into(), model.w.to_string());
        r.fingerprint.insert(
            model.method.hyperparameter_name().into(),
            model.hyperparameter.to_string(),
        );
        r.fingerprint
            .insert("stage1_seed".into(), model.seed.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::Nbp.hyperparameter_name(), "r");
        assert!(p_from(2.5).is_err());
        assert_eq!(p_from(6.0).unwrap(), 6);
    }
}
