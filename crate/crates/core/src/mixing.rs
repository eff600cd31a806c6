//! The weighted joint feature/label space.
//!
//! Every item is embedded twice:
//!
//! * `raw = (w·x, (1−w)·y)`, the plain weighted concatenation used by the
//!   Euclidean methods (K-Means, GMM);
//! * `simplex = (w·t(x)/‖t(x)‖₁, (1−w)·y)`, a probability vector used by the
//!   distribution-based methods and by every KL computation. `t` shifts each
//!   feature by its training minimum and adds `ε`, so the feature block is
//!   strictly positive.
//!
//! At `w = 0` or `w = 1` one block carries no mass. [`MixedSpace::kl`]
//! treats such a block as absent, so KL at `w = 0` is exactly the label-only
//! KL and the label-only baseline is reproduced bit for bit.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::divergence::{kl_unchecked, SmoothingPolicy};
use crate::error::{Error, Result};
use crate::types::{Dataset, LabelDistribution};

/// The fixed mixing grid (quartiles).
pub const W_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn check_w(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::param("w", format!("{w} not in [0, 1]")));
    }
    Ok(())
}

/// Min-shift feature map fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSimplexTransform {
    min: Vec<f64>,
    epsilon: f64,
}

impl FeatureSimplexTransform {
    pub const EPSILON: f64 = 1e-6;

    /// Per-dimension minimum over the training items.
    pub fn fit(train: &Dataset) -> Result<Self> {
        let first = train
            .items()
            .first()
            .ok_or(Error::Empty("training split"))?;
        let mut min = first.features.clone();
        for item in &train.items()[1..] {
            for (m, &x) in min.iter_mut().zip(&item.features) {
                *m = m.min(x);
            }
        }
        Ok(Self {
            min,
            epsilon: Self::EPSILON,
        })
    }

    pub fn from_min(min: Vec<f64>) -> Self {
        Self {
            min,
            epsilon: Self::EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `t(x)[j] = max(x[j] − m[j], 0) + ε`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.min.len() {
            return Err(Error::LengthMismatch {
                expected: self.min.len(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.min)
            .map(|(&v, &m)| (v - m).max(0.0) + self.epsilon)
            .collect())
    }

    /// `t(x) / ‖t(x)‖₁`.
    pub fn normalized(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut t = self.apply(x)?;
        let z: f64 = t.iter().sum();
        if z > 0.0 {
            for v in &mut t {
                *v /= z;
            }
        }
        Ok(t)
    }
}

/// Geometry of one mixed space: block sizes and the mixing weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedSpace {
    feature_dim: usize,
    label_dim: usize,
    w: f64,
}

impl MixedSpace {
    pub fn new(feature_dim: usize, label_dim: usize, w: f64) -> Result<Self> {
        check_w(w)?;
        if feature_dim == 0 && w > 0.0 {
            return Err(Error::param(
                "w",
                format!("{w} > 0 requires feature vectors, but the dataset has none"),
            ));
        }
        Ok(Self {
            feature_dim,
            label_dim,
            w,
        })
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn label_dim(&self) -> usize {
        self.label_dim
    }

    pub fn dim(&self) -> usize {
        self.feature_dim + self.label_dim
    }

    pub fn label_range(&self) -> Range<usize> {
        self.feature_dim..self.dim()
    }

    /// Coordinates of the blocks that carry mass.
    pub fn active_range(&self) -> Range<usize> {
        if self.w == 0.0 {
            self.label_range()
        } else if self.w == 1.0 {
            0..self.feature_dim
        } else {
            0..self.dim()
        }
    }

    /// Simplex vector from an already-normalized feature block and a label
    /// distribution. Zero-mass blocks are exactly zero.
    pub fn compose(&self, normalized_features: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        if self.w == 0.0 {
            out.resize(self.feature_dim, 0.0);
        } else {
            out.extend(normalized_features.iter().map(|v| self.w * v));
        }
        if self.w == 1.0 {
            out.resize(self.dim(), 0.0);
        } else {
            let lw = 1.0 - self.w;
            out.extend(y.iter().map(|v| lw * v));
        }
        out
    }

    /// Smoothed KL between two simplex vectors of this space, over the active
    /// blocks only.
    pub fn kl(&self, a: &[f64], b: &[f64], s: SmoothingPolicy) -> f64 {
        let r = self.active_range();
        kl_unchecked(&a[r.clone()], &b[r], s.epsilon())
    }

    pub fn mix(
        &self,
        x: &[f64],
        y: &LabelDistribution,
        t: &FeatureSimplexTransform,
    ) -> Result<MixedPoint> {
        if y.len() != self.label_dim {
            return Err(Error::LengthMismatch {
                expected: self.label_dim,
                actual: y.len(),
            });
        }
        if x.len() != self.feature_dim {
            return Err(Error::LengthMismatch {
                expected: self.feature_dim,
                actual: x.len(),
            });
        }
        let w = self.w;
        let mut raw = Vec::with_capacity(self.dim());
        raw.extend(x.iter().map(|v| w * v));
        raw.extend(y.probs().iter().map(|v| (1.0 - w) * v));
        let normalized = if w > 0.0 {
            t.normalized(x)?
        } else {
            Vec::new()
        };
        Ok(MixedPoint {
            simplex: self.compose(&normalized, y.probs()),
            raw,
            w,
        })
    }
}

/// One item in the mixed space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedPoint {
    pub raw: Vec<f64>,
    pub simplex: Vec<f64>,
    pub w: f64,
}

/// Fits the feature transform on a training split.
pub fn fit_feature_transform(train: &Dataset) -> Result<FeatureSimplexTransform> {
    FeatureSimplexTransform::fit(train)
}

/// Embeds one item into the mixed space with weight `w`.
pub fn mix(
    x: &[f64],
    y: &LabelDistribution,
    w: f64,
    t: &FeatureSimplexTransform,
) -> Result<MixedPoint> {
    MixedSpace::new(x.len(), y.len(), w)?.mix(x, y, t)
}

/// Mixed embeddings of every item of `ds`.
pub fn mix_dataset(
    ds: &Dataset,
    w: f64,
    t: &FeatureSimplexTransform,
) -> Result<(MixedSpace, Vec<MixedPoint>)> {
    let space = MixedSpace::new(ds.feature_dim(), ds.num_labels(), w)?;
    let points = ds
        .items()
        .iter()
        .zip(ds.empirical())
        .map(|(item, y)| space.mix(&item.features, &y, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((space, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DataItem;

    fn ds(features: Vec<Vec<f64>>) -> Dataset {
        let items = features
            .into_iter()
            .enumerate()
            .map(|(i, f)| DataItem::new(format!("i{i}"), f, vec![1, 1]).unwrap())
            .collect();
        Dataset::new(items, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn transform_examples() {
        let t = fit_feature_transform(&ds(vec![vec![0.0, 1.0], vec![2.0, 0.0]])).unwrap();
        assert_eq!(t.apply(&[2.0, 1.0]).unwrap(), vec![2.0 + 1e-6, 1.0 + 1e-6]);

        let t = fit_feature_transform(&ds(vec![vec![-3.0, 7.5]])).unwrap();
        assert_eq!(t.apply(&[-3.0, 7.5]).unwrap(), vec![1e-6, 1e-6]);

        let t = fit_feature_transform(&ds(vec![vec![-1.0, 3.0], vec![2.0, 0.0]])).unwrap();
        assert_eq!(t.min(), &[-1.0, 0.0]);
        assert_eq!(t.apply(&[2.0, 0.0]).unwrap(), vec![3.0 + 1e-6, 1e-6]);
    }

    #[test]
    fn out_of_range_features_are_clamped() {
        let t = FeatureSimplexTransform::from_min(vec![0.0, 0.0]);
        assert_eq!(t.apply(&[-5.0, 1.0]).unwrap(), vec![1e-6, 1.0 + 1e-6]);
    }

    #[test]
    fn label_only_mix() {
        let t = FeatureSimplexTransform::from_min(vec![0.0, 0.0, 0.0]);
        let y = LabelDistribution::new(vec![0.25, 0.75]).unwrap();
        let m = mix(&[4.0, -2.0, 9.0], &y, 0.0, &t).unwrap();
        assert_eq!(m.simplex, vec![0.0, 0.0, 0.0, 0.25, 0.75]);
        assert_eq!(m.raw, vec![0.0, -0.0, 0.0, 0.25, 0.75]);
    }

    #[test]
    fn feature_only_mix() {
        let t = FeatureSimplexTransform::from_min(vec![0.0, 0.0]);
        let y = LabelDistribution::new(vec![0.25, 0.75]).unwrap();
        let m = mix(&[1.0, 3.0], &y, 1.0, &t).unwrap();
        assert_eq!(&m.simplex[2..], &[0.0, 0.0]);
        assert_eq!(
            &m.simplex[..2],
            t.normalized(&[1.0, 3.0]).unwrap().as_slice()
        );
    }

    #[test]
    fn half_mix_arithmetic() {
        // t(x) = [1, 3] exactly when x - m = [1 - ε, 3 - ε]
        let eps = FeatureSimplexTransform::EPSILON;
        let t = FeatureSimplexTransform::from_min(vec![eps, eps]);
        let y = LabelDistribution::new(vec![0.25, 0.75]).unwrap();
        let m = mix(&[1.0, 3.0], &y, 0.5, &t).unwrap();
        let expected = [0.125, 0.375, 0.125, 0.375];
        for (a, b) in m.simplex.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{:?}", m.simplex);
        }
        assert_eq!(m.raw, vec![0.5, 1.5, 0.125, 0.375]);
    }

    #[test]
    fn w_out_of_range() {
        let t = FeatureSimplexTransform::from_min(vec![0.0]);
        let y = LabelDistribution::new(vec![0.5, 0.5]).unwrap();
        assert!(mix(&[1.0], &y, 1.5, &t).is_err());
        assert!(mix(&[1.0], &y, -0.1, &t).is_err());
    }
}
