//! Neighbourhood-based pooling.
//!
//! Every item is pooled with all items inside a KL ball around it in the
//! mixed simplex space:
//!
//! ```text
//! N(i) = {i} ∪ { j ≠ i : KL(simplex_i ‖ simplex_j) < r }
//! ŷ_i  = mean of y_j over N(i)
//! ```
//!
//! The query item comes first in the KL, so neighbourhoods need not be
//! symmetric.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::SmoothingPolicy;
use crate::error::{Error, Result};
use crate::mixing::{mix_dataset, FeatureSimplexTransform, MixedSpace};
use crate::types::{Dataset, LabelDistribution, PooledLabels};

pub const R_MAX: f64 = 15.0;
pub const R_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbpConfig {
    pub r: f64,
    pub w: f64,
    #[serde(default)]
    pub smoothing: SmoothingPolicy,
}

impl NbpConfig {
    pub fn new(r: f64, w: f64) -> Result<Self> {
        let cfg = Self {
            r,
            w,
            smoothing: SmoothingPolicy::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=R_MAX).contains(&self.r) {
            return Err(Error::param(
                "r",
                format!("{} outside [0, {R_MAX}]", self.r),
            ));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::param("w", format!("{} outside [0, 1]", self.w)));
        }
        Ok(())
    }
}

/// The radius grid `0, 0.1, …, 15`.
pub fn r_grid() -> Vec<f64> {
    let steps = (R_MAX / R_STEP).round() as usize;
    (0..=steps).map(|k| k as f64 / 10.0).collect()
}

/// Pairwise KLs of one dataset in one mixed space, computed once and reused
/// across radii.
#[derive(Debug, Clone)]
pub struct Neighbourhoods {
    space: MixedSpace,
    simplex: Vec<Vec<f64>>,
    normalized_features: Vec<Vec<f64>>,
    labels: Vec<LabelDistribution>,
    /// `kl[i][j] = KL(simplex_i ‖ simplex_j)`.
    kl: Vec<Vec<f64>>,
    smoothing: SmoothingPolicy,
}

impl Neighbourhoods {
    pub fn build(
        ds: &Dataset,
        w: f64,
        t: &FeatureSimplexTransform,
        smoothing: SmoothingPolicy,
    ) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let (space, mixed) = mix_dataset(ds, w, t)?;
        let simplex: Vec<Vec<f64>> = mixed.into_iter().map(|m| m.simplex).collect();
        let normalized_features = if w > 0.0 {
            ds.items()
                .iter()
                .map(|i| t.normalized(&i.features))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![Vec::new(); ds.len()]
        };
        let kl = simplex
            .par_iter()
            .map(|a| simplex.iter().map(|b| space.kl(a, b, smoothing)).collect())
            .collect();
        Ok(Self {
            space,
            simplex,
            normalized_features,
            labels: ds.empirical(),
            kl,
            smoothing,
        })
    }

    pub fn len(&self) -> usize {
        self.simplex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplex.is_empty()
    }

    /// Indices of `N(i)` at radius `r`, ascending.
    pub fn members(&self, i: usize, r: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| j == i || self.kl[i][j] < r)
            .collect()
    }

    pub fn kl(&self, i: usize, j: usize) -> f64 {
        self.kl[i][j]
    }

    fn pooled_at(&self, i: usize, r: f64) -> LabelDistribution {
        let d = self.space.label_dim();
        let mut acc = vec![0.0; d];
        let mut n = 0usize;
        for j in 0..self.len() {
            if j == i || self.kl[i][j] < r {
                for (a, v) in acc.iter_mut().zip(self.labels[j].probs()) {
                    *a += v;
                }
                n += 1;
            }
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        LabelDistribution::new(acc).expect("mean of valid distributions is valid")
    }

    /// `ŷ_i` for every item, in dataset order.
    pub fn pool(&self, r: f64) -> Vec<LabelDistribution> {
        (0..self.len())
            .into_par_iter()
            .map(|i| self.pooled_at(i, r))
            .collect()
    }

    /// Mean of `KL(simplex_i ‖ mix(x_i, ŷ_i))`.
    pub fn score(&self, r: f64) -> f64 {
        let total: f64 = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let pooled = self.pooled_at(i, r);
                let q = self
                    .space
                    .compose(&self.normalized_features[i], pooled.probs());
                self.space.kl(&self.simplex[i], &q, self.smoothing)
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        total / self.len() as f64
    }
}

/// Pooled labels for every item of `ds`.
pub fn nbp_pool(
    ds: &Dataset,
    cfg: &NbpConfig,
    t: &FeatureSimplexTransform,
) -> Result<PooledLabels> {
    cfg.validate()?;
    let nb = Neighbourhoods::build(ds, cfg.w, t, cfg.smoothing)?;
    Ok(ds
        .items()
        .iter()
        .zip(nb.pool(cfg.r))
        .map(|(item, y)| (item.id.clone(), y))
        .collect())
}

/// Stage-1 objective of NBP at `cfg` on `ds`.
pub fn nbp_stage1_score(ds: &Dataset, cfg: &NbpConfig, t: &FeatureSimplexTransform) -> Result<f64> {
    cfg.validate()?;
    Ok(Neighbourhoods::build(ds, cfg.w, t, cfg.smoothing)?.score(cfg.r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::kl;
    use crate::types::DataItem;

    fn ds(counts: &[Vec<u32>]) -> Dataset {
        let items = counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                DataItem::new(format!("i{i:02}"), vec![i as f64, 1.0], c.clone()).unwrap()
            })
            .collect();
        let d = counts[0].len();
        Dataset::new(items, (0..d).map(|j| format!("l{j}")).collect()).unwrap()
    }

    #[test]
    fn grid_has_151_cells() {
        let g = r_grid();
        assert_eq!(g.len(), 151);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[28], 2.8);
        assert_eq!(g[150], 15.0);
    }

    #[test]
    fn zero_radius_is_identity() {
        let data = ds(&[vec![3, 1], vec![1, 1], vec![0, 4]]);
        let t = FeatureSimplexTransform::fit(&data).unwrap();
        for w in [0.0, 0.5, 1.0] {
            let cfg = NbpConfig::new(0.0, w).unwrap();
            let pooled = nbp_pool(&data, &cfg, &t).unwrap();
            for (item, y) in data.items().iter().zip(data.empirical()) {
                assert_eq!(pooled.get(&item.id).unwrap(), &y);
            }
            assert_eq!(nbp_stage1_score(&data, &cfg, &t).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_item_closed_form() {
        let data = ds(&[vec![1, 0], vec![0, 1]]);
        let t = FeatureSimplexTransform::fit(&data).unwrap();
        let cfg = NbpConfig::new(15.0, 0.0).unwrap();
        let score = nbp_stage1_score(&data, &cfg, &t).unwrap();
        let s = SmoothingPolicy::default();
        let expected = (kl(&[1.0, 0.0], &[0.5, 0.5], s).unwrap()
            + kl(&[0.0, 1.0], &[0.5, 0.5], s).unwrap())
            / 2.0;
        assert!((score - expected).abs() < 1e-12);
    }

    #[test]
    fn neighbourhoods_can_be_asymmetric() {
        // KL([1,0] ‖ [.5,.5]) ≈ 0.69 while KL([.5,.5] ‖ [1,0]) ≈ 6.6
        let data = ds(&[vec![2, 0], vec![1, 1]]);
        let t = FeatureSimplexTransform::fit(&data).unwrap();
        let nb = Neighbourhoods::build(&data, 0.0, &t, SmoothingPolicy::default()).unwrap();
        assert_eq!(nb.members(0, 1.0), vec![0, 1]);
        assert_eq!(nb.members(1, 1.0), vec![1]);
    }

    #[test]
    fn radius_out_of_range() {
        assert!(NbpConfig::new(-0.1, 0.5).is_err());
        assert!(NbpConfig::new(15.1, 0.5).is_err());
        assert!(NbpConfig::new(1.0, 1.5).is_err());
    }
}
