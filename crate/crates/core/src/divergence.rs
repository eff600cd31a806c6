//! Smoothed KL divergence.
//!
//! Empirical distributions built from a handful of annotators are full of
//! exact zeros, so both arguments are smoothed before taking logs:
//! `ṽ = (v + ε) / (1 + dε)`. Direction is never symmetrized; the first
//! argument is the reference (query) distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::types::item_entropy;

/// Additive smoothing applied to both KL arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPolicy {
    epsilon: f64,
}

impl SmoothingPolicy {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    /// `epsilon` must lie in `(0, 1e-3]`.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1e-3) {
            return Err(Error::param(
                "epsilon",
                format!("{epsilon} not in (0, 1e-3]"),
            ));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for SmoothingPolicy {
    fn default() -> Self {
        Self {
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

/// `KL(p̃ ‖ q̃)` in nats.
pub fn kl(p: &[f64], q: &[f64], s: SmoothingPolicy) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::Empty("distribution"));
    }
    Ok(kl_unchecked(p, q, s.epsilon))
}

#[inline]
pub(crate) fn kl_unchecked(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let z = 1.0 + p.len() as f64 * eps;
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let ps = (a + eps) / z;
        let qs = (b + eps) / z;
        acc += ps * (ps / qs).ln();
    }
    acc.max(0.0)
}

/// Arithmetic mean of `kl` over pairs.
pub fn mean_kl<P, Q>(pairs: &[(P, Q)], s: SmoothingPolicy) -> Result<f64>
where
    P: AsRef<[f64]>,
    Q: AsRef<[f64]>,
{
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    let mut total = 0.0;
    for (p, q) in pairs {
        total += kl(p.as_ref(), q.as_ref(), s)?;
    }
    Ok(total / pairs.len() as f64)
}
