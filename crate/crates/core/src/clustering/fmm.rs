//! Finite multinomial mixture with Dirichlet priors.
//!
//! Points on the simplex are turned into pseudo-counts `c_i = round(S_i · v_i)`
//! and fitted by EM with posterior-mean updates:
//!
//! ```text
//! π_k  ∝ Σ_i r_ik + γ_cluster
//! θ_kj ∝ Σ_i r_ik c_ij + γ_label
//! ```
//!
//! These are the MAP updates under `Dir(γ + 1)` priors, so every iteration
//! increases `log p(c | π, θ) + γ_cluster Σ_k ln π_k + γ_label Σ_kj ln θ_kj`.
//! That penalized log-likelihood (multinomial coefficients dropped) is
//! recorded in [`FmmFit::objective_trace`].

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{argmax, log_sum_exp, rng};

pub const MAX_ITER: usize = 500;
pub const TOLERANCE: f64 = 1e-6;

/// Dirichlet concentrations and the fallback pseudo-count scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmmPriors {
    pub cluster_concentration: f64,
    pub label_concentration: f64,
    /// Scale used for items whose annotation count is unknown.
    pub pseudocount_scale: u32,
}

impl Default for FmmPriors {
    fn default() -> Self {
        Self {
            cluster_concentration: 75.0,
            label_concentration: 0.1,
            pseudocount_scale: 100,
        }
    }
}

impl FmmPriors {
    pub fn validate(&self) -> Result<()> {
        if !(self.cluster_concentration > 0.0) || !(self.label_concentration > 0.0) {
            return Err(Error::param("priors", "concentrations must be positive"));
        }
        if self.pseudocount_scale == 0 {
            return Err(Error::param("pseudocount_scale", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmmFit {
    pub weights: Vec<f64>,
    /// `p × V` multinomial parameters.
    pub theta: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Penalized log-likelihood per iteration; non-decreasing.
    pub objective_trace: Vec<f64>,
}

/// `round(scale · v)` per coordinate.
pub fn pseudo_counts(v: &[f64], scale: u32) -> Vec<f64> {
    v.iter().map(|x| (x * scale as f64).round()).collect()
}

struct State {
    weights: Vec<f64>,
    theta: Vec<Vec<f64>>,
}

impl State {
    fn objective(&self, ll: f64, priors: &FmmPriors) -> f64 {
        let pi: f64 = self.weights.iter().map(|w| w.ln()).sum();
        let th: f64 = self.theta.iter().flatten().map(|t| t.ln()).sum();
        ll + priors.cluster_concentration * pi + priors.label_concentration * th
    }
}

fn e_step(counts: &[Vec<f64>], state: &State, resp: &mut [Vec<f64>]) -> f64 {
    let log_w: Vec<f64> = state.weights.iter().map(|w| w.ln()).collect();
    let log_theta: Vec<Vec<f64>> = state
        .theta
        .iter()
        .map(|row| row.iter().map(|t| t.ln()).collect())
        .collect();
    let mut ll = 0.0;
    for (c, r) in counts.iter().zip(resp.iter_mut()) {
        for (k, lt) in log_theta.iter().enumerate() {
            let mut acc = log_w[k];
            for (&cj, &l) in c.iter().zip(lt) {
                if cj > 0.0 {
                    acc += cj * l;
                }
            }
            r[k] = acc;
        }
        let lse = log_sum_exp(r);
        ll += lse;
        for v in r.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    ll
}

fn m_step(counts: &[Vec<f64>], resp: &[Vec<f64>], priors: &FmmPriors, state: &mut State) {
    let p = state.weights.len();
    let v = counts[0].len();
    let n = counts.len() as f64;
    for k in 0..p {
        let nk: f64 = resp.iter().map(|r| r[k]).sum();
        state.weights[k] =
            (nk + priors.cluster_concentration) / (n + p as f64 * priors.cluster_concentration);
        let mut row = vec![priors.label_concentration; v];
        for (c, r) in counts.iter().zip(resp) {
            if r[k] == 0.0 {
                continue;
            }
            for (t, &cj) in row.iter_mut().zip(c) {
                *t += r[k] * cj;
            }
        }
        let z: f64 = row.iter().sum();
        for t in &mut row {
            *t /= z;
        }
        state.theta[k] = row;
    }
}

/// Seeds with k-means++ over count proportions.
fn init(counts: &[Vec<f64>], p: usize, seed: u64, priors: &FmmPriors) -> State {
    let props: Vec<Vec<f64>> = counts
        .iter()
        .map(|c| {
            let z: f64 = c.iter().sum();
            c.iter().map(|x| x / z).collect()
        })
        .collect();
    let mut rng = rng(seed);
    let seeds = super::kmeans::plus_plus(&props, p, &mut rng);
    // jitter breaks exact ties between duplicated seeds
    let theta = seeds
        .into_iter()
        .map(|s| {
            let mut row: Vec<f64> = s
                .iter()
                .map(|x| x + priors.label_concentration * (1.0 + rng.random::<f64>()) / 100.0)
                .collect();
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= z);
            row
        })
        .collect();
    State {
        weights: vec![1.0 / p as f64; p],
        theta,
    }
}

/// Fits on simplex points. `scales[i]` is item i's pseudo-count scale.
pub fn fit(
    points: &[Vec<f64>],
    scales: &[u32],
    p: usize,
    seed: u64,
    priors: &FmmPriors,
) -> Result<FmmFit> {
    priors.validate()?;
    super::kmeans::check_points(points, p)?;
    if scales.len() != points.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            actual: scales.len(),
        });
    }
    let counts: Vec<Vec<f64>> = points
        .iter()
        .zip(scales)
        .map(|(v, &s)| pseudo_counts(v, s))
        .collect();
    if let Some(i) = counts.iter().position(|c| c.iter().all(|&x| x == 0.0)) {
        return Err(Error::Degenerate(format!(
            "point {i} rounds to an all-zero pseudo-count vector (scale {})",
            scales[i]
        )));
    }
    let mut state = init(&counts, p, seed, priors);
    let mut resp = vec![vec![0.0; p]; counts.len()];
    let mut trace = Vec::new();
    let mut prev = state.objective(e_step(&counts, &state, &mut resp), priors);
    trace.push(prev);
    for _ in 0..MAX_ITER {
        m_step(&counts, &resp, priors, &mut state);
        let obj = state.objective(e_step(&counts, &state, &mut resp), priors);
        if !obj.is_finite() {
            return Err(Error::Numerical(format!("FMM objective became {obj}")));
        }
        debug_assert!(
            obj >= prev - 1e-8 * prev.abs().max(1.0),
            "FMM objective decreased: {prev} -> {obj}"
        );
        trace.push(obj);
        let converged = (obj - prev).abs() <= TOLERANCE * prev.abs().max(1.0);
        prev = obj;
        if converged {
            break;
        }
    }
    Ok(FmmFit {
        weights: state.weights,
        theta: state.theta,
        assignments: resp.iter().map(|r| argmax(r)).collect(),
        objective_trace: trace,
    })
}
