//! Diagonal-covariance Gaussian mixture fitted by EM.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kmeans::{self, check_points};
use crate::error::{Error, Result};
use crate::util::{argmax, log_sum_exp};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_ITER: usize = 500;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Log-likelihood before each M-step; non-decreasing.
    pub log_likelihood_trace: Vec<f64>,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

fn log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&xi, &m), &v) in x.iter().zip(mean).zip(var) {
        let d = xi - m;
        acc += (2.0 * PI * v).ln() + d * d / v;
    }
    -0.5 * acc
}

/// Fills `resp` with normalized responsibilities, returns the log-likelihood.
fn e_step(points: &[Vec<f64>], params: &Params, resp: &mut [Vec<f64>]) -> f64 {
    let log_w: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();
    let mut ll = 0.0;
    for (x, r) in points.iter().zip(resp.iter_mut()) {
        for k in 0..params.weights.len() {
            r[k] = if params.weights[k] > 0.0 {
                log_w[k] + log_density(x, &params.means[k], &params.variances[k])
            } else {
                f64::NEG_INFINITY
            };
        }
        let lse = log_sum_exp(r);
        ll += lse;
        for v in r.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    ll
}

fn m_step(points: &[Vec<f64>], resp: &[Vec<f64>], params: &mut Params) {
    let n = points.len() as f64;
    let dim = points[0].len();
    for k in 0..params.weights.len() {
        let nk: f64 = resp.iter().map(|r| r[k]).sum();
        params.weights[k] = nk / n;
        // a dead component keeps its parameters
        if nk <= 0.0 {
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (x, r) in points.iter().zip(resp) {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += r[k] * v;
            }
        }
        for m in &mut mean {
            *m /= nk;
        }
        let mut var = vec![0.0; dim];
        for (x, r) in points.iter().zip(resp) {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += r[k] * (v - m) * (v - m);
            }
        }
        for s in &mut var {
            *s = (*s / nk).max(VARIANCE_FLOOR);
        }
        params.means[k] = mean;
        params.variances[k] = var;
    }
}

fn init_from_kmeans(points: &[Vec<f64>], p: usize, seed: u64) -> Result<Params> {
    let km = kmeans::fit(points, p, seed)?;
    let dim = points[0].len();
    let n = points.len();
    let mut counts = vec![0usize; p];
    let mut variances = vec![vec![0.0; dim]; p];
    for (x, &k) in points.iter().zip(&km.assignments) {
        counts[k] += 1;
        for ((s, v), m) in variances[k].iter_mut().zip(x).zip(&km.centroids[k]) {
            *s += (v - m) * (v - m);
        }
    }
    for (var, &c) in variances.iter_mut().zip(&counts) {
        for s in var.iter_mut() {
            *s = if c > 0 { *s / c as f64 } else { 0.0 };
            *s = s.max(VARIANCE_FLOOR);
        }
    }
    Ok(Params {
        weights: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        means: km.centroids,
        variances,
    })
}

pub fn fit(points: &[Vec<f64>], p: usize, seed: u64) -> Result<GmmFit> {
    check_points(points, p)?;
    if points.iter().all(|x| x == &points[0]) {
        return Err(Error::Degenerate(
            "GMM input points are all identical; variances would collapse".into(),
        ));
    }
    let mut params = init_from_kmeans(points, p, seed)?;
    let mut resp = vec![vec![0.0; p]; points.len()];
    let mut trace = Vec::new();
    let mut prev = e_step(points, &params, &mut resp);
    trace.push(prev);
    for _ in 0..MAX_ITER {
        m_step(points, &resp, &mut params);
        let ll = e_step(points, &params, &mut resp);
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("GMM log-likelihood became {ll}")));
        }
        debug_assert!(
            ll >= prev - 1e-8 * prev.abs().max(1.0),
            "GMM log-likelihood decreased: {prev} -> {ll}"
        );
        trace.push(ll);
        let converged = (ll - prev).abs() <= TOLERANCE * prev.abs().max(1.0);
        prev = ll;
        if converged {
            break;
        }
    }
    let assignments = resp.iter().map(|r| argmax(r)).collect();
    Ok(GmmFit {
        weights: params.weights,
        means: params.means,
        variances: params.variances,
        assignments,
        log_likelihood_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_is_mle() {
        let points: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin() * 2.0 + 1.0, (t * 0.11).cos() - 3.0]
            })
            .collect();
        let fit = fit(&points, 1, 0).unwrap();
        for j in 0..2 {
            let mean: f64 = points.iter().map(|x| x[j]).sum::<f64>() / 50.0;
            let var: f64 = points.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / 50.0;
            assert!((fit.means[0][j] - mean).abs() < 1e-6);
            assert!((fit.variances[0][j] - var).abs() < 1e-6);
        }
        assert!((fit.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let points = vec![vec![2.0, 2.0]; 10];
        assert!(matches!(fit(&points, 2, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_many_components() {
        assert!(fit(&[vec![0.0], vec![1.0]], 3, 0).is_err());
    }
}
