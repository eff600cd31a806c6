//! Lloyd's algorithm with k-means++ seeding and restarts.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{rng, sq_dist, sub_seed, Rng};

pub const RESTARTS: usize = 10;
pub const MAX_ITER: usize = 300;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares of the returned model.
    pub inertia: f64,
    /// Inertia reached by each restart, in restart order.
    pub restart_inertias: Vec<f64>,
}

pub(crate) fn check_points(points: &[Vec<f64>], p: usize) -> Result<usize> {
    if p == 0 {
        return Err(Error::param("p", "need at least one cluster"));
    }
    if p > points.len() {
        return Err(Error::param(
            "p",
            format!("{p} clusters for {} points", points.len()),
        ));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|x| x.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    Ok(dim)
}

/// Nearest centroid, lowest index on ties.
pub(crate) fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding: each new centre is drawn with probability proportional
/// to its squared distance from the nearest centre chosen so far.
pub(crate) fn plus_plus(points: &[Vec<f64>], p: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(p);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut dist: Vec<f64> = points.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < p {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // rounding can leave `chosen` on a zero-weight point
            if dist[chosen] == 0.0 {
                chosen = dist.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].clone();
        for (d, x) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>, f64) {
    let dim = points[0].len();
    let p = centroids.len();
    for _ in 0..MAX_ITER {
        let assignments: Vec<usize> = points.iter().map(|x| nearest(x, &centroids).0).collect();
        let mut sums = vec![vec![0.0; dim]; p];
        let mut counts = vec![0usize; p];
        for (x, &k) in points.iter().zip(&assignments) {
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for k in 0..p {
            // empty clusters keep their previous centre
            if counts[k] == 0 {
                continue;
            }
            let updated: Vec<f64> = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            shift = shift.max(sq_dist(&updated, &centroids[k]).sqrt());
            centroids[k] = updated;
        }
        if shift < TOLERANCE {
            break;
        }
    }
    let mut inertia = 0.0;
    let assignments = points
        .iter()
        .map(|x| {
            let (k, d) = nearest(x, &centroids);
            inertia += d;
            k
        })
        .collect();
    (centroids, assignments, inertia)
}

/// Best of [`RESTARTS`] seeded runs by inertia (earliest restart on ties).
pub fn fit(points: &[Vec<f64>], p: usize, seed: u64) -> Result<KMeansFit> {
    fit_with_restarts(points, p, seed, RESTARTS)
}

pub fn fit_with_restarts(
    points: &[Vec<f64>],
    p: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansFit> {
    check_points(points, p)?;
    let runs: Vec<_> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = rng(sub_seed(seed, r as u64));
            let init = plus_plus(points, p, &mut rng);
            lloyd(points, init)
        })
        .collect();
    let restart_inertias: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let best = (0..runs.len())
        .reduce(|a, b| if runs[b].2 < runs[a].2 { b } else { a })
        .expect("at least one restart");
    let (centroids, assignments, inertia) = runs.into_iter().nth(best).expect("index in range");
    Ok(KMeansFit {
        centroids,
        assignments,
        inertia,
        restart_inertias,
    })
}
