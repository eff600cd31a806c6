//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Each simplex point becomes a document: coordinate `j` contributes
//! `round(GRANULARITY · v_j)` tokens of word `j`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{argmax, rng};

pub const GRANULARITY: f64 = 1000.0;
pub const SWEEPS: usize = 200;
pub const BETA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaFit {
    pub alpha: f64,
    pub beta: f64,
    /// `p × V` smoothed topic-word distributions from the final sample.
    pub topic_word: Vec<Vec<f64>>,
    /// Per-document posterior topic proportions from the final sample.
    pub doc_topic: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
}

/// Token word ids of one document, in coordinate order.
pub fn discretize(v: &[f64]) -> Vec<usize> {
    let mut tokens = Vec::new();
    for (j, &x) in v.iter().enumerate() {
        let c = (x * GRANULARITY).round() as usize;
        tokens.extend(std::iter::repeat_n(j, c));
    }
    tokens
}

pub fn fit(points: &[Vec<f64>], p: usize, seed: u64) -> Result<LdaFit> {
    fit_with_sweeps(points, p, seed, SWEEPS)
}

pub fn fit_with_sweeps(points: &[Vec<f64>], p: usize, seed: u64, sweeps: usize) -> Result<LdaFit> {
    super::kmeans::check_points(points, p)?;
    let vocab = points[0].len();
    let docs: Vec<Vec<usize>> = points.iter().map(|v| discretize(v)).collect();
    if let Some(i) = docs.iter().position(Vec::is_empty) {
        return Err(Error::Degenerate(format!(
            "document {i} is empty after discretization"
        )));
    }
    let alpha = 1.0 / p as f64;
    let vbeta = vocab as f64 * BETA;
    let mut rng = rng(seed);

    let mut doc_topic = vec![vec![0u32; p]; docs.len()];
    // word-major so the per-token topic scan is contiguous
    let mut word_topic = vec![vec![0u32; p]; vocab];
    let mut topic_total = vec![0u32; p];
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            doc.iter()
                .map(|&w| {
                    let k = rng.random_range(0..p);
                    doc_topic[d][k] += 1;
                    word_topic[w][k] += 1;
                    topic_total[k] += 1;
                    k
                })
                .collect()
        })
        .collect();

    let mut weights = vec![0.0; p];
    for _ in 0..sweeps {
        for (d, doc) in docs.iter().enumerate() {
            for (t, &w) in doc.iter().enumerate() {
                let old = z[d][t];
                doc_topic[d][old] -= 1;
                word_topic[w][old] -= 1;
                topic_total[old] -= 1;

                let (dt, wt) = (&doc_topic[d], &word_topic[w]);
                let mut total = 0.0;
                for k in 0..p {
                    let pk = (dt[k] as f64 + alpha) * (wt[k] as f64 + BETA)
                        / (topic_total[k] as f64 + vbeta);
                    total += pk;
                    weights[k] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = weights.partition_point(|&c| c <= u).min(p - 1);

                z[d][t] = new;
                doc_topic[d][new] += 1;
                word_topic[w][new] += 1;
                topic_total[new] += 1;
            }
        }
    }

    let doc_topic: Vec<Vec<f64>> = doc_topic
        .iter()
        .zip(&docs)
        .map(|(row, doc)| {
            let z = doc.len() as f64 + p as f64 * alpha;
            row.iter().map(|&c| (c as f64 + alpha) / z).collect()
        })
        .collect();
    let topic_word = (0..p)
        .map(|k| {
            let z = topic_total[k] as f64 + vbeta;
            word_topic
                .iter()
                .map(|row| (row[k] as f64 + BETA) / z)
                .collect()
        })
        .collect();
    let assignments = doc_topic.iter().map(|r| argmax(r)).collect();
    Ok(LdaFit {
        alpha,
        beta: BETA,
        topic_word,
        doc_topic,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretization() {
        assert_eq!(discretize(&[0.002, 0.0, 0.998]).len(), 1000);
        assert_eq!(&discretize(&[0.002, 0.998])[..3], &[0, 0, 1]);
    }

    #[test]
    fn single_topic() {
        let points = vec![vec![0.5, 0.5], vec![0.1, 0.9], vec![1.0, 0.0]];
        let fit = fit_with_sweeps(&points, 1, 4, 5).unwrap();
        assert_eq!(fit.assignments, vec![0, 0, 0]);
    }

    #[test]
    fn empty_document_rejected() {
        let points = vec![vec![0.0001, 0.0001]];
        assert!(matches!(fit(&points, 1, 0), Err(Error::Degenerate(_))));
    }
}
