#![allow(dead_code)]

pub mod checks;

use crowdopinion::{DataItem, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("l{j}")).collect()
}

pub fn item(id: impl Into<String>, features: Vec<f64>, counts: Vec<u32>) -> DataItem {
    DataItem::new(id.into(), features, counts).unwrap()
}

pub fn dataset(items: Vec<DataItem>) -> Dataset {
    let d = items[0].counts.len();
    Dataset::new(items, labels(d)).unwrap()
}

/// Uniform features in [-1, 1) and 1..=10 annotations spread uniformly.
pub fn random_dataset(n: usize, dim: usize, d: usize, seed: u64) -> Dataset {
    let mut r = seeded(seed);
    let items = (0..n)
        .map(|i| {
            let x = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            let mut c = vec![0u32; d];
            for _ in 0..r.random_range(1..=10) {
                c[r.random_range(0..d)] += 1;
            }
            item(format!("i{i:04}"), x, c)
        })
        .collect();
    dataset(items)
}

/// Random point on the simplex, with some exact zeros.
pub fn random_simplex(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d)
        .map(|_| {
            if r.random_bool(0.2) {
                0.0
            } else {
                r.random::<f64>()
            }
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    v
}
