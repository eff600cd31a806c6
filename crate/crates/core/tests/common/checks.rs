//! Checks shared by the oracle tests and the acceptance run. Each panics on
//! failure.

use std::collections::BTreeSet;

use super::{labels, random_dataset, random_simplex, seeded};
use crowdopinion::baselines::{dawid_skene_fit, DawidSkeneConfig};
use crowdopinion::clustering::{fmm, gmm, kmeans, lda, FmmPriors};
use crowdopinion::io::split_downsample;
use crowdopinion::learner::{gradient_check, train, Architecture, LearnerConfig, Pair};
use crowdopinion::mixing::mix_dataset;
use crowdopinion::nbp::{r_grid, Neighbourhoods};
use crowdopinion::pipeline::{
    run_pooling, run_targets, Method, RunOutcome, Stage1Options, TargetSource,
};
use crowdopinion::selection::{p_grid, select_p, select_r};
use crowdopinion::synth::{generate, SynthConfig};
use crowdopinion::types::Annotation;
use crowdopinion::{
    item_entropy, kl, DataItem, Dataset, FeatureSimplexTransform, LabelDistribution,
    SmoothingPolicy,
};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};

/// Smoothed KL written out independently of the library.
pub fn kl_ref(p: &[f64], q: &[f64]) -> f64 {
    let eps = 1e-6;
    let z = 1.0 + p.len() as f64 * eps;
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let (a, b) = ((a + eps) / z, (b + eps) / z);
            a * (a / b).ln()
        })
        .sum()
}

/// Pairs `(i, j)` that share a cluster; equal sets mean equal partitions.
pub fn co_membership(assign: &[usize]) -> BTreeSet<(usize, usize)> {
    let mut s = BTreeSet::new();
    for i in 0..assign.len() {
        for j in i + 1..assign.len() {
            if assign[i] == assign[j] {
                s.insert((i, j));
            }
        }
    }
    s
}

pub fn sse(points: &[Vec<f64>], assign: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points
            .iter()
            .zip(assign)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| p)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..dim)
            .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members
            .iter()
            .map(|m| {
                m.iter()
                    .zip(&mean)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>();
    }
    total
}

pub fn kmeans_1d_three_blobs_match_contiguous_enumeration() {
    let mut r = seeded(2);
    let mut xs: Vec<f64> = (0..30)
        .map(|i| 5.0 * (i / 10) as f64 + r.random_range(-0.8..0.8))
        .collect();
    xs.sort_by(f64::total_cmp);
    let points: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    // optimal 1-D k-means clusters are contiguous in sorted order
    let mut best = (f64::INFINITY, vec![]);
    for a in 1..29 {
        for b in a + 1..30 {
            let assign: Vec<usize> = (0..30)
                .map(|i| usize::from(i >= a) + usize::from(i >= b))
                .collect();
            let s = sse(&points, &assign, 3);
            if s < best.0 {
                best = (s, assign);
            }
        }
    }
    let fit = kmeans::fit(&points, 3, 0).unwrap();
    assert_eq!(co_membership(&fit.assignments), co_membership(&best.1));
    assert!((fit.inertia - best.0).abs() < 1e-9 * best.0.max(1.0));
}

pub fn gmm_recovers_planted_means() {
    let planted = [[0.0, 0.0, 0.0], [4.0, 0.0, 1.0], [0.0, 4.0, -2.0]];
    let sd = [0.5, 0.3, 0.4];
    let mut r = seeded(3);
    let mut points = Vec::new();
    for m in &planted {
        for _ in 0..300 {
            points.push(
                (0..3)
                    .map(|j| m[j] + Normal::new(0.0, sd[j]).unwrap().sample(&mut r))
                    .collect::<Vec<f64>>(),
            );
        }
    }
    let fit = gmm::fit(&points, 3, 5).unwrap();
    for m in &planted {
        let closest = fit
            .means
            .iter()
            .map(|f| {
                f.iter()
                    .zip(m)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            closest < 0.1,
            "no fitted mean within 0.1 of {m:?}: {:?}",
            fit.means
        );
    }
    for pair in fit.log_likelihood_trace.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-9 * pair[0].abs().max(1.0));
    }
}

pub fn fmm_recovers_planted_multinomials() {
    let mut r = seeded(4);
    let thetas = [[0.9, 0.1], [0.1, 0.9]];
    let mut points = Vec::new();
    for i in 0..500 {
        let t = thetas[i % 2];
        let c = Binomial::new(100, t[0]).unwrap().sample(&mut r) as f64;
        points.push(vec![c / 100.0, 1.0 - c / 100.0]);
    }
    let scales = vec![100; points.len()];
    let fit = fmm::fit(&points, &scales, 2, 6, &FmmPriors::default()).unwrap();
    let tv = |a: &[f64], b: &[f64]| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let straight = tv(&fit.theta[0], &thetas[0]).max(tv(&fit.theta[1], &thetas[1]));
    let swapped = tv(&fit.theta[0], &thetas[1]).max(tv(&fit.theta[1], &thetas[0]));
    assert!(straight.min(swapped) < 0.05, "{:?}", fit.theta);
    for pair in fit.objective_trace.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-9 * pair[0].abs().max(1.0));
    }
}

pub fn lda_separates_disjoint_vocabularies() {
    let mut r = seeded(5);
    let points: Vec<Vec<f64>> = (0..80)
        .map(|i| {
            let offset = if i < 40 { 0 } else { 5 };
            let mut v = vec![0.0; 10];
            for j in 0..5 {
                v[offset + j] = r.random_range(0.1..1.0);
            }
            let z: f64 = v.iter().sum();
            v.iter().map(|x| x / z).collect()
        })
        .collect();
    let fit = lda::fit(&points, 2, 7).unwrap();
    let a = fit.assignments[0];
    let b = fit.assignments[40];
    assert_ne!(a, b);
    assert!(fit.assignments[..40].iter().all(|&t| t == a));
    assert!(fit.assignments[40..].iter().all(|&t| t == b));
}

pub fn annotated(id: &str, labels_by: &[(&str, usize)], d: usize) -> DataItem {
    let mut counts = vec![0; d];
    for &(_, l) in labels_by {
        counts[l] += 1;
    }
    DataItem::new(id.to_string(), vec![], counts)
        .unwrap()
        .with_annotations(
            labels_by
                .iter()
                .map(|&(a, l)| Annotation {
                    annotator: a.into(),
                    label: l,
                })
                .collect(),
        )
        .unwrap()
}

/// Binary DS parameters: prior of class 0 and, per annotator and true class,
/// the probability of answering 0.
#[derive(Clone, Copy, Debug)]
pub struct BinaryDs {
    pub prior0: f64,
    pub c: [[f64; 2]; 3],
}

pub fn answer(c: f64, label: usize) -> f64 {
    if label == 0 {
        c
    } else {
        1.0 - c
    }
}

/// Penalized log-likelihood: data term plus `s` times the log of every
/// prior and confusion entry.
pub fn ds_objective(obs: &[[usize; 3]], m: &BinaryDs, s: f64) -> f64 {
    let prior = [m.prior0, 1.0 - m.prior0];
    let mut total = 0.0;
    for o in obs {
        let lik: f64 = (0..2)
            .map(|k| prior[k] * (0..3).map(|a| answer(m.c[a][k], o[a])).product::<f64>())
            .sum();
        total += lik.ln();
    }
    let mut pen = prior.iter().map(|p| p.ln()).sum::<f64>();
    for row in &m.c {
        for &c in row {
            pen += c.ln() + (1.0 - c).ln();
        }
    }
    total + s * pen
}

/// Exhaustive search over a 0.05 grid, keeping the best cell for each
/// posterior-argmax pattern (bit i set when item i leans to class 1, with
/// item 0 fixed to class 0). Swapping the latent classes maps the grid onto
/// itself, so class-0 priors above one half are redundant.
pub fn ds_grid_search(obs: &[[usize; 3]], s: f64) -> Vec<(f64, BinaryDs)> {
    let grid: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
    let pen: Vec<f64> = grid.iter().map(|c| s * (c.ln() + (1.0 - c).ln())).collect();
    let patterns = 1usize << obs.len();
    let empty = (
        f64::NEG_INFINITY,
        BinaryDs {
            prior0: 0.0,
            c: [[0.0; 2]; 3],
        },
    );
    std::thread::scope(|scope| {
        let handles: Vec<_> = grid[..10]
            .iter()
            .map(|&p| {
                let (grid, pen) = (&grid, &pen);
                scope.spawn(move || {
                    let mut best = vec![empty; patterns];
                    let base = s * (p.ln() + (1.0 - p).ln());
                    for (i00, &c00) in grid.iter().enumerate() {
                        for (i01, &c01) in grid.iter().enumerate() {
                            for (i10, &c10) in grid.iter().enumerate() {
                                for (i11, &c11) in grid.iter().enumerate() {
                                    let outer = base + pen[i00] + pen[i01] + pen[i10] + pen[i11];
                                    let ab: Vec<[f64; 2]> = obs
                                        .iter()
                                        .map(|o| {
                                            [
                                                p * answer(c00, o[0]) * answer(c10, o[1]),
                                                (1.0 - p) * answer(c01, o[0]) * answer(c11, o[1]),
                                            ]
                                        })
                                        .collect();
                                    for (i20, &c20) in grid.iter().enumerate() {
                                        for (i21, &c21) in grid.iter().enumerate() {
                                            let mut prod = 1.0;
                                            let mut pattern = 0;
                                            for (i, (o, [x, y])) in obs.iter().zip(&ab).enumerate()
                                            {
                                                let (u, v) =
                                                    (x * answer(c20, o[2]), y * answer(c21, o[2]));
                                                prod *= u + v;
                                                pattern |= usize::from(v > u) << i;
                                            }
                                            if pattern & 1 == 1 {
                                                pattern ^= patterns - 1;
                                            }
                                            let v = prod.ln() + outer + pen[i20] + pen[i21];
                                            if v > best[pattern].0 {
                                                best[pattern] = (
                                                    v,
                                                    BinaryDs {
                                                        prior0: p,
                                                        c: [[c00, c01], [c10, c11], [c20, c21]],
                                                    },
                                                );
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    best
                })
            })
            .collect();
        let mut best = vec![empty; patterns];
        for h in handles {
            for (b, cand) in best.iter_mut().zip(h.join().unwrap()) {
                if cand.0 > b.0 {
                    *b = cand;
                }
            }
        }
        best
    })
}

pub fn dawid_skene_matches_brute_force_grid() {
    // annotators a and c always agree; b dissents on the last two items
    let obs = [[0, 0, 0], [0, 0, 0], [1, 1, 1], [1, 0, 1], [0, 1, 0]];
    let names = ["a", "b", "c"];
    let items: Vec<DataItem> = obs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let anns: Vec<(&str, usize)> = names.iter().copied().zip(o.iter().copied()).collect();
            annotated(&format!("i{i}"), &anns, 2)
        })
        .collect();
    let ds = Dataset::new(items, labels(2)).unwrap();
    let cfg = DawidSkeneConfig {
        max_iter: 5000,
        tol: 1e-12,
        ..DawidSkeneConfig::default()
    };
    let model = dawid_skene_fit(&ds, &cfg).unwrap();
    let s = cfg.smoothing;

    let mut table: Vec<(usize, f64, BinaryDs)> = ds_grid_search(&obs, s)
        .into_iter()
        .enumerate()
        .filter(|(_, (v, _))| v.is_finite())
        .map(|(pattern, (v, m))| (pattern, v, m))
        .collect();
    table.sort_by(|x, y| y.1.total_cmp(&x.1));
    let (pattern, grid_max, grid_best) = table[0];
    assert!((ds_objective(&obs, &grid_best, s) - grid_max).abs() < 1e-9);
    // a clear winner, so grid resolution cannot flip the answer
    assert!(
        grid_max - table[1].1 > 1.0,
        "ill-posed instance: {:?}",
        &table[..2]
    );

    let mut fitted = BinaryDs {
        prior0: model.class_prior.probs()[0],
        c: [[0.0; 2]; 3],
    };
    for (a, name) in names.iter().enumerate() {
        let conf = &model.confusion[model.annotator_index[*name]];
        fitted.c[a] = [conf[0][0], conf[1][0]];
    }
    let em = ds_objective(&obs, &fitted, s);
    assert!(em >= grid_max - 1e-9, "EM {em} below grid max {grid_max}");
    assert!((em - model.objective_trace.last().unwrap()).abs() < 1e-9);

    let mut em_pattern = 0;
    for i in 0..obs.len() {
        em_pattern |= model.item_posteriors[&format!("i{i}")].argmax() << i;
    }
    if em_pattern & 1 == 1 {
        em_pattern ^= (1 << obs.len()) - 1;
    }
    assert_eq!(em_pattern, pattern);
    for pair in model.objective_trace.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-9 * pair[0].abs().max(1.0));
    }
}

pub fn dawid_skene_noiseless_annotators_give_identity() {
    let d = 3;
    let items: Vec<DataItem> = (0..60)
        .map(|i| {
            annotated(
                &format!("i{i}"),
                &[("a", i % d), ("b", i % d), ("c", i % d)],
                d,
            )
        })
        .collect();
    let ds = Dataset::new(items, labels(d)).unwrap();
    let model = dawid_skene_fit(&ds, &DawidSkeneConfig::default()).unwrap();
    for conf in &model.confusion {
        for (k, row) in conf.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                let want = if k == l { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 0.02, "{conf:?}");
            }
        }
    }
    for (i, it) in ds.items().iter().enumerate() {
        let post = &model.item_posteriors[&it.id];
        assert!(post.probs()[i % d] > 0.98, "{}: {:?}", it.id, post.probs());
    }
    for pair in model.objective_trace.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-9 * pair[0].abs().max(1.0));
    }
}

pub fn divergence_properties() {
    let s = SmoothingPolicy::default();
    let mut r = seeded(11);
    for _ in 0..10_000 {
        let d = r.random_range(2..12);
        let p = random_simplex(&mut r, d);
        let q = random_simplex(&mut r, d);
        let pq = kl(&p, &q, s).unwrap();
        assert!(pq >= 0.0, "KL {pq} < 0 for {p:?} {q:?}");
        assert!(kl(&p, &p, s).unwrap() <= 1e-9);
        let h = item_entropy(&LabelDistribution::new(p).unwrap());
        assert!(
            (0.0..=(d as f64).ln() + 1e-12).contains(&h),
            "entropy {h} outside [0, ln {d}]"
        );
    }
    let got = kl(&[0.4, 0.6], &[0.6, 0.4], s).unwrap();
    assert!((got - 0.0811).abs() < 1e-3, "{got}");
    let got = kl(&[1.0, 0.0], &[0.5, 0.5], s).unwrap();
    assert!((got - std::f64::consts::LN_2).abs() < 1e-3, "{got}");
}

pub fn mixing_invariants() {
    let ds = random_dataset(1000, 8, 5, 12);
    let t = FeatureSimplexTransform::fit(&ds).unwrap();
    for w in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (space, points) = mix_dataset(&ds, w, &t).unwrap();
        for p in &points {
            let features: f64 = p.simplex[..space.feature_dim()].iter().sum();
            let labels: f64 = p.simplex[space.label_range()].iter().sum();
            assert!(
                (features - w).abs() < 1e-9,
                "w={w}: feature mass {features}"
            );
            assert!(
                (labels - (1.0 - w)).abs() < 1e-9,
                "w={w}: label mass {labels}"
            );
        }
    }
    let (space, points) = mix_dataset(&ds, 0.0, &t).unwrap();
    let ys = ds.empirical();
    let s = SmoothingPolicy::default();
    // consecutive pairs plus a fixed partner cover 2,000 ordered pairs
    for i in 0..ds.len() {
        for j in [(i + 1) % ds.len(), 0] {
            let mixed = space.kl(&points[i].simplex, &points[j].simplex, s);
            let direct = kl(ys[i].probs(), ys[j].probs(), s).unwrap();
            assert!(
                (mixed - direct).abs() < 1e-9,
                "pair ({i}, {j}): {mixed} vs {direct}"
            );
        }
    }
}

pub fn nbp_extremes() {
    let ds = random_dataset(200, 6, 4, 13);
    let t = FeatureSimplexTransform::fit(&ds).unwrap();
    let ys = ds.empirical();
    let global = LabelDistribution::mean(ys.iter()).unwrap();
    for w in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let nb = Neighbourhoods::build(&ds, w, &t, SmoothingPolicy::default()).unwrap();
        for (pooled, y) in nb.pool(0.0).iter().zip(&ys) {
            for (a, b) in pooled.probs().iter().zip(y.probs()) {
                assert!((a - b).abs() <= 1e-12, "w={w}: r=0 moved a label");
            }
        }
        for pooled in nb.pool(f64::INFINITY) {
            for (a, b) in pooled.probs().iter().zip(global.probs()) {
                assert!(
                    (a - b).abs() <= 1e-12,
                    "w={w}: r=inf is not the global mean"
                );
            }
        }
    }
}

fn random_pairs(n: usize, dim: usize, labels: usize, seed: u64) -> Vec<Pair> {
    let mut r = seeded(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            let raw: Vec<f64> = (0..labels).map(|_| r.random_range(0.05..1.0)).collect();
            let z: f64 = raw.iter().sum();
            (
                x,
                LabelDistribution::new(raw.iter().map(|v| v / z).collect()).unwrap(),
            )
        })
        .collect()
}

pub fn gradient_check_linear() {
    let rep = gradient_check(Architecture::Linear, 12, 4, 0, 6, 1, 1e-6).unwrap();
    assert!(rep.max_rel_err < 1e-6, "{rep:?}");
}

pub fn gradient_check_mlp() {
    let rep = gradient_check(Architecture::Mlp, 12, 4, 9, 6, 2, 1e-4).unwrap();
    assert!(rep.max_rel_err < 1e-4, "{rep:?}");
}

pub fn gradient_check_conv1d() {
    // 48 → 22 → 9 → 2 positions
    let rep = gradient_check(Architecture::Conv1d, 48, 3, 4, 4, 3, 1e-4).unwrap();
    assert!(rep.max_rel_err < 1e-4, "{rep:?}");
}

pub fn training_is_bitwise_deterministic() {
    let data = random_pairs(120, 48, 3, 5);
    let (tr, dv) = data.split_at(90);
    for arch in [
        Architecture::Linear,
        Architecture::Mlp,
        Architecture::Conv1d,
    ] {
        let cfg = LearnerConfig {
            architecture: arch,
            hidden_dim: 8,
            max_epochs: 4,
            seed: 11,
            ..LearnerConfig::default()
        };
        let a = train(tr, dv, &cfg).unwrap();
        let b = train(tr, dv, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap(), "{arch}");
        for (x, _) in dv {
            let pa = a.predict(x).unwrap();
            let pb = b.predict(x).unwrap();
            let bits =
                |p: &LabelDistribution| p.probs().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&pa), bits(&pb));
        }
        if arch != Architecture::Linear {
            let c = train(tr, dv, &LearnerConfig { seed: 12, ..cfg }).unwrap();
            assert_ne!(a.network, c.network, "{arch}: seed has no effect");
        }
    }
}

pub fn constant_target_is_learned() {
    let target = LabelDistribution::new(vec![0.3, 0.7]).unwrap();
    let data: Vec<Pair> = random_pairs(200, 48, 2, 9)
        .into_iter()
        .map(|(x, _)| (x, target.clone()))
        .collect();
    for arch in [
        Architecture::Linear,
        Architecture::Mlp,
        Architecture::Conv1d,
    ] {
        let cfg = LearnerConfig {
            architecture: arch,
            hidden_dim: 8,
            max_epochs: 60,
            learning_rate: 0.01,
            seed: 1,
            ..LearnerConfig::default()
        };
        let model = train(&data, &[], &cfg).unwrap();
        for (x, _) in data.iter().take(50) {
            let p = model.predict(x).unwrap();
            assert!((p.probs()[0] - 0.3).abs() < 0.01, "{arch}: {:?}", p.probs());
        }
    }
}

/// Test mean KL of every model in the end-to-end comparison.
#[derive(Debug)]
pub struct EndToEnd {
    pub pd: f64,
    pub sl: f64,
    pub ds: f64,
    pub co_kmeans: f64,
    pub co_nbp: f64,
}

/// Stage-1 selection at w = 0.5 on the synthetic corpus, then the mlp
/// learner on each target source.
pub fn end_to_end(seed: u64) -> EndToEnd {
    let corpus = generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
    .dataset;
    let (train_ds, dev, test) = split_downsample(&corpus, [0.5, 0.25, 0.25], 2000, seed).unwrap();
    let splits = (&train_ds, &dev, &test);
    let t = FeatureSimplexTransform::fit(&train_ds).unwrap();
    let opts = Stage1Options::default();
    let cfg = LearnerConfig {
        seed,
        ..LearnerConfig::default()
    };
    let kmeans = select_p(Method::KMeans, &train_ds, 0.5, seed, &p_grid(), &t, &opts).unwrap();
    let nbp = select_r(&train_ds, 0.5, &r_grid(), &t, &opts).unwrap();
    let test_kl = |out: RunOutcome| out.test.mean_kl;
    EndToEnd {
        pd: test_kl(run_targets("pd", &TargetSource::Pd, splits, &cfg).unwrap()),
        sl: test_kl(run_targets("sl", &TargetSource::Sl, splits, &cfg).unwrap()),
        ds: test_kl(
            run_targets(
                "ds",
                &TargetSource::Ds(DawidSkeneConfig::default()),
                splits,
                &cfg,
            )
            .unwrap(),
        ),
        co_kmeans: test_kl(run_pooling(kmeans.model.as_ref().unwrap(), splits, &cfg).unwrap()),
        co_nbp: test_kl(run_pooling(nbp.model.as_ref().unwrap(), splits, &cfg).unwrap()),
    }
}

impl EndToEnd {
    pub fn check(&self) {
        assert!(
            self.co_kmeans < self.pd,
            "CO-KMeans {} not below PD {}",
            self.co_kmeans,
            self.pd
        );
        assert!(
            self.co_nbp < self.pd,
            "CO-NBP {} not below PD {}",
            self.co_nbp,
            self.pd
        );
        let others = [self.pd, self.sl, self.co_kmeans, self.co_nbp];
        assert!(
            others.iter().any(|&v| v < self.ds),
            "DS {} is the best model",
            self.ds
        );
    }
}
