//! Stage-2 distributional learner.
//!
//! A softmax network `H: ℝ^D → Δ^d` trained by mini-batch Adam on
//! `KL(target ‖ H(x))`. Early stopping watches the dev mean KL and restores
//! the best epoch's parameters.

mod network;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use network::{conv_lengths, Network, Tensor, CONV_BLOCKS, CONV_KERNEL, POOL_WIDTH};

use crate::divergence::{kl_unchecked, SmoothingPolicy};
use crate::error::{Error, Result};
use crate::types::LabelDistribution;
use crate::util::{argmax, log_sum_exp, rng, sub_seed};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Linear,
    #[default]
    Mlp,
    Conv1d,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Mlp => "mlp",
            Self::Conv1d => "conv1d",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            "conv1d" | "cnn" => Ok(Self::Conv1d),
            other => Err(Error::param(
                "architecture",
                format!("unknown architecture `{other}`"),
            )),
        }
    }
}

/// Training objective. Both have gradient `softmax(z) − t` with respect to
/// the logits; they differ by the targets' entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Kl,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub architecture: Architecture,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Mlp,
            hidden_dim: 128,
            dropout: 0.5,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            loss: LossKind::Kl,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param(
                "dropout",
                format!("{} outside [0, 1)", self.dropout),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.architecture != Architecture::Linear && self.hidden_dim == 0 {
            return Err(Error::param("hidden_dim", "must be positive"));
        }
        Ok(())
    }
}

/// One training example: features and target distribution.
pub type Pair = (Vec<f64>, LabelDistribution);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss in inference mode after the epoch.
    pub train_loss: f64,
    /// Mean smoothed KL on dev, or `None` without a dev split.
    pub dev_kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedLearner {
    pub version: u32,
    pub config: LearnerConfig,
    pub network: Network,
    /// Epoch 0 is the untrained model.
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainedLearner {
    pub fn input_dim(&self) -> usize {
        self.network.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.network.output_dim
    }

    pub fn architecture(&self) -> Architecture {
        self.network.architecture
    }

    pub fn predict(&self, features: &[f64]) -> Result<LabelDistribution> {
        if features.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                actual: features.len(),
            });
        }
        LabelDistribution::new(softmax(&self.network.forward(features, None).logits))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
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

    /// `epoch,train_loss,dev_kl` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_kl\n");
        for r in &self.curve {
            let dev = r.dev_kl.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, dev));
        }
        out
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Per-example loss from logits and the gradient `p − t`.
fn loss_and_grad(logits: &[f64], target: &[f64], kind: LossKind) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(target) {
        let log_p = z - lse;
        if t > 0.0 {
            loss -= t * log_p;
            if kind == LossKind::Kl {
                loss += t * t.ln();
            }
        }
        grad.push(log_p.exp() - t);
    }
    (loss, grad)
}

fn check_pairs(pairs: &[Pair], input_dim: usize, output_dim: usize) -> Result<()> {
    for (x, y) in pairs {
        if x.len() != input_dim {
            return Err(Error::LengthMismatch {
                expected: input_dim,
                actual: x.len(),
            });
        }
        if y.len() != output_dim {
            return Err(Error::LengthMismatch {
                expected: output_dim,
                actual: y.len(),
            });
        }
    }
    Ok(())
}

fn mean_loss(net: &Network, pairs: &[Pair], kind: LossKind) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|(x, y)| loss_and_grad(&net.forward(x, None).logits, y.probs(), kind).0)
        .sum();
    total / pairs.len() as f64
}

fn mean_dev_kl(net: &Network, pairs: &[Pair], s: SmoothingPolicy) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|(x, y)| {
            kl_unchecked(
                y.probs(),
                &softmax(&net.forward(x, None).logits),
                s.epsilon(),
            )
        })
        .sum();
    total / pairs.len() as f64
}

struct Adam {
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Network, lr: f64) -> Self {
        Self {
            lr,
            m: net.zero_grads(),
            v: net.zero_grads(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((tensor, g), m), v) in net
            .tensors
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in tensor
                .data
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains on `train`, early-stopping on `dev` (train loss when `dev` is empty).
pub fn train(train: &[Pair], dev: &[Pair], cfg: &LearnerConfig) -> Result<TrainedLearner> {
    cfg.validate()?;
    let (x0, y0) = train.first().ok_or(Error::Empty("training set"))?;
    let (input_dim, output_dim) = (x0.len(), y0.len());
    check_pairs(train, input_dim, output_dim)?;
    check_pairs(dev, input_dim, output_dim)?;

    let mut init_rng = rng(sub_seed(cfg.seed, 0));
    let mut shuffle_rng = rng(sub_seed(cfg.seed, 1));
    let mut dropout_rng = rng(sub_seed(cfg.seed, 2));
    let mut net = Network::new(
        cfg.architecture,
        input_dim,
        output_dim,
        cfg.hidden_dim,
        &mut init_rng,
    )?;
    let mut adam = Adam::new(&net, cfg.learning_rate);
    let smoothing = SmoothingPolicy::default();

    let record = |net: &Network, epoch: usize| -> Result<EpochRecord> {
        let train_loss = mean_loss(net, train, cfg.loss);
        let dev_kl = (!dev.is_empty()).then(|| mean_dev_kl(net, dev, smoothing));
        if !train_loss.is_finite() || dev_kl.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "loss became non-finite at epoch {epoch} (train {train_loss}, dev {dev_kl:?})"
            )));
        }
        Ok(EpochRecord {
            epoch,
            train_loss,
            dev_kl,
        })
    };
    let monitor = |r: &EpochRecord| r.dev_kl.unwrap_or(r.train_loss);

    let mut curve = vec![record(&net, 0)?];
    let mut best: Option<(usize, f64, Network)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = net.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = &train[i];
                let cache = net.forward(x, Some((cfg.dropout, &mut dropout_rng)));
                let (loss, dlogits) = loss_and_grad(&cache.logits, y.probs(), cfg.loss);
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {epoch}, batch {b}, example {i}"
                    )));
                }
                net.backward(&cache, &dlogits, scale, &mut grads);
            }
            adam.step(&mut net, &grads);
        }
        let rec = record(&net, epoch)?;
        let score = monitor(&rec);
        curve.push(rec);
        match &best {
            Some((_, s, _)) if score >= *s => {}
            _ => best = Some((epoch, score, net.clone())),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= cfg.patience.max(1) {
            log::debug!("early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
    }
    let (best_epoch, network) = match best {
        Some((e, _, n)) => (e, n),
        None => (0, net),
    };
    Ok(TrainedLearner {
        version: FORMAT_VERSION,
        config: cfg.clone(),
        network,
        curve,
        best_epoch,
    })
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub architecture: Architecture,
    /// Worst relative error per tensor, in parameter order.
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
}

pub const FD_STEP: f64 = 1e-5;
/// Floor on `|analytic| + |numeric|` in the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Compares backprop against central differences on a small random model
/// and batch with dropout off. Fails with [`Error::GradientCheck`] naming the
/// worst parameter when the error exceeds `tol`.
pub fn gradient_check(
    architecture: Architecture,
    input_dim: usize,
    output_dim: usize,
    hidden_dim: usize,
    batch: usize,
    seed: u64,
    tol: f64,
) -> Result<GradientCheckReport> {
    use rand::Rng as _;
    let mut r = rng(seed);
    let mut net = Network::new(architecture, input_dim, output_dim, hidden_dim, &mut r)?;
    // move off the zero initialization so every path carries gradient
    for t in &mut net.tensors {
        for v in &mut t.data {
            *v += r.random_range(-0.5..0.5);
        }
    }
    let pairs: Vec<Pair> = (0..batch)
        .map(|_| {
            let x: Vec<f64> = (0..input_dim).map(|_| r.random_range(-1.0..1.0)).collect();
            let raw: Vec<f64> = (0..output_dim).map(|_| r.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let y =
                LabelDistribution::new(raw.iter().map(|v| v / s).collect()).expect("normalized");
            (x, y)
        })
        .collect();
    let loss = |net: &Network| mean_loss(net, &pairs, LossKind::Kl);

    let mut grads = net.zero_grads();
    let scale = 1.0 / pairs.len() as f64;
    for (x, y) in &pairs {
        let cache = net.forward(x, None);
        let (_, d) = loss_and_grad(&cache.logits, y.probs(), LossKind::Kl);
        net.backward(&cache, &d, scale, &mut grads);
    }

    let mut per_tensor = Vec::new();
    let mut worst = (0.0f64, String::new(), 0usize);
    for ti in 0..net.tensors.len() {
        let mut tensor_max = 0.0f64;
        for j in 0..net.tensors[ti].data.len() {
            let orig = net.tensors[ti].data[j];
            net.tensors[ti].data[j] = orig + FD_STEP;
            let up = loss(&net);
            net.tensors[ti].data[j] = orig - FD_STEP;
            let down = loss(&net);
            net.tensors[ti].data[j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grads[ti][j];
            let rel =
                (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERR_FLOOR);
            tensor_max = tensor_max.max(rel);
            if rel > worst.0 {
                worst = (rel, net.tensors[ti].name.clone(), j);
            }
        }
        per_tensor.push((net.tensors[ti].name.clone(), tensor_max));
    }
    if worst.0 > tol {
        return Err(Error::GradientCheck {
            tensor: worst.1,
            index: worst.2,
            rel_err: worst.0,
            tol,
        });
    }
    Ok(GradientCheckReport {
        architecture,
        per_tensor,
        max_rel_err: worst.0,
        worst_tensor: worst.1,
        worst_index: worst.2,
    })
}

/// Argmax of a prediction, lowest index on ties.
pub fn predicted_label(p: &LabelDistribution) -> usize {
    argmax(p.probs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn cfg(arch: Architecture) -> LearnerConfig {
        LearnerConfig {
            architecture: arch,
            hidden_dim: 16,
            dropout: 0.0,
            learning_rate: 0.01,
            max_epochs: 50,
            seed: 3,
            ..LearnerConfig::default()
        }
    }

    fn random_pairs(n: usize, dim: usize, seed: u64) -> Vec<Pair> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
                let a: f64 = r.random_range(0.0..1.0);
                (x, LabelDistribution::new(vec![a, 1.0 - a]).unwrap())
            })
            .collect()
    }

    #[test]
    fn zero_linear_model_predicts_uniform() {
        let net = Network::new(Architecture::Linear, 3, 4, 0, &mut rng(0)).unwrap();
        let model = TrainedLearner {
            version: FORMAT_VERSION,
            config: cfg(Architecture::Linear),
            network: net,
            curve: vec![],
            best_epoch: 0,
        };
        assert_eq!(
            model.predict(&[1.0, -2.0, 3.0]).unwrap().probs(),
            &[0.25; 4]
        );
        assert!(model.predict(&[1.0]).is_err());
    }

    #[test]
    fn separable_linear_reaches_full_accuracy() {
        let mut r = rng(11);
        let pairs: Vec<Pair> = (0..200)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| r.random_range(-1.0..1.0)).collect();
                let label = usize::from(x[0] + 0.5 * x[1] > 0.0);
                (x, LabelDistribution::one_hot(2, label).unwrap())
            })
            .filter(|(x, _)| (x[0] + 0.5 * x[1]).abs() > 0.05)
            .collect();
        let c = LearnerConfig {
            learning_rate: 0.05,
            patience: 50,
            ..cfg(Architecture::Linear)
        };
        let model = train(&pairs, &[], &c).unwrap();
        let correct = pairs
            .iter()
            .filter(|(x, y)| predicted_label(&model.predict(x).unwrap()) == y.argmax())
            .count();
        assert_eq!(correct, pairs.len());
    }

    #[test]
    fn mlp_memorizes_small_set() {
        let pairs = random_pairs(20, 6, 5);
        let c = LearnerConfig {
            hidden_dim: 64,
            learning_rate: 0.01,
            max_epochs: 400,
            patience: 400,
            batch_size: 4,
            ..cfg(Architecture::Mlp)
        };
        let model = train(&pairs, &[], &c).unwrap();
        let kl = mean_dev_kl(&model.network, &pairs, SmoothingPolicy::default());
        assert!(kl < 0.05, "train KL {kl}");
    }

    #[test]
    fn loss_kinds_agree() {
        let pairs = random_pairs(60, 4, 8);
        let dev = random_pairs(20, 4, 9);
        let a = train(&pairs, &dev, &cfg(Architecture::Mlp)).unwrap();
        let b = train(
            &pairs,
            &dev,
            &LearnerConfig {
                loss: LossKind::CrossEntropy,
                ..cfg(Architecture::Mlp)
            },
        )
        .unwrap();
        let ka = a.curve[a.best_epoch].dev_kl.unwrap();
        let kb = b.curve[b.best_epoch].dev_kl.unwrap();
        assert!((ka - kb).abs() < 1e-6);
    }

    #[test]
    fn best_epoch_improves_on_initial_loss() {
        let pairs = random_pairs(80, 5, 1);
        let model = train(&pairs, &[], &cfg(Architecture::Mlp)).unwrap();
        assert!(model.best_epoch >= 1);
        assert!(model.curve[model.best_epoch].train_loss < model.curve[0].train_loss);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let mut pairs = random_pairs(5, 3, 0);
        pairs[2].0.push(1.0);
        assert!(train(&pairs, &[], &cfg(Architecture::Linear)).is_err());
        assert!(train(&[], &[], &cfg(Architecture::Linear)).is_err());
    }

    #[test]
    fn invalid_config() {
        let bad = LearnerConfig {
            dropout: 1.0,
            ..LearnerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LearnerConfig {
            learning_rate: 0.0,
            ..LearnerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let pairs = random_pairs(10, 3, 0);
        let c = LearnerConfig {
            max_epochs: 2,
            ..cfg(Architecture::Mlp)
        };
        let model = train(&pairs, &[], &c).unwrap();
        let back = TrainedLearner::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        assert!(model.curve_csv().starts_with("epoch,train_loss,dev_kl\n0,"));
    }
}
