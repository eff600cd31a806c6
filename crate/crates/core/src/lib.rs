//! # crowdopinion
//!
//! Label-distribution learning for crowd-annotated data.
//!
//! Each item carries a feature vector `x` and the empirical distribution `y`
//! of its annotators' responses. Annotation budgets of 3-10 labels per item
//! make `y` a noisy sample of the population's response distribution, so the
//! pipeline works in two stages:
//!
//! 1. **Pooling.** Items are grouped in the weighted joint space
//!    `(w·x, (1−w)·y)` and each item receives the mean label distribution
//!    `ŷ` of its group. Groups come from K-Means, a diagonal Gaussian
//!    mixture, a Dirichlet-smoothed multinomial mixture, LDA, or a per-item
//!    KL ball (neighbourhood pooling).
//! 2. **Learning.** A distributional classifier is trained on `(x, ŷ)` with
//!    a KL loss and evaluated on held-out items against their empirical
//!    distributions, both as mean KL and as argmax accuracy.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`types`] | `LabelDistribution`, `DataItem`, `Dataset`, `PooledLabels` |
//! | [`divergence`] | smoothed KL, entropy |
//! | [`mixing`] | mixed points and the feature-to-simplex transform |
//! | [`clustering`] | K-Means, GMM, FMM, LDA and label pooling |
//! | [`nbp`] | neighbourhood-based pooling |
//! | [`selection`] | hyperparameter grids under the total-KL objective |
//! | [`learner`] | linear / MLP / 1D-conv softmax learners with Adam |
//! | [`baselines`] | PD, SL and Dawid-Skene targets |
//! | [`evaluation`] | mean KL, accuracy, entropy reports |
//! | [`io`] | JSONL corpus, run configuration, splits, report writers |
//! | [`synth`] | planted-cluster synthetic corpus |
//! | [`pipeline`] | stage-1 method dispatch and end-to-end runs |

pub mod baselines;
pub mod clustering;
pub mod divergence;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod learner;
pub mod mixing;
pub mod nbp;
pub mod pipeline;
pub mod selection;
pub mod synth;
pub mod types;

mod util;

pub use divergence::{item_entropy, kl, mean_kl, SmoothingPolicy};
pub use error::{Error, Result};
pub use mixing::{FeatureSimplexTransform, MixedPoint, MixedSpace};
pub use types::{DataItem, Dataset, LabelDistribution, PooledLabels, Split};

/// Format version stamped into every JSON artifact written by this crate.
pub const FORMAT_VERSION: u32 = 1;
