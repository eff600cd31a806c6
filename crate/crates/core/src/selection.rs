//! Hyperparameter search under the stage-1 total-KL objective.
//!
//! Each `(method, w)` pair gets its own grid: integer `p` for the clustering
//! methods, radius `r` for NBP. Grid cells run in parallel and are reduced in
//! grid order, so results do not depend on scheduling.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::mixing::FeatureSimplexTransform;
use crate::nbp::{r_grid, NbpConfig, Neighbourhoods};
use crate::pipeline::{fit_pooling, pairs, Method, PoolingFit, PoolingModel, Stage1Options};
use crate::types::Dataset;
use crate::FORMAT_VERSION;

/// Scores closer than this count as tied; ties go to the smaller
/// hyperparameter.
pub const TIE_TOLERANCE: f64 = 1e-12;
pub const P_MIN: usize = 4;
pub const P_MAX: usize = 40;

/// The default `p` grid, `4..=40`.
pub fn p_grid() -> Vec<usize> {
    (P_MIN..=P_MAX).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hyperparameter: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub hyperparameter: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    pub w: f64,
    pub best_hyperparameter: f64,
    /// Stage-1 score of the winning cell.
    pub best_score: f64,
    /// Successful cells in grid order.
    pub grid: Vec<GridCell>,
    pub skipped: Vec<SkippedCell>,
    /// Dev mean KL of a learner trained on the winner's pooled labels
    /// (stage2-dev mode only).
    pub dev_kl: Option<f64>,
    /// The winning fit.
    #[serde(skip)]
    pub model: Option<PoolingModel>,
}

/// Index of the minimum score, earliest on ties within [`TIE_TOLERANCE`].
fn argmin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if s >= scores[b] - TIE_TOLERANCE => {}
            _ => best = Some(i),
        }
    }
    best
}

fn collect(
    method: Method,
    w: f64,
    outcomes: Vec<(f64, Result<PoolingModel>)>,
    pick: impl Fn(&[GridCell]) -> Option<usize>,
) -> Result<SelectionResult> {
    let total = outcomes.len();
    let mut grid = Vec::new();
    let mut skipped = Vec::new();
    let mut models = Vec::new();
    for (h, outcome) in outcomes {
        match outcome {
            Ok(m) => {
                grid.push(GridCell {
                    hyperparameter: h,
                    score: m.stage1_score,
                });
                models.push(m);
            }
            Err(e) => {
                log::warn!(
                    "{method} w={w} {}={h} skipped: {e}",
                    method.hyperparameter_name()
                );
                skipped.push(SkippedCell {
                    hyperparameter: h,
                    error: e.to_string(),
                });
            }
        }
    }
    let best = pick(&grid).ok_or(Error::AllCellsFailed(total))?;
    Ok(SelectionResult {
        method,
        w,
        best_hyperparameter: grid[best].hyperparameter,
        best_score: grid[best].score,
        grid,
        skipped,
        dev_kl: None,
        model: Some(models.swap_remove(best)),
    })
}

/// Grid search over `p` for one clustering method at one `w`.
pub fn select_p(
    method: Method,
    train: &Dataset,
    w: f64,
    seed: u64,
    p_values: &[usize],
    t: &FeatureSimplexTransform,
    opts: &Stage1Options,
) -> Result<SelectionResult> {
    if method == Method::Nbp {
        return Err(Error::param("method", "select_p needs a clustering method"));
    }
    if p_values.is_empty() {
        return Err(Error::param("p", "empty grid"));
    }
    let outcomes: Vec<(f64, Result<PoolingModel>)> = p_values
        .par_iter()
        .map(|&p| {
            (
                p as f64,
                fit_pooling(method, train, w, p as f64, seed, t, opts),
            )
        })
        .collect();
    collect(method, w, outcomes, |g| {
        argmin(&g.iter().map(|c| c.score).collect::<Vec<_>>())
    })
}

/// Grid search over `r` for NBP at one `w`.
///
/// `r = 0` always scores 0 (no pooling), so the argmin is taken over `r > 0`.
/// `r = 0` is returned only when it is the sole cell or when no positive
/// radius scores above it, in which case pooling changes nothing.
pub fn select_r(
    train: &Dataset,
    w: f64,
    r_values: &[f64],
    t: &FeatureSimplexTransform,
    opts: &Stage1Options,
) -> Result<SelectionResult> {
    if r_values.is_empty() {
        return Err(Error::param("r", "empty grid"));
    }
    for &r in r_values {
        NbpConfig {
            r,
            w,
            smoothing: opts.smoothing,
        }
        .validate()?;
    }
    let nb = Neighbourhoods::build(train, w, t, opts.smoothing)?;
    let outcomes: Vec<(f64, Result<PoolingModel>)> = r_values
        .par_iter()
        .map(|&r| {
            let model = PoolingModel {
                version: FORMAT_VERSION,
                method: Method::Nbp,
                w,
                hyperparameter: r,
                seed: 0,
                transform: t.clone(),
                options: *opts,
                stage1_score: nb.score(r),
                fit: PoolingFit::Nbp(NbpConfig {
                    r,
                    w,
                    smoothing: opts.smoothing,
                }),
            };
            (r, Ok(model))
        })
        .collect();
    collect(Method::Nbp, w, outcomes, |g| {
        let positive: Vec<usize> = (0..g.len())
            .filter(|&i| g[i].hyperparameter > 0.0)
            .collect();
        let zero = (0..g.len()).find(|&i| g[i].hyperparameter == 0.0);
        let scores: Vec<f64> = positive.iter().map(|&i| g[i].score).collect();
        match (argmin(&scores).map(|k| positive[k]), zero) {
            (Some(b), Some(z)) if g[b].score <= g[z].score + TIE_TOLERANCE => Some(z),
            (Some(b), _) => Some(b),
            (None, z) => z,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Stage1,
    Stage2Dev,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stage1 => "stage1",
            Self::Stage2Dev => "stage2-dev",
        })
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stage1" => Ok(Self::Stage1),
            "stage2-dev" | "stage2_dev" => Ok(Self::Stage2Dev),
            other => Err(Error::param(
                "mode",
                format!("unknown selection mode `{other}`"),
            )),
        }
    }
}

/// Grids and settings for [`select_overall`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub methods: Vec<Method>,
    pub w_grid: Vec<f64>,
    pub p_values: Vec<usize>,
    pub r_values: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            w_grid: crate::mixing::W_GRID.to_vec(),
            p_values: p_grid(),
            r_values: r_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub method: Method,
    pub w: f64,
    pub error: String,
}

/// Ranked candidates (best first) plus `(method, w)` pairs whose whole grid
/// failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub version: u32,
    pub mode: SelectionMode,
    pub seed: u64,
    pub ranked: Vec<SelectionResult>,
    pub failures: Vec<CandidateFailure>,
}

/// Runs every `(method, w)` grid and ranks the winners, by stage-1 score or
/// by the dev KL of a learner trained on each winner's pooled labels.
#[allow(clippy::too_many_arguments)]
pub fn select_overall(
    train: &Dataset,
    dev: &Dataset,
    space: &SearchSpace,
    mode: SelectionMode,
    seed: u64,
    t: &FeatureSimplexTransform,
    opts: &Stage1Options,
    learner: &LearnerConfig,
) -> Result<SelectionReport> {
    if space.methods.is_empty() || space.w_grid.is_empty() {
        return Err(Error::param("grid", "needs at least one method and one w"));
    }
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for &method in &space.methods {
        for &w in &space.w_grid {
            let res = if method == Method::Nbp {
                select_r(train, w, &space.r_values, t, opts)
            } else {
                select_p(method, train, w, seed, &space.p_values, t, opts)
            };
            match res {
                Ok(r) => ranked.push(r),
                Err(e) if e.is_validation() || matches!(e, Error::AllCellsFailed(_)) => {
                    log::warn!("{method} w={w}: {e}");
                    failures.push(CandidateFailure {
                        method,
                        w,
                        error: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    if mode == SelectionMode::Stage2Dev {
        train.require_features()?;
        let dev_pairs = pairs(dev, &crate::baselines::pd_targets(dev))?;
        for r in &mut ranked {
            let model = r.model.as_ref().expect("selection keeps the winning model");
            let pooled = model.pooled_labels(train)?;
            let trained = crate::learner::train(&pairs(train, &pooled)?, &dev_pairs, learner)?;
            r.dev_kl = trained.curve[trained.best_epoch].dev_kl;
        }
    }
    let key = |r: &SelectionResult| match mode {
        SelectionMode::Stage1 => r.best_score,
        SelectionMode::Stage2Dev => r.dev_kl.unwrap_or(f64::INFINITY),
    };
    // stable sort keeps (method, w) order among exact ties
    ranked.sort_by(|a, b| key(a).total_cmp(&key(b)));
    Ok(SelectionReport {
        version: FORMAT_VERSION,
        mode,
        seed,
        ranked,
        failures,
    })
}

impl SelectionReport {
    /// One row per grid cell, skipped cell, or failed `(method, w)` pair:
    /// `method,w,hyperparameter,score,selected,dev_kl,error`.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(Method, u64, String)> = Vec::new();
        for r in &self.ranked {
            let dev = r.dev_kl.map(|v| v.to_string()).unwrap_or_default();
            for c in &r.grid {
                let selected = c.hyperparameter == r.best_hyperparameter;
                rows.push((
                    r.method,
                    r.w.to_bits(),
                    format!(
                        "{},{},{},{},{},{},",
                        r.method,
                        r.w,
                        c.hyperparameter,
                        c.score,
                        selected,
                        if selected { dev.as_str() } else { "" }
                    ),
                ));
            }
            for s in &r.skipped {
                rows.push((
                    r.method,
                    r.w.to_bits(),
                    format!(
                        "{},{},{},,false,,{}",
                        r.method,
                        r.w,
                        s.hyperparameter,
                        csv_escape(&s.error)
                    ),
                ));
            }
        }
        for f in &self.failures {
            rows.push((
                f.method,
                f.w.to_bits(),
                format!("{},{},,,false,,{}", f.method, f.w, csv_escape(&f.error)),
            ));
        }
        // stable: grid order within each (method, w)
        rows.sort_by(|a, b| {
            (a.0, f64::from_bits(a.1))
                .partial_cmp(&(b.0, f64::from_bits(b.1)))
                .expect("finite w")
        });
        let mut out = String::from("method,w,hyperparameter,score,selected,dev_kl,error\n");
        for (_, _, line) in rows {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn winner(&self) -> Option<&SelectionResult> {
        self.ranked.first()
    }
}

fn csv_escape(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}
