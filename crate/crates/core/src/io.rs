//! File formats, run configuration, and the split protocol.
//!
//! # Corpus JSONL
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": "p1", "text": "...", "features": [0.1, ...],
//!  "counts": {"sad": 3, "wow": 1},
//!  "annotations": [{"annotator": "a7", "label": "sad"}, ...]}
//! ```
//!
//! `counts` or `annotations` (or both, consistent) must be present. An
//! optional first line `{"label_names": [...]}` fixes the label order when no
//! configuration supplies it.
//!
//! # Run configuration
//!
//! `key = value` lines; `#` starts a comment. Lists are comma-separated.
//!
//! | key | default |
//! |-----|---------|
//! | `dataset` | none |
//! | `label_names` | from the corpus header |
//! | `seed` | 0 |
//! | `split_seed` | 0 |
//! | `fractions` | `0.5, 0.25, 0.25` |
//! | `downsample_n` | 2000 |
//! | `methods` | `kmeans, gmm, fmm, lda, nbp` |
//! | `w_grid` | `0, 0.25, 0.5, 0.75, 1` |
//! | `p_min`, `p_max` | 4, 40 |
//! | `r_grid` | `0, 0.1, ..., 15` |
//! | `preprocess` | `none` (or `facebook`) |
//! | `fmm_pseudocounts` | `per_item` (or `fixed`) |
//! | `ds_synthesize` | false |
//! | `out` | none |
//! | `learner.architecture` | `mlp` |
//! | `learner.hidden_dim` | 128 |
//! | `learner.dropout` | 0.5 |
//! | `learner.learning_rate` | 0.001 |
//! | `learner.batch_size` | 32 |
//! | `learner.max_epochs` | 50 |
//! | `learner.patience` | 5 |
//! | `learner.seed` | 0 |
//! | `learner.loss` | `kl` (or `cross_entropy`) |

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::clustering::PseudocountMode;
use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, LossKind};
use crate::mixing::W_GRID;
use crate::nbp::r_grid;
use crate::pipeline::Method;
use crate::types::{Annotation, DataItem, Dataset, LabelDistribution, PooledLabels, Split};
use crate::util::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CorpusLine {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<BTreeMap<String, u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotations: Option<Vec<LineAnnotation>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LineAnnotation {
    annotator: String,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    label_names: Vec<String>,
}

fn label_lookup(names: &[String]) -> BTreeMap<&str, usize> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect()
}

fn item_from_line(line: CorpusLine, names: &[String], lineno: usize) -> Result<DataItem> {
    let lookup = label_lookup(names);
    let index_of = |label: &str| {
        lookup.get(label).copied().ok_or_else(|| Error::Parse {
            line: lineno,
            reason: format!("unknown label `{label}`"),
        })
    };
    let annotations = line
        .annotations
        .map(|anns| {
            anns.into_iter()
                .map(|a| {
                    Ok(Annotation {
                        label: index_of(&a.label)?,
                        annotator: a.annotator,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let counts = match (&line.counts, &annotations) {
        (Some(map), _) => {
            let mut c = vec![0u32; names.len()];
            for (label, &n) in map {
                c[index_of(label)?] += n;
            }
            c
        }
        (None, Some(anns)) => {
            let mut c = vec![0u32; names.len()];
            for a in anns {
                c[a.label] += 1;
            }
            c
        }
        (None, None) => {
            return Err(Error::Parse {
                line: lineno,
                reason: "needs `counts` or `annotations`".into(),
            })
        }
    };
    let mut item = DataItem {
        id: line.id,
        text: line.text,
        features: line.features.unwrap_or_default(),
        counts,
        annotations,
    };
    item.validate().map_err(|e| Error::Parse {
        line: lineno,
        reason: e.to_string(),
    })?;
    if item.annotations.as_ref().is_some_and(Vec::is_empty) {
        item.annotations = None;
    }
    Ok(item)
}

/// Reads a corpus. `label_names` overrides the file header.
pub fn load_corpus(path: &Path, label_names: Option<&[String]>) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    let mut lines = Vec::new();
    let mut header: Option<Vec<String>> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        if lines.is_empty() && header.is_none() && value.get("label_names").is_some() {
            let h: CorpusHeader = serde_json::from_value(value).map_err(|e| Error::Parse {
                line: lineno,
                reason: e.to_string(),
            })?;
            header = Some(h.label_names);
            continue;
        }
        let parsed: CorpusLine = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        lines.push((lineno, parsed));
    }
    if lines.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "{} contains no items",
            path.display()
        )));
    }
    let names: Vec<String> = match (label_names, header) {
        (Some(n), _) => n.to_vec(),
        (None, Some(h)) => h,
        (None, None) => {
            return Err(Error::Config(
                "label_names must be given in the configuration or a corpus header line".into(),
            ))
        }
    };
    let items = lines
        .into_iter()
        .map(|(lineno, l)| item_from_line(l, &names, lineno))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(items, names)
}

/// Writes a corpus with a `label_names` header line.
pub fn save_corpus(ds: &Dataset, path: &Path) -> Result<()> {
    let names = ds.label_names();
    let mut out = serde_json::to_string(&CorpusHeader {
        label_names: names.to_vec(),
    })?;
    out.push('\n');
    for item in ds.items() {
        let line = CorpusLine {
            id: item.id.clone(),
            text: item.text.clone(),
            features: (!item.features.is_empty()).then(|| item.features.clone()),
            counts: Some(
                names
                    .iter()
                    .zip(&item.counts)
                    .filter(|(_, &c)| c > 0)
                    .map(|(n, &c)| (n.clone(), c))
                    .collect(),
            ),
            annotations: item.annotations.as_ref().map(|anns| {
                anns.iter()
                    .map(|a| LineAnnotation {
                        annotator: a.annotator.clone(),
                        label: names[a.label].clone(),
                    })
                    .collect()
            }),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PooledLine {
    id: String,
    distribution: LabelDistribution,
}

/// `{"id": ..., "distribution": [...]}` per line, sorted by id.
pub fn save_pooled(labels: &PooledLabels, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, dist) in labels.iter() {
        out.push_str(&serde_json::to_string(&PooledLine {
            id: id.clone(),
            distribution: dist.clone(),
        })?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_pooled(path: &Path) -> Result<PooledLabels> {
    let text = fs::read_to_string(path)?;
    let mut labels = PooledLabels::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: PooledLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if labels.get(&l.id).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("duplicate id `{}`", l.id),
            });
        }
        labels.insert(l.id, l.distribution);
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preprocess {
    #[default]
    None,
    Facebook,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub label_names: Option<Vec<String>>,
    pub seed: u64,
    pub split_seed: u64,
    pub fractions: [f64; 3],
    pub downsample_n: usize,
    pub methods: Vec<Method>,
    pub w_grid: Vec<f64>,
    pub p_min: usize,
    pub p_max: usize,
    pub r_grid: Vec<f64>,
    pub preprocess: Preprocess,
    pub fmm_pseudocounts: PseudocountMode,
    pub ds_synthesize: bool,
    pub out: Option<PathBuf>,
    pub learner: LearnerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            label_names: None,
            seed: 0,
            split_seed: 0,
            fractions: [0.5, 0.25, 0.25],
            downsample_n: 2000,
            methods: Method::ALL.to_vec(),
            w_grid: W_GRID.to_vec(),
            p_min: 4,
            p_max: 40,
            r_grid: r_grid(),
            preprocess: Preprocess::None,
            fmm_pseudocounts: PseudocountMode::PerItem,
            ds_synthesize: false,
            out: None,
            learner: LearnerConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "label_names" => self.label_names = Some(parse_list(key, v)?),
            "seed" => self.seed = parse(key, v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "fractions" => {
                let f: Vec<f64> = parse_list(key, v)?;
                self.fractions = f
                    .try_into()
                    .map_err(|_| Error::Config("`fractions` needs exactly three values".into()))?;
            }
            "downsample_n" => self.downsample_n = parse(key, v)?,
            "methods" => self.methods = parse_list(key, v)?,
            "w_grid" => self.w_grid = parse_list(key, v)?,
            "p_min" => self.p_min = parse(key, v)?,
            "p_max" => self.p_max = parse(key, v)?,
            "r_grid" => self.r_grid = parse_list(key, v)?,
            "preprocess" => {
                self.preprocess = match v {
                    "none" => Preprocess::None,
                    "facebook" => Preprocess::Facebook,
                    other => return Err(Error::Config(format!("unknown preprocess `{other}`"))),
                }
            }
            "fmm_pseudocounts" => {
                self.fmm_pseudocounts = match v {
                    "per_item" => PseudocountMode::PerItem,
                    "fixed" => PseudocountMode::Fixed,
                    other => {
                        return Err(Error::Config(format!("unknown fmm_pseudocounts `{other}`")))
                    }
                }
            }
            "ds_synthesize" => self.ds_synthesize = parse(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "learner.architecture" => self.learner.architecture = parse(key, v)?,
            "learner.hidden_dim" => self.learner.hidden_dim = parse(key, v)?,
            "learner.dropout" => self.learner.dropout = parse(key, v)?,
            "learner.learning_rate" => self.learner.learning_rate = parse(key, v)?,
            "learner.batch_size" => self.learner.batch_size = parse(key, v)?,
            "learner.max_epochs" => self.learner.max_epochs = parse(key, v)?,
            "learner.patience" => self.learner.patience = parse(key, v)?,
            "learner.seed" => self.learner.seed = parse(key, v)?,
            "learner.loss" => {
                self.learner.loss = match v {
                    "kl" => LossKind::Kl,
                    "cross_entropy" => LossKind::CrossEntropy,
                    other => return Err(Error::Config(format!("unknown loss `{other}`"))),
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.fractions.iter().any(|f| *f < 0.0) {
            return Err(Error::Config(format!(
                "fractions {:?} must be non-negative and sum to 1",
                self.fractions
            )));
        }
        if self.downsample_n == 0 {
            return Err(Error::Config("downsample_n must be positive".into()));
        }
        if let Some(w) = self.w_grid.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::Config(format!("w = {w} outside [0, 1]")));
        }
        if self.p_min == 0 || self.p_min > self.p_max {
            return Err(Error::Config(format!(
                "p range {}..={} is empty",
                self.p_min, self.p_max
            )));
        }
        self.learner
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Serializes back to the key-value format.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        if let Some(d) = &self.dataset {
            put("dataset", d.display().to_string());
        }
        if let Some(n) = &self.label_names {
            put("label_names", join(n));
        }
        put("seed", self.seed.to_string());
        put("split_seed", self.split_seed.to_string());
        put("fractions", join(&self.fractions));
        put("downsample_n", self.downsample_n.to_string());
        put("methods", join(&self.methods));
        put("w_grid", join(&self.w_grid));
        put("p_min", self.p_min.to_string());
        put("p_max", self.p_max.to_string());
        if self.r_grid != r_grid() {
            put("r_grid", join(&self.r_grid));
        }
        put(
            "preprocess",
            match self.preprocess {
                Preprocess::None => "none",
                Preprocess::Facebook => "facebook",
            }
            .into(),
        );
        put(
            "fmm_pseudocounts",
            match self.fmm_pseudocounts {
                PseudocountMode::PerItem => "per_item",
                PseudocountMode::Fixed => "fixed",
            }
            .into(),
        );
        put("ds_synthesize", self.ds_synthesize.to_string());
        if let Some(o) = &self.out {
            put("out", o.display().to_string());
        }
        let l = &self.learner;
        put("learner.architecture", l.architecture.to_string());
        put("learner.hidden_dim", l.hidden_dim.to_string());
        put("learner.dropout", l.dropout.to_string());
        put("learner.learning_rate", l.learning_rate.to_string());
        put("learner.batch_size", l.batch_size.to_string());
        put("learner.max_epochs", l.max_epochs.to_string());
        put("learner.patience", l.patience.to_string());
        put("learner.seed", l.seed.to_string());
        put(
            "learner.loss",
            match l.loss {
                LossKind::Kl => "kl",
                LossKind::CrossEntropy => "cross_entropy",
            }
            .into(),
        );
        out
    }
}

/// Seeded downsample to `min(n, downsample_n)`, shuffle, then contiguous
/// train/dev/test split by `fractions`.
pub fn split_downsample(
    ds: &Dataset,
    fractions: [f64; 3],
    downsample_n: usize,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut r = rng(seed);
    let m = ds.len().min(downsample_n);
    let mut chosen = index::sample(&mut r, ds.len(), m).into_vec();
    chosen.shuffle(&mut r);
    let n_train = (fractions[0] * m as f64).round() as usize;
    let n_dev = ((fractions[1] * m as f64).round() as usize).min(m - n_train.min(m));
    let n_train = n_train.min(m);
    let n_test = m - n_train - n_dev;
    for (name, n) in [("train", n_train), ("dev", n_dev), ("test", n_test)] {
        if n == 0 {
            return Err(Error::InvalidDataset(format!(
                "{name} split is empty ({m} items, fractions {fractions:?})"
            )));
        }
    }
    let train = ds.select(&chosen[..n_train]).with_split(Split::Train);
    let dev = ds
        .select(&chosen[n_train..n_train + n_dev])
        .with_split(Split::Dev);
    let test = ds
        .select(&chosen[n_train + n_dev..])
        .with_split(Split::Test);
    Ok((train, dev, test))
}

/// Removes the `like` reaction and drops items left without reactions.
pub fn facebook_preprocess(ds: &Dataset) -> Result<Dataset> {
    let like = ds
        .label_names()
        .iter()
        .position(|n| n == "like")
        .ok_or_else(|| Error::InvalidDataset("no `like` label to remove".into()))?;
    let names: Vec<String> = ds
        .label_names()
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != like)
        .map(|(_, n)| n.clone())
        .collect();
    let mut dropped = 0usize;
    let mut items = Vec::with_capacity(ds.len());
    for item in ds.items() {
        let counts: Vec<u32> = item
            .counts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != like)
            .map(|(_, &c)| c)
            .collect();
        if counts.iter().all(|&c| c == 0) {
            dropped += 1;
            continue;
        }
        let annotations = item.annotations.as_ref().map(|anns| {
            anns.iter()
                .filter(|a| a.label != like)
                .map(|a| Annotation {
                    annotator: a.annotator.clone(),
                    label: if a.label > like { a.label - 1 } else { a.label },
                })
                .collect()
        });
        items.push(DataItem {
            counts,
            annotations,
            ..item.clone()
        });
    }
    if dropped > 0 {
        log::info!("facebook preprocessing dropped {dropped} items with only `like` reactions");
    }
    let out = Dataset::new(items, names)?;
    Ok(match ds.split() {
        Some(s) => out.with_split(s),
        None => out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.jsonl", "");
        assert!(load_corpus(&p, Some(&names(&["a", "b"]))).is_err());
    }

    #[test]
    fn counts_and_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            concat!(
                "{\"id\":\"x\",\"counts\":{\"a\":3,\"b\":1}}\n",
                "{\"id\":\"y\",\"annotations\":[{\"annotator\":\"u1\",\"label\":\"b\"},",
                "{\"annotator\":\"u2\",\"label\":\"a\"},{\"annotator\":\"u3\",\"label\":\"b\"}]}\n"
            ),
        );
        let ds = load_corpus(&p, Some(&names(&["a", "b"]))).unwrap();
        assert_eq!(ds.items()[0].counts, vec![3, 1]);
        assert_eq!(ds.items()[1].counts, vec![1, 2]);
    }

    #[test]
    fn unknown_label_and_bad_json_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            "{\"id\":\"x\",\"counts\":{\"a\":1,\"b\":1}}\n{\"id\":\"y\",\"counts\":{\"z\":1}}\n",
        );
        match load_corpus(&p, Some(&names(&["a", "b"]))) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let p = write(
            dir.path(),
            "d.jsonl",
            "{\"id\":\"x\",\"counts\":{\"a\":1}}\nnot json\n",
        );
        assert!(matches!(
            load_corpus(&p, Some(&names(&["a", "b"]))),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn inconsistent_counts_and_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            "{\"id\":\"x\",\"counts\":{\"a\":2},\"annotations\":[{\"annotator\":\"u\",\"label\":\"a\"}]}\n",
        );
        assert!(load_corpus(&p, Some(&names(&["a", "b"]))).is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = "# comment\nseed = 7\nmethods = kmeans, nbp\nw_grid = 0.5\nlearner.architecture = linear\nlabel_names = a, b\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.methods, vec![Method::KMeans, Method::Nbp]);
        assert_eq!(cfg.label_names, Some(names(&["a", "b"])));
        assert_eq!(RunConfig::parse(&cfg.to_kv()).unwrap(), cfg);
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("fractions = 0.5, 0.5, 0.5").is_err());
    }

    #[test]
    fn split_sizes() {
        let items = (0..4)
            .map(|i| DataItem::new(format!("i{i}"), vec![], vec![1, 0]).unwrap())
            .collect();
        let ds = Dataset::new(items, names(&["a", "b"])).unwrap();
        let (tr, dv, te) = split_downsample(&ds, [0.5, 0.25, 0.25], 2000, 1).unwrap();
        assert_eq!((tr.len(), dv.len(), te.len()), (2, 1, 1));
        assert!(split_downsample(&ds, [1.0, 0.0, 0.0], 2000, 1).is_err());
    }

    #[test]
    fn facebook_examples() {
        let n = names(&["like", "love", "wow", "haha", "sad", "angry"]);
        let items = vec![
            DataItem::new("a", vec![], vec![100, 0, 0, 0, 10, 0]).unwrap(),
            DataItem::new("b", vec![], vec![100, 0, 0, 0, 0, 0]).unwrap(),
            DataItem::new("c", vec![], vec![7, 1, 2, 3, 4, 0]).unwrap(),
        ];
        let ds = facebook_preprocess(&Dataset::new(items, n).unwrap()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_labels(), 5);
        assert_eq!(
            ds.items()[0].empirical_distribution().unwrap().probs(),
            &[0.0, 0.0, 0.0, 1.0, 0.0]
        );
        let c = ds.items()[1].empirical_distribution().unwrap();
        for (a, b) in c.probs().iter().zip([0.1, 0.2, 0.3, 0.4, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let no_like = Dataset::new(
            vec![DataItem::new("a", vec![], vec![1, 1]).unwrap()],
            names(&["x", "y"]),
        )
        .unwrap();
        assert!(facebook_preprocess(&no_like).is_err());
    }
}
