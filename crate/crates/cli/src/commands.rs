use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use crowdopinion::baselines::DawidSkeneConfig;
use crowdopinion::evaluation::{entropy_report, evaluate, surface_examples, EvalReport};
use crowdopinion::io::{
    facebook_preprocess, load_corpus, load_pooled, save_corpus, save_pooled, split_downsample,
    write_atomic, Preprocess, RunConfig,
};
use crowdopinion::learner::{LearnerConfig, TrainedLearner};
use crowdopinion::pipeline::{
    fit_pooling, train_on, Method, PoolingModel, Stage1Options, TargetSource,
};
use crowdopinion::selection::{select_overall, SearchSpace};
use crowdopinion::synth::{generate, SynthConfig};
use crowdopinion::{Dataset, FeatureSimplexTransform, Split};

use crate::{
    run_config, usage, Cli, Command, DataArgs, EvalArgs, PoolArgs, ReportArgs, SelectArgs,
    SynthArgs, Targets, TrainArgs,
};

const POOLED: &str = "pooled.jsonl";
const POOLING_MODEL: &str = "pooling_model.json";
const CHECKPOINT: &str = "checkpoint.json";
const RUN_INFO: &str = "run.json";

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Synth(args) = &cli.command {
        return synth(args, cli.common.seed, cli.common.out.as_deref());
    }
    let cfg = run_config(&cli.common)?;
    match cli.command {
        Command::Pool(a) => pool(a, cfg),
        Command::Select(a) => select(a, cfg),
        Command::Train(a) => train(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Report(a) => report(a, cfg),
        Command::Synth(_) => unreachable!("handled above"),
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    write_atomic(path, contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn load_dataset(data: &DataArgs, cfg: &mut RunConfig) -> Result<Dataset> {
    if let Some(d) = &data.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(s) = data.split_seed {
        cfg.split_seed = s;
    }
    let path = cfg
        .dataset
        .clone()
        .ok_or_else(|| usage("no dataset: pass --dataset or set `dataset` in --config"))?;
    let ds = load_corpus(&path, cfg.label_names.as_deref())
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(match cfg.preprocess {
        Preprocess::None => ds,
        Preprocess::Facebook => facebook_preprocess(&ds)?,
    })
}

fn load_splits(data: &DataArgs, cfg: &mut RunConfig) -> Result<(Dataset, Dataset, Dataset)> {
    let ds = load_dataset(data, cfg)?;
    let splits = split_downsample(&ds, cfg.fractions, cfg.downsample_n, cfg.split_seed)?;
    log::info!(
        "split {} items into {}/{}/{}",
        ds.len(),
        splits.0.len(),
        splits.1.len(),
        splits.2.len()
    );
    Ok(splits)
}

fn stage1_options(cfg: &RunConfig) -> Stage1Options {
    Stage1Options {
        pseudocounts: cfg.fmm_pseudocounts,
        ..Stage1Options::default()
    }
}

fn write_pooling(model: &PoolingModel, train: &Dataset, out: &Path) -> Result<()> {
    save_pooled(&model.pooled_labels(train)?, &out.join(POOLED))?;
    write(&out.join(POOLING_MODEL), &model.to_json()?)
}

fn pool(a: PoolArgs, mut cfg: RunConfig) -> Result<()> {
    let h = match (a.method, a.p, a.r) {
        (Method::Nbp, None, Some(r)) => r,
        (Method::Nbp, _, _) => return Err(usage("nbp takes --r and no --p")),
        (_, Some(p), None) => p as f64,
        (m, _, _) => return Err(usage(format!("{m} takes --p and no --r"))),
    };
    let (train, _, _) = load_splits(&a.data, &mut cfg)?;
    let t = FeatureSimplexTransform::fit(&train)?;
    let model = fit_pooling(
        a.method,
        &train,
        a.w,
        h,
        cfg.seed,
        &t,
        &stage1_options(&cfg),
    )?;
    let out = out_dir(&cfg);
    write_pooling(&model, &train, &out)?;
    println!(
        "{} w={} {}={} stage-1 mean KL {:.6}",
        model.method,
        model.w,
        model.method.hyperparameter_name(),
        model.hyperparameter,
        model.stage1_score
    );
    Ok(())
}

fn select(a: SelectArgs, mut cfg: RunConfig) -> Result<()> {
    if !a.methods.is_empty() {
        cfg.methods = a.methods;
    }
    if !a.w_grid.is_empty() {
        cfg.w_grid = a.w_grid;
    }
    if !a.r.is_empty() {
        cfg.r_grid = a.r;
    }
    cfg.validate()?;
    let (train, dev, _) = load_splits(&a.data, &mut cfg)?;
    let t = FeatureSimplexTransform::fit(&train)?;
    let space = SearchSpace {
        methods: cfg.methods.clone(),
        w_grid: cfg.w_grid.clone(),
        p_values: if a.p.is_empty() {
            (cfg.p_min..=cfg.p_max).collect()
        } else {
            a.p
        },
        r_values: cfg.r_grid.clone(),
    };
    let report = select_overall(
        &train,
        &dev,
        &space,
        a.mode,
        cfg.seed,
        &t,
        &stage1_options(&cfg),
        &cfg.learner,
    )?;
    let out = out_dir(&cfg);
    write(&out.join("selection.json"), &report.to_json()?)?;
    write(&out.join("selection.csv"), &report.to_csv())?;
    let winner = report
        .winner()
        .ok_or_else(|| anyhow::anyhow!("every (method, w) candidate failed"))?;
    let model = winner
        .model
        .as_ref()
        .expect("selection keeps the winning fit");
    write_pooling(model, &train, &out)?;
    for r in &report.ranked {
        print!(
            "{} w={} {}={} score {:.6}",
            r.method,
            r.w,
            r.method.hyperparameter_name(),
            r.best_hyperparameter,
            r.best_score
        );
        match r.dev_kl {
            Some(d) => println!(" dev KL {d:.6}"),
            None => println!(),
        }
    }
    for f in &report.failures {
        println!("{} w={} failed: {}", f.method, f.w, f.error);
    }
    Ok(())
}

fn train(a: TrainArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(arch) = a.arch {
        cfg.learner.architecture = arch;
    }
    if let Some(e) = a.epochs {
        cfg.learner.max_epochs = e;
    }
    cfg.validate()?;
    let (train_ds, dev, _) = load_splits(&a.data, &mut cfg)?;
    let out = out_dir(&cfg);
    let mut info: BTreeMap<String, String> = BTreeMap::new();
    info.insert("targets".into(), a.targets.to_string());
    let source = match a.targets {
        Targets::Pooled => {
            let path = a.pooled.clone().unwrap_or_else(|| out.join(POOLED));
            let pooled =
                load_pooled(&path).with_context(|| format!("loading {}", path.display()))?;
            let model_path = path.with_file_name(POOLING_MODEL);
            if model_path.exists() {
                let model = PoolingModel::from_json(&fs::read_to_string(&model_path)?)?;
                info.insert("method".into(), model.method.to_string());
                info.insert("w".into(), model.w.to_string());
                info.insert(
                    model.method.hyperparameter_name().into(),
                    model.hyperparameter.to_string(),
                );
                info.insert("stage1_seed".into(), model.seed.to_string());
            }
            TargetSource::Pooled(pooled)
        }
        Targets::Pd => TargetSource::Pd,
        Targets::Sl => TargetSource::Sl,
        Targets::Ds => TargetSource::Ds(DawidSkeneConfig {
            seed: cfg.seed,
            synthesize: cfg.ds_synthesize,
            ..DawidSkeneConfig::default()
        }),
    };
    let (targets, synthetic) = source.targets(&train_ds)?;
    if synthetic {
        log::warn!("Dawid-Skene ran on positional pseudo-annotators");
        info.insert("ds_synthetic_annotators".into(), "true".into());
    }
    if let Some(d) = &cfg.dataset {
        info.insert("dataset".into(), d.display().to_string());
    }
    info.insert("split_seed".into(), cfg.split_seed.to_string());
    let model = train_on(&train_ds, &dev, &targets, &cfg.learner)?;
    write(&out.join(CHECKPOINT), &model.to_json()?)?;
    write(&out.join("curve.csv"), &model.curve_csv())?;
    write(&out.join(RUN_INFO), &serde_json::to_string_pretty(&info)?)?;
    let best = &model.curve[model.best_epoch];
    match best.dev_kl {
        Some(d) => println!("best epoch {} dev KL {d:.6}", model.best_epoch),
        None => println!(
            "best epoch {} train loss {:.6}",
            model.best_epoch, best.train_loss
        ),
    }
    Ok(())
}

fn eval(a: EvalArgs, mut cfg: RunConfig) -> Result<()> {
    let out = out_dir(&cfg);
    let path = a.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT));
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let model = TrainedLearner::from_json(&text)?;
    let (train_ds, dev, test) = load_splits(&a.data, &mut cfg)?;
    let split = match a.split {
        Split::Train => train_ds,
        Split::Dev => dev,
        Split::Test => test,
    };
    let mut report = evaluate(&model, &split)?;
    let info_path = path.with_file_name(RUN_INFO);
    if info_path.exists() {
        let info: BTreeMap<String, String> =
            serde_json::from_str(&fs::read_to_string(&info_path)?)?;
        report.fingerprint.extend(info);
    }
    report
        .fingerprint
        .insert("split_seed".into(), cfg.split_seed.to_string());
    write(
        &out.join(format!("eval_{}.json", a.split)),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write(
        &out.join(format!("eval_{}.csv", a.split)),
        &report.per_item_csv(),
    )?;
    println!(
        "{}: mean KL {:.6} accuracy {:.4} ({} items)",
        a.split,
        report.mean_kl,
        report.accuracy,
        report.per_item.len()
    );
    Ok(())
}

fn report(a: ReportArgs, mut cfg: RunConfig) -> Result<()> {
    let out = out_dir(&cfg);
    let ds = match a.split {
        None => load_dataset(&a.data, &mut cfg)?,
        Some(s) => {
            let (train_ds, dev, test) = load_splits(&a.data, &mut cfg)?;
            match s {
                Split::Train => train_ds,
                Split::Dev => dev,
                Split::Test => test,
            }
        }
    };
    let entropy = entropy_report(&ds)?;
    write(
        &out.join("entropy.json"),
        &serde_json::to_string_pretty(&entropy)?,
    )?;
    write(&out.join("entropy_hist.dat"), &entropy.histogram_dat())?;
    println!(
        "mean entropy {:.6} over {} items",
        entropy.mean_entropy,
        ds.len()
    );

    if let Some(path) = &a.eval {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let eval: EvalReport = serde_json::from_str(&text)?;
        let names = ds.label_names();
        let items: BTreeMap<&str, _> = ds.items().iter().map(|i| (i.id.as_str(), i)).collect();
        let mut lines = String::new();
        for r in surface_examples(&eval, a.k, a.mode, cfg.seed) {
            let mut line = serde_json::json!({
                "id": r.id,
                "kl": r.kl,
                "true_label": names.get(r.true_argmax),
                "pred_label": names.get(r.pred_argmax),
            });
            if let Some(text) = items.get(r.id.as_str()).and_then(|i| i.text.as_ref()) {
                line["text"] = text.clone().into();
            }
            lines.push_str(&line.to_string());
            lines.push('\n');
        }
        write(&out.join("surfaced.jsonl"), &lines)?;
    }
    Ok(())
}

fn synth(a: &SynthArgs, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let cfg = SynthConfig {
        n: a.n,
        clusters: a.clusters,
        labels: a.labels,
        feature_dim: a.feature_dim,
        seed: seed.unwrap_or(SynthConfig::default().seed),
        ..SynthConfig::default()
    };
    let data = generate(&cfg)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    save_corpus(&data.dataset, &out.join("corpus.jsonl"))?;
    let run = RunConfig {
        dataset: Some(PathBuf::from("corpus.jsonl")),
        label_names: Some(data.dataset.label_names().to_vec()),
        seed: cfg.seed,
        split_seed: cfg.seed,
        learner: LearnerConfig {
            seed: cfg.seed,
            ..LearnerConfig::default()
        },
        ..RunConfig::default()
    };
    write(&out.join("synth.conf"), &run.to_kv())?;
    println!(
        "{} items, {} groups, {} labels",
        data.dataset.len(),
        cfg.clusters,
        cfg.labels
    );
    Ok(())
}
