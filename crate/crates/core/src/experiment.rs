//! Experiment directory orchestration.
//!
//! Layout under `out_dir`:
//!
//! ```text
//! corpus.{labeled,unlabeled,dev,test}
//! base/config.txt  base/history.tsv  base/checkpoint_best
//! <run>/config.txt  <run>/metrics.tsv  <run>/epoch_NNN/{metrics.tsv,generations.txt}
//! <run>/checkpoint_best  <run>/checkpoint_last
//! ```
//!
//! `<run>` is `run_name` or, when empty, the variant name.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::corpus::{read_corpus, write_corpus, CorpusSplits, SyntheticSource};
use crate::dualvae::ModelParams;
use crate::error::{Error, Result};
use crate::metrics::{read_metrics_tsv, MetricsReport};
use crate::rng;
use crate::selftrain::{run_self_training, train_base, BaseResult, EvalContext, STState};

/// Source plus splits drawn from the config's seeds.
pub fn build_corpus(cfg: &ExperimentConfig) -> Result<(SyntheticSource, CorpusSplits)> {
    let source = cfg.source()?;
    let splits = source.make_splits(cfg.splits, &mut rng::seeded(cfg.split_seed))?;
    Ok((source, splits))
}

/// Base model trained from the config's seed.
pub fn fit_base(cfg: &ExperimentConfig, splits: &CorpusSplits) -> Result<BaseResult> {
    let model = ModelParams::init(cfg.model, cfg.seed)?;
    train_base(splits, model, cfg.train.clone())
}

/// Self-train from `base` without touching the disk.
pub fn run_in_memory(
    cfg: &ExperimentConfig,
    source: &SyntheticSource,
    splits: &CorpusSplits,
    base: &BaseResult,
) -> Result<STState> {
    let ctx = EvalContext::new(source, splits, cfg.eval.clone())?;
    run_self_training(base, &ctx, &cfg.train, cfg.variant, &cfg.st, None)
}

pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Layout {
            root: cfg.require_out_dir()?.to_path_buf(),
        })
    }

    pub fn corpus_prefix(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn base_dir(&self) -> PathBuf {
        self.root.join("base")
    }

    pub fn run_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        let name = if cfg.run_name.is_empty() {
            cfg.variant.to_string()
        } else {
            cfg.run_name.clone()
        };
        self.root.join(name)
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Prerequisite(format!("{} not found; {hint}", path.display())))
    }
}

/// Write the four split files; returns their common prefix.
pub fn gen_corpus(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let layout = Layout::new(cfg)?;
    mkdir(&layout.root)?;
    let (source, splits) = build_corpus(cfg)?;
    let prefix = layout.corpus_prefix();
    write_corpus(&splits, &prefix, &source.vocab, &source.attributes)?;
    Ok(prefix)
}

/// Read the corpus written by [`gen_corpus`].
pub fn load_corpus(cfg: &ExperimentConfig) -> Result<(SyntheticSource, CorpusSplits)> {
    let layout = Layout::new(cfg)?;
    let prefix = layout.corpus_prefix();
    require(
        &crate::corpus::split_path(&prefix, "labeled"),
        "run gen-corpus first",
    )?;
    let source = cfg.source()?;
    let splits = read_corpus(&prefix, &source.vocab, &source.attributes)?;
    Ok((source, splits))
}

/// Train the base model on the stored corpus and keep the best checkpoint.
pub fn train_base_to_disk(cfg: &ExperimentConfig) -> Result<BaseResult> {
    let layout = Layout::new(cfg)?;
    let (_, splits) = load_corpus(cfg)?;
    let base = fit_base(cfg, &splits)?;
    let dir = layout.base_dir();
    mkdir(&dir)?;
    write(&dir.join("config.txt"), &cfg.to_text())?;
    let mut hist = String::from("epoch\ttrain_loss\tdev_loss\n");
    for (i, (tr, dv)) in base.history.iter().enumerate() {
        let _ = writeln!(hist, "{}\t{tr:.4}\t{dv:.4}", i + 1);
    }
    write(&dir.join("history.tsv"), &hist)?;
    base.best.save(&dir.join("checkpoint_best"))?;
    Ok(base)
}

/// Stored base model; the epoch count comes from `history.tsv`.
pub fn load_base(cfg: &ExperimentConfig) -> Result<BaseResult> {
    let dir = Layout::new(cfg)?.base_dir();
    let ckpt = dir.join("checkpoint_best");
    require(&ckpt, "run train-base first")?;
    let best = ModelParams::load(&ckpt)?;
    let hist_path = dir.join("history.tsv");
    let text = fs::read_to_string(&hist_path).map_err(|e| Error::io(&hist_path, e))?;
    let mut history = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let num = |j: usize| -> Result<f64> {
            cols.get(j).and_then(|c| c.parse().ok()).ok_or_else(|| Error::Parse {
                path: hist_path.clone(),
                line: i + 1,
                msg: format!("bad history row `{line}`"),
            })
        };
        history.push((num(1)?, num(2)?));
    }
    let best_epoch = history
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map_or(0, |(i, _)| i + 1);
    Ok(BaseResult {
        best,
        best_epoch,
        epochs_trained: history.len(),
        history,
    })
}

/// Self-train the stored base model into the run directory.
pub fn selftrain_to_disk(cfg: &ExperimentConfig) -> Result<(PathBuf, STState)> {
    let layout = Layout::new(cfg)?;
    let base = load_base(cfg)?;
    let (source, splits) = load_corpus(cfg)?;
    let dir = layout.run_dir(cfg);
    mkdir(&dir)?;
    write(&dir.join("config.txt"), &cfg.to_text())?;
    let ctx = EvalContext::new(&source, &splits, cfg.eval.clone())?;
    let state = run_self_training(&base, &ctx, &cfg.train, cfg.variant, &cfg.st, Some(&dir))?;
    Ok((dir, state))
}

/// Evaluate a checkpoint on the stored corpus.
pub fn eval_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<MetricsReport> {
    require(checkpoint, "train a model first")?;
    let params = ModelParams::load(checkpoint)?;
    let (source, splits) = load_corpus(cfg)?;
    let ctx = EvalContext::new(&source, &splits, cfg.eval.clone())?;
    let (report, _) = ctx.evaluate(&params, 0, &mut crate::selftrain::eval_rng(cfg.seed, 0))?;
    Ok(report)
}

/// One row per run: its name and the final-epoch metrics.
pub fn collect_runs(dirs: &[PathBuf]) -> Result<Vec<(String, MetricsReport)>> {
    let mut rows = Vec::with_capacity(dirs.len());
    for d in dirs {
        let path = d.join("metrics.tsv");
        require(&path, "run selftrain for this directory first")?;
        let series = read_metrics_tsv(&path)?;
        let last = series
            .last()
            .cloned()
            .ok_or_else(|| Error::invalid(format!("{} has no rows", path.display())))?;
        let name = d
            .file_name()
            .map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
        rows.push((name, last));
    }
    Ok(rows)
}

/// Comparison table over runs; Dist values are shown ×100.
pub fn format_report(rows: &[(String, MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(3);
    let mut out = format!(
        "{:<width$}  {:>5}  {:>8}  {:>8}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}  {:>9}\n",
        "run", "epoch", "out_ppl", "mod_ppl", "ctl_acc", "ctl_f1", "cls_f1", "cls_auc", "dist", "self_bleu"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>8.2}  {:>8.2}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.4}  {:>7.2}  {:>9.2}",
            name,
            r.epoch,
            r.output_ppl,
            r.model_ppl,
            r.control_acc,
            r.control_f1,
            r.cls_f1,
            r.cls_auc,
            100.0 * r.dist,
            r.self_bleu
        );
    }
    out
}
