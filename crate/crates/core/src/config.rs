//! Flat `key = value` experiment configuration.
//!
//! Files hold one `key = value` per line; `#` starts a comment. Flags of the
//! form `--key value` or `--key=value` override file values. Every key has a
//! default except `out_dir`, which commands that write artefacts require.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::{LengthModel, SplitSizes, SyntheticSource};
use crate::dualvae::ModelConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::optim::AdamWConfig;
use crate::selftrain::{EvalConfig, STConfig, STVariant, TrainConfig};

/// Named loss-weight presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightPreset {
    Default,
    Sentiment,
    Topic,
}

impl WeightPreset {
    pub fn weights(self) -> LossWeights {
        match self {
            WeightPreset::Default => LossWeights::default(),
            WeightPreset::Sentiment => LossWeights::sentiment(),
            WeightPreset::Topic => LossWeights::topic(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            WeightPreset::Default => "default",
            WeightPreset::Sentiment => "sentiment",
            WeightPreset::Topic => "topic",
        }
    }
}

impl FromStr for WeightPreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "default" => Ok(WeightPreset::Default),
            "sentiment" => Ok(WeightPreset::Sentiment),
            "topic" => Ok(WeightPreset::Topic),
            _ => Err("one of default, sentiment, topic".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub corpus_seed: u64,
    pub split_seed: u64,
    pub seed: u64,
    pub vocab_size: usize,
    pub num_labels: usize,
    pub separation: f64,
    pub length: LengthModel,
    pub splits: SplitSizes,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preset: WeightPreset,
    pub variant: STVariant,
    /// Run directory name; empty means the variant name.
    pub run_name: String,
    pub st: STConfig,
    pub eval: EvalConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (v, k) = (32, 2);
        ExperimentConfig {
            corpus_seed: 1000,
            split_seed: 2000,
            seed: 0,
            vocab_size: v,
            num_labels: k,
            separation: 0.6,
            length: LengthModel::default(),
            splits: SplitSizes {
                labeled: 200,
                unlabeled: 6000,
                dev: 200,
                test: 500,
            },
            model: ModelConfig {
                d_model: 16,
                d_latent: 8,
                layers: 1,
                heads: 2,
                d_ff: 32,
                max_len: 32,
                ..ModelConfig::new(v, k)
            },
            train: TrainConfig {
                optimizer: AdamWConfig {
                    learning_rate: 3e-3,
                    ..AdamWConfig::default()
                },
                base_epochs: 30,
                weights: WeightPreset::Sentiment.weights(),
                ..TrainConfig::default()
            },
            preset: WeightPreset::Sentiment,
            variant: STVariant::Dunst,
            run_name: String::new(),
            st: STConfig::default(),
            eval: EvalConfig {
                generations_per_label: 500,
                ..EvalConfig::default()
            },
            out_dir: None,
        }
    }
}

type Setter = fn(&mut ExperimentConfig, &str) -> std::result::Result<(), &'static str>;
type Getter = fn(&ExperimentConfig) -> String;

fn parse<T: FromStr>(raw: &str, what: &'static str) -> std::result::Result<T, &'static str> {
    raw.parse().map_err(|_| what)
}

macro_rules! keys {
    ($( $name:literal : $what:literal => |$c:ident| $place:expr ),* $(,)?) => {
        const KEYS: &[(&str, Setter, Getter)] = &[
            $( (
                $name,
                |$c: &mut ExperimentConfig, raw: &str| {
                    $place = parse(raw, $what)?;
                    Ok(())
                },
                |$c: &ExperimentConfig| $place.to_string(),
            ), )*
        ];
    };
}

keys! {
    "corpus_seed": "an integer" => |c| c.corpus_seed,
    "split_seed": "an integer" => |c| c.split_seed,
    "seed": "an integer" => |c| c.seed,
    "vocab_size": "an integer" => |c| c.vocab_size,
    "num_labels": "an integer" => |c| c.num_labels,
    "separation": "a real" => |c| c.separation,
    "text_min_len": "an integer" => |c| c.length.min_len,
    "text_max_len": "an integer" => |c| c.length.max_len,
    "stop_prob": "a real" => |c| c.length.stop_prob,
    "labeled": "an integer" => |c| c.splits.labeled,
    "unlabeled": "an integer" => |c| c.splits.unlabeled,
    "dev": "an integer" => |c| c.splits.dev,
    "test": "an integer" => |c| c.splits.test,
    "d_model": "an integer" => |c| c.model.d_model,
    "d_latent": "an integer" => |c| c.model.d_latent,
    "layers": "an integer" => |c| c.model.layers,
    "heads": "an integer" => |c| c.model.heads,
    "d_ff": "an integer" => |c| c.model.d_ff,
    "context": "an integer" => |c| c.model.max_len,
    "learning_rate": "a real" => |c| c.train.optimizer.learning_rate,
    "beta1": "a real" => |c| c.train.optimizer.beta1,
    "beta2": "a real" => |c| c.train.optimizer.beta2,
    "adam_eps": "a real" => |c| c.train.optimizer.eps,
    "weight_decay": "a real" => |c| c.train.optimizer.weight_decay,
    "max_grad_norm": "a real" => |c| c.train.optimizer.max_grad_norm,
    "batch_size": "an integer" => |c| c.train.batch_size,
    "base_epochs": "an integer" => |c| c.train.base_epochs,
    "loss_preset": "one of default, sentiment, topic" => |c| c.preset,
    "lambda_c": "a real" => |c| c.train.weights.lambda_c,
    "lambda_g": "a real" => |c| c.train.weights.lambda_g,
    "lambda_bow": "a real" => |c| c.train.weights.lambda_bow,
    "lambda_kl_c": "a real" => |c| c.train.weights.lambda_kl_c,
    "lambda_kl_g": "a real" => |c| c.train.weights.lambda_kl_g,
    "kl_free_bits": "a real" => |c| c.train.weights.kl_free_bits,
    "rise_fraction": "a real" => |c| c.train.anneal.rise_fraction,
    "anneal_epochs_kl_c": "an integer" => |c| c.train.anneal.active_epochs_kl_c,
    "anneal_epochs_kl_g": "an integer" => |c| c.train.anneal.active_epochs_kl_g,
    "variant": "a variant name" => |c| c.variant,
    "run_name": "a name" => |c| c.run_name,
    "st_epochs": "an integer" => |c| c.st.max_epochs,
    "pseudo_text_ratio": "a real" => |c| c.st.pseudo_text_ratio,
    "overgenerate_factor": "a real" => |c| c.st.overgenerate_factor,
    "selection_epsilon": "a real" => |c| c.st.selection_epsilon,
    "mc_dropout_passes": "an integer" => |c| c.st.mc_dropout_passes,
    "mc_dropout_p": "a real" => |c| c.st.mc_dropout_p,
    "drop_p": "a real" => |c| c.st.noise.drop_p,
    "mask_p": "a real" => |c| c.st.noise.mask_p,
    "shuffle_k": "a real" => |c| c.st.noise.shuffle_k,
    "dual": "true or false" => |c| c.st.dual,
    "temperature": "a real" => |c| c.st.decode.temperature,
    "top_p": "a real" => |c| c.st.decode.top_p,
    "gen_min_len": "an integer" => |c| c.st.decode.min_len,
    "gen_max_len": "an integer" => |c| c.st.decode.max_len,
    "no_repeat_ngram": "an integer" => |c| c.st.decode.no_repeat_ngram,
    "repetition_penalty": "a real" => |c| c.st.decode.repetition_penalty,
    "length_penalty": "a real" => |c| c.st.decode.length_penalty,
    "eval_generations": "an integer" => |c| c.eval.generations_per_label,
    "eval_temperature": "a real" => |c| c.eval.decode.temperature,
    "eval_top_p": "a real" => |c| c.eval.decode.top_p,
    "iw_samples": "an integer" => |c| c.eval.iw_samples,
    "ppl_examples": "an integer" => |c| c.eval.ppl_examples,
    "judge_smoothing": "a real" => |c| c.eval.judge_smoothing,
}

impl std::fmt::Display for WeightPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Every recognised key, in file order.
pub fn known_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|(k, _, _)| *k).chain(std::iter::once("out_dir"))
}

impl ExperimentConfig {
    /// Apply one `key = value` pair.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        if key == "out_dir" {
            self.out_dir = Some(PathBuf::from(raw));
            return Ok(());
        }
        let Some((_, setter, _)) = KEYS.iter().find(|(k, _, _)| *k == key) else {
            return Err(Error::UnknownKey(key.to_string()));
        };
        setter(self, raw).map_err(|expected| Error::ConfigType {
            key: key.to_string(),
            value: raw.to_string(),
            expected,
        })?;
        if key == "loss_preset" {
            self.train.weights = self.preset.weights();
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if key == "out_dir" {
            return self.out_dir.as_ref().map(|p| p.display().to_string());
        }
        KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, _, g)| g(self))
    }

    /// `out_dir`, required by every command that writes artefacts.
    pub fn require_out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::MissingKey("out_dir".into()))
    }

    /// Keep derived fields in step and check every section.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.model.vocab_size != self.vocab_size || self.model.num_labels != self.num_labels {
            return bad("model dimensions out of step with corpus".into());
        }
        if self.length.max_len + 2 > self.model.max_len {
            return bad(format!(
                "text_max_len {} needs context >= {}",
                self.length.max_len,
                self.length.max_len + 2
            ));
        }
        if self.st.decode.max_len + 2 > self.model.max_len
            || self.eval.decode.max_len + 2 > self.model.max_len
        {
            return bad("generation length exceeds the model context".into());
        }
        self.length.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.st.validate(self.variant)?;
        self.st.decode.validate()?;
        self.eval.decode.validate()?;
        Ok(())
    }

    pub fn source(&self) -> Result<SyntheticSource> {
        SyntheticSource::build_with_length(
            self.corpus_seed,
            self.vocab_size,
            self.num_labels,
            self.separation,
            self.length,
        )
    }

    /// Full text form; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, g) in KEYS {
            let _ = writeln!(out, "{k} = {}", g(self));
        }
        if let Some(p) = &self.out_dir {
            let _ = writeln!(out, "out_dir = {}", p.display());
        }
        out
    }
}

/// Parse `key = value` lines on top of `base`.
pub fn parse_config_text(text: &str, origin: &Path, base: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = base;
    let mut pairs = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        pairs.insert(i, (k.trim().to_string(), v.trim().to_string()));
    }
    // presets first so explicit weights win regardless of line order
    let preset_first = pairs
        .values()
        .filter(|(k, _)| k == "loss_preset")
        .chain(pairs.values().filter(|(k, _)| k != "loss_preset"));
    for (k, v) in preset_first {
        cfg.set(k, v)?;
    }
    sync_dims(&mut cfg);
    Ok(cfg)
}

/// Split `--key value` / `--key=value` flags into pairs.
pub fn parse_flags(flags: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = flags.iter();
    while let Some(f) = it.next() {
        let Some(body) = f.strip_prefix("--") else {
            return Err(Error::invalid(format!("expected a --key flag, got `{f}`")));
        };
        match body.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::invalid(format!("flag --{body} needs a value")))?;
                out.push((body.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

/// File (if any) then flags, over the defaults.
pub fn parse_config(path: Option<&Path>, flags: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config_text(&text, p, ExperimentConfig::default())?
        }
        None => ExperimentConfig::default(),
    };
    let mut pairs = parse_flags(flags)?;
    pairs.sort_by_key(|(k, _)| k != "loss_preset");
    for (k, v) in &pairs {
        cfg.set(&k.replace('-', "_"), v)?;
    }
    sync_dims(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn sync_dims(cfg: &mut ExperimentConfig) {
    cfg.model.vocab_size = cfg.vocab_size;
    cfg.model.num_labels = cfg.num_labels;
    cfg.train.seed = cfg.seed;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config_text("", Path::new("x"), ExperimentConfig::default()).unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn flag_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "temperature = 1\n").unwrap();
        let c = parse_config(Some(&p), &[]).unwrap();
        assert_eq!(c.st.decode.temperature, 1.0);
        let c = parse_config(Some(&p), &["--temperature".into(), "5".into()]).unwrap();
        assert_eq!(c.st.decode.temperature, 5.0);
    }

    #[test]
    fn misspelt_key_is_named() {
        let e = parse_config_text("learning_rte = 1e-3", Path::new("x"), ExperimentConfig::default())
            .unwrap_err();
        assert!(e.to_string().contains("learning_rte"), "{e}");
    }

    #[test]
    fn type_mismatch_is_reported() {
        let e = parse_config_text("batch_size = eight", Path::new("x"), ExperimentConfig::default())
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("batch_size") && msg.contains("integer"), "{msg}");
    }

    #[test]
    fn missing_out_dir() {
        let e = ExperimentConfig::default().require_out_dir().unwrap_err();
        assert!(e.to_string().contains("out_dir"));
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.set("variant", "pt_select_pl").unwrap();
        c.set("lambda_c", "10").unwrap();
        c.set("out_dir", "/tmp/run").unwrap();
        let back = parse_config_text(&c.to_text(), Path::new("x"), ExperimentConfig::default()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn explicit_weight_beats_preset() {
        let text = "lambda_c = 3\nloss_preset = sentiment\n";
        let c = parse_config_text(text, Path::new("x"), ExperimentConfig::default()).unwrap();
        assert_eq!(c.train.weights.lambda_c, 3.0);
        let c = parse_config_text("loss_preset = topic", Path::new("x"), ExperimentConfig::default()).unwrap();
        assert_eq!(c.train.weights.kl_free_bits, 0.01);
    }

    #[test]
    fn malformed_line_has_position() {
        let e = parse_config_text("\nseed 3\n", Path::new("c.txt"), ExperimentConfig::default())
            .unwrap_err();
        assert!(e.to_string().contains("c.txt:2"), "{e}");
    }
}
