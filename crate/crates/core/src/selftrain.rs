//! Dual noisy self-training.
//!
//! A base dual VAE is trained on the labelled split and the checkpoint with
//! the lowest dev loss is kept. Each self-training epoch then
//!
//! 1. freezes a snapshot θ′ of the current model,
//! 2. pseudo-labels the unlabelled split with θ′ (`D_PL`),
//! 3. samples pseudo text for every label from θ′ (`D_PT`), soft by default,
//! 4. trains the current model for one pass over `D_L ∪ D_PL ∪ D_PT`,
//! 5. evaluates and records a [`MetricsReport`].
//!
//! The ablations and baselines are selected with [`STVariant`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::autodiff::ParamGrads;
use crate::corpus::{CorpusSplits, LabeledExample, SyntheticSource};
use crate::decoding::{corrupt, generate_hard, generate_soft, write_generations, DecodeConfig, SoftSequence};
use crate::dualvae::ModelParams;
use crate::error::{Error, Result};
use crate::losses::{anneal_weight, build_objective, draw_eps, AnnealSchedule, KlTerm, LossWeights, TextTarget};
use crate::metrics::{
    classifier_metrics, control_accuracy, dist_geo, dist_n, model_ppl, proportion_ci, self_bleu,
    write_metrics_tsv, BigramJudge, MetricsReport,
};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng::{self, argmax, Draw, SeededRng};
use crate::tensor::softmax;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum STVariant {
    /// Pseudo labels + soft high-temperature pseudo text.
    Dunst,
    /// Hard pseudo text instead of soft (−SPT).
    DunstHardPt,
    /// Pseudo labels only (−PT).
    NoPt,
    /// Soft pseudo text only (−PL).
    NoPl,
    /// Hard pseudo text only (−PL −SPT).
    NoPlSpt,
    /// Labelled data only: the plain dual VAE (−PL −PT).
    NoPlPt,
    /// Hard pseudo text at τ = 1.
    NaivePt,
    /// Hard pseudo text at τ = 1 with token noise.
    PtNoise,
    /// Noisy hard pseudo text plus pseudo labels fixed after the first epoch.
    PtNoisePl,
    /// Like `PtNoisePl` but over-generates and keeps the best-scored text.
    PtSelectPl,
}

/// How pseudo text is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PtMode {
    None,
    Soft,
    /// Hard tokens at the configured temperature.
    Hard,
    /// Hard tokens at τ = 1.
    NaiveHard,
    /// Hard tokens at τ = 1, then corrupted.
    Noisy,
    /// Noisy text, over-generated and filtered.
    NoisySelected,
}

impl STVariant {
    pub const ALL: [STVariant; 10] = [
        STVariant::Dunst,
        STVariant::DunstHardPt,
        STVariant::NoPt,
        STVariant::NoPl,
        STVariant::NoPlSpt,
        STVariant::NoPlPt,
        STVariant::NaivePt,
        STVariant::PtNoise,
        STVariant::PtNoisePl,
        STVariant::PtSelectPl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            STVariant::Dunst => "DUNST",
            STVariant::DunstHardPt => "DUNST_HARD_PT",
            STVariant::NoPt => "NO_PT",
            STVariant::NoPl => "NO_PL",
            STVariant::NoPlSpt => "NO_PL_SPT",
            STVariant::NoPlPt => "NO_PL_PT",
            STVariant::NaivePt => "NAIVE_PT",
            STVariant::PtNoise => "PT_NOISE",
            STVariant::PtNoisePl => "PT_NOISE_PL",
            STVariant::PtSelectPl => "PT_SELECT_PL",
        }
    }

    pub fn uses_pl(self) -> bool {
        matches!(
            self,
            STVariant::Dunst
                | STVariant::DunstHardPt
                | STVariant::NoPt
                | STVariant::PtNoisePl
                | STVariant::PtSelectPl
        )
    }

    /// Baselines whose pseudo labels come from a fixed labeller.
    pub fn pl_frozen(self) -> bool {
        matches!(self, STVariant::PtNoisePl | STVariant::PtSelectPl)
    }

    pub fn pt_mode(self) -> PtMode {
        match self {
            STVariant::Dunst | STVariant::NoPl => PtMode::Soft,
            STVariant::DunstHardPt | STVariant::NoPlSpt => PtMode::Hard,
            STVariant::NoPt | STVariant::NoPlPt => PtMode::None,
            STVariant::NaivePt => PtMode::NaiveHard,
            STVariant::PtNoise | STVariant::PtNoisePl => PtMode::Noisy,
            STVariant::PtSelectPl => PtMode::NoisySelected,
        }
    }
}

impl fmt::Display for STVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for STVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        STVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = STVariant::ALL.iter().map(|v| v.name()).collect();
                Error::invalid(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Token-noise settings for the synthetic-noise baselines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub drop_p: f64,
    pub mask_p: f64,
    pub shuffle_k: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            drop_p: 0.05,
            mask_p: 0.05,
            shuffle_k: 1.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct STConfig {
    pub max_epochs: usize,
    /// `|D_PT| / |D_L|`.
    pub pseudo_text_ratio: f64,
    /// Optional per-label pseudo-text counts overriding the balanced split.
    pub per_label_counts: Option<Vec<usize>>,
    pub decode: DecodeConfig,
    pub overgenerate_factor: f64,
    pub selection_epsilon: f64,
    pub mc_dropout_passes: usize,
    pub mc_dropout_p: f64,
    pub noise: NoiseConfig,
    /// `false` gives the −Dual comparison: pseudo labels fixed after the
    /// first epoch and the classification losses switched off.
    pub dual: bool,
}

impl Default for STConfig {
    fn default() -> Self {
        STConfig {
            max_epochs: 10,
            pseudo_text_ratio: 1.0,
            per_label_counts: None,
            decode: DecodeConfig::htg(),
            overgenerate_factor: 2.0,
            selection_epsilon: 1e-5,
            mc_dropout_passes: 10,
            mc_dropout_p: 0.1,
            noise: NoiseConfig::default(),
            dual: true,
        }
    }
}

impl STConfig {
    pub fn validate(&self, variant: STVariant) -> Result<()> {
        self.decode.validate()?;
        if !(self.pseudo_text_ratio > 0.0) {
            return Err(Error::invalid("pseudo_text_ratio must be > 0"));
        }
        if !(self.overgenerate_factor >= 1.0) {
            return Err(Error::invalid("overgenerate_factor must be >= 1"));
        }
        if variant.pt_mode() == PtMode::NoisySelected {
            if self.overgenerate_factor <= 1.0 {
                return Err(Error::invalid("selection needs overgenerate_factor > 1"));
            }
            if self.mc_dropout_passes < 2 {
                return Err(Error::invalid("selection needs at least two dropout passes"));
            }
        }
        if !(0.0..1.0).contains(&self.mc_dropout_p) {
            return Err(Error::invalid("mc_dropout_p must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Optimisation settings shared by base training and self-training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub batch_size: usize,
    /// Upper bound on base-training epochs; the best dev epoch is kept.
    pub base_epochs: usize,
    pub weights: LossWeights,
    /// Rise fraction and active epochs; the cycle is one epoch of steps.
    pub anneal: AnnealSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: AdamWConfig::default(),
            batch_size: 8,
            base_epochs: 20,
            weights: LossWeights::default(),
            anneal: AnnealSchedule::new(1),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.base_epochs == 0 {
            return Err(Error::invalid("base_epochs must be >= 1"));
        }
        Ok(())
    }
}

/// Per-epoch evaluation budget.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub generations_per_label: usize,
    pub decode: DecodeConfig,
    pub iw_samples: usize,
    /// Test examples used for the importance-weighted perplexity.
    pub ppl_examples: usize,
    pub judge_smoothing: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            generations_per_label: 100,
            decode: DecodeConfig::default(),
            iw_samples: 8,
            ppl_examples: 100,
            judge_smoothing: 0.1,
        }
    }
}

/// One member of the training union.
#[derive(Clone, Copy, Debug)]
pub enum Item<'a> {
    Hard(&'a [usize], usize),
    Soft(&'a SoftSequence),
}

impl<'a> Item<'a> {
    fn target(&self) -> (TextTarget<'a>, usize) {
        match *self {
            Item::Hard(t, y) => (TextTarget::Hard(t), y),
            Item::Soft(s) => (
                TextTarget::Soft {
                    steps: &s.steps,
                    context: &s.context,
                },
                s.label,
            ),
        }
    }
}

/// Pseudo text in either form.
#[derive(Clone, Debug, PartialEq)]
pub enum PseudoText {
    Soft(SoftSequence),
    Hard(LabeledExample),
}

impl PseudoText {
    pub fn label(&self) -> usize {
        match self {
            PseudoText::Soft(s) => s.label,
            PseudoText::Hard(e) => e.label.expect("pseudo text is labelled"),
        }
    }

    /// Tokens for inspection (the argmax shadow for soft text).
    pub fn as_example(&self) -> LabeledExample {
        match self {
            PseudoText::Soft(s) => s.as_example(),
            PseudoText::Hard(e) => e.clone(),
        }
    }

    fn item(&self) -> Item<'_> {
        match self {
            PseudoText::Soft(s) => Item::Soft(s),
            PseudoText::Hard(e) => Item::Hard(&e.tokens, e.label.expect("pseudo text is labelled")),
        }
    }
}

fn labelled(ex: &LabeledExample) -> Result<Item<'_>> {
    let y = ex
        .label
        .ok_or_else(|| Error::invalid("labelled split contains an unlabelled example"))?;
    Ok(Item::Hard(&ex.tokens, y))
}

/// Mutable training state: model, optimizer and step counters.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: ModelParams,
    pub optimizer: AdamW,
    pub config: TrainConfig,
    pub global_step: usize,
    /// Epochs trained so far (base and self-training combined); drives the
    /// KL annealing schedule.
    pub epochs_done: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(config.optimizer, params.store())?;
        Ok(Trainer {
            params,
            optimizer,
            config,
            global_step: 0,
            epochs_done: 0,
        })
    }

    /// Steps per epoch for `n` examples.
    pub fn steps_for(&self, n: usize) -> usize {
        n.div_ceil(self.config.batch_size)
    }

    /// One shuffled pass over `items`. `weights` may zero terms (−Dual);
    /// KL weights are multiplied by the annealing schedule. Returns the mean
    /// per-example loss.
    pub fn train_epoch(&mut self, items: &[Item<'_>], weights: &LossWeights, rng: &mut SeededRng) -> Result<f64> {
        if items.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        let mut order: Vec<usize> = (0..items.len()).collect();
        shuffle(&mut order, rng);
        let steps = self.steps_for(items.len());
        let schedule = AnnealSchedule {
            cycle_length: steps,
            ..self.config.anneal
        };
        let d_latent = self.params.config().d_latent;
        let mut grads: ParamGrads = self.params.store().zero_grads();
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let in_epoch = self.global_step % steps;
            let w = LossWeights {
                lambda_kl_c: weights.lambda_kl_c
                    * anneal_weight(&schedule, in_epoch, self.epochs_done, KlTerm::Classification),
                lambda_kl_g: weights.lambda_kl_g
                    * anneal_weight(&schedule, in_epoch, self.epochs_done, KlTerm::Generation),
                ..*weights
            };
            grads.zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (target, label) = items[i].target();
                let eps = draw_eps(d_latent, rng);
                let mut g = self.params.graph();
                let vars = build_objective(&mut g, &self.params, target, label, &eps, &w)?;
                total += g.value(vars.total).item();
                let back = g.backward(vars.total);
                back.accumulate_params(&g, &mut grads, scale);
            }
            self.optimizer.step(self.params.store_mut(), &grads);
            self.global_step += 1;
        }
        // the step counter restarts its cycle at each epoch boundary
        self.global_step = 0;
        self.epochs_done += 1;
        if !self.params.store().iter().all(|(_, t)| t.is_finite()) {
            return Err(Error::invalid("training diverged (non-finite parameters)"));
        }
        Ok(total / items.len() as f64)
    }
}

/// Fisher–Yates with the crate's uniform draws.
pub fn shuffle<T>(xs: &mut [T], rng: &mut impl Draw) {
    for i in (1..xs.len()).rev() {
        let j = ((rng.uniform() * (i + 1) as f64) as usize).min(i);
        xs.swap(i, j);
    }
}

/// Mean total loss per example with the posterior mean as latent and
/// unannealed weights. Used to pick the best base checkpoint.
pub fn dev_loss(params: &ModelParams, data: &[LabeledExample], weights: &LossWeights) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty dev set"));
    }
    let eps = vec![0.0; params.config().d_latent];
    let mut total = 0.0;
    for ex in data {
        let (target, y) = labelled(ex)?.target();
        let mut g = params.graph();
        let vars = build_objective(&mut g, params, target, y, &eps, weights)?;
        total += g.value(vars.total).item();
    }
    Ok(total / data.len() as f64)
}

#[derive(Clone, Debug)]
pub struct BaseResult {
    /// Parameters of the best dev epoch.
    pub best: ModelParams,
    pub best_epoch: usize,
    /// `(train loss, dev loss)` per epoch.
    pub history: Vec<(f64, f64)>,
    pub epochs_trained: usize,
}

/// Train on the labelled split for `base_epochs`, warming up over the first
/// epoch, and keep the lowest-dev-loss parameters.
pub fn train_base(splits: &CorpusSplits, model: ModelParams, mut config: TrainConfig) -> Result<BaseResult> {
    let items: Vec<Item<'_>> = splits.labeled.iter().map(labelled).collect::<Result<_>>()?;
    config.optimizer.warmup_steps = items.len().div_ceil(config.batch_size);
    let mut trainer = Trainer::new(model, config)?;
    let mut rng = rng::substream(trainer.config.seed, 1);
    let weights = trainer.config.weights;
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut history = Vec::new();
    for epoch in 0..trainer.config.base_epochs {
        let train = trainer.train_epoch(&items, &weights, &mut rng)?;
        let dev = dev_loss(&trainer.params, &splits.dev, &weights)?;
        history.push((train, dev));
        if best.as_ref().is_none_or(|(b, _, _)| dev < *b) {
            best = Some((dev, epoch + 1, trainer.params.clone()));
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(BaseResult {
        best,
        best_epoch,
        history,
        epochs_trained: trainer.config.base_epochs,
    })
}

/// `ŷ = argmax classify(μ of P(z|x))` for every unlabelled example.
pub fn pseudo_label_pass(snapshot: &ModelParams, unlabeled: &[LabeledExample]) -> Result<Vec<LabeledExample>> {
    unlabeled
        .iter()
        .map(|ex| {
            let mu = snapshot.prior_cls(&ex.tokens)?.mu;
            let y = argmax(&snapshot.classify(&mu)?);
            Ok(LabeledExample::new(ex.tokens.clone(), Some(y)))
        })
        .collect()
}

/// Balanced per-label counts summing to `round(ratio · n_labeled)`; earlier
/// labels take the remainder.
pub fn balanced_counts(n_labeled: usize, ratio: f64, k: usize) -> Vec<usize> {
    let total = (ratio * n_labeled as f64).round() as usize;
    (0..k).map(|y| total / k + usize::from(y < total % k)).collect()
}

/// Generate pseudo text from θ′ with `z ~ P(z|y)`.
pub fn pseudo_text_pass(
    snapshot: &ModelParams,
    counts: &[usize],
    mode: PtMode,
    cfg: &STConfig,
    rng: &mut SeededRng,
) -> Result<Vec<PseudoText>> {
    if counts.len() != snapshot.config().num_labels {
        return Err(Error::invalid("one pseudo-text count per label required"));
    }
    let mut out = Vec::new();
    let v = snapshot.config().vocab_size;
    let naive = DecodeConfig {
        temperature: 1.0,
        ..cfg.decode
    };
    for (y, &n) in counts.iter().enumerate() {
        let prior = snapshot.prior_gen(y)?;
        let n_draw = if mode == PtMode::NoisySelected {
            (n as f64 * cfg.overgenerate_factor).round() as usize
        } else {
            n
        };
        let mut pool = Vec::with_capacity(n_draw);
        for _ in 0..n_draw {
            let z = prior.reparameterize(rng);
            let pt = match mode {
                PtMode::None => break,
                PtMode::Soft => PseudoText::Soft(generate_soft(snapshot, &z, y, &cfg.decode, rng)?),
                PtMode::Hard => {
                    let t = generate_hard(snapshot, &z, &cfg.decode, rng, &[])?;
                    PseudoText::Hard(LabeledExample::new(t, Some(y)))
                }
                PtMode::NaiveHard => {
                    let t = generate_hard(snapshot, &z, &naive, rng, &[])?;
                    PseudoText::Hard(LabeledExample::new(t, Some(y)))
                }
                PtMode::Noisy | PtMode::NoisySelected => {
                    let t = generate_hard(snapshot, &z, &naive, rng, &[])?;
                    let n = cfg.noise;
                    let t = corrupt(&t, n.drop_p, n.mask_p, n.shuffle_k, v, rng)?;
                    PseudoText::Hard(LabeledExample::new(t, Some(y)))
                }
            };
            pool.push(pt);
        }
        if mode == PtMode::NoisySelected {
            pool = select_pseudo_text(snapshot, pool, n, cfg, rng)?;
        }
        out.extend(pool);
    }
    Ok(out)
}

/// `s_select = s_conf + ε / s_uncertain`, with the uncertainty clamped at
/// 1e-12.
pub fn selection_score(conf: f64, uncertainty: f64, epsilon: f64) -> f64 {
    conf + epsilon / uncertainty.max(1e-12)
}

/// BALD mutual information from stochastic class distributions:
/// `H(mean p) − mean H(p)`.
pub fn bald(passes: &[Vec<f64>]) -> f64 {
    let k = passes[0].len();
    let n = passes.len() as f64;
    let mean: Vec<f64> = (0..k).map(|c| passes.iter().map(|p| p[c]).sum::<f64>() / n).collect();
    let h = |p: &[f64]| -> f64 { p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum() };
    (h(&mean) - passes.iter().map(|p| h(p)).sum::<f64>() / n).max(0.0)
}

/// Keep the `keep` highest-scoring texts (stable on ties). Confidence is the
/// softmax probability of the predicted label; uncertainty is BALD over
/// dropout passes on the classifier.
pub fn select_pseudo_text(
    snapshot: &ModelParams,
    pool: Vec<PseudoText>,
    keep: usize,
    cfg: &STConfig,
    rng: &mut SeededRng,
) -> Result<Vec<PseudoText>> {
    let mut scored = Vec::with_capacity(pool.len());
    for (i, pt) in pool.iter().enumerate() {
        let mu = snapshot.prior_cls(&pt.as_example().tokens)?.mu;
        let p = softmax(&snapshot.classify(&mu)?);
        let conf = p[argmax(&p)];
        let passes: Vec<Vec<f64>> = (0..cfg.mc_dropout_passes)
            .map(|_| Ok(softmax(&snapshot.classify_dropout(&mu, cfg.mc_dropout_p, rng)?)))
            .collect::<Result<_>>()?;
        scored.push((selection_score(conf, bald(&passes), cfg.selection_epsilon), i));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = scored.into_iter().take(keep).map(|(_, i)| i).collect();
    chosen.sort_unstable();
    let mut pool: Vec<Option<PseudoText>> = pool.into_iter().map(Some).collect();
    Ok(chosen.into_iter().map(|i| pool[i].take().expect("unique index")).collect())
}

/// Everything needed to evaluate a model against the known source.
pub struct EvalContext<'a> {
    pub source: &'a SyntheticSource,
    pub splits: &'a CorpusSplits,
    pub judge: BigramJudge,
    pub config: EvalConfig,
}

impl<'a> EvalContext<'a> {
    pub fn new(source: &'a SyntheticSource, splits: &'a CorpusSplits, config: EvalConfig) -> Result<Self> {
        let judge = BigramJudge::fit(&splits.test, source.vocab_size(), config.judge_smoothing)?;
        Ok(EvalContext {
            source,
            splits,
            judge,
            config,
        })
    }

    /// Sample generations for every label from `z ~ P(z|y)`.
    pub fn generate(&self, params: &ModelParams, rng: &mut SeededRng) -> Result<Vec<LabeledExample>> {
        let mut out = Vec::new();
        for y in 0..params.config().num_labels {
            let prior = params.prior_gen(y)?;
            for _ in 0..self.config.generations_per_label {
                let z = prior.reparameterize(rng);
                let t = generate_hard(params, &z, &self.config.decode, rng, &[])?;
                out.push(LabeledExample::new(t, Some(y)));
            }
        }
        Ok(out)
    }

    pub fn evaluate(
        &self,
        params: &ModelParams,
        epoch: usize,
        rng: &mut SeededRng,
    ) -> Result<(MetricsReport, Vec<LabeledExample>)> {
        let gens = self.generate(params, rng)?;
        let toks: Vec<Vec<usize>> = gens.iter().map(|g| g.tokens.clone()).collect();
        let control = control_accuracy(&gens, self.source)?;
        let test = &self.splits.test;
        let ppl_set = &test[..test.len().min(self.config.ppl_examples)];
        let cls = classifier_metrics(params, test)?;
        let dn: Vec<f64> = (1..=4).map(|n| dist_n(&toks, n).unwrap_or(f64::NAN)).collect();
        let report = MetricsReport {
            epoch,
            output_ppl: self.judge.perplexity(&toks)?,
            model_ppl: model_ppl(params, ppl_set, self.config.iw_samples, rng)?,
            control_acc: control.acc,
            control_acc_ci: proportion_ci(control.acc, gens.len()),
            control_f1: control.macro_f1,
            control_auc: control.auc,
            cls_acc: cls.acc,
            cls_f1: cls.macro_f1,
            cls_auc: cls.auc,
            dist: dist_geo(&toks).unwrap_or(f64::NAN),
            dist_n: [dn[0], dn[1], dn[2], dn[3]],
            self_bleu: self_bleu(&toks)?,
            n_generations: gens.len(),
            n_test: test.len(),
        };
        Ok((report, gens))
    }
}

/// Self-training state between epochs.
#[derive(Clone, Debug)]
pub struct STState {
    pub trainer: Trainer,
    /// θ′: the model that produced the current pseudo data.
    pub snapshot: ModelParams,
    pub d_pl: Vec<LabeledExample>,
    pub d_pt: Vec<PseudoText>,
    /// Completed self-training epochs.
    pub epoch: usize,
    pub history: Vec<MetricsReport>,
}

impl STState {
    /// Start from a trained base model. The optimizer is fresh, with a
    /// warm-up of one self-training epoch.
    pub fn new(base: &BaseResult, mut config: TrainConfig, epochs_before: usize) -> Result<Self> {
        config.optimizer.warmup_steps = 0;
        let mut trainer = Trainer::new(base.best.clone(), config)?;
        trainer.epochs_done = epochs_before;
        Ok(STState {
            snapshot: base.best.clone(),
            trainer,
            d_pl: Vec::new(),
            d_pt: Vec::new(),
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.trainer.params
    }
}

/// Pseudo-data sizes of the epoch just run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochSizes {
    pub labeled: usize,
    pub pseudo_labeled: usize,
    pub pseudo_text: usize,
}

/// One self-training epoch: refresh pseudo data from θ′, then train.
pub fn run_st_epoch(
    state: &mut STState,
    splits: &CorpusSplits,
    variant: STVariant,
    cfg: &STConfig,
) -> Result<EpochSizes> {
    cfg.validate(variant)?;
    let seed = state.trainer.config.seed;
    let e = state.epoch as u64;
    // θ′ ← θ: pseudo data below comes only from the snapshot
    state.snapshot = state.trainer.params.clone();

    let fixed_pl = variant.pl_frozen() || !cfg.dual;
    if variant.uses_pl() && (!fixed_pl || state.d_pl.is_empty()) {
        state.d_pl = pseudo_label_pass(&state.snapshot, &splits.unlabeled)?;
    }
    if !variant.uses_pl() {
        state.d_pl.clear();
    }
    let k = state.snapshot.config().num_labels;
    let counts = match &cfg.per_label_counts {
        Some(c) => c.clone(),
        None => balanced_counts(splits.labeled.len(), cfg.pseudo_text_ratio, k),
    };
    let mut gen_rng = rng::substream(seed, 1_000 + e);
    state.d_pt = pseudo_text_pass(&state.snapshot, &counts, variant.pt_mode(), cfg, &mut gen_rng)?;

    let mut items: Vec<Item<'_>> = splits.labeled.iter().map(labelled).collect::<Result<_>>()?;
    items.extend(state.d_pl.iter().map(labelled).collect::<Result<Vec<_>>>()?);
    items.extend(state.d_pt.iter().map(PseudoText::item));

    let mut w = state.trainer.config.weights;
    if !cfg.dual {
        w.lambda_c = 0.0;
        w.lambda_kl_c = 0.0;
    }
    if state.epoch == 0 {
        state.trainer.optimizer.config.warmup_steps = state.trainer.steps_for(items.len());
    }
    let mut train_rng = rng::substream(seed, 100 + e);
    state.trainer.train_epoch(&items, &w, &mut train_rng)?;
    state.epoch += 1;
    Ok(EpochSizes {
        labeled: splits.labeled.len(),
        pseudo_labeled: state.d_pl.len(),
        pseudo_text: state.d_pt.len(),
    })
}

/// Evaluation stream for epoch `e`; identical across variants so that
/// comparisons share generation noise.
pub fn eval_rng(seed: u64, epoch: usize) -> SeededRng {
    rng::substream(seed, 5_000 + epoch as u64)
}

/// Where run artefacts go.
pub struct ExperimentDir<'p> {
    pub root: &'p Path,
}

impl ExperimentDir<'_> {
    pub fn epoch_dir(&self, epoch: usize) -> std::path::PathBuf {
        self.root.join(format!("epoch_{epoch:03}"))
    }

    pub fn write_epoch(
        &self,
        epoch: usize,
        report: &MetricsReport,
        gens: &[LabeledExample],
        source: &SyntheticSource,
    ) -> Result<()> {
        let d = self.epoch_dir(epoch);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        write_metrics_tsv(&d.join("metrics.tsv"), std::slice::from_ref(report))?;
        write_generations(&d.join("generations.txt"), gens, &source.vocab, &source.attributes)
    }
}

/// Run `max_epochs` self-training epochs from a trained base model,
/// evaluating before the first epoch and after each one. With `out`, every
/// epoch's metrics and generations are written, the lowest-dev-loss model
/// is saved as `checkpoint_best` and the final one as `checkpoint_last`; the
/// full series goes to `metrics.tsv`.
pub fn run_self_training(
    base: &BaseResult,
    ctx: &EvalContext<'_>,
    train: &TrainConfig,
    variant: STVariant,
    cfg: &STConfig,
    out: Option<&Path>,
) -> Result<STState> {
    cfg.validate(variant)?;
    let mut state = STState::new(base, train.clone(), base.epochs_trained)?;
    let dir = out.map(|root| ExperimentDir { root });
    let mut best_dev = f64::INFINITY;
    loop {
        let e = state.epoch;
        let (r, g) = ctx.evaluate(state.params(), e, &mut eval_rng(train.seed, e))?;
        if let Some(d) = &dir {
            d.write_epoch(e, &r, &g, ctx.source)?;
            // best = lowest dev loss, as for the base model
            let dev = dev_loss(state.params(), &ctx.splits.dev, &train.weights)?;
            if dev < best_dev {
                best_dev = dev;
                state.params().save(&d.root.join("checkpoint_best"))?;
            }
        }
        state.history.push(r);
        if state.epoch == cfg.max_epochs {
            break;
        }
        run_st_epoch(&mut state, ctx.splits, variant, cfg)?;
    }
    if let Some(root) = out {
        write_metrics_tsv(&root.join("metrics.tsv"), &state.history)?;
        state.params().save(&root.join("checkpoint_last"))?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SplitSizes;
    use crate::dualvae::ModelConfig;

    fn setup() -> (SyntheticSource, CorpusSplits) {
        let src = SyntheticSource::build(1, 16, 2, 0.8).unwrap();
        let sizes = SplitSizes {
            labeled: 16,
            unlabeled: 24,
            dev: 8,
            test: 8,
        };
        let splits = src.make_splits(sizes, &mut rng::seeded(2)).unwrap();
        (src, splits)
    }

    fn small_train() -> TrainConfig {
        TrainConfig {
            optimizer: AdamWConfig {
                learning_rate: 1e-2,
                ..Default::default()
            },
            batch_size: 4,
            base_epochs: 2,
            ..Default::default()
        }
    }

    fn small_st(epochs: usize) -> STConfig {
        STConfig {
            max_epochs: epochs,
            decode: DecodeConfig {
                min_len: 3,
                max_len: 8,
                ..DecodeConfig::htg()
            },
            mc_dropout_passes: 3,
            ..Default::default()
        }
    }

    fn small_eval() -> EvalConfig {
        EvalConfig {
            generations_per_label: 3,
            decode: DecodeConfig {
                min_len: 3,
                max_len: 8,
                ..Default::default()
            },
            iw_samples: 2,
            ppl_examples: 3,
            ..Default::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in STVariant::ALL {
            assert_eq!(v.name().parse::<STVariant>().unwrap(), v);
        }
        assert!("dunst".parse::<STVariant>().is_ok());
        assert!("nope".parse::<STVariant>().is_err());
    }

    #[test]
    fn selection_score_examples() {
        assert!((selection_score(0.9, 0.01, 1e-5) - 0.901).abs() < 1e-12);
        assert!(selection_score(0.5, 0.01, 1e-5) > selection_score(0.5, 0.02, 1e-5));
        assert!(selection_score(0.5, 0.0, 1e-5).is_finite());
    }

    #[test]
    fn bald_zero_when_passes_agree() {
        assert!(bald(&vec![vec![0.3, 0.7]; 4]).abs() < 1e-15);
        assert!(bald(&[vec![0.9, 0.1], vec![0.1, 0.9]]) > 0.3);
    }

    #[test]
    fn counts_are_balanced() {
        assert_eq!(balanced_counts(200, 1.0, 2), vec![100, 100]);
        assert_eq!(balanced_counts(5, 1.0, 2), vec![3, 2]);
    }

    #[test]
    fn epochs_produce_expected_sizes_and_are_deterministic() {
        let (src, splits) = setup();
        let cfg = ModelConfig {
            max_len: 32,
            ..ModelConfig::tiny(16, 2)
        };
        let model = ModelParams::init(cfg, 5).unwrap();
        let base = train_base(&splits, model, small_train()).unwrap();
        assert_eq!(base.history.len(), 2);
        let ctx = EvalContext::new(&src, &splits, small_eval()).unwrap();
        let run = |v| run_self_training(&base, &ctx, &small_train(), v, &small_st(2), None).unwrap();
        let a = run(STVariant::Dunst);
        assert_eq!(a.history.len(), 3);
        assert_eq!(a.d_pl.len(), splits.unlabeled.len());
        assert_eq!(a.d_pt.len(), splits.labeled.len());
        assert!(matches!(a.d_pt[0], PseudoText::Soft(_)));
        let b = run(STVariant::Dunst);
        assert_eq!(a.history, b.history);

        let base_only = run(STVariant::NoPlPt);
        assert!(base_only.d_pl.is_empty() && base_only.d_pt.is_empty());
        let sel = run(STVariant::PtSelectPl);
        assert_eq!(sel.d_pt.len(), splits.labeled.len());
    }

    #[test]
    fn selection_requires_overgeneration() {
        let cfg = STConfig {
            overgenerate_factor: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate(STVariant::PtSelectPl).is_err());
        assert!(cfg.validate(STVariant::Dunst).is_ok());
    }
}
