//! Sampling from the decoder: top-p, high-temperature soft pseudo text and
//! the synthetic token-noise corruptor.
//!
//! Per step the next-token distribution is built in a fixed order:
//! logits → repetition penalty → temperature → no-repeat-ngram masking →
//! top-p → sample.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::corpus::{AttributeSet, LabeledExample, Vocab, BOS, EOS, NUM_RESERVED};
use crate::dualvae::ModelParams;
use crate::error::{Error, Result};
use crate::rng::{argmax, Draw};
use crate::tensor::{softmax, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeConfig {
    pub top_p: f64,
    pub temperature: f64,
    /// Minimum number of content tokens before EOS may be emitted.
    pub min_len: usize,
    /// Content tokens after which EOS is forced.
    pub max_len: usize,
    /// 0 disables n-gram blocking.
    pub no_repeat_ngram: usize,
    /// Only meaningful for beam scoring; sampling has no beams, so this is
    /// validated and carried but does not change the distribution.
    pub length_penalty: f64,
    pub repetition_penalty: f64,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            top_p: 0.9,
            temperature: 1.0,
            min_len: 10,
            max_len: 24,
            no_repeat_ngram: 4,
            length_penalty: 1.0,
            repetition_penalty: 1.0,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    /// High-temperature generation preset for soft pseudo text (τ = 5).
    pub fn htg() -> Self {
        DecodeConfig {
            temperature: 5.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::invalid(format!("top_p {} not in (0, 1]", self.top_p)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {} must be > 0", self.temperature)));
        }
        if self.min_len > self.max_len || self.max_len == 0 {
            return Err(Error::invalid(format!(
                "need 0 < min_len <= max_len, got {} and {}",
                self.min_len, self.max_len
            )));
        }
        if !(self.length_penalty > 0.0 && self.repetition_penalty > 0.0) {
            return Err(Error::invalid("penalties must be > 0"));
        }
        Ok(())
    }
}

pub fn temperature_softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature {tau} must be > 0")));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / tau).collect();
    Ok(softmax(&scaled))
}

/// Keep the smallest probability-sorted prefix with mass ≥ `p` (ties by
/// token id ascending) and renormalise.
pub fn top_p_filter(probs: &[f64], p: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let total: f64 = probs.iter().sum();
    let mut out = vec![0.0; probs.len()];
    let mut mass = 0.0;
    for &i in &order {
        if probs[i] <= 0.0 {
            break;
        }
        out[i] = probs[i];
        mass += probs[i];
        // relative tolerance so p = 1 keeps the whole support
        if mass >= p * total * (1.0 - 1e-12) {
            break;
        }
    }
    for o in &mut out {
        *o /= mass;
    }
    out
}

/// CTRL-style penalty on every token already in `history`.
pub fn apply_repetition_penalty(logits: &mut [f64], history: &[usize], penalty: f64) {
    if penalty == 1.0 {
        return;
    }
    let mut seen = vec![false; logits.len()];
    for &t in history {
        if t < seen.len() && !seen[t] {
            seen[t] = true;
            let l = &mut logits[t];
            *l = if *l > 0.0 { *l / penalty } else { *l * penalty };
        }
    }
}

/// Tokens that would complete an n-gram already present in `history`.
pub fn banned_ngram_tokens(history: &[usize], n: usize) -> Vec<usize> {
    if n == 0 || history.len() + 1 < n {
        return Vec::new();
    }
    if n == 1 {
        return history.to_vec();
    }
    let tail = &history[history.len() + 1 - n..];
    let mut out = Vec::new();
    for w in history.windows(n) {
        if &w[..n - 1] == tail {
            out.push(w[n - 1]);
        }
    }
    out
}

/// Next-token distribution after `history` (content tokens so far).
///
/// BOS, PAD and UNK are never produced; EOS is masked until `min_len`
/// content tokens exist and is forced at `max_len`. If n-gram blocking would
/// remove every remaining token it is lifted for that step.
pub fn next_distribution(logits: &[f64], history: &[usize], cfg: &DecodeConfig) -> Vec<f64> {
    let v = logits.len();
    if history.len() >= cfg.max_len {
        let mut d = vec![0.0; v];
        d[EOS] = 1.0;
        return d;
    }
    let mut l = logits.to_vec();
    apply_repetition_penalty(&mut l, history, cfg.repetition_penalty);
    for x in &mut l {
        *x /= cfg.temperature;
    }
    let mut allowed = vec![true; v];
    for (t, a) in allowed.iter_mut().enumerate().take(NUM_RESERVED) {
        *a = t == EOS && history.len() >= cfg.min_len;
    }
    let mut with_ban = allowed.clone();
    for t in banned_ngram_tokens(history, cfg.no_repeat_ngram) {
        with_ban[t] = false;
    }
    if with_ban.iter().any(|&a| a) {
        allowed = with_ban;
    }
    for (x, a) in l.iter_mut().zip(&allowed) {
        if !a {
            *x = f64::NEG_INFINITY;
        }
    }
    top_p_filter(&softmax(&l), cfg.top_p)
}

/// Sample a sequence from the decoder given latent `z`. Returns content
/// tokens (the prompt included, EOS excluded).
pub fn generate_hard(
    params: &ModelParams,
    z: &[f64],
    cfg: &DecodeConfig,
    rng: &mut impl Draw,
    prompt: &[usize],
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if prompt.iter().any(|&t| Vocab::is_special(t) || t >= params.config().vocab_size) {
        return Err(Error::invalid("prompt must hold content tokens only"));
    }
    let mut prefix = vec![BOS];
    prefix.extend_from_slice(prompt);
    loop {
        let history = &prefix[1..];
        if history.len() >= cfg.max_len {
            break;
        }
        let d = next_distribution(&params.decode_step(z, &prefix)?, history, cfg);
        let t = rng.categorical(&d);
        if t == EOS {
            break;
        }
        prefix.push(t);
    }
    prefix.remove(0);
    Ok(prefix)
}

/// Soft pseudo text: the full distribution at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftSequence {
    /// One row per step; the last row is the step that emitted EOS.
    pub steps: Matrix,
    pub label: usize,
    /// Tokens sampled at each content step; step `m` was computed with
    /// `context[..m]` as history.
    pub context: Vec<usize>,
    /// Argmax token of each step.
    pub hard_shadow: Vec<usize>,
}

impl SoftSequence {
    pub fn new(steps: Matrix, context: Vec<usize>, label: usize) -> Result<Self> {
        crate::losses::check_simplex_rows(&steps, 1e-6)?;
        if steps.rows() != context.len() + 1 {
            return Err(Error::Shape(format!(
                "{} soft steps need {} context tokens, got {}",
                steps.rows(),
                steps.rows().saturating_sub(1),
                context.len()
            )));
        }
        for (m, &t) in context.iter().enumerate() {
            if t >= steps.cols() || Vocab::is_special(t) || steps.get(m, t) <= 0.0 {
                return Err(Error::invalid(format!(
                    "context token {t} at step {m} is not a content token drawn from its step"
                )));
            }
        }
        let hard_shadow = (0..steps.rows()).map(|r| argmax(steps.row(r))).collect();
        Ok(SoftSequence {
            steps,
            label,
            context,
            hard_shadow,
        })
    }

    /// Number of content steps (EOS step excluded).
    pub fn content_len(&self) -> usize {
        self.context.len()
    }

    /// Shadow tokens with specials removed, e.g. for metrics.
    pub fn shadow_content(&self) -> Vec<usize> {
        self.hard_shadow
            .iter()
            .copied()
            .filter(|&t| !Vocab::is_special(t))
            .collect()
    }

    pub fn as_example(&self) -> LabeledExample {
        LabeledExample::new(self.shadow_content(), Some(self.label))
    }
}

/// High-temperature soft generation. Each stored step is the temperature and
/// top-p filtered distribution; the context advances with a token sampled
/// from it. At `max_len` a one-hot EOS step closes the sequence.
pub fn generate_soft(
    params: &ModelParams,
    z: &[f64],
    label: usize,
    cfg: &DecodeConfig,
    rng: &mut impl Draw,
) -> Result<SoftSequence> {
    cfg.validate()?;
    let v = params.config().vocab_size;
    let mut prefix = vec![BOS];
    let mut rows: Vec<f64> = Vec::new();
    loop {
        let history = &prefix[1..];
        let d = if history.len() >= cfg.max_len {
            let mut d = vec![0.0; v];
            d[EOS] = 1.0;
            d
        } else {
            next_distribution(&params.decode_step(z, &prefix)?, history, cfg)
        };
        let t = rng.categorical(&d);
        rows.extend_from_slice(&d);
        if t == EOS {
            break;
        }
        prefix.push(t);
    }
    let n = rows.len() / v;
    prefix.remove(0);
    SoftSequence::new(Matrix::from_vec(n, v, rows)?, prefix, label)
}

/// Token noise: drop with `drop_p`, substitute a uniformly random content
/// token with `mask_p`, then shuffle locally by sorting `i + U[0, shuffle_k]`
/// (stable). If every token is dropped the first input token is kept so the
/// result is never empty.
pub fn corrupt(
    tokens: &[usize],
    drop_p: f64,
    mask_p: f64,
    shuffle_k: f64,
    vocab_size: usize,
    rng: &mut impl Draw,
) -> Result<Vec<usize>> {
    if !((0.0..1.0).contains(&drop_p) || drop_p == 1.0) || !(0.0..=1.0).contains(&mask_p) {
        return Err(Error::invalid(format!("noise rates {drop_p}, {mask_p} not in [0, 1]")));
    }
    if !(shuffle_k >= 0.0) {
        return Err(Error::invalid(format!("shuffle_k {shuffle_k} must be >= 0")));
    }
    if vocab_size <= NUM_RESERVED {
        return Err(Error::invalid("vocabulary has no content tokens"));
    }
    let mut out: Vec<usize> = Vec::with_capacity(tokens.len());
    for &t in tokens {
        if drop_p > 0.0 && rng.bernoulli(drop_p) {
            continue;
        }
        out.push(t);
    }
    if out.is_empty() {
        if let Some(&first) = tokens.first() {
            out.push(first);
        }
    }
    if mask_p > 0.0 {
        let n_content = vocab_size - NUM_RESERVED;
        for t in &mut out {
            if rng.bernoulli(mask_p) {
                let r = ((rng.uniform() * n_content as f64) as usize).min(n_content - 1);
                *t = NUM_RESERVED + r;
            }
        }
    }
    if shuffle_k > 0.0 {
        let mut keyed: Vec<(f64, usize)> = out
            .iter()
            .enumerate()
            .map(|(i, &t)| (i as f64 + rng.uniform() * shuffle_k, t))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        out = keyed.into_iter().map(|(_, t)| t).collect();
    }
    Ok(out)
}

/// Generations file: `label<TAB>tokens` per line, same as corpus files.
pub fn write_generations(
    path: &Path,
    samples: &[LabeledExample],
    vocab: &Vocab,
    attributes: &AttributeSet,
) -> Result<()> {
    let text = crate::corpus::format_examples(samples, vocab, attributes);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_generations(path: &Path, vocab: &Vocab, attributes: &AttributeSet) -> Result<Vec<LabeledExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    crate::corpus::parse_examples(&text, path, vocab, attributes)
}

const SOFT_MAGIC: &[u8; 8] = b"DSOFT001";

/// Binary side file for soft sequences; record `i` belongs to line `i + 1`
/// of the matching generations file.
///
/// Layout (little endian): magic, `u32` vocab size, `u32` record count, then
/// per record `u32` label, `u32` steps, `steps × V` `f64` values and
/// `steps − 1` `u32` context tokens.
pub fn write_soft_file(path: &Path, seqs: &[SoftSequence], vocab_size: usize) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SOFT_MAGIC);
    buf.extend_from_slice(&(vocab_size as u32).to_le_bytes());
    buf.extend_from_slice(&(seqs.len() as u32).to_le_bytes());
    for s in seqs {
        if s.steps.cols() != vocab_size {
            return Err(Error::Shape("soft sequence width differs from vocab".into()));
        }
        buf.extend_from_slice(&(s.label as u32).to_le_bytes());
        buf.extend_from_slice(&(s.steps.rows() as u32).to_le_bytes());
        for x in s.steps.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for &t in &s.context {
            buf.extend_from_slice(&(t as u32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_soft_file(path: &Path) -> Result<Vec<SoftSequence>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.to_string(),
    };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + n).ok_or_else(|| bad("truncated soft file"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != SOFT_MAGIC {
        return Err(bad("not a soft-sequence file"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let v = u32_at(take(4)?);
    let count = u32_at(take(4)?);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let label = u32_at(take(4)?);
        let steps = u32_at(take(4)?);
        let raw = take(steps * v * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let context = (0..steps.saturating_sub(1))
            .map(|_| take(4).map(u32_at))
            .collect::<Result<Vec<_>>>()?;
        out.push(SoftSequence::new(Matrix::from_vec(steps, v, data)?, context, label)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualvae::ModelConfig;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    #[test]
    fn temperature_examples() {
        let p = temperature_softmax(&[2.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.8808, epsilon = 1e-4);
        let p2 = temperature_softmax(&[2.0, 0.0], 2.0).unwrap();
        assert_abs_diff_eq!(p2[0], 0.7311, epsilon = 1e-4);
        let flat = temperature_softmax(&[3.0, -1.0, 0.5], 1e6).unwrap();
        assert!(flat.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-4));
        assert!(temperature_softmax(&[1.0], 0.0).is_err());
    }

    #[test]
    fn top_p_examples() {
        let f = top_p_filter(&[0.5, 0.3, 0.2], 0.7);
        assert_abs_diff_eq!(f[0], 0.625, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], 0.375, epsilon = 1e-12);
        assert_eq!(f[2], 0.0);
        let p = [0.1, 0.2, 0.3, 0.4];
        let id = top_p_filter(&p, 1.0);
        for (a, b) in id.iter().zip(&p) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(top_p_filter(&[0.0, 1.0, 0.0], 0.3), vec![0.0, 1.0, 0.0]);
        // ties: lower id wins
        assert_eq!(top_p_filter(&[0.5, 0.5], 0.5), vec![1.0, 0.0]);
    }

    #[test]
    fn ngram_bans() {
        assert_eq!(banned_ngram_tokens(&[4, 5, 6, 4, 5], 3), vec![6]);
        assert!(banned_ngram_tokens(&[4, 5], 3).is_empty());
        assert!(banned_ngram_tokens(&[4, 5, 6], 0).is_empty());
    }

    #[test]
    fn repetition_penalty_sign_aware() {
        let mut l = vec![2.0, -2.0, 1.0];
        apply_repetition_penalty(&mut l, &[0, 1, 0], 2.0);
        assert_eq!(l, vec![1.0, -4.0, 1.0]);
    }

    fn model() -> ModelParams {
        ModelParams::init(ModelConfig::tiny(12, 2), 3).unwrap()
    }

    fn has_repeat(xs: &[usize], n: usize) -> bool {
        let mut seen = std::collections::HashSet::new();
        xs.windows(n).any(|w| !seen.insert(w.to_vec()))
    }

    #[test]
    fn hard_generation_constraints() {
        let m = model();
        let z = vec![0.3; m.config().d_latent];
        let cfg = DecodeConfig {
            min_len: 5,
            max_len: 12,
            no_repeat_ngram: 2,
            ..DecodeConfig::default()
        };
        let mut rng = seeded(1);
        for _ in 0..20 {
            let s = generate_hard(&m, &z, &cfg, &mut rng, &[]).unwrap();
            assert!(s.len() >= 5 && s.len() <= 12, "{s:?}");
            assert!(s.iter().all(|&t| !Vocab::is_special(t)));
            assert!(!has_repeat(&s, 2), "{s:?}");
        }
        let a = generate_hard(&m, &z, &cfg, &mut seeded(9), &[4]).unwrap();
        let b = generate_hard(&m, &z, &cfg, &mut seeded(9), &[4]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], 4);
        assert!(generate_hard(&m, &z, &cfg, &mut seeded(9), &[EOS]).is_err());
    }

    #[test]
    fn soft_generation_invariants() {
        let m = model();
        let z = vec![-0.2; m.config().d_latent];
        let cfg = DecodeConfig {
            min_len: 3,
            max_len: 8,
            ..DecodeConfig::htg()
        };
        let mut rng = seeded(2);
        for _ in 0..10 {
            let s = generate_soft(&m, &z, 1, &cfg, &mut rng).unwrap();
            assert!(s.content_len() >= 3 && s.content_len() <= 8);
            for r in 0..s.steps.rows() {
                assert_abs_diff_eq!(s.steps.row(r).iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            }
            assert_eq!(s.hard_shadow.len(), s.steps.rows());
            for (m, &t) in s.context.iter().enumerate() {
                assert!(s.steps.get(m, t) > 0.0);
            }
        }
    }

    #[test]
    fn corrupt_degenerate_cases() {
        let x = vec![4, 5, 6, 7, 8];
        assert_eq!(corrupt(&x, 0.0, 0.0, 0.0, 10, &mut seeded(0)).unwrap(), x);
        assert_eq!(corrupt(&x, 1.0, 0.0, 0.0, 10, &mut seeded(0)).unwrap(), vec![4]);
        let m = corrupt(&x, 0.0, 1.0, 0.0, 10, &mut seeded(0)).unwrap();
        assert!(m.iter().all(|&t| (NUM_RESERVED..10).contains(&t)));
        assert!(corrupt(&x, -0.1, 0.0, 0.0, 10, &mut seeded(0)).is_err());
    }

    #[test]
    fn shuffle_displaces_at_most_one() {
        let x: Vec<usize> = (4..24).collect();
        let mut rng = seeded(5);
        for _ in 0..10_000 {
            let y = corrupt(&x, 0.0, 0.0, 1.1, 30, &mut rng).unwrap();
            for (i, t) in y.iter().enumerate() {
                assert!((t - 4).abs_diff(i) <= 1);
            }
        }
    }

    #[test]
    fn soft_file_round_trip() {
        let m = model();
        let z = vec![0.0; m.config().d_latent];
        let cfg = DecodeConfig {
            min_len: 2,
            max_len: 5,
            ..DecodeConfig::htg()
        };
        let mut rng = seeded(4);
        let seqs: Vec<_> = (0..3)
            .map(|i| generate_soft(&m, &z, i % 2, &cfg, &mut rng).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.soft");
        write_soft_file(&p, &seqs, 12).unwrap();
        assert_eq!(read_soft_file(&p).unwrap(), seqs);
        fs::write(&p, b"garbage").unwrap();
        assert!(read_soft_file(&p).is_err());
    }
}
