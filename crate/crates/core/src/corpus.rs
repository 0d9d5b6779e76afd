//! Synthetic attribute-labelled corpora.
//!
//! Each attribute owns a first-order Markov chain over a shared vocabulary.
//! The chains are a mixture of one shared base chain and a per-attribute chain
//! that only emits that attribute's block of "marker" tokens; the mixing weight
//! is the `separation` knob. Because the generating process is known,
//! [`SyntheticSource::bayes_posterior`] gives the exact `P(y | x)`.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::Draw;
use rand::Rng as _;
use crate::tensor::log_sum_exp;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const UNK: usize = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED_NAMES: [&str; NUM_RESERVED] = ["<bos>", "<eos>", "<pad>", "<unk>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    /// Reserved symbols followed by `w0 .. w{size-5}`.
    pub fn synthetic(size: usize) -> Result<Self> {
        if size < 8 {
            return Err(Error::invalid(format!("vocabulary size {size} < 8")));
        }
        let mut tokens: Vec<String> = RESERVED_NAMES.iter().map(|s| s.to_string()).collect();
        tokens.extend((0..size - NUM_RESERVED).map(|i| format!("w{i}")));
        Ok(Vocab { tokens })
    }

    /// Build from content symbols; the four reserved symbols are prepended.
    pub fn from_content<S: AsRef<str>>(content: &[S]) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED_NAMES.iter().map(|s| s.to_string()).collect();
        for s in content {
            let s = s.as_ref();
            if s.is_empty() || s.chars().any(char::is_whitespace) || tokens.iter().any(|t| t == s) {
                return Err(Error::invalid(format!("bad or duplicate token {s:?}")));
            }
            tokens.push(s.to_string());
        }
        if tokens.len() < 8 {
            return Err(Error::invalid(format!("vocabulary size {} < 8", tokens.len())));
        }
        Ok(Vocab { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    pub fn is_special(id: usize) -> bool {
        id < NUM_RESERVED
    }

    pub fn content_ids(&self) -> Range<usize> {
        NUM_RESERVED..self.tokens.len()
    }

    pub fn render(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeSet {
    labels: Vec<String>,
}

impl AttributeSet {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::invalid("need at least two attributes"));
        }
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.contains('\t') || labels[..i].contains(l) {
                return Err(Error::invalid(format!("bad or duplicate label {l:?}")));
            }
        }
        Ok(AttributeSet { labels })
    }

    /// `neg`/`pos` for two attributes, `topic0..` otherwise.
    pub fn synthetic(k: usize) -> Result<Self> {
        match k {
            0 | 1 => Err(Error::invalid(format!("attribute count {k} < 2"))),
            2 => AttributeSet::new(&["neg", "pos"]),
            _ => AttributeSet::new(&(0..k).map(|i| format!("topic{i}")).collect::<Vec<_>>()),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }
}

/// Sequence-length model: at least `min_len` content tokens, then stop with
/// probability `stop_prob` after each token, hard cap at `max_len`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthModel {
    pub min_len: usize,
    pub max_len: usize,
    pub stop_prob: f64,
}

impl LengthModel {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "length bounds {}..={} invalid",
                self.min_len, self.max_len
            )));
        }
        if !(self.stop_prob > 0.0 && self.stop_prob <= 1.0) {
            return Err(Error::invalid(format!("stop probability {}", self.stop_prob)));
        }
        Ok(())
    }

    pub fn log_prob(&self, len: usize) -> f64 {
        if len < self.min_len || len > self.max_len {
            return f64::NEG_INFINITY;
        }
        let extra = (len - self.min_len) as f64;
        let keep = (1.0 - self.stop_prob).ln();
        if len == self.max_len {
            extra * keep
        } else {
            extra * keep + self.stop_prob.ln()
        }
    }
}

impl Default for LengthModel {
    fn default() -> Self {
        LengthModel {
            min_len: 10,
            max_len: 24,
            stop_prob: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSource {
    pub vocab: Vocab,
    pub attributes: AttributeSet,
    /// `initial[y][v]`
    pub initial: Vec<Vec<f64>>,
    /// `transition[y][u][v]`, rows indexed by the previous token.
    pub transition: Vec<Vec<Vec<f64>>>,
    pub length: LengthModel,
    pub prior: Vec<f64>,
    pub marker_blocks: Vec<Range<usize>>,
    pub separation: f64,
}

/// Attribute-labelled token sequence. `tokens` holds content ids only;
/// BOS/EOS framing is added by [`LabeledExample::framed`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabeledExample {
    pub tokens: Vec<usize>,
    pub label: Option<usize>,
}

impl LabeledExample {
    pub fn new(tokens: Vec<usize>, label: Option<usize>) -> Self {
        LabeledExample { tokens, label }
    }

    pub fn framed(&self) -> Vec<usize> {
        frame(&self.tokens)
    }
}

pub fn frame(tokens: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(tokens.len() + 2);
    out.push(BOS);
    out.extend_from_slice(tokens);
    out.push(EOS);
    out
}

/// Split sizes for [`SyntheticSource::make_splits`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub labeled: usize,
    pub unlabeled: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplits {
    pub labeled: Vec<LabeledExample>,
    pub unlabeled: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl CorpusSplits {
    pub fn parts(&self) -> [(&'static str, &Vec<LabeledExample>); 4] {
        [
            ("labeled", &self.labeled),
            ("unlabeled", &self.unlabeled),
            ("dev", &self.dev),
            ("test", &self.test),
        ]
    }
}

/// Symmetric Dirichlet draw with concentration [`ROW_CONCENTRATION`].
fn random_simplex(len: usize, rng: &mut crate::rng::SeededRng) -> Vec<f64> {
    let gamma = rand_distr::Gamma::new(ROW_CONCENTRATION, 1.0).expect("positive concentration");
    // the floor keeps every transition possible
    let w: Vec<f64> = (0..len).map(|_| rng.sample(gamma) + 1e-6).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Dirichlet concentration of every table row. Sparse rows keep per-token
/// entropy near half of `log V`, as in natural text.
pub const ROW_CONCENTRATION: f64 = 0.1;

/// Share of every row drawn from the marker blocks.
pub const MARKER_SHARE: f64 = 0.25;

impl SyntheticSource {
    /// Random source with `k` attributes over a vocabulary of `v` symbols.
    pub fn build(seed: u64, v: usize, k: usize, separation: f64) -> Result<Self> {
        Self::build_with_length(seed, v, k, separation, LengthModel::default())
    }

    pub fn build_with_length(
        seed: u64,
        v: usize,
        k: usize,
        separation: f64,
        length: LengthModel,
    ) -> Result<Self> {
        let vocab = Vocab::synthetic(v)?;
        let attributes = AttributeSet::synthetic(k)?;
        if !(0.0..=1.0).contains(&separation) {
            return Err(Error::invalid(format!("separation {separation} outside [0, 1]")));
        }
        length.validate()?;
        let content = vocab.content_ids();
        let n_content = content.len();
        let block = n_content / (k + 1);
        if block == 0 {
            return Err(Error::invalid(format!(
                "{n_content} content tokens cannot hold {k} disjoint marker blocks"
            )));
        }
        // markers occupy the tail of the content range
        let first_marker = content.end - k * block;
        let marker_blocks: Vec<Range<usize>> = (0..k)
            .map(|y| first_marker + y * block..first_marker + (y + 1) * block)
            .collect();

        let mut rng = crate::rng::seeded(seed);
        let embed = |row: Vec<f64>, range: Range<usize>| {
            let mut full = vec![0.0; v];
            for (i, p) in range.zip(row) {
                full[i] = p;
            }
            full
        };
        let plain = content.start..first_marker;
        let base_init = embed(random_simplex(plain.len(), &mut rng), plain.clone());
        let base_rows: Vec<Vec<f64>> = (0..v)
            .map(|_| embed(random_simplex(plain.len(), &mut rng), plain.clone()))
            .collect();
        // marker distributions are shared across attributes; separation only
        // moves mass between the blocks, so s = 0 gives identical tables and
        // s = 1 puts all marker mass in the attribute's own block
        let draw_blocks = |rng: &mut crate::rng::SeededRng| -> Vec<Vec<f64>> {
            marker_blocks
                .iter()
                .map(|blk| embed(random_simplex(block, rng), blk.clone()))
                .collect()
        };
        let init_blocks = draw_blocks(&mut rng);
        let row_blocks: Vec<Vec<Vec<f64>>> = (0..v).map(|_| draw_blocks(&mut rng)).collect();
        let own = (1.0 + (k as f64 - 1.0) * separation) / k as f64;
        let other = (1.0 - separation) / k as f64;
        let mix = |y: usize, base: &[f64], blocks: &[Vec<f64>]| -> Vec<f64> {
            let mut row: Vec<f64> = base.iter().map(|b| (1.0 - MARKER_SHARE) * b).collect();
            for (b, dist) in blocks.iter().enumerate() {
                let w = MARKER_SHARE * if b == y { own } else { other };
                for (r, p) in row.iter_mut().zip(dist) {
                    *r += w * p;
                }
            }
            row
        };

        let mut initial = Vec::with_capacity(k);
        let mut transition = Vec::with_capacity(k);
        for y in 0..k {
            initial.push(mix(y, &base_init, &init_blocks));
            let rows: Vec<Vec<f64>> = (0..v)
                .map(|u| {
                    if Vocab::is_special(u) {
                        // never visited; keep the row a valid simplex
                        base_rows[u].clone()
                    } else {
                        mix(y, &base_rows[u], &row_blocks[u])
                    }
                })
                .collect();
            transition.push(rows);
        }

        Ok(SyntheticSource {
            vocab,
            attributes,
            initial,
            transition,
            length,
            prior: vec![1.0 / k as f64; k],
            marker_blocks,
            separation,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.attributes.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Draw one example of attribute `label`.
    pub fn sample_example(&self, label: usize, rng: &mut impl Draw) -> Result<LabeledExample> {
        if label >= self.num_labels() {
            return Err(Error::invalid(format!("label {label} out of range")));
        }
        let mut tokens = Vec::with_capacity(self.length.max_len);
        let mut prev = rng.categorical(&self.initial[label]);
        tokens.push(prev);
        loop {
            let n = tokens.len();
            if n >= self.length.min_len
                && (n >= self.length.max_len || rng.bernoulli(self.length.stop_prob))
            {
                break;
            }
            prev = rng.categorical(&self.transition[label][prev]);
            tokens.push(prev);
        }
        Ok(LabeledExample::new(tokens, Some(label)))
    }

    /// `log P(x | y)` under the chain, including the length model.
    pub fn log_likelihood(&self, tokens: &[usize], label: usize) -> Result<f64> {
        self.check_tokens(tokens)?;
        if tokens.is_empty() {
            return Ok(f64::NEG_INFINITY);
        }
        let mut lp = self.initial[label][tokens[0]].ln();
        for w in tokens.windows(2) {
            lp += self.transition[label][w[0]][w[1]].ln();
        }
        Ok(lp + self.length.log_prob(tokens.len()))
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.vocab_size()) {
            Some(t) => Err(Error::invalid(format!("token id {t} outside vocabulary"))),
            None => Ok(()),
        }
    }

    /// Exact `P(y | x) ∝ P(y) P(x | y)`. If every attribute gives `x` zero
    /// likelihood the posterior is uniform.
    pub fn bayes_posterior(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        let k = self.num_labels();
        let mut logs = Vec::with_capacity(k);
        for y in 0..k {
            logs.push(self.prior[y].ln() + self.log_likelihood(tokens, y)?);
        }
        let lse = log_sum_exp(&logs);
        if lse == f64::NEG_INFINITY {
            return Ok(vec![1.0 / k as f64; k]);
        }
        Ok(logs.iter().map(|l| (l - lse).exp()).collect())
    }

    pub fn bayes_label(&self, tokens: &[usize]) -> Result<usize> {
        Ok(crate::rng::argmax(&self.bayes_posterior(tokens)?))
    }

    /// Draw a labelled pool (labels from the prior) and cut it into the four
    /// splits, erasing labels on the unlabelled part.
    pub fn make_splits(&self, sizes: SplitSizes, rng: &mut impl Draw) -> Result<CorpusSplits> {
        if sizes.labeled == 0 || sizes.unlabeled == 0 || sizes.dev == 0 || sizes.test == 0 {
            return Err(Error::invalid("all split sizes must be at least 1"));
        }
        let mut draw = |n: usize, keep_label: bool| -> Result<Vec<LabeledExample>> {
            (0..n)
                .map(|_| {
                    let y = rng.categorical(&self.prior);
                    let mut ex = self.sample_example(y, rng)?;
                    if !keep_label {
                        ex.label = None;
                    }
                    Ok(ex)
                })
                .collect()
        };
        Ok(CorpusSplits {
            labeled: draw(sizes.labeled, true)?,
            unlabeled: draw(sizes.unlabeled, false)?,
            dev: draw(sizes.dev, true)?,
            test: draw(sizes.test, true)?,
        })
    }
}

/// Path of one split file: `<prefix>.<split>`.
pub fn split_path(prefix: &Path, split: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(split);
    PathBuf::from(s)
}

pub fn format_examples(
    examples: &[LabeledExample],
    vocab: &Vocab,
    attributes: &AttributeSet,
) -> String {
    let mut out = String::new();
    for ex in examples {
        let label = ex.label.map(|l| attributes.name(l)).unwrap_or("");
        let _ = writeln!(out, "{label}\t{}", vocab.render(&ex.tokens));
    }
    out
}

/// Parse `label<TAB>tokens` lines. Empty label means unlabelled; `#` lines
/// and blank lines are skipped; unknown token strings map to `<unk>`.
pub fn parse_examples(
    text: &str,
    path: &Path,
    vocab: &Vocab,
    attributes: &AttributeSet,
) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `label<TAB>tokens`".into()))?;
        let label = if label.is_empty() {
            None
        } else {
            Some(
                attributes
                    .id(label)
                    .ok_or_else(|| err(format!("unknown label {label:?}")))?,
            )
        };
        let tokens: Vec<usize> = body
            .split_whitespace()
            .map(|t| vocab.id(t).unwrap_or(UNK))
            .collect();
        if tokens.is_empty() {
            return Err(err("empty token sequence".into()));
        }
        out.push(LabeledExample::new(tokens, label));
    }
    Ok(out)
}

pub fn write_corpus(
    splits: &CorpusSplits,
    prefix: &Path,
    vocab: &Vocab,
    attributes: &AttributeSet,
) -> Result<()> {
    for (name, examples) in splits.parts() {
        let path = split_path(prefix, name);
        let mut text = format!("# {name} split, {} examples\n", examples.len());
        text.push_str(&format_examples(examples, vocab, attributes));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_corpus(prefix: &Path, vocab: &Vocab, attributes: &AttributeSet) -> Result<CorpusSplits> {
    let read = |name: &str| -> Result<Vec<LabeledExample>> {
        let path = split_path(prefix, name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        parse_examples(&text, &path, vocab, attributes)
    };
    Ok(CorpusSplits {
        labeled: read("labeled")?,
        unlabeled: read("unlabeled")?,
        dev: read("dev")?,
        test: read("test")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Greedy};

    #[test]
    fn rejects_small_configs() {
        assert!(SyntheticSource::build(1, 7, 2, 0.5).is_err());
        assert!(SyntheticSource::build(1, 16, 1, 0.5).is_err());
        assert!(SyntheticSource::build(1, 8, 5, 0.5).is_err());
    }

    #[test]
    fn zero_separation_tables_identical() {
        let s = SyntheticSource::build(1, 16, 2, 0.0).unwrap();
        assert_eq!(s.transition[0], s.transition[1]);
        assert_eq!(s.initial[0], s.initial[1]);
    }

    #[test]
    fn rows_are_simplexes() {
        let s = SyntheticSource::build(7, 32, 4, 0.5).unwrap();
        for y in 0..4 {
            assert!((s.initial[y].iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for row in &s.transition[y] {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn marker_blocks_disjoint() {
        let s = SyntheticSource::build(7, 32, 4, 0.5).unwrap();
        for (i, a) in s.marker_blocks.iter().enumerate() {
            for b in &s.marker_blocks[i + 1..] {
                assert!(a.end <= b.start);
            }
        }
    }

    #[test]
    fn greedy_rng_follows_argmax_chain() {
        let s = SyntheticSource::build(3, 16, 2, 0.4).unwrap();
        let ex = s.sample_example(1, &mut Greedy).unwrap();
        // stop prob 0.15 < 0.5, so greedy never stops early
        assert_eq!(ex.tokens.len(), s.length.max_len);
        let mut expected = vec![crate::rng::argmax(&s.initial[1])];
        while expected.len() < ex.tokens.len() {
            let prev = *expected.last().unwrap();
            expected.push(crate::rng::argmax(&s.transition[1][prev]));
        }
        assert_eq!(ex.tokens, expected);
    }

    #[test]
    fn forced_stop_gives_min_length() {
        let len = LengthModel {
            min_len: 5,
            max_len: 12,
            stop_prob: 1.0,
        };
        let s = SyntheticSource::build_with_length(3, 16, 2, 0.4, len).unwrap();
        let mut rng = seeded(1);
        for _ in 0..50 {
            assert_eq!(s.sample_example(0, &mut rng).unwrap().tokens.len(), 5);
        }
    }

    #[test]
    fn length_bounds_respected() {
        let s = SyntheticSource::build(5, 16, 2, 0.4).unwrap();
        let mut rng = seeded(2);
        for _ in 0..500 {
            let ex = s.sample_example(1, &mut rng).unwrap();
            assert!((s.length.min_len..=s.length.max_len).contains(&ex.tokens.len()));
            assert!(ex.tokens.iter().all(|&t| !Vocab::is_special(t) && t < 16));
        }
    }

    #[test]
    fn unreachable_sequence_gets_uniform_posterior() {
        let s = SyntheticSource::build(1, 16, 2, 1.0).unwrap();
        // a special token has zero probability everywhere
        let mut toks = vec![s.marker_blocks[0].start; 10];
        toks[3] = PAD;
        assert_eq!(s.bayes_posterior(&toks).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn own_marker_gives_certain_posterior() {
        let s = SyntheticSource::build(1, 16, 2, 1.0).unwrap();
        let mut rng = seeded(9);
        let ex = s.sample_example(0, &mut rng).unwrap();
        let post = s.bayes_posterior(&ex.tokens).unwrap();
        assert!((post[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_separation_posterior_is_prior() {
        let s = SyntheticSource::build(4, 16, 2, 0.0).unwrap();
        let mut rng = seeded(4);
        let ex = s.sample_example(0, &mut rng).unwrap();
        let post = s.bayes_posterior(&ex.tokens).unwrap();
        assert!((post[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn splits_sizes_and_label_erasure() {
        let s = SyntheticSource::build(1, 16, 2, 0.5).unwrap();
        let sizes = SplitSizes {
            labeled: 100,
            unlabeled: 3000,
            dev: 200,
            test: 500,
        };
        let splits = s.make_splits(sizes, &mut seeded(5)).unwrap();
        assert_eq!(splits.labeled.len(), 100);
        assert_eq!(splits.unlabeled.len(), 3000);
        assert_eq!(splits.unlabeled.len() / splits.labeled.len(), 30);
        assert!(splits.unlabeled.iter().all(|e| e.label.is_none()));
        assert!(splits.labeled.iter().all(|e| e.label.is_some()));
        let again = s.make_splits(sizes, &mut seeded(5)).unwrap();
        assert_eq!(splits, again);
    }

    #[test]
    fn minimal_splits() {
        let s = SyntheticSource::build(1, 16, 2, 0.5).unwrap();
        let one = SplitSizes {
            labeled: 1,
            unlabeled: 1,
            dev: 1,
            test: 1,
        };
        let splits = s.make_splits(one, &mut seeded(1)).unwrap();
        for (_, part) in splits.parts() {
            assert_eq!(part.len(), 1);
        }
        let zero = SplitSizes { labeled: 0, ..one };
        assert!(s.make_splits(zero, &mut seeded(1)).is_err());
    }

    #[test]
    fn parse_line_format() {
        let vocab = Vocab::from_content(&["a", "b", "c", "d"]).unwrap();
        let attrs = AttributeSet::new(&["neg", "pos"]).unwrap();
        let p = Path::new("x.labeled");
        let ex = parse_examples("# c\npos\ta b c\n\tb d\n", p, &vocab, &attrs).unwrap();
        assert_eq!(ex[0], LabeledExample::new(vec![4, 5, 6], Some(1)));
        assert_eq!(ex[1].label, None);
        let err = parse_examples("pos\ta\nmeh\ta b\n", p, &vocab, &attrs).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(parse_examples("no tab here\n", p, &vocab, &attrs).is_err());
    }
}
