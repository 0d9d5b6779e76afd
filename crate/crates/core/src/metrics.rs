//! Evaluation: diversity, Self-BLEU, importance-weighted perplexity,
//! classification scores and oracle-judged control accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{LabeledExample, SyntheticSource, BOS, EOS};
use crate::dualvae::ModelParams;
use crate::error::{Error, Result};
use crate::losses::recon_nll;
use crate::rng::{argmax, Draw};
use crate::tensor::{log_sum_exp, softmax};

fn ngram_counts(seq: &[usize], n: usize) -> HashMap<&[usize], usize> {
    let mut m = HashMap::new();
    if n > 0 && seq.len() >= n {
        for w in seq.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Distinct n-grams over total n-grams, pooled over all sequences. `None`
/// when no sequence is long enough to hold an n-gram.
pub fn dist_n(gens: &[Vec<usize>], n: usize) -> Option<f64> {
    let mut distinct: HashMap<&[usize], ()> = HashMap::new();
    let mut total = 0usize;
    for g in gens {
        if n == 0 || g.len() < n {
            continue;
        }
        for w in g.windows(n) {
            distinct.insert(w, ());
            total += 1;
        }
    }
    (total > 0).then(|| distinct.len() as f64 / total as f64)
}

/// Geometric mean of `dist_n` over the available n in 1..=4.
pub fn dist_geo(gens: &[Vec<usize>]) -> Option<f64> {
    let vals: Vec<f64> = (1..=4).filter_map(|n| dist_n(gens, n)).collect();
    if vals.is_empty() {
        return None;
    }
    Some((vals.iter().map(|v| v.ln()).sum::<f64>() / vals.len() as f64).exp())
}

/// Sentence BLEU with uniform weights over 1..=`max_n`, clipped counts and
/// the closest-reference brevity penalty. No smoothing: any zero precision
/// gives 0. Result in [0, 1].
pub fn sentence_bleu(hyp: &[usize], refs: &[&[usize]], max_n: usize) -> f64 {
    if hyp.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=max_n {
        let h = ngram_counts(hyp, n);
        let total: usize = h.values().sum();
        if total == 0 {
            return 0.0;
        }
        let mut max_ref: HashMap<&[usize], usize> = HashMap::new();
        for r in refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = h
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_p += (clipped as f64 / total as f64).ln() / max_n as f64;
    }
    let c = hyp.len() as f64;
    // closest reference length, shorter wins ties
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - hyp.len() as i64).abs(), l))
        .unwrap_or(0) as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_p.exp()
}

/// Self-BLEU ×100: each sequence is scored against all others with the
/// geometric mean of BLEU-2, BLEU-3 and BLEU-4, then averaged.
///
/// Equal to calling [`sentence_bleu`] per sequence, but linear in the number
/// of sequences: for every n-gram the two largest per-sequence counts are
/// kept, so the clipping count with one sequence left out is a lookup.
pub fn self_bleu(gens: &[Vec<usize>]) -> Result<f64> {
    if gens.len() < 2 {
        return Err(Error::invalid("self-BLEU needs at least two sequences"));
    }
    const MAX_N: usize = 4;
    // per order: gram -> (best count, owner of best, runner-up count)
    let mut top: Vec<HashMap<&[usize], (usize, usize, usize)>> = vec![HashMap::new(); MAX_N];
    for (i, g) in gens.iter().enumerate() {
        for (n, table) in top.iter_mut().enumerate() {
            for (gram, c) in ngram_counts(g, n + 1) {
                let e = table.entry(gram).or_insert((0, usize::MAX, 0));
                if c > e.0 {
                    *e = (c, i, e.0);
                } else if c > e.2 {
                    e.2 = c;
                }
            }
        }
    }
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for g in gens {
        *lengths.entry(g.len()).or_insert(0) += 1;
    }

    let mut sum = 0.0;
    for (i, hyp) in gens.iter().enumerate() {
        if hyp.is_empty() {
            continue;
        }
        // ln p_n for n = 1..=4; None once a precision is zero
        let mut log_p = [None; MAX_N];
        for (n, table) in top.iter().enumerate() {
            let h = ngram_counts(hyp, n + 1);
            let total: usize = h.values().sum();
            let clipped: usize = h
                .iter()
                .map(|(gram, &c)| {
                    let (best, owner, second) = table[gram];
                    c.min(if owner == i { second } else { best })
                })
                .sum();
            if total == 0 || clipped == 0 {
                break;
            }
            log_p[n] = Some((clipped as f64 / total as f64).ln());
        }
        // closest other length, shorter wins ties
        let r = lengths
            .iter()
            .filter(|&(&l, &k)| l != hyp.len() || k > 1)
            .map(|(&l, _)| l)
            .min_by_key(|&l| ((l as i64 - hyp.len() as i64).abs(), l))
            .unwrap_or(0) as f64;
        let c = hyp.len() as f64;
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        let mut log_b = 0.0;
        let mut ok = true;
        for n in 2..=MAX_N {
            let lp: Option<f64> = log_p[..n].iter().copied().sum();
            match lp {
                Some(lp) => log_b += (bp.ln() + lp / n as f64) / 3.0,
                None => ok = false,
            }
        }
        if ok {
            sum += log_b.exp();
        }
    }
    Ok(100.0 * sum / gens.len() as f64)
}

/// A latent-variable model that supports importance sampling of `log p(x|y)`.
pub trait ImportanceModel {
    type Latent;
    /// Draw `z ~ q(z|x,y)` and return it with `log q(z|x,y)`.
    fn sample_posterior(&self, x: &[usize], y: usize, rng: &mut dyn FnMut() -> f64) -> Result<(Self::Latent, f64)>;
    /// `log p(x|z) + log p(z|y)`.
    fn log_joint(&self, x: &[usize], y: usize, z: &Self::Latent) -> Result<f64>;
}

/// `L_k = log (1/k) Σ_i p(x, z_i) / q(z_i|x,y)` with `z_i ~ q`.
pub fn iw_bound<M: ImportanceModel>(
    model: &M,
    x: &[usize],
    y: usize,
    k: usize,
    rng: &mut impl Draw,
) -> Result<f64> {
    if k < 1 {
        return Err(Error::invalid("importance samples k must be >= 1"));
    }
    let mut logw = Vec::with_capacity(k);
    for _ in 0..k {
        let mut u = || rng.uniform();
        let (z, lq) = model.sample_posterior(x, y, &mut u)?;
        logw.push(model.log_joint(x, y, &z)? - lq);
    }
    Ok(log_sum_exp(&logw) - (k as f64).ln())
}

/// `exp(−L_k / (len + 1))`; the +1 counts EOS.
pub fn iw_ppl<M: ImportanceModel>(
    model: &M,
    x: &[usize],
    y: usize,
    k: usize,
    rng: &mut impl Draw,
) -> Result<f64> {
    Ok((-iw_bound(model, x, y, k, rng)? / (x.len() + 1) as f64).exp())
}

/// Standard normal from two uniforms (Box–Muller); keeps the trait object
/// safe while using the caller's stream.
fn normal_from(u: &mut dyn FnMut() -> f64) -> f64 {
    let u1 = u().max(f64::MIN_POSITIVE);
    let u2 = u();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl ImportanceModel for ModelParams {
    type Latent = Vec<f64>;

    fn sample_posterior(&self, x: &[usize], y: usize, u: &mut dyn FnMut() -> f64) -> Result<(Vec<f64>, f64)> {
        let q = self.posterior(x, y)?;
        let eps: Vec<f64> = (0..q.dim()).map(|_| normal_from(u)).collect();
        let z = q.reparameterize_with(&eps);
        let lq = q.log_density(&z);
        Ok((z, lq))
    }

    fn log_joint(&self, x: &[usize], y: usize, z: &Vec<f64>) -> Result<f64> {
        let mut inputs = Vec::with_capacity(x.len() + 1);
        inputs.push(BOS);
        inputs.extend_from_slice(x);
        let logits = self.decode_logits(z, &inputs)?;
        let mut targets = x.to_vec();
        targets.push(EOS);
        let lpx = -recon_nll(&logits, &targets)?;
        Ok(lpx + self.prior_gen(y)?.log_density(z))
    }
}

/// Token-level perplexity `exp(−Σ L_k / Σ (len + 1))` over a labelled set.
pub fn model_ppl<M: ImportanceModel>(
    model: &M,
    data: &[LabeledExample],
    k: usize,
    rng: &mut impl Draw,
) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for ex in data {
        let y = ex
            .label
            .ok_or_else(|| Error::invalid("model_ppl needs labelled examples"))?;
        total += iw_bound(model, &ex.tokens, y, k, rng)?;
        tokens += ex.tokens.len() + 1;
    }
    if tokens == 0 {
        return Err(Error::invalid("empty evaluation set"));
    }
    Ok((-total / tokens as f64).exp())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassificationMetrics {
    pub acc: f64,
    pub macro_f1: f64,
    /// NaN when no class has both positive and negative examples.
    pub auc: f64,
}

/// Mann–Whitney AUC: probability a random positive outranks a random
/// negative, ties counted half. `None` if either group is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over ties
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = r;
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Accuracy, macro-F1 and AUC. `scores[i]` holds one score per class; for
/// two classes the AUC uses the class-1 score, otherwise it is the macro
/// one-vs-rest average. Per-class F1 with no predictions and no gold is 0.
pub fn classification_metrics(
    pred: &[usize],
    scores: &[Vec<f64>],
    gold: &[usize],
    num_classes: usize,
) -> Result<ClassificationMetrics> {
    if pred.len() != gold.len() || scores.len() != gold.len() {
        return Err(Error::Shape("prediction, score and gold lengths differ".into()));
    }
    if gold.is_empty() {
        return Err(Error::invalid("no examples"));
    }
    if scores.iter().any(|s| s.len() != num_classes)
        || pred.iter().chain(gold).any(|&c| c >= num_classes)
    {
        return Err(Error::invalid("class id or score width out of range"));
    }
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    let mut f1_sum = 0.0;
    for c in 0..num_classes {
        let tp = pred.iter().zip(gold).filter(|&(&p, &g)| p == c && g == c).count();
        let fp = pred.iter().zip(gold).filter(|&(&p, &g)| p == c && g != c).count();
        let fn_ = pred.iter().zip(gold).filter(|&(&p, &g)| p != c && g == c).count();
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    let auc = if num_classes == 2 {
        let s: Vec<f64> = scores.iter().map(|s| s[1]).collect();
        let pos: Vec<bool> = gold.iter().map(|&g| g == 1).collect();
        binary_auc(&s, &pos).unwrap_or(f64::NAN)
    } else {
        let per: Vec<f64> = (0..num_classes)
            .filter_map(|c| {
                let s: Vec<f64> = scores.iter().map(|s| s[c]).collect();
                let pos: Vec<bool> = gold.iter().map(|&g| g == c).collect();
                binary_auc(&s, &pos)
            })
            .collect();
        if per.is_empty() {
            f64::NAN
        } else {
            per.iter().sum::<f64>() / per.len() as f64
        }
    };
    Ok(ClassificationMetrics {
        acc: correct as f64 / gold.len() as f64,
        macro_f1: f1_sum / num_classes as f64,
        auc,
    })
}

/// Judge generations with the Bayes posterior of the true source against
/// their intended labels.
pub fn control_accuracy(gens: &[LabeledExample], source: &SyntheticSource) -> Result<ClassificationMetrics> {
    let k = source.num_labels();
    let mut pred = Vec::with_capacity(gens.len());
    let mut scores = Vec::with_capacity(gens.len());
    let mut gold = Vec::with_capacity(gens.len());
    for g in gens {
        let post = source.bayes_posterior(&g.tokens)?;
        pred.push(argmax(&post));
        scores.push(post);
        gold.push(g.label.ok_or_else(|| Error::invalid("generation without label"))?);
    }
    classification_metrics(&pred, &scores, &gold, k)
}

/// Classifier metrics of a dual VAE on a labelled set, using the prior mean
/// of `P(z|x)` as the latent.
pub fn classifier_metrics(params: &ModelParams, data: &[LabeledExample]) -> Result<ClassificationMetrics> {
    let mut pred = Vec::with_capacity(data.len());
    let mut scores = Vec::with_capacity(data.len());
    let mut gold = Vec::with_capacity(data.len());
    for ex in data {
        let p = softmax(&params.classify(&params.prior_cls(&ex.tokens)?.mu)?);
        pred.push(argmax(&p));
        scores.push(p);
        gold.push(ex.label.ok_or_else(|| Error::invalid("unlabelled evaluation example"))?);
    }
    classification_metrics(&pred, &scores, &gold, params.config().num_labels)
}

/// Add-`alpha` bigram model fitted on held-out text, used as an external
/// fluency judge for generations.
#[derive(Clone, Debug)]
pub struct BigramJudge {
    log_prob: Vec<Vec<f64>>,
}

impl BigramJudge {
    pub fn fit(data: &[LabeledExample], vocab_size: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::invalid("judge smoothing must be > 0"));
        }
        let mut counts = vec![vec![alpha; vocab_size]; vocab_size];
        for ex in data {
            let f = ex.framed();
            for w in f.windows(2) {
                if w[0] >= vocab_size || w[1] >= vocab_size {
                    return Err(Error::invalid("token outside judge vocabulary"));
                }
                counts[w[0]][w[1]] += 1.0;
            }
        }
        let log_prob = counts
            .into_iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.into_iter().map(|c| (c / s).ln()).collect()
            })
            .collect();
        Ok(BigramJudge { log_prob })
    }

    /// Perplexity over all transitions including BOS→first and last→EOS.
    pub fn perplexity(&self, gens: &[Vec<usize>]) -> Result<f64> {
        let v = self.log_prob.len();
        let mut nll = 0.0;
        let mut n = 0usize;
        for g in gens {
            let f = crate::corpus::frame(g);
            for w in f.windows(2) {
                if w[0] >= v || w[1] >= v {
                    return Err(Error::invalid("token outside judge vocabulary"));
                }
                nll -= self.log_prob[w[0]][w[1]];
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::invalid("no generations to judge"));
        }
        Ok((nll / n as f64).exp())
    }
}

/// Per-epoch evaluation row. Diversity values are fractions in [0, 1];
/// Self-BLEU is in [0, 100].
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub epoch: usize,
    /// Bigram-judge perplexity of the generations.
    pub output_ppl: f64,
    /// Importance-weighted perplexity of the model on the test split.
    pub model_ppl: f64,
    pub control_acc: f64,
    pub control_acc_ci: f64,
    pub control_f1: f64,
    pub control_auc: f64,
    pub cls_acc: f64,
    pub cls_f1: f64,
    pub cls_auc: f64,
    pub dist: f64,
    pub dist_n: [f64; 4],
    pub self_bleu: f64,
    pub n_generations: usize,
    pub n_test: usize,
}

pub const TSV_COLUMNS: [&str; 18] = [
    "epoch",
    "output_ppl",
    "model_ppl",
    "control_acc",
    "control_acc_ci",
    "control_f1",
    "control_auc",
    "cls_acc",
    "cls_f1",
    "cls_auc",
    "dist",
    "dist_1",
    "dist_2",
    "dist_3",
    "dist_4",
    "self_bleu",
    "n_generations",
    "n_test",
];

/// 95% normal-approximation half-width of a proportion.
pub fn proportion_ci(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

impl MetricsReport {
    fn reals(&self) -> [f64; 15] {
        [
            self.output_ppl,
            self.model_ppl,
            self.control_acc,
            self.control_acc_ci,
            self.control_f1,
            self.control_auc,
            self.cls_acc,
            self.cls_f1,
            self.cls_auc,
            self.dist,
            self.dist_n[0],
            self.dist_n[1],
            self.dist_n[2],
            self.dist_n[3],
            self.self_bleu,
        ]
    }

    pub fn tsv_row(&self) -> String {
        let mut s = self.epoch.to_string();
        for r in self.reals() {
            let _ = write!(s, "\t{r:.4}");
        }
        let _ = write!(s, "\t{}\t{}", self.n_generations, self.n_test);
        s
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != TSV_COLUMNS.len() {
            return Err(Error::invalid(format!("metrics row has {} fields", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::invalid(format!("bad integer {s:?}")));
        let mut r = [0.0; 15];
        for (i, x) in r.iter_mut().enumerate() {
            *x = f[i + 1]
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad real {:?}", f[i + 1])))?;
        }
        Ok(MetricsReport {
            epoch: int(f[0])?,
            output_ppl: r[0],
            model_ppl: r[1],
            control_acc: r[2],
            control_acc_ci: r[3],
            control_f1: r[4],
            control_auc: r[5],
            cls_acc: r[6],
            cls_f1: r[7],
            cls_auc: r[8],
            dist: r[9],
            dist_n: [r[10], r[11], r[12], r[13]],
            self_bleu: r[14],
            n_generations: int(f[16])?,
            n_test: int(f[17])?,
        })
    }
}

pub fn format_metrics_tsv(rows: &[MetricsReport]) -> String {
    let mut s = TSV_COLUMNS.join("\t");
    s.push('\n');
    for r in rows {
        s.push_str(&r.tsv_row());
        s.push('\n');
    }
    s
}

pub fn write_metrics_tsv(path: &Path, rows: &[MetricsReport]) -> Result<()> {
    fs::write(path, format_metrics_tsv(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_tsv(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(TSV_COLUMNS.join("\t").as_str()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "unexpected metrics header".into(),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            MetricsReport::parse_row(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dist_hand_cases() {
        // "a b", "a c"
        let g = vec![vec![4, 5], vec![4, 6]];
        assert_eq!(dist_n(&g, 1), Some(0.75));
        assert_eq!(dist_n(&g, 2), Some(1.0));
        assert_eq!(dist_n(&g, 3), None);
        assert_eq!(dist_n(&[vec![4, 4, 4]], 1), Some(1.0 / 3.0));
        let geo = dist_geo(&g).unwrap();
        assert_abs_diff_eq!(geo, (0.75f64 * 1.0).sqrt(), epsilon = 1e-15);
        // "a a b b": dist_1..4 = (0.5, 1, 1, 1)
        let h = vec![vec![4, 4, 5, 5]];
        assert_abs_diff_eq!(dist_geo(&h).unwrap(), 0.5f64.powf(0.25), epsilon = 1e-15);
        assert_abs_diff_eq!(dist_geo(&h).unwrap(), 0.8409, epsilon = 1e-4);
    }

    #[test]
    fn self_bleu_matches_pairwise_definition() {
        let mut rng = crate::rng::seeded(3);
        for _ in 0..20 {
            let gens: Vec<Vec<usize>> = (0..6)
                .map(|_| {
                    let len = 1 + (rng.uniform() * 8.0) as usize;
                    (0..len).map(|_| 4 + (rng.uniform() * 3.0) as usize).collect()
                })
                .collect();
            let mut naive = 0.0;
            for (i, hyp) in gens.iter().enumerate() {
                let refs: Vec<&[usize]> = gens
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, g)| g.as_slice())
                    .collect();
                let b: Vec<f64> = (2..=4).map(|n| sentence_bleu(hyp, &refs, n)).collect();
                if b.iter().all(|&x| x > 0.0) {
                    naive += b.iter().product::<f64>().cbrt();
                }
            }
            naive *= 100.0 / gens.len() as f64;
            assert_abs_diff_eq!(self_bleu(&gens).unwrap(), naive, epsilon = 1e-9);
        }
    }

    #[test]
    fn self_bleu_extremes() {
        let same = vec![vec![4, 5, 6, 7, 8], vec![4, 5, 6, 7, 8]];
        assert_abs_diff_eq!(self_bleu(&same).unwrap(), 100.0, epsilon = 1e-9);
        let disjoint = vec![vec![4, 5, 6, 7], vec![8, 9, 10, 11]];
        assert_eq!(self_bleu(&disjoint).unwrap(), 0.0);
        assert!(self_bleu(&same[..1]).is_err());
    }

    #[test]
    fn macro_f1_hand_case() {
        let m = classification_metrics(
            &[0, 1, 1, 1],
            &[vec![0.9, 0.1], vec![0.4, 0.6], vec![0.2, 0.8], vec![0.1, 0.9]],
            &[0, 0, 1, 1],
            2,
        )
        .unwrap();
        assert_abs_diff_eq!(m.macro_f1, (2.0 / 3.0 + 0.8) / 2.0, epsilon = 1e-12);
        assert_eq!(m.acc, 0.75);
        assert_eq!(m.auc, 1.0);
    }

    #[test]
    fn auc_rank_cases() {
        let pos = [true, false, true, false];
        assert_eq!(binary_auc(&[0.9, 0.4, 0.6, 0.1], &pos), Some(1.0));
        assert_eq!(binary_auc(&[0.9, 0.6, 0.4, 0.1], &pos), Some(0.75));
        assert_eq!(binary_auc(&[0.5; 4], &pos), Some(0.5));
        assert_eq!(binary_auc(&[0.5; 2], &[true, true]), None);
    }

    #[test]
    fn tsv_round_trip() {
        let r = MetricsReport {
            epoch: 3,
            output_ppl: 12.34567,
            model_ppl: 20.0,
            control_acc: 0.5,
            control_acc_ci: 0.1,
            control_f1: 0.25,
            control_auc: f64::NAN,
            cls_acc: 0.9,
            cls_f1: 0.8,
            cls_auc: 0.7,
            dist: 0.6,
            dist_n: [0.1, 0.2, 0.3, 0.4],
            self_bleu: 55.5,
            n_generations: 100,
            n_test: 50,
        };
        let text = format_metrics_tsv(&[r.clone()]);
        assert!(text.contains("\t12.3457\t"));
        assert!(text.contains("\tNaN\t"));
        let back = MetricsReport::parse_row(text.lines().nth(1).unwrap()).unwrap();
        assert_eq!(back.epoch, 3);
        assert_eq!(back.output_ppl, 12.3457);
        assert!(back.control_auc.is_nan());
    }

    #[test]
    fn judge_prefers_training_text() {
        let data = vec![LabeledExample::new(vec![4, 5, 6], Some(0)); 5];
        let j = BigramJudge::fit(&data, 10, 0.1).unwrap();
        let good = j.perplexity(&[vec![4, 5, 6]]).unwrap();
        let bad = j.perplexity(&[vec![6, 5, 4]]).unwrap();
        assert!(good < bad);
    }
}
