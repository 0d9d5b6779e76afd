//! Training objectives, KL schedules and the finite-difference harness.
//!
//! All per-sequence losses are sums over positions (never token means). The
//! value-level functions here evaluate the same graph ops the trainer
//! differentiates, so e.g. a one-hot [`soft_recon_kl`] matches [`recon_nll`]
//! bit for bit.

use crate::autodiff::{Graph, ParamGrads, ParamStore, Var};
use crate::corpus::{Vocab, BOS, EOS};
use crate::dualvae::{LatentGaussian, ModelParams};
use crate::error::{Error, Result};
use crate::rng::{self, Draw};
use crate::tensor::Matrix;

/// Weights of the combined objective. The two KL weights are normally
/// produced by [`anneal_weight`] each step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_g: f64,
    pub lambda_bow: f64,
    pub lambda_kl_c: f64,
    pub lambda_kl_g: f64,
    /// Per-dimension KL floor ("KL-lambda").
    pub kl_free_bits: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_c: 1.0,
            lambda_g: 1.0,
            lambda_bow: 0.2,
            lambda_kl_c: 1.0,
            lambda_kl_g: 1.0,
            kl_free_bits: 0.05,
        }
    }
}

impl LossWeights {
    /// Two-class sentiment preset (`lambda_c = 10`, free bits 0.05).
    pub fn sentiment() -> Self {
        LossWeights {
            lambda_c: 10.0,
            ..Self::default()
        }
    }

    /// Multi-class topic preset (`lambda_c = 1`, free bits 0.01).
    pub fn topic() -> Self {
        LossWeights {
            kl_free_bits: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_c,
            self.lambda_g,
            self.lambda_bow,
            self.lambda_kl_c,
            self.lambda_kl_g,
            self.kl_free_bits,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("loss weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KlTerm {
    Classification,
    Generation,
}

/// Cyclical KL annealing: within each cycle the weight rises linearly from 0
/// to 1 over `rise_fraction` of the cycle and then stays at 1. Annealing runs
/// for the first `active_epochs_*` epochs; afterwards the weight is 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealSchedule {
    pub cycle_length: usize,
    pub rise_fraction: f64,
    pub active_epochs_kl_c: usize,
    pub active_epochs_kl_g: usize,
}

impl AnnealSchedule {
    pub fn new(cycle_length: usize) -> Self {
        AnnealSchedule {
            cycle_length,
            rise_fraction: 0.8,
            active_epochs_kl_c: 5,
            active_epochs_kl_g: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycle_length == 0 {
            return Err(Error::invalid("cycle_length must be >= 1"));
        }
        if !(self.rise_fraction > 0.0 && self.rise_fraction <= 1.0) {
            return Err(Error::invalid(format!("rise_fraction {}", self.rise_fraction)));
        }
        Ok(())
    }
}

/// Weight of one KL term at `global_step` during `epoch` (0-based).
pub fn anneal_weight(schedule: &AnnealSchedule, global_step: usize, epoch: usize, term: KlTerm) -> f64 {
    let active = match term {
        KlTerm::Classification => schedule.active_epochs_kl_c,
        KlTerm::Generation => schedule.active_epochs_kl_g,
    };
    if epoch >= active {
        return 1.0;
    }
    let in_cycle = (global_step % schedule.cycle_length) as f64;
    (in_cycle / (schedule.rise_fraction * schedule.cycle_length as f64)).min(1.0)
}

/// Closed-form KL between diagonal Gaussians.
pub fn gaussian_kl(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    Ok(gaussian_kl_per_dim(q, p)?.iter().sum())
}

pub fn gaussian_kl_per_dim(q: &LatentGaussian, p: &LatentGaussian) -> Result<Vec<f64>> {
    if q.dim() != p.dim() {
        return Err(Error::Shape(format!("KL between {}-d and {}-d", q.dim(), p.dim())));
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let row = |g: &mut Graph<'_>, v: &[f64]| g.constant(Matrix::row_vector(v.to_vec()));
    let (mq, lq) = (row(&mut g, &q.mu), row(&mut g, &q.log_sigma));
    let (mp, lp) = (row(&mut g, &p.mu), row(&mut g, &p.log_sigma));
    let kl = g.gaussian_kl(mq, lq, mp, lp);
    Ok(g.value(kl).data().to_vec())
}

fn check_rows(logits: &Matrix, n: usize) -> Result<()> {
    if logits.rows() != n {
        return Err(Error::Shape(format!(
            "{} logit rows for {n} targets",
            logits.rows()
        )));
    }
    Ok(())
}

/// Summed negative log-likelihood of `targets` under row-aligned logits.
pub fn recon_nll(logits: &Matrix, targets: &[usize]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::invalid("empty target"));
    }
    check_rows(logits, targets.len())?;
    if targets.iter().any(|&t| t >= logits.cols()) {
        return Err(Error::invalid("target id outside logits"));
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let l = g.constant(logits.clone());
    let loss = g.cross_entropy(l, targets);
    Ok(g.value(loss).item())
}

/// Check every row of `d` is a simplex within `tol`.
pub fn check_simplex_rows(d: &Matrix, tol: f64) -> Result<()> {
    for r in 0..d.rows() {
        let row = d.row(r);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > tol || row.iter().any(|&x| x < -tol || !x.is_finite()) {
            return Err(Error::invalid(format!("row {r} is not a simplex (sum {s})")));
        }
    }
    Ok(())
}

/// `Σ_m KL(d_m || softmax(logits_m))`.
pub fn soft_recon_kl(soft_targets: &Matrix, logits: &Matrix) -> Result<f64> {
    if soft_targets.shape() != logits.shape() {
        return Err(Error::Shape(format!(
            "soft targets {:?} vs logits {:?}",
            soft_targets.shape(),
            logits.shape()
        )));
    }
    check_simplex_rows(soft_targets, 1e-6)?;
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let l = g.constant(logits.clone());
    let loss = g.soft_target_kl(l, soft_targets);
    Ok(g.value(loss).item())
}

/// `-log softmax(logits)[gold]`.
pub fn cls_nll(logits: &[f64], gold: usize) -> Result<f64> {
    recon_nll(&Matrix::row_vector(logits.to_vec()), &[gold])
}

/// Bag-of-words loss: summed NLL of every non-special target token under one
/// position-free distribution.
pub fn bow_loss(logits: &[f64], targets: &[usize]) -> f64 {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let l = g.constant(Matrix::row_vector(logits.to_vec()));
    let content: Vec<usize> = bow_targets(targets);
    let loss = g.bag_of_words(l, &content);
    g.value(loss).item()
}

fn bow_targets(targets: &[usize]) -> Vec<usize> {
    targets.iter().copied().filter(|&t| !Vocab::is_special(t)).collect()
}

/// `Σ_i max(kl_i, threshold)`.
pub fn free_bits(kl_per_dim: &[f64], threshold: f64) -> f64 {
    kl_per_dim.iter().map(|&k| k.max(threshold)).sum()
}

/// Raw loss terms of one example; KL terms are per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct LossComponents {
    pub cls: f64,
    pub gen: f64,
    pub kl_c: Vec<f64>,
    pub kl_g: Vec<f64>,
    pub bow: f64,
}

/// The weighted objective; KL terms pass through [`free_bits`] before their
/// (annealed) weight is applied.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.lambda_c * c.cls
        + w.lambda_g * c.gen
        + w.lambda_kl_c * free_bits(&c.kl_c, w.kl_free_bits)
        + w.lambda_kl_g * free_bits(&c.kl_g, w.kl_free_bits)
        + w.lambda_bow * c.bow
}

/// What the decoder should reproduce for one training example.
#[derive(Clone, Copy, Debug)]
pub enum TextTarget<'a> {
    /// Hard tokens: NLL of `tokens + EOS`.
    Hard(&'a [usize]),
    /// Soft pseudo text: per-step distributions (rows include the final
    /// step), teacher-forced with the tokens sampled during generation.
    Soft { steps: &'a Matrix, context: &'a [usize] },
}

impl TextTarget<'_> {
    /// Content tokens shown to the encoder.
    pub fn encoder_tokens(&self) -> Vec<usize> {
        match self {
            TextTarget::Hard(t) => t.to_vec(),
            TextTarget::Soft { context, .. } => context.to_vec(),
        }
    }

    /// Decoder input: BOS followed by the context tokens.
    pub fn decoder_inputs(&self) -> Vec<usize> {
        let mut out = vec![BOS];
        match self {
            TextTarget::Hard(t) => out.extend_from_slice(t),
            TextTarget::Soft { context, .. } => out.extend_from_slice(context),
        }
        out
    }
}

/// Graph handles for every term of one example's objective.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveVars {
    pub total: Var,
    pub cls: Var,
    pub gen: Var,
    pub kl_c: Var,
    pub kl_g: Var,
    pub bow: Var,
}

impl ObjectiveVars {
    pub fn components(&self, g: &Graph<'_>) -> LossComponents {
        LossComponents {
            cls: g.value(self.cls).item(),
            gen: g.value(self.gen).item(),
            kl_c: g.value(self.kl_c).data().to_vec(),
            kl_g: g.value(self.kl_g).data().to_vec(),
            bow: g.value(self.bow).item(),
        }
    }
}

/// Build the full dual-VAE objective for one `(x, y)` pair with posterior
/// noise `eps`. Hard targets use NLL for the generation term, soft targets
/// use the summed KL to the stored distributions.
pub fn build_objective(
    g: &mut Graph<'_>,
    params: &ModelParams,
    target: TextTarget<'_>,
    label: usize,
    eps: &[f64],
    w: &LossWeights,
) -> Result<ObjectiveVars> {
    if eps.len() != params.config().d_latent {
        return Err(Error::Shape("noise width differs from latent width".into()));
    }
    let enc_tokens = target.encoder_tokens();
    let (h_x, _) = params.encode_graph(g, &enc_tokens)?;
    let h_y = params.label_graph(g, label)?;
    let q = params.posterior_graph(g, h_x, h_y);
    let p_gen = params.prior_gen_graph(g, h_y);
    let p_cls = params.prior_cls_graph(g, h_x);
    let z = params.reparameterize_graph(g, q, eps);

    let inputs = target.decoder_inputs();
    let logits = params.decoder_graph(g, z, &inputs)?;
    let gen = match target {
        TextTarget::Hard(tokens) => {
            let mut targets = tokens.to_vec();
            targets.push(EOS);
            g.cross_entropy(logits, &targets)
        }
        TextTarget::Soft { steps, .. } => {
            check_simplex_rows(steps, 1e-6)?;
            if steps.rows() != inputs.len() {
                return Err(Error::Shape("soft steps vs context length".into()));
            }
            g.soft_target_kl(logits, steps)
        }
    };
    let cls_logits = params.classifier_graph(g, z, None);
    let cls = g.cross_entropy(cls_logits, &[label]);
    let bow_logits = params.bow_graph(g, z);
    let bow_t = match target {
        TextTarget::Hard(t) => bow_targets(t),
        TextTarget::Soft { context, .. } => bow_targets(context),
    };
    let bow = g.bag_of_words(bow_logits, &bow_t);
    let kl_g = g.gaussian_kl(q.mu, q.log_sigma, p_gen.mu, p_gen.log_sigma);
    let kl_c = g.gaussian_kl(q.mu, q.log_sigma, p_cls.mu, p_cls.log_sigma);
    let fb_g = g.free_bits(kl_g, w.kl_free_bits);
    let fb_c = g.free_bits(kl_c, w.kl_free_bits);

    let terms = [
        (cls, w.lambda_c),
        (gen, w.lambda_g),
        (fb_c, w.lambda_kl_c),
        (fb_g, w.lambda_kl_g),
        (bow, w.lambda_bow),
    ];
    let mut total: Option<Var> = None;
    for (v, lambda) in terms {
        let s = g.scale(v, lambda);
        total = Some(match total {
            None => s,
            Some(t) => g.add(t, s),
        });
    }
    Ok(ObjectiveVars {
        total: total.expect("five terms"),
        cls,
        gen,
        kl_c,
        kl_g,
        bow,
    })
}

/// Loss and parameter gradients of one example.
pub fn objective_and_grad(
    params: &ModelParams,
    target: TextTarget<'_>,
    label: usize,
    eps: &[f64],
    w: &LossWeights,
) -> Result<(f64, ParamGrads)> {
    let mut g = params.graph();
    let vars = build_objective(&mut g, params, target, label, eps, w)?;
    let grads = g.backward(vars.total);
    let mut out = params.store().zero_grads();
    grads.accumulate_params(&g, &mut out, 1.0);
    Ok((g.value(vars.total).item(), out))
}

/// Which coordinates [`grad_check`] perturbs.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    Sample { count: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative error floor: gradients smaller than this are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compare analytic gradients with central differences
/// `(f(w + eps) - f(w - eps)) / 2 eps`.
///
/// The error at a coordinate is `|fd - an| / max(|fd|, |an|, GRAD_CHECK_FLOOR)`.
pub fn grad_check<F>(f: F, store: &ParamStore, eps: f64, coords: Coords) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, ParamGrads)>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step {eps} must be > 0")));
    }
    let (_, analytic) = f(store)?;
    let mut all: Vec<(usize, usize)> = Vec::new();
    for id in store.ids() {
        for i in 0..store.get(id).len() {
            all.push((id.index(), i));
        }
    }
    let chosen: Vec<(usize, usize)> = match coords {
        Coords::All => all,
        Coords::Sample { count, seed } => {
            let mut rng = rng::seeded(seed);
            (0..count.min(all.len()))
                .map(|_| all[(rng.uniform() * all.len() as f64) as usize % all.len()])
                .collect()
        }
    };
    let ids: Vec<_> = store.ids().collect();
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for (pi, i) in chosen {
        let id = ids[pi];
        let orig = store.get(id).data()[i];
        work.get_mut(id).data_mut()[i] = orig + eps;
        let (fp, _) = f(&work)?;
        work.get_mut(id).data_mut()[i] = orig - eps;
        let (fm, _) = f(&work)?;
        work.get_mut(id).data_mut()[i] = orig;
        let fd = (fp - fm) / (2.0 * eps);
        let an = analytic.get(id).data()[i];
        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(GRAD_CHECK_FLOOR);
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_param = store.name(id).to_string();
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Standard-normal noise row for the posterior sample.
pub fn draw_eps(dim: usize, rng: &mut impl Draw) -> Vec<f64> {
    (0..dim).map(|_| rng.standard_normal()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kl_identity_and_closed_form() {
        let q = LatentGaussian::new(vec![0.3, -1.0], vec![0.2, -0.5]).unwrap();
        assert_abs_diff_eq!(gaussian_kl(&q, &q).unwrap(), 0.0, epsilon = 1e-15);
        let a = LatentGaussian::new(vec![1.0], vec![0.0]).unwrap();
        let b = LatentGaussian::standard(1);
        assert_abs_diff_eq!(gaussian_kl(&a, &b).unwrap(), 0.5, epsilon = 1e-15);
        assert!(gaussian_kl(&a, &LatentGaussian::standard(2)).is_err());
    }

    #[test]
    fn nll_edge_cases() {
        // near-certain model
        let mut l = Matrix::filled(2, 4, -1e3);
        l.set(0, 1, 0.0);
        l.set(1, 2, 0.0);
        assert_abs_diff_eq!(recon_nll(&l, &[1, 2]).unwrap(), 0.0, epsilon = 1e-12);
        // uniform over 8 tokens, 3 tokens + EOS
        let u = Matrix::zeros(4, 8);
        assert_abs_diff_eq!(recon_nll(&u, &[4, 5, 6, EOS]).unwrap(), 4.0 * 8f64.ln(), epsilon = 1e-12);
        assert!(recon_nll(&u, &[]).is_err());
        assert!(recon_nll(&u, &[1, 2]).is_err());
    }

    #[test]
    fn masking_a_position_reduces_nll() {
        let l = Matrix::from_vec(2, 3, vec![0.5, 0.1, -0.3, 1.0, 2.0, 0.0]).unwrap();
        let full = recon_nll(&l, &[0, 2]).unwrap();
        let first = recon_nll(&Matrix::row_vector(l.row(0).to_vec()), &[0]).unwrap();
        assert!(first < full);
    }

    #[test]
    fn soft_kl_hand_case() {
        // two steps over three tokens
        let d = Matrix::from_vec(2, 3, vec![0.5, 0.5, 0.0, 0.2, 0.3, 0.5]).unwrap();
        let logits = Matrix::from_vec(2, 3, vec![0.0, 0.0, 0.0, 1.0, 0.0, -1.0]).unwrap();
        let mut expected = 0.0;
        for r in 0..2 {
            let z: f64 = logits.row(r).iter().map(|x| x.exp()).sum();
            for c in 0..3 {
                let p = logits.get(r, c).exp() / z;
                let dv = d.get(r, c);
                if dv > 0.0 {
                    expected += dv * (dv / p).ln();
                }
            }
        }
        assert_abs_diff_eq!(soft_recon_kl(&d, &logits).unwrap(), expected, epsilon = 1e-12);
        let bad = Matrix::from_vec(1, 3, vec![0.5, 0.4, 0.0]).unwrap();
        assert!(soft_recon_kl(&bad, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn soft_kl_zero_when_targets_match_model() {
        let logits = Matrix::from_vec(2, 3, vec![0.3, -1.0, 2.0, 0.0, 0.5, 0.1]).unwrap();
        let mut d = Matrix::zeros(2, 3);
        for r in 0..2 {
            d.row_mut(r).copy_from_slice(&crate::tensor::softmax(logits.row(r)));
        }
        assert_abs_diff_eq!(soft_recon_kl(&d, &logits).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cls_and_bow_hand_values() {
        assert_abs_diff_eq!(cls_nll(&[0.0; 4], 2).unwrap(), 4f64.ln(), epsilon = 1e-12);
        assert!(cls_nll(&[50.0, -50.0], 0).unwrap() < 1e-12);
        let u = [0.0; 8];
        assert_abs_diff_eq!(bow_loss(&u, &[4, 5, 6]), 3.0 * 8f64.ln(), epsilon = 1e-12);
        // specials ignored, order irrelevant
        assert_eq!(bow_loss(&u, &[BOS, 4, 5, 6, EOS]), bow_loss(&u, &[6, 4, 5]));
    }

    #[test]
    fn free_bits_cases() {
        assert_eq!(free_bits(&[0.5, 1.0], 0.05), 1.5);
        assert_eq!(free_bits(&[0.01, 0.0, 0.02, 0.04], 0.05), 4.0 * 0.05);
        assert_abs_diff_eq!(free_bits(&[0.01, 0.3, 0.06], 0.05), 0.05 + 0.3 + 0.06, epsilon = 1e-15);
    }

    #[test]
    fn anneal_schedule_values() {
        let s = AnnealSchedule::new(100);
        assert_eq!(anneal_weight(&s, 40, 0, KlTerm::Generation), 0.5);
        assert_eq!(anneal_weight(&s, 140, 1, KlTerm::Classification), 0.5);
        for step in 80..100 {
            assert_eq!(anneal_weight(&s, step, 0, KlTerm::Generation), 1.0);
        }
        assert_eq!(anneal_weight(&s, 0, 0, KlTerm::Generation), 0.0);
        assert_eq!(anneal_weight(&s, 0, 5, KlTerm::Classification), 1.0);
        assert_eq!(anneal_weight(&s, 0, 5, KlTerm::Generation), 0.0);
        assert_eq!(anneal_weight(&s, 3, 7, KlTerm::Generation), 1.0);
    }

    #[test]
    fn total_loss_preset_arithmetic() {
        let unit = LossComponents {
            cls: 1.0,
            gen: 1.0,
            kl_c: vec![1.0],
            kl_g: vec![1.0],
            bow: 1.0,
        };
        let w = LossWeights::sentiment();
        assert_abs_diff_eq!(total_loss(&unit, &w), 13.2, epsilon = 1e-12);
        let zero = LossComponents {
            cls: 0.0,
            gen: 0.0,
            kl_c: vec![],
            kl_g: vec![],
            bow: 0.0,
        };
        assert_eq!(total_loss(&zero, &w), 0.0);
    }

    #[test]
    fn grad_check_quadratic_and_validation() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::row_vector(vec![0.3, -1.2, 2.0]));
        let f = |s: &ParamStore| -> Result<(f64, ParamGrads)> {
            let mut g = Graph::new(s);
            let w = g.param(id);
            let sq = g.mul(w, w);
            let l = g.sum(sq);
            let grads = g.backward(l);
            let mut out = s.zero_grads();
            grads.accumulate_params(&g, &mut out, 1.0);
            Ok((g.value(l).item(), out))
        };
        let r = grad_check(f, &store, 1e-4, Coords::All).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.checked, 3);
        assert!(grad_check(f, &store, 0.0, Coords::All).is_err());
    }
}
