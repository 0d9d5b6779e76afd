//! The shared-parameter dual VAE.
//!
//! One stack of transformer blocks serves as both encoder (bidirectional
//! attention, no latent) and decoder (causal attention, latent fused into
//! every layer's attention output). Around it sit the label embedding, three
//! Gaussian heads (posterior `Q(z|x,y)`, generation prior `P(z|y)`,
//! classification prior `P(z|x)`), the classifier `P(y|z)`, and the
//! bag-of-words head. Output logits are tied to the token embedding.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::corpus::{frame, BOS};
use crate::error::{Error, Result};
use crate::rng::{self, Draw};
use crate::tensor::Matrix;

pub const LOG_SIGMA_MIN: f64 = -8.0;
pub const LOG_SIGMA_MAX: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub num_labels: usize,
    pub d_model: usize,
    pub d_latent: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Longest framed sequence (BOS + tokens + EOS) the model accepts.
    pub max_len: usize,
}

impl ModelConfig {
    /// Desk-scale defaults.
    pub fn new(vocab_size: usize, num_labels: usize) -> Self {
        ModelConfig {
            vocab_size,
            num_labels,
            d_model: 64,
            d_latent: 16,
            layers: 2,
            heads: 2,
            d_ff: 128,
            max_len: 64,
        }
    }

    /// The smallest configuration used for gradient checks.
    pub fn tiny(vocab_size: usize, num_labels: usize) -> Self {
        ModelConfig {
            vocab_size,
            num_labels,
            d_model: 8,
            d_latent: 4,
            layers: 1,
            heads: 1,
            d_ff: 16,
            max_len: 16,
        }
    }

    /// Latent width used for two-class tasks at full scale.
    pub fn with_full_scale_latent(mut self) -> Self {
        self.d_latent = if self.num_labels > 2 { 256 } else { 128 };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.vocab_size < 8 {
            return bad(format!("vocab_size {} < 8", self.vocab_size));
        }
        if self.num_labels < 2 {
            return bad(format!("num_labels {} < 2", self.num_labels));
        }
        if self.d_model == 0 || self.d_latent == 0 || self.layers == 0 || self.d_ff == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad(format!(
                "heads {} must divide d_model {}",
                self.heads, self.d_model
            ));
        }
        if self.max_len < 3 {
            return bad(format!("max_len {} < 3", self.max_len));
        }
        Ok(())
    }
}

/// Diagonal Gaussian over the latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != log_sigma.len() {
            return Err(Error::Shape(format!(
                "mu has {} dims, log_sigma {}",
                mu.len(),
                log_sigma.len()
            )));
        }
        let log_sigma = log_sigma
            .into_iter()
            .map(|l| l.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX))
            .collect();
        Ok(LatentGaussian { mu, log_sigma })
    }

    pub fn standard(dim: usize) -> Self {
        LatentGaussian {
            mu: vec![0.0; dim],
            log_sigma: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    /// `log N(z; mu, sigma²)`.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.mu
            .iter()
            .zip(&self.log_sigma)
            .zip(z)
            .map(|((m, ls), x)| {
                let u = (x - m) * (-ls).exp();
                -0.5 * u * u - ls - 0.5 * ln_2pi
            })
            .sum()
    }

    /// `z = mu + sigma ⊙ eps`, `eps ~ N(0, I)`.
    pub fn reparameterize(&self, rng: &mut impl Draw) -> Vec<f64> {
        let eps: Vec<f64> = (0..self.dim()).map(|_| rng.standard_normal()).collect();
        self.reparameterize_with(&eps)
    }

    pub fn reparameterize_with(&self, eps: &[f64]) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.log_sigma)
            .zip(eps)
            .map(|((m, ls), e)| m + ls.exp() * e)
            .collect()
    }
}

/// Graph handles for a Gaussian head output.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mu: Var,
    pub log_sigma: Var,
}

impl GaussianVars {
    pub fn read(&self, g: &Graph<'_>) -> LatentGaussian {
        LatentGaussian {
            mu: g.value(self.mu).data().to_vec(),
            log_sigma: g.value(self.log_sigma).data().to_vec(),
        }
    }
}

/// Encoder output for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedState {
    /// First-position state.
    pub h_x: Vec<f64>,
    /// One row per framed position.
    pub states: Matrix,
}

#[derive(Clone, Copy, Debug)]
struct BlockIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bo: ParamId,
    fuse_w: ParamId,
    fuse_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct MlpIds {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Clone, Debug)]
struct Layout {
    tok_emb: ParamId,
    out_bias: ParamId,
    label_emb: ParamId,
    blocks: Vec<BlockIds>,
    lnf_g: ParamId,
    lnf_b: ParamId,
    posterior: MlpIds,
    prior_gen: MlpIds,
    prior_cls: MlpIds,
    classifier: MlpIds,
    bow_w: ParamId,
    bow_b: ParamId,
}

/// All trainable weights plus the fixed positional table.
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: ModelConfig,
    store: ParamStore,
    layout: Layout,
    positions: Matrix,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.store == other.store
    }
}

fn sinusoidal(len: usize, d: usize) -> Matrix {
    let mut m = Matrix::zeros(len, d);
    for pos in 0..len {
        for i in 0..d {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 * rate;
            m.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

impl ModelParams {
    /// Random initialisation from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        Self::build(config, &mut |init, r, c| match init {
            Init::Zeros => Matrix::zeros(r, c),
            Init::Ones => Matrix::filled(r, c, 1.0),
            Init::Normal(std) => {
                let data = (0..r * c).map(|_| std * rng.standard_normal()).collect();
                Matrix::from_vec(r, c, data).unwrap()
            }
        })
    }

    /// All trainable weights zero (layer-norm gains included).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        Self::build(config, &mut |_, r, c| Matrix::zeros(r, c))
    }

    fn build(
        config: ModelConfig,
        make: &mut dyn FnMut(Init, usize, usize) -> Matrix,
    ) -> Result<Self> {
        config.validate()?;
        let ModelConfig {
            vocab_size: v,
            num_labels: k,
            d_model: d,
            d_latent: dz,
            d_ff: ff,
            ..
        } = config;
        let mut s = ParamStore::new();
        let xavier = |fan_in: usize| Init::Normal(1.0 / (fan_in as f64).sqrt());

        let tok_emb = s.add("tok_emb", make(xavier(d), v, d));
        let out_bias = s.add("out_bias", make(Init::Zeros, 1, v));
        let label_emb = s.add("label_emb", make(Init::Normal(1.0), k, d));
        let mut blocks = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |n: &str| format!("block{l}.{n}");
            blocks.push(BlockIds {
                ln1_g: s.add(p("ln1_g"), make(Init::Ones, 1, d)),
                ln1_b: s.add(p("ln1_b"), make(Init::Zeros, 1, d)),
                wq: s.add(p("wq"), make(xavier(d), d, d)),
                wk: s.add(p("wk"), make(xavier(d), d, d)),
                wv: s.add(p("wv"), make(xavier(d), d, d)),
                wo: s.add(p("wo"), make(xavier(d), d, d)),
                bo: s.add(p("bo"), make(Init::Zeros, 1, d)),
                fuse_w: s.add(p("fuse_w"), make(xavier(d + dz), d + dz, d)),
                fuse_b: s.add(p("fuse_b"), make(Init::Zeros, 1, d)),
                ln2_g: s.add(p("ln2_g"), make(Init::Ones, 1, d)),
                ln2_b: s.add(p("ln2_b"), make(Init::Zeros, 1, d)),
                ff1_w: s.add(p("ff1_w"), make(xavier(d), d, ff)),
                ff1_b: s.add(p("ff1_b"), make(Init::Zeros, 1, ff)),
                ff2_w: s.add(p("ff2_w"), make(xavier(ff), ff, d)),
                ff2_b: s.add(p("ff2_b"), make(Init::Zeros, 1, d)),
            });
        }
        let lnf_g = s.add("lnf_g", make(Init::Ones, 1, d));
        let lnf_b = s.add("lnf_b", make(Init::Zeros, 1, d));
        let mut mlp = |name: &str, inp: usize, out: usize, last_std: f64| MlpIds {
            w1: s.add(format!("{name}.w1"), make(xavier(inp), inp, d)),
            b1: s.add(format!("{name}.b1"), make(Init::Zeros, 1, d)),
            w2: s.add(format!("{name}.w2"), make(Init::Normal(last_std), d, out)),
            b2: s.add(format!("{name}.b2"), make(Init::Zeros, 1, out)),
        };
        let head_std = 0.1 / (d as f64).sqrt();
        let posterior = mlp("posterior", 2 * d, 2 * dz, head_std);
        let prior_gen = mlp("prior_gen", d, 2 * dz, head_std);
        let prior_cls = mlp("prior_cls", d, 2 * dz, head_std);
        let classifier = mlp("classifier", dz, k, 1.0 / (d as f64).sqrt());
        let bow_w = s.add("bow.w", make(xavier(dz), dz, v));
        let bow_b = s.add("bow.b", make(Init::Zeros, 1, v));

        Ok(ModelParams {
            config,
            store: s,
            layout: Layout {
                tok_emb,
                out_bias,
                label_emb,
                blocks,
                lnf_g,
                lnf_b,
                posterior,
                prior_gen,
                prior_cls,
                classifier,
                bow_w,
                bow_b,
            },
            positions: sinusoidal(config.max_len, config.d_model),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn graph(&self) -> Graph<'_> {
        Graph::new(&self.store)
    }

    /// Ids of the transformer-block weights, shared by encoder and decoder.
    pub fn block_param_ids(&self) -> Vec<ParamId> {
        self.layout
            .blocks
            .iter()
            .flat_map(|b| {
                [
                    b.ln1_g, b.ln1_b, b.wq, b.wk, b.wv, b.wo, b.bo, b.ln2_g, b.ln2_b, b.ff1_w,
                    b.ff1_b, b.ff2_w, b.ff2_b,
                ]
            })
            .collect()
    }

    pub fn label_embedding_id(&self) -> ParamId {
        self.layout.label_emb
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if let Some(t) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::invalid(format!("token id {t} outside vocabulary")));
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.config.num_labels {
            return Err(Error::invalid(format!("label {label} out of range")));
        }
        Ok(())
    }

    fn check_len(&self, framed_len: usize) -> Result<()> {
        if framed_len > self.config.max_len {
            return Err(Error::invalid(format!(
                "sequence of {framed_len} framed tokens exceeds context {}",
                self.config.max_len
            )));
        }
        Ok(())
    }

    // ---- graph builders ------------------------------------------------

    fn embed(&self, g: &mut Graph<'_>, ids: &[usize]) -> Var {
        let table = g.param(self.layout.tok_emb);
        let x = g.gather(table, ids);
        let mut pos = Matrix::zeros(ids.len(), self.config.d_model);
        for i in 0..ids.len() {
            pos.row_mut(i).copy_from_slice(self.positions.row(i));
        }
        let pos = g.constant(pos);
        g.add(x, pos)
    }

    fn linear(&self, g: &mut Graph<'_>, x: Var, w: ParamId, b: ParamId) -> Var {
        let w = g.param(w);
        let b = g.param(b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    fn block(&self, g: &mut Graph<'_>, b: &BlockIds, x: Var, latent: Option<Var>, causal: bool) -> Var {
        let (g1, b1) = (g.param(b.ln1_g), g.param(b.ln1_b));
        let h = g.layer_norm(x, g1, b1);
        let (wq, wk, wv) = (g.param(b.wq), g.param(b.wk), g.param(b.wv));
        let q = g.matmul(h, wq);
        let k = g.matmul(h, wk);
        let v = g.matmul(h, wv);
        let a = g.attention(q, k, v, self.config.heads, causal);
        let mut a = self.linear(g, a, b.wo, b.bo);
        if let Some(zr) = latent {
            let cat = g.concat_cols(a, zr);
            a = self.linear(g, cat, b.fuse_w, b.fuse_b);
        }
        let x = g.add(x, a);
        let (g2, b2) = (g.param(b.ln2_g), g.param(b.ln2_b));
        let h = g.layer_norm(x, g2, b2);
        let f = self.linear(g, h, b.ff1_w, b.ff1_b);
        let f = g.gelu(f);
        let f = self.linear(g, f, b.ff2_w, b.ff2_b);
        g.add(x, f)
    }

    fn final_norm(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let (gf, bf) = (g.param(self.layout.lnf_g), g.param(self.layout.lnf_b));
        g.layer_norm(x, gf, bf)
    }

    /// Encode content tokens; returns (`h_x` 1×d, states T×d).
    pub fn encode_graph(&self, g: &mut Graph<'_>, tokens: &[usize]) -> Result<(Var, Var)> {
        self.check_tokens(tokens)?;
        let framed = frame(tokens);
        self.check_len(framed.len())?;
        let mut x = self.embed(g, &framed);
        for b in &self.layout.blocks {
            x = self.block(g, b, x, None, false);
        }
        let states = self.final_norm(g, x);
        let h_x = g.row(states, 0);
        Ok((h_x, states))
    }

    pub fn label_graph(&self, g: &mut Graph<'_>, label: usize) -> Result<Var> {
        self.check_label(label)?;
        let table = g.param(self.layout.label_emb);
        Ok(g.gather(table, &[label]))
    }

    fn mlp(&self, g: &mut Graph<'_>, ids: &MlpIds, x: Var, dropout: Option<&Matrix>) -> Var {
        let h = self.linear(g, x, ids.w1, ids.b1);
        let mut h = g.tanh(h);
        if let Some(mask) = dropout {
            let m = g.constant(mask.clone());
            h = g.mul(h, m);
        }
        self.linear(g, h, ids.w2, ids.b2)
    }

    fn gaussian_head(&self, g: &mut Graph<'_>, ids: &MlpIds, x: Var) -> GaussianVars {
        let out = self.mlp(g, ids, x, None);
        let dz = self.config.d_latent;
        let mu = g.slice_cols(out, 0, dz);
        let ls = g.slice_cols(out, dz, dz);
        let log_sigma = g.clamp(ls, LOG_SIGMA_MIN, LOG_SIGMA_MAX);
        GaussianVars { mu, log_sigma }
    }

    /// `Q(z | x, y)` from `[h_x, h_y]`.
    pub fn posterior_graph(&self, g: &mut Graph<'_>, h_x: Var, h_y: Var) -> GaussianVars {
        let cat = g.concat_cols(h_x, h_y);
        self.gaussian_head(g, &self.layout.posterior, cat)
    }

    /// `P(z | y)` from `h_y`.
    pub fn prior_gen_graph(&self, g: &mut Graph<'_>, h_y: Var) -> GaussianVars {
        self.gaussian_head(g, &self.layout.prior_gen, h_y)
    }

    /// `P(z | x)` from `h_x`.
    pub fn prior_cls_graph(&self, g: &mut Graph<'_>, h_x: Var) -> GaussianVars {
        self.gaussian_head(g, &self.layout.prior_cls, h_x)
    }

    /// `z = mu + exp(log_sigma) ⊙ eps` with a fixed noise row.
    pub fn reparameterize_graph(&self, g: &mut Graph<'_>, q: GaussianVars, eps: &[f64]) -> Var {
        let e = g.constant(Matrix::row_vector(eps.to_vec()));
        let sigma = g.exp(q.log_sigma);
        let noise = g.mul(sigma, e);
        g.add(q.mu, noise)
    }

    /// Decoder logits (T×V) for every position of `inputs`, which must start
    /// with BOS. Row `t` predicts token `t + 1`.
    pub fn decoder_graph(&self, g: &mut Graph<'_>, z: Var, inputs: &[usize]) -> Result<Var> {
        self.check_tokens(inputs)?;
        if inputs.first() != Some(&BOS) {
            return Err(Error::invalid("decoder input must start with BOS"));
        }
        self.check_len(inputs.len())?;
        let mut x = self.embed(g, inputs);
        let zr = g.repeat_rows(z, inputs.len());
        for b in &self.layout.blocks {
            x = self.block(g, b, x, Some(zr), true);
        }
        let h = self.final_norm(g, x);
        let emb = g.param(self.layout.tok_emb);
        let logits = g.matmul_bt(h, emb);
        let bias = g.param(self.layout.out_bias);
        Ok(g.add_row(logits, bias))
    }

    /// Classifier logits (1×K); `dropout` multiplies the hidden layer.
    pub fn classifier_graph(&self, g: &mut Graph<'_>, z: Var, dropout: Option<&Matrix>) -> Var {
        self.mlp(g, &self.layout.classifier, z, dropout)
    }

    pub fn bow_graph(&self, g: &mut Graph<'_>, z: Var) -> Var {
        self.linear(g, z, self.layout.bow_w, self.layout.bow_b)
    }

    // ---- value-level API -----------------------------------------------

    pub fn encode(&self, tokens: &[usize]) -> Result<EncodedState> {
        let mut g = self.graph();
        let (h, s) = self.encode_graph(&mut g, tokens)?;
        Ok(EncodedState {
            h_x: g.value(h).data().to_vec(),
            states: g.value(s).clone(),
        })
    }

    pub fn posterior(&self, tokens: &[usize], label: usize) -> Result<LatentGaussian> {
        let mut g = self.graph();
        let (h_x, _) = self.encode_graph(&mut g, tokens)?;
        let h_y = self.label_graph(&mut g, label)?;
        Ok(self.posterior_graph(&mut g, h_x, h_y).read(&g))
    }

    pub fn prior_gen(&self, label: usize) -> Result<LatentGaussian> {
        let mut g = self.graph();
        let h_y = self.label_graph(&mut g, label)?;
        Ok(self.prior_gen_graph(&mut g, h_y).read(&g))
    }

    pub fn prior_cls(&self, tokens: &[usize]) -> Result<LatentGaussian> {
        let mut g = self.graph();
        let (h_x, _) = self.encode_graph(&mut g, tokens)?;
        Ok(self.prior_cls_graph(&mut g, h_x).read(&g))
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.config.d_latent {
            return Err(Error::Shape(format!(
                "latent has {} dims, model expects {}",
                z.len(),
                self.config.d_latent
            )));
        }
        Ok(())
    }

    /// Logits for every position of a BOS-initial prefix (T×V).
    pub fn decode_logits(&self, z: &[f64], prefix: &[usize]) -> Result<Matrix> {
        self.check_latent(z)?;
        let mut g = self.graph();
        let zv = g.constant(Matrix::row_vector(z.to_vec()));
        let l = self.decoder_graph(&mut g, zv, prefix)?;
        Ok(g.value(l).clone())
    }

    /// Next-token logits after a BOS-initial prefix.
    pub fn decode_step(&self, z: &[f64], prefix: &[usize]) -> Result<Vec<f64>> {
        let all = self.decode_logits(z, prefix)?;
        Ok(all.row(all.rows() - 1).to_vec())
    }

    /// Classifier logits `P(y|z)` before the softmax.
    pub fn classify(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let mut g = self.graph();
        let zv = g.constant(Matrix::row_vector(z.to_vec()));
        let l = self.classifier_graph(&mut g, zv, None);
        Ok(g.value(l).data().to_vec())
    }

    /// Classifier logits with inverted dropout on the hidden layer.
    pub fn classify_dropout(&self, z: &[f64], p: f64, rng: &mut impl Draw) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.config.d_model)
            .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = Matrix::row_vector(mask);
        let mut g = self.graph();
        let zv = g.constant(Matrix::row_vector(z.to_vec()));
        let l = self.classifier_graph(&mut g, zv, Some(&mask));
        Ok(g.value(l).data().to_vec())
    }

    pub fn bow_logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let mut g = self.graph();
        let zv = g.constant(Matrix::row_vector(z.to_vec()));
        let l = self.bow_graph(&mut g, zv);
        Ok(g.value(l).data().to_vec())
    }

    // ---- checkpoints ----------------------------------------------------

    /// Text checkpoint. Layout:
    ///
    /// ```text
    /// dunst-checkpoint 1
    /// config vocab_size=.. num_labels=.. d_model=.. d_latent=.. layers=.. heads=.. d_ff=.. max_len=..
    /// tensor <name> <rows> <cols>
    /// <one line per row, values in shortest round-trip decimal form>
    /// ...
    /// end
    /// ```
    pub fn to_checkpoint_string(&self) -> String {
        let c = &self.config;
        let mut out = String::from("dunst-checkpoint 1\n");
        let _ = writeln!(
            out,
            "config vocab_size={} num_labels={} d_model={} d_latent={} layers={} heads={} d_ff={} max_len={}",
            c.vocab_size, c.num_labels, c.d_model, c.d_latent, c.layers, c.heads, c.d_ff, c.max_len
        );
        for (name, t) in self.store.iter() {
            let _ = writeln!(out, "tensor {name} {} {}", t.rows(), t.cols());
            for r in 0..t.rows() {
                let row: Vec<String> = t.row(r).iter().map(|x| format!("{x:?}")).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_checkpoint_str(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, "dunst-checkpoint 1")) => {}
            _ => return Err(err(1, "not a version-1 checkpoint".into())),
        }
        let (ln, cfg) = lines.next().ok_or_else(|| err(2, "missing config".into()))?;
        let mut fields = std::collections::HashMap::new();
        let mut parts = cfg.split_whitespace();
        if parts.next() != Some("config") {
            return Err(err(ln, "expected config line".into()));
        }
        for kv in parts {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| err(ln, format!("bad field {kv:?}")))?;
            let v: usize = v.parse().map_err(|_| err(ln, format!("bad value {kv:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| err(ln, format!("missing config field {k}")))
        };
        let config = ModelConfig {
            vocab_size: get("vocab_size")?,
            num_labels: get("num_labels")?,
            d_model: get("d_model")?,
            d_latent: get("d_latent")?,
            layers: get("layers")?,
            heads: get("heads")?,
            d_ff: get("d_ff")?,
            max_len: get("max_len")?,
        };
        let mut params = ModelParams::zeros(config)?;
        let ids: Vec<ParamId> = params.store.ids().collect();
        for id in ids {
            let expected = params.store.name(id).to_string();
            let (ln, header) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing tensor {expected}")))?;
            let h: Vec<&str> = header.split_whitespace().collect();
            let shape = params.store.get(id).shape();
            if h.len() != 4 || h[0] != "tensor" || h[1] != expected {
                return Err(err(ln, format!("expected tensor {expected}")));
            }
            let rows: usize = h[2].parse().map_err(|_| err(ln, "bad rows".into()))?;
            let cols: usize = h[3].parse().map_err(|_| err(ln, "bad cols".into()))?;
            if (rows, cols) != shape {
                return Err(err(
                    ln,
                    format!("tensor {expected} is {rows}x{cols}, expected {}x{}", shape.0, shape.1),
                ));
            }
            let t = params.store.get_mut(id);
            for r in 0..rows {
                let (ln, row) = lines
                    .next()
                    .ok_or_else(|| err(0, format!("truncated tensor {expected}")))?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|x| x.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(ln, format!("bad number: {e}")))?;
                if vals.len() != cols {
                    return Err(err(ln, format!("expected {cols} values, got {}", vals.len())));
                }
                t.row_mut(r).copy_from_slice(&vals);
            }
        }
        match lines.next() {
            Some((_, "end")) => Ok(params),
            Some((ln, _)) => Err(err(ln, "expected `end`".into())),
            None => Err(err(0, "missing `end`".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text, path)
    }
}
