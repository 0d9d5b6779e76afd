//! A small reverse-mode tape over [`Matrix`] values.
//!
//! A [`Graph`] borrows a [`ParamStore`]; parameter leaves read straight from
//! the store, so building a graph never copies weights. Calling
//! [`Graph::backward`] on a 1×1 node returns gradients for every node, and
//! [`Gradients::accumulate_params`] folds the parameter part into a
//! [`ParamGrads`] buffer.

use crate::tensor::{log_softmax_into, matmul_acc, matmul_at_acc, matmul_bt_acc, Matrix};

/// Named, shape-fixed parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            grads: self
                .tensors
                .iter()
                .map(|t| Matrix::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gradient buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Matrix>,
}

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn as_slice(&self) -> &[Matrix] {
        &self.grads
    }

    pub fn as_mut_slice(&mut self) -> &mut [Matrix] {
        &mut self.grads
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.scale_assign(s);
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Param(ParamId),
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Gelu(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    RepeatRows(Var),
    Row(Var, usize),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<Matrix>,
    },
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
    SoftTargetKl {
        logits: Var,
        targets: Matrix,
        probs: Matrix,
    },
    BagOfWords {
        logits: Var,
        counts: Vec<f64>,
        probs: Matrix,
    },
    GaussianKl {
        mu_q: Var,
        ls_q: Var,
        mu_p: Var,
        ls_p: Var,
    },
    FreeBits(Var, f64),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Matrix {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Matrix::default(), Op::Param(id), true)
    }

    /// A leaf that receives a gradient (useful for probing inputs).
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.rows(), "matmul inner dims");
        let mut out = Matrix::zeros(av.rows(), bv.cols());
        matmul_acc(av, bv, &mut out);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.cols(), "matmul_bt inner dims");
        let mut out = Matrix::zeros(av.rows(), bv.rows());
        matmul_bt_acc(av, bv, &mut out);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMulBt(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), self.value(b).shape(), "add shapes");
        out.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    /// Add a 1×n row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut out = self.value(a).clone();
        let r = self.value(row);
        assert_eq!((1, out.cols()), r.shape(), "add_row shapes");
        for i in 0..out.rows() {
            for (o, x) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += x;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::AddRow(a, row), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shapes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(av.rows(), av.cols(), data).unwrap();
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        let ng = self.ng(a);
        self.push(out, Op::Gelu(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    /// Elementwise clamp; gradient passes only inside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(out, Op::Clamp(a, lo, hi), ng)
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (both 1×n).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let r = xv.row(i);
            let mean = r.iter().sum::<f64>() / cols as f64;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            let xh = xhat.row_mut(i);
            for j in 0..cols {
                xh[j] = (r[j] - mean) * inv;
            }
            let o = out.row_mut(i);
            for j in 0..cols {
                o[j] = g[j] * xhat.get(i, j) + b[j];
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        )
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let cols = t.cols();
        let mut out = Matrix::zeros(ids.len(), cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        let ng = self.ng(table);
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), bv.rows(), "concat rows");
        let (rows, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut out = Matrix::zeros(rows, ca + cb);
        for i in 0..rows {
            out.row_mut(i)[..ca].copy_from_slice(av.row(i));
            out.row_mut(i)[ca..].copy_from_slice(bv.row(i));
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::ConcatCols(a, b), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols(), "slice_cols out of range");
        let mut out = Matrix::zeros(av.rows(), len);
        for i in 0..av.rows() {
            out.row_mut(i).copy_from_slice(&av.row(i)[start..start + len]);
        }
        let ng = self.ng(a);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    /// Broadcast a 1×n row to `times` rows.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), 1, "repeat_rows expects a row");
        let mut out = Matrix::zeros(times, av.cols());
        for i in 0..times {
            out.row_mut(i).copy_from_slice(av.data());
        }
        let ng = self.ng(a);
        self.push(out, Op::RepeatRows(a), ng)
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let out = Matrix::row_vector(self.value(a).row(i).to_vec());
        let ng = self.ng(a);
        self.push(out, Op::Row(a, i), ng)
    }

    /// Multi-head scaled dot-product attention over `T×d` inputs.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (t, d) = qv.shape();
        assert_eq!(d % heads, 0, "heads must divide width");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Matrix::zeros(t, d);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let off = h * dh;
            let mut p = Matrix::zeros(t, t);
            for i in 0..t {
                let qi = &qv.row(i)[off..off + dh];
                let upto = if causal { i + 1 } else { t };
                let row = p.row_mut(i);
                let mut max = f64::NEG_INFINITY;
                for j in 0..upto {
                    let kj = &kv.row(j)[off..off + dh];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    row[j] = s;
                    max = max.max(s);
                }
                let mut z = 0.0;
                for x in row[..upto].iter_mut() {
                    *x = (*x - max).exp();
                    z += *x;
                }
                for x in row[..upto].iter_mut() {
                    *x /= z;
                }
                for x in row[upto..].iter_mut() {
                    *x = 0.0;
                }
            }
            for i in 0..t {
                for j in 0..t {
                    let pij = p.get(i, j);
                    if pij == 0.0 {
                        continue;
                    }
                    let vj = &vv.row(j)[off..off + dh];
                    let o = &mut out.row_mut(i)[off..off + dh];
                    for (oo, x) in o.iter_mut().zip(vj) {
                        *oo += pij * x;
                    }
                }
            }
            probs.push(p);
        }
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            ng,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::Sum(a), ng)
    }

    /// Sum over rows of `-log softmax(logits[r])[targets[r]]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "cross_entropy rows");
        let mut probs = Matrix::zeros(lv.rows(), lv.cols());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let lp = probs.row_mut(r);
            log_softmax_into(lv.row(r), lp);
            let row_loss = -lp[t];
            total += row_loss;
            for x in lp.iter_mut() {
                *x = x.exp();
            }
        }
        let ng = self.ng(logits);
        self.push(
            Matrix::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        )
    }

    /// Sum over rows of `KL(targets[r] || softmax(logits[r]))`.
    pub fn soft_target_kl(&mut self, logits: Var, targets: &Matrix) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.shape(), targets.shape(), "soft_target_kl shapes");
        let mut probs = Matrix::zeros(lv.rows(), lv.cols());
        let mut total = 0.0;
        for r in 0..lv.rows() {
            let lp = probs.row_mut(r);
            log_softmax_into(lv.row(r), lp);
            let mut row_loss = 0.0;
            for (&d, &l) in targets.row(r).iter().zip(lp.iter()) {
                if d > 0.0 {
                    row_loss += d * (d.ln() - l);
                }
            }
            total += row_loss;
            for x in lp.iter_mut() {
                *x = x.exp();
            }
        }
        let ng = self.ng(logits);
        self.push(
            Matrix::scalar(total),
            Op::SoftTargetKl {
                logits,
                targets: targets.clone(),
                probs,
            },
            ng,
        )
    }

    /// Position-free bag-of-words NLL of `targets` under a single 1×V logit row.
    pub fn bag_of_words(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), 1, "bag_of_words expects a row");
        let mut lp = vec![0.0; lv.cols()];
        log_softmax_into(lv.data(), &mut lp);
        let mut counts = vec![0.0; lv.cols()];
        let mut total = 0.0;
        for &t in targets {
            counts[t] += 1.0;
            total -= lp[t];
        }
        let probs = Matrix::row_vector(lp.iter().map(|x| x.exp()).collect());
        let ng = self.ng(logits);
        self.push(
            Matrix::scalar(total),
            Op::BagOfWords {
                logits,
                counts,
                probs,
            },
            ng,
        )
    }

    /// Per-dimension `KL(N(mu_q, e^{2 ls_q}) || N(mu_p, e^{2 ls_p}))`, a 1×d row.
    pub fn gaussian_kl(&mut self, mu_q: Var, ls_q: Var, mu_p: Var, ls_p: Var) -> Var {
        let (mq, lq, mp, lp) = (
            self.value(mu_q),
            self.value(ls_q),
            self.value(mu_p),
            self.value(ls_p),
        );
        assert_eq!(mq.shape(), mp.shape(), "gaussian_kl shapes");
        let data = (0..mq.len())
            .map(|i| {
                gaussian_kl_1d(mq.data()[i], lq.data()[i], mp.data()[i], lp.data()[i])
            })
            .collect();
        let ng = self.ng(mu_q) || self.ng(ls_q) || self.ng(mu_p) || self.ng(ls_p);
        self.push(
            Matrix::row_vector(data),
            Op::GaussianKl {
                mu_q,
                ls_q,
                mu_p,
                ls_p,
            },
            ng,
        )
    }

    /// `Σ max(x_i, threshold)`; clamped entries get no gradient.
    pub fn free_bits(&mut self, x: Var, threshold: f64) -> Var {
        let total = self.value(x).data().iter().map(|&v| v.max(threshold)).sum();
        let ng = self.ng(x);
        self.push(Matrix::scalar(total), Op::FreeBits(x, threshold), ng)
    }

    /// Gradients of the 1×1 node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let this = Var(idx);
        match &node.op {
            Op::Param(_) | Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.ng(a) {
                    let bv = self.value(b);
                    let slot = slot(grads, a, self.value(a));
                    matmul_bt_acc(g, bv, slot);
                }
                if self.ng(b) {
                    let av = self.value(a);
                    let slot = slot(grads, b, self.value(b));
                    matmul_at_acc(av, g, slot);
                }
            }
            Op::MatMulBt(a, b) => {
                let (a, b) = (*a, *b);
                if self.ng(a) {
                    let bv = self.value(b);
                    let slot = slot(grads, a, self.value(a));
                    matmul_acc(g, bv, slot);
                }
                if self.ng(b) {
                    let av = self.value(a);
                    let slot = slot(grads, b, self.value(b));
                    matmul_at_acc(g, av, slot);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.ng(v) {
                        slot(grads, v, self.value(v)).add_assign(g);
                    }
                }
            }
            Op::AddRow(a, row) => {
                if self.ng(*a) {
                    slot(grads, *a, self.value(*a)).add_assign(g);
                }
                if self.ng(*row) {
                    let s = slot(grads, *row, self.value(*row));
                    for i in 0..g.rows() {
                        for (o, x) in s.data_mut().iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.ng(a) {
                    let bv = self.value(b);
                    let s = slot(grads, a, self.value(a));
                    for ((o, x), y) in s.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += x * y;
                    }
                }
                if self.ng(b) {
                    let av = self.value(a);
                    let s = slot(grads, b, self.value(b));
                    for ((o, x), y) in s.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += x * y;
                    }
                }
            }
            Op::Scale(a, c) => {
                let s = slot(grads, *a, self.value(*a));
                for (o, x) in s.data_mut().iter_mut().zip(g.data()) {
                    *o += c * x;
                }
            }
            Op::Tanh(a) => {
                let y = self.value(this);
                let s = slot(grads, *a, self.value(*a));
                for ((o, x), yv) in s.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *o += x * (1.0 - yv * yv);
                }
            }
            Op::Gelu(a) => {
                let xin = self.value(*a);
                let s = slot(grads, *a, xin);
                for ((o, x), xv) in s.data_mut().iter_mut().zip(g.data()).zip(xin.data()) {
                    *o += x * gelu_grad(*xv);
                }
            }
            Op::Exp(a) => {
                let y = self.value(this);
                let s = slot(grads, *a, self.value(*a));
                for ((o, x), yv) in s.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *o += x * yv;
                }
            }
            Op::Clamp(a, lo, hi) => {
                let xin = self.value(*a);
                let s = slot(grads, *a, xin);
                for ((o, x), xv) in s.data_mut().iter_mut().zip(g.data()).zip(xin.data()) {
                    if *xv >= *lo && *xv <= *hi {
                        *o += x;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = xhat.shape();
                let gv = self.value(*gamma).data().to_vec();
                if self.ng(*gamma) {
                    let s = slot(grads, *gamma, self.value(*gamma));
                    for i in 0..rows {
                        for j in 0..cols {
                            s.data_mut()[j] += g.get(i, j) * xhat.get(i, j);
                        }
                    }
                }
                if self.ng(*beta) {
                    let s = slot(grads, *beta, self.value(*beta));
                    for i in 0..rows {
                        for (o, v) in s.data_mut().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
                if self.ng(*x) {
                    let s = slot(grads, *x, self.value(*x));
                    let n = cols as f64;
                    let mut dxhat = vec![0.0; cols];
                    for i in 0..rows {
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for j in 0..cols {
                            dxhat[j] = g.get(i, j) * gv[j];
                            sum_d += dxhat[j];
                            sum_dx += dxhat[j] * xhat.get(i, j);
                        }
                        let inv = inv_std[i];
                        let out = s.row_mut(i);
                        for j in 0..cols {
                            out[j] += inv / n * (n * dxhat[j] - sum_d - xhat.get(i, j) * sum_dx);
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                let s = slot(grads, *table, self.value(*table));
                for (r, &id) in ids.iter().enumerate() {
                    for (o, x) in s.row_mut(id).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                if self.ng(*a) {
                    let s = slot(grads, *a, self.value(*a));
                    for i in 0..g.rows() {
                        for (o, x) in s.row_mut(i).iter_mut().zip(&g.row(i)[..ca]) {
                            *o += x;
                        }
                    }
                }
                if self.ng(*b) {
                    let s = slot(grads, *b, self.value(*b));
                    for i in 0..g.rows() {
                        for (o, x) in s.row_mut(i).iter_mut().zip(&g.row(i)[ca..]) {
                            *o += x;
                        }
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let s = slot(grads, *a, self.value(*a));
                let len = g.cols();
                for i in 0..g.rows() {
                    for (o, x) in s.row_mut(i)[*start..*start + len].iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
            }
            Op::RepeatRows(a) => {
                let s = slot(grads, *a, self.value(*a));
                for i in 0..g.rows() {
                    for (o, x) in s.data_mut().iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
            }
            Op::Row(a, i) => {
                let s = slot(grads, *a, self.value(*a));
                for (o, x) in s.row_mut(*i).iter_mut().zip(g.data()) {
                    *o += x;
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => self.attention_backward(*q, *k, *v, *heads, probs, g, grads),
            Op::Sum(a) => {
                let c = g.item();
                let s = slot(grads, *a, self.value(*a));
                for o in s.data_mut() {
                    *o += c;
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let c = g.item();
                let s = slot(grads, *logits, self.value(*logits));
                for (r, &t) in targets.iter().enumerate() {
                    let out = s.row_mut(r);
                    for (o, p) in out.iter_mut().zip(probs.row(r)) {
                        *o += c * p;
                    }
                    out[t] -= c;
                }
            }
            Op::SoftTargetKl {
                logits,
                targets,
                probs,
            } => {
                let c = g.item();
                let s = slot(grads, *logits, self.value(*logits));
                for r in 0..targets.rows() {
                    let mass: f64 = targets.row(r).iter().sum();
                    let out = s.row_mut(r);
                    for ((o, p), d) in out.iter_mut().zip(probs.row(r)).zip(targets.row(r)) {
                        *o += c * (p * mass - d);
                    }
                }
            }
            Op::BagOfWords {
                logits,
                counts,
                probs,
            } => {
                let c = g.item();
                let n: f64 = counts.iter().sum();
                let s = slot(grads, *logits, self.value(*logits));
                for ((o, p), k) in s.data_mut().iter_mut().zip(probs.data()).zip(counts) {
                    *o += c * (n * p - k);
                }
            }
            Op::GaussianKl {
                mu_q,
                ls_q,
                mu_p,
                ls_p,
            } => {
                let (mq, lq, mp, lp) = (
                    self.value(*mu_q).data().to_vec(),
                    self.value(*ls_q).data().to_vec(),
                    self.value(*mu_p).data().to_vec(),
                    self.value(*ls_p).data().to_vec(),
                );
                let d = mq.len();
                let mut dmq = vec![0.0; d];
                let mut dlq = vec![0.0; d];
                let mut dlp = vec![0.0; d];
                for i in 0..d {
                    let inv_vp = (-2.0 * lp[i]).exp();
                    let vq = (2.0 * lq[i]).exp();
                    let diff = mq[i] - mp[i];
                    let gi = g.data()[i];
                    dmq[i] = gi * diff * inv_vp;
                    dlq[i] = gi * (vq * inv_vp - 1.0);
                    dlp[i] = gi * (1.0 - (vq + diff * diff) * inv_vp);
                }
                let parts = [
                    (*mu_q, dmq.clone()),
                    (*ls_q, dlq),
                    (*mu_p, dmq.iter().map(|x| -x).collect()),
                    (*ls_p, dlp),
                ];
                for (var, dv) in parts {
                    if self.ng(var) {
                        let s = slot(grads, var, self.value(var));
                        for (o, x) in s.data_mut().iter_mut().zip(&dv) {
                            *o += x;
                        }
                    }
                }
            }
            Op::FreeBits(x, thr) => {
                let c = g.item();
                let xv = self.value(*x);
                let s = slot(grads, *x, xv);
                for (o, v) in s.data_mut().iter_mut().zip(xv.data()) {
                    if *v > *thr {
                        *o += c;
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: &[Matrix],
        g: &Matrix,
        grads: &mut [Option<Matrix>],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (t, d) = qv.shape();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Matrix::zeros(t, d);
        let mut dk = Matrix::zeros(t, d);
        let mut dv = Matrix::zeros(t, d);
        let mut ds = vec![0.0; t];
        for (h, p) in probs.iter().enumerate() {
            let off = h * dh;
            for i in 0..t {
                let go = &g.row(i)[off..off + dh];
                // dP_ij = go · v_j ; dS = P ⊙ (dP − Σ_j P_ij dP_ij)
                let mut dot = 0.0;
                for j in 0..t {
                    let pij = p.get(i, j);
                    if pij == 0.0 {
                        ds[j] = 0.0;
                        continue;
                    }
                    let vj = &vv.row(j)[off..off + dh];
                    let dp: f64 = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                    ds[j] = dp;
                    dot += pij * dp;
                    let dvj = &mut dv.row_mut(j)[off..off + dh];
                    for (o, x) in dvj.iter_mut().zip(go) {
                        *o += pij * x;
                    }
                }
                for j in 0..t {
                    let pij = p.get(i, j);
                    if pij == 0.0 {
                        continue;
                    }
                    let s = pij * (ds[j] - dot) * scale;
                    let kj = &kv.row(j)[off..off + dh];
                    let qi = &qv.row(i)[off..off + dh];
                    {
                        let dqi = &mut dq.row_mut(i)[off..off + dh];
                        for (o, x) in dqi.iter_mut().zip(kj) {
                            *o += s * x;
                        }
                    }
                    let dkj = &mut dk.row_mut(j)[off..off + dh];
                    for (o, x) in dkj.iter_mut().zip(qi) {
                        *o += s * x;
                    }
                }
            }
        }
        for (var, dm) in [(q, dq), (k, dk), (v, dv)] {
            if self.ng(var) {
                slot(grads, var, self.value(var)).add_assign(&dm);
            }
        }
    }
}

pub(crate) fn gaussian_kl_1d(mq: f64, lq: f64, mp: f64, lp: f64) -> f64 {
    let diff = mq - mp;
    lp - lq + ((2.0 * lq).exp() + diff * diff) * (-2.0 * lp).exp() * 0.5 - 0.5
}

fn slot<'g>(grads: &'g mut [Option<Matrix>], v: Var, like: &Matrix) -> &'g mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(like.rows(), like.cols()))
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a node, `None` if it did not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Add gradients of every parameter leaf of `graph` into `out`, scaled.
    pub fn accumulate_params(&self, graph: &Graph<'_>, out: &mut ParamGrads, scale: f64) {
        for (i, node) in graph.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &self.grads[i]) {
                let dst = &mut out.grads[id.0];
                for (o, x) in dst.data_mut().iter_mut().zip(g.data()) {
                    *o += scale * x;
                }
            }
        }
    }
}
