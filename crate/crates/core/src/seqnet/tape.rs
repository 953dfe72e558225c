//! A small reverse-mode autodiff tape over dense row-major matrices.
//!
//! Every operation appends a node holding its forward value; [`Tape::backward`]
//! walks the nodes in reverse, accumulating gradients for nodes that depend on
//! a parameter. Only the operations the three classifiers need are provided.

use crate::linalg::{dot, matmul_tn_acc, Matrix};

/// Probability clamp used by the loss and by inference.
pub const PROB_EPS: f64 = 1e-7;
pub const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    /// `x + bias` with a `1 x n` bias broadcast over rows.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        rstd: Vec<f64>,
    },
    MeanRowGroups(Var, usize),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        /// Softmax weights, `[group][head]` blocks of `seq_len x seq_len`.
        probs: Vec<f64>,
    },
    WeightedBce {
        logits: Var,
        /// Per-row `dloss/dlogit` for a unit upstream gradient.
        dlogits: Vec<f64>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    n_params: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_prob(logit: f64) -> f64 {
    sigmoid(logit).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Per-sample weighted binary cross-entropy on a probability.
pub fn weighted_bce(p: f64, label: u8, weights: (f64, f64)) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label == 1 {
        -weights.1 * p.ln()
    } else {
        -weights.0 * (1.0 - p).ln()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Registers parameter `index`; its gradient is reported by
    /// [`backward`](Self::backward) at that index.
    pub fn param(&mut self, index: usize, value: Matrix) -> Var {
        self.n_params = self.n_params.max(index + 1);
        self.push(value, Op::Param(index), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let mut v = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!((1, v.cols()), b.shape(), "bias shape");
        for r in 0..v.rows() {
            for (x, y) in v.row_mut(r).iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
        let ng = self.ng(&[a, bias]);
        self.push(v, Op::AddRow(a, bias), ng)
    }

    /// `x * w + b`
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        let ng = self.ng(&[a]);
        self.push(v, Op::Scale(a, k), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let ng = self.ng(&[a]);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let ng = self.ng(&[a]);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        let ng = self.ng(&[a]);
        self.push(v, Op::Gelu(a), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        let c = src.cols();
        let v = Matrix::from_vec(len, c, src.as_slice()[start * c..(start + len) * c].to_vec());
        let ng = self.ng(&[a]);
        self.push(v, Op::SliceRows(a, start), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        let mut v = Matrix::zeros(src.rows(), len);
        for r in 0..src.rows() {
            v.row_mut(r).copy_from_slice(&src.row(r)[start..start + len]);
        }
        let ng = self.ng(&[a]);
        self.push(v, Op::SliceCols(a, start), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(m.as_slice());
            rows += m.rows();
        }
        let ng = self.ng(parts);
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng)
    }

    /// Row-wise layer normalization with `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let src = self.value(x);
        let (rows, cols) = src.shape();
        let (g, b) = (self.value(gamma).as_slice(), self.value(beta).as_slice());
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = src.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(rs);
            let xh = xhat.row_mut(r);
            for (o, &v) in xh.iter_mut().zip(row) {
                *o = (v - mean) * rs;
            }
            let xh = xhat.row(r).to_vec();
            for (j, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = xh[j] * g[j] + b[j];
            }
        }
        let ng = self.ng(&[x, gamma, beta]);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        )
    }

    /// Mean of each run of `group` consecutive rows.
    pub fn mean_row_groups(&mut self, a: Var, group: usize) -> Var {
        let src = self.value(a);
        let (rows, cols) = src.shape();
        assert!(group > 0 && rows % group == 0, "rows not divisible by group");
        let mut out = Matrix::zeros(rows / group, cols);
        for r in 0..rows {
            for (o, v) in out.row_mut(r / group).iter_mut().zip(src.row(r)) {
                *o += v;
            }
        }
        out.scale_assign(1.0 / group as f64);
        let ng = self.ng(&[a]);
        self.push(out, Op::MeanRowGroups(a, group), ng)
    }

    /// Multi-head scaled dot-product self-attention. `q`, `k`, `v` hold
    /// `groups * seq_len` rows; attention never crosses a group of
    /// `seq_len` rows, and head `h` uses columns `h*d..(h+1)*d`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, seq_len: usize) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let (rows, width) = qm.shape();
        assert!(rows % seq_len == 0 && width % heads == 0, "attention shape");
        let d = width / heads;
        let groups = rows / seq_len;
        let scale = 1.0 / (d as f64).sqrt();
        let mut out = Matrix::zeros(rows, width);
        let mut probs = vec![0.0; groups * heads * seq_len * seq_len];
        let mut qh = vec![0.0; seq_len * d];
        let mut kh = vec![0.0; seq_len * d];
        let mut vh = vec![0.0; seq_len * d];
        for g in 0..groups {
            for h in 0..heads {
                gather_head(qm, g * seq_len, seq_len, h * d, d, &mut qh);
                gather_head(km, g * seq_len, seq_len, h * d, d, &mut kh);
                gather_head(vm, g * seq_len, seq_len, h * d, d, &mut vh);
                let p = &mut probs[(g * heads + h) * seq_len * seq_len..][..seq_len * seq_len];
                for i in 0..seq_len {
                    let qi = &qh[i * d..(i + 1) * d];
                    let row = &mut p[i * seq_len..(i + 1) * seq_len];
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in row.iter_mut().enumerate() {
                        *s = scale * dot(qi, &kh[j * d..(j + 1) * d]);
                        max = max.max(*s);
                    }
                    let mut sum = 0.0;
                    for s in row.iter_mut() {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    for s in row.iter_mut() {
                        *s /= sum;
                    }
                    let o = &mut out.row_mut(g * seq_len + i)[h * d..(h + 1) * d];
                    for (j, &pij) in row.iter().enumerate() {
                        for (oc, vc) in o.iter_mut().zip(&vh[j * d..(j + 1) * d]) {
                            *oc += pij * vc;
                        }
                    }
                }
            }
        }
        let ng = self.ng(&[q, k, v]);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                probs,
            },
            ng,
        )
    }

    /// Mean weighted binary cross-entropy of `sigmoid(logits)` (a `B x 1`
    /// column) against `labels`; probabilities are clamped to
    /// `[eps, 1 - eps]` and a clamped entry passes no gradient.
    pub fn weighted_bce(&mut self, logits: Var, labels: &[u8], weights: (f64, f64)) -> Var {
        let z = self.value(logits);
        assert_eq!(z.shape(), (labels.len(), 1), "logits shape");
        let n = labels.len() as f64;
        let mut total = 0.0;
        let mut dlogits = Vec::with_capacity(labels.len());
        for (&zi, &y) in z.as_slice().iter().zip(labels) {
            let raw = sigmoid(zi);
            let p = raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
            total += weighted_bce(p, y, weights);
            let clamped = p != raw;
            let g = match (clamped, y) {
                (true, _) => 0.0,
                (false, 1) => -weights.1 * (1.0 - p),
                (false, _) => weights.0 * p,
            };
            dlogits.push(g / n);
        }
        let ng = self.ng(&[logits]);
        self.push(
            Matrix::from_vec(1, 1, vec![total / n]),
            Op::WeightedBce { logits, dlogits },
            ng,
        )
    }

    /// Back-propagates from the scalar node `root`; returns the gradient of
    /// every registered parameter (zeros for parameters not reached).
    pub fn backward(&self, root: Var) -> Vec<Matrix> {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut params: Vec<Option<Matrix>> = (0..self.n_params).map(|_| None).collect();
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, g, &mut grads, &mut params);
        }
        params
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.unwrap_or_else(|| self.param_zeros(i)))
            .collect()
    }

    fn param_zeros(&self, index: usize) -> Matrix {
        self.nodes
            .iter()
            .find(|n| matches!(n.op, Op::Param(i) if i == index))
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .unwrap_or_else(|| Matrix::zeros(0, 0))
    }

    fn backward_node(
        &self,
        node: &Node,
        g: Matrix,
        grads: &mut [Option<Matrix>],
        params: &mut [Option<Matrix>],
    ) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        // adds `delta` into the gradient slot of `v`
        let mut acc = |v: Var, delta: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(m) => m.add_assign(&delta),
                slot => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(idx) => match &mut params[*idx] {
                Some(m) => m.add_assign(&g),
                slot => *slot = Some(g),
            },
            Op::MatMul(a, b) => {
                if wants(*a) {
                    acc(*a, g.matmul_nt(val(*b)));
                }
                if wants(*b) {
                    let bv = val(*b);
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    matmul_tn_acc(val(*a), &g, &mut gb);
                    acc(*b, gb);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g);
            }
            Op::AddRow(a, bias) => {
                if wants(*bias) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*bias, gb);
                }
                acc(*a, g);
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y));
                }
                if wants(*b) {
                    acc(*b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, k) => acc(*a, g.map(|x| x * k)),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |d, y| d * (1.0 - y * y))),
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |d, y| d * y * (1.0 - y))),
            Op::Gelu(a) => acc(*a, g.zip_map(val(*a), |d, x| d * gelu_grad(x))),
            Op::SliceRows(a, start) => {
                let src = val(*a);
                let c = src.cols();
                let mut full = Matrix::zeros(src.rows(), c);
                full.as_mut_slice()[start * c..(start + g.rows()) * c].copy_from_slice(g.as_slice());
                acc(*a, full);
            }
            Op::SliceCols(a, start) => {
                let src = val(*a);
                let mut full = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    full.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, full);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    if wants(p) {
                        let (r, c) = val(p).shape();
                        acc(p, Matrix::from_vec(r, c, g.as_slice()[offset..offset + n].to_vec()));
                    }
                    offset += n;
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (rows, cols) = xhat.shape();
                let gam = val(*gamma).as_slice();
                if wants(*gamma) || wants(*beta) {
                    let mut gg = Matrix::zeros(1, cols);
                    let mut gbeta = Matrix::zeros(1, cols);
                    for r in 0..rows {
                        for j in 0..cols {
                            gg.as_mut_slice()[j] += g.get(r, j) * xhat.get(r, j);
                            gbeta.as_mut_slice()[j] += g.get(r, j);
                        }
                    }
                    acc(*gamma, gg);
                    acc(*beta, gbeta);
                }
                if wants(*x) {
                    let mut gx = Matrix::zeros(rows, cols);
                    let n = cols as f64;
                    for (r, &rs) in rstd.iter().enumerate() {
                        let xh = xhat.row(r);
                        let dxh: Vec<f64> = g.row(r).iter().zip(gam).map(|(d, w)| d * w).collect();
                        let m1 = dxh.iter().sum::<f64>() / n;
                        let m2 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
                        for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
                            *o = rs * (dxh[j] - m1 - xh[j] * m2);
                        }
                    }
                    acc(*x, gx);
                }
            }
            Op::MeanRowGroups(a, group) => {
                let src = val(*a);
                let mut full = Matrix::zeros(src.rows(), src.cols());
                let k = 1.0 / *group as f64;
                for r in 0..src.rows() {
                    for (o, d) in full.row_mut(r).iter_mut().zip(g.row(r / group)) {
                        *o = d * k;
                    }
                }
                acc(*a, full);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                probs,
            } => {
                let (gq, gk, gv) = attention_backward(
                    val(*q),
                    val(*k),
                    val(*v),
                    &g,
                    *heads,
                    *seq_len,
                    probs,
                );
                acc(*q, gq);
                acc(*k, gk);
                acc(*v, gv);
            }
            Op::WeightedBce { logits, dlogits } => {
                let up = g.get(0, 0);
                let d: Vec<f64> = dlogits.iter().map(|x| x * up).collect();
                acc(*logits, Matrix::from_vec(d.len(), 1, d));
            }
        }
    }
}

fn gather_head(m: &Matrix, row0: usize, rows: usize, col0: usize, d: usize, out: &mut [f64]) {
    for i in 0..rows {
        out[i * d..(i + 1) * d].copy_from_slice(&m.row(row0 + i)[col0..col0 + d]);
    }
}

fn scatter_head(m: &mut Matrix, row0: usize, rows: usize, col0: usize, d: usize, src: &[f64]) {
    for i in 0..rows {
        for (o, s) in m.row_mut(row0 + i)[col0..col0 + d].iter_mut().zip(&src[i * d..(i + 1) * d]) {
            *o += s;
        }
    }
}

fn attention_backward(
    qm: &Matrix,
    km: &Matrix,
    vm: &Matrix,
    g: &Matrix,
    heads: usize,
    seq_len: usize,
    probs: &[f64],
) -> (Matrix, Matrix, Matrix) {
    let (rows, width) = qm.shape();
    let d = width / heads;
    let groups = rows / seq_len;
    let scale = 1.0 / (d as f64).sqrt();
    let (mut gq, mut gk, mut gv) = (
        Matrix::zeros(rows, width),
        Matrix::zeros(rows, width),
        Matrix::zeros(rows, width),
    );
    let n = seq_len;
    let (mut qh, mut kh, mut vh, mut goh) =
        (vec![0.0; n * d], vec![0.0; n * d], vec![0.0; n * d], vec![0.0; n * d]);
    let mut ds = vec![0.0; n * n];
    let (mut dq, mut dk, mut dv) = (vec![0.0; n * d], vec![0.0; n * d], vec![0.0; n * d]);
    for grp in 0..groups {
        for h in 0..heads {
            let r0 = grp * n;
            gather_head(qm, r0, n, h * d, d, &mut qh);
            gather_head(km, r0, n, h * d, d, &mut kh);
            gather_head(vm, r0, n, h * d, d, &mut vh);
            gather_head(g, r0, n, h * d, d, &mut goh);
            let p = &probs[(grp * heads + h) * n * n..][..n * n];
            dv.iter_mut().for_each(|x| *x = 0.0);
            dq.iter_mut().for_each(|x| *x = 0.0);
            dk.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..n {
                let go = &goh[i * d..(i + 1) * d];
                let pi = &p[i * n..(i + 1) * n];
                // dV += P^T dO ; dP = dO V^T
                let dsi = &mut ds[i * n..(i + 1) * n];
                let mut dot_pd = 0.0;
                for j in 0..n {
                    let vj = &vh[j * d..(j + 1) * d];
                    for (o, x) in dv[j * d..(j + 1) * d].iter_mut().zip(go) {
                        *o += pi[j] * x;
                    }
                    let dp = dot(go, vj);
                    dsi[j] = dp;
                    dot_pd += dp * pi[j];
                }
                for j in 0..n {
                    dsi[j] = pi[j] * (dsi[j] - dot_pd) * scale;
                }
                for j in 0..n {
                    let s = dsi[j];
                    let kj = &kh[j * d..(j + 1) * d];
                    for (o, x) in dq[i * d..(i + 1) * d].iter_mut().zip(kj) {
                        *o += s * x;
                    }
                    let qi = &qh[i * d..(i + 1) * d];
                    for (o, x) in dk[j * d..(j + 1) * d].iter_mut().zip(qi) {
                        *o += s * x;
                    }
                }
            }
            scatter_head(&mut gq, r0, n, h * d, d, &dq);
            scatter_head(&mut gk, r0, n, h * d, d, &dk);
            scatter_head(&mut gv, r0, n, h * d, d, &dv);
        }
    }
    (gq, gk, gv)
}
