//! Parameter layouts and forward graphs of the three classifiers.
//!
//! Inputs arrive as a batch of `L x F` matrices. Recurrent models consume
//! them time-major (`row = t * B + b`) so that the input projection of all
//! steps is one product; the Transformer works sample-major
//! (`row = b * L + t`) so attention and pooling see contiguous groups.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::{Arch, ModelConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Matrix>,
    index: HashMap<String, usize>,
}

impl Params {
    pub fn new(entries: Vec<(String, Matrix)>) -> Result<Self> {
        let (names, values): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let index: HashMap<String, usize> =
            names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        if index.len() != names.len() {
            return Err(Error::invalid_input("duplicate parameter name"));
        }
        Ok(Self {
            names,
            values,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.index.get(name).map(|&i| &mut self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn count_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Matrix::all_finite)
    }
}

/// Parameters bound into one tape.
struct Bound<'a> {
    vars: Vec<Var>,
    params: &'a Params,
}

impl Bound<'_> {
    fn get(&self, name: &str) -> Var {
        self.vars[*self.params.index.get(name).unwrap_or_else(|| panic!("missing parameter {name}"))]
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let a = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-a..a)).collect())
}

/// Fresh parameters: weights uniform in `+-1/sqrt(fan_in)`, biases zero,
/// layer-norm gains one.
pub fn init_params(cfg: &ModelConfig) -> Result<Params> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (f, h) = (cfg.input_dim, cfg.hidden_size);
    let mut p: Vec<(String, Matrix)> = Vec::new();
    let mut w = |p: &mut Vec<(String, Matrix)>, name: String, r: usize, c: usize| {
        let m = uniform(&mut rng, r, c, r);
        p.push((name, m));
    };
    match cfg.arch {
        Arch::Rnn | Arch::Lstm => {
            let gates = if cfg.arch == Arch::Lstm { 4 } else { 1 };
            let tag = cfg.arch.name();
            for l in 0..cfg.num_layers {
                let input = if l == 0 { f } else { h };
                w(&mut p, format!("{tag}.{l}.w_ih"), input, gates * h);
                w(&mut p, format!("{tag}.{l}.w_hh"), h, gates * h);
                p.push((format!("{tag}.{l}.b"), Matrix::zeros(1, gates * h)));
            }
        }
        Arch::Transformer => {
            let ff = cfg.ff_multiplier * h;
            w(&mut p, "in.w".into(), f, h);
            p.push(("in.b".into(), Matrix::zeros(1, h)));
            for l in 0..cfg.num_layers {
                let pre = format!("block.{l}");
                p.push((format!("{pre}.ln1.g"), Matrix::filled(1, h, 1.0)));
                p.push((format!("{pre}.ln1.b"), Matrix::zeros(1, h)));
                w(&mut p, format!("{pre}.qkv.w"), h, 3 * h);
                p.push((format!("{pre}.qkv.b"), Matrix::zeros(1, 3 * h)));
                w(&mut p, format!("{pre}.proj.w"), h, h);
                p.push((format!("{pre}.proj.b"), Matrix::zeros(1, h)));
                p.push((format!("{pre}.ln2.g"), Matrix::filled(1, h, 1.0)));
                p.push((format!("{pre}.ln2.b"), Matrix::zeros(1, h)));
                w(&mut p, format!("{pre}.ff1.w"), h, ff);
                p.push((format!("{pre}.ff1.b"), Matrix::zeros(1, ff)));
                w(&mut p, format!("{pre}.ff2.w"), ff, h);
                p.push((format!("{pre}.ff2.b"), Matrix::zeros(1, h)));
            }
            p.push(("ln_f.g".into(), Matrix::filled(1, h, 1.0)));
            p.push(("ln_f.b".into(), Matrix::zeros(1, h)));
        }
    }
    w(&mut p, "out.w".into(), h, 1);
    p.push(("out.b".into(), Matrix::zeros(1, 1)));
    Params::new(p)
}

/// Sinusoidal position encoding, `seq_len x width`.
pub fn position_encoding(seq_len: usize, width: usize) -> Matrix {
    let mut m = Matrix::zeros(seq_len, width);
    for t in 0..seq_len {
        for i in 0..width {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / width as f64);
            let a = t as f64 * freq;
            m.set(t, i, if i % 2 == 0 { a.sin() } else { a.cos() });
        }
    }
    m
}

/// Dropout handling during graph construction.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl Dropout<'_> {
    pub fn off() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        let Some(rng) = self.rng.as_deref_mut() else {
            return x;
        };
        if self.rate <= 0.0 {
            return x;
        }
        let (r, c) = tape.value(x).shape();
        let keep = 1.0 - self.rate;
        let mask = Matrix::from_vec(
            r,
            c,
            (0..r * c)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        );
        let m = tape.leaf(mask);
        tape.mul(x, m)
    }
}

fn check_finite(tape: &Tape, v: Var, layer: &str, enabled: bool) -> Result<()> {
    if enabled && !tape.value(v).all_finite() {
        return Err(Error::NumericalFailure {
            layer: layer.to_string(),
        });
    }
    Ok(())
}

/// Builds the forward graph for a batch and returns the `B x 1` logits.
pub fn forward_logits(
    tape: &mut Tape,
    cfg: &ModelConfig,
    params: &Params,
    batch: &[&Matrix],
    dropout: &mut Dropout<'_>,
    check: bool,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::invalid_input("empty batch"));
    }
    let seq_len = batch[0].rows();
    if seq_len == 0 || batch.iter().any(|m| m.shape() != (seq_len, cfg.input_dim)) {
        return Err(Error::invalid_input(format!(
            "batch inputs must all be L x {} with L >= 1",
            cfg.input_dim
        )));
    }
    if batch.iter().any(|m| !m.all_finite()) {
        return Err(Error::invalid_input("non-finite feature value"));
    }
    let bound = Bound {
        vars: params
            .values
            .iter()
            .enumerate()
            .map(|(i, m)| tape.param(i, m.clone()))
            .collect(),
        params,
    };
    let pooled = match cfg.arch {
        Arch::Rnn | Arch::Lstm => recurrent(tape, cfg, &bound, batch, dropout, check)?,
        Arch::Transformer => transformer(tape, cfg, &bound, batch, dropout, check)?,
    };
    let logits = tape.affine(pooled, bound.get("out.w"), bound.get("out.b"));
    check_finite(tape, logits, "out", check)?;
    Ok(logits)
}

fn recurrent(
    tape: &mut Tape,
    cfg: &ModelConfig,
    p: &Bound<'_>,
    batch: &[&Matrix],
    dropout: &mut Dropout<'_>,
    check: bool,
) -> Result<Var> {
    let (b, l, h) = (batch.len(), batch[0].rows(), cfg.hidden_size);
    let mut x = Matrix::zeros(l * b, cfg.input_dim);
    for (bi, m) in batch.iter().enumerate() {
        for t in 0..l {
            x.row_mut(t * b + bi).copy_from_slice(m.row(t));
        }
    }
    let mut seq = tape.leaf(x);
    let tag = cfg.arch.name();
    let mut last = seq;
    for layer in 0..cfg.num_layers {
        let name = format!("{tag}.{layer}");
        let proj = tape.matmul(seq, p.get(&format!("{name}.w_ih")));
        let proj = tape.add_row(proj, p.get(&format!("{name}.b")));
        let w_hh = p.get(&format!("{name}.w_hh"));
        let mut h_prev = tape.leaf(Matrix::zeros(b, h));
        let mut c_prev = tape.leaf(Matrix::zeros(b, h));
        let mut outputs = Vec::with_capacity(l);
        for t in 0..l {
            let xt = tape.slice_rows(proj, t * b, b);
            let rec = tape.matmul(h_prev, w_hh);
            let pre = tape.add(xt, rec);
            let h_t = if cfg.arch == Arch::Rnn {
                tape.tanh(pre)
            } else {
                let i = tape.slice_cols(pre, 0, h);
                let f = tape.slice_cols(pre, h, h);
                let g = tape.slice_cols(pre, 2 * h, h);
                let o = tape.slice_cols(pre, 3 * h, h);
                let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
                let keep = tape.mul(f, c_prev);
                let write = tape.mul(i, g);
                let c = tape.add(keep, write);
                c_prev = c;
                let ct = tape.tanh(c);
                tape.mul(o, ct)
            };
            h_prev = h_t;
            outputs.push(h_t);
        }
        check_finite(tape, h_prev, &name, check)?;
        last = h_prev;
        if layer + 1 < cfg.num_layers {
            seq = tape.concat_rows(&outputs);
            seq = dropout.apply(tape, seq);
        }
    }
    Ok(dropout.apply(tape, last))
}

fn transformer(
    tape: &mut Tape,
    cfg: &ModelConfig,
    p: &Bound<'_>,
    batch: &[&Matrix],
    dropout: &mut Dropout<'_>,
    check: bool,
) -> Result<Var> {
    let (b, l, h) = (batch.len(), batch[0].rows(), cfg.hidden_size);
    let mut x = Matrix::zeros(b * l, cfg.input_dim);
    for (bi, m) in batch.iter().enumerate() {
        x.as_mut_slice()[bi * l * cfg.input_dim..(bi + 1) * l * cfg.input_dim]
            .copy_from_slice(m.as_slice());
    }
    let x = tape.leaf(x);
    let mut hs = tape.affine(x, p.get("in.w"), p.get("in.b"));
    if cfg.position_encoding {
        let pe = position_encoding(l, h);
        let mut tiled = Matrix::zeros(b * l, h);
        for bi in 0..b {
            tiled.as_mut_slice()[bi * l * h..(bi + 1) * l * h].copy_from_slice(pe.as_slice());
        }
        let pe = tape.leaf(tiled);
        hs = tape.add(hs, pe);
    }
    check_finite(tape, hs, "input projection", check)?;
    for layer in 0..cfg.num_layers {
        let pre = format!("block.{layer}");
        let g = |s: &str| p.get(&format!("{pre}.{s}"));
        let a = tape.layer_norm(hs, g("ln1.g"), g("ln1.b"));
        let qkv = tape.affine(a, g("qkv.w"), g("qkv.b"));
        let q = tape.slice_cols(qkv, 0, h);
        let k = tape.slice_cols(qkv, h, h);
        let v = tape.slice_cols(qkv, 2 * h, h);
        let att = tape.attention(q, k, v, cfg.heads, l);
        let o = tape.affine(att, g("proj.w"), g("proj.b"));
        let o = dropout.apply(tape, o);
        hs = tape.add(hs, o);
        check_finite(tape, hs, &format!("{pre}.attention"), check)?;
        let a = tape.layer_norm(hs, g("ln2.g"), g("ln2.b"));
        let f = tape.affine(a, g("ff1.w"), g("ff1.b"));
        let f = tape.gelu(f);
        let f = tape.affine(f, g("ff2.w"), g("ff2.b"));
        let f = dropout.apply(tape, f);
        hs = tape.add(hs, f);
        check_finite(tape, hs, &format!("{pre}.feed_forward"), check)?;
    }
    let n = tape.layer_norm(hs, p.get("ln_f.g"), p.get("ln_f.b"));
    Ok(tape.mean_row_groups(n, l))
}
