//! Single-block transformer encoder with a mean-pooled softmax head.
//!
//! ```text
//! x0   = E[tok] + sinusoid(pos)
//! h1   = LN1(x0 + MHA(x0) Wo + bo)
//! h2   = LN2(h1 + GELU(h1 W1 + b1) W2 + b2)
//! prob = softmax(mean_t(h2) Wh + bh)
//! ```
//!
//! Matrices are row-major with shape `[in][out]`, so a row vector `x`
//! maps to `x W`.

use rand::Rng;

use super::{check_len, softmax3, Classifier, GradVec, ModelConfig, ParamVector, Probs};
use crate::corpus::{LabeledExample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng;

/// Added to the variance inside layer normalization.
pub const LN_EPS: f64 = 1e-12;

/// Offsets of every parameter block in the flat vector, in layout order:
/// `embed[V][d]`, `wq[d][d]`, `bq[d]`, `wk`, `bk`, `wv`, `bv`, `wo`, `bo`,
/// `ln1_gamma[d]`, `ln1_beta[d]`, `w1[d][f]`, `b1[f]`, `w2[f][d]`, `b2[d]`,
/// `ln2_gamma[d]`, `ln2_beta[d]`, `head_w[d][3]`, `head_b[3]`.
///
/// Total: `V d + 4 (d^2 + d) + 2 d + (2 d f + f + d) + 2 d + 3 d + 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub vocab: usize,
    pub d: usize,
    pub heads: usize,
    pub ff: usize,
    pub embed: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub head_w: usize,
    pub head_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(vocab: usize, d: usize, heads: usize, ff: usize) -> Self {
        let mut off = 0;
        let mut take = |n: usize| {
            let at = off;
            off += n;
            at
        };
        let embed = take(vocab * d);
        let wq = take(d * d);
        let bq = take(d);
        let wk = take(d * d);
        let bk = take(d);
        let wv = take(d * d);
        let bv = take(d);
        let wo = take(d * d);
        let bo = take(d);
        let ln1_g = take(d);
        let ln1_b = take(d);
        let w1 = take(d * ff);
        let b1 = take(ff);
        let w2 = take(ff * d);
        let b2 = take(d);
        let ln2_g = take(d);
        let ln2_b = take(d);
        let head_w = take(d * NUM_CLASSES);
        let head_b = take(NUM_CLASSES);
        Layout {
            vocab,
            d,
            heads,
            ff,
            embed,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            ln1_g,
            ln1_b,
            w1,
            b1,
            w2,
            b2,
            ln2_g,
            ln2_b,
            head_w,
            head_b,
            total: off,
        }
    }

    pub fn closed_form_count(vocab: usize, d: usize, ff: usize) -> usize {
        vocab * d + 4 * (d * d + d) + 2 * d + (2 * d * ff + ff + d) + 2 * d + 3 * d + 3
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TinyTransformer {
    layout: Layout,
    max_len: usize,
    init_seed: u64,
}

/// Intermediate activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub len: usize,
    pub x0: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// `attn[h][t][s]`, flattened as `(h * L + t) * L + s`.
    pub attn: Vec<f64>,
    pub o: Vec<f64>,
    pub n1: Vec<f64>,
    pub inv1: Vec<f64>,
    pub h1: Vec<f64>,
    pub u: Vec<f64>,
    pub g: Vec<f64>,
    pub n2: Vec<f64>,
    pub inv2: Vec<f64>,
    pub pooled: Vec<f64>,
    pub logits: Probs,
}

/// `out[L][n] = x[L][m] w[m][n] + b[n]`.
fn affine(x: &[f64], w: &[f64], b: &[f64], m: usize, n: usize) -> Vec<f64> {
    let rows = x.len() / m;
    let mut out = vec![0.0; rows * n];
    for t in 0..rows {
        let row = &mut out[t * n..(t + 1) * n];
        row.copy_from_slice(b);
        for i in 0..m {
            let xi = x[t * m + i];
            let wrow = &w[i * n..(i + 1) * n];
            for (o, &wij) in row.iter_mut().zip(wrow) {
                *o += xi * wij;
            }
        }
    }
    out
}

/// Backward of `affine`: accumulates `dw += x^T dy`, `db += sum_t dy`, returns `dx = dy w^T`.
fn affine_backward(x: &[f64], w: &[f64], dy: &[f64], m: usize, n: usize, dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let rows = x.len() / m;
    let mut dx = vec![0.0; rows * m];
    for t in 0..rows {
        let dyt = &dy[t * n..(t + 1) * n];
        for (dbj, &g) in db.iter_mut().zip(dyt) {
            *dbj += g;
        }
        for i in 0..m {
            let xi = x[t * m + i];
            let wrow = &w[i * n..(i + 1) * n];
            let dwrow = &mut dw[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                dwrow[j] += xi * dyt[j];
                acc += dyt[j] * wrow[j];
            }
            dx[t * m + i] = acc;
        }
    }
    dx
}

/// Normalizes each row of `x[L][d]` to zero mean and unit variance.
/// Returns the normalized rows and each row's inverse standard deviation.
pub fn layer_norm(x: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = x.len() / d;
    let mut n = vec![0.0; x.len()];
    let mut inv = vec![0.0; rows];
    for t in 0..rows {
        let r = &x[t * d..(t + 1) * d];
        let mean = r.iter().sum::<f64>() / d as f64;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv[t] = s;
        for i in 0..d {
            n[t * d + i] = (r[i] - mean) * s;
        }
    }
    (n, inv)
}

fn layer_norm_backward(dn: &[f64], n: &[f64], inv: &[f64], d: usize) -> Vec<f64> {
    let rows = n.len() / d;
    let mut dx = vec![0.0; n.len()];
    for t in 0..rows {
        let dnt = &dn[t * d..(t + 1) * d];
        let nt = &n[t * d..(t + 1) * d];
        let mean_dn = dnt.iter().sum::<f64>() / d as f64;
        let mean_dn_n = dnt.iter().zip(nt).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for i in 0..d {
            dx[t * d + i] = inv[t] * (dnt[i] - mean_dn - nt[i] * mean_dn_n);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Sinusoidal position encoding for position `pos`, dimension `i` of `d`.
pub fn position_encoding(pos: usize, i: usize, d: usize) -> f64 {
    let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
    if i.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

impl TinyTransformer {
    pub fn new(config: &ModelConfig) -> Self {
        TinyTransformer {
            layout: Layout::new(
                config.vocab_hash_dim,
                config.embed_dim,
                config.num_heads.max(1),
                config.ff_dim,
            ),
            max_len: config.max_len,
            init_seed: config.init_seed,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn tokens<'a>(&self, example: &'a LabeledExample) -> Result<&'a [u32]> {
        let toks = &example.token_ids;
        if toks.is_empty() {
            return Err(Error::invalid(format!("example {} has no tokens", example.id)));
        }
        if let Some(&bad) = toks.iter().find(|&&t| t as usize >= self.layout.vocab) {
            return Err(Error::DimensionMismatch {
                expected: self.layout.vocab,
                got: bad as usize + 1,
            });
        }
        Ok(&toks[..toks.len().min(self.max_len)])
    }

    pub fn forward_cache(&self, params: &[f64], example: &LabeledExample) -> Result<ForwardCache> {
        check_len(params, self.layout.total)?;
        let toks = self.tokens(example)?;
        let ly = &self.layout;
        let (d, heads, ff) = (ly.d, ly.heads, ly.ff);
        let dh = d / heads;
        let len = toks.len();
        let p = |off: usize, n: usize| &params[off..off + n];

        let mut x0 = vec![0.0; len * d];
        for (t, &tok) in toks.iter().enumerate() {
            let row = p(ly.embed + tok as usize * d, d);
            for i in 0..d {
                x0[t * d + i] = row[i] + position_encoding(t, i, d);
            }
        }

        let q = affine(&x0, p(ly.wq, d * d), p(ly.bq, d), d, d);
        let k = affine(&x0, p(ly.wk, d * d), p(ly.bk, d), d, d);
        let v = affine(&x0, p(ly.wv, d * d), p(ly.bv, d), d, d);

        let scale = 1.0 / (dh as f64).sqrt();
        let mut attn = vec![0.0; heads * len * len];
        let mut o = vec![0.0; len * d];
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for t in 0..len {
                let row = &mut attn[(h * len + t) * len..(h * len + t + 1) * len];
                for s in 0..len {
                    row[s] = cols.clone().map(|j| q[t * d + j] * k[s * d + j]).sum::<f64>() * scale;
                }
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for a in row.iter_mut() {
                    *a = (*a - m).exp();
                    z += *a;
                }
                for a in row.iter_mut() {
                    *a /= z;
                }
                for j in cols.clone() {
                    o[t * d + j] = (0..len).map(|s| row[s] * v[s * d + j]).sum();
                }
            }
        }

        let z = affine(&o, p(ly.wo, d * d), p(ly.bo, d), d, d);
        let r1: Vec<f64> = x0.iter().zip(&z).map(|(a, b)| a + b).collect();
        let (n1, inv1) = layer_norm(&r1, d);
        let h1 = scale_shift(&n1, p(ly.ln1_g, d), p(ly.ln1_b, d));

        let u = affine(&h1, p(ly.w1, d * ff), p(ly.b1, ff), d, ff);
        let g: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
        let f = affine(&g, p(ly.w2, ff * d), p(ly.b2, d), ff, d);
        let r2: Vec<f64> = h1.iter().zip(&f).map(|(a, b)| a + b).collect();
        let (n2, inv2) = layer_norm(&r2, d);
        let h2 = scale_shift(&n2, p(ly.ln2_g, d), p(ly.ln2_b, d));

        let mut pooled = vec![0.0; d];
        for t in 0..len {
            for i in 0..d {
                pooled[i] += h2[t * d + i];
            }
        }
        pooled.iter_mut().for_each(|v| *v /= len as f64);

        let lv = affine(
            &pooled,
            p(ly.head_w, d * NUM_CLASSES),
            p(ly.head_b, NUM_CLASSES),
            d,
            NUM_CLASSES,
        );
        let logits = [lv[0], lv[1], lv[2]];

        Ok(ForwardCache {
            len,
            x0,
            q,
            k,
            v,
            attn,
            o,
            n1,
            inv1,
            h1,
            u,
            g,
            n2,
            inv2,
            pooled,
            logits,
        })
    }

    /// Attention matrices of every head: `result[h][t][s]`.
    pub fn attention_maps(&self, params: &[f64], example: &LabeledExample) -> Result<Vec<Vec<Vec<f64>>>> {
        let c = self.forward_cache(params, example)?;
        let l = c.len;
        Ok((0..self.layout.heads)
            .map(|h| {
                (0..l)
                    .map(|t| c.attn[(h * l + t) * l..(h * l + t + 1) * l].to_vec())
                    .collect()
            })
            .collect())
    }

    fn backward(&self, params: &[f64], toks: &[u32], c: &ForwardCache, label: usize) -> (Probs, f64, GradVec) {
        let ly = &self.layout;
        let (d, heads, ff) = (ly.d, ly.heads, ly.ff);
        let dh = d / heads;
        let len = c.len;
        let p = |off: usize, n: usize| &params[off..off + n];
        // Gradient of every block except the embedding table.
        let dense_start = ly.wq;
        let mut g = vec![0.0; ly.total - dense_start];
        let at = |off: usize| off - dense_start;

        let (probs, lse) = softmax3(&c.logits);
        let loss = (lse - c.logits[label]).max(0.0);
        let mut dlogits = probs;
        dlogits[label] -= 1.0;

        let dpooled = {
            let (dw, rest) = g[at(ly.head_w)..].split_at_mut(d * NUM_CLASSES);
            affine_backward(
                &c.pooled,
                p(ly.head_w, d * NUM_CLASSES),
                &dlogits,
                d,
                NUM_CLASSES,
                dw,
                &mut rest[..NUM_CLASSES],
            )
        };

        let mut dh2 = vec![0.0; len * d];
        for t in 0..len {
            for i in 0..d {
                dh2[t * d + i] = dpooled[i] / len as f64;
            }
        }

        let dr2 = self.scale_shift_backward(&dh2, &c.n2, &c.inv2, ly.ln2_g, ly.ln2_b, params, &mut g, dense_start);

        // Feed-forward branch; the residual passes dr2 straight to h1.
        let dgel = {
            let (dw2, rest) = g[at(ly.w2)..].split_at_mut(ff * d);
            affine_backward(&c.g, p(ly.w2, ff * d), &dr2, ff, d, dw2, &mut rest[..d])
        };
        let du: Vec<f64> = dgel.iter().zip(&c.u).map(|(dg, &u)| dg * gelu_grad(u)).collect();
        let dh1_ff = {
            let (dw1, rest) = g[at(ly.w1)..].split_at_mut(d * ff);
            affine_backward(&c.h1, p(ly.w1, d * ff), &du, d, ff, dw1, &mut rest[..ff])
        };
        let dh1: Vec<f64> = dr2.iter().zip(&dh1_ff).map(|(a, b)| a + b).collect();

        let dr1 = self.scale_shift_backward(&dh1, &c.n1, &c.inv1, ly.ln1_g, ly.ln1_b, params, &mut g, dense_start);

        let d_o = {
            let (dwo, rest) = g[at(ly.wo)..].split_at_mut(d * d);
            affine_backward(&c.o, p(ly.wo, d * d), &dr1, d, d, dwo, &mut rest[..d])
        };

        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = vec![0.0; len * d];
        let mut dk = vec![0.0; len * d];
        let mut dv = vec![0.0; len * d];
        let mut da = vec![0.0; len];
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for t in 0..len {
                let a = &c.attn[(h * len + t) * len..(h * len + t + 1) * len];
                for s in 0..len {
                    da[s] = cols.clone().map(|j| d_o[t * d + j] * c.v[s * d + j]).sum();
                    for j in cols.clone() {
                        dv[s * d + j] += a[s] * d_o[t * d + j];
                    }
                }
                let dot: f64 = (0..len).map(|s| a[s] * da[s]).sum();
                for s in 0..len {
                    let ds = a[s] * (da[s] - dot) * scale;
                    for j in cols.clone() {
                        dq[t * d + j] += ds * c.k[s * d + j];
                        dk[s * d + j] += ds * c.q[t * d + j];
                    }
                }
            }
        }

        let mut dx0 = dr1;
        for (w, b, dy) in [(ly.wq, ly.bq, &dq), (ly.wk, ly.bk, &dk), (ly.wv, ly.bv, &dv)] {
            let (dw, rest) = g[at(w)..].split_at_mut(d * d);
            let db = &mut rest[b - w - d * d..b - w - d * d + d];
            let dx = affine_backward(&c.x0, p(w, d * d), dy, d, d, dw, db);
            dx0.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }

        // Embedding rows: merge repeated tokens, emit in ascending token order.
        let mut rows: Vec<(u32, usize)> = toks.iter().copied().zip(0..len).collect();
        rows.sort_unstable();
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(len * d + g.len());
        let mut i = 0;
        while i < rows.len() {
            let tok = rows[i].0;
            let mut acc = vec![0.0; d];
            while i < rows.len() && rows[i].0 == tok {
                let t = rows[i].1;
                acc.iter_mut().zip(&dx0[t * d..(t + 1) * d]).for_each(|(a, b)| *a += b);
                i += 1;
            }
            let base = ly.embed + tok as usize * d;
            entries.extend(acc.into_iter().enumerate().map(|(j, v)| (base + j, v)));
        }
        entries.extend(g.into_iter().enumerate().map(|(j, v)| (dense_start + j, v)));
        (probs, loss, GradVec::Sparse { len: ly.total, entries })
    }

    /// Backward through `y = gamma * n + beta` and the normalization itself.
    #[allow(clippy::too_many_arguments)]
    fn scale_shift_backward(
        &self,
        dy: &[f64],
        n: &[f64],
        inv: &[f64],
        gamma_off: usize,
        beta_off: usize,
        params: &[f64],
        g: &mut [f64],
        dense_start: usize,
    ) -> Vec<f64> {
        let d = self.layout.d;
        let gamma = &params[gamma_off..gamma_off + d];
        let rows = n.len() / d;
        let mut dn = vec![0.0; n.len()];
        for t in 0..rows {
            for i in 0..d {
                let dyi = dy[t * d + i];
                g[gamma_off - dense_start + i] += dyi * n[t * d + i];
                g[beta_off - dense_start + i] += dyi;
                dn[t * d + i] = dyi * gamma[i];
            }
        }
        layer_norm_backward(&dn, n, inv, d)
    }
}

fn scale_shift(n: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let d = gamma.len();
    n.iter()
        .enumerate()
        .map(|(idx, &v)| gamma[idx % d] * v + beta[idx % d])
        .collect()
}

impl Classifier for TinyTransformer {
    fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Glorot-uniform weights drawn block by block in layout order; biases
    /// and layer-norm shifts zero, layer-norm scales one.
    fn init_params(&self) -> ParamVector {
        let ly = &self.layout;
        let (v, d, ff) = (ly.vocab, ly.d, ly.ff);
        let mut params = vec![0.0; ly.total];
        let mut rng = rng::seeded(self.init_seed);
        let blocks = [
            (ly.embed, v, d),
            (ly.wq, d, d),
            (ly.wk, d, d),
            (ly.wv, d, d),
            (ly.wo, d, d),
            (ly.w1, d, ff),
            (ly.w2, ff, d),
            (ly.head_w, d, NUM_CLASSES),
        ];
        for (off, fan_in, fan_out) in blocks {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params[off..off + fan_in * fan_out] {
                *w = rng.random_range(-a..=a);
            }
        }
        params[ly.ln1_g..ly.ln1_g + d].fill(1.0);
        params[ly.ln2_g..ly.ln2_g + d].fill(1.0);
        ParamVector(params)
    }

    fn forward(&self, params: &[f64], example: &LabeledExample) -> Result<Probs> {
        let c = self.forward_cache(params, example)?;
        Ok(softmax3(&c.logits).0)
    }

    fn loss_and_grad(&self, params: &[f64], example: &LabeledExample) -> Result<(f64, GradVec)> {
        let c = self.forward_cache(params, example)?;
        let toks = self.tokens(example)?;
        let (_, loss, grad) = self.backward(params, toks, &c, example.label.index());
        Ok((loss, grad))
    }
}
