//! Transformer denoiser predicting a clean interaction window from a noisy
//! one, attending over the interaction history and two prepended condition
//! tokens (diffusion step, text). The backward pass is written out by hand.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mat::{gemm, linear, linear_backward};
use super::params::{ParamId, ParamStore};
use super::text::TextEmbedding;
use crate::diffusion::Denoise;
use crate::error::{invalid, Error, Result};
use crate::motion::features::{FRAME_DIM, HISTORY_LEN, WINDOW_LEN};

const LN_EPS: f64 = 1e-5;
const COND_TOKENS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub time_embed_dim: usize,
    pub text_embed_dim: usize,
    #[serde(default = "default_ff_mult")]
    pub ff_mult: usize,
}

fn default_ff_mult() -> usize {
    4
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self::tiny()
    }
}

impl DenoiserConfig {
    /// Desk-scale profile used by tests and the default CLI.
    pub fn tiny() -> Self {
        Self { layers: 2, hidden: 64, heads: 4, time_embed_dim: 64, text_embed_dim: 64, ff_mult: 4 }
    }

    /// Full-size profile: 8 layers, 512 wide.
    pub fn full() -> Self {
        Self { layers: 8, hidden: 512, heads: 8, time_embed_dim: 512, text_embed_dim: 512, ff_mult: 4 }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.layers, self.hidden, self.heads, self.time_embed_dim, self.text_embed_dim, self.ff_mult];
        if dims.iter().any(|&d| d == 0) {
            return Err(invalid("denoiser dimensions must all be at least 1"));
        }
        if self.hidden % self.heads != 0 {
            return Err(invalid(format!("hidden {} not divisible by heads {}", self.hidden, self.heads)));
        }
        Ok(())
    }

    pub fn ff(&self) -> usize {
        self.hidden * self.ff_mult
    }
}

/// Step embedding, text embedding and the null flag for one denoiser call.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    pub t_embed: Vec<f64>,
    pub text_embed: Vec<f64>,
    pub null_flag: bool,
}

impl ConditionBundle {
    pub fn new(step: usize, time_dim: usize, text: &TextEmbedding) -> Self {
        let text_embed = if text.null_flag { vec![0.0; text.dim()] } else { text.vector.clone() };
        Self { t_embed: timestep_embedding(step, time_dim), text_embed, null_flag: text.null_flag }
    }
}

pub fn timestep_embedding(step: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (step as f64 * freq).sin();
        out[half + i] = (step as f64 * freq).cos();
    }
    out
}

fn positional_table(slots: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; slots * d];
    for pos in 0..slots {
        for i in 0..d {
            let rate = 10000f64.powf(-((i / 2 * 2) as f64) / d as f64);
            let a = pos as f64 * rate;
            out[pos * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    out
}

#[derive(Debug, Clone)]
struct LayerIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    qkv_w: ParamId,
    qkv_b: ParamId,
    o_w: ParamId,
    o_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    f1_w: ParamId,
    f1_b: ParamId,
    f2_w: ParamId,
    f2_b: ParamId,
}

#[derive(Debug, Clone)]
struct Ids {
    in_w: ParamId,
    in_b: ParamId,
    pos: ParamId,
    t_w1: ParamId,
    t_b1: ParamId,
    t_w2: ParamId,
    t_b2: ParamId,
    c_w: ParamId,
    c_b: ParamId,
    layers: Vec<LayerIds>,
    lnf_g: ParamId,
    lnf_b: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

/// The denoiser with its parameters (including a frozen positional table).
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub params: ParamStore,
    ids: Ids,
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerTape {
    ln1: LnCache,
    a: Vec<f64>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
    concat: Vec<f64>,
    ln2: LnCache,
    bn: Vec<f64>,
    h1: Vec<f64>,
    g: Vec<f64>,
}

struct TapeData {
    xin: Vec<f64>,
    temb: Vec<f64>,
    a1: Vec<f64>,
    s1: Vec<f64>,
    text: Vec<f64>,
    layers: Vec<LayerTape>,
    lnf: LnCache,
    fpred: Vec<f64>,
}

/// Activations recorded by [`Denoiser::forward_recorded`]. An empty tape
/// (the `Default`) cannot be differentiated.
#[derive(Default)]
pub struct Tape {
    data: Option<TapeData>,
}

impl Tape {
    pub fn is_recorded(&self) -> bool {
        self.data.is_some()
    }
}

fn layer_norm(x: &[f64], rows: usize, d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let xh = (row[c] - mean) * rs;
            xhat[r * d + c] = xh;
            y[r * d + c] = g[c] * xh + b[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(dy: &[f64], cache: &LnCache, d: usize, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let rows = cache.rstd.len();
    let mut dx = vec![0.0; rows * d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for c in 0..d {
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
            let dxh = dyr[c] * g[c];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[c];
        }
        mean_dxh /= d as f64;
        mean_dxh_xh /= d as f64;
        for c in 0..d {
            let dxh = dyr[c] * g[c];
            dx[r * d + c] = cache.rstd[r] * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
        }
    }
    dx
}

const GELU_C: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    let u = (2.0 / PI).sqrt() * (x + GELU_C * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let k = (2.0 / PI).sqrt();
    let th = (k * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * k * (1.0 + 3.0 * GELU_C * x * x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

fn gather_cols(src: &[f64], rows: usize, stride: usize, start: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        out.extend_from_slice(&src[r * stride + start..r * stride + start + width]);
    }
    out
}

fn scatter_cols(dst: &mut [f64], rows: usize, stride: usize, start: usize, width: usize, src: &[f64]) {
    for r in 0..rows {
        for c in 0..width {
            dst[r * stride + start + c] += src[r * width + c];
        }
    }
}

/// Disjoint mutable views of two parameter tensors inside a gradient buffer.
fn pair_mut<'a>(buf: &'a mut [f64], store: &ParamStore, a: ParamId, b: ParamId) -> (&'a mut [f64], &'a mut [f64]) {
    let ra = store.specs[a.0].range();
    let rb = store.specs[b.0].range();
    assert!(ra.end <= rb.start, "parameter tensors must be ordered");
    let (lo, hi) = buf.split_at_mut(rb.start);
    (&mut lo[ra], &mut hi[..rb.len()])
}

impl Denoiser {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        let mut d = Self::zeroed(config)?;
        d.init(seed);
        Ok(d)
    }

    /// Parameters all zero except the frozen positional table.
    pub fn zeroed(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let (params, ids) = Self::layout(&config);
        let mut d = Self { config, params, ids };
        let table = positional_table(HISTORY_LEN + WINDOW_LEN, config.hidden);
        d.params.get_mut(d.ids.pos).copy_from_slice(&table);
        Ok(d)
    }

    fn layout(c: &DenoiserConfig) -> (ParamStore, Ids) {
        let d = c.hidden;
        let ff = c.ff();
        let mut s = ParamStore::default();
        let in_w = s.add("in.weight", &[FRAME_DIM, d], true);
        let in_b = s.add("in.bias", &[d], true);
        let pos = s.add("pos.table", &[HISTORY_LEN + WINDOW_LEN, d], false);
        let t_w1 = s.add("time.fc1.weight", &[c.time_embed_dim, d], true);
        let t_b1 = s.add("time.fc1.bias", &[d], true);
        let t_w2 = s.add("time.fc2.weight", &[d, d], true);
        let t_b2 = s.add("time.fc2.bias", &[d], true);
        let c_w = s.add("text.weight", &[c.text_embed_dim, d], true);
        let c_b = s.add("text.bias", &[d], true);
        let layers = (0..c.layers)
            .map(|l| LayerIds {
                ln1_g: s.add(format!("block{l}.ln1.gain"), &[d], true),
                ln1_b: s.add(format!("block{l}.ln1.bias"), &[d], true),
                qkv_w: s.add(format!("block{l}.attn.qkv.weight"), &[d, 3 * d], true),
                qkv_b: s.add(format!("block{l}.attn.qkv.bias"), &[3 * d], true),
                o_w: s.add(format!("block{l}.attn.out.weight"), &[d, d], true),
                o_b: s.add(format!("block{l}.attn.out.bias"), &[d], true),
                ln2_g: s.add(format!("block{l}.ln2.gain"), &[d], true),
                ln2_b: s.add(format!("block{l}.ln2.bias"), &[d], true),
                f1_w: s.add(format!("block{l}.mlp.fc1.weight"), &[d, ff], true),
                f1_b: s.add(format!("block{l}.mlp.fc1.bias"), &[ff], true),
                f2_w: s.add(format!("block{l}.mlp.fc2.weight"), &[ff, d], true),
                f2_b: s.add(format!("block{l}.mlp.fc2.bias"), &[d], true),
            })
            .collect();
        let lnf_g = s.add("final_ln.gain", &[d], true);
        let lnf_b = s.add("final_ln.bias", &[d], true);
        let head_w = s.add("head.weight", &[d, FRAME_DIM], true);
        let head_b = s.add("head.bias", &[FRAME_DIM], true);
        let ids = Ids { in_w, in_b, pos, t_w1, t_b1, t_w2, t_b2, c_w, c_b, layers, lnf_g, lnf_b, head_w, head_b };
        (s, ids)
    }

    fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.config.hidden;
        let depth_scale = 1.0 / (2.0 * self.config.layers as f64).sqrt();
        let mut fill = |store: &mut ParamStore, id: ParamId, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in store.get_mut(id) {
                *v = normal.sample(&mut rng);
            }
        };
        let ids = self.ids.clone();
        let p = &mut self.params;
        fill(p, ids.in_w, 1.0 / (FRAME_DIM as f64).sqrt());
        fill(p, ids.t_w1, 1.0 / (self.config.time_embed_dim as f64).sqrt());
        fill(p, ids.t_w2, 1.0 / (d as f64).sqrt());
        fill(p, ids.c_w, 1.0 / (self.config.text_embed_dim as f64).sqrt());
        for l in &ids.layers {
            p.get_mut(l.ln1_g).fill(1.0);
            p.get_mut(l.ln2_g).fill(1.0);
            fill(p, l.qkv_w, 1.0 / (d as f64).sqrt());
            fill(p, l.o_w, depth_scale / (d as f64).sqrt());
            fill(p, l.f1_w, 1.0 / (d as f64).sqrt());
            fill(p, l.f2_w, depth_scale / (self.config.ff() as f64).sqrt());
        }
        p.get_mut(ids.lnf_g).fill(1.0);
        fill(p, ids.head_w, 0.5 / (d as f64).sqrt());
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn condition(&self, step: usize, text: &TextEmbedding) -> ConditionBundle {
        ConditionBundle::new(step, self.config.time_embed_dim, text)
    }

    fn check_inputs(&self, z_t: &[f64], history: &[f64], cond: &ConditionBundle) -> Result<()> {
        if z_t.len() != WINDOW_LEN * FRAME_DIM {
            return Err(invalid(format!("noisy window has {} values, expected {}", z_t.len(), WINDOW_LEN * FRAME_DIM)));
        }
        if history.len() != HISTORY_LEN * FRAME_DIM {
            return Err(invalid(format!("history has {} values, expected {}", history.len(), HISTORY_LEN * FRAME_DIM)));
        }
        if cond.t_embed.len() != self.config.time_embed_dim || cond.text_embed.len() != self.config.text_embed_dim {
            return Err(invalid("condition embedding dimensions do not match the denoiser"));
        }
        Ok(())
    }

    /// Prediction of the clean `k x 443` window.
    pub fn forward(&self, z_t: &[f64], history: &[f64], cond: &ConditionBundle) -> Result<Vec<f64>> {
        self.check_inputs(z_t, history, cond)?;
        Ok(self.run(z_t, history, cond).0)
    }

    pub fn forward_recorded(&self, z_t: &[f64], history: &[f64], cond: &ConditionBundle) -> Result<(Vec<f64>, Tape)> {
        self.check_inputs(z_t, history, cond)?;
        let (out, data) = self.run(z_t, history, cond);
        Ok((out, Tape { data: Some(data) }))
    }

    fn run(&self, z_t: &[f64], history: &[f64], cond: &ConditionBundle) -> (Vec<f64>, TapeData) {
        let p = &self.params;
        let ids = &self.ids;
        let c = &self.config;
        let d = c.hidden;
        let n_tok = HISTORY_LEN + WINDOW_LEN;
        let s_len = n_tok + COND_TOKENS;

        let mut xin = Vec::with_capacity(n_tok * FRAME_DIM);
        xin.extend_from_slice(history);
        xin.extend_from_slice(z_t);
        let emb = linear(&xin, n_tok, FRAME_DIM, p.get(ids.in_w), p.get(ids.in_b), d);

        let temb = cond.t_embed.clone();
        let a1 = linear(&temb, 1, c.time_embed_dim, p.get(ids.t_w1), p.get(ids.t_b1), d);
        let s1: Vec<f64> = a1.iter().map(|&v| silu(v)).collect();
        let tau = linear(&s1, 1, d, p.get(ids.t_w2), p.get(ids.t_b2), d);
        let text = cond.text_embed.clone();
        let ctok = linear(&text, 1, c.text_embed_dim, p.get(ids.c_w), p.get(ids.c_b), d);

        let pos = p.get(ids.pos);
        let mut x = vec![0.0; s_len * d];
        x[..d].copy_from_slice(&tau);
        x[d..2 * d].copy_from_slice(&ctok);
        for i in 0..n_tok {
            for j in 0..d {
                x[(COND_TOKENS + i) * d + j] = emb[i * d + j] + pos[i * d + j] + tau[j];
            }
        }

        let heads = c.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let ff = c.ff();
        let mut layers = Vec::with_capacity(c.layers);
        for l in &ids.layers {
            let (a, ln1) = layer_norm(&x, s_len, d, p.get(l.ln1_g), p.get(l.ln1_b));
            let qkv = linear(&a, s_len, d, p.get(l.qkv_w), p.get(l.qkv_b), 3 * d);
            let mut concat = vec![0.0; s_len * d];
            let (mut qs, mut ks, mut vs, mut probs) = (vec![], vec![], vec![], vec![]);
            for hh in 0..heads {
                let q = gather_cols(&qkv, s_len, 3 * d, hh * dh, dh);
                let k = gather_cols(&qkv, s_len, 3 * d, d + hh * dh, dh);
                let v = gather_cols(&qkv, s_len, 3 * d, 2 * d + hh * dh, dh);
                let mut sc = vec![0.0; s_len * s_len];
                gemm(s_len, dh, s_len, &q, false, &k, true, &mut sc, 0.0);
                for row in sc.chunks_exact_mut(s_len) {
                    let mx = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v * scale));
                    let mut sum = 0.0;
                    for e in row.iter_mut() {
                        *e = (*e * scale - mx).exp();
                        sum += *e;
                    }
                    row.iter_mut().for_each(|e| *e /= sum);
                }
                let mut o = vec![0.0; s_len * dh];
                gemm(s_len, s_len, dh, &sc, false, &v, false, &mut o, 0.0);
                scatter_cols(&mut concat, s_len, d, hh * dh, dh, &o);
                qs.push(q);
                ks.push(k);
                vs.push(v);
                probs.push(sc);
            }
            let proj = linear(&concat, s_len, d, p.get(l.o_w), p.get(l.o_b), d);
            x.iter_mut().zip(&proj).for_each(|(a, b)| *a += b);
            let (bn, ln2) = layer_norm(&x, s_len, d, p.get(l.ln2_g), p.get(l.ln2_b));
            let h1 = linear(&bn, s_len, d, p.get(l.f1_w), p.get(l.f1_b), ff);
            let g: Vec<f64> = h1.iter().map(|&v| gelu(v)).collect();
            let f2 = linear(&g, s_len, ff, p.get(l.f2_w), p.get(l.f2_b), d);
            x.iter_mut().zip(&f2).for_each(|(a, b)| *a += b);
            layers.push(LayerTape { ln1, a, q: qs, k: ks, v: vs, probs, concat, ln2, bn, h1, g });
        }
        let (fin, lnf) = layer_norm(&x, s_len, d, p.get(ids.lnf_g), p.get(ids.lnf_b));
        let fpred = fin[(COND_TOKENS + HISTORY_LEN) * d..].to_vec();
        let out = linear(&fpred, WINDOW_LEN, d, p.get(ids.head_w), p.get(ids.head_b), FRAME_DIM);
        (out, TapeData { xin, temb, a1, s1, text, layers, lnf, fpred })
    }

    /// Accumulates parameter gradients of a scalar loss into `grads`, given
    /// the loss gradient with respect to the prediction. Frozen tensors
    /// receive gradients too; the optimizer skips them.
    pub fn backward(&self, tape: &Tape, dout: &[f64], grads: &mut [f64]) -> Result<()> {
        let t = tape
            .data
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a recorded forward pass".into()))?;
        if dout.len() != WINDOW_LEN * FRAME_DIM {
            return Err(invalid("upstream gradient has the wrong shape"));
        }
        if grads.len() != self.params.len() {
            return Err(invalid("gradient buffer has the wrong size"));
        }
        let p = &self.params;
        let ids = &self.ids;
        let c = &self.config;
        let d = c.hidden;
        let ff = c.ff();
        let n_tok = HISTORY_LEN + WINDOW_LEN;
        let s_len = n_tok + COND_TOKENS;
        let heads = c.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let (gw, gb) = pair_mut(grads, p, ids.head_w, ids.head_b);
        let dfpred = linear_backward(&t.fpred, WINDOW_LEN, d, p.get(ids.head_w), FRAME_DIM, dout, gw, gb, true)
            .expect("requested");
        let mut dfin = vec![0.0; s_len * d];
        dfin[(COND_TOKENS + HISTORY_LEN) * d..].copy_from_slice(&dfpred);
        let (gg, gb) = pair_mut(grads, p, ids.lnf_g, ids.lnf_b);
        let mut dx = layer_norm_backward(&dfin, &t.lnf, d, p.get(ids.lnf_g), gg, gb);

        for (l, lt) in ids.layers.iter().zip(&t.layers).rev() {
            let (gw, gb) = pair_mut(grads, p, l.f2_w, l.f2_b);
            let dg = linear_backward(&lt.g, s_len, ff, p.get(l.f2_w), d, &dx, gw, gb, true).expect("requested");
            let dh1: Vec<f64> = dg.iter().zip(&lt.h1).map(|(g, &h)| g * gelu_grad(h)).collect();
            let (gw, gb) = pair_mut(grads, p, l.f1_w, l.f1_b);
            let dbn = linear_backward(&lt.bn, s_len, d, p.get(l.f1_w), ff, &dh1, gw, gb, true).expect("requested");
            let (gg, gb) = pair_mut(grads, p, l.ln2_g, l.ln2_b);
            let dmid = layer_norm_backward(&dbn, &lt.ln2, d, p.get(l.ln2_g), gg, gb);
            dx.iter_mut().zip(&dmid).for_each(|(a, b)| *a += b);

            let (gw, gb) = pair_mut(grads, p, l.o_w, l.o_b);
            let dconcat = linear_backward(&lt.concat, s_len, d, p.get(l.o_w), d, &dx, gw, gb, true).expect("requested");
            let mut dqkv = vec![0.0; s_len * 3 * d];
            for hh in 0..heads {
                let dout_h = gather_cols(&dconcat, s_len, d, hh * dh, dh);
                let probs = &lt.probs[hh];
                let mut dp = vec![0.0; s_len * s_len];
                gemm(s_len, dh, s_len, &dout_h, false, &lt.v[hh], true, &mut dp, 0.0);
                let mut dv = vec![0.0; s_len * dh];
                gemm(s_len, s_len, dh, probs, true, &dout_h, false, &mut dv, 0.0);
                for r in 0..s_len {
                    let pr = &probs[r * s_len..(r + 1) * s_len];
                    let dr = &mut dp[r * s_len..(r + 1) * s_len];
                    let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                    for (dv, pv) in dr.iter_mut().zip(pr) {
                        *dv = pv * (*dv - dot) * scale;
                    }
                }
                let mut dq = vec![0.0; s_len * dh];
                gemm(s_len, s_len, dh, &dp, false, &lt.k[hh], false, &mut dq, 0.0);
                let mut dk = vec![0.0; s_len * dh];
                gemm(s_len, s_len, dh, &dp, true, &lt.q[hh], false, &mut dk, 0.0);
                scatter_cols(&mut dqkv, s_len, 3 * d, hh * dh, dh, &dq);
                scatter_cols(&mut dqkv, s_len, 3 * d, d + hh * dh, dh, &dk);
                scatter_cols(&mut dqkv, s_len, 3 * d, 2 * d + hh * dh, dh, &dv);
            }
            let (gw, gb) = pair_mut(grads, p, l.qkv_w, l.qkv_b);
            let da = linear_backward(&lt.a, s_len, d, p.get(l.qkv_w), 3 * d, &dqkv, gw, gb, true).expect("requested");
            let (gg, gb) = pair_mut(grads, p, l.ln1_g, l.ln1_b);
            let din = layer_norm_backward(&da, &lt.ln1, d, p.get(l.ln1_g), gg, gb);
            dx.iter_mut().zip(&din).for_each(|(a, b)| *a += b);
        }

        let mut dtau = dx[..d].to_vec();
        let dctok = dx[d..2 * d].to_vec();
        let demb = &dx[COND_TOKENS * d..];
        for row in demb.chunks_exact(d) {
            dtau.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let pos_range = p.specs[ids.pos.0].range();
        grads[pos_range].iter_mut().zip(demb).for_each(|(a, b)| *a += b);

        let (gw, gb) = pair_mut(grads, p, ids.in_w, ids.in_b);
        linear_backward(&t.xin, n_tok, FRAME_DIM, p.get(ids.in_w), d, demb, gw, gb, false);
        let (gw, gb) = pair_mut(grads, p, ids.c_w, ids.c_b);
        linear_backward(&t.text, 1, c.text_embed_dim, p.get(ids.c_w), d, &dctok, gw, gb, false);
        let (gw, gb) = pair_mut(grads, p, ids.t_w2, ids.t_b2);
        let ds1 = linear_backward(&t.s1, 1, d, p.get(ids.t_w2), d, &dtau, gw, gb, true).expect("requested");
        let da1: Vec<f64> = ds1.iter().zip(&t.a1).map(|(g, &a)| g * silu_grad(a)).collect();
        let (gw, gb) = pair_mut(grads, p, ids.t_w1, ids.t_b1);
        linear_backward(&t.temb, 1, c.time_embed_dim, p.get(ids.t_w1), d, &da1, gw, gb, false);
        Ok(())
    }

    pub fn head_bias(&self) -> &[f64] {
        self.params.get(self.ids.head_b)
    }

    pub fn head_bias_mut(&mut self) -> &mut [f64] {
        let id = self.ids.head_b;
        self.params.get_mut(id)
    }
}

impl Denoise for Denoiser {
    fn denoise(&self, z_t: &[f64], history: &[f64], t: usize, text: &TextEmbedding) -> Result<Vec<f64>> {
        self.forward(z_t, history, &self.condition(t, text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::text::embed_text;
    use rand::Rng;

    fn inputs(seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..WINDOW_LEN * FRAME_DIM).map(|_| rng.random::<f64>() - 0.5).collect();
        let h: Vec<f64> = (0..HISTORY_LEN * FRAME_DIM).map(|_| rng.random::<f64>() - 0.5).collect();
        (z, h)
    }

    fn small() -> DenoiserConfig {
        DenoiserConfig { layers: 1, hidden: 8, heads: 2, time_embed_dim: 6, text_embed_dim: 5, ff_mult: 2 }
    }

    #[test]
    fn config_validation() {
        assert!(DenoiserConfig::tiny().validate().is_ok());
        assert!(DenoiserConfig::full().validate().is_ok());
        let mut c = DenoiserConfig::tiny();
        c.heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn output_shape_and_determinism() {
        let net = Denoiser::new(small(), 1).unwrap();
        let (z, h) = inputs(2);
        let cond = net.condition(3, &embed_text("mirror", 5));
        let a = net.forward(&z, &h, &cond).unwrap();
        let b = net.forward(&z, &h, &cond).unwrap();
        assert_eq!(a.len(), WINDOW_LEN * FRAME_DIM);
        assert_eq!(a, b);
        assert!(net.forward(&z[1..], &h, &cond).is_err());
    }

    #[test]
    fn zero_params_give_head_bias() {
        let mut net = Denoiser::zeroed(small()).unwrap();
        let bias: Vec<f64> = (0..FRAME_DIM).map(|i| (i as f64).sin()).collect();
        net.head_bias_mut().copy_from_slice(&bias);
        let (z, h) = inputs(3);
        let out = net.forward(&z, &h, &net.condition(1, &embed_text("x", 5))).unwrap();
        for row in out.chunks_exact(FRAME_DIM) {
            assert_eq!(row, &bias[..]);
        }
    }

    #[test]
    fn history_order_matters() {
        let net = Denoiser::new(small(), 4).unwrap();
        let (z, h) = inputs(5);
        let mut rev: Vec<f64> = Vec::new();
        for row in h.chunks_exact(FRAME_DIM).rev() {
            rev.extend_from_slice(row);
        }
        let cond = net.condition(0, &TextEmbedding::null(5));
        let a = net.forward(&z, &h, &cond).unwrap();
        let b = net.forward(&z, &rev, &cond).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn backward_needs_recording() {
        let net = Denoiser::new(small(), 1).unwrap();
        let mut g = net.params.zeros_like();
        let err = net.backward(&Tape::default(), &vec![0.0; WINDOW_LEN * FRAME_DIM], &mut g);
        assert!(matches!(err, Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Denoiser::new(small(), 1).unwrap();
        let (z, h) = inputs(6);
        let (_, tape) = net.forward_recorded(&z, &h, &net.condition(2, &embed_text("a", 5))).unwrap();
        let mut g = net.params.zeros_like();
        net.backward(&tape, &vec![0.0; WINDOW_LEN * FRAME_DIM], &mut g).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn null_condition_uses_zero_text() {
        let net = Denoiser::new(small(), 1).unwrap();
        let text = embed_text("mirror", 5);
        let c = ConditionBundle::new(1, 6, &text.to_null());
        assert!(c.null_flag && c.text_embed.iter().all(|&v| v == 0.0));
        let (z, h) = inputs(7);
        let a = net.denoise(&z, &h, 1, &text.to_null()).unwrap();
        let b = net.forward(&z, &h, &ConditionBundle::new(1, 6, &TextEmbedding::null(5))).unwrap();
        assert_eq!(a, b);
    }
}
