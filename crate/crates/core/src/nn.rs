//! Windowed context network shared by the reward model and the policy.
//!
//! A state is the trailing `k_ctx` tokens of a sequence, left-padded with
//! `PAD_ID`. Each token is embedded, the embeddings are concatenated and fed
//! through one tanh layer, and each output head is affine in the hidden
//! activation. Padding embeds to the zero vector and receives no gradient.
//!
//! All parameters live in one flat vector so optimizers, finite-difference
//! checks and checkpoints can treat them uniformly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::PAD_ID;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub vocab: usize,
    pub d_embed: usize,
    pub k_ctx: usize,
    pub hidden: usize,
    /// Output widths, one per head.
    pub heads: Vec<usize>,
}

impl NetShape {
    fn input_width(&self) -> usize {
        self.d_embed * self.k_ctx
    }

    pub fn embed_range(&self) -> std::ops::Range<usize> {
        0..self.vocab * self.d_embed
    }

    pub fn hidden_w_range(&self) -> std::ops::Range<usize> {
        let s = self.embed_range().end;
        s..s + self.hidden * self.input_width()
    }

    pub fn hidden_b_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden_w_range().end;
        s..s + self.hidden
    }

    /// Weight and bias ranges of head `k`.
    pub fn head_ranges(&self, k: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut s = self.hidden_b_range().end;
        for &w in &self.heads[..k] {
            s += w * self.hidden + w;
        }
        let w = self.heads[k];
        (s..s + w * self.hidden, s + w * self.hidden..s + w * self.hidden + w)
    }

    pub fn n_params(&self) -> usize {
        self.hidden_b_range().end + self.heads.iter().map(|w| w * self.hidden + w).sum::<usize>()
    }

    /// Named parameter blocks, for diagnostics.
    pub fn blocks(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut b = vec![
            ("embed".to_string(), self.embed_range()),
            ("hidden.w".to_string(), self.hidden_w_range()),
            ("hidden.b".to_string(), self.hidden_b_range()),
        ];
        for k in 0..self.heads.len() {
            let (w, bias) = self.head_ranges(k);
            b.push((format!("head{k}.w"), w));
            b.push((format!("head{k}.b"), bias));
        }
        b
    }

    pub fn block_of(&self, index: usize) -> String {
        self.blocks()
            .into_iter()
            .find(|(_, r)| r.contains(&index))
            .map(|(n, r)| format!("{n}[{}]", index - r.start))
            .unwrap_or_else(|| format!("#{index}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextNet {
    pub shape: NetShape,
    pub params: Vec<f64>,
}

/// Forward activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Activation {
    pub window: Vec<usize>,
    pub hidden: Vec<f64>,
    pub outputs: Vec<Vec<f64>>,
}

/// Trailing `k` tokens of `seq[..end]`, left-padded.
pub fn context_window(seq: &[usize], end: usize, k: usize) -> Vec<usize> {
    let start = end.saturating_sub(k);
    let mut w = vec![PAD_ID; k - (end - start)];
    w.extend_from_slice(&seq[start..end]);
    w
}

impl ContextNet {
    pub fn init<R: Rng>(shape: NetShape, head_std: f64, rng: &mut R) -> Self {
        let mut params = vec![0.0; shape.n_params()];
        let embed = Normal::new(0.0, 1.0).expect("std");
        let hid = Normal::new(0.0, 1.0 / (shape.input_width() as f64).sqrt()).expect("std");
        for (i, p) in params[shape.embed_range()].iter_mut().enumerate() {
            if i / shape.d_embed != PAD_ID {
                *p = embed.sample(rng);
            }
        }
        for p in &mut params[shape.hidden_w_range()] {
            *p = hid.sample(rng);
        }
        if head_std > 0.0 {
            let head = Normal::new(0.0, head_std).expect("std");
            for k in 0..shape.heads.len() {
                for p in &mut params[shape.head_ranges(k).0] {
                    *p = head.sample(rng);
                }
            }
        }
        Self { shape, params }
    }

    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.n_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                shape.n_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(Self { shape, params })
    }

    pub fn zero_head(&mut self, k: usize) {
        let (w, b) = self.shape.head_ranges(k);
        self.params[w].fill(0.0);
        self.params[b].fill(0.0);
    }

    pub fn forward(&self, window: &[usize]) -> Activation {
        let s = &self.shape;
        debug_assert_eq!(window.len(), s.k_ctx);
        let d = s.d_embed;
        let wh = &self.params[s.hidden_w_range()];
        let bh = &self.params[s.hidden_b_range()];
        let emb = &self.params[s.embed_range()];
        let in_w = s.input_width();
        let mut hidden = bh.to_vec();
        for (p, &id) in window.iter().enumerate() {
            if id == PAD_ID {
                continue;
            }
            let e = &emb[id * d..(id + 1) * d];
            for (j, h) in hidden.iter_mut().enumerate() {
                let row = &wh[j * in_w + p * d..j * in_w + (p + 1) * d];
                *h += row.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for h in &mut hidden {
            *h = h.tanh();
        }
        let outputs = (0..s.heads.len())
            .map(|k| {
                let (wr, br) = s.head_ranges(k);
                let w = &self.params[wr];
                self.params[br]
                    .iter()
                    .enumerate()
                    .map(|(o, b)| {
                        b + w[o * s.hidden..(o + 1) * s.hidden]
                            .iter()
                            .zip(&hidden)
                            .map(|(a, h)| a * h)
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        Activation {
            window: window.to_vec(),
            hidden,
            outputs,
        }
    }

    /// Accumulates into `grad` the parameter gradient for output gradients
    /// `d_outputs` (one slice per head; `None` skips a head).
    pub fn backward(&self, act: &Activation, d_outputs: &[Option<&[f64]>], grad: &mut [f64]) {
        let s = &self.shape;
        let d = s.d_embed;
        let in_w = s.input_width();
        let mut d_hidden = vec![0.0; s.hidden];
        for (k, dout) in d_outputs.iter().enumerate() {
            let Some(dout) = dout else { continue };
            let (wr, br) = s.head_ranges(k);
            for (o, &g) in dout.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[br.start + o] += g;
                let wrow = wr.start + o * s.hidden;
                for j in 0..s.hidden {
                    grad[wrow + j] += g * act.hidden[j];
                    d_hidden[j] += g * self.params[wrow + j];
                }
            }
        }
        let hb = s.hidden_b_range().start;
        let hw = s.hidden_w_range().start;
        let emb = s.embed_range().start;
        for (j, dh) in d_hidden.iter().enumerate() {
            let dpre = dh * (1.0 - act.hidden[j] * act.hidden[j]);
            if dpre == 0.0 {
                continue;
            }
            grad[hb + j] += dpre;
            for (p, &id) in act.window.iter().enumerate() {
                if id == PAD_ID {
                    continue;
                }
                let w0 = hw + j * in_w + p * d;
                let e0 = emb + id * d;
                for q in 0..d {
                    grad[w0 + q] += dpre * self.params[e0 + q];
                    grad[e0 + q] += dpre * self.params[w0 + q];
                }
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Backpropagates `dL/dp` through a softmax: `dL/dz_k = p_k (g_k - <g, p>)`.
pub fn softmax_backward(probs: &[f64], d_probs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(d_probs).map(|(p, g)| p * g).sum();
    probs.iter().zip(d_probs).map(|(p, g)| p * (g - dot)).collect()
}
