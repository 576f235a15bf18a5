use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PolicyParams, POLICY_HEAD};
use crate::datagen::TokenBatch;
use crate::nn::softmax;
use crate::optim::{clip_grad_norm, Optimizer, OptimizerKind};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Maximum-likelihood warm start on reference responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 600,
            batch_size: 32,
            lr: 3e-3,
            seed: 0,
        }
    }
}

/// Mean negative log-likelihood of the response tokens of `rows`, with its gradient.
pub fn nll_and_grad(params: &PolicyParams, batch: &TokenBatch, rows: &[usize]) -> (f64, Vec<f64>) {
    let per_row: Vec<(f64, usize, Vec<f64>)> = rows
        .par_iter()
        .map(|&i| {
            let seq = batch.sequence(i);
            let mut g = vec![0.0; params.n_params()];
            let mut nll = 0.0;
            let mut n = 0;
            for t in batch.prompt_lens[i]..seq.len() {
                let act = params.forward_state(seq, t);
                let mut p = softmax(&act.outputs[POLICY_HEAD]);
                nll -= p[seq[t]].ln();
                p[seq[t]] -= 1.0;
                params.net.backward(&act, &[Some(&p), None], &mut g);
                n += 1;
            }
            (nll, n, g)
        })
        .collect();
    let n: usize = per_row.iter().map(|r| r.1).sum::<usize>().max(1);
    let mut grad = vec![0.0; params.n_params()];
    let mut nll = 0.0;
    for (l, _, g) in per_row {
        nll += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n as f64);
    (nll / n as f64, grad)
}

/// Adam on the response NLL. Returns the per-step training loss.
pub fn pretrain_policy(params: &mut PolicyParams, data: &TokenBatch, cfg: &PretrainConfig) -> Result<Vec<f64>> {
    if data.n_episodes() == 0 {
        return Err(Error::invalid("pretraining needs data"));
    }
    data.check_vocab(params.vocab())?;
    let mut opt = Optimizer::new(OptimizerKind::Adam, cfg.lr, params.n_params());
    let bs = cfg.batch_size.min(data.n_episodes());
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rng = seed::sub_rng(cfg.seed, stream::PRETRAIN, step as u64);
        let mut rows = sample(&mut rng, data.n_episodes(), bs).into_vec();
        rows.sort_unstable();
        let (loss, mut grad) = nll_and_grad(params, data, &rows);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                msg: format!("pretraining loss became {loss}"),
            });
        }
        clip_grad_norm(&mut grad, 5.0);
        opt.step(&mut params.net.params, &grad);
        curve.push(loss);
    }
    Ok(curve)
}
