use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{
    build_valid_set, global_loss, local_loss, loss_and_grad, rm_auc, rm_forward, token_accuracy,
    total_loss, GlobalVariant, RMParams, RmArch, ValidSet,
};
use crate::datagen::TokenBatch;
use crate::optim::{Optimizer, OptimizerKind};
use crate::seed::{self, stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RMTrainConfig {
    pub class_weights: [f64; 3],
    pub lambda_local: f64,
    pub lambda_global: f64,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    /// Draw a fresh class-balancing mask for every minibatch; otherwise the
    /// mask is drawn once per training run.
    pub resample_mask: bool,
    pub seed: u64,
    pub arch: RmArch,
}

impl Default for RMTrainConfig {
    fn default() -> Self {
        Self {
            class_weights: [0.2, 1.0, 1.0],
            lambda_local: 0.5,
            lambda_global: 0.5,
            optimizer: OptimizerKind::Sgd,
            lr: 0.05,
            steps: 2000,
            batch_size: 16,
            eval_every: 100,
            resample_mask: true,
            seed: 0,
            arch: RmArch::default(),
        }
    }
}

impl RMTrainConfig {
    /// Sets `lambda_local` and its complement.
    pub fn with_lambda_local(mut self, w: f64) -> Self {
        self.lambda_local = w;
        self.lambda_global = 1.0 - w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("class weights must be nonnegative"));
        }
        if self.lambda_local < 0.0 || self.lambda_global < 0.0 {
            return Err(Error::invalid("loss weights must be nonnegative"));
        }
        if (self.lambda_local + self.lambda_global - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("lambda_local + lambda_global must equal 1"));
        }
        if !(self.lr > 0.0) || self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::invalid("lr, steps, batch_size and eval_every must be positive"));
        }
        Ok(())
    }
}

/// One logged point of the reward-model training curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmCurveRow {
    pub step: usize,
    /// Mean minibatch total loss since the previous row.
    pub train_loss: f64,
    /// Total loss (training variant) on the evaluation set.
    pub eval_loss: f64,
    pub auc: Option<f64>,
    pub eval_local_loss: f64,
    pub eval_global_argmax: f64,
    pub eval_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RmTrainOutcome {
    pub params: RMParams,
    pub curve: Vec<RmCurveRow>,
}

impl RmTrainOutcome {
    pub fn final_row(&self) -> &RmCurveRow {
        self.curve.last().expect("training logs at least one row")
    }
}

/// Minibatch training on the combined loss.
pub fn train_reward_model(
    vocab: usize,
    train: &TokenBatch,
    eval: &TokenBatch,
    cfg: &RMTrainConfig,
) -> Result<RmTrainOutcome> {
    cfg.validate()?;
    if train.n_episodes() == 0 {
        return Err(Error::invalid("reward model needs training data"));
    }
    train.check_vocab(vocab)?;
    eval.check_vocab(vocab)?;
    let mut params = RMParams::init(vocab, &cfg.arch, &mut seed::rng(cfg.seed, stream::RM_INIT));
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, params.net.params.len());
    let eval_vs = build_valid_set(eval, cfg.seed ^ 0xe7a1);
    let fixed_mask = (!cfg.resample_mask).then(|| build_valid_set(train, cfg.seed));

    let mut curve = Vec::new();
    let (mut acc, mut acc_n) = (0.0, 0usize);
    let bs = cfg.batch_size.min(train.n_episodes());
    for step in 1..=cfg.steps {
        let mut rng = seed::sub_rng(cfg.seed, stream::RM_BATCH, step as u64);
        let mut rows = sample(&mut rng, train.n_episodes(), bs).into_vec();
        rows.sort_unstable();
        let batch = train.select(&rows);
        let vs = match &fixed_mask {
            Some(full) => restrict(full, &rows, &batch),
            None => build_valid_set(&batch, seed::derive(cfg.seed, step as u64)),
        };
        let (parts, grad) = loss_and_grad(
            &params,
            &batch,
            &vs,
            &cfg.class_weights,
            cfg.lambda_local,
            cfg.lambda_global,
        );
        if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                msg: format!("reward-model loss became {}", parts.total),
            });
        }
        opt.step(&mut params.net.params, &grad);
        acc += parts.total;
        acc_n += 1;
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let mut row = evaluate(&params, eval, &eval_vs, cfg)?;
            row.step = step;
            row.train_loss = acc / acc_n as f64;
            curve.push(row);
            acc = 0.0;
            acc_n = 0;
        }
    }
    Ok(RmTrainOutcome { params, curve })
}

fn restrict(full: &ValidSet, rows: &[usize], sub: &TokenBatch) -> ValidSet {
    let width = sub.width();
    let membership: Vec<Vec<bool>> = rows.iter().map(|&i| full.membership[i][..width].to_vec()).collect();
    let mut kept_counts = [0; 3];
    for (i, row) in membership.iter().enumerate() {
        for (t, &m) in row.iter().enumerate() {
            if m {
                kept_counts[sub.token_categories[i][t].index()] += 1;
            }
        }
    }
    ValidSet {
        empty: kept_counts.iter().sum::<usize>() == 0,
        kept_counts,
        membership,
    }
}

fn evaluate(params: &RMParams, eval: &TokenBatch, vs: &ValidSet, cfg: &RMTrainConfig) -> Result<RmCurveRow> {
    let out = rm_forward(params, eval)?;
    let local = local_loss(&out, eval, vs, &cfg.class_weights);
    let global = global_loss(&out, eval, vs, GlobalVariant::Expected);
    Ok(RmCurveRow {
        step: 0,
        train_loss: 0.0,
        eval_loss: total_loss(local, global, cfg.lambda_local, cfg.lambda_global),
        auc: rm_auc(&out, eval, vs),
        eval_local_loss: local,
        eval_global_argmax: global_loss(&out, eval, vs, GlobalVariant::Argmax),
        eval_accuracy: token_accuracy(&out, eval, vs),
    })
}
