use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_advantages, ppo_loss_and_grad, RewardMode, TPPOConfig};
use crate::datagen::{AnnotatorConfig, ChunkTokenizer, EpisodeRecord, RewardCategory, TokenBatch, Vocab, EOS_ID};
use crate::harness::Judge;
use crate::nn::log_softmax;
use crate::optim::{clip_grad_norm, Optimizer, OptimizerKind};
use crate::policy::{sample_response_with, EpisodeRollout, PolicyParams, Rollout, POLICY_HEAD, VALUE_HEAD};
use crate::reward_model::{lwp, predict_token_rewards, RMParams};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Prompts to roll out from, each with the topic lexicon of its user.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PromptSet {
    pub prompts: Vec<Vec<usize>>,
    pub lexicons: Vec<BTreeSet<String>>,
}

impl PromptSet {
    pub fn from_records(
        records: &[EpisodeRecord],
        tok: &ChunkTokenizer,
        vocab: &Vocab,
        rules: &AnnotatorConfig,
    ) -> Result<Self> {
        let mut set = PromptSet::default();
        for r in records {
            let mut ids = Vec::new();
            for w in &r.prompt_words {
                ids.extend(tok.tokenize(w)?.iter().map(|t| vocab.id(t)));
            }
            set.prompts.push(ids);
            set.lexicons.push(rules.lexicon(&r.history));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

/// One row of the training curve. Rewards and KL are per-episode sums,
/// measured on the rollouts that start the iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TppoRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub reward_std: f64,
    pub mean_kl: f64,
    pub mean_len: f64,
    /// Judge relevance rate of the sampled responses.
    pub relevance: f64,
    pub seed: u64,
    pub mode: RewardMode,
}

#[derive(Clone, Debug)]
pub struct TppoOutcome {
    pub policy: PolicyParams,
    pub curve: Vec<TppoRow>,
    /// Diagnostic when training stopped on the KL threshold.
    pub stopped_early: Option<String>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Task rewards of one response from its predicted token categories.
fn task_rewards(cats: &[RewardCategory], rules: &AnnotatorConfig, cfg: &TPPOConfig) -> Vec<f64> {
    let n = cats.len();
    match cfg.reward_mode {
        RewardMode::Token => cats
            .iter()
            .enumerate()
            .map(|(t, c)| cfg.category_rewards[c.index()] * lwp(t + 1, &cfg.length_penalty))
            .collect(),
        RewardMode::Sentence => {
            let mut r = vec![0.0; n];
            if n > 0 {
                let cat = rules.sentence_category(cats).unwrap_or(RewardCategory::Irrelevant);
                r[n - 1] = cfg.category_rewards[cat.index()] * lwp(n, &cfg.length_penalty);
            }
            r
        }
    }
}

/// Samples `cfg.batch_episodes` responses with the current policy and scores
/// them. Returns the rollout (advantages not yet filled) and the prompt index
/// of every episode.
pub fn rollout_batch(
    policy: &PolicyParams,
    anchor: &PolicyParams,
    rm: &RMParams,
    prompts: &PromptSet,
    rules: &AnnotatorConfig,
    cfg: &TPPOConfig,
    iteration: usize,
) -> Result<(Rollout, Vec<usize>)> {
    if prompts.is_empty() {
        return Err(Error::invalid("no prompts to roll out from"));
    }
    let base = (iteration * cfg.batch_episodes) as u64;
    let mut episodes: Vec<(usize, EpisodeRollout)> = (0..cfg.batch_episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::sub_rng(cfg.seed, stream::ROLLOUT, base + i as u64);
            let pi = rng.gen_range(0..prompts.len());
            let prompt = prompts.prompts[pi].clone();
            let actions = sample_response_with(policy, &prompt, cfg.max_len, cfg.temperature, &mut rng);
            let seq: Vec<usize> = prompt.iter().chain(&actions).copied().collect();
            let mut ep = EpisodeRollout {
                prompt,
                done: actions.last() == Some(&EOS_ID),
                ..Default::default()
            };
            for (t, &a) in actions.iter().enumerate() {
                let end = ep.prompt.len() + t;
                let act = policy.forward_state(&seq, end);
                ep.behavior_logp.push(log_softmax(&act.outputs[POLICY_HEAD])[a]);
                ep.values.push(act.outputs[VALUE_HEAD][0]);
                ep.anchor_logp
                    .push(log_softmax(&anchor.forward_state(&seq, end).outputs[POLICY_HEAD])[a]);
            }
            ep.actions = actions;
            (pi, ep)
        })
        .collect();

    let (ps, rs): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
        episodes.iter().map(|(_, e)| (e.prompt.clone(), e.actions.clone())).unzip();
    let cats = predict_token_rewards(rm, &TokenBatch::from_sequences(&ps, &rs))?;
    for ((_, ep), row) in episodes.iter_mut().zip(&cats) {
        let p = ep.prompt.len();
        ep.task_rewards = task_rewards(&row[p..p + ep.len()], rules, cfg);
        ep.rewards = ep
            .task_rewards
            .iter()
            .zip(ep.behavior_logp.iter().zip(&ep.anchor_logp))
            .map(|(r, (b, a))| r - cfg.beta * (b - a))
            .collect();
    }
    let (idx, episodes) = episodes.into_iter().unzip();
    Ok((Rollout { episodes }, idx))
}

fn summarize(rollout: &Rollout, idx: &[usize], prompts: &PromptSet, judge: &Judge, cfg: &TPPOConfig, it: usize) -> TppoRow {
    let totals: Vec<f64> = rollout.episodes.iter().map(|e| e.task_rewards.iter().sum()).collect();
    let kls: Vec<f64> = rollout
        .episodes
        .iter()
        .map(|e| e.behavior_logp.iter().zip(&e.anchor_logp).map(|(b, a)| b - a).sum())
        .collect();
    let lens: Vec<f64> = rollout
        .episodes
        .iter()
        .map(|e| e.actions.iter().filter(|&&a| a != EOS_ID).count() as f64)
        .collect();
    let scores: Vec<f64> = rollout
        .episodes
        .iter()
        .zip(idx)
        .map(|(e, &i)| judge.score(&e.actions, &prompts.lexicons[i]) as f64)
        .collect();
    let (mean_reward, reward_std) = mean_std(&totals);
    TppoRow {
        iteration: it,
        mean_reward,
        reward_std,
        mean_kl: mean_std(&kls).0,
        mean_len: mean_std(&lens).0,
        relevance: mean_std(&scores).0,
        seed: cfg.seed,
        mode: cfg.reward_mode,
    }
}

pub fn train_tppo(
    policy: &PolicyParams,
    rm: &RMParams,
    prompts: &PromptSet,
    judge: &Judge,
    cfg: &TPPOConfig,
) -> Result<TppoOutcome> {
    train_tppo_with(policy, rm, prompts, judge, cfg, |_, _| Ok(()))
}

/// Outer loop: roll out with the current policy (which becomes the ratio
/// reference for this iteration), compute advantages, then run `epochs`
/// passes of shuffled minibatch updates. The KL penalty is measured against
/// the starting policy. `on_iteration` sees each curve row and the policy
/// after that iteration's updates.
pub fn train_tppo_with<F>(
    policy: &PolicyParams,
    rm: &RMParams,
    prompts: &PromptSet,
    judge: &Judge,
    cfg: &TPPOConfig,
    mut on_iteration: F,
) -> Result<TppoOutcome>
where
    F: FnMut(&TppoRow, &PolicyParams) -> Result<()>,
{
    cfg.validate()?;
    if policy.vocab() != rm.vocab() {
        return Err(Error::invalid("policy and reward model vocabularies differ"));
    }
    let anchor = policy.clone();
    let mut current = policy.clone();
    let mut opt = Optimizer::new(OptimizerKind::Adam, cfg.lr, current.n_params());
    let loss_cfg = cfg.loss_config();
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut stopped_early = None;

    for it in 0..cfg.iterations {
        let (mut rollout, idx) = rollout_batch(&current, &anchor, rm, prompts, &judge.rules, cfg, it)?;
        compute_advantages(&mut rollout, cfg);
        let row = summarize(&rollout, &idx, prompts, judge, cfg, it);
        if !(row.mean_kl <= cfg.kl_stop) {
            stopped_early = Some(format!(
                "iteration {it}: mean KL to the initial policy {:.4} exceeds {}",
                row.mean_kl, cfg.kl_stop
            ));
            curve.push(row);
            break;
        }

        let mut order: Vec<usize> = (0..rollout.episodes.len()).collect();
        for epoch in 0..cfg.epochs {
            let mut rng = seed::sub_rng(cfg.seed, stream::MINIBATCH, (it * cfg.epochs + epoch) as u64);
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch_episodes) {
                let mb: Vec<EpisodeRollout> = chunk.iter().map(|&i| rollout.episodes[i].clone()).collect();
                let (parts, mut grad) = ppo_loss_and_grad(&current, &mb, &loss_cfg);
                if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged {
                        step: it,
                        msg: format!("PPO loss became {}", parts.total),
                    });
                }
                clip_grad_norm(&mut grad, cfg.max_grad_norm);
                opt.step(&mut current.net.params, &grad);
            }
        }
        on_iteration(&row, &current)?;
        curve.push(row);
    }
    Ok(TppoOutcome {
        policy: current,
        curve,
        stopped_early,
    })
}
