use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{cell, Table};
use super::{relevance_rate, Judge, JudgeTemplate};
use crate::datagen::{generate_corpus, ChunkTokenizer, CorpusConfig, EpisodeRecord, TokenBatch, Vocab, EOS_ID};
use crate::optim::OptimizerKind;
use crate::policy::{pretrain_policy, sample_response_with, PolicyArch, PolicyParams, PretrainConfig};
use crate::reward_model::{train_reward_model, RMTrainConfig, RmTrainOutcome};
use crate::seed::{self, stream};
use crate::tppo::{train_tppo_with, PromptSet, TPPOConfig, TppoOutcome, TppoRow};
use crate::Result;

/// Everything needed to run one experiment end to end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub chunk_len: usize,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub corpus: CorpusConfig,
    pub rm: RMTrainConfig,
    pub policy_arch: PolicyArch,
    pub pretrain: PretrainConfig,
    pub tppo: TPPOConfig,
    pub judge: JudgeTemplate,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            chunk_len: 3,
            train_episodes: 10_000,
            eval_episodes: 200,
            // responses of every length and word layout the policy can produce
            corpus: CorpusConfig {
                target_query_num: 8,
                min_target_queries: Some(1),
                separator_prob: 0.5,
                ..Default::default()
            },
            // plain SGD does not learn the context-dependent labels in 2k steps
            rm: RMTrainConfig {
                optimizer: OptimizerKind::Adam,
                lr: 3e-3,
                batch_size: 32,
                ..Default::default()
            },
            policy_arch: PolicyArch::default(),
            pretrain: PretrainConfig::default(),
            tppo: TPPOConfig::default(),
            judge: JudgeTemplate::TokenAggregate,
        }
    }
}

impl ExperimentConfig {
    /// Copies the top-level seed into every stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.rm.seed = seed;
        self.pretrain.seed = seed;
        self.tppo.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ChunkTokenizer::new(self.chunk_len)?;
        self.corpus.validate()?;
        self.rm.validate()?;
        self.tppo.validate()?;
        if self.train_episodes == 0 || self.eval_episodes == 0 {
            return Err(crate::Error::invalid("episode counts must be positive"));
        }
        Ok(())
    }
}

/// Corpus, vocabulary and encoded batches of one seed.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub tokenizer: ChunkTokenizer,
    pub vocab: Vocab,
    pub train_records: Vec<EpisodeRecord>,
    pub eval_records: Vec<EpisodeRecord>,
    pub train_batch: TokenBatch,
    pub eval_batch: TokenBatch,
}

pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let tokenizer = ChunkTokenizer::new(cfg.chunk_len)?;
    let vocab = Vocab::for_world(&cfg.corpus, &tokenizer)?;
    let train_records = generate_corpus(cfg.seed, cfg.train_episodes, &cfg.corpus)?;
    // held-out users come from a separate stream of the same seed
    let eval_records = generate_corpus(seed::derive(cfg.seed, stream::EVAL), cfg.eval_episodes, &cfg.corpus)?;
    let train_batch = TokenBatch::encode(&train_records, &tokenizer, &vocab)?;
    let eval_batch = TokenBatch::encode(&eval_records, &tokenizer, &vocab)?;
    Ok(Dataset {
        tokenizer,
        vocab,
        train_records,
        eval_records,
        train_batch,
        eval_batch,
    })
}

pub fn train_rm_stage(cfg: &ExperimentConfig, data: &Dataset) -> Result<RmTrainOutcome> {
    train_reward_model(data.vocab.len(), &data.train_batch, &data.eval_batch, &cfg.rm)
}

/// Initial policy: maximum likelihood on the training responses.
pub fn pretrain_stage(cfg: &ExperimentConfig, data: &Dataset) -> Result<(PolicyParams, Vec<f64>)> {
    let mut policy = PolicyParams::init(
        data.vocab.len(),
        &cfg.policy_arch,
        &mut seed::rng(cfg.seed, stream::POLICY_INIT),
    );
    let curve = pretrain_policy(&mut policy, &data.train_batch, &cfg.pretrain)?;
    Ok((policy, curve))
}

/// Outputs of the stages that precede policy optimization.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub data: Dataset,
    pub rm: RmTrainOutcome,
    pub sft: PolicyParams,
    pub pretrain_curve: Vec<f64>,
    pub train_prompts: PromptSet,
    pub eval_prompts: PromptSet,
    pub judge: Judge,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let data = build_dataset(cfg)?;
    let (rm, sft) = rayon::join(|| train_rm_stage(cfg, &data), || pretrain_stage(cfg, &data));
    let (rm, (sft, pretrain_curve)) = (rm?, sft?);
    let rules = &cfg.corpus.annotator;
    let train_prompts = PromptSet::from_records(&data.train_records, &data.tokenizer, &data.vocab, rules)?;
    let eval_prompts = PromptSet::from_records(&data.eval_records, &data.tokenizer, &data.vocab, rules)?;
    let judge = Judge::new(cfg.judge, rules.clone(), data.vocab.clone());
    Ok(Prepared {
        cfg: cfg.clone(),
        data,
        rm,
        sft,
        pretrain_curve,
        train_prompts,
        eval_prompts,
        judge,
    })
}

pub fn run_tppo<F>(prep: &Prepared, tppo: &TPPOConfig, on_iteration: F) -> Result<TppoOutcome>
where
    F: FnMut(&TppoRow, &PolicyParams) -> Result<()>,
{
    train_tppo_with(&prep.sft, &prep.rm.params, &prep.train_prompts, &prep.judge, tppo, on_iteration)
}

/// Judge scores of one sampled response per evaluation prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scores: Vec<u8>,
    pub relevance: f64,
    /// Mean response length in tokens, end-of-sequence excluded.
    pub mean_len: f64,
}

pub fn evaluate_policy(
    policy: &PolicyParams,
    prompts: &PromptSet,
    judge: &Judge,
    max_len: usize,
    temperature: f64,
    seed: u64,
) -> Result<EvalSummary> {
    let results: Vec<(u8, usize)> = (0..prompts.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::sub_rng(seed, stream::EVAL, i as u64);
            let r = sample_response_with(policy, &prompts.prompts[i], max_len, temperature, &mut rng);
            let len = r.iter().filter(|&&t| t != EOS_ID).count();
            (judge.score(&r, &prompts.lexicons[i]), len)
        })
        .collect();
    let scores: Vec<u8> = results.iter().map(|r| r.0).collect();
    let relevance = relevance_rate(&scores)?;
    let mean_len = results.iter().map(|r| r.1 as f64).sum::<f64>() / results.len() as f64;
    Ok(EvalSummary {
        scores,
        relevance,
        mean_len,
    })
}

/// Reward-model curve as a report table.
pub fn rm_curve_table(outcome: &RmTrainOutcome, seed: u64) -> Table {
    let mut t = Table::new([
        "step",
        "train_loss",
        "eval_loss",
        "auc",
        "seed",
        "eval_local_loss",
        "eval_global_argmax",
        "eval_accuracy",
    ]);
    for r in &outcome.curve {
        t.push(vec![
            r.step.to_string(),
            r.train_loss.to_string(),
            r.eval_loss.to_string(),
            cell(r.auc),
            seed.to_string(),
            r.eval_local_loss.to_string(),
            r.eval_global_argmax.to_string(),
            cell(r.eval_accuracy),
        ]);
    }
    t
}

/// Policy-optimization curve as a report table.
pub fn tppo_curve_table(curve: &[TppoRow]) -> Table {
    let mut t = Table::new([
        "iteration",
        "mean_reward",
        "reward_std",
        "mean_kl",
        "mean_len",
        "seed",
        "mode",
        "relevance",
    ]);
    for r in curve {
        t.push(vec![
            r.iteration.to_string(),
            r.mean_reward.to_string(),
            r.reward_std.to_string(),
            r.mean_kl.to_string(),
            r.mean_len.to_string(),
            r.seed.to_string(),
            r.mode.to_string(),
            r.relevance.to_string(),
        ]);
    }
    t
}
