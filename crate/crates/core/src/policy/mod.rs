//! Tiny autoregressive policy with a value head on a shared trunk.

mod gradcheck;
mod pretrain;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::EOS_ID;
use crate::nn::{context_window, log_softmax, softmax, Activation, ContextNet, NetShape};
use crate::seed::{self, stream};

pub use gradcheck::{check_gradients, finite_difference_check, GradCheckOptions, GradCheckReport};
pub use pretrain::{pretrain_policy, PretrainConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub d_embed: usize,
    pub k_ctx: usize,
    pub hidden: usize,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            d_embed: 16,
            k_ctx: 20,
            hidden: 32,
        }
    }
}

pub const POLICY_HEAD: usize = 0;
pub const VALUE_HEAD: usize = 1;

/// Policy and value heads over a windowed state. A state is the prompt
/// followed by the tokens generated so far.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub net: ContextNet,
}

impl PolicyParams {
    pub fn init<R: Rng>(vocab: usize, arch: &PolicyArch, rng: &mut R) -> Self {
        let shape = NetShape {
            vocab,
            d_embed: arch.d_embed,
            k_ctx: arch.k_ctx,
            hidden: arch.hidden,
            heads: vec![vocab, 1],
        };
        Self {
            net: ContextNet::init(shape, 0.01, rng),
        }
    }

    pub fn vocab(&self) -> usize {
        self.net.shape.vocab
    }

    pub fn k_ctx(&self) -> usize {
        self.net.shape.k_ctx
    }

    pub fn n_params(&self) -> usize {
        self.net.params.len()
    }

    /// Forward pass for the state `seq[..end]`.
    pub fn forward_state(&self, seq: &[usize], end: usize) -> Activation {
        self.net.forward(&context_window(seq, end, self.k_ctx()))
    }
}

/// Next-token logits for a state.
pub fn policy_logits(params: &PolicyParams, state: &[usize]) -> Vec<f64> {
    params.forward_state(state, state.len()).outputs[POLICY_HEAD].clone()
}

pub fn next_token_probs(params: &PolicyParams, state: &[usize]) -> Vec<f64> {
    softmax(&policy_logits(params, state))
}

/// Draws from `softmax(logits / temperature)`; a non-positive temperature
/// picks the argmax (lowest id on ties).
pub fn sample_token<R: Rng>(logits: &[f64], temperature: f64, rng: &mut R) -> usize {
    if temperature <= 0.0 {
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        return best;
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let p = softmax(&scaled);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Generates up to `max_len` tokens; an end-of-sequence token is kept as
/// the last element.
pub fn sample_response_with<R: Rng>(
    params: &PolicyParams,
    prompt: &[usize],
    max_len: usize,
    temperature: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mut seq = prompt.to_vec();
    for _ in 0..max_len {
        let a = sample_token(&policy_logits(params, &seq), temperature, rng);
        seq.push(a);
        if a == EOS_ID {
            break;
        }
    }
    seq.split_off(prompt.len())
}

pub fn sample_response(
    params: &PolicyParams,
    prompt: &[usize],
    max_len: usize,
    temperature: f64,
    seed: u64,
) -> Vec<usize> {
    assert!(max_len >= 1, "max_len must be at least 1");
    sample_response_with(params, prompt, max_len, temperature, &mut seed::rng(seed, stream::ROLLOUT))
}

/// `log pi(a_t | prompt ++ actions[..t])` for every action.
pub fn sequence_log_probs(params: &PolicyParams, prompt: &[usize], actions: &[usize]) -> Vec<f64> {
    let seq: Vec<usize> = prompt.iter().chain(actions).copied().collect();
    actions
        .iter()
        .enumerate()
        .map(|(t, &a)| {
            let act = params.forward_state(&seq, prompt.len() + t);
            log_softmax(&act.outputs[POLICY_HEAD])[a]
        })
        .collect()
}

pub fn value_estimates(params: &PolicyParams, states: &[Vec<usize>]) -> Vec<f64> {
    states
        .iter()
        .map(|s| params.forward_state(s, s.len()).outputs[VALUE_HEAD][0])
        .collect()
}

/// One sampled trajectory and its per-token training signals.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EpisodeRollout {
    pub prompt: Vec<usize>,
    pub actions: Vec<usize>,
    /// Log-probabilities under the policy that generated the actions.
    pub behavior_logp: Vec<f64>,
    /// Log-probabilities under the fixed KL anchor.
    pub anchor_logp: Vec<f64>,
    /// Task rewards after the length penalty, before the KL penalty.
    pub task_rewards: Vec<f64>,
    /// Rewards fed to the return computation.
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    /// The response ended with an end-of-sequence token.
    pub done: bool,
}

impl EpisodeRollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn sequence(&self) -> Vec<usize> {
        self.prompt.iter().chain(&self.actions).copied().collect()
    }

    /// Checks that every per-token array has one entry per action.
    pub fn is_consistent(&self) -> bool {
        let n = self.actions.len();
        [
            self.behavior_logp.len(),
            self.anchor_logp.len(),
            self.task_rewards.len(),
            self.rewards.len(),
            self.values.len(),
            self.returns.len(),
            self.advantages.len(),
        ]
        .iter()
        .all(|&l| l == n)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Rollout {
    pub episodes: Vec<EpisodeRollout>,
}

impl Rollout {
    pub fn n_tokens(&self) -> usize {
        self.episodes.iter().map(EpisodeRollout::len).sum()
    }
}
