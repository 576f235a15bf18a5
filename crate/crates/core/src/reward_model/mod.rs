//! Token-level reward model: a three-class classifier over
//! `{masked, irrelevant, relevant}` for every response token, trained with a
//! weighted local cross-entropy plus a global sentence-consistency loss.

mod loss;
mod metrics;
mod penalty;
mod train;
mod valid;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{RewardCategory, TokenBatch};
use crate::nn::{context_window, softmax, ContextNet, NetShape};
use crate::Result;

pub use loss::{
    global_loss, local_loss, loss_and_grad, total_loss, GlobalVariant, LossParts,
};
pub use metrics::{rm_auc, roc_auc, token_accuracy};
pub use penalty::{apply_length_penalty, lwp, LengthPenaltyConfig};
pub use train::{train_reward_model, RMTrainConfig, RmCurveRow, RmTrainOutcome};
pub use valid::{build_valid_set, ValidSet};

/// Network size of the reward model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RmArch {
    pub d_embed: usize,
    pub k_ctx: usize,
    pub hidden: usize,
}

impl Default for RmArch {
    fn default() -> Self {
        Self {
            d_embed: 16,
            k_ctx: 20,
            hidden: 32,
        }
    }
}

/// Reward-model parameters. The context window ends at (and includes) the
/// scored token.
#[derive(Clone, Debug, PartialEq)]
pub struct RMParams {
    pub net: ContextNet,
}

impl RMParams {
    pub fn init<R: Rng>(vocab: usize, arch: &RmArch, rng: &mut R) -> Self {
        let shape = NetShape {
            vocab,
            d_embed: arch.d_embed,
            k_ctx: arch.k_ctx,
            hidden: arch.hidden,
            heads: vec![3],
        };
        Self {
            net: ContextNet::init(shape, 0.1, rng),
        }
    }

    pub fn vocab(&self) -> usize {
        self.net.shape.vocab
    }

    pub fn k_ctx(&self) -> usize {
        self.net.shape.k_ctx
    }

    /// Class probabilities of the token at `pos` of `seq`.
    pub fn token_probs(&self, seq: &[usize], pos: usize) -> [f64; 3] {
        let act = self.net.forward(&context_window(seq, pos + 1, self.k_ctx()));
        let p = softmax(&act.outputs[0]);
        [p[0], p[1], p[2]]
    }
}

/// Per-token outputs over a whole batch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RMOutput {
    pub class_probs: Vec<Vec<[f64; 3]>>,
    pub predicted_category: Vec<Vec<RewardCategory>>,
    pub expected_reward: Vec<Vec<f64>>,
}

impl RMOutput {
    pub fn from_probs(class_probs: Vec<Vec<[f64; 3]>>) -> Self {
        let predicted_category = class_probs
            .iter()
            .map(|row| row.iter().map(argmax_category).collect())
            .collect();
        let expected_reward = class_probs
            .iter()
            .map(|row| row.iter().map(expected_category).collect())
            .collect();
        Self {
            class_probs,
            predicted_category,
            expected_reward,
        }
    }
}

/// Argmax with ties resolved to the lowest class.
pub fn argmax_category(p: &[f64; 3]) -> RewardCategory {
    let mut best = 0;
    for c in 1..3 {
        if p[c] > p[best] {
            best = c;
        }
    }
    RewardCategory::from_index(best).expect("three classes")
}

pub fn expected_category(p: &[f64; 3]) -> f64 {
    p[1] + 2.0 * p[2]
}

pub fn rm_forward(params: &RMParams, batch: &TokenBatch) -> Result<RMOutput> {
    batch.check_vocab(params.vocab())?;
    let probs = batch
        .token_ids
        .iter()
        .map(|row| (0..row.len()).map(|t| params.token_probs(row, t)).collect())
        .collect();
    Ok(RMOutput::from_probs(probs))
}

/// Argmax categories, forced to 0 outside the activation mask.
pub fn predict_from_output(out: &RMOutput, batch: &TokenBatch) -> Vec<Vec<RewardCategory>> {
    out.predicted_category
        .iter()
        .zip(&batch.activation_mask)
        .map(|(cats, mask)| {
            cats.iter()
                .zip(mask)
                .map(|(&c, &m)| if m { c } else { RewardCategory::Masked })
                .collect()
        })
        .collect()
}

pub fn predict_token_rewards(params: &RMParams, batch: &TokenBatch) -> Result<Vec<Vec<RewardCategory>>> {
    Ok(predict_from_output(&rm_forward(params, batch)?, batch))
}
