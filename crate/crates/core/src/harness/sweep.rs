use rayon::prelude::*;

use super::{evaluate_policy, mean_std, prepare, run_tppo, win_tie_lose, EvalSummary, ExperimentConfig};
use crate::tppo::{RewardMode, TppoRow};
use crate::Result;

/// One policy-optimization run of a seed sweep.
#[derive(Clone, Debug)]
pub struct ModeRun {
    pub seed: u64,
    pub mode: RewardMode,
    pub curve: Vec<TppoRow>,
    pub eval: EvalSummary,
    pub stopped_early: Option<String>,
}

/// Token-level against sentence-level rewards over a set of seeds.
#[derive(Clone, Debug)]
pub struct ModeComparison {
    pub runs: Vec<ModeRun>,
    /// Initial-policy relevance on the evaluation prompts, per seed.
    pub initial_relevance: Vec<f64>,
    pub token_relevance: f64,
    pub sentence_relevance: f64,
    /// Across-seed std of the per-iteration relevance, averaged over iterations.
    pub token_curve_std: f64,
    pub sentence_curve_std: f64,
    /// Same statistic on each mode's own task reward.
    pub token_reward_std: f64,
    pub sentence_reward_std: f64,
    /// Token mode against sentence mode, pooled over seeds.
    pub win_tie_lose: (f64, f64, f64),
}

/// For every iteration reached by all curves, the standard deviation of
/// `metric` across curves; returns the mean over iterations.
pub fn across_seed_std(curves: &[&[TppoRow]], metric: fn(&TppoRow) -> f64) -> f64 {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    if len == 0 {
        return f64::NAN;
    }
    let total: f64 = (0..len)
        .map(|i| mean_std(&curves.iter().map(|c| metric(&c[i])).collect::<Vec<_>>()).1)
        .sum();
    total / len as f64
}

/// Runs both reward modes from the same reward model and initial policy for
/// every seed. Seeds run in parallel.
pub fn compare_modes(base: &ExperimentConfig, seeds: &[u64]) -> Result<ModeComparison> {
    let per_seed: Vec<(f64, Vec<ModeRun>)> = seeds
        .par_iter()
        .map(|&seed| -> Result<(f64, Vec<ModeRun>)> {
            let cfg = base.clone().with_seed(seed);
            let prep = prepare(&cfg)?;
            let t = &cfg.tppo;
            let initial = evaluate_policy(&prep.sft, &prep.eval_prompts, &prep.judge, t.max_len, t.temperature, seed)?;
            let mut runs = Vec::new();
            for mode in [RewardMode::Token, RewardMode::Sentence] {
                let tc = crate::tppo::TPPOConfig {
                    reward_mode: mode,
                    ..cfg.tppo.clone()
                };
                let out = run_tppo(&prep, &tc, |_, _| Ok(()))?;
                let eval = evaluate_policy(&out.policy, &prep.eval_prompts, &prep.judge, t.max_len, t.temperature, seed)?;
                runs.push(ModeRun {
                    seed,
                    mode,
                    curve: out.curve,
                    eval,
                    stopped_early: out.stopped_early,
                });
            }
            Ok((initial.relevance, runs))
        })
        .collect::<Result<_>>()?;

    let initial_relevance = per_seed.iter().map(|p| p.0).collect();
    let runs: Vec<ModeRun> = per_seed.into_iter().flat_map(|p| p.1).collect();
    let of = |m: RewardMode| runs.iter().filter(move |r| r.mode == m);
    let final_rel = |m| mean_std(&of(m).map(|r| r.eval.relevance).collect::<Vec<_>>()).0;
    let curves = |m| of(m).map(|r| r.curve.as_slice()).collect::<Vec<_>>();
    let pooled = |m| of(m).flat_map(|r| r.eval.scores.iter().copied()).collect::<Vec<u8>>();
    Ok(ModeComparison {
        initial_relevance,
        token_relevance: final_rel(RewardMode::Token),
        sentence_relevance: final_rel(RewardMode::Sentence),
        token_curve_std: across_seed_std(&curves(RewardMode::Token), |r| r.relevance),
        sentence_curve_std: across_seed_std(&curves(RewardMode::Sentence), |r| r.relevance),
        token_reward_std: across_seed_std(&curves(RewardMode::Token), |r| r.mean_reward),
        sentence_reward_std: across_seed_std(&curves(RewardMode::Sentence), |r| r.mean_reward),
        win_tie_lose: win_tie_lose(&pooled(RewardMode::Token), &pooled(RewardMode::Sentence))?,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(it: usize, rel: f64) -> TppoRow {
        TppoRow {
            iteration: it,
            mean_reward: 0.0,
            reward_std: 0.0,
            mean_kl: 0.0,
            mean_len: 0.0,
            relevance: rel,
            seed: 0,
            mode: RewardMode::Token,
        }
    }

    #[test]
    fn std_over_common_iterations() {
        let a = vec![row(0, 0.0), row(1, 1.0), row(2, 5.0)];
        let b = vec![row(0, 1.0), row(1, 1.0)];
        // iteration 0: std 0.5, iteration 1: std 0; iteration 2 is not shared
        assert_eq!(across_seed_std(&[&a, &b], |r| r.relevance), 0.25);
        assert!(across_seed_std(&[], |r| r.relevance).is_nan());
    }
}
