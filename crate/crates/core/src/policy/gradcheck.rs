use rand::seq::index::sample;

use super::{PolicyParams, Rollout};
use crate::seed;
use crate::tppo::{ppo_loss_and_grad, PpoLossConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error, so gradients that vanish
    /// analytically are compared absolutely.
    pub floor: f64,
    /// Check a random subset of coordinates; `None` checks every parameter.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_param: String,
    pub checked: usize,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::GradientCheck(format!(
                "max relative error {:.3e} at {}",
                self.max_rel_error, self.worst_param
            )))
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` to central differences of `loss` at `params`.
/// `name` maps a flat index to a readable parameter name.
pub fn finite_difference_check<F, N>(
    params: &mut [f64],
    analytic: &[f64],
    loss: F,
    name: N,
    opts: &GradCheckOptions,
) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
    N: Fn(usize) -> String,
{
    let indices: Vec<usize> = match opts.max_coords {
        Some(k) if k < params.len() => {
            let mut v = sample(&mut seed::rng(opts.seed, 0x9c), params.len(), k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..params.len()).collect(),
    };
    let mut worst = (0.0, 0usize);
    for &i in &indices {
        let orig = params[i];
        params[i] = orig + opts.step;
        let up = loss(params);
        params[i] = orig - opts.step;
        let down = loss(params);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * opts.step);
        let err = relative_error(analytic[i], numeric, opts.floor);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        worst_param: name(worst.1),
        checked: indices.len(),
        passed: worst.0 <= opts.tolerance,
    }
}

/// Checks the analytic gradient of the clipped token-level objective plus
/// the value loss on `rollout`.
pub fn check_gradients(
    params: &PolicyParams,
    rollout: &Rollout,
    loss_cfg: &PpoLossConfig,
    opts: &GradCheckOptions,
) -> GradCheckReport {
    let (_, grad) = ppo_loss_and_grad(params, &rollout.episodes, loss_cfg);
    let mut work = params.clone();
    let mut flat = std::mem::take(&mut work.net.params);
    let shape = params.net.shape.clone();
    finite_difference_check(
        &mut flat,
        &grad,
        |p| {
            let probe = PolicyParams {
                net: crate::nn::ContextNet {
                    shape: shape.clone(),
                    params: p.to_vec(),
                },
            };
            ppo_loss_and_grad(&probe, &rollout.episodes, loss_cfg).0.total
        },
        |i| shape.block_of(i),
        opts,
    )
}
