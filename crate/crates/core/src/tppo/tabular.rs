//! Exact single-state solution of
//! `max_pi  E_pi[A] - beta * KL(pi || pi_ref)`,
//! namely `pi*(a) = pi_ref(a) exp(A(a) / beta) / Z`, plus a brute-force
//! verifier for it.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::{self, stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularInstance {
    pub pi_ref: Vec<f64>,
    pub advantages: Vec<f64>,
    pub beta: f64,
}

impl TabularInstance {
    pub fn new(pi_ref: Vec<f64>, advantages: Vec<f64>, beta: f64) -> Result<Self> {
        if pi_ref.is_empty() || pi_ref.len() != advantages.len() {
            return Err(Error::invalid("pi_ref and advantages must be non-empty and aligned"));
        }
        if pi_ref.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid("pi_ref must be strictly positive"));
        }
        if (pi_ref.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("pi_ref must sum to 1"));
        }
        if !(beta > 0.0) || advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("beta must be positive and advantages finite"));
        }
        Ok(Self {
            pi_ref,
            advantages,
            beta,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.pi_ref.len()
    }

    /// Random instance: `m` in 2..=8, `A` in [-3, 3], `beta` in [0.1, 5].
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let m = rng.gen_range(2..=8);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let pi_ref = raw.iter().map(|x| x / z).collect();
        let advantages = (0..m).map(|_| rng.gen_range(-3.0..=3.0)).collect();
        let beta = rng.gen_range(0.1..=5.0);
        Self {
            pi_ref,
            advantages,
            beta,
        }
    }
}

/// `KL(p || q)`; infinite when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi <= 0.0 {
                0.0
            } else if qi <= 0.0 {
                f64::INFINITY
            } else {
                pi * (pi / qi).ln()
            }
        })
        .sum()
}

pub fn kl_regularized_objective(inst: &TabularInstance, pi: &[f64]) -> f64 {
    let gain: f64 = pi.iter().zip(&inst.advantages).map(|(p, a)| p * a).sum();
    gain - inst.beta * kl_divergence(pi, &inst.pi_ref)
}

/// `log Z = log sum_a pi_ref(a) exp(A(a) / beta)`, computed stably.
pub fn log_partition(inst: &TabularInstance) -> f64 {
    let logits: Vec<f64> = inst
        .pi_ref
        .iter()
        .zip(&inst.advantages)
        .map(|(p, a)| p.ln() + a / inst.beta)
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

pub fn closed_form_optimal_policy(inst: &TabularInstance) -> Vec<f64> {
    let shift = inst
        .advantages
        .iter()
        .map(|a| a / inst.beta)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = inst
        .pi_ref
        .iter()
        .zip(&inst.advantages)
        .map(|(p, a)| p * (a / inst.beta - shift).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

/// First-order conditions `A(a) - beta * (1 + log(pi(a) / pi_ref(a)))`; at
/// the optimum they all equal the normalization multiplier.
pub fn stationarity_residuals(inst: &TabularInstance, pi: &[f64]) -> Vec<f64> {
    pi.iter()
        .zip(&inst.pi_ref)
        .zip(&inst.advantages)
        .map(|((p, r), a)| a - inst.beta * (1.0 + (p / r).ln()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaOptions {
    pub perturbations: usize,
    /// Allowed `objective(candidate) - objective(other)` shortfall.
    pub margin: f64,
    /// Allowed spread of the stationarity residuals.
    pub stationarity_tol: f64,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        Self {
            perturbations: 10_000,
            margin: 1e-9,
            stationarity_tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaViolation {
    pub trial: usize,
    pub instance: TabularInstance,
    pub candidate: Vec<f64>,
    /// `"maximality"` or `"stationarity"`.
    pub kind: String,
    pub value: f64,
    pub witness: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub trials: usize,
    pub perturbations_per_trial: usize,
    /// Smallest `objective(pi*) - objective(q)` seen over all comparisons.
    pub min_gap: f64,
    pub max_stationarity_spread: f64,
    pub violations: Vec<LemmaViolation>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    v
}

/// Comparison distributions: uniform draws from the simplex, draws on random
/// faces (including vertices), multiplicative jitter around `center` at scales
/// 1e-6 .. 1, and mixtures of `center` with each vertex on a fixed grid.
fn perturbations<R: Rng>(center: &[f64], count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let m = center.len();
    let mut out = Vec::with_capacity(count);
    let quarter = count / 4;
    for _ in 0..quarter {
        out.push(normalize((0..m).map(|_| Exp1.sample(rng)).collect()));
    }
    for _ in 0..quarter {
        let v: Vec<f64> = (0..m)
            .map(|_| if rng.gen_bool(0.5) { Exp1.sample(rng) } else { 0.0 })
            .collect();
        if v.iter().sum::<f64>() > 0.0 {
            out.push(normalize(v));
        } else {
            let mut e = vec![0.0; m];
            e[rng.gen_range(0..m)] = 1.0;
            out.push(e);
        }
    }
    let scales = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    for k in 0..quarter {
        let s = scales[k % scales.len()];
        out.push(normalize(
            center
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(rng);
                    c * (s * z).exp()
                })
                .collect(),
        ));
    }
    let grid = count - out.len();
    for k in 0..grid {
        let a = k % m;
        let step = k / m + 1;
        let steps = grid.div_ceil(m) + 1;
        let t = step as f64 / steps as f64;
        out.push(
            center
                .iter()
                .enumerate()
                .map(|(i, c)| (1.0 - t) * c + if i == a { t } else { 0.0 })
                .collect(),
        );
    }
    out
}

/// Checks a candidate optimum of one instance; returns the smallest gap, the
/// residual spread and any violations.
pub fn verify_candidate<R: Rng>(
    trial: usize,
    inst: &TabularInstance,
    candidate: &[f64],
    opts: &LemmaOptions,
    rng: &mut R,
) -> (f64, f64, Vec<LemmaViolation>) {
    let mut violations = Vec::new();
    let best = kl_regularized_objective(inst, candidate);
    let mut min_gap = f64::INFINITY;
    let mut witness = None;
    for q in perturbations(candidate, opts.perturbations, rng) {
        let gap = best - kl_regularized_objective(inst, &q);
        if gap < min_gap {
            min_gap = gap;
            witness = Some(q);
        }
    }
    if min_gap < -opts.margin {
        violations.push(LemmaViolation {
            trial,
            instance: inst.clone(),
            candidate: candidate.to_vec(),
            kind: "maximality".into(),
            value: min_gap,
            witness,
        });
    }
    let res = stationarity_residuals(inst, candidate);
    let spread = res.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - res.iter().copied().fold(f64::INFINITY, f64::min);
    if !(spread <= opts.stationarity_tol) {
        violations.push(LemmaViolation {
            trial,
            instance: inst.clone(),
            candidate: candidate.to_vec(),
            kind: "stationarity".into(),
            value: spread,
            witness: None,
        });
    }
    (min_gap, spread, violations)
}

/// Draws `trials` random instances and checks that the closed-form policy
/// beats every perturbation and satisfies the first-order conditions.
pub fn verify_lemma1(seed: u64, trials: usize, opts: &LemmaOptions) -> Result<LemmaReport> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let mut report = LemmaReport {
        seed,
        trials,
        perturbations_per_trial: opts.perturbations,
        min_gap: f64::INFINITY,
        max_stationarity_spread: 0.0,
        violations: Vec::new(),
    };
    for trial in 0..trials {
        let mut rng = seed::sub_rng(seed, stream::LEMMA, trial as u64);
        let inst = TabularInstance::random(&mut rng);
        let pi = closed_form_optimal_policy(&inst);
        let (gap, spread, v) = verify_candidate(trial, &inst, &pi, opts, &mut rng);
        report.min_gap = report.min_gap.min(gap);
        report.max_stationarity_spread = report.max_stationarity_spread.max(spread);
        report.violations.extend(v);
    }
    Ok(report)
}
