use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{cell, Table};
use super::{build_dataset, evaluate_policy, prepare, run_tppo, train_rm_stage, ExperimentConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationParameter {
    /// Weight of the local loss; the global weight is its complement.
    LambdaLocal,
    /// Sharpness of the length penalty.
    Alpha,
}

impl fmt::Display for AblationParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationParameter::LambdaLocal => "lambda_local",
            AblationParameter::Alpha => "alpha",
        })
    }
}

impl FromStr for AblationParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_local" => Ok(AblationParameter::LambdaLocal),
            "alpha" => Ok(AblationParameter::Alpha),
            _ => Err(Error::invalid(format!(
                "unknown ablation parameter `{s}` (expected lambda_local or alpha)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSpec {
    pub parameter: AblationParameter,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub base: ExperimentConfig,
}

impl AblationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("an ablation needs at least one value and one seed"));
        }
        for &v in &self.values {
            let ok = match self.parameter {
                AblationParameter::LambdaLocal => (0.0..=1.0).contains(&v),
                AblationParameter::Alpha => v > 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(Error::invalid(format!("{} = {v} is out of range", self.parameter)));
            }
        }
        Ok(())
    }

    /// Configuration of one grid point.
    pub fn config_for(&self, value: f64, seed: u64) -> ExperimentConfig {
        let mut cfg = self.base.clone().with_seed(seed);
        match self.parameter {
            AblationParameter::LambdaLocal => cfg.rm = cfg.rm.with_lambda_local(value),
            AblationParameter::Alpha => cfg.tppo.length_penalty.alpha = value,
        }
        cfg
    }
}

/// Final metrics of one grid point; fields not produced by the swept stage
/// stay empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationResult {
    pub value: f64,
    pub seed: u64,
    /// `None` on success, otherwise the failure message.
    pub failure: Option<String>,
    /// KL early-stop diagnostic. The metrics then describe the policy at the
    /// stopping iteration.
    pub stopped_early: Option<String>,
    pub final_eval_loss: Option<f64>,
    pub final_eval_local_loss: Option<f64>,
    pub final_auc: Option<f64>,
    pub final_accuracy: Option<f64>,
    /// Mean response length of the final policy on the evaluation prompts.
    pub final_mean_len: Option<f64>,
    pub final_relevance: Option<f64>,
    curve: Vec<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub results: Vec<AblationResult>,
    pub summary: Table,
    pub curves: Table,
}

impl AblationOutcome {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.failure.is_some()).count()
    }

    /// Mean of a metric over the successful seeds of one value.
    pub fn mean_for(&self, value: f64, metric: fn(&AblationResult) -> Option<f64>) -> Option<f64> {
        let xs: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.value == value)
            .filter_map(metric)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

fn run_point(spec: &AblationSpec, value: f64, seed: u64) -> Result<AblationResult> {
    let cfg = spec.config_for(value, seed);
    let mut res = AblationResult {
        value,
        seed,
        ..Default::default()
    };
    match spec.parameter {
        AblationParameter::LambdaLocal => {
            // only the reward model depends on the loss weights
            let data = build_dataset(&cfg)?;
            let rm = train_rm_stage(&cfg, &data)?;
            let last = rm.final_row();
            res.final_eval_loss = Some(last.eval_loss);
            res.final_eval_local_loss = Some(last.eval_local_loss);
            res.final_auc = last.auc;
            res.final_accuracy = last.eval_accuracy;
            res.curve = rm
                .curve
                .iter()
                .map(|r| {
                    vec![
                        r.step.to_string(),
                        r.train_loss.to_string(),
                        r.eval_loss.to_string(),
                        r.eval_local_loss.to_string(),
                        cell(r.auc),
                        String::new(),
                        String::new(),
                    ]
                })
                .collect();
        }
        AblationParameter::Alpha => {
            let prep = prepare(&cfg)?;
            let out = run_tppo(&prep, &cfg.tppo, |_, _| Ok(()))?;
            res.stopped_early = out.stopped_early;
            let t = &cfg.tppo;
            let eval = evaluate_policy(&out.policy, &prep.eval_prompts, &prep.judge, t.max_len, t.temperature, seed)?;
            res.final_mean_len = Some(eval.mean_len);
            res.final_relevance = Some(eval.relevance);
            res.curve = out
                .curve
                .iter()
                .map(|r| {
                    vec![
                        r.iteration.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        r.mean_len.to_string(),
                        r.relevance.to_string(),
                    ]
                })
                .collect();
        }
    }
    Ok(res)
}

/// Runs every value x seed grid point in parallel. A failing point becomes a
/// row with `status = failed: ...`; only an invalid spec is an error.
pub fn run_ablation(spec: &AblationSpec) -> Result<AblationOutcome> {
    spec.validate()?;
    let grid: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<AblationResult> = grid
        .par_iter()
        .map(|&(value, seed)| {
            run_point(spec, value, seed).unwrap_or_else(|e| AblationResult {
                value,
                seed,
                failure: Some(e.to_string()),
                ..Default::default()
            })
        })
        .collect();

    let p = spec.parameter.to_string();
    let mut summary = Table::new([
        "parameter",
        "value",
        "seed",
        "status",
        "final_eval_loss",
        "final_eval_local_loss",
        "final_auc",
        "final_accuracy",
        "final_mean_len",
        "final_relevance",
    ]);
    let mut curves = Table::new([
        "parameter",
        "value",
        "seed",
        "step",
        "train_loss",
        "eval_loss",
        "eval_local_loss",
        "auc",
        "mean_len",
        "relevance",
    ]);
    for r in &results {
        summary.push(vec![
            p.clone(),
            r.value.to_string(),
            r.seed.to_string(),
            match (&r.failure, &r.stopped_early) {
                (Some(m), _) => format!("failed: {m}"),
                (None, Some(m)) => format!("stopped_early: {m}"),
                (None, None) => "ok".to_string(),
            },
            cell(r.final_eval_loss),
            cell(r.final_eval_local_loss),
            cell(r.final_auc),
            cell(r.final_accuracy),
            cell(r.final_mean_len),
            cell(r.final_relevance),
        ]);
        for c in &r.curve {
            let mut row = vec![p.clone(), r.value.to_string(), r.seed.to_string()];
            row.extend(c.iter().cloned());
            curves.push(row);
        }
    }
    Ok(AblationOutcome {
        results,
        summary,
        curves,
    })
}
