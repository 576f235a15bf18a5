//! `tppo` command line: data generation, reward-model and policy training,
//! evaluation, ablations, the tabular optimality check and plot data.
//!
//! Every artifact records the resolved configuration and seed. CSV reports
//! carry them as `#` header lines, JSON files under a `config` key, and
//! JSONL datasets in a `manifest.json` next to them.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tppo_core::checkpoint::Checkpoint;
use tppo_core::datagen::{
    annotate_episode, load_dataset, map_word_rewards, store_dataset, ChunkTokenizer, EpisodeRecord, RewardCategory,
};
use tppo_core::harness::config::{config_entries, config_json, load_config};
use tppo_core::harness::plot::merge_curves;
use tppo_core::harness::report::{write_report, Table};
use tppo_core::harness::{
    build_dataset, evaluate_policy, prepare, rm_curve_table, run_ablation, run_tppo, tppo_curve_table, train_rm_stage,
    win_tie_lose, AblationParameter, AblationSpec, Dataset, ExperimentConfig,
};
use tppo_core::tppo::{verify_lemma1, LemmaOptions, RewardMode};

#[derive(Parser, Debug)]
#[command(name = "tppo", version, about = "Token-level PPO experiments on a synthetic query-generation task")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every stage; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the training and evaluation corpora as JSONL.
    GenData,
    /// Re-annotate a JSONL corpus and report per-record token categories.
    Annotate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the token reward model.
    TrainRm,
    /// Train a policy with token-level or sentence-level rewards.
    TrainPpo {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Reward-model checkpoint to use instead of training one.
        #[arg(long)]
        rm: Option<PathBuf>,
        /// Save a policy checkpoint every N iterations (0 = off).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
    },
    /// Judge a policy on the evaluation prompts, optionally against a baseline.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Sweep lambda_local or alpha over values and seeds.
    Ablate {
        #[arg(long)]
        parameter: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
        seeds: Vec<u64>,
    },
    /// Check the closed-form KL-regularized optimum on random instances.
    VerifyLemma {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 10_000)]
        perturbations: usize,
    },
    /// Merge curve CSVs into long format (run_id, series, step, value).
    PlotData {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Columns to keep; all numeric columns by default.
        #[arg(long, value_delimiter = ',')]
        series: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Token,
    Sentence,
}

/// Parses `argv` and runs the command. Returns the process exit code: 0 on
/// success, 2 on usage errors and 1 on any other failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Ctx {
    fn meta(&self) -> Vec<(String, String)> {
        let mut m = vec![("seed".to_string(), self.cfg.seed.to_string())];
        m.extend(config_entries(&self.cfg).into_iter().filter(|(k, _)| k != "seed"));
        m
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn report(&self, name: &str, table: &Table) -> Result<PathBuf> {
        let p = self.path(name);
        write_report(&p, table, &self.meta()).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
        Ok(p)
    }

    fn json(&self, name: &str, value: serde_json::Value) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, serde_json::to_string_pretty(&value)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
        Ok(p)
    }

    fn checkpoint(&self, name: &str, ck: Checkpoint) -> Result<PathBuf> {
        let p = self.path(name);
        ck.save(&p).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
        Ok(p)
    }
}

fn resolve(global: &Global) -> Result<Ctx> {
    let base = match &global.config {
        Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    let seed = global.seed.unwrap_or(base.seed);
    let cfg = base.with_seed(seed);
    cfg.validate().context("invalid configuration")?;
    std::fs::create_dir_all(&global.out).with_context(|| format!("creating {}", global.out.display()))?;
    Ok(Ctx {
        cfg,
        out: global.out.clone(),
    })
}

fn execute(cli: Cli) -> Result<()> {
    let ctx = resolve(&cli.global)?;
    match cli.command {
        Command::GenData => gen_data(&ctx),
        Command::Annotate { input } => annotate(&ctx, &input),
        Command::TrainRm => train_rm(&ctx),
        Command::TrainPpo {
            mode,
            rm,
            checkpoint_every,
        } => train_ppo(&ctx, mode, rm.as_deref(), checkpoint_every),
        Command::Eval { policy, baseline } => eval(&ctx, &policy, baseline.as_deref()),
        Command::Ablate {
            parameter,
            values,
            seeds,
        } => ablate(&ctx, &parameter, values, seeds),
        Command::VerifyLemma { trials, perturbations } => verify_lemma(&ctx, trials, perturbations),
        Command::PlotData { inputs, series } => plot_data(&ctx, &inputs, &series),
    }
}

fn gen_data(ctx: &Ctx) -> Result<()> {
    let data = build_dataset(&ctx.cfg)?;
    for (name, records) in [("train.jsonl", &data.train_records), ("eval.jsonl", &data.eval_records)] {
        let p = ctx.path(name);
        store_dataset(&p, records).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {} ({} records)", p.display(), records.len());
    }
    ctx.json(
        "manifest.json",
        json!({
            "seed": ctx.cfg.seed,
            "files": {"train.jsonl": data.train_records.len(), "eval.jsonl": data.eval_records.len()},
            "vocab": data.vocab.len(),
            "config": config_json(&ctx.cfg),
        }),
    )?;
    Ok(())
}

fn annotate(ctx: &Ctx, input: &Path) -> Result<()> {
    let records = load_dataset(input).with_context(|| format!("reading {}", input.display()))?;
    let tok = ChunkTokenizer::new(ctx.cfg.chunk_len)?;
    let rules = &ctx.cfg.corpus.annotator;
    let mut table = Table::new(["id", "words", "relevant", "irrelevant", "masked", "tokens", "sentence_category", "changed"]);
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let words: Vec<&str> = r.response_words.iter().map(|w| w.word()).collect();
        let (ann, sentence) = annotate_episode(&r.history, &words, rules)
            .with_context(|| format!("annotating record {}", r.id))?;
        let count = |c| ann.iter().filter(|w| w.category() == c).count();
        let tokens = map_word_rewards(&ann, &tok)?.len();
        let changed = ann != r.response_words || sentence != r.sentence_reward;
        table.push(vec![
            r.id.clone(),
            ann.len().to_string(),
            count(RewardCategory::Relevant).to_string(),
            count(RewardCategory::Irrelevant).to_string(),
            count(RewardCategory::Masked).to_string(),
            tokens.to_string(),
            sentence.to_string(),
            changed.to_string(),
        ]);
        out.push(EpisodeRecord {
            response_words: ann,
            sentence_reward: sentence,
            ..r
        });
    }
    let p = ctx.path("annotated.jsonl");
    store_dataset(&p, &out)?;
    println!("wrote {} ({} records)", p.display(), out.len());
    ctx.report("annotate.csv", &table)?;
    Ok(())
}

fn train_rm(ctx: &Ctx) -> Result<()> {
    let data = build_dataset(&ctx.cfg)?;
    let outcome = train_rm_stage(&ctx.cfg, &data)?;
    ctx.report("rm_curve.csv", &rm_curve_table(&outcome, ctx.cfg.seed))?;
    ctx.checkpoint("rm.ckpt.json", Checkpoint::for_reward_model(&outcome.params, ctx.cfg.seed, &ctx.cfg)?)?;
    let last = outcome.final_row();
    println!(
        "final eval loss {:.4}, accuracy {}, auc {}",
        last.eval_loss,
        last.eval_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        last.auc.map_or("n/a".into(), |a| format!("{a:.4}")),
    );
    Ok(())
}

fn train_ppo(ctx: &Ctx, mode: Option<Mode>, rm: Option<&Path>, every: usize) -> Result<()> {
    let mut cfg = ctx.cfg.clone();
    if let Some(m) = mode {
        cfg.tppo.reward_mode = match m {
            Mode::Token => RewardMode::Token,
            Mode::Sentence => RewardMode::Sentence,
        };
    }
    let ctx = Ctx {
        cfg,
        out: ctx.out.clone(),
    };
    let mut prep = prepare(&ctx.cfg)?;
    if let Some(p) = rm {
        prep.rm.params = Checkpoint::load(p)?.into_reward_model()?;
        if prep.rm.params.vocab() != prep.data.vocab.len() {
            bail!("{}: reward model vocabulary does not match the configured corpus", p.display());
        }
    }
    ctx.checkpoint("sft.ckpt.json", Checkpoint::for_policy(&prep.sft, ctx.cfg.seed, &ctx.cfg)?)?;
    let mode = ctx.cfg.tppo.reward_mode;
    let outcome = run_tppo(&prep, &ctx.cfg.tppo, |row, policy| {
        let it = row.iteration + 1;
        if every > 0 && it % every == 0 {
            ctx.checkpoint(
                &format!("policy-{mode}-iter{it:04}.ckpt.json"),
                Checkpoint::for_policy(policy, ctx.cfg.seed, &ctx.cfg).map_err(anyhow_to_core)?,
            )
            .map_err(anyhow_to_core)?;
        }
        Ok(())
    })?;
    if let Some(msg) = &outcome.stopped_early {
        eprintln!("warning: {msg}");
    }
    ctx.report(&format!("tppo_curve_{mode}.csv"), &tppo_curve_table(&outcome.curve))?;
    ctx.checkpoint(
        &format!("policy-{mode}.ckpt.json"),
        Checkpoint::for_policy(&outcome.policy, ctx.cfg.seed, &ctx.cfg)?,
    )?;
    Ok(())
}

fn anyhow_to_core(e: impl std::fmt::Display) -> tppo_core::Error {
    tppo_core::Error::Checkpoint(e.to_string())
}

fn eval(ctx: &Ctx, policy: &Path, baseline: Option<&Path>) -> Result<()> {
    let data: Dataset = build_dataset(&ctx.cfg)?;
    let rules = &ctx.cfg.corpus.annotator;
    let prompts = tppo_core::tppo::PromptSet::from_records(&data.eval_records, &data.tokenizer, &data.vocab, rules)?;
    let judge = tppo_core::harness::Judge::new(ctx.cfg.judge, rules.clone(), data.vocab.clone());
    let t = &ctx.cfg.tppo;
    let load = |p: &Path| -> Result<_> {
        let pol = Checkpoint::load(p)?.into_policy()?;
        if pol.vocab() != data.vocab.len() {
            bail!("{}: policy vocabulary does not match the configured corpus", p.display());
        }
        Ok(evaluate_policy(&pol, &prompts, &judge, t.max_len, t.temperature, ctx.cfg.seed)?)
    };
    let a = load(policy)?;
    let mut table = Table::new(["metric", "value"]);
    table.push(vec!["relevance".into(), a.relevance.to_string()]);
    table.push(vec!["mean_len".into(), a.mean_len.to_string()]);
    println!("relevance {:.4}, mean length {:.2}", a.relevance, a.mean_len);
    if let Some(b) = baseline {
        let b = load(b)?;
        let (w, tie, l) = win_tie_lose(&a.scores, &b.scores)?;
        for (k, v) in [
            ("baseline_relevance", b.relevance),
            ("baseline_mean_len", b.mean_len),
            ("win", w),
            ("tie", tie),
            ("lose", l),
        ] {
            table.push(vec![k.into(), v.to_string()]);
        }
        println!("baseline relevance {:.4}; win/tie/lose {w:.1}/{tie:.1}/{l:.1}", b.relevance);
    }
    ctx.report("eval.csv", &table)?;
    Ok(())
}

fn ablate(ctx: &Ctx, parameter: &str, values: Vec<f64>, seeds: Vec<u64>) -> Result<()> {
    let parameter: AblationParameter = parameter.parse()?;
    let spec = AblationSpec {
        parameter,
        values,
        seeds,
        base: ctx.cfg.clone(),
    };
    let outcome = run_ablation(&spec)?;
    ctx.report(&format!("ablation_{parameter}.csv"), &outcome.summary)?;
    ctx.report(&format!("ablation_{parameter}_curves.csv"), &outcome.curves)?;
    if outcome.failures() > 0 {
        bail!("{} of {} runs failed; see the status column", outcome.failures(), outcome.results.len());
    }
    Ok(())
}

fn verify_lemma(ctx: &Ctx, trials: usize, perturbations: usize) -> Result<()> {
    let opts = LemmaOptions {
        perturbations,
        ..Default::default()
    };
    let report = verify_lemma1(ctx.cfg.seed, trials, &opts)?;
    ctx.json(
        "lemma_report.json",
        json!({
            "seed": ctx.cfg.seed,
            "trials": trials,
            "perturbations": perturbations,
            "margin": opts.margin,
            "stationarity_tol": opts.stationarity_tol,
            "passed": report.passed(),
            "min_gap": report.min_gap,
            "max_stationarity_spread": report.max_stationarity_spread,
            "violations": report.violations,
            "config": config_json(&ctx.cfg),
        }),
    )?;
    println!(
        "{} trials, min gap {:.3e}, max stationarity spread {:.3e}, {} violations",
        trials,
        report.min_gap,
        report.max_stationarity_spread,
        report.violations.len()
    );
    if !report.passed() {
        bail!("closed-form optimum violated on {} checks", report.violations.len());
    }
    Ok(())
}

fn plot_data(ctx: &Ctx, inputs: &[PathBuf], series: &[String]) -> Result<()> {
    let table = merge_curves(inputs, series)?;
    ctx.report("plot_data.csv", &table)?;
    Ok(())
}
