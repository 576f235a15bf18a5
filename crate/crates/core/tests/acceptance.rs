//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are never captured; exits nonzero if any fails.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use tppo_core::checkpoint::Checkpoint;
use tppo_core::datagen::{
    map_word_rewards, parity_batch, store_dataset, ChunkTokenizer, RewardCategory, WordAnnotation,
};
use tppo_core::harness::plot::merge_curves;
use tppo_core::harness::report::{render_report, strip_timestamp, Table};
use tppo_core::harness::{
    build_dataset, compare_modes, evaluate_policy, prepare, rm_curve_table, run_ablation, run_tppo,
    tppo_curve_table, AblationParameter, AblationSpec, ExperimentConfig,
};
use tppo_core::nn::ContextNet;
use tppo_core::policy::{
    check_gradients, finite_difference_check, sequence_log_probs, EpisodeRollout, GradCheckOptions, PolicyArch,
    PolicyParams, Rollout,
};
use tppo_core::reward_model::{
    build_valid_set, loss_and_grad, lwp, train_reward_model, LengthPenaltyConfig, RMParams, RMTrainConfig, RmArch,
};
use tppo_core::seed;
use tppo_core::tppo::{
    closed_form_optimal_policy, kl_regularized_objective, verify_lemma1, LemmaOptions, PpoLossConfig, RewardMode,
    TabularInstance,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, elapsed: Duration, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "[{tag}] criterion {n} {name}: {} ({:.1}s)", v.detail, elapsed.as_secs_f64()).unwrap();
    out.flush().unwrap();
}

fn info(msg: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "       {msg}").unwrap();
    out.flush().unwrap();
}

/// Exponentiated-gradient ascent on the regularized objective. It shares no
/// code with the closed form and converges to the same point.
fn mirror_ascent(inst: &TabularInstance, steps: usize) -> Vec<f64> {
    let eta = 0.5 / inst.beta;
    let mut pi = inst.pi_ref.clone();
    for _ in 0..steps {
        let mut next: Vec<f64> = pi
            .iter()
            .zip(&inst.pi_ref)
            .zip(&inst.advantages)
            .map(|((p, r), a)| p * (eta * (a - inst.beta * ((p / r).ln() + 1.0))).exp())
            .collect();
        let z: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= z);
        pi = next;
    }
    pi
}

fn lemma() -> Verdict {
    let opts = LemmaOptions::default();
    let r = verify_lemma1(0, 100, &opts).expect("lemma run");
    let mut max_diff: f64 = 0.0;
    let mut worst_obj_gap = f64::INFINITY;
    for trial in 0..100 {
        let inst = TabularInstance::random(&mut seed::sub_rng(7, 0, trial));
        let closed = closed_form_optimal_policy(&inst);
        let iter = mirror_ascent(&inst, 400);
        for (a, b) in closed.iter().zip(&iter) {
            max_diff = max_diff.max((a - b).abs());
        }
        worst_obj_gap =
            worst_obj_gap.min(kl_regularized_objective(&inst, &closed) - kl_regularized_objective(&inst, &iter));
    }
    Verdict {
        pass: r.passed()
            && r.trials == 100
            && r.perturbations_per_trial == 10_000
            && r.min_gap >= -1e-9
            && r.max_stationarity_spread <= 1e-7
            && max_diff < 1e-9
            && worst_obj_gap >= -1e-9,
        detail: format!(
            "100 x 10000 perturbations, min gap {:.2e} (margin -1e-9), stationarity spread {:.2e} (tol 1e-7), \
             {} violations; mirror-ascent oracle max |diff| {:.1e}",
            r.min_gap,
            r.max_stationarity_spread,
            r.violations.len(),
            max_diff
        ),
    }
}

fn jitter(params: &mut [f64], rng: &mut impl Rng, std: f64) {
    let n = Normal::new(0.0, std).unwrap();
    params.iter_mut().for_each(|p| *p += n.sample(rng));
}

fn rm_gradcheck(point: u64, opts: &GradCheckOptions) -> f64 {
    let mut rng = seed::sub_rng(11, 1, point);
    let arch = RmArch {
        d_embed: 4,
        k_ctx: 4,
        hidden: 6,
    };
    let mut rm = RMParams::init(16, &arch, &mut rng);
    jitter(&mut rm.net.params, &mut rng, 0.5);
    let batch = parity_batch(point, 4, 16, 0.5).unwrap();
    let vs = build_valid_set(&batch, point);
    let w: [f64; 3] = [rng.gen_range(0.1..1.5), rng.gen_range(0.1..1.5), rng.gen_range(0.1..1.5)];
    let lambda = rng.gen_range(0.0..=1.0);
    let (_, grad) = loss_and_grad(&rm, &batch, &vs, &w, lambda, 1.0 - lambda);
    let shape = rm.net.shape.clone();
    let mut flat = rm.net.params.clone();
    let r = finite_difference_check(
        &mut flat,
        &grad,
        |p| {
            let probe = RMParams {
                net: ContextNet::from_params(shape.clone(), p.to_vec()).unwrap(),
            };
            loss_and_grad(&probe, &batch, &vs, &w, lambda, 1.0 - lambda).0.total
        },
        |i| shape.block_of(i),
        opts,
    );
    r.max_rel_error
}

fn tppo_gradcheck(point: u64, opts: &GradCheckOptions) -> f64 {
    let mut rng = seed::sub_rng(11, 2, point);
    let arch = PolicyArch {
        d_embed: 4,
        k_ctx: 4,
        hidden: 6,
    };
    let mut policy = PolicyParams::init(16, &arch, &mut rng);
    jitter(&mut policy.net.params, &mut rng, 0.5);
    let std = Normal::new(0.0, 1.0).unwrap();
    let episodes = (0..3)
        .map(|_| {
            let prompt: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(3..16)).collect();
            let actions: Vec<usize> = (0..rng.gen_range(1..=5)).map(|_| rng.gen_range(1..16)).collect();
            let n = actions.len();
            // behavior log-probs off the current policy so ratios straddle the clip range
            let behavior_logp = sequence_log_probs(&policy, &prompt, &actions)
                .iter()
                .map(|l| l + rng.gen_range(-0.4..0.4))
                .collect();
            EpisodeRollout {
                prompt,
                actions,
                behavior_logp,
                advantages: (0..n).map(|_| std.sample(&mut rng)).collect(),
                returns: (0..n).map(|_| std.sample(&mut rng)).collect(),
                ..Default::default()
            }
        })
        .collect();
    let cfg = PpoLossConfig {
        clip_eps: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
    };
    check_gradients(&policy, &Rollout { episodes }, &cfg, opts).max_rel_error
}

fn gradients() -> Verdict {
    let opts = GradCheckOptions::default();
    let rm = (0..100).map(|p| rm_gradcheck(p, &opts)).fold(0.0, f64::max);
    let tppo = (0..100).map(|p| tppo_gradcheck(p, &opts)).fold(0.0, f64::max);
    Verdict {
        pass: rm < 1e-4 && tppo < 1e-4,
        detail: format!("100 points each, max relative error RM total {rm:.2e}, TPPO {tppo:.2e} (tol 1e-4)"),
    }
}

fn mapping() -> Verdict {
    let mut rng = seed::rng(3, 0);
    let cats = [RewardCategory::Masked, RewardCategory::Irrelevant, RewardCategory::Relevant];
    let words: Vec<WordAnnotation> = (0..1000)
        .map(|_| {
            let len = rng.gen_range(1..=12);
            let w: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            WordAnnotation::new(w, cats[rng.gen_range(0..3)]).unwrap()
        })
        .collect();
    let mut bad = 0usize;
    let mut tokens = 0usize;
    for k in [2, 3, 5] {
        let tok = ChunkTokenizer::new(k).unwrap();
        let mapped = map_word_rewards(&words, &tok).unwrap();
        let mut it = mapped.iter();
        for w in &words {
            let n = w.word().chars().count().div_ceil(k);
            let mut rebuilt = String::new();
            for _ in 0..n {
                let Some((t, c)) = it.next() else {
                    bad += 1;
                    break;
                };
                tokens += 1;
                bad += usize::from(*c != w.category());
                rebuilt.push_str(t);
            }
            bad += usize::from(rebuilt != w.word());
        }
        bad += it.count();
    }
    Verdict {
        pass: bad == 0,
        detail: format!("1000 words x chunk 2/3/5, {tokens} tokens, {bad} mismatches (tol 0)"),
    }
}

fn rm_quality() -> Verdict {
    let cfg = RMTrainConfig::default();
    let train = parity_batch(0, 2000, 64, 0.5).unwrap();
    let eval = parity_batch(seed::derive(0, seed::stream::EVAL), 200, 64, 0.5).unwrap();
    let out = train_reward_model(64, &train, &eval, &cfg).unwrap();
    let last = out.final_row();
    let (acc, auc) = (last.eval_accuracy.unwrap_or(0.0), last.auc.unwrap_or(0.0));
    Verdict {
        pass: cfg.steps <= 2000 && acc >= 0.95 && auc >= 0.98,
        detail: format!(
            "parity corpus, default RM config ({} steps): accuracy {acc:.4} (>= 0.95), AUC {auc:.4} (>= 0.98)",
            last.step
        ),
    }
}

fn rm_quality_query_corpus() {
    let cfg = ExperimentConfig::default();
    let data = build_dataset(&cfg).unwrap();
    let out = tppo_core::harness::train_rm_stage(&cfg, &data).unwrap();
    let last = out.final_row();
    info(&format!(
        "supplementary, query corpus with the experiment RM config: accuracy {:.4}, AUC {:.4}",
        last.eval_accuracy.unwrap_or(f64::NAN),
        last.auc.unwrap_or(f64::NAN)
    ));
}

fn modes() -> Verdict {
    let start = Instant::now();
    let c = compare_modes(&ExperimentConfig::default(), &SEEDS).unwrap();
    let elapsed = start.elapsed();
    for r in &c.runs {
        info(&format!(
            "seed {} {:8}: relevance {:.3}, mean length {:.2}{}",
            r.seed,
            r.mode.to_string(),
            r.eval.relevance,
            r.eval.mean_len,
            r.stopped_early.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
        ));
    }
    let (w, t, l) = c.win_tie_lose;
    info(&format!(
        "initial relevance {:?}; win/tie/lose token vs sentence {w:.1}/{t:.1}/{l:.1}; \
         raw reward across-seed std token {:.4}, sentence {:.4}",
        c.initial_relevance
            .iter()
            .map(|x| (x * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        c.token_reward_std,
        c.sentence_reward_std
    ));
    let stopped = c.runs.iter().filter(|r| r.stopped_early.is_some()).count();
    Verdict {
        pass: stopped == 0
            && c.token_relevance >= c.sentence_relevance
            && c.token_curve_std <= c.sentence_curve_std
            && elapsed < Duration::from_secs(15 * 60),
        detail: format!(
            "seeds 0..4: final relevance token {:.4} >= sentence {:.4}; curve std token {:.4} <= sentence {:.4}",
            c.token_relevance, c.sentence_relevance, c.token_curve_std, c.sentence_curve_std
        ),
    }
}

fn ablation(parameter: AblationParameter, values: Vec<f64>) -> tppo_core::harness::AblationOutcome {
    let spec = AblationSpec {
        parameter,
        values,
        seeds: SEEDS.to_vec(),
        base: ExperimentConfig::default(),
    };
    run_ablation(&spec).unwrap()
}

fn alpha() -> Verdict {
    let out = ablation(AblationParameter::Alpha, vec![0.5, 1.0]);
    for r in &out.results {
        info(&format!(
            "alpha {} seed {}: mean length {:.2}{}",
            r.value,
            r.seed,
            r.final_mean_len.unwrap_or(f64::NAN),
            r.failure
                .as_deref()
                .map(|m| format!(" FAILED {m}"))
                .or_else(|| r.stopped_early.as_deref().map(|m| format!(" (stopped early: {m})")))
                .unwrap_or_default()
        ));
    }
    let len = |v| out.mean_for(v, |r| r.final_mean_len).unwrap_or(f64::NAN);
    let (strong, weak) = (len(1.0), len(0.5));
    Verdict {
        pass: out.failures() == 0 && strong < weak,
        detail: format!("seeds 0..4: mean final length alpha=1.0 {strong:.3} < alpha=0.5 {weak:.3}"),
    }
}

fn lambda() -> Verdict {
    let out = ablation(AblationParameter::LambdaLocal, vec![0.2, 0.8]);
    let m = |v, f: fn(&tppo_core::harness::AblationResult) -> Option<f64>| out.mean_for(v, f).unwrap_or(f64::NAN);
    let (hi, lo) = (m(0.8, |r| r.final_eval_local_loss), m(0.2, |r| r.final_eval_local_loss));
    info(&format!(
        "total eval loss (differently weighted, informational): 0.8 -> {:.4}, 0.2 -> {:.4}",
        m(0.8, |r| r.final_eval_loss),
        m(0.2, |r| r.final_eval_loss)
    ));
    Verdict {
        pass: out.failures() == 0 && hi < lo,
        detail: format!("seeds 0..4: converged eval local loss lambda_local=0.8 {hi:.4} < lambda_local=0.2 {lo:.4}"),
    }
}

fn small_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.train_episodes = 300;
    c.eval_episodes = 40;
    c.rm.steps = 60;
    c.rm.eval_every = 20;
    c.pretrain.steps = 40;
    c.tppo.iterations = 5;
    c.tppo.batch_episodes = 8;
    c.tppo.minibatch_episodes = 4;
    c.with_seed(seed)
}

/// Every artifact of one small end-to-end run, keyed by name.
fn artifacts(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let cfg = small_config(9);
    let meta = vec![("seed".to_string(), "9".to_string())];
    let body = |t: &Table| strip_timestamp(&render_report(t, &meta).unwrap()).into_bytes();
    let mut out = Vec::new();

    let prep = prepare(&cfg).unwrap();
    let jsonl = dir.join("train.jsonl");
    store_dataset(&jsonl, &prep.data.train_records).unwrap();
    out.push(("train.jsonl".into(), std::fs::read(&jsonl).unwrap()));
    out.push(("rm_curve".into(), body(&rm_curve_table(&prep.rm, cfg.seed))));
    out.push(("rm.ckpt".into(), Checkpoint::for_reward_model(&prep.rm.params, 9, &cfg).unwrap().to_json().unwrap().into_bytes()));
    out.push(("sft.ckpt".into(), Checkpoint::for_policy(&prep.sft, 9, &cfg).unwrap().to_json().unwrap().into_bytes()));
    for mode in [RewardMode::Token, RewardMode::Sentence] {
        let mut t = cfg.tppo.clone();
        t.reward_mode = mode;
        let run = run_tppo(&prep, &t, |_, _| Ok(())).unwrap();
        let curve = tppo_curve_table(&run.curve);
        std::fs::write(dir.join(format!("{mode}.csv")), render_report(&curve, &meta).unwrap()).unwrap();
        out.push((format!("tppo_curve_{mode}"), body(&curve)));
        out.push((format!("policy_{mode}.ckpt"), Checkpoint::for_policy(&run.policy, 9, &cfg).unwrap().to_json().unwrap().into_bytes()));
        let e = evaluate_policy(&run.policy, &prep.eval_prompts, &prep.judge, t.max_len, t.temperature, 9).unwrap();
        out.push((format!("eval_{mode}"), format!("{:?} {} {}", e.scores, e.relevance, e.mean_len).into_bytes()));
    }
    let plot = merge_curves(&[dir.join("token.csv"), dir.join("sentence.csv")], &[]).unwrap();
    out.push(("plot_data".into(), body(&plot)));
    let abl = run_ablation(&AblationSpec {
        parameter: AblationParameter::LambdaLocal,
        values: vec![0.3],
        seeds: vec![1, 2],
        base: small_config(0),
    })
    .unwrap();
    out.push(("ablation_summary".into(), body(&abl.summary)));
    out.push(("ablation_curves".into(), body(&abl.curves)));
    let lemma = verify_lemma1(9, 5, &LemmaOptions::default()).unwrap();
    out.push(("lemma".into(), serde_json::to_vec(&lemma).unwrap()));
    out
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (x, y) = (artifacts(a.path()), artifacts(b.path()));
    let differing: Vec<&str> = x
        .iter()
        .zip(&y)
        .filter(|(p, q)| p.0 != q.0 || p.1 != q.1)
        .map(|(p, _)| p.0.as_str())
        .collect();
    Verdict {
        pass: x.len() == y.len() && differing.is_empty(),
        detail: format!("{} artifacts compared byte for byte across two runs, differing: {differing:?}", x.len()),
    }
}

fn length_penalty() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (alpha, sl) in [(1.0, 4usize), (0.5, 4), (2.0, 6), (1.5, 8)] {
        let cfg = LengthPenaltyConfig {
            alpha,
            suggested_len: sl,
        };
        let at_sl = lwp(sl, &cfg);
        // 1 / (1 + e^-6)
        ok &= (at_sl - 0.997_527_376_843_365_6).abs() < 1e-12;
        let half = sl as f64 + 6.0 / alpha;
        if half.fract() == 0.0 {
            let v = lwp(half as usize, &cfg);
            ok &= (v - 0.5).abs() < 1e-12;
            notes.push(format!("alpha {alpha} sl {sl}: lwp(sl)={at_sl:.5}, lwp({half})={v}"));
        }
        ok &= (1..4 * sl).all(|l| lwp(l + 1, &cfg) < lwp(l, &cfg));
    }
    Verdict {
        pass: ok,
        detail: format!("{}; strictly decreasing on [1, 4 sl]", notes.join("; ")),
    }
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Check = fn() -> Verdict;
    let criteria: [(&str, Check); 9] = [
        ("closed-form optimum", lemma),
        ("gradient fidelity", gradients),
        ("mapping invariance", mapping),
        ("reward-model quality", || {
            let v = rm_quality();
            rm_quality_query_corpus();
            v
        }),
        ("token vs sentence rewards", modes),
        ("length-penalty ablation", alpha),
        ("local-weight ablation", lambda),
        ("determinism", determinism),
        ("lwp values", length_penalty),
    ];
    let limits = [Some(30.0), Some(60.0), None, None, Some(900.0), None, None, None, None];
    let mut failed = 0;
    for (i, ((name, check), limit)) in criteria.iter().zip(limits).enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == (i + 1).to_string()) {
            continue;
        }
        let start = Instant::now();
        let mut v = check();
        let elapsed = start.elapsed();
        if let Some(s) = limit {
            if elapsed.as_secs_f64() >= s {
                v.pass = false;
                v.detail.push_str(&format!("; over the {s:.0}s budget"));
            }
        }
        report(i + 1, name, elapsed, &v);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
