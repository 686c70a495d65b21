//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any of them fails.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use toxcf::baselines::{predict_baseline, predict_non, Baseline};
use toxcf::corpus::{filter_corpus, filter_low_activity, CommentRecord, KeywordConfig};
use toxcf::evaluation::{aggregate, evaluate_labels, metrics, ConfusionMatrix};
use toxcf::factorizer::{
    batch_gradients, batch_loss, classify, fit, load_checkpoint, predict, save_checkpoint,
    Checkpoint, Example, ModelParams, TrainConfig,
};
use toxcf::labeler::{aggregate_interactions, index_dataset, InteractionRecord, Label};
use toxcf::splitter::{held_out_cap_violations, loli_binary_split, verify_split, Split};
use toxcf::synth::{generate, SynthSpec};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn run(name: &str, budget: Duration, check: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let passed = result.passed && in_time;
    println!(
        "{} {name}: {} [{:.2?} of {:?}{}]",
        if passed { "PASS" } else { "FAIL" },
        result.detail,
        elapsed,
        budget,
        if in_time { "" } else { ", over budget" }
    );
    passed
}

fn labels(rng: &mut ChaCha8Rng, len: usize) -> Vec<Label> {
    (0..len)
        .map(|_| Label::from(rng.random_bool(0.5)))
        .collect()
}

fn non_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let len = rng.random_range(2..500);
        let mut truth = labels(&mut rng, len);
        truth[0] = Label::Toxic;
        truth[1] = Label::NonToxic;
        let m = evaluate_labels(&truth, &predict_non(len)).unwrap();
        if (m.sensitivity, m.specificity, m.gmean) != (0.0, 1.0, 0.0) {
            return outcome(false, format!("got {m:?}"));
        }
    }
    let truth = labels(&mut rng, 300);
    let runs = (0..5)
        .map(|_| evaluate_labels(&truth, &predict_non(truth.len())).unwrap())
        .collect();
    let agg = aggregate(runs, (0..5).collect());
    let row = format!(
        "{:.3} ± {:.3} | {:.3} ± {:.3} | {:.3} ± {:.3}",
        agg.mean.sensitivity,
        agg.std.sensitivity,
        agg.mean.specificity,
        agg.std.specificity,
        agg.mean.gmean,
        agg.std.gmean
    );
    let expected = "0.000 ± 0.000 | 1.000 ± 0.000 | 0.000 ± 0.000";
    outcome(
        row == expected,
        format!("200 random test sets exact; 5-run row {row}"),
    )
}

fn random_params(rng: &mut ChaCha8Rng, n: usize, m: usize, d: usize) -> ModelParams {
    let mut p = ModelParams::zeros(n, m, d);
    for block in p.blocks_mut() {
        for x in block.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    p
}

fn gradient_check() -> Outcome {
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for lambda in [0.0, 1e-4] {
        for _ in 0..15 {
            let n = rng.random_range(1..=10);
            let m = rng.random_range(1..=10);
            let d = rng.random_range(1..=8);
            let params = random_params(&mut rng, n, m, d);
            let batch: Vec<Example> = (0..rng.random_range(1..=20))
                .map(|_| Example {
                    user: rng.random_range(0..n),
                    subreddit: rng.random_range(0..m),
                    label: rng.random_bool(0.5).into(),
                })
                .collect();
            let analytic = batch_gradients(&params, &batch, lambda);
            for b in 0..4 {
                for i in 0..params.blocks()[b].len() {
                    let mut plus = params.clone();
                    plus.blocks_mut()[b][i] += STEP;
                    let mut minus = params.clone();
                    minus.blocks_mut()[b][i] -= STEP;
                    let numeric = (batch_loss(&plus, &batch, lambda)
                        - batch_loss(&minus, &batch, lambda))
                        / (2.0 * STEP);
                    let a = analytic.blocks()[b][i];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
            instances += 1;
        }
    }
    outcome(
        worst < 1e-5,
        format!("{instances} instances, max relative error {worst:.2e} (limit 1e-5)"),
    )
}

fn random_dataset(rng: &mut ChaCha8Rng) -> Vec<InteractionRecord> {
    let n = rng.random_range(1..=200);
    let m = rng.random_range(1..=30);
    let density = rng.random_range(0.02..0.6);
    let toxic_rate = rng.random_range(0.0..0.5);
    let mut records = Vec::new();
    for u in 0..n {
        for s in 0..m {
            if rng.random_bool(density) {
                let label = Label::from(rng.random_bool(toxic_rate));
                records.push(InteractionRecord {
                    user: format!("u{u}"),
                    subreddit: format!("s{s}"),
                    comment_count: 1,
                    mean_toxicity: if label.is_toxic() { 0.9 } else { 0.1 },
                    label,
                });
            }
        }
    }
    if records.is_empty() {
        records.push(InteractionRecord {
            user: "u0".into(),
            subreddit: "s0".into(),
            comment_count: 1,
            mean_toxicity: 0.1,
            label: Label::NonToxic,
        });
    }
    records
}

fn splitter_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let datasets = 1000;
    for case in 0..datasets {
        let ds = index_dataset(&random_dataset(&mut rng)).unwrap();
        let seed = rng.random();
        for with_validation in [false, true] {
            let split = loli_binary_split(&ds, seed, with_validation);
            let problem = if !verify_split(&ds, &split).is_empty() {
                Some(format!("{:?}", verify_split(&ds, &split)))
            } else if !held_out_cap_violations(&ds, &split).is_empty() {
                Some("held-out cap".to_string())
            } else if split != loli_binary_split(&ds, seed, with_validation) {
                Some("non-deterministic".to_string())
            } else {
                independent_split_check(&ds, &split.tags, with_validation)
            };
            if let Some(p) = problem {
                return outcome(
                    false,
                    format!("dataset {case} (validation {with_validation}): {p}"),
                );
            }
        }
    }
    outcome(
        true,
        format!("{datasets} datasets x 2 modes: coverage, partition, cap, determinism"),
    )
}

/// Re-derives the split guarantees without the splitter's own verifier.
fn independent_split_check(
    ds: &toxcf::labeler::DyadicDataset,
    tags: &[Split],
    with_validation: bool,
) -> Option<String> {
    if tags.len() != ds.interactions.len() {
        return Some("tag count".into());
    }
    let mut train_users = HashSet::new();
    let mut train_subs = HashSet::new();
    let mut held: HashMap<(usize, Label, Split), usize> = HashMap::new();
    for (it, &t) in ds.interactions.iter().zip(tags) {
        match t {
            Split::Train => {
                train_users.insert(it.user);
                train_subs.insert(it.subreddit);
            }
            Split::Validation if !with_validation => {
                return Some("unexpected validation tag".into())
            }
            other => *held.entry((it.user, it.label, other)).or_default() += 1,
        }
    }
    for (it, &t) in ds.interactions.iter().zip(tags) {
        if t != Split::Train
            && (!train_users.contains(&it.user) || !train_subs.contains(&it.subreddit))
        {
            return Some(format!("cold start in {t}"));
        }
    }
    if held.values().any(|&c| c > 1) {
        return Some("more than one held-out item per user and class".into());
    }
    None
}

fn labeling_oracle() -> Outcome {
    // toxicities are multiples of 1/64, so sums are exact and the oracle can
    // compare integers
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let groups = 10_000;
    let mut comments = Vec::new();
    let mut expected: HashMap<(String, String), Label> = HashMap::new();
    let mut ties = 0;
    for g in 0..groups {
        let count = rng.random_range(1..=8);
        let mut numerators: Vec<u32> = (0..count).map(|_| rng.random_range(0..=64)).collect();
        if g % 4 == 0 {
            // force the mean to exactly one half
            let target = 32 * count as u32;
            let total: u32 = numerators.iter().sum();
            let last = numerators.last_mut().unwrap();
            let adjusted = *last as i64 + target as i64 - total as i64;
            if (0..=64).contains(&adjusted) {
                *last = adjusted as u32;
            }
        }
        let sum: u32 = numerators.iter().sum();
        if 2 * sum == 64 * count as u32 {
            ties += 1;
        }
        let label = Label::from(2 * sum > 64 * count as u32);
        let user = format!("u{}", g / 50);
        let sub = format!("s{}", g % 50);
        expected.insert((user.clone(), sub.clone()), label);
        for (i, k) in numerators.iter().enumerate() {
            comments.push(CommentRecord {
                comment_id: format!("c{g}_{i}"),
                user: user.clone(),
                subreddit: sub.clone(),
                created_utc: None,
                body: String::new(),
                toxicity: Some(*k as f64 / 64.0),
            });
        }
    }
    comments.shuffle(&mut rng);
    let records = aggregate_interactions(&comments).unwrap();
    let mismatches = records
        .iter()
        .filter(|r| expected[&(r.user.clone(), r.subreddit.clone())] != r.label)
        .count();
    let complete = records.len() == groups;
    outcome(
        complete && mismatches == 0 && ties > 0,
        format!("{groups} groupings, {ties} with mean exactly 0.5, {mismatches} mismatches"),
    )
}

fn synthetic_end_to_end() -> Outcome {
    let spec = SynthSpec::default();
    let (comments, _) = generate(&spec).unwrap();
    let ds = index_dataset(&aggregate_interactions(&comments).unwrap()).unwrap();
    let split = loli_binary_split(&ds, spec.seed, true);
    let train = split.examples(&ds, Split::Train);
    let validation = split.examples(&ds, Split::Validation);
    let test = split.examples(&ds, Split::Test);
    let truth: Vec<Label> = test.iter().map(|e| e.label).collect();

    let mut mdl = Vec::new();
    let mut usr = Vec::new();
    for seed in 0..5u64 {
        let config = TrainConfig {
            dim: 16,
            learning_rate: 1e-3,
            l2_lambda: 1e-4,
            batch_size: 256,
            seed,
            ..TrainConfig::default()
        };
        let (params, _) = fit(
            ds.n_users(),
            ds.n_subreddits(),
            &train,
            &validation,
            &config,
        )
        .unwrap();
        let pred: Vec<Label> = test
            .iter()
            .map(|e| classify(predict(&params, e.user, e.subreddit)))
            .collect();
        mdl.push(evaluate_labels(&truth, &pred).unwrap());
        let baseline = predict_baseline(Baseline::Usr, &train, &test, seed).unwrap();
        usr.push(evaluate_labels(&truth, &baseline).unwrap());
    }
    let mdl = aggregate(mdl, (0..5).collect()).mean.gmean;
    let usr = aggregate(usr, (0..5).collect()).mean.gmean;
    outcome(
        mdl >= 0.75 && mdl - usr >= 0.15,
        format!(
            "MF test G-mean {mdl:.3} (need >= 0.750), USR {usr:.3}, margin {:.3} (need >= 0.150)",
            mdl - usr
        ),
    )
}

fn early_stopping() -> Outcome {
    // users 0..8 are toxic in subreddits 0..3, the rest are not; validation
    // holds one pair per user and plateaus once the pattern is learned
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for u in 0..16 {
        for s in 0..6 {
            let e = Example {
                user: u,
                subreddit: s,
                label: Label::from((u < 8) == (s < 3)),
            };
            if s == u % 6 {
                validation.push(e);
            } else {
                train.push(e);
            }
        }
    }
    let config = TrainConfig {
        dim: 4,
        learning_rate: 0.05,
        l2_lambda: 1e-4,
        batch_size: 8,
        max_epochs: 1000,
        seed: 3,
        ..TrainConfig::default()
    };
    let (params, report) = fit(16, 6, &train, &validation, &config).unwrap();
    if !report.stopped_early {
        return outcome(false, "run did not stop early");
    }
    let best = report.best_epoch;
    let stop = report.epochs_run();
    let best_loss = report.epochs[best].validation_loss.unwrap();
    let plateau = report.epochs[best + 1..]
        .iter()
        .all(|e| best_loss - e.validation_loss.unwrap() <= config.es_tolerance);

    let (replay, _) = fit(
        16,
        6,
        &train,
        &validation,
        &TrainConfig {
            max_epochs: best,
            ..config.clone()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("restored.json");
    let b = dir.path().join("replay.json");
    save_checkpoint(&a, &Checkpoint::new(params, config.clone())).unwrap();
    save_checkpoint(&b, &Checkpoint::new(replay, config.clone())).unwrap();
    let same_bytes = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    let same_params = load_checkpoint(&a).unwrap() == load_checkpoint(&b).unwrap();

    outcome(
        best > 0 && stop == best + config.es_patience && plateau && same_bytes && same_params,
        format!(
            "best epoch {best}, stopped after {stop} (expected {}), plateau {plateau}, checkpoints equal {}",
            best + config.es_patience,
            same_bytes && same_params
        ),
    )
}

fn metrics_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let cm = ConfusionMatrix {
            tp: rng.random_range(0..10_000),
            fn_: rng.random_range(1..10_000),
            tn: rng.random_range(0..10_000),
            fp: rng.random_range(1..10_000),
        };
        let sens = cm.tp as f64 / (cm.tp + cm.fn_) as f64;
        let spec = cm.tn as f64 / (cm.tn + cm.fp) as f64;
        let m = metrics(&cm);
        worst = worst
            .max((m.gmean - (sens * spec).sqrt()).abs())
            .max((m.sensitivity - sens).abs())
            .max((m.specificity - spec).abs());
    }
    let table = (0.849f64 * 0.810).sqrt();
    outcome(
        worst <= 1e-12 && (table - 0.829).abs() <= 0.001,
        format!(
            "1000 matrices, max deviation {worst:.1e}; sqrt(0.849 x 0.810) = {table:.4} vs 0.829"
        ),
    )
}

fn comment(id: &str, user: &str, subreddit: &str, body: &str) -> CommentRecord {
    CommentRecord {
        comment_id: id.into(),
        user: user.into(),
        subreddit: subreddit.into(),
        created_utc: None,
        body: body.into(),
        toxicity: Some(0.1),
    }
}

fn corpus_fixture() -> (Vec<CommentRecord>, KeywordConfig) {
    let mut cs = Vec::new();
    // 21 distinct authors: survives the activity rule
    for i in 0..21 {
        cs.push(comment(
            &format!("cook{i}"),
            &format!("c{i}"),
            "cooking",
            "recipe the the",
        ));
    }
    cs.push(comment("cook_generic", "c0", "cooking", "the weather"));
    cs.push(comment("cook_health", "c1", "cooking", "The VACCINE"));
    cs.push(comment("cook_foreign", "c2", "cooking", "soil"));
    // 25 distinct authors
    for i in 0..25 {
        cs.push(comment(
            &format!("garden{i}"),
            &format!("g{i}"),
            "garden",
            "soil, the",
        ));
    }
    cs.push(comment("garden_foreign", "g0", "garden", "recipe"));
    // exactly 20 distinct authors: removed even though on-topic
    for i in 0..20 {
        cs.push(comment(
            &format!("tiny{i}"),
            &format!("t{i}"),
            "tiny",
            "recipe vaccine",
        ));
    }
    cs.push(comment("tiny_repeat", "t0", "tiny", "vaccine"));
    let config = KeywordConfig {
        health_keywords: BTreeSet::from(["vaccine".to_string()]),
        popular_k: 2,
        min_distinct_users: 20,
    };
    (cs, config)
}

fn corpus_filters() -> Outcome {
    let (comments, config) = corpus_fixture();
    let active: BTreeSet<String> = filter_low_activity(comments.clone(), config.min_distinct_users)
        .into_iter()
        .map(|c| c.subreddit)
        .collect();
    let expected_active = BTreeSet::from(["cooking".to_string(), "garden".to_string()]);

    let (kept, stats) = filter_corpus(comments, &config).unwrap();
    let kept: BTreeSet<String> = kept.into_iter().map(|c| c.comment_id).collect();
    let mut expected: BTreeSet<String> = (0..21).map(|i| format!("cook{i}")).collect();
    expected.extend((0..25).map(|i| format!("garden{i}")));
    expected.insert("cook_health".into());

    outcome(
        active == expected_active && kept == expected,
        format!(
            "active subreddits {active:?}; {} of {} comments kept, survivors exact: {}",
            stats.after_generic_removal,
            stats.input_comments,
            kept == expected
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            "NON-baseline identity",
            Duration::from_secs(1),
            non_identity,
        ),
        ("gradient check", Duration::from_secs(10), gradient_check),
        (
            "splitter property suite",
            Duration::from_secs(60),
            splitter_suite,
        ),
        ("labeling oracle", Duration::from_secs(10), labeling_oracle),
        (
            "synthetic end-to-end",
            Duration::from_secs(300),
            synthetic_end_to_end,
        ),
        ("early stopping", Duration::from_secs(30), early_stopping),
        ("metrics algebra", Duration::from_secs(1), metrics_algebra),
        (
            "corpus filter fixture",
            Duration::from_secs(1),
            corpus_filters,
        ),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !run(name, budget, check) {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
