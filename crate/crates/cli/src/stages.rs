use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use toxcf::baselines::{predict_baseline, Baseline};
use toxcf::corpus::{filter_corpus, read_comments, read_keywords, write_comments, ParseMode};
use toxcf::evaluation::{
    aggregate, confusion, extended_metrics, metrics, roc_auc, toxicity_histogram, ComparisonReport,
    ExtendedMetrics, MetricSummary, ReportRow,
};
use toxcf::factorizer::{
    classify, fit, grid_search, load_checkpoint, predict, save_checkpoint, Checkpoint, Example,
    TrainConfig, TrainReport,
};
use toxcf::labeler::{
    aggregate_interactions, index_dataset, read_index, read_interactions, write_index,
    write_interactions, DyadicDataset, Label,
};
use toxcf::splitter::{
    loli_binary_split, read_split, split_stats, verify_split, write_split, Split, SplitAssignment,
};
use toxcf::synth::{generate, SynthSpec};

use crate::artifacts::{
    read_json, record_stage, require, write_json, write_text, InvalidArtifact, Workspace,
};
use crate::config::ExperimentConfig;
use crate::{
    AggregateArgs, Cli, Command, EvaluateArgs, FilterArgs, GridArgs, ReportArgs, SplitArgs,
    SynthArgs, TrainArgs, TrainFlags,
};

struct Env {
    cfg: ExperimentConfig,
    ws: Workspace,
    seed: u64,
}

impl Env {
    fn path(&self, p: &Path) -> PathBuf {
        self.ws.path(p)
    }

    fn record(
        &self,
        stage: &str,
        seed: Option<u64>,
        parameters: serde_json::Value,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> Result<()> {
        let manifest = self.path(&self.cfg.paths.manifest);
        record_stage(
            &self.ws, &manifest, stage, seed, parameters, inputs, outputs,
        )
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let ctx = Env {
        ws: Workspace::new(cli.out_dir.clone())?,
        cfg,
        seed,
    };
    match cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Filter(a) => filter(&ctx, a),
        Command::Aggregate(a) => aggregate_stage(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Grid(a) => grid(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

fn synth(ctx: &Env, args: SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &args.spec {
        Some(p) => read_json(p)?,
        None => ctx.cfg.synth.clone(),
    };
    if let Some(v) = args.users {
        spec.n_users = v;
    }
    if let Some(v) = args.subs {
        spec.m_subs = v;
    }
    if let Some(v) = args.d_true {
        spec.d_true = v;
    }
    if let Some(v) = args.toxic_rate {
        spec.toxic_rate_target = v;
    }
    if let Some(v) = args.density {
        spec.density = v;
    }
    if let Some(v) = args.noise {
        spec.noise_flip_prob = v;
    }
    if let Some(v) = args.min_comments {
        spec.comments_per_interaction.0 = v;
    }
    if let Some(v) = args.max_comments {
        spec.comments_per_interaction.1 = v;
    }
    spec.seed = ctx.seed;

    let (comments, truth) = generate(&spec)?;
    let comments_path = ctx.path(&ctx.cfg.paths.comments);
    let truth_path = ctx.path(&ctx.cfg.paths.ground_truth);
    write_comments(&comments_path, &comments)?;
    write_json(&truth_path, &truth)?;
    info!(
        "{} comments over {} interactions; toxic rate {:.4} clean, {:.4} observed",
        comments.len(),
        truth.interactions.len(),
        truth.clean_toxic_rate,
        truth.observed_toxic_rate
    );
    let inputs: Vec<&Path> = args.spec.iter().map(|p| p.as_path()).collect();
    ctx.record(
        "synth",
        Some(ctx.seed),
        serde_json::to_value(&spec)?,
        &inputs,
        &[&comments_path, &truth_path],
    )
}

fn filter(ctx: &Env, args: FilterArgs) -> Result<()> {
    let input = args
        .input
        .clone()
        .unwrap_or_else(|| ctx.path(&ctx.cfg.paths.comments));
    require(&input, "scored comments", "synth")?;
    let mut keywords = ctx.cfg.keywords.clone();
    if let Some(v) = args.min_users {
        keywords.min_distinct_users = v;
    }
    if let Some(v) = args.popular_k {
        keywords.popular_k = v;
    }
    if let Some(p) = &args.keywords {
        keywords.health_keywords = read_keywords(p)?;
    }
    let mode = if args.strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let read = read_comments(&input, mode)?;
    if !read.skipped.is_empty() {
        warn!(
            "skipped {} malformed lines in {}",
            read.skipped.len(),
            input.display()
        );
        for e in read.skipped.iter().take(5) {
            warn!("  {e}");
        }
    }
    let (kept, stats) = filter_corpus(read.records, &keywords)?;
    info!(
        "{} comments in, {} after low-activity removal, {} kept in {} subreddits",
        stats.input_comments,
        stats.after_low_activity,
        stats.after_generic_removal,
        stats.subreddits_kept
    );
    let out = ctx.path(&ctx.cfg.paths.filtered);
    let stats_path = ctx.path(&ctx.cfg.paths.filter_stats);
    write_comments(&out, &kept)?;
    write_json(
        &stats_path,
        &json!({ "stats": stats, "skipped_lines": read.skipped.len() }),
    )?;
    let mut inputs = vec![input.as_path()];
    if let Some(p) = &args.keywords {
        inputs.push(p);
    }
    ctx.record(
        "filter",
        None,
        json!({ "keywords": keywords, "strict": args.strict }),
        &inputs,
        &[&out, &stats_path],
    )
}

fn aggregate_stage(ctx: &Env, args: AggregateArgs) -> Result<()> {
    let input = args
        .input
        .clone()
        .unwrap_or_else(|| ctx.path(&ctx.cfg.paths.filtered));
    require(&input, "filtered comments", "filter")?;
    let comments = read_comments(&input, ParseMode::Strict)?.records;
    let records = aggregate_interactions(&comments)?;
    let ds = index_dataset(&records)?;
    let interactions = ctx.path(&ctx.cfg.paths.interactions);
    let index = ctx.path(&ctx.cfg.paths.index);
    write_interactions(&interactions, &records)?;
    write_index(&index, &ds.index())?;
    info!(
        "{} interactions ({} toxic) between {} users and {} subreddits",
        ds.len(),
        ds.toxic_count(),
        ds.n_users(),
        ds.n_subreddits()
    );
    ctx.record(
        "aggregate",
        None,
        json!({}),
        &[&input],
        &[&interactions, &index],
    )
}

fn load_dataset(ctx: &Env) -> Result<(DyadicDataset, [PathBuf; 2])> {
    let interactions = ctx.path(&ctx.cfg.paths.interactions);
    let index = ctx.path(&ctx.cfg.paths.index);
    require(&interactions, "interaction table", "aggregate")?;
    require(&index, "dataset index", "aggregate")?;
    let ds = DyadicDataset::with_index(&read_interactions(&interactions)?, read_index(&index)?)?;
    Ok((ds, [interactions, index]))
}

fn load_split(ctx: &Env, ds: &DyadicDataset) -> Result<(SplitAssignment, PathBuf)> {
    let path = ctx.path(&ctx.cfg.paths.split);
    require(&path, "split assignment", "split")?;
    let split = read_split(&path, ds)?;
    let violations = verify_split(ds, &split);
    if !violations.is_empty() {
        return Err(InvalidArtifact(format!(
            "{} violates the split invariants: {violations:?}",
            path.display()
        ))
        .into());
    }
    Ok((split, path))
}

fn split(ctx: &Env, args: SplitArgs) -> Result<()> {
    let (ds, [interactions, index]) = load_dataset(ctx)?;
    if ds.is_empty() {
        return Err(InvalidArtifact("no interactions to split".into()).into());
    }
    let split = loli_binary_split(&ds, ctx.seed, !args.no_validation);
    let violations = verify_split(&ds, &split);
    if !violations.is_empty() {
        return Err(InvalidArtifact(format!("split invariants violated: {violations:?}")).into());
    }
    let stats = split_stats(&ds, &split).to_string();
    print!("{stats}");
    let out = ctx.path(&ctx.cfg.paths.split);
    let stats_path = ctx.path(&ctx.cfg.paths.split_stats);
    write_split(&out, &ds, &split)?;
    write_text(&stats_path, &stats)?;
    ctx.record(
        "split",
        Some(ctx.seed),
        json!({ "with_validation": !args.no_validation }),
        &[&interactions, &index],
        &[&out, &stats_path],
    )
}

fn resolve_train_config(ctx: &Env, flags: &TrainFlags) -> Result<TrainConfig> {
    let mut c = match &flags.train_config {
        Some(p) => read_json(p)?,
        None => ctx.cfg.train.clone(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = flags.$flag { c.$field = v; })*
        };
    }
    set!(dim => dim, lr => learning_rate, l2 => l2_lambda, batch_size => batch_size,
        max_epochs => max_epochs, es_tolerance => es_tolerance, es_patience => es_patience,
        beta1 => beta1, beta2 => beta2, epsilon => epsilon);
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainedRun {
    seed: u64,
    checkpoint: String,
    report: TrainReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainSummary {
    config: TrainConfig,
    runs: Vec<TrainedRun>,
}

fn train(ctx: &Env, args: TrainArgs) -> Result<()> {
    let config = resolve_train_config(ctx, &args.flags)?;
    let runs = args.runs.unwrap_or(ctx.cfg.train_runs);
    if runs == 0 {
        return Err(InvalidArtifact("--runs must be at least 1".into()).into());
    }
    let (ds, [interactions, index]) = load_dataset(ctx)?;
    let (split, split_path) = load_split(ctx, &ds)?;
    let train = split.examples(&ds, Split::Train);
    let validation = split.examples(&ds, Split::Validation);
    if validation.is_empty() {
        warn!("no validation partition: early stopping is disabled");
    }

    let models_dir = ctx.path(&ctx.cfg.paths.models);
    std::fs::create_dir_all(&models_dir)
        .with_context(|| format!("creating {}", models_dir.display()))?;
    let mut trained = Vec::new();
    let mut outputs = Vec::new();
    for i in 0..runs {
        let seed = ctx.seed.wrapping_add(i as u64);
        let run_config = TrainConfig {
            seed,
            ..config.clone()
        };
        let (params, report) = fit(
            ds.n_users(),
            ds.n_subreddits(),
            &train,
            &validation,
            &run_config,
        )?;
        info!(
            "run {i} (seed {seed}): {} epochs, best {}, early stop {}",
            report.epochs_run(),
            report.best_epoch,
            report.stopped_early
        );
        let file = models_dir.join(format!("run-{i}.json"));
        save_checkpoint(&file, &Checkpoint::new(params, run_config))?;
        trained.push(TrainedRun {
            seed,
            checkpoint: format!("run-{i}.json"),
            report,
        });
        outputs.push(file);
    }
    let summary_path = ctx.path(&ctx.cfg.paths.train_summary);
    write_json(
        &summary_path,
        &TrainSummary {
            config: config.clone(),
            runs: trained,
        },
    )?;
    outputs.push(summary_path);
    let outputs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    ctx.record(
        "train",
        Some(ctx.seed),
        json!({ "config": config, "runs": runs }),
        &[&interactions, &index, &split_path],
        &outputs,
    )
}

fn grid(ctx: &Env, args: GridArgs) -> Result<()> {
    let mut axes = ctx.cfg.grid.clone();
    if let Some(v) = args.dims {
        axes.dims = v;
    }
    if let Some(v) = args.lrs {
        axes.learning_rates = v;
    }
    if let Some(v) = args.l2s {
        axes.l2_lambdas = v;
    }
    if let Some(v) = args.batch_sizes {
        axes.batch_sizes = v;
    }
    let mut base = TrainConfig {
        seed: ctx.seed,
        ..ctx.cfg.train.clone()
    };
    if let Some(v) = args.max_epochs {
        base.max_epochs = v;
    }
    let (ds, [interactions, index]) = load_dataset(ctx)?;
    let (split, split_path) = load_split(ctx, &ds)?;
    let train = split.examples(&ds, Split::Train);
    let validation = split.examples(&ds, Split::Validation);
    if validation.is_empty() {
        return Err(InvalidArtifact(
            "grid search needs a validation partition; rerun `toxcf split` without --no-validation"
                .into(),
        )
        .into());
    }
    let result = grid_search(
        ds.n_users(),
        ds.n_subreddits(),
        &train,
        &validation,
        &axes,
        &base,
    )?;
    info!(
        "best of {} cells: d={} lr={} l2={} batch={} (validation G-mean {:.4})",
        result.cells.len(),
        result.best.dim,
        result.best.learning_rate,
        result.best.l2_lambda,
        result.best.batch_size,
        result.best_validation_gmean
    );
    let grid_path = ctx.path(&ctx.cfg.paths.grid);
    let best_path = ctx.path(&ctx.cfg.paths.best_config);
    write_json(&grid_path, &result)?;
    write_json(&best_path, &result.best)?;
    ctx.record(
        "grid",
        Some(ctx.seed),
        json!({ "axes": axes, "base": base }),
        &[&interactions, &index, &split_path],
        &[&grid_path, &best_path],
    )
}

fn mean_extended(all: &[ExtendedMetrics]) -> ExtendedMetrics {
    let n = all.len().max(1) as f64;
    let mean = |f: fn(&ExtendedMetrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    let auc: Option<Vec<f64>> = all.iter().map(|e| e.roc_auc).collect();
    ExtendedMetrics {
        accuracy: mean(|e| e.accuracy),
        precision: mean(|e| e.precision),
        f1: mean(|e| e.f1),
        roc_auc: auc
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64),
    }
}

fn evaluate(ctx: &Env, args: EvaluateArgs) -> Result<()> {
    let summary_path = ctx.path(&ctx.cfg.paths.train_summary);
    require(&summary_path, "model checkpoint", "train")?;
    let summary: TrainSummary = read_json(&summary_path)?;
    let (ds, [interactions, index]) = load_dataset(ctx)?;
    let (split, split_path) = load_split(ctx, &ds)?;
    let models_dir = ctx.path(&ctx.cfg.paths.models);

    let train = split.examples(&ds, Split::Train);
    let test = split.examples(&ds, Split::Test);
    if test.is_empty() {
        return Err(InvalidArtifact("the test partition is empty".into()).into());
    }
    let truth: Vec<Label> = test.iter().map(|e| e.label).collect();

    let baselines = if args.baseline.is_empty() {
        ctx.cfg.baselines.clone()
    } else {
        args.baseline.clone()
    };
    let runs = args.runs.unwrap_or(ctx.cfg.baseline_runs);
    if runs == 0 {
        return Err(InvalidArtifact("--runs must be at least 1".into()).into());
    }
    let mut report = ComparisonReport::default();
    for b in Baseline::ALL.into_iter().filter(|b| baselines.contains(b)) {
        let seeds: Vec<u64> = (0..runs as u64).map(|i| ctx.seed.wrapping_add(i)).collect();
        let mut results = Vec::new();
        let mut extended = Vec::new();
        for &s in &seeds {
            let pred = predict_baseline(b, &train, &test, s)?;
            let cm = confusion(&truth, &pred)?;
            results.push(metrics(&cm));
            extended.push(extended_metrics(&cm, None));
        }
        report.rows.push(ReportRow {
            model: b.name().to_string(),
            result: aggregate(results, seeds),
            extended: args.all_metrics.then(|| mean_extended(&extended)),
        });
    }

    let mut checkpoint_paths = Vec::new();
    let mut results = Vec::new();
    let mut extended = Vec::new();
    let mut seeds = Vec::new();
    for run in &summary.runs {
        let path = models_dir.join(&run.checkpoint);
        require(&path, "model checkpoint", "train")?;
        let ckpt = load_checkpoint(&path)?;
        let p = &ckpt.params;
        if (p.n_users, p.n_subreddits) != (ds.n_users(), ds.n_subreddits()) {
            return Err(InvalidArtifact(format!(
                "{} was trained on {}x{} entities but the dataset has {}x{}; retrain",
                path.display(),
                p.n_users,
                p.n_subreddits,
                ds.n_users(),
                ds.n_subreddits()
            ))
            .into());
        }
        let scores: Vec<f64> = test
            .iter()
            .map(|e: &Example| predict(p, e.user, e.subreddit))
            .collect();
        let pred: Vec<Label> = scores.iter().map(|&s| classify(s)).collect();
        let cm = confusion(&truth, &pred)?;
        results.push(metrics(&cm));
        extended.push(extended_metrics(&cm, roc_auc(&truth, &scores)?));
        seeds.push(run.seed);
        checkpoint_paths.push(path);
    }
    if results.is_empty() {
        return Err(InvalidArtifact(format!(
            "{} lists no trained models",
            summary_path.display()
        ))
        .into());
    }
    report.rows.push(ReportRow {
        model: "MDL".to_string(),
        result: aggregate(results, seeds),
        extended: args.all_metrics.then(|| mean_extended(&extended)),
    });
    print!("{report}");

    let out = ctx.path(&ctx.cfg.paths.evaluation);
    write_json(&out, &report)?;
    let mut inputs: Vec<&Path> = vec![&interactions, &index, &split_path, &summary_path];
    inputs.extend(checkpoint_paths.iter().map(|p| p.as_path()));
    ctx.record(
        "evaluate",
        Some(ctx.seed),
        json!({ "baselines": baselines, "baseline_runs": runs, "all_metrics": args.all_metrics }),
        &inputs,
        &[&out],
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct Table {
    rows: Vec<TableRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MeanStd {
    mean: f64,
    std: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    model: String,
    runs: usize,
    sensitivity: MeanStd,
    specificity: MeanStd,
    gmean: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    extended: Option<ExtendedMetrics>,
}

fn table_row(row: &ReportRow) -> TableRow {
    let pick = |f: fn(&MetricSummary) -> f64| MeanStd {
        mean: f(&row.result.mean),
        std: f(&row.result.std),
    };
    TableRow {
        model: row.model.clone(),
        runs: row.result.runs.len(),
        sensitivity: pick(|m| m.sensitivity),
        specificity: pick(|m| m.specificity),
        gmean: pick(|m| m.gmean),
        extended: row.extended.clone(),
    }
}

fn report(ctx: &Env, args: ReportArgs) -> Result<()> {
    let eval_path = ctx.path(&ctx.cfg.paths.evaluation);
    require(&eval_path, "evaluation results", "evaluate")?;
    let interactions = ctx.path(&ctx.cfg.paths.interactions);
    require(&interactions, "interaction table", "aggregate")?;
    let comparison: ComparisonReport = read_json(&eval_path)?;
    let bins = args.bins.unwrap_or(ctx.cfg.histogram_bins);

    let rows: Vec<TableRow> = comparison.rows.iter().map(table_row).collect();
    let text = comparison.to_string();
    print!("{text}");
    let json_path = ctx.path(&ctx.cfg.paths.report_json);
    let text_path = ctx.path(&ctx.cfg.paths.report_text);
    write_json(&json_path, &Table { rows })?;
    write_text(&text_path, &text)?;

    let means = read_interactions(&interactions)?
        .into_iter()
        .map(|r| r.mean_toxicity);
    let hist = toxicity_histogram(means, bins)?;
    let csv_path = ctx.path(&ctx.cfg.paths.histogram_csv);
    let svg_path = ctx.path(&ctx.cfg.paths.histogram_svg);
    write_text(&csv_path, &hist.to_csv())?;
    write_text(
        &svg_path,
        &hist.to_svg("Mean comment toxicity per interaction"),
    )?;
    ctx.record(
        "report",
        None,
        json!({ "bins": bins }),
        &[&eval_path, &interactions],
        &[&json_path, &text_path, &csv_path, &svg_path],
    )
}
