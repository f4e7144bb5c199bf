//! One function per subcommand. Each returns the process exit code:
//! 0 for a clean run, 1 when any sample failed along the way.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context};
use sodaug_core::analyzer::{analyze, emit_report};
use sodaug_core::dataset::{load_gray, load_mask_binary};
use sodaug_core::evaluator::{
    average_ranking, evaluate_model, read_metrics, write_metrics, write_ranks, write_sweep,
    EvalPair, MetricVector,
};
use sodaug_core::features::FeatureStore;
use sodaug_core::matcher::{read_matches, ScoreKind, SelectionCriterion};
use sodaug_core::synthesis::augment::{create_augmenter, AugmenterOptions};

use crate::args::{
    AugmentArgs, Command, EvalArgs, ExtractArgs, InpaintArgs, MatchArgs, PipelineArgs, RankArgs,
    StatsArgs, SynthArgs,
};
use crate::config::Settings;
use crate::stages::{self, InpaintSettings, MatchSettings, StageReport};
use crate::UsageError;

pub fn execute(command: Command, settings: &Settings) -> anyhow::Result<i32> {
    match command {
        Command::Inpaint(args) => cmd_inpaint(args, settings),
        Command::Extract(args) => cmd_extract(args, settings),
        Command::Match(args) => cmd_match(args, settings),
        Command::Synth(args) => cmd_synth(args, settings),
        Command::Augment(args) => cmd_augment(args, settings),
        Command::Stats(args) => cmd_stats(args, settings),
        Command::Eval(args) => cmd_eval(args, settings),
        Command::Rank(args) => cmd_rank(args, settings),
        Command::Pipeline(args) => cmd_pipeline(args, settings),
    }
}

fn parse_criterion(
    flag: Option<&str>,
    fallback: SelectionCriterion,
) -> anyhow::Result<SelectionCriterion> {
    match flag {
        Some(text) => {
            SelectionCriterion::from_str(text).map_err(|e| UsageError(e.to_string()).into())
        }
        None => Ok(fallback),
    }
}

fn parse_score(flag: Option<&str>, fallback: ScoreKind) -> anyhow::Result<ScoreKind> {
    match flag {
        Some(text) => ScoreKind::from_str(text).map_err(|e| UsageError(e.to_string()).into()),
        None => Ok(fallback),
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(())
}

fn finish(reports: &[StageReport]) -> i32 {
    let mut failures = 0;
    for report in reports {
        println!("{}", report.summary_line());
        failures += report.failures;
    }
    if failures > 0 {
        1
    } else {
        0
    }
}

fn cmd_inpaint(args: InpaintArgs, settings: &Settings) -> anyhow::Result<i32> {
    let manifest = stages::load_manifest(&args.manifest)?;
    let inpaint = InpaintSettings {
        backend: args.backend.as_deref().unwrap_or(&settings.inpaint_backend),
        command: args.cmd.as_deref().or(settings.inpaint_command.as_deref()),
        dilation_radius: args.dilate.unwrap_or(settings.dilation_radius),
        jobs: args.jobs.unwrap_or(settings.jobs),
    };
    let (_, report) = stages::run_inpaint(&manifest, &inpaint, &args.out)?;
    Ok(finish(&[report]))
}

fn cmd_extract(args: ExtractArgs, settings: &Settings) -> anyhow::Result<i32> {
    let manifest = stages::load_manifest(&args.manifest)?;
    let jobs = args.jobs.unwrap_or(settings.jobs);
    let (_, report) = stages::run_extract(&manifest, !args.full, jobs, &args.out)?;
    Ok(finish(&[report]))
}

fn cmd_match(args: MatchArgs, settings: &Settings) -> anyhow::Result<i32> {
    let objects = FeatureStore::read(&args.object_features)?;
    let backgrounds = FeatureStore::read(&args.background_features)?;
    let match_settings = MatchSettings {
        k: args.k.or(settings.k),
        exclude_self: !args.no_exclude_self && settings.exclude_self,
        criterion: parse_criterion(args.criterion.as_deref(), settings.criterion)?,
        score: parse_score(args.score.as_deref(), settings.score)?,
        jobs: args.jobs.unwrap_or(settings.jobs),
    };
    ensure_parent(&args.out)?;
    let (_, report) = stages::run_match(&objects, &backgrounds, &match_settings, &args.out)?;
    Ok(finish(&[report]))
}

fn cmd_synth(args: SynthArgs, settings: &Settings) -> anyhow::Result<i32> {
    let objects = stages::load_manifest(&args.manifest)?;
    let backgrounds = stages::load_manifest(&args.backgrounds)?;
    let rows = read_matches(&args.matches)?;
    let (_, report) = stages::run_synth(
        &objects,
        &backgrounds,
        &rows,
        args.seed.unwrap_or(settings.seed),
        parse_score(args.score.as_deref(), settings.score)?,
        args.jobs.unwrap_or(settings.jobs),
        &args.out,
    )?;
    Ok(finish(&[report]))
}

fn cmd_augment(args: AugmentArgs, settings: &Settings) -> anyhow::Result<i32> {
    let manifest = stages::load_manifest(&args.manifest)?;
    let options = AugmenterOptions {
        hflip_probability: settings.hflip_probability,
        gridmask_period: settings.gridmask_period,
        gridmask_keep_ratio: settings.gridmask_keep_ratio,
        gridmask_probability: settings.gridmask_probability,
    };
    let augmenter = create_augmenter(&args.name, &options)?;
    let report = stages::run_augment(
        &manifest,
        augmenter.as_ref(),
        args.seed.unwrap_or(settings.seed),
        args.jobs.unwrap_or(settings.jobs),
        &args.out,
    )?;
    Ok(finish(&[report]))
}

fn cmd_stats(args: StatsArgs, settings: &Settings) -> anyhow::Result<i32> {
    let manifest = stages::load_manifest(&args.manifest)?;
    let start = Instant::now();
    let report = analyze(
        &manifest,
        args.grid.unwrap_or(settings.grid_size),
        args.jobs.unwrap_or(settings.jobs),
    )?;
    emit_report(&report, &args.out)?;
    println!(
        "stage=stats produced={} skipped={} wall_ms={}",
        report.centers.len(),
        report.skipped,
        start.elapsed().as_millis()
    );
    Ok(0)
}

fn opt_display(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None => "-".to_string(),
    }
}

fn cmd_eval(args: EvalArgs, settings: &Settings) -> anyhow::Result<i32> {
    let manifest = stages::load_manifest(&args.gt_manifest)?;
    let model_id = args.model_id.clone().unwrap_or_else(|| {
        args.pred_dir
            .file_name()
            .map(|name| name.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".to_string())
    });
    let beta = args.beta.unwrap_or(settings.beta);
    let fixed_th = args.fixed_th.unwrap_or(settings.fixed_threshold);

    let mut pairs = Vec::with_capacity(manifest.len());
    for record in manifest.records() {
        let pred_path = args.pred_dir.join(format!("{}.png", record.id));
        let pred = load_gray(&pred_path)
            .with_context(|| format!("loading prediction {}", pred_path.display()))?;
        let gt = load_mask_binary(&manifest.resolve(&record.mask_path))?;
        pairs.push(EvalPair {
            id: record.id.clone(),
            pred,
            gt,
        });
    }

    let start = Instant::now();
    let eval = evaluate_model(&model_id, &pairs, beta, fixed_th)?;
    ensure_parent(&args.out)?;
    write_metrics(std::slice::from_ref(&eval.metrics), &args.out)?;
    if let Some(sweep_path) = &args.sweep_out {
        match &eval.sweep {
            Some(sweep) => {
                ensure_parent(sweep_path)?;
                write_sweep(sweep, sweep_path)?;
            }
            None => log::warn!("no salient ground truth, so there is no sweep to write"),
        }
    }

    println!(
        "model={model_id} samples={} excluded_non_salient={} wall_ms={}",
        eval.sample_count,
        eval.excluded_non_salient,
        start.elapsed().as_millis()
    );
    match &eval.best {
        Some(best) => println!(
            "f_beta={:.6} best_threshold={} precision={:.6} recall={:.6}",
            best.f_beta, best.threshold, best.precision, best.recall
        ),
        None => println!("f_beta=- best_threshold=- precision=- recall=-"),
    }
    println!(
        "s_measure={:.6} mae={:.6} specificity={:.6} fpr={:.6} fnr={} pwc={:.6}",
        eval.metrics.s_measure,
        eval.metrics.mae,
        eval.metrics.specificity,
        eval.metrics.fpr,
        opt_display(eval.metrics.fnr),
        eval.metrics.pwc
    );
    Ok(0)
}

fn cmd_rank(args: RankArgs, _settings: &Settings) -> anyhow::Result<i32> {
    let entries = glob::glob(&args.metrics_glob)
        .map_err(|e| UsageError(format!("bad glob {:?}: {e}", args.metrics_glob)))?;
    let mut paths: Vec<PathBuf> = entries
        .collect::<Result<_, _>>()
        .context("walking metrics tables")?;
    paths.sort();
    if paths.is_empty() {
        bail!("no metrics tables match {:?}", args.metrics_glob);
    }

    let mut models: Vec<MetricVector> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for path in &paths {
        for metrics in read_metrics(path)? {
            if !seen.insert(metrics.model_id.clone()) {
                bail!(
                    "duplicate model id {:?} (second copy in {})",
                    metrics.model_id,
                    path.display()
                );
            }
            models.push(metrics);
        }
    }
    if let Some(th) = args.fixed_th {
        log::info!("ranking tables assumed computed at threshold {th}");
    }

    let table = average_ranking(&models)?;
    ensure_parent(&args.out)?;
    write_ranks(&table, &args.out)?;
    for (position, row) in table.rows.iter().enumerate() {
        println!(
            "rank={} model={} average={:.4}",
            position + 1,
            row.model_id,
            row.average
        );
    }
    Ok(0)
}

fn cmd_pipeline(args: PipelineArgs, settings: &Settings) -> anyhow::Result<i32> {
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| settings.manifest.clone())
        .ok_or_else(|| UsageError("pipeline needs --manifest or manifest= in the config".into()))?;
    let out_root = args
        .out
        .clone()
        .or_else(|| settings.out.clone())
        .ok_or_else(|| UsageError("pipeline needs --out or out= in the config".into()))?;
    let jobs = args.jobs.unwrap_or(settings.jobs);
    let seed = args.seed.unwrap_or(settings.seed);
    let criterion = parse_criterion(args.criterion.as_deref(), settings.criterion)?;
    let score = parse_score(args.score.as_deref(), settings.score)?;

    let manifest = stages::load_manifest(&manifest_path)?;
    let inpaint = InpaintSettings {
        backend: args.backend.as_deref().unwrap_or(&settings.inpaint_backend),
        command: args.cmd.as_deref().or(settings.inpaint_command.as_deref()),
        dilation_radius: args.dilate.unwrap_or(settings.dilation_radius),
        jobs,
    };
    let (backgrounds, inpaint_report) =
        stages::run_inpaint(&manifest, &inpaint, &out_root.join("backgrounds"))?;
    println!("{}", inpaint_report.summary_line());

    let features_dir = out_root.join("features");
    let (object_store, object_report) =
        stages::run_extract(&manifest, true, jobs, &features_dir.join("objects.csv"))?;
    println!("{} target=objects", object_report.summary_line());
    let (background_store, background_report) = stages::run_extract(
        &backgrounds,
        false,
        jobs,
        &features_dir.join("backgrounds.csv"),
    )?;
    println!("{} target=backgrounds", background_report.summary_line());

    let match_settings = MatchSettings {
        k: args.k.or(settings.k),
        exclude_self: !args.no_exclude_self && settings.exclude_self,
        criterion,
        score,
        jobs,
    };
    let (rows, match_report) = stages::run_match(
        &object_store,
        &background_store,
        &match_settings,
        &out_root.join("matches.csv"),
    )?;
    println!("{}", match_report.summary_line());

    let (synthesized, synth_report) = stages::run_synth(
        &manifest,
        &backgrounds,
        &rows,
        seed,
        score,
        jobs,
        &out_root.join("augmented"),
    )?;
    println!("{}", synth_report.summary_line());

    let failures = inpaint_report.failures
        + object_report.failures
        + background_report.failures
        + match_report.failures
        + synth_report.failures;
    println!(
        "total produced={} failures={failures}",
        synthesized.len()
    );
    Ok(if failures > 0 { 1 } else { 0 })
}
