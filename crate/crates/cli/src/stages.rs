//! Stage runners shared by the individual subcommands and the one-shot
//! pipeline, so both paths produce identical artifacts. Each runner
//! returns a small report that the caller prints as one machine-parsable
//! summary line.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use sodaug_core::dataset::DatasetManifest;
use sodaug_core::features::{extract_all, FeatureStore};
use sodaug_core::inpaint::{create_backend, generate_backgrounds};
use sodaug_core::matcher::{match_all, write_matches, MatchRow, ScoreKind, SelectionCriterion};
use sodaug_core::synthesis::augment::Augmenter;
use sodaug_core::synthesis::{augment::augment_dataset, synthesize};
use sodaug_core::Error;

/// Outcome counters for one stage.
#[derive(Debug, Clone, Copy)]
pub struct StageReport {
    pub name: &'static str,
    pub produced: usize,
    pub failures: usize,
    pub wall_ms: u128,
}

impl StageReport {
    pub fn summary_line(&self) -> String {
        format!(
            "stage={} produced={} failures={} wall_ms={}",
            self.name, self.produced, self.failures, self.wall_ms
        )
    }
}

fn warn_failures(stage: &str, failures: &[(String, Error)]) {
    for (id, err) in failures {
        log::warn!("stage={stage} sample={id} event=failed error={err}");
    }
}

pub struct InpaintSettings<'a> {
    pub backend: &'a str,
    pub command: Option<&'a str>,
    pub dilation_radius: u32,
    pub jobs: usize,
}

pub fn run_inpaint(
    manifest: &DatasetManifest,
    settings: &InpaintSettings,
    out_dir: &Path,
) -> anyhow::Result<(DatasetManifest, StageReport)> {
    let start = Instant::now();
    let backend = create_backend(settings.backend, settings.command)?;
    let outcome = generate_backgrounds(
        manifest,
        backend.as_ref(),
        settings.dilation_radius,
        settings.jobs,
        out_dir,
    )?;
    warn_failures("inpaint", &outcome.failures);
    let report = StageReport {
        name: "inpaint",
        produced: outcome.records.len(),
        failures: outcome.failures.len(),
        wall_ms: start.elapsed().as_millis(),
    };
    let backgrounds = DatasetManifest::new(out_dir, outcome.records)?;
    Ok((backgrounds, report))
}

/// Features every sample and writes the table to `out_path`.
pub fn run_extract(
    manifest: &DatasetManifest,
    masked: bool,
    jobs: usize,
    out_path: &Path,
) -> anyhow::Result<(FeatureStore, StageReport)> {
    let start = Instant::now();
    let outcome = extract_all(manifest, masked, jobs)?;
    warn_failures("extract", &outcome.failures);
    outcome.store.write(out_path)?;
    let report = StageReport {
        name: "extract",
        produced: outcome.store.len(),
        failures: outcome.failures.len(),
        wall_ms: start.elapsed().as_millis(),
    };
    Ok((outcome.store, report))
}

pub struct MatchSettings {
    pub k: Option<usize>,
    pub exclude_self: bool,
    pub criterion: SelectionCriterion,
    pub score: ScoreKind,
    pub jobs: usize,
}

pub fn run_match(
    objects: &FeatureStore,
    backgrounds: &FeatureStore,
    settings: &MatchSettings,
    out_path: &Path,
) -> anyhow::Result<(Vec<MatchRow>, StageReport)> {
    let start = Instant::now();
    let outcome = match_all(
        objects,
        backgrounds,
        settings.k,
        settings.exclude_self,
        settings.criterion,
        settings.score,
        settings.jobs,
    );
    warn_failures("match", &outcome.failures);
    write_matches(&outcome.rows, out_path)?;
    let report = StageReport {
        name: "match",
        produced: outcome.rows.len(),
        failures: outcome.failures.len(),
        wall_ms: start.elapsed().as_millis(),
    };
    Ok((outcome.rows, report))
}

#[allow(clippy::too_many_arguments)]
pub fn run_synth(
    objects: &DatasetManifest,
    backgrounds: &DatasetManifest,
    matches: &[MatchRow],
    seed: u64,
    score: ScoreKind,
    jobs: usize,
    out_dir: &Path,
) -> anyhow::Result<(DatasetManifest, StageReport)> {
    let start = Instant::now();
    let output = synthesize(objects, backgrounds, matches, seed, score, jobs, out_dir)?;
    warn_failures("synth", &output.failures);
    let report = StageReport {
        name: "synth",
        produced: output.records.len(),
        failures: output.failures.len(),
        wall_ms: start.elapsed().as_millis(),
    };
    let synthesized = DatasetManifest::new(out_dir, output.records)?;
    Ok((synthesized, report))
}

pub fn run_augment(
    manifest: &DatasetManifest,
    augmenter: &dyn Augmenter,
    seed: u64,
    jobs: usize,
    out_dir: &Path,
) -> anyhow::Result<StageReport> {
    let start = Instant::now();
    let outcome = augment_dataset(manifest, augmenter, seed, jobs, out_dir)?;
    warn_failures("augment", &outcome.failures);
    Ok(StageReport {
        name: "augment",
        produced: outcome.records.len(),
        failures: outcome.failures.len(),
        wall_ms: start.elapsed().as_millis(),
    })
}

pub fn load_manifest(path: &Path) -> anyhow::Result<DatasetManifest> {
    DatasetManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}
