//! Black-box tests of the `sodaug` binary: exit codes, settings
//! precedence, and the promise that the one-shot pipeline equals running
//! its stages by hand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Output;

use rand::Rng;
use sodaug_core::dataset::{save_sample, DatasetManifest, LabeledSample};
use sodaug_core::raster::{ImageBuffer, SalienceMask};
use sodaug_core::rng::sample_rng;
use sodaug_core::synthesis::read_provenance;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sodaug")
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .output()
        .expect("spawning the binary")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(path: &Path) -> &str {
    path.to_str().expect("paths in tests are valid unicode")
}

fn object_sample(id: &str, rect: (u32, u32, u32, u32), color: [u8; 3], stream: u64) -> LabeledSample {
    let (w, h) = (48, 36);
    let mut rng = sample_rng(8101, stream);
    let mut image = ImageBuffer::new(w, h, 3).unwrap();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                image.set(x, y, c, rng.gen());
            }
        }
    }
    let mut mask = SalienceMask::new(w, h).unwrap();
    let (x0, y0, rw, rh) = rect;
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            for c in 0..3 {
                image.set(x, y, c, color[c as usize]);
            }
            mask.set(x, y, 255);
        }
    }
    LabeledSample {
        id: id.to_string(),
        image,
        mask,
        bbox: None,
    }
}

/// Writes a four-sample dataset and returns its manifest path.
fn write_dataset(dir: &Path) -> PathBuf {
    let samples = [
        object_sample("s0", (6, 5, 12, 9), [220, 50, 50], 0),
        object_sample("s1", (20, 11, 9, 14), [50, 220, 60], 1),
        object_sample("s2", (10, 18, 16, 8), [60, 60, 220], 2),
        object_sample("s3", (28, 6, 10, 10), [220, 210, 60], 3),
    ];
    let records = samples
        .iter()
        .map(|s| save_sample(s, dir).unwrap())
        .collect();
    let manifest = DatasetManifest::new(dir, records).unwrap();
    let path = dir.join("manifest.jsonl");
    manifest.save(&path).unwrap();
    path
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let key = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn assert_same_tree(lhs: &Path, rhs: &Path) {
    let a = tree_bytes(lhs);
    let b = tree_bytes(rhs);
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "different file sets under {} and {}",
        lhs.display(),
        rhs.display()
    );
    for (path, bytes) in &a {
        assert_eq!(Some(bytes), b.get(path), "{} differs", path.display());
    }
}

#[test]
fn pipeline_equals_manual_stages_and_ignores_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&tmp.path().join("src"));
    let manifest = path_str(&manifest);

    let auto = tmp.path().join("auto");
    run_ok(&[
        "pipeline", "--manifest", manifest, "--out", path_str(&auto),
        "--seed", "9", "--jobs", "2",
    ]);

    // The same stages by hand, into the same relative layout.
    let manual = tmp.path().join("manual");
    let backgrounds = manual.join("backgrounds");
    run_ok(&[
        "inpaint", "--manifest", manifest, "--out", path_str(&backgrounds),
        "--jobs", "2",
    ]);
    let bg_manifest = backgrounds.join("manifest.jsonl");
    let objects_csv = manual.join("features/objects.csv");
    let backgrounds_csv = manual.join("features/backgrounds.csv");
    run_ok(&[
        "extract", "--manifest", manifest, "--out", path_str(&objects_csv), "--masked",
    ]);
    run_ok(&[
        "extract", "--manifest", path_str(&bg_manifest),
        "--out", path_str(&backgrounds_csv), "--full",
    ]);
    let matches = manual.join("matches.csv");
    run_ok(&[
        "match", "--object-features", path_str(&objects_csv),
        "--background-features", path_str(&backgrounds_csv),
        "--out", path_str(&matches),
    ]);
    run_ok(&[
        "synth", "--manifest", manifest, "--backgrounds", path_str(&bg_manifest),
        "--matches", path_str(&matches), "--seed", "9",
        "--out", path_str(&manual.join("augmented")),
    ]);
    assert_same_tree(&auto, &manual);

    // A different worker count changes nothing.
    let serial = tmp.path().join("serial");
    run_ok(&[
        "pipeline", "--manifest", manifest, "--out", path_str(&serial),
        "--seed", "9", "--jobs", "1",
    ]);
    assert_same_tree(&auto, &serial);
}

#[test]
fn settings_file_feeds_defaults_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&tmp.path().join("src"));
    let manifest = path_str(&manifest);
    let config = tmp.path().join("run.conf");
    std::fs::write(&config, "seed = 3\njobs = 2\n").unwrap();

    let from_file = tmp.path().join("from_file");
    run_ok(&[
        "--config", path_str(&config),
        "pipeline", "--manifest", manifest, "--out", path_str(&from_file),
    ]);
    let from_flag = tmp.path().join("from_flag");
    run_ok(&[
        "pipeline", "--manifest", manifest, "--out", path_str(&from_flag), "--seed", "3",
    ]);
    assert_same_tree(&from_file, &from_flag);

    // A flag wins over the file: seed 4 must draw different geometry.
    let overridden = tmp.path().join("overridden");
    run_ok(&[
        "--config", path_str(&config),
        "pipeline", "--manifest", manifest, "--out", path_str(&overridden), "--seed", "4",
    ]);
    let base = read_provenance(&from_file.join("augmented/provenance.csv")).unwrap();
    let other = read_provenance(&overridden.join("augmented/provenance.csv")).unwrap();
    assert_eq!(base.len(), other.len());
    assert!(
        base.iter().zip(&other).any(|(a, b)| a.scale != b.scale),
        "seed override had no effect on the drawn scales"
    );
}

#[test]
fn usage_mistakes_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&tmp.path().join("src"));

    let bad_config = tmp.path().join("bad.conf");
    std::fs::write(&bad_config, "seed = 1\nsedd = 2\n").unwrap();
    let out = run(&[
        "--config", path_str(&bad_config),
        "stats", "--manifest", path_str(&manifest), "--out", path_str(&tmp.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sedd"), "stderr was: {stderr}");

    let out = run(&[
        "augment", "cutout",
        "--manifest", path_str(&manifest),
        "--out", path_str(&tmp.path().join("y")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cutout"));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "stats",
        "--manifest", path_str(&tmp.path().join("absent.jsonl")),
        "--out", path_str(&tmp.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("absent.jsonl"), "stderr was: {stderr}");
}

#[test]
fn augment_runs_are_deterministic_and_gridmask_keeps_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let src_dir = tmp.path().join("src");
    let manifest_path = write_dataset(&src_dir);
    let manifest = path_str(&manifest_path);

    let once = tmp.path().join("once");
    let twice = tmp.path().join("twice");
    for out in [&once, &twice] {
        run_ok(&[
            "augment", "gridmask", "--manifest", manifest,
            "--seed", "5", "--out", path_str(out),
        ]);
    }
    assert_same_tree(&once, &twice);

    let source = DatasetManifest::load(&manifest_path).unwrap();
    for record in source.records() {
        let original = std::fs::read(source.resolve(&record.mask_path)).unwrap();
        let masked = std::fs::read(once.join("masks").join(format!("{}.png", record.id))).unwrap();
        assert_eq!(original, masked, "gridmask must not move the object");
    }
}

#[test]
fn eval_and_rank_wire_the_metrics_through() {
    let tmp = tempfile::tempdir().unwrap();
    let src_dir = tmp.path().join("src");
    let manifest_path = write_dataset(&src_dir);
    let manifest = path_str(&manifest_path);

    // Perfect predictions are the masks themselves; the rival erases one
    // object entirely.
    let perfect = tmp.path().join("perfect");
    std::fs::create_dir_all(&perfect).unwrap();
    let rival = tmp.path().join("rival");
    std::fs::create_dir_all(&rival).unwrap();
    let source = DatasetManifest::load(&manifest_path).unwrap();
    for (idx, record) in source.records().iter().enumerate() {
        let mask = source.resolve(&record.mask_path);
        let name = format!("{}.png", record.id);
        std::fs::copy(&mask, perfect.join(&name)).unwrap();
        if idx == 0 {
            let blank = SalienceMask::new(48, 36).unwrap();
            sodaug_core::dataset::save_mask_png(&blank, &rival.join(&name)).unwrap();
        } else {
            std::fs::copy(&mask, rival.join(&name)).unwrap();
        }
    }

    let metrics_a = tmp.path().join("runs/perfect/METRICS.csv");
    let metrics_b = tmp.path().join("runs/rival/METRICS.csv");
    let out = run_ok(&[
        "eval", "--pred-dir", path_str(&perfect), "--gt-manifest", manifest,
        "--out", path_str(&metrics_a),
        "--sweep-out", path_str(&tmp.path().join("sweep.csv")),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("model=perfect"), "stdout was: {stdout}");
    assert!(stdout.contains("f_beta=1.000000"), "stdout was: {stdout}");
    run_ok(&[
        "eval", "--pred-dir", path_str(&rival), "--gt-manifest", manifest,
        "--out", path_str(&metrics_b),
    ]);
    let sweep = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 255);

    let ranks = tmp.path().join("RANKS.csv");
    let pattern = format!("{}/runs/*/METRICS.csv", path_str(tmp.path()));
    let out = run_ok(&["rank", "--metrics-glob", &pattern, "--out", path_str(&ranks)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.lines().next().unwrap().contains("model=perfect"),
        "stdout was: {stdout}"
    );
    let table = std::fs::read_to_string(&ranks).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("model_id,"));
    assert!(table.contains("perfect,1,"));

    // Feeding the same model twice trips the duplicate-id guard.
    std::fs::copy(&metrics_a, tmp.path().join("runs/rival/DUP.csv")).unwrap();
    let dup_glob = format!("{}/runs/*/*.csv", path_str(tmp.path()));
    let out = run(&["rank", "--metrics-glob", &dup_glob, "--out", path_str(&ranks)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));

    // A prediction directory missing one map is a hard failure.
    std::fs::remove_file(rival.join("s1.png")).unwrap();
    let out = run(&[
        "eval", "--pred-dir", path_str(&rival), "--gt-manifest", manifest,
        "--out", path_str(&metrics_b),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s1.png"));
}
