//! Background selection. Objects are matched to candidate backgrounds by
//! ranking cosine distances over the whole store (inter-image step), and a
//! placement patch is chosen inside the selected background by scoring every
//! grid patch against the object's features (intra-image step).
//!
//! All scores are kept in distance space (1 - cosine similarity). Reading
//! the score as a similarity instead flips which end of the ranking is
//! interesting; [`ScoreKind::Similarity`] expresses that by targeting
//! mu - sigma during selection and the least distant patch during placement,
//! which is arithmetically identical to redoing the math on similarities.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{cosine_distance, extract_features, FeatureStore, FeatureVector};
use crate::parallel::with_jobs;
use crate::raster::ImageBuffer;

/// Which reading of the ranking score drives the choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreKind {
    #[default]
    Distance,
    Similarity,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Distance => "distance",
            ScoreKind::Similarity => "similarity",
        }
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(ScoreKind::Distance),
            "similarity" => Ok(ScoreKind::Similarity),
            other => Err(Error::UnknownStrategy {
                kind: "score",
                name: other.to_string(),
                known: "distance, similarity",
            }),
        }
    }
}

/// How the background is picked from a ranked neighbor list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionCriterion {
    /// The neighbor whose distance is closest to mu + sigma.
    #[default]
    MuPlusSigma,
    /// The middle neighbor of the ascending list.
    Median,
}

impl SelectionCriterion {
    pub fn name(self) -> &'static str {
        match self {
            SelectionCriterion::MuPlusSigma => "mu-sigma",
            SelectionCriterion::Median => "median",
        }
    }
}

impl FromStr for SelectionCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu-sigma" => Ok(SelectionCriterion::MuPlusSigma),
            "median" => Ok(SelectionCriterion::Median),
            other => Err(Error::UnknownStrategy {
                kind: "selection criterion",
                name: other.to_string(),
                known: "mu-sigma, median",
            }),
        }
    }
}

impl fmt::Display for SelectionCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub background_id: String,
    pub distance: f64,
}

/// The ranked candidates for one object, nearest first, with the mean and
/// population standard deviation of the retained distances.
#[derive(Debug, Clone)]
pub struct NeighborList {
    pub object_id: String,
    pub entries: Vec<NeighborEntry>,
    pub mu: f64,
    pub sigma: f64,
}

impl NeighborList {
    /// Sorts the entries ascending by (distance, id) and fills in the
    /// statistics.
    pub fn new(object_id: impl Into<String>, mut entries: Vec<NeighborEntry>) -> Self {
        entries.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.background_id.cmp(&b.background_id))
        });
        let n = entries.len();
        let mu = if n == 0 {
            0.0
        } else {
            entries.iter().map(|e| e.distance).sum::<f64>() / n as f64
        };
        let sigma = if n == 0 {
            0.0
        } else {
            let variance = entries
                .iter()
                .map(|e| (e.distance - mu).powi(2))
                .sum::<f64>()
                / n as f64;
            variance.sqrt()
        };
        Self {
            object_id: object_id.into(),
            entries,
            mu,
            sigma,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    pub object_id: String,
    pub background_id: String,
    pub criterion: SelectionCriterion,
    pub chosen_distance: f64,
}

/// Scores the object against every store entry and keeps the `k` nearest
/// (all of them when `k` is `None`). Zero vectors in the store cannot be
/// scored and are skipped with a warning; `exclude_self` drops the
/// background that came from the object's own image.
pub fn rank_backgrounds(
    object_id: &str,
    object_features: &FeatureVector,
    store: &FeatureStore,
    k: Option<usize>,
    exclude_self: bool,
) -> Result<NeighborList> {
    let mut entries = Vec::with_capacity(store.len());
    for (id, features) in store.entries() {
        if exclude_self && id == object_id {
            continue;
        }
        if features.is_zero() {
            log::warn!("stage=match object={object_id} candidate={id} event=skip-zero-vector");
            continue;
        }
        entries.push(NeighborEntry {
            background_id: id.clone(),
            distance: cosine_distance(object_features, features)?,
        });
    }
    let k = k.unwrap_or(entries.len());
    if entries.len() < k {
        return Err(Error::NotEnoughCandidates {
            requested: k,
            available: entries.len(),
        });
    }
    let mut list = NeighborList::new(object_id, entries);
    list.entries.truncate(k);
    Ok(NeighborList::new(list.object_id, list.entries))
}

/// Picks one background from a ranked list.
pub fn select_background(
    neighbors: &NeighborList,
    criterion: SelectionCriterion,
    score: ScoreKind,
) -> Result<MatchResult> {
    if neighbors.entries.is_empty() {
        return Err(Error::EmptyNeighbors);
    }
    let chosen = match criterion {
        SelectionCriterion::Median => &neighbors.entries[neighbors.entries.len() / 2],
        SelectionCriterion::MuPlusSigma => {
            let target = match score {
                ScoreKind::Distance => neighbors.mu + neighbors.sigma,
                // In similarity space the target is mean + std of the
                // similarities, which maps to mu - sigma in distance space.
                ScoreKind::Similarity => neighbors.mu - neighbors.sigma,
            };
            // The list is sorted by (distance, id), so keeping the first
            // strictly better entry realizes both tie rules: equal gaps
            // resolve to the smaller distance, equal distances to the
            // lexicographically smaller id.
            neighbors
                .entries
                .iter()
                .min_by(|a, b| {
                    (a.distance - target)
                        .abs()
                        .total_cmp(&(b.distance - target).abs())
                })
                .expect("non-empty entries")
        }
    };
    Ok(MatchResult {
        object_id: neighbors.object_id.clone(),
        background_id: chosen.background_id.clone(),
        criterion,
        chosen_distance: chosen.distance,
    })
}

/// The patch anchors scanned during placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_w: u32,
    pub patch_h: u32,
    pub anchors: Vec<(u32, u32)>,
}

/// Tiles the background with patch-sized strides along each axis, anchoring
/// the last patch to the far edge so no pixel is left uncovered. Anchors
/// come out in row-major order.
pub fn slice_patches(bg_w: u32, bg_h: u32, patch_w: u32, patch_h: u32) -> Result<PatchGrid> {
    if patch_w > bg_w || patch_h > bg_h || patch_w == 0 || patch_h == 0 {
        return Err(Error::PatchTooLarge {
            patch_w,
            patch_h,
            image_w: bg_w,
            image_h: bg_h,
        });
    }
    let axis = |size: u32, patch: u32| {
        let mut stops: Vec<u32> = (0..)
            .map(|i| i * patch)
            .take_while(|&pos| pos + patch <= size)
            .collect();
        let last = size - patch;
        if stops.last() != Some(&last) {
            stops.push(last);
        }
        stops
    };
    let xs = axis(bg_w, patch_w);
    let ys = axis(bg_h, patch_h);
    let anchors = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    Ok(PatchGrid {
        patch_w,
        patch_h,
        anchors,
    })
}

/// Scores every patch of the grid against the target features and returns
/// the winning anchor: the most distant patch under the distance reading,
/// the nearest one under the similarity reading. Ties stay with the
/// earliest anchor in row-major order.
pub fn find_best_patch(
    target: &FeatureVector,
    background: &ImageBuffer,
    grid: &PatchGrid,
    score: ScoreKind,
) -> Result<(u32, u32)> {
    if grid.anchors.is_empty() {
        return Err(Error::EmptyNeighbors);
    }
    let mut best: Option<((u32, u32), f64)> = None;
    for &(x, y) in &grid.anchors {
        let patch = background.crop(x, y, grid.patch_w, grid.patch_h)?;
        let features = extract_features(&patch, None)?;
        let distance = cosine_distance(target, &features)?;
        let better = match (&best, score) {
            (None, _) => true,
            (Some((_, held)), ScoreKind::Distance) => distance > *held,
            (Some((_, held)), ScoreKind::Similarity) => distance < *held,
        };
        if better {
            best = Some(((x, y), distance));
        }
    }
    Ok(best.expect("non-empty grid").0)
}

/// One line of the match table.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchRow {
    pub object_id: String,
    pub background_id: String,
    pub distance: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Default)]
pub struct MatchOutcome {
    pub rows: Vec<MatchRow>,
    pub failures: Vec<(String, Error)>,
}

/// Ranks and selects a background for every object in the store. Objects
/// that cannot be matched (zero vector, empty candidate set) fail soft and
/// are reported in `failures`; row order follows the object store.
pub fn match_all(
    objects: &FeatureStore,
    backgrounds: &FeatureStore,
    k: Option<usize>,
    exclude_self: bool,
    criterion: SelectionCriterion,
    score: ScoreKind,
    jobs: usize,
) -> MatchOutcome {
    let results: Vec<(String, Result<MatchRow>)> = with_jobs(jobs, || {
        objects
            .entries()
            .par_iter()
            .map(|(id, features)| {
                let row = rank_backgrounds(id, features, backgrounds, k, exclude_self).and_then(
                    |neighbors| {
                        let result = select_background(&neighbors, criterion, score)?;
                        Ok(MatchRow {
                            object_id: result.object_id,
                            background_id: result.background_id,
                            distance: result.chosen_distance,
                            mu: neighbors.mu,
                            sigma: neighbors.sigma,
                        })
                    },
                );
                (id.clone(), row)
            })
            .collect()
    });
    let mut outcome = MatchOutcome::default();
    for (id, result) in results {
        match result {
            Ok(row) => outcome.rows.push(row),
            Err(e) => {
                log::warn!("stage=match object={id} event=fail error={e}");
                outcome.failures.push((id, e));
            }
        }
    }
    outcome
}

const MATCHES_HEADER: &str = "object_id,background_id,distance,mu,sigma";

/// Writes the match table. Floats are serialized with enough digits to
/// round-trip exactly.
pub fn write_matches(rows: &[MatchRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = String::from(MATCHES_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e}\n",
            row.object_id, row.background_id, row.distance, row.mu, row.sigma
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_matches(path: &Path) -> Result<Vec<MatchRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_error = |line: usize, message: String| Error::TableParse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == MATCHES_HEADER => {}
        Some((_, header)) => {
            return Err(parse_error(1, format!("unexpected header {header:?}")));
        }
        None => return Err(parse_error(1, "empty file".to_string())),
    }
    let mut rows = Vec::new();
    for (index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_error(
                index + 1,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let number = |field: &str, name: &str| {
            field.parse::<f64>().map_err(|e| {
                parse_error(index + 1, format!("bad {name} value {field:?}: {e}"))
            })
        };
        rows.push(MatchRow {
            object_id: fields[0].to_string(),
            background_id: fields[1].to_string(),
            distance: number(fields[2], "distance")?,
            mu: number(fields[3], "mu")?,
            sigma: number(fields[4], "sigma")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn list(distances: &[(&str, f64)]) -> NeighborList {
        let entries = distances
            .iter()
            .map(|&(id, distance)| NeighborEntry {
                background_id: id.to_string(),
                distance,
            })
            .collect();
        NeighborList::new("obj", entries)
    }

    fn vector(values: &[f64]) -> FeatureVector {
        let mut v = FeatureVector::zeros();
        v.0[..values.len()].copy_from_slice(values);
        v
    }

    #[test]
    fn statistics_use_the_population_form() {
        let l = list(&[("a", 0.1), ("b", 0.5), ("c", 0.9)]);
        assert!((l.mu - 0.5).abs() < 1e-12);
        assert!((l.sigma - 0.326_598_632_371_090_44).abs() < 1e-9);
    }

    #[test]
    fn mu_sigma_criterion_picks_the_far_background() {
        let l = list(&[("a", 0.1), ("b", 0.5), ("c", 0.9)]);
        let chosen = select_background(&l, SelectionCriterion::MuPlusSigma, ScoreKind::Distance)
            .unwrap();
        assert_eq!(chosen.background_id, "c");
        assert!((chosen.chosen_distance - 0.9).abs() < 1e-12);
    }

    #[test]
    fn median_criterion_picks_the_middle_background() {
        let l = list(&[("a", 0.1), ("b", 0.5), ("c", 0.9)]);
        let chosen =
            select_background(&l, SelectionCriterion::Median, ScoreKind::Distance).unwrap();
        assert_eq!(chosen.background_id, "b");
    }

    #[test]
    fn similarity_reading_targets_the_near_side() {
        let l = list(&[("a", 0.1), ("b", 0.5), ("c", 0.9)]);
        let chosen = select_background(&l, SelectionCriterion::MuPlusSigma, ScoreKind::Similarity)
            .unwrap();
        assert_eq!(chosen.background_id, "a");
    }

    #[test]
    fn equal_distances_fall_back_to_lexicographic_ids() {
        let l = list(&[("zeta", 0.4), ("beta", 0.4), ("alfa", 0.4)]);
        let chosen = select_background(&l, SelectionCriterion::MuPlusSigma, ScoreKind::Distance)
            .unwrap();
        assert_eq!(chosen.background_id, "alfa");
    }

    #[test]
    fn empty_list_cannot_be_selected_from() {
        let l = list(&[]);
        assert!(matches!(
            select_background(&l, SelectionCriterion::Median, ScoreKind::Distance),
            Err(Error::EmptyNeighbors)
        ));
    }

    #[test]
    fn ranking_sorts_ascending_and_matches_a_direct_scan() {
        let mut store = FeatureStore::default();
        store.push("p", vector(&[1.0, 0.0, 0.0])).unwrap();
        store.push("q", vector(&[1.0, 1.0, 0.0])).unwrap();
        store.push("r", vector(&[0.0, 1.0, 0.0])).unwrap();
        let object = vector(&[1.0, 0.0, 0.0]);

        let ranked = rank_backgrounds("obj", &object, &store, None, true).unwrap();
        let mut direct: Vec<f64> = store
            .entries()
            .iter()
            .map(|(_, f)| cosine_distance(&object, f).unwrap())
            .collect();
        direct.sort_by(f64::total_cmp);
        let got: Vec<f64> = ranked.entries.iter().map(|e| e.distance).collect();
        assert_eq!(got, direct);
        assert_eq!(ranked.entries[0].background_id, "p");
        assert!(ranked.entries[0].distance.abs() < 1e-12);
        assert!(got.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn self_exclusion_removes_the_objects_own_background() {
        let mut store = FeatureStore::default();
        store.push("obj", vector(&[1.0, 0.0])).unwrap();
        store.push("other", vector(&[1.0, 1.0])).unwrap();
        let object = vector(&[1.0, 0.0]);

        let with = rank_backgrounds("obj", &object, &store, None, false).unwrap();
        assert_eq!(with.entries.len(), 2);
        let without = rank_backgrounds("obj", &object, &store, None, true).unwrap();
        assert_eq!(without.entries.len(), 1);
        assert_eq!(without.entries[0].background_id, "other");
    }

    #[test]
    fn zero_vectors_in_the_store_are_skipped() {
        let mut store = FeatureStore::default();
        store.push("dead", FeatureVector::zeros()).unwrap();
        store.push("live", vector(&[1.0, 1.0])).unwrap();
        let ranked =
            rank_backgrounds("obj", &vector(&[1.0, 0.0]), &store, None, true).unwrap();
        assert_eq!(ranked.entries.len(), 1);
        assert_eq!(ranked.entries[0].background_id, "live");
    }

    #[test]
    fn too_large_k_is_reported() {
        let mut store = FeatureStore::default();
        store.push("only", vector(&[1.0])).unwrap();
        assert!(matches!(
            rank_backgrounds("obj", &vector(&[1.0]), &store, Some(2), true),
            Err(Error::NotEnoughCandidates {
                requested: 2,
                available: 1,
            })
        ));
    }

    #[test]
    fn grid_anchors_stride_by_patch_size_with_an_edge_anchor() {
        let grid = slice_patches(100, 100, 40, 40).unwrap();
        let expected: Vec<(u32, u32)> = [0u32, 40, 60]
            .iter()
            .flat_map(|&y| [0u32, 40, 60].iter().map(move |&x| (x, y)))
            .collect();
        assert_eq!(grid.anchors, expected);

        let even = slice_patches(100, 100, 50, 50).unwrap();
        assert_eq!(even.anchors.len(), 4);

        let single = slice_patches(32, 20, 32, 20).unwrap();
        assert_eq!(single.anchors, vec![(0, 0)]);

        assert!(matches!(
            slice_patches(10, 10, 11, 4),
            Err(Error::PatchTooLarge { .. })
        ));
    }

    #[test]
    fn patch_search_prefers_the_most_distant_patch() {
        // Left half red, right half blue. A red target should land on the
        // blue side under the distance reading and on the red side under
        // the similarity reading.
        let mut background = ImageBuffer::new(16, 8, 3).unwrap();
        for y in 0..8u32 {
            for x in 0..16u32 {
                if x < 8 {
                    background.set(x, y, 0, 200);
                } else {
                    background.set(x, y, 2, 200);
                }
            }
        }
        let red_patch = background.crop(0, 0, 8, 8).unwrap();
        let target = extract_features(&red_patch, None).unwrap();
        let grid = slice_patches(16, 8, 8, 8).unwrap();
        assert_eq!(grid.anchors, vec![(0, 0), (8, 0)]);

        let far = find_best_patch(&target, &background, &grid, ScoreKind::Distance).unwrap();
        assert_eq!(far, (8, 0));
        let near = find_best_patch(&target, &background, &grid, ScoreKind::Similarity).unwrap();
        assert_eq!(near, (0, 0));
    }

    #[test]
    fn uniform_background_resolves_ties_to_the_origin() {
        let mut background = ImageBuffer::new(20, 20, 3).unwrap();
        for y in 0..20u32 {
            for x in 0..20u32 {
                for c in 0..3u8 {
                    background.set(x, y, c, 120);
                }
            }
        }
        let target = extract_features(&background.crop(0, 0, 9, 9).unwrap(), None).unwrap();
        let grid = slice_patches(20, 20, 9, 9).unwrap();
        let anchor = find_best_patch(&target, &background, &grid, ScoreKind::Distance).unwrap();
        assert_eq!(anchor, (0, 0));
    }

    #[test]
    fn match_table_round_trips() {
        let rows = vec![
            MatchRow {
                object_id: "o1".into(),
                background_id: "b9".into(),
                distance: 0.123_456_789_012_345_67,
                mu: 0.5,
                sigma: 1.0 / 3.0,
            },
            MatchRow {
                object_id: "o2".into(),
                background_id: "b3".into(),
                distance: f64::MIN_POSITIVE,
                mu: 0.0,
                sigma: 0.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("matches.csv");
        write_matches(&rows, &path).unwrap();
        assert_eq!(read_matches(&path).unwrap(), rows);

        std::fs::write(&path, "object,background\n").unwrap();
        assert!(matches!(
            read_matches(&path),
            Err(Error::TableParse { line: 1, .. })
        ));
        std::fs::write(
            &path,
            format!("{MATCHES_HEADER}\no,b,0.5,not-a-number,0.1\n"),
        )
        .unwrap();
        assert!(matches!(
            read_matches(&path),
            Err(Error::TableParse { line: 2, .. })
        ));
    }

    #[test]
    fn match_all_reports_unmatchable_objects() {
        let mut objects = FeatureStore::default();
        objects.push("good", vector(&[1.0, 0.5])).unwrap();
        objects.push("dead", FeatureVector::zeros()).unwrap();
        let mut backgrounds = FeatureStore::default();
        backgrounds.push("b1", vector(&[0.5, 1.0])).unwrap();
        backgrounds.push("b2", vector(&[1.0, 0.0])).unwrap();

        let outcome = match_all(
            &objects,
            &backgrounds,
            None,
            true,
            SelectionCriterion::MuPlusSigma,
            ScoreKind::Distance,
            1,
        );
        assert_eq!(outcome.rows.len(), 1);
        assert_eq!(outcome.rows[0].object_id, "good");
        assert_eq!(outcome.failures.len(), 1);
        assert_eq!(outcome.failures[0].0, "dead");
    }

    proptest! {
        /// Rescaling every stored vector by one positive factor leaves the
        /// mu + sigma selection unchanged.
        #[test]
        fn selection_is_scale_invariant(
            rows in proptest::collection::vec(
                proptest::collection::vec(0.0f64..10.0, 4),
                2..6,
            ),
            object in proptest::collection::vec(0.1f64..10.0, 4),
            factor in 0.01f64..100.0,
        ) {
            let build = |scale: f64| {
                let mut store = FeatureStore::default();
                for (i, row) in rows.iter().enumerate() {
                    let scaled: Vec<f64> = row.iter().map(|v| v * scale).collect();
                    if scaled.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    store.push(format!("bg{i}"), vector(&scaled)).unwrap();
                }
                store
            };
            let plain = build(1.0);
            let scaled = build(factor);
            prop_assume!(!plain.is_empty());
            let object = vector(&object);
            let a = rank_backgrounds("obj", &object, &plain, None, false)
                .and_then(|l| select_background(&l, SelectionCriterion::MuPlusSigma, ScoreKind::Distance));
            let b = rank_backgrounds("obj", &object, &scaled, None, false)
                .and_then(|l| select_background(&l, SelectionCriterion::MuPlusSigma, ScoreKind::Distance));
            prop_assert_eq!(a.unwrap().background_id, b.unwrap().background_id);
        }

        /// Patches always sit inside the background and jointly cover it.
        #[test]
        fn patch_grids_cover_without_overflow(
            bg_w in 1u32..60,
            bg_h in 1u32..60,
            frac_w in 1u32..=100,
            frac_h in 1u32..=100,
        ) {
            let patch_w = (bg_w * frac_w / 100).clamp(1, bg_w);
            let patch_h = (bg_h * frac_h / 100).clamp(1, bg_h);
            let grid = slice_patches(bg_w, bg_h, patch_w, patch_h).unwrap();
            let mut covered = vec![false; (bg_w * bg_h) as usize];
            for &(x, y) in &grid.anchors {
                prop_assert!(x + patch_w <= bg_w && y + patch_h <= bg_h);
                for dy in 0..patch_h {
                    for dx in 0..patch_w {
                        covered[((y + dy) * bg_w + (x + dx)) as usize] = true;
                    }
                }
            }
            prop_assert!(covered.iter().all(|&c| c));
        }
    }
}
