//! Appearance descriptors. A sample is summarized by 256 non-negative
//! numbers: 64-bin histograms of hue, saturation, and value followed by a
//! 64-bin histogram of uniform local-binary-pattern codes, each block
//! normalized to unit sum. Vectors are compared by cosine similarity.

pub mod hsv;
pub mod lbp;
pub mod store;

use rayon::prelude::*;

use crate::dataset::{load_sample, DatasetManifest};
use crate::error::{Error, Result};
use crate::parallel::with_jobs;
use crate::raster::{ImageBuffer, SalienceMask};

pub use lbp::LbpParams;
pub use store::FeatureStore;

/// Bins per histogram block.
pub const BLOCK_BINS: usize = 64;
/// Blocks per feature vector: hue, saturation, value, texture.
pub const BLOCKS: usize = 4;
/// Total feature length.
pub const FEATURE_LEN: usize = BLOCK_BINS * BLOCKS;

/// One normalized 64-bin histogram. `empty` marks a block computed over zero
/// pixels, whose bins are all zero instead of summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBlock {
    pub bins: [f64; BLOCK_BINS],
    pub empty: bool,
}

impl HistogramBlock {
    pub(crate) fn from_counts(counts: [u64; BLOCK_BINS]) -> Self {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Self {
                bins: [0.0; BLOCK_BINS],
                empty: true,
            };
        }
        let mut bins = [0.0; BLOCK_BINS];
        for (bin, &count) in bins.iter_mut().zip(&counts) {
            *bin = count as f64 / total as f64;
        }
        Self { bins, empty: false }
    }
}

/// 256-entry appearance descriptor; see the module docs for the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn zeros() -> Self {
        Self([0.0; FEATURE_LEN])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Extracts the full descriptor. With a mask, color histograms run over the
/// nonzero-mask pixels and the texture histogram over the nonzero-mask
/// pixels that carry a valid code; the code map itself is always computed
/// from the whole image so masked pixels keep their real neighborhood.
/// Without a mask every pixel is used.
pub fn extract_features(image: &ImageBuffer, mask: Option<&SalienceMask>) -> Result<FeatureVector> {
    let color = hsv::hsv_histograms(image, mask)?;
    let params = LbpParams::default();
    let gray = lbp::luma(image)?;
    let map = lbp::lbp_code_map(&gray, &params)?;
    let texture = lbp::lbp_histogram(&map, mask, &params)?;

    let mut values = [0.0; FEATURE_LEN];
    for (block_idx, block) in color.iter().chain(std::iter::once(&texture)).enumerate() {
        values[block_idx * BLOCK_BINS..(block_idx + 1) * BLOCK_BINS].copy_from_slice(&block.bins);
    }
    Ok(FeatureVector(values))
}

/// Feature extraction over a whole dataset.
#[derive(Debug)]
pub struct ExtractOutcome {
    pub store: FeatureStore,
    /// Samples that could not be featured, with their reasons.
    pub failures: Vec<(String, Error)>,
}

/// Features every sample in manifest order, masked to the salient region
/// or over the full frame. Samples that fail to load or describe are
/// skipped and reported rather than aborting the run.
pub fn extract_all(
    manifest: &DatasetManifest,
    masked: bool,
    jobs: usize,
) -> Result<ExtractOutcome> {
    let results: Vec<(String, Result<FeatureVector>)> = with_jobs(jobs, || {
        manifest
            .records()
            .par_iter()
            .map(|record| {
                let vector = load_sample(manifest, record).and_then(|sample| {
                    extract_features(&sample.image, masked.then_some(&sample.mask))
                });
                (record.id.clone(), vector)
            })
            .collect()
    });

    let mut store = FeatureStore::new();
    let mut failures = Vec::new();
    for (id, result) in results {
        match result {
            Ok(vector) => store.push(id, vector)?,
            Err(err) => {
                log::warn!("skipping {id}: {err}");
                failures.push((id, err));
            }
        }
    }
    Ok(ExtractOutcome { store, failures })
}

/// Cosine similarity: the dot product over the product of Euclidean norms.
/// Both vectors must be nonzero.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (&x, &y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 {
        return Err(Error::ZeroVector { side: "left" });
    }
    if norm_b == 0.0 {
        return Err(Error::ZeroVector { side: "right" });
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// One minus the cosine similarity: 0 for parallel vectors, growing as the
/// appearance diverges.
pub fn cosine_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vector_from(head: &[f64]) -> FeatureVector {
        let mut v = FeatureVector::zeros();
        v.0[..head.len()].copy_from_slice(head);
        v
    }

    #[test]
    fn cosine_similarity_matches_hand_computation() {
        let a = vector_from(&[1.0, 2.0, 2.0]);
        let b = vector_from(&[2.0, 1.0, 2.0]);
        let sim = cosine_similarity(&a, &b).unwrap();
        assert!((sim - 8.0 / 9.0).abs() < 1e-15);
        assert!((cosine_distance(&a, &b).unwrap() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn zero_vectors_are_rejected() {
        let zero = FeatureVector::zeros();
        let one = vector_from(&[1.0]);
        assert!(matches!(
            cosine_similarity(&zero, &one),
            Err(Error::ZeroVector { side: "left" })
        ));
        assert!(matches!(
            cosine_similarity(&one, &zero),
            Err(Error::ZeroVector { side: "right" })
        ));
    }

    #[test]
    fn extracted_blocks_sum_to_one() {
        let mut img = ImageBuffer::new(16, 12, 3).unwrap();
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i * 13 % 256) as u8;
        }
        let features = extract_features(&img, None).unwrap();
        for block in 0..BLOCKS {
            let sum: f64 = features.0[block * BLOCK_BINS..(block + 1) * BLOCK_BINS]
                .iter()
                .sum();
            assert!(
                (sum - 1.0).abs() < 1e-9,
                "block {block} sums to {sum}"
            );
        }
        assert!(features.0.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn empty_mask_extracts_the_zero_vector() {
        let img = ImageBuffer::new(10, 10, 3).unwrap();
        let mask = SalienceMask::new(10, 10).unwrap();
        let features = extract_features(&img, Some(&mask)).unwrap();
        assert!(features.is_zero());
    }

    #[test]
    fn undersized_images_propagate_the_texture_error() {
        let img = ImageBuffer::new(6, 6, 3).unwrap();
        assert!(matches!(
            extract_features(&img, None),
            Err(Error::TooSmallForLbp { .. })
        ));
    }

    #[test]
    fn extract_all_features_good_samples_and_skips_bad_ones() {
        use crate::dataset::{save_sample, LabeledSample};

        let dir = tempfile::tempdir().unwrap();
        let mut image = ImageBuffer::new(16, 16, 3).unwrap();
        for (i, v) in image.data_mut().iter_mut().enumerate() {
            *v = (i * 7 % 256) as u8;
        }
        let mut mask = SalienceMask::new(16, 16).unwrap();
        for y in 4..10 {
            for x in 4..10 {
                mask.set(x, y, 255);
            }
        }
        let good = LabeledSample {
            id: "good".into(),
            image,
            mask,
            bbox: None,
        };
        // Too small for texture codes, so extraction must fail for it.
        let tiny = LabeledSample {
            id: "tiny".into(),
            image: ImageBuffer::new(5, 5, 3).unwrap(),
            mask: SalienceMask::new(5, 5).unwrap(),
            bbox: None,
        };
        let records = vec![
            save_sample(&good, dir.path()).unwrap(),
            save_sample(&tiny, dir.path()).unwrap(),
        ];
        let manifest = DatasetManifest::new(dir.path(), records).unwrap();

        let masked = extract_all(&manifest, true, 1).unwrap();
        assert_eq!(masked.store.len(), 1);
        assert_eq!(masked.failures.len(), 1);
        assert_eq!(masked.failures[0].0, "tiny");

        let full = extract_all(&manifest, false, 2).unwrap();
        assert_ne!(
            masked.store.get("good").unwrap().as_slice(),
            full.store.get("good").unwrap().as_slice(),
            "masking must change the descriptor"
        );
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_scale_invariant_and_bounded(
            a in proptest::collection::vec(0.0f64..1.0, 8),
            b in proptest::collection::vec(0.0f64..1.0, 8),
            scale in 0.25f64..16.0,
        ) {
            let mut va = vector_from(&a);
            let vb = vector_from(&b);
            va.0[0] += 0.5; // keep both nonzero
            let mut vb = vb;
            vb.0[1] += 0.5;

            let ab = cosine_similarity(&va, &vb).unwrap();
            let ba = cosine_similarity(&vb, &va).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ab));

            let scaled = FeatureVector(std::array::from_fn(|i| va.0[i] * scale));
            let with_scaled = cosine_similarity(&scaled, &vb).unwrap();
            prop_assert!((ab - with_scaled).abs() < 1e-12);
        }
    }
}
