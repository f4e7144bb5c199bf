//! Metrics for scoring predicted salience maps against ground truth and
//! for ranking models across a shared benchmark.
//!
//! Threshold metrics binarize the prediction at every threshold from 1 to
//! 254 and average precision and recall over images before combining them,
//! so the reported F score is the score of the average curve rather than
//! the average of per-image scores. Images whose ground truth contains no
//! salient pixel are excluded from precision, recall, and F (their recall
//! is undefined) but still count toward error-style metrics.
//!
//! Zero-denominator conventions, applied per image: precision is 0 when
//! nothing is predicted positive, recall is 0 when the truth has no
//! positives, and specificity is 1 (hence a false-positive rate of 0)
//! when the truth has no negatives.

mod smeasure;

pub use smeasure::s_measure;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::SalienceMask;

/// Pixel counts from comparing one binarized prediction to ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinaryConfusion {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl BinaryConfusion {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn precision(&self) -> f64 {
        let denom = self.true_pos + self.false_pos;
        if denom == 0 {
            0.0
        } else {
            self.true_pos as f64 / denom as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let denom = self.true_pos + self.false_neg;
        if denom == 0 {
            0.0
        } else {
            self.true_pos as f64 / denom as f64
        }
    }

    pub fn specificity(&self) -> f64 {
        let denom = self.true_neg + self.false_pos;
        if denom == 0 {
            1.0
        } else {
            self.true_neg as f64 / denom as f64
        }
    }

    pub fn false_positive_rate(&self) -> f64 {
        1.0 - self.specificity()
    }

    pub fn false_negative_rate(&self) -> f64 {
        1.0 - self.recall()
    }

    /// Percentage of wrong classifications over all pixels.
    pub fn wrong_classification_pct(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            100.0 * (self.false_neg + self.false_pos) as f64 / total as f64
        }
    }
}

/// Marks every pixel strictly above `threshold` as salient.
pub fn binarize(map: &SalienceMask, threshold: u8) -> SalienceMask {
    let mut out = SalienceMask::new(map.width(), map.height()).expect("source mask has valid dims");
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.get(x, y) > threshold {
                out.set(x, y, 255);
            }
        }
    }
    out
}

/// Counts agreement between two binary masks; any nonzero pixel counts as
/// positive.
pub fn confusion(pred: &SalienceMask, gt: &SalienceMask) -> Result<BinaryConfusion> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::MaskImageMismatch {
            image_w: pred.width(),
            image_h: pred.height(),
            mask_w: gt.width(),
            mask_h: gt.height(),
        });
    }
    let mut counts = BinaryConfusion::default();
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            match (pred.get(x, y) != 0, gt.get(x, y) != 0) {
                (true, true) => counts.true_pos += 1,
                (true, false) => counts.false_pos += 1,
                (false, true) => counts.false_neg += 1,
                (false, false) => counts.true_neg += 1,
            }
        }
    }
    Ok(counts)
}

/// Mean absolute difference between two maps, scaled to [0, 1].
pub fn mae(pred: &SalienceMask, gt: &SalienceMask) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::MaskImageMismatch {
            image_w: pred.width(),
            image_h: pred.height(),
            mask_w: gt.width(),
            mask_h: gt.height(),
        });
    }
    let mut sum: u64 = 0;
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            sum += (pred.get(x, y) as i32 - gt.get(x, y) as i32).unsigned_abs() as u64;
        }
    }
    let n = gt.width() as u64 * gt.height() as u64;
    Ok(sum as f64 / (255.0 * n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: u8,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
}

/// Mean precision-recall curve over a set of images, one point per
/// binarization threshold from 1 through 254.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub beta: f64,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestFBeta {
    pub threshold: u8,
    pub f_beta: f64,
    pub precision: f64,
    pub recall: f64,
}

fn f_beta_from(beta: f64, precision: f64, recall: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidBeta { beta })
    }
}

/// Gray-level histograms of one prediction split by ground-truth class,
/// enough to derive the confusion counts at every threshold.
struct ClassHistograms {
    pos: [u64; 256],
    neg: [u64; 256],
}

fn class_histograms(pred: &SalienceMask, gt: &SalienceMask) -> Result<ClassHistograms> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::MaskImageMismatch {
            image_w: pred.width(),
            image_h: pred.height(),
            mask_w: gt.width(),
            mask_h: gt.height(),
        });
    }
    let mut hist = ClassHistograms {
        pos: [0; 256],
        neg: [0; 256],
    };
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let v = pred.get(x, y) as usize;
            if gt.get(x, y) != 0 {
                hist.pos[v] += 1;
            } else {
                hist.neg[v] += 1;
            }
        }
    }
    Ok(hist)
}

/// Sweeps thresholds 1..=254 over `(prediction, truth)` pairs, averaging
/// per-image precision and recall at each threshold and scoring F from the
/// averages.
pub fn mean_pr_curve(
    pairs: &[(&SalienceMask, &SalienceMask)],
    beta: f64,
) -> Result<ThresholdSweep> {
    check_beta(beta)?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let histograms: Vec<ClassHistograms> = pairs
        .iter()
        .map(|(pred, gt)| class_histograms(pred, gt))
        .collect::<Result<_>>()?;

    let mut precision_sum = [0.0f64; 254];
    let mut recall_sum = [0.0f64; 254];
    for hist in &histograms {
        // suffix[v] counts pixels with gray value >= v.
        let mut pos_suffix = [0u64; 257];
        let mut neg_suffix = [0u64; 257];
        for v in (0..256).rev() {
            pos_suffix[v] = pos_suffix[v + 1] + hist.pos[v];
            neg_suffix[v] = neg_suffix[v + 1] + hist.neg[v];
        }
        let pos_total = pos_suffix[0];
        for th in 1..=254usize {
            let tp = pos_suffix[th + 1];
            let fp = neg_suffix[th + 1];
            let predicted = tp + fp;
            if predicted > 0 {
                precision_sum[th - 1] += tp as f64 / predicted as f64;
            }
            if pos_total > 0 {
                recall_sum[th - 1] += tp as f64 / pos_total as f64;
            }
        }
    }

    let n = pairs.len() as f64;
    let points = (1..=254u8)
        .map(|th| {
            let precision = precision_sum[th as usize - 1] / n;
            let recall = recall_sum[th as usize - 1] / n;
            SweepPoint {
                threshold: th,
                precision,
                recall,
                f_beta: f_beta_from(beta, precision, recall),
            }
        })
        .collect();
    Ok(ThresholdSweep { beta, points })
}

/// Picks the sweep point with the highest F score; ties go to the
/// smallest threshold.
pub fn best_fbeta(sweep: &ThresholdSweep) -> Result<BestFBeta> {
    let mut best: Option<&SweepPoint> = None;
    for point in &sweep.points {
        match best {
            Some(current) if point.f_beta > current.f_beta => best = Some(point),
            None => best = Some(point),
            _ => {}
        }
    }
    let point = best.ok_or(Error::EmptyDataset)?;
    Ok(BestFBeta {
        threshold: point.threshold,
        f_beta: point.f_beta,
        precision: point.precision,
        recall: point.recall,
    })
}

/// One prediction with its ground truth.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub id: String,
    pub pred: SalienceMask,
    pub gt: SalienceMask,
}

impl EvalPair {
    /// True when the ground truth marks nothing salient; such pairs are
    /// excluded from precision-style metrics.
    pub fn is_non_salient(&self) -> bool {
        self.gt.is_all_zero()
    }
}

/// Summary scores for one model. Fields that need at least one salient
/// ground truth are absent when every image in the set is non-salient.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricVector {
    pub model_id: String,
    pub s_measure: f64,
    pub f_beta: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mae: f64,
    pub specificity: f64,
    pub fpr: f64,
    pub fnr: Option<f64>,
    pub pwc: f64,
}

#[derive(Debug, Clone)]
pub struct ModelEvaluation {
    pub metrics: MetricVector,
    pub sweep: Option<ThresholdSweep>,
    pub best: Option<BestFBeta>,
    pub excluded_non_salient: usize,
    pub sample_count: usize,
}

/// Scores one model over a benchmark.
///
/// F is the maximum of the mean precision-recall sweep; the remaining
/// binarization metrics are per-image values at `fixed_threshold`,
/// averaged over the images they are defined on. Structure measure and
/// mean absolute error always cover the full set.
pub fn evaluate_model(
    model_id: &str,
    pairs: &[EvalPair],
    beta: f64,
    fixed_threshold: u8,
) -> Result<ModelEvaluation> {
    check_beta(beta)?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut s_sum = 0.0;
    let mut mae_sum = 0.0;
    let mut specificity_sum = 0.0;
    let mut fpr_sum = 0.0;
    let mut pwc_sum = 0.0;
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut fnr_sum = 0.0;
    let mut salient: Vec<(&SalienceMask, &SalienceMask)> = Vec::new();

    for pair in pairs {
        s_sum += s_measure(&pair.pred, &pair.gt)?;
        mae_sum += mae(&pair.pred, &pair.gt)?;
        let counts = confusion(&binarize(&pair.pred, fixed_threshold), &pair.gt)?;
        specificity_sum += counts.specificity();
        fpr_sum += counts.false_positive_rate();
        pwc_sum += counts.wrong_classification_pct();
        if !pair.is_non_salient() {
            precision_sum += counts.precision();
            recall_sum += counts.recall();
            fnr_sum += counts.false_negative_rate();
            salient.push((&pair.pred, &pair.gt));
        }
    }

    let n = pairs.len() as f64;
    let n_salient = salient.len() as f64;
    let (sweep, best) = if salient.is_empty() {
        (None, None)
    } else {
        let sweep = mean_pr_curve(&salient, beta)?;
        let best = best_fbeta(&sweep)?;
        (Some(sweep), Some(best))
    };

    let metrics = MetricVector {
        model_id: model_id.to_string(),
        s_measure: s_sum / n,
        f_beta: best.map(|b| b.f_beta),
        precision: (!salient.is_empty()).then(|| precision_sum / n_salient),
        recall: (!salient.is_empty()).then(|| recall_sum / n_salient),
        mae: mae_sum / n,
        specificity: specificity_sum / n,
        fpr: fpr_sum / n,
        fnr: (!salient.is_empty()).then(|| fnr_sum / n_salient),
        pwc: pwc_sum / n,
    };
    Ok(ModelEvaluation {
        metrics,
        sweep,
        best,
        excluded_non_salient: pairs.len() - salient.len(),
        sample_count: pairs.len(),
    })
}

/// Metric columns in report order, flagged true when larger is better.
pub const METRIC_COLUMNS: [(&str, bool); 9] = [
    ("s_measure", true),
    ("f_beta", true),
    ("precision", true),
    ("recall", true),
    ("mae", false),
    ("specificity", true),
    ("fpr", false),
    ("fnr", false),
    ("pwc", false),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub model_id: String,
    /// Per-metric competition ranks in [`METRIC_COLUMNS`] order.
    pub ranks: [u32; 9],
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub rows: Vec<RankRow>,
}

fn metric_value(metrics: &MetricVector, column: usize) -> Result<f64> {
    let missing = |metric: &'static str| Error::MissingMetric {
        model_id: metrics.model_id.clone(),
        metric,
    };
    match column {
        0 => Ok(metrics.s_measure),
        1 => metrics.f_beta.ok_or_else(|| missing("f_beta")),
        2 => metrics.precision.ok_or_else(|| missing("precision")),
        3 => metrics.recall.ok_or_else(|| missing("recall")),
        4 => Ok(metrics.mae),
        5 => Ok(metrics.specificity),
        6 => Ok(metrics.fpr),
        7 => metrics.fnr.ok_or_else(|| missing("fnr")),
        8 => Ok(metrics.pwc),
        _ => unreachable!("metric column index out of range"),
    }
}

/// Ranks models per metric with competition ranking (rank = 1 + number of
/// strictly better models, so ties share the smaller rank) and orders the
/// table by the mean rank, breaking ties by model id.
pub fn average_ranking(models: &[MetricVector]) -> Result<RankTable> {
    if models.len() < 2 {
        return Err(Error::NotEnoughModels { got: models.len() });
    }
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(METRIC_COLUMNS.len());
    for c in 0..METRIC_COLUMNS.len() {
        columns.push(
            models
                .iter()
                .map(|m| metric_value(m, c))
                .collect::<Result<_>>()?,
        );
    }

    let mut rows: Vec<RankRow> = models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            let mut ranks = [0u32; 9];
            for (c, &(_, higher_better)) in METRIC_COLUMNS.iter().enumerate() {
                let mine = columns[c][i];
                let better = columns[c]
                    .iter()
                    .filter(|&&other| {
                        if higher_better {
                            other > mine
                        } else {
                            other < mine
                        }
                    })
                    .count();
                ranks[c] = 1 + better as u32;
            }
            let average = ranks.iter().sum::<u32>() as f64 / ranks.len() as f64;
            RankRow {
                model_id: model.model_id.clone(),
                ranks,
                average,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.average
            .total_cmp(&b.average)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    Ok(RankTable { rows })
}

pub const METRICS_HEADER: &str =
    "model_id,s_measure,f_beta,precision,recall,mae,specificity,fpr,fnr,pwc";

pub const RANKS_HEADER: &str = "model_id,rank_s_measure,rank_f_beta,rank_precision,rank_recall,\
rank_mae,rank_specificity,rank_fpr,rank_fnr,rank_pwc,average";

pub const SWEEP_HEADER: &str = "threshold,precision,recall,f_beta";

fn opt_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.16e}"),
        None => "-".to_string(),
    }
}

/// Writes one row per model; metrics that were undefined for a model are
/// written as `-`.
pub fn write_metrics(models: &[MetricVector], path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{METRICS_HEADER}").expect("string write");
    for m in models {
        writeln!(
            out,
            "{},{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            m.model_id,
            m.s_measure,
            opt_cell(m.f_beta),
            opt_cell(m.precision),
            opt_cell(m.recall),
            m.mae,
            m.specificity,
            m.fpr,
            opt_cell(m.fnr),
            m.pwc,
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricVector>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_error = |line: usize, message: String| Error::TableParse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        Some((_, header)) => {
            return Err(parse_error(1, format!("unexpected header {header:?}")));
        }
        None => return Err(parse_error(1, "file is empty".to_string())),
    }

    let mut models = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(parse_error(
                line_no,
                format!("expected 10 fields, got {}", fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(parse_error(line_no, "empty model id".to_string()));
        }
        let required = |field: &str, name: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|_| parse_error(line_no, format!("bad {name} value {field:?}")))
        };
        let optional = |field: &str, name: &str| -> Result<Option<f64>> {
            if field == "-" {
                Ok(None)
            } else {
                required(field, name).map(Some)
            }
        };
        models.push(MetricVector {
            model_id: fields[0].to_string(),
            s_measure: required(fields[1], "s_measure")?,
            f_beta: optional(fields[2], "f_beta")?,
            precision: optional(fields[3], "precision")?,
            recall: optional(fields[4], "recall")?,
            mae: required(fields[5], "mae")?,
            specificity: required(fields[6], "specificity")?,
            fpr: required(fields[7], "fpr")?,
            fnr: optional(fields[8], "fnr")?,
            pwc: required(fields[9], "pwc")?,
        });
    }
    Ok(models)
}

pub fn write_ranks(table: &RankTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{RANKS_HEADER}").expect("string write");
    for row in &table.rows {
        write!(out, "{}", row.model_id).expect("string write");
        for rank in row.ranks {
            write!(out, ",{rank}").expect("string write");
        }
        writeln!(out, ",{:.16e}", row.average).expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_sweep(sweep: &ThresholdSweep, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{SWEEP_HEADER}").expect("string write");
    for p in &sweep.points {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            p.threshold, p.precision, p.recall, p.f_beta
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
