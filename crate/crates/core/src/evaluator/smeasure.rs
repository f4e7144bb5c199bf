//! Structure measure for salience maps against binary ground truth: an
//! equal blend of object-aware and region-aware structural similarity,
//! translated from the reference definition. Degenerate ground truths
//! (all background or all foreground) score by the map's mean alone.

use crate::error::{Error, Result};
use crate::raster::SalienceMask;

const EPS: f64 = f64::EPSILON;

pub fn s_measure(pred: &SalienceMask, gt: &SalienceMask) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::MaskImageMismatch {
            image_w: pred.width(),
            image_h: pred.height(),
            mask_w: gt.width(),
            mask_h: gt.height(),
        });
    }
    let (w, h) = (pred.width() as usize, pred.height() as usize);
    let n = (w * h) as f64;
    let values: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| pred.get(x as u32, y as u32) as f64 / 255.0)
        .collect();
    let fg: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| gt.get(x as u32, y as u32) != 0)
        .collect();

    let y_mean = fg.iter().filter(|&&f| f).count() as f64 / n;
    let pred_mean = values.iter().sum::<f64>() / n;
    if y_mean == 0.0 {
        return Ok(1.0 - pred_mean);
    }
    if y_mean == 1.0 {
        return Ok(pred_mean);
    }
    let score = 0.5 * object_score(&values, &fg) + 0.5 * region_score(&values, &fg, w, h);
    Ok(score.max(0.0))
}

/// Mean and the N-1 sample standard deviation; a single value has no
/// spread.
fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, variance.sqrt())
}

fn part_score(values: &[f64]) -> f64 {
    let (mean, std) = mean_and_std(values);
    2.0 * mean / (mean * mean + 1.0 + std + EPS)
}

/// Foreground similarity on the map, background similarity on its
/// complement, mixed by the foreground share.
fn object_score(values: &[f64], fg: &[bool]) -> f64 {
    let fg_values: Vec<f64> = values
        .iter()
        .zip(fg)
        .filter(|&(_, &f)| f)
        .map(|(&v, _)| v)
        .collect();
    let bg_values: Vec<f64> = values
        .iter()
        .zip(fg)
        .filter(|&(_, &f)| !f)
        .map(|(&v, _)| 1.0 - v)
        .collect();
    let u = fg_values.len() as f64 / values.len() as f64;
    u * part_score(&fg_values) + (1.0 - u) * part_score(&bg_values)
}

/// Splits both maps into four blocks around the foreground centroid
/// (rounded, one-based) and averages per-block structural similarity
/// weighted by block area. Blocks with no pixels carry zero weight and
/// are skipped.
fn region_score(values: &[f64], fg: &[bool], w: usize, h: usize) -> f64 {
    let total: f64 = fg.iter().filter(|&&f| f).count() as f64;
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    for yy in 0..h {
        for xx in 0..w {
            if fg[yy * w + xx] {
                sum_x += (xx + 1) as f64;
                sum_y += (yy + 1) as f64;
            }
        }
    }
    let cx = (sum_x / total).round() as usize;
    let cy = (sum_y / total).round() as usize;

    let area = (w * h) as f64;
    let blocks = [
        (0, cx, 0, cy),
        (cx, w, 0, cy),
        (0, cx, cy, h),
        (cx, w, cy, h),
    ];
    let mut score = 0.0;
    for &(x0, x1, y0, y1) in &blocks {
        if x0 >= x1 || y0 >= y1 {
            continue;
        }
        let weight = ((x1 - x0) * (y1 - y0)) as f64 / area;
        let mut p = Vec::with_capacity((x1 - x0) * (y1 - y0));
        let mut g = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for yy in y0..y1 {
            for xx in x0..x1 {
                p.push(values[yy * w + xx]);
                g.push(if fg[yy * w + xx] { 1.0 } else { 0.0 });
            }
        }
        score += weight * block_similarity(&p, &g);
    }
    score
}

fn block_similarity(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let x = pred.iter().sum::<f64>() / n;
    let y = gt.iter().sum::<f64>() / n;
    let denom = n - 1.0 + EPS;
    let sigma_x = pred.iter().map(|v| (v - x).powi(2)).sum::<f64>() / denom;
    let sigma_y = gt.iter().map(|v| (v - y).powi(2)).sum::<f64>() / denom;
    let sigma_xy = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| (p - x) * (g - y))
        .sum::<f64>()
        / denom;

    let alpha = 4.0 * x * y * sigma_xy;
    let beta = (x * x + y * y) * (sigma_x + sigma_y);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}
