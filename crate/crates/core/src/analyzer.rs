//! Dataset distribution statistics: where object centers sit in the frame,
//! how large objects are relative to their images, and a coarse density
//! grid of the centers. Only masks are read.

use std::path::Path;

use rayon::prelude::*;

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::parallel::with_jobs;
use crate::raster::{compute_bounding_box, SalienceMask};

pub const SIZE_BINS: usize = 10;
pub const DEFAULT_GRID: u32 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionReport {
    /// Normalized box centers in manifest order, both coordinates in [0,1].
    pub centers: Vec<(f64, f64)>,
    /// Counts of box-area/image-area fractions over ten equal bins of [0,1].
    pub size_histogram: [u64; SIZE_BINS],
    /// Row-major G x G counts of centers.
    pub density_grid: Vec<u64>,
    pub grid_size: u32,
    /// Samples without any salient pixel, skipped from all statistics.
    pub skipped: usize,
}

/// Center of a span normalized by dimension - 1, so boxes hugging a corner
/// map exactly to 0 or 1. Single-pixel dimensions sit at the middle.
fn normalized_center(min: u32, max: u32, size: u32) -> f64 {
    if size <= 1 {
        0.5
    } else {
        (min + max) as f64 / (2.0 * (size - 1) as f64)
    }
}

fn unit_bin(value: f64, bins: usize) -> usize {
    ((value * bins as f64) as usize).min(bins - 1)
}

/// Computes center, size fraction, and density statistics over the
/// manifest's masks.
pub fn analyze(manifest: &DatasetManifest, grid_size: u32, jobs: usize) -> Result<DistributionReport> {
    if grid_size == 0 {
        return Err(Error::GridSizeZero);
    }
    let observations: Vec<Result<Option<((f64, f64), f64)>>> = with_jobs(jobs, || {
        manifest
            .records()
            .par_iter()
            .map(|record| {
                let mask_path = manifest.resolve(&record.mask_path);
                let mask: SalienceMask = crate::dataset::load_mask_binary(&mask_path)?;
                match compute_bounding_box(&mask) {
                    Ok(bbox) => {
                        let cx = normalized_center(bbox.x_min, bbox.x_max, mask.width());
                        let cy = normalized_center(bbox.y_min, bbox.y_max, mask.height());
                        let fraction = bbox.area() as f64
                            / (mask.width() as f64 * mask.height() as f64);
                        Ok(Some(((cx, cy), fraction)))
                    }
                    Err(Error::NonSalientMask) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    });

    let mut report = DistributionReport {
        centers: Vec::new(),
        size_histogram: [0; SIZE_BINS],
        density_grid: vec![0; (grid_size * grid_size) as usize],
        grid_size,
        skipped: 0,
    };
    for observation in observations {
        match observation? {
            Some(((cx, cy), fraction)) => {
                report.centers.push((cx, cy));
                report.size_histogram[unit_bin(fraction, SIZE_BINS)] += 1;
                let gx = unit_bin(cx, grid_size as usize);
                let gy = unit_bin(cy, grid_size as usize);
                report.density_grid[gy * grid_size as usize + gx] += 1;
            }
            None => report.skipped += 1,
        }
    }
    if report.skipped > 0 {
        log::info!(
            "stage=stats event=skipped-non-salient count={}",
            report.skipped
        );
    }
    Ok(report)
}

/// Writes `centers.csv`, `sizes.csv`, `density.csv`, and a self-contained
/// `report.svg` under `dir`.
pub fn emit_report(report: &DistributionReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut centers = String::from("cx,cy\n");
    for &(cx, cy) in &report.centers {
        centers.push_str(&format!("{cx:.16e},{cy:.16e}\n"));
    }
    let centers_path = dir.join("centers.csv");
    std::fs::write(&centers_path, centers).map_err(|e| Error::io(&centers_path, e))?;

    let mut sizes = String::from("bin_lo,bin_hi,count\n");
    for (i, count) in report.size_histogram.iter().enumerate() {
        sizes.push_str(&format!(
            "{:.1},{:.1},{count}\n",
            i as f64 / 10.0,
            (i + 1) as f64 / 10.0
        ));
    }
    let sizes_path = dir.join("sizes.csv");
    std::fs::write(&sizes_path, sizes).map_err(|e| Error::io(&sizes_path, e))?;

    let mut density = String::from("gy,gx,count\n");
    for gy in 0..report.grid_size {
        for gx in 0..report.grid_size {
            let count = report.density_grid[(gy * report.grid_size + gx) as usize];
            density.push_str(&format!("{gy},{gx},{count}\n"));
        }
    }
    let density_path = dir.join("density.csv");
    std::fs::write(&density_path, density).map_err(|e| Error::io(&density_path, e))?;

    let svg_path = dir.join("report.svg");
    std::fs::write(&svg_path, render_svg(report)).map_err(|e| Error::io(&svg_path, e))
}

/// A two-panel figure: center scatter on the left, size histogram on the
/// right. Plain SVG with no external resources.
fn render_svg(report: &DistributionReport) -> String {
    const PANEL: f64 = 320.0;
    const MARGIN: f64 = 40.0;
    let width = MARGIN * 3.0 + PANEL * 2.0;
    let height = MARGIN * 2.0 + PANEL + 20.0;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );

    // Scatter panel.
    let (sx, sy) = (MARGIN, MARGIN + 20.0);
    svg.push_str(&format!(
        "<rect x=\"{sx}\" y=\"{sy}\" width=\"{PANEL}\" height=\"{PANEL}\" \
         fill=\"none\" stroke=\"#444\"/>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">object centers</text>\n",
        sx + PANEL / 2.0,
        sy - 8.0
    ));
    for &(cx, cy) in &report.centers {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#3571a8\" fill-opacity=\"0.45\"/>\n",
            sx + cx * PANEL,
            sy + cy * PANEL
        ));
    }

    // Histogram panel.
    let (hx, hy) = (MARGIN * 2.0 + PANEL, MARGIN + 20.0);
    let peak = report.size_histogram.iter().copied().max().unwrap_or(0);
    svg.push_str(&format!(
        "<rect x=\"{hx}\" y=\"{hy}\" width=\"{PANEL}\" height=\"{PANEL}\" \
         fill=\"none\" stroke=\"#444\"/>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">box area / image area</text>\n",
        hx + PANEL / 2.0,
        hy - 8.0
    ));
    let bar_w = PANEL / SIZE_BINS as f64;
    for (i, &count) in report.size_histogram.iter().enumerate() {
        if peak == 0 {
            break;
        }
        let bar_h = PANEL * count as f64 / peak as f64;
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"#c46a36\" stroke=\"white\"/>\n",
            hx + i as f64 * bar_w,
            hy + PANEL - bar_h,
            bar_w,
            bar_h
        ));
    }
    for (i, label) in [(0usize, "0.0"), (SIZE_BINS, "1.0")] {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{label}</text>\n",
            hx + i as f64 * bar_w,
            hy + PANEL + 14.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
