//! Diagnostics: property suites, mode coverage, two-sample tests and the
//! swap and α experiments.

mod alpha_sweep;
mod modes;
pub mod suites;
mod swap;
mod two_sample;

use std::fmt::Write as _;
use std::path::Path;

pub use alpha_sweep::{alpha_sweep, spread_csv, train_alpha, AlphaResult, SweepBudget, SPREAD_CSV_HEADER};
pub use modes::{coverage_threshold, mode_coverage, ModeReport};
pub use swap::{
    fraction_assigned, nearest_mean_labels, swap_experiment, DiagGaussian, SwapOutput, VARIANCE_FLOOR,
};
pub use two_sample::{
    permutation_test, two_sample_study, StudyConfig, StudyOutcome, TestOutcome, MIN_PERMUTATIONS, TIE_TOLERANCE,
};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One row per sample, columns `x0..x{m-1}` plus `label` when given.
pub fn points_csv(points: &Tensor, labels: Option<&[usize]>) -> Result<String> {
    if points.rank() != 2 {
        return Err(Error::invalid("points must be a matrix"));
    }
    if labels.is_some_and(|l| l.len() != points.rows()) {
        return Err(Error::invalid("label count differs from point count"));
    }
    let m = points.cols();
    let mut out = (0..m).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in points.row_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.10}")).collect();
        out.push_str(&cells.join(","));
        if let Some(l) = labels {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub const SCATTER_SIZE: u32 = 512;

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

/// 512×512 scatter of the first two columns, axes fitted to the data, one
/// colour per label.
pub fn scatter_png(path: &Path, points: &Tensor, labels: Option<&[usize]>) -> Result<()> {
    if points.rank() != 2 || points.cols() < 2 || points.rows() == 0 {
        return Err(Error::invalid("scatter needs a non-empty matrix with at least 2 columns"));
    }
    let finite: Vec<&[f64]> = points.row_iter().filter(|r| r[0].is_finite() && r[1].is_finite()).collect();
    let lo = |j: usize| finite.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
    let hi = |j: usize| finite.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1, y0, y1) = (lo(0), hi(0), lo(1), hi(1));
    let pad = 0.05 * (x1 - x0).max(y1 - y0).max(1e-9);
    let size = SCATTER_SIZE as f64;
    let mut img = image::RgbImage::from_pixel(SCATTER_SIZE, SCATTER_SIZE, image::Rgb([255, 255, 255]));
    for (i, row) in points.row_iter().enumerate() {
        if !(row[0].is_finite() && row[1].is_finite()) {
            continue;
        }
        let px = ((row[0] - x0 + pad) / (x1 - x0 + 2.0 * pad) * (size - 1.0)).round() as i64;
        let py = ((y1 + pad - row[1]) / (y1 - y0 + 2.0 * pad) * (size - 1.0)).round() as i64;
        let colour = PALETTE[labels.map_or(0, |l| l[i]) % PALETTE.len()];
        for dx in -1..=1 {
            for dy in -1..=1 {
                let (x, y) = (px + dx, py + dy);
                if (0..SCATTER_SIZE as i64).contains(&x) && (0..SCATTER_SIZE as i64).contains(&y) {
                    img.put_pixel(x as u32, y as u32, image::Rgb(colour));
                }
            }
        }
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}
