//! ROI distribution over a set of annotated records: a coverage heatmap on
//! a `G × G` grid and box-area summary statistics.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::AnnotatedRecord;
use crate::roi::RoiBox;

pub const DEFAULT_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no records")]
    Empty,
    #[error("grid size must be >= 1")]
    Grid,
}

/// Coverage counts; row index is vertical, column index horizontal.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiHeatmap {
    pub grid: usize,
    pub counts: Vec<u64>,
}

fn cover(counts: &mut [u64], grid: usize, b: &RoiBox) {
    let centre = |i: usize| (i as f64 + 0.5) / grid as f64;
    for row in 0..grid {
        let y = centre(row);
        if y < b.h0() || y >= b.h1() {
            continue;
        }
        for col in 0..grid {
            let x = centre(col);
            if x >= b.w0() && x < b.w1() {
                counts[row * grid + col] += 1;
            }
        }
    }
}

/// Counts, per cell, the boxes that contain the cell's centre
/// (`[w0, w1) × [h0, h1)`).
pub fn aggregate_heatmap(rois: &[RoiBox], grid: usize) -> Result<RoiHeatmap, StatsError> {
    if grid == 0 {
        return Err(StatsError::Grid);
    }
    if rois.is_empty() {
        return Err(StatsError::Empty);
    }
    let counts = rois
        .par_iter()
        .fold(
            || vec![0u64; grid * grid],
            |mut acc, b| {
                cover(&mut acc, grid, b);
                acc
            },
        )
        .reduce(
            || vec![0u64; grid * grid],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(RoiHeatmap { grid, counts })
}

pub fn heatmap_from_records(
    records: &[AnnotatedRecord],
    grid: usize,
) -> Result<RoiHeatmap, StatsError> {
    let rois: Vec<RoiBox> = records.iter().map(|r| r.roi).collect();
    aggregate_heatmap(&rois, grid)
}

impl RoiHeatmap {
    /// Counts divided by the largest count.
    pub fn normalized(&self) -> Vec<f64> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / max as f64).collect()
    }

    /// 8-bit binary PGM, sample = round(255 × normalized).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.grid, self.grid).into_bytes();
        out.extend(
            self.normalized()
                .iter()
                .map(|v| (v * 255.0 + 0.5).floor() as u8),
        );
        out
    }

    /// Raw counts, one grid row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.counts.chunks(self.grid) {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

/// Summary of `(w1 - w0) * (h1 - h0)` over all boxes.
pub fn area_stats(rois: &[RoiBox]) -> Result<AreaStats, StatsError> {
    if rois.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut areas: Vec<f64> = rois.iter().map(RoiBox::area).collect();
    areas.sort_by(f64::total_cmp);
    let n = areas.len();
    let mean = areas.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        areas[n / 2]
    } else {
        (areas[n / 2 - 1] + areas[n / 2]) / 2.0
    };
    let var = areas.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    Ok(AreaStats {
        count: n,
        mean,
        median,
        stddev: var.sqrt(),
        min: areas[0],
        max: areas[n - 1],
    })
}

pub fn area_stats_from_records(records: &[AnnotatedRecord]) -> Result<AreaStats, StatsError> {
    let rois: Vec<RoiBox> = records.iter().map(|r| r.roi).collect();
    area_stats(&rois)
}
