//! Gaussian kernel density estimates of per-strength error distributions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ErrorSurface;

/// `h = 3.5 σ n^{−1/3}` with `σ` the sample standard deviation.
pub fn scott_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    3.5 * var.sqrt() * n.powf(-1.0 / 3.0)
}

/// Density at each point of `grid`. A zero bandwidth puts unit mass in the
/// grid cell nearest to each sample (cell width taken from the grid spacing).
pub fn gaussian_kde(samples: &[f64], bandwidth: f64, grid: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    if bandwidth > 0.0 {
        let norm = 1.0 / (n * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        return grid
            .iter()
            .map(|&x| {
                samples
                    .iter()
                    .map(|s| (-0.5 * ((x - s) / bandwidth).powi(2)).exp())
                    .sum::<f64>()
                    * norm
            })
            .collect();
    }
    let mut out = vec![0.0; grid.len()];
    if grid.is_empty() {
        return out;
    }
    let width = if grid.len() > 1 { grid[1] - grid[0] } else { 1.0 };
    for s in samples {
        let i = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))
            .map(|(i, _)| i)
            .expect("grid is not empty");
        out[i] += 1.0 / (n * width);
    }
    out
}

/// Densities over an error axis for every strength column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    pub deltas: Vec<f64>,
    pub error_axis: Vec<f64>,
    pub bandwidths: Vec<f64>,
    /// Row per δ, column per error-axis point.
    pub density: Vec<Vec<f64>>,
}

/// Evaluates the per-column KDE on `bins` equally spaced error values that
/// span the surface (padded by three bandwidths).
pub fn density_map(surface: &ErrorSurface, bins: usize) -> DensityMap {
    let bins = bins.max(2);
    let columns: Vec<Vec<f64>> = (0..surface.deltas().len()).map(|j| surface.column(j)).collect();
    let bandwidths: Vec<f64> = columns.iter().map(|c| scott_bandwidth(c)).collect();
    let hmax = bandwidths.iter().cloned().fold(0.0, f64::max);
    let lo = surface.min() - 3.0 * hmax;
    let mut hi = surface.max() + 3.0 * hmax;
    if hi <= lo {
        hi = lo + 1e-12_f64.max(lo.abs() * 1e-9);
    }
    let error_axis: Vec<f64> = (0..bins).map(|i| lo + (hi - lo) * i as f64 / (bins - 1) as f64).collect();
    let density = columns
        .par_iter()
        .zip(&bandwidths)
        .map(|(c, &h)| gaussian_kde(c, h, &error_axis))
        .collect();
    DensityMap {
        deltas: surface.deltas().to_vec(),
        error_axis,
        bandwidths,
        density,
    }
}
