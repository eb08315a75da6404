use serde::{Deserialize, Serialize};

use super::{CorrelationVector, Grid, Heatmap};
use crate::scene::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagInterpolation {
    #[default]
    Linear,
    Nearest,
}

pub fn mean_mic_height(mics: &[Point3]) -> f64 {
    mics.iter().map(|p| p[2]).sum::<f64>() / mics.len().max(1) as f64
}

/// Per-cell theoretical TDOA in seconds,
/// `(|q - p_i| - |q - p_j|) / c` with `q` the cell center lifted to
/// height `z_plane`.
pub fn theoretical_tdoa_grid(p_i: &Point3, p_j: &Point3, grid: &Grid, z_plane: f64, c: f64) -> Heatmap {
    let values = grid
        .centers()
        .map(|[x, y]| {
            let q = [x, y, z_plane];
            (crate::scene::distance(&q, p_i) - crate::scene::distance(&q, p_j)) / c
        })
        .collect();
    Heatmap { n: grid.n, values }
}

/// Spatial likelihood map: each cell takes the correlation at the lag of
/// its theoretical TDOA. Fractional lags are interpolated; lags beyond the
/// correlation's range clamp to its end values.
pub fn slf_project(
    corr: &CorrelationVector,
    p_i: &Point3,
    p_j: &Point3,
    grid: &Grid,
    z_plane: f64,
    c: f64,
    interpolation: LagInterpolation,
) -> Heatmap {
    let tdoa = theoretical_tdoa_grid(p_i, p_j, grid, z_plane, c);
    slf_project_with_tdoa(corr, &tdoa, interpolation)
}

/// [`slf_project`] for a precomputed TDOA map.
pub fn slf_project_with_tdoa(
    corr: &CorrelationVector,
    tdoa: &Heatmap,
    interpolation: LagInterpolation,
) -> Heatmap {
    let last = corr.full.len() - 1;
    let zero = corr.zero_index() as f64;
    let values = tdoa
        .values
        .iter()
        .map(|&t| {
            let pos = (zero + corr.fs * t).clamp(0.0, last as f64);
            match interpolation {
                LagInterpolation::Nearest => corr.full[pos.round() as usize],
                LagInterpolation::Linear => {
                    let k = (pos.floor() as usize).min(last - 1);
                    let frac = pos - k as f64;
                    corr.full[k] * (1.0 - frac) + corr.full[k + 1] * frac
                }
            }
        })
        .collect();
    Heatmap { n: tdoa.n, values }
}
