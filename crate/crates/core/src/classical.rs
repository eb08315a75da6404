//! Grid-search localizers: every microphone pair contributes a map over the
//! room footprint, the maps are summed and the extremal cell is the
//! estimate.

use serde::{Deserialize, Serialize};

use crate::acoustics::SPEED_OF_SOUND;
use crate::error::{Error, Result};
use crate::features::{
    lag_spans, mean_mic_height, slf_project_with_tdoa, slf_voxels, tdoa_voxel_gaps,
    theoretical_tdoa_grid, ChannelSpectra, CorrelationVector, GccConfig, Grid, Heatmap,
    LagInterpolation, LagSpans, MultichannelFrame, VoxelLattice,
};
use crate::scene::{distance, MetadataVector, Point2, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakMode {
    Min,
    Max,
}

/// How a cell's theoretical TDOA is compared with the measured one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdoaDistance {
    #[default]
    Squared,
    Absolute,
}

/// Where candidate source positions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSpace {
    /// Voxels over the full room height, each scored over its TDOA range;
    /// a cell takes the best voxel in its column.
    #[default]
    Volume,
    /// Cell centers on the plane at the mean microphone height, each scored
    /// at its single TDOA.
    Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    pub gcc: GccConfig,
    pub search: SearchSpace,
    /// Voxels per cell side in [`SearchSpace::Volume`].
    pub subdivisions: usize,
    /// Lag interpolation in [`SearchSpace::Plane`].
    pub interpolation: LagInterpolation,
    pub tdoa_distance: TdoaDistance,
    pub speed_of_sound: f64,
    /// Keep every pair's map in the result.
    pub keep_pair_maps: bool,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            gcc: GccConfig::default(),
            search: SearchSpace::Volume,
            subdivisions: 3,
            interpolation: LagInterpolation::Linear,
            tdoa_distance: TdoaDistance::Squared,
            speed_of_sound: SPEED_OF_SOUND,
            keep_pair_maps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub estimate: Point2,
    pub heatmap: Heatmap,
    pub per_pair_maps: Option<Vec<Heatmap>>,
}

/// All pairs `i < j` in lexicographic order.
pub fn enumerate_pairs(m: usize) -> Result<Vec<(usize, usize)>> {
    if m < 2 {
        return Err(Error::TooFewMics(m));
    }
    Ok((0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect())
}

/// Flat index of the extremal cell; ties go to the lowest index.
pub fn peak_index(heatmap: &Heatmap, mode: PeakMode) -> Result<usize> {
    if let Some(i) = heatmap.values.iter().position(|v| v.is_nan()) {
        return Err(Error::NanInMap(i));
    }
    if heatmap.values.is_empty() {
        return Err(Error::DimensionMismatch { expected: heatmap.n * heatmap.n, got: 0 });
    }
    let mut best = 0;
    for (i, &v) in heatmap.values.iter().enumerate() {
        let better = match mode {
            PeakMode::Max => v > heatmap.values[best],
            PeakMode::Min => v < heatmap.values[best],
        };
        if better {
            best = i;
        }
    }
    Ok(best)
}

/// Center of the extremal cell; ties go to the lowest flat index.
pub fn pick_peak(heatmap: &Heatmap, mode: PeakMode, grid: &Grid) -> Result<Point2> {
    if heatmap.n != grid.n || heatmap.values.len() != grid.num_cells() {
        return Err(Error::DimensionMismatch { expected: grid.num_cells(), got: heatmap.values.len() });
    }
    Ok(grid.center_of(peak_index(heatmap, mode)?))
}

/// Largest lag, in samples, that two microphones `p_i`, `p_j` can
/// physically produce.
pub fn max_physical_lag(p_i: &Point3, p_j: &Point3, fs: f64, c: f64) -> usize {
    (fs * distance(p_i, p_j) / c).ceil() as usize
}

/// Measured TDOA in seconds: the correlation peak, searched only over lags
/// the pair's geometry allows.
pub fn measured_tdoa(corr: &CorrelationVector, p_i: &Point3, p_j: &Point3, c: f64) -> f64 {
    let max_lag = max_physical_lag(p_i, p_j, corr.fs, c).min(corr.zero_index() - 1);
    corr.peak_lag(max_lag) as f64 / corr.fs
}

/// Everything the per-pair maps of one frame share.
struct PairScan<'a> {
    mics: &'a [Point3],
    grid: &'a Grid,
    config: &'a ClassicalConfig,
    spectra: ChannelSpectra,
    pairs: Vec<(usize, usize)>,
    space: Space,
}

enum Space {
    Plane { z: f64 },
    Volume { lattice: VoxelLattice, distances: Vec<Vec<f64>> },
}

impl<'a> PairScan<'a> {
    fn new(
        frame: &MultichannelFrame,
        meta: &'a MetadataVector,
        grid: &'a Grid,
        config: &'a ClassicalConfig,
    ) -> Result<Self> {
        let mics = meta.mics.as_slice();
        if mics.len() < 2 {
            return Err(Error::TooFewMics(mics.len()));
        }
        if frame.num_channels() != mics.len() {
            return Err(Error::DimensionMismatch { expected: mics.len(), got: frame.num_channels() });
        }
        let spectra = ChannelSpectra::from_frame(frame, &config.gcc)?;
        let space = match config.search {
            SearchSpace::Plane => Space::Plane { z: mean_mic_height(mics) },
            SearchSpace::Volume => {
                let lattice = VoxelLattice::new(grid, meta.room[2], config.subdivisions)?;
                let distances = mics.iter().map(|p| lattice.corner_distances(p)).collect();
                Space::Volume { lattice, distances }
            }
        };
        Ok(Self { mics, grid, config, spectra, pairs: enumerate_pairs(mics.len())?, space })
    }

    fn c(&self) -> f64 {
        self.config.speed_of_sound
    }

    fn tdoa_plane(&self, i: usize, j: usize, z: f64) -> Heatmap {
        theoretical_tdoa_grid(&self.mics[i], &self.mics[j], self.grid, z, self.c())
    }

    fn spans(&self, lattice: &VoxelLattice, distances: &[Vec<f64>], i: usize, j: usize) -> LagSpans {
        lag_spans(lattice, &distances[i], &distances[j], self.spectra.fs(), self.c())
    }
}

/// Sums pair scores. On a plane the scores are per cell; in a volume they
/// are per voxel and the sum is projected with `project`.
fn accumulate(
    scan: &PairScan,
    keep: bool,
    plane_score: impl Fn((usize, usize), &CorrelationVector, Heatmap) -> Heatmap,
    voxel_score: impl Fn((usize, usize), &CorrelationVector, &LagSpans) -> Vec<f64>,
    project: impl Fn(&VoxelLattice, &[f64]) -> Heatmap,
) -> (Heatmap, Option<Vec<Heatmap>>) {
    let mut kept = keep.then(Vec::new);
    let total = match &scan.space {
        Space::Plane { z } => {
            let mut total = Heatmap::zeros(scan.grid.n);
            for &(i, j) in &scan.pairs {
                let map = plane_score((i, j), &scan.spectra.gcc(i, j), scan.tdoa_plane(i, j, *z));
                total.add_assign(&map);
                if let Some(k) = kept.as_mut() {
                    k.push(map);
                }
            }
            total
        }
        Space::Volume { lattice, distances } => {
            let mut total = vec![0.0; lattice.num_voxels()];
            for &(i, j) in &scan.pairs {
                let spans = scan.spans(lattice, distances, i, j);
                let voxels = voxel_score((i, j), &scan.spectra.gcc(i, j), &spans);
                for (t, v) in total.iter_mut().zip(&voxels) {
                    *t += v;
                }
                if let Some(k) = kept.as_mut() {
                    k.push(project(lattice, &voxels));
                }
            }
            project(lattice, &total)
        }
    };
    (total, kept)
}

/// Least-squares localizer: each candidate accumulates the distance between
/// its theoretical TDOA and each pair's measured TDOA; the minimum wins.
pub fn tdoa_localize(
    frame: &MultichannelFrame,
    meta: &MetadataVector,
    grid: &Grid,
    config: &ClassicalConfig,
) -> Result<LocalizationResult> {
    let scan = PairScan::new(frame, meta, grid, config)?;
    let c = config.speed_of_sound;
    let penalty = |d: f64| match config.tdoa_distance {
        TdoaDistance::Squared => d * d,
        TdoaDistance::Absolute => d.abs(),
    };
    let measured = |(i, j): (usize, usize), corr: &CorrelationVector| {
        measured_tdoa(corr, &scan.mics[i], &scan.mics[j], c)
    };
    let (heatmap, per_pair_maps) = accumulate(
        &scan,
        config.keep_pair_maps,
        |pair, corr, mut tdoa| {
            let m = measured(pair, corr);
            for v in &mut tdoa.values {
                *v = penalty(*v - m);
            }
            tdoa
        },
        |pair, corr, spans| {
            let m = measured(pair, corr);
            tdoa_voxel_gaps(spans, m, corr.fs).into_iter().map(penalty).collect()
        },
        VoxelLattice::project_min,
    );
    let estimate = pick_peak(&heatmap, PeakMode::Min, grid)?;
    Ok(LocalizationResult { estimate, heatmap, per_pair_maps })
}

/// Spatial-likelihood localizer: each candidate accumulates every pair's
/// correlation at its TDOA; the maximum wins.
pub fn slf_localize(
    frame: &MultichannelFrame,
    meta: &MetadataVector,
    grid: &Grid,
    config: &ClassicalConfig,
) -> Result<LocalizationResult> {
    let scan = PairScan::new(frame, meta, grid, config)?;
    let (heatmap, per_pair_maps) = accumulate(
        &scan,
        config.keep_pair_maps,
        |_, corr, tdoa| slf_project_with_tdoa(corr, &tdoa, config.interpolation),
        |_, corr, spans| slf_voxels(corr, spans),
        VoxelLattice::project_max,
    );
    let estimate = pick_peak(&heatmap, PeakMode::Max, grid)?;
    Ok(LocalizationResult { estimate, heatmap, per_pair_maps })
}

/// Each pair's own SLF map, in [`enumerate_pairs`] order.
pub fn slf_pair_maps(
    frame: &MultichannelFrame,
    meta: &MetadataVector,
    grid: &Grid,
    config: &ClassicalConfig,
) -> Result<Vec<Heatmap>> {
    let config = ClassicalConfig { keep_pair_maps: true, ..config.clone() };
    Ok(slf_localize(frame, meta, grid, &config)?.per_pair_maps.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(5, 5.0, 5.0).unwrap()
    }

    #[test]
    fn pairs() {
        assert_eq!(enumerate_pairs(2).unwrap(), vec![(0, 1)]);
        assert_eq!(enumerate_pairs(3).unwrap(), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(enumerate_pairs(4).unwrap().len(), 6);
        assert_eq!(enumerate_pairs(7).unwrap().len(), 21);
        assert!(matches!(enumerate_pairs(1), Err(Error::TooFewMics(1))));
    }

    #[test]
    fn one_hot_and_uniform_peaks() {
        let g = grid();
        let mut h = Heatmap::zeros(5);
        h.values[g.index(3, 1)] = 2.0;
        assert_eq!(pick_peak(&h, PeakMode::Max, &g).unwrap(), g.cell_center(3, 1));
        let flat = Heatmap::from_values(5, vec![0.3; 25]).unwrap();
        assert_eq!(pick_peak(&flat, PeakMode::Max, &g).unwrap(), g.cell_center(0, 0));
        assert_eq!(pick_peak(&flat, PeakMode::Min, &g).unwrap(), g.cell_center(0, 0));
    }

    #[test]
    fn min_of_negation_is_max() {
        let g = grid();
        let values: Vec<f64> = (0..25).map(|k| ((k * 7) % 11) as f64).collect();
        let h = Heatmap::from_values(5, values.clone()).unwrap();
        let neg = Heatmap::from_values(5, values.iter().map(|v| -v).collect()).unwrap();
        assert_eq!(
            pick_peak(&h, PeakMode::Max, &g).unwrap(),
            pick_peak(&neg, PeakMode::Min, &g).unwrap()
        );
    }

    #[test]
    fn nan_is_rejected() {
        let mut h = Heatmap::zeros(5);
        h.values[7] = f64::NAN;
        assert!(matches!(pick_peak(&h, PeakMode::Max, &grid()), Err(Error::NanInMap(7))));
        assert!(pick_peak(&Heatmap::zeros(4), PeakMode::Max, &grid()).is_err());
    }
}
