//! Volumetric search: the room is split into voxels (each grid cell divided
//! `s x s` in plan and into layers of similar thickness over the full
//! height). A voxel does not have one TDOA but a range of them, bounded by
//! the values at its corners; scoring the range instead of a single lag
//! keeps sub-sample correlation peaks from falling between samples, and
//! searching all heights handles sources off the microphones' plane.

use super::{CorrelationVector, Grid, Heatmap};
use crate::error::{Error, Result};
use crate::scene::{distance, Point3};

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelLattice {
    pub grid: Grid,
    pub height: f64,
    pub subdivisions: usize,
    /// Voxels along x and y.
    pub nxy: usize,
    /// Voxel layers along z.
    pub nz: usize,
    pub step: [f64; 3],
}

impl VoxelLattice {
    pub fn new(grid: &Grid, height: f64, subdivisions: usize) -> Result<Self> {
        if subdivisions == 0 {
            return Err(Error::InvalidConfig("voxel subdivisions must be >= 1".into()));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidConfig(format!("room height must be positive, got {height}")));
        }
        let nxy = grid.n * subdivisions;
        let (sx, sy) = (grid.width / nxy as f64, grid.length / nxy as f64);
        let nz = ((height / sx.max(sy)).ceil() as usize).max(1);
        Ok(Self { grid: *grid, height, subdivisions, nxy, nz, step: [sx, sy, height / nz as f64] })
    }

    pub fn num_voxels(&self) -> usize {
        self.nxy * self.nxy * self.nz
    }

    fn num_corners(&self) -> usize {
        (self.nxy + 1) * (self.nxy + 1) * (self.nz + 1)
    }

    /// Distance from `p` to every voxel corner, `z` fastest.
    pub fn corner_distances(&self, p: &Point3) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_corners());
        for a in 0..=self.nxy {
            for b in 0..=self.nxy {
                for z in 0..=self.nz {
                    let q = [a as f64 * self.step[0], b as f64 * self.step[1], z as f64 * self.step[2]];
                    out.push(distance(&q, p));
                }
            }
        }
        out
    }

    /// Grid cell holding each voxel column, voxel order `z` fastest.
    fn cell_of_column(&self, column: usize) -> usize {
        let (a, b) = (column / self.nxy, column % self.nxy);
        self.grid.index(a / self.subdivisions, b / self.subdivisions)
    }

    /// Per-cell maximum over every voxel in the cell's column.
    pub fn project_max(&self, voxels: &[f64]) -> Heatmap {
        self.project(voxels, f64::NEG_INFINITY, f64::max)
    }

    /// Per-cell minimum over every voxel in the cell's column.
    pub fn project_min(&self, voxels: &[f64]) -> Heatmap {
        self.project(voxels, f64::INFINITY, f64::min)
    }

    fn project(&self, voxels: &[f64], init: f64, f: fn(f64, f64) -> f64) -> Heatmap {
        let mut out = Heatmap { n: self.grid.n, values: vec![init; self.grid.num_cells()] };
        for (column, layers) in voxels.chunks(self.nz).enumerate() {
            let cell = &mut out.values[self.cell_of_column(column)];
            *cell = layers.iter().fold(*cell, |acc, &v| f(acc, v));
        }
        out
    }
}

/// Lag range of every voxel for one microphone pair, in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSpans {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Voxel lag ranges for the pair whose corner distances are `d_i`, `d_j`.
pub fn lag_spans(lattice: &VoxelLattice, d_i: &[f64], d_j: &[f64], fs: f64, c: f64) -> LagSpans {
    let k = fs / c;
    let (n, nz) = (lattice.nxy, lattice.nz);
    // Reduce each voxel's eight corners one axis at a time, z first.
    let mut lo_z = Vec::with_capacity((n + 1) * (n + 1) * nz);
    let mut hi_z = Vec::with_capacity((n + 1) * (n + 1) * nz);
    for (li, lj) in d_i.chunks(nz + 1).zip(d_j.chunks(nz + 1)) {
        let mut prev = (li[0] - lj[0]) * k;
        for z in 1..=nz {
            let next = (li[z] - lj[z]) * k;
            lo_z.push(min(prev, next));
            hi_z.push(max(prev, next));
            prev = next;
        }
    }
    let pairwise = |src: &[f64], out: &mut Vec<f64>, rows: usize, stride: usize, f: fn(f64, f64) -> f64| {
        for block in src.chunks((rows + 1) * stride) {
            for r in 0..rows {
                let (a, b) = (&block[r * stride..(r + 1) * stride], &block[(r + 1) * stride..(r + 2) * stride]);
                out.extend(a.iter().zip(b).map(|(x, y)| f(*x, *y)));
            }
        }
    };
    let mut lo_y = Vec::with_capacity((n + 1) * n * nz);
    let mut hi_y = Vec::with_capacity((n + 1) * n * nz);
    pairwise(&lo_z, &mut lo_y, n, nz, min);
    pairwise(&hi_z, &mut hi_y, n, nz, max);
    let mut lo = Vec::with_capacity(n * n * nz);
    let mut hi = Vec::with_capacity(n * n * nz);
    pairwise(&lo_y, &mut lo, n, n * nz, min);
    pairwise(&hi_y, &mut hi, n, n * nz, max);
    LagSpans { lo, hi }
}

// Plain comparisons; the inputs are never NaN.
fn min(a: f64, b: f64) -> f64 {
    if a < b { a } else { b }
}

fn max(a: f64, b: f64) -> f64 {
    if a > b { a } else { b }
}

/// Sparse table answering range-maximum queries in constant time.
struct RangeMax {
    levels: Vec<Vec<f64>>,
}

impl RangeMax {
    fn new(values: &[f64]) -> Self {
        let mut levels = vec![values.to_vec()];
        let mut width = 1;
        while 2 * width <= values.len() {
            let prev = levels.last().unwrap();
            let next = (0..=values.len() - 2 * width).map(|i| prev[i].max(prev[i + width])).collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Maximum over the inclusive range `lo..=hi`.
    fn query(&self, lo: usize, hi: usize) -> f64 {
        let level = (usize::BITS - 1 - (hi - lo + 1).leading_zeros()) as usize;
        let t = &self.levels[level];
        max(t[lo], t[hi + 1 - (1 << level)])
    }
}

/// Largest value of the linearly interpolated correlation over each voxel's
/// lag range. Lags beyond the correlation clamp to its ends.
pub fn slf_voxels(corr: &CorrelationVector, spans: &LagSpans) -> Vec<f64> {
    let full = &corr.full;
    let last = (full.len() - 1) as f64;
    let zero = corr.zero_index() as f64;
    let table = RangeMax::new(full);
    // Positions are clamped to be non-negative, so truncation is floor.
    let interp = |pos: f64| {
        let k = (pos as usize).min(full.len() - 2);
        let frac = pos - k as f64;
        full[k] + (full[k + 1] - full[k]) * frac
    };
    spans
        .lo
        .iter()
        .zip(&spans.hi)
        .map(|(&lo, &hi)| {
            let a = (zero + lo).clamp(0.0, last);
            let b = (zero + hi).clamp(0.0, last);
            let mut v = max(interp(a), interp(b));
            let kb = b as usize;
            let ka = a as usize;
            let ka = ka + usize::from(a > ka as f64);
            if ka <= kb {
                v = max(v, table.query(ka, kb));
            }
            v
        })
        .collect()
}

/// Distance, in seconds, from `measured` to each voxel's TDOA range (zero
/// inside it).
pub fn tdoa_voxel_gaps(spans: &LagSpans, measured: f64, fs: f64) -> Vec<f64> {
    let m = measured * fs;
    spans
        .lo
        .iter()
        .zip(&spans.hi)
        .map(|(&lo, &hi)| (lo - m).max(m - hi).max(0.0) / fs)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_shape() {
        let g = Grid::new(25, 5.0, 4.0).unwrap();
        let l = VoxelLattice::new(&g, 3.0, 2).unwrap();
        assert_eq!(l.nxy, 50);
        assert_eq!(l.nz, 30);
        assert!((l.step[2] - 0.1).abs() < 1e-12);
        assert_eq!(l.corner_distances(&[0.0; 3]).len(), 51 * 51 * 31);
        assert!(VoxelLattice::new(&g, 3.0, 0).is_err());
    }

    #[test]
    fn corner_reduction_matches_brute_force() {
        let g = Grid::new(3, 2.0, 3.0).unwrap();
        let l = VoxelLattice::new(&g, 1.5, 2).unwrap();
        let (pi, pj) = ([0.3, 2.2, 0.4], [1.7, 0.5, 1.1]);
        let (di, dj) = (l.corner_distances(&pi), l.corner_distances(&pj));
        let spans = lag_spans(&l, &di, &dj, 16000.0, 343.0);
        assert_eq!(spans.lo.len(), l.num_voxels());
        let lag = |a: usize, b: usize, z: usize| {
            let q = [a as f64 * l.step[0], b as f64 * l.step[1], z as f64 * l.step[2]];
            (distance(&q, &pi) - distance(&q, &pj)) * 16000.0 / 343.0
        };
        let mut idx = 0;
        for a in 0..l.nxy {
            for b in 0..l.nxy {
                for z in 0..l.nz {
                    let corners: Vec<f64> = (0..8)
                        .map(|k| lag(a + (k & 1), b + ((k >> 1) & 1), z + (k >> 2)))
                        .collect();
                    let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    assert!((spans.lo[idx] - lo).abs() < 1e-9 && (spans.hi[idx] - hi).abs() < 1e-9);
                    idx += 1;
                }
            }
        }
    }

    #[test]
    fn range_max_matches_scan() {
        let v: Vec<f64> = (0..37).map(|k| ((k * 17) % 23) as f64).collect();
        let t = RangeMax::new(&v);
        for lo in 0..v.len() {
            for hi in lo..v.len() {
                let expected = v[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(t.query(lo, hi), expected);
            }
        }
    }

    #[test]
    fn voxel_score_covers_interior_peak() {
        let mut full = vec![0.0; 16];
        full[9] = 1.0;
        let corr = CorrelationVector { full, n_central: 4, fs: 16000.0 };
        // Lag +1 sits at index 9.
        let spans = LagSpans { lo: vec![0.2, 1.5, -3.0, 0.5], hi: vec![1.8, 2.5, -1.0, 0.5] };
        assert_eq!(slf_voxels(&corr, &spans), vec![1.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn tdoa_gap_is_zero_inside_span() {
        let spans = LagSpans { lo: vec![-2.0, 1.0], hi: vec![2.0, 3.0] };
        let g = tdoa_voxel_gaps(&spans, 0.0, 16000.0);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1.0 / 16000.0).abs() < 1e-18);
    }

    #[test]
    fn projection_takes_column_extremes() {
        let g = Grid::new(2, 2.0, 2.0).unwrap();
        let l = VoxelLattice::new(&g, 1.0, 1).unwrap();
        assert_eq!(l.nz, 1);
        let vox = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(l.project_max(&vox).values, vec![1.0, 2.0, 3.0, 4.0]);
        let l = VoxelLattice::new(&g, 2.0, 1).unwrap();
        let vox: Vec<f64> = (0..8).map(f64::from).collect();
        assert_eq!(l.project_max(&vox).values, vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(l.project_min(&vox).values, vec![0.0, 2.0, 4.0, 6.0]);
    }
}
