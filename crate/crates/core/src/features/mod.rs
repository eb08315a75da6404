//! Feature extractors: frame selection, GCC-PHAT, theoretical TDOA grids
//! and spatial likelihood projection.
//!
//! Heatmaps are flattened `n x n` grids over the room footprint. Cell
//! `(u, v)` covers the `u`-th slice along the width (x) and the `v`-th
//! slice along the length (y); its flat index is `u * n + v`.

mod frame;
mod gcc;
mod heatmap;
mod slf;
mod volume;

pub use frame::{extract_frame, MultichannelFrame};
pub use gcc::{gcc_phat, phat_normalize, ChannelSpectra, CorrelationVector, GccConfig, PHAT_FLOOR};
pub use heatmap::{Grid, Heatmap};
pub use slf::{mean_mic_height, slf_project, slf_project_with_tdoa, theoretical_tdoa_grid, LagInterpolation};
pub use volume::{lag_spans, slf_voxels, tdoa_voxel_gaps, LagSpans, VoxelLattice};
