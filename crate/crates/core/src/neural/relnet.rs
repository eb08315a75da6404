use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec};
use crate::classical::{enumerate_pairs, pick_peak, slf_pair_maps, ClassicalConfig, LocalizationResult, PeakMode};
use crate::error::{Error, Result};
use crate::features::{ChannelSpectra, Grid, Heatmap, MultichannelFrame};
use crate::scene::{MetadataVector, Point3};

/// Length of the normalized pair metadata appended to every pair feature.
pub const PAIR_METADATA_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Central lags of the pair's GCC-PHAT, scaled to unit peak magnitude.
    Gcc,
    /// The pair's spatial likelihood map, min-max scaled to `[0, 1]`.
    #[default]
    Slf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub grid_n: usize,
    /// Correlation and map settings shared with the classical localizers.
    pub classical: ClassicalConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { kind: FeatureKind::Slf, grid_n: 25, classical: ClassicalConfig::default() }
    }
}

impl FeatureConfig {
    pub fn feature_len(&self) -> usize {
        match self.kind {
            FeatureKind::Gcc => self.classical.gcc.n_central,
            FeatureKind::Slf => self.grid_n * self.grid_n,
        }
    }

    pub fn input_size(&self) -> usize {
        self.feature_len() + PAIR_METADATA_LEN
    }
}

/// Microphone order sorted by coordinates. Features are always built in
/// this order, so the network output does not depend on how the
/// microphones were listed.
pub fn canonical_order(mics: &[Point3]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mics.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&mics[a], &mics[b]);
        p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])).then(p[2].total_cmp(&q[2]))
    });
    order
}

fn scale_peak(values: &mut [f64]) {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
}

fn scale_min_max(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    values.iter_mut().for_each(|v| *v = if span > 0.0 { (*v - lo) / span } else { 0.0 });
}

/// One row per microphone pair: the pair's feature followed by its
/// normalized metadata. Pairs follow [`canonical_order`].
pub fn pair_features(
    frame: &MultichannelFrame,
    meta: &MetadataVector,
    config: &FeatureConfig,
) -> Result<Array2<f64>> {
    let m = meta.num_mics();
    if m < 2 {
        return Err(Error::TooFewMics(m));
    }
    if frame.num_channels() != m {
        return Err(Error::DimensionMismatch { expected: m, got: frame.num_channels() });
    }
    let order = canonical_order(&meta.mics);
    let frame = frame.permuted(&order);
    let meta = MetadataVector::new(order.iter().map(|&k| meta.mics[k]).collect(), meta.room);
    let pairs = enumerate_pairs(m)?;
    let features: Vec<Vec<f64>> = match config.kind {
        FeatureKind::Gcc => {
            let spectra = ChannelSpectra::from_frame(&frame, &config.classical.gcc)?;
            pairs
                .iter()
                .map(|&(i, j)| {
                    let mut v = spectra.gcc(i, j).central().to_vec();
                    scale_peak(&mut v);
                    v
                })
                .collect()
        }
        FeatureKind::Slf => {
            let grid = Grid::new(config.grid_n, meta.room[0], meta.room[1])?;
            slf_pair_maps(&frame, &meta, &grid, &config.classical)?
                .into_iter()
                .map(|h| {
                    let mut v = h.values;
                    scale_min_max(&mut v);
                    v
                })
                .collect()
        }
    };
    let mut out = Array2::zeros((pairs.len(), config.input_size()));
    for (row, (&(i, j), f)) in pairs.iter().zip(&features).enumerate() {
        let mut r = out.row_mut(row);
        for (dst, src) in r.iter_mut().zip(f.iter().chain(meta.pair(i, j)?.iter())) {
            *dst = *src;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelNetSpec {
    pub features: FeatureConfig,
    /// Output sizes of the relation MLP; the last must be `grid_n^2`.
    pub relation_layers: Vec<usize>,
    /// Output sizes of the fusion MLP; the last must be `grid_n^2`.
    pub fusion_layers: Vec<usize>,
}

impl RelNetSpec {
    /// Three layers of `grid_n^2` units in both MLPs.
    pub fn new(features: FeatureConfig) -> Self {
        let cells = features.grid_n * features.grid_n;
        Self { features, relation_layers: vec![cells; 3], fusion_layers: vec![cells; 3] }
    }

    pub fn num_cells(&self) -> usize {
        self.features.grid_n * self.features.grid_n
    }

    pub fn relation_spec(&self) -> MlpSpec {
        MlpSpec { input_size: self.features.input_size(), layer_output_sizes: self.relation_layers.clone() }
    }

    pub fn fusion_spec(&self) -> MlpSpec {
        MlpSpec { input_size: self.num_cells(), layer_output_sizes: self.fusion_layers.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.grid_n < 2 {
            return Err(Error::InvalidConfig(format!("grid_n must be >= 2, got {}", self.features.grid_n)));
        }
        self.features.classical.gcc.validate()?;
        self.relation_spec().validate()?;
        self.fusion_spec().validate()?;
        let cells = self.num_cells();
        if self.relation_spec().output_size() != cells || self.fusion_spec().output_size() != cells {
            return Err(Error::InvalidConfig(format!(
                "both MLPs must end in grid_n^2 = {cells} outputs, got {:?} and {:?}",
                self.relation_layers, self.fusion_layers
            )));
        }
        Ok(())
    }
}

/// Relation network: a relation MLP applied to every microphone pair, the
/// relations summed, and a fusion MLP mapping the sum to a heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct RelNet {
    pub spec: RelNetSpec,
    pub relation: Mlp,
    pub fusion: Mlp,
}

/// Scale applied to the initial output-layer weights. The fusion MLP sees
/// the sum of up to `M(M-1)/2` relation vectors, so at full scale its
/// outputs start an order of magnitude away from the `[0, 1]` targets and
/// the first Adam steps kill most fusion units.
pub const OUTPUT_INIT_SCALE: f64 = 0.1;

impl RelNet {
    /// Fan-in scaled uniform weights, with both output layers shrunk by
    /// [`OUTPUT_INIT_SCALE`].
    pub fn new(spec: RelNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut relation = Mlp::new(&spec.relation_spec(), &mut rng)?;
        let mut fusion = Mlp::new(&spec.fusion_spec(), &mut rng)?;
        for mlp in [&mut relation, &mut fusion] {
            mlp.layers.last_mut().expect("non-empty").weights *= OUTPUT_INIT_SCALE;
        }
        Ok(Self { spec, relation, fusion })
    }

    pub fn from_parts(spec: RelNetSpec, relation: Mlp, fusion: Mlp) -> Result<Self> {
        spec.validate()?;
        if relation.spec() != spec.relation_spec() || fusion.spec() != spec.fusion_spec() {
            return Err(Error::InvalidConfig("MLP shapes do not match the network spec".into()));
        }
        Ok(Self { spec, relation, fusion })
    }

    pub fn num_parameters(&self) -> usize {
        self.relation.num_parameters() + self.fusion.num_parameters()
    }

    /// Heatmaps for several examples, each given as its pair-feature rows.
    pub fn forward_batch(&self, examples: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        let (stacked, segments) = stack_pairs(examples, self.spec.features.input_size())?;
        let relations = self.relation.predict(stacked.view())?;
        let summed = segment_sums(&relations, &segments);
        self.fusion.predict(summed.view())
    }

    pub fn forward_pairs(&self, pairs: ArrayView2<f64>) -> Result<Heatmap> {
        let out = self.forward_batch(&[pairs])?;
        Ok(Heatmap { n: self.spec.features.grid_n, values: out.into_raw_vec_and_offset().0 })
    }
}

/// Stacks pair rows and returns each example's `(start, end)` row range.
pub(crate) fn stack_pairs(
    examples: &[ArrayView2<f64>],
    width: usize,
) -> Result<(Array2<f64>, Vec<(usize, usize)>)> {
    let rows: usize = examples.iter().map(|e| e.nrows()).sum();
    let mut stacked = Array2::zeros((rows, width));
    let mut segments = Vec::with_capacity(examples.len());
    let mut start = 0;
    for e in examples {
        if e.ncols() != width {
            return Err(Error::DimensionMismatch { expected: width, got: e.ncols() });
        }
        if e.nrows() == 0 {
            return Err(Error::TooFewMics(0));
        }
        stacked.slice_mut(s![start..start + e.nrows(), ..]).assign(e);
        segments.push((start, start + e.nrows()));
        start += e.nrows();
    }
    Ok((stacked, segments))
}

pub(crate) fn segment_sums(rows: &Array2<f64>, segments: &[(usize, usize)]) -> Array2<f64> {
    let mut out = Array2::zeros((segments.len(), rows.ncols()));
    for (k, &(a, b)) in segments.iter().enumerate() {
        let mut dst = out.row_mut(k);
        for r in a..b {
            dst += &rows.row(r);
        }
    }
    out
}

/// Network heatmap for one frame.
pub fn relnet_forward(model: &RelNet, frame: &MultichannelFrame, meta: &MetadataVector) -> Result<Heatmap> {
    let pairs = pair_features(frame, meta, &model.spec.features)?;
    model.forward_pairs(pairs.view())
}

/// Network localizer: the cell with the highest network output.
pub fn gnn_localize(
    model: &RelNet,
    frame: &MultichannelFrame,
    meta: &MetadataVector,
    grid: &Grid,
) -> Result<LocalizationResult> {
    if grid.n != model.spec.features.grid_n {
        return Err(Error::DimensionMismatch { expected: model.spec.features.grid_n, got: grid.n });
    }
    let heatmap = relnet_forward(model, frame, meta)?;
    let estimate = pick_peak(&heatmap, PeakMode::Max, grid)?;
    Ok(LocalizationResult { estimate, heatmap, per_pair_maps: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_spec(kind: FeatureKind) -> RelNetSpec {
        let features = FeatureConfig { kind, grid_n: 3, ..Default::default() };
        RelNetSpec { features, relation_layers: vec![7, 9], fusion_layers: vec![9] }
    }

    #[test]
    fn input_sizes() {
        let gcc = FeatureConfig { kind: FeatureKind::Gcc, ..Default::default() };
        assert_eq!(gcc.input_size(), 209);
        assert_eq!(FeatureConfig::default().input_size(), 634);
        let spec = RelNetSpec::new(FeatureConfig::default());
        assert_eq!(spec.relation_layers, vec![625, 625, 625]);
        spec.validate().unwrap();
        let bad = RelNetSpec { fusion_layers: vec![625, 10], ..spec };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn canonical_order_sorts_by_coordinates() {
        let mics = [[2.0, 1.0, 1.0], [1.0, 3.0, 1.0], [1.0, 2.0, 5.0]];
        assert_eq!(canonical_order(&mics), vec![2, 1, 0]);
    }

    #[test]
    fn two_mics_is_fusion_of_one_relation() {
        let net = RelNet::new(small_spec(FeatureKind::Slf), 1).unwrap();
        let pair = Array2::from_shape_fn((1, 18), |(_, c)| c as f64 / 10.0);
        let out = net.forward_pairs(pair.view()).unwrap();
        let r = net.relation.predict(pair.view()).unwrap();
        let expected = net.fusion.predict(r.view()).unwrap();
        assert_eq!(out.values, expected.into_raw_vec_and_offset().0);
    }

    #[test]
    fn batch_matches_single_examples() {
        let net = RelNet::new(small_spec(FeatureKind::Slf), 2).unwrap();
        let a = Array2::from_shape_fn((3, 18), |(r, c)| ((r * 18 + c) % 7) as f64 / 7.0);
        let b = Array2::from_shape_fn((6, 18), |(r, c)| ((r * 5 + c) % 11) as f64 / 11.0);
        let batch = net.forward_batch(&[a.view(), b.view()]).unwrap();
        let (ya, yb) = (net.forward_pairs(a.view()).unwrap(), net.forward_pairs(b.view()).unwrap());
        for k in 0..9 {
            assert!((batch[[0, k]] - ya.values[k]).abs() < 1e-12);
            assert!((batch[[1, k]] - yb.values[k]).abs() < 1e-12);
        }
        assert!(net.forward_batch(&[array![[1.0, 2.0]].view()]).is_err());
    }

    #[test]
    fn scaling() {
        let mut v = vec![-2.0, 1.0, 0.5];
        scale_peak(&mut v);
        assert_eq!(v, vec![-1.0, 0.5, 0.25]);
        let mut v = vec![3.0, 5.0, 4.0];
        scale_min_max(&mut v);
        assert_eq!(v, vec![0.0, 1.0, 0.5]);
        let mut flat = vec![2.0; 4];
        scale_min_max(&mut flat);
        assert_eq!(flat, vec![0.0; 4]);
    }
}
