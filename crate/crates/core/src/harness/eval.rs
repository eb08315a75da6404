use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{read_example, DatasetManifest, Split};
use crate::acoustics::MultichannelSignal;
use crate::classical::{slf_localize, tdoa_localize, ClassicalConfig, LocalizationResult};
use crate::error::{Error, Result};
use crate::features::{extract_frame, Grid, MultichannelFrame};
use crate::neural::{gnn_localize, pair_features, target_map, FeatureConfig, FeatureKind, RelNet, TrainingExample};
use crate::scene::{build_metadata, distance2d, MetadataVector, Point2, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tdoa,
    Slf,
    GnnGcc,
    GnnSlf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Tdoa, Method::Slf, Method::GnnGcc, Method::GnnSlf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tdoa => "tdoa",
            Method::Slf => "slf",
            Method::GnnGcc => "gnn-gcc",
            Method::GnnSlf => "gnn-slf",
        }
    }

    /// Feature kind of the network behind a neural method.
    pub fn feature_kind(self) -> Option<FeatureKind> {
        match self {
            Method::Tdoa | Method::Slf => None,
            Method::GnnGcc => Some(FeatureKind::Gcc),
            Method::GnnSlf => Some(FeatureKind::Slf),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?} (expected tdoa, slf, gnn-gcc or gnn-slf)")))
    }
}

/// Analysis settings shared by every localizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub frame_ms: f64,
    pub grid_n: usize,
    pub classical: ClassicalConfig,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self { frame_ms: 500.0, grid_n: 25, classical: ClassicalConfig::default() }
    }
}

impl LocalizeConfig {
    pub fn features(&self, kind: FeatureKind) -> FeatureConfig {
        FeatureConfig { kind, grid_n: self.grid_n, classical: self.classical.clone() }
    }
}

/// Room-relative grid of the scene described by `meta`.
pub fn scene_grid(meta: &MetadataVector, n: usize) -> Result<Grid> {
    Grid::new(n, meta.room[0], meta.room[1])
}

/// Runs one localizer on a frame. Neural methods need a model whose
/// feature kind matches the method.
pub fn localize(
    method: Method,
    frame: &MultichannelFrame,
    meta: &MetadataVector,
    config: &LocalizeConfig,
    model: Option<&RelNet>,
) -> Result<LocalizationResult> {
    match method {
        Method::Tdoa => tdoa_localize(frame, meta, &scene_grid(meta, config.grid_n)?, &config.classical),
        Method::Slf => slf_localize(frame, meta, &scene_grid(meta, config.grid_n)?, &config.classical),
        Method::GnnGcc | Method::GnnSlf => {
            let model = model.ok_or_else(|| Error::MissingCheckpoint(method.to_string()))?;
            if Some(model.spec.features.kind) != method.feature_kind() {
                return Err(Error::InvalidConfig(format!(
                    "method {method} cannot use a checkpoint trained on {:?} features",
                    model.spec.features.kind
                )));
            }
            gnn_localize(model, frame, meta, &scene_grid(meta, model.spec.features.grid_n)?)
        }
    }
}

pub fn mean_euclid_error(estimates: &[Point2], truths: &[Point2]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch { expected: truths.len(), got: estimates.len() });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyDataset("no estimates"));
    }
    Ok(estimates.iter().zip(truths).map(|(e, t)| distance2d(e, t)).sum::<f64>() / estimates.len() as f64)
}

/// Frame and metadata of a synthesized example.
pub fn prepare(scene: &Scene, signals: &MultichannelSignal, frame_ms: f64) -> Result<(MultichannelFrame, MetadataVector)> {
    Ok((extract_frame(signals, frame_ms)?, build_metadata(scene)))
}

/// Network input and target for one example.
pub fn training_example(
    scene: &Scene,
    signals: &MultichannelSignal,
    features: &FeatureConfig,
    frame_ms: f64,
) -> Result<TrainingExample> {
    let (frame, meta) = prepare(scene, signals, frame_ms)?;
    let grid = scene_grid(&meta, features.grid_n)?;
    Ok(TrainingExample {
        pairs: pair_features(&frame, &meta, features)?,
        target: target_map(&scene.source.xy(), &grid).values,
    })
}

/// Training examples for every manifest entry of `split`, in manifest order.
pub fn load_training_examples(
    root: &Path,
    manifest: &DatasetManifest,
    split: Split,
    features: &FeatureConfig,
    frame_ms: f64,
) -> Result<Vec<TrainingExample>> {
    let entries: Vec<_> = manifest.entries(split).collect();
    entries
        .par_iter()
        .map(|e| {
            let (scene, signals) = read_example(&root.join(&e.path))?;
            training_example(&scene, &signals, features, frame_ms)
        })
        .collect()
}

/// One report row: a method's error over the examples with `num_mics`
/// microphones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    pub num_mics: usize,
    pub n_examples: usize,
    pub mean_error_m: f64,
    /// Spread of the per-run mean error across checkpoints; zero for a
    /// single run.
    pub std_error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,M,n_examples,mean_error_m,std_error_m\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{:.6},{:.6}", r.method, r.num_mics, r.n_examples, r.mean_error_m, r.std_error_m)
                .expect("write to String");
        }
        out
    }

    pub fn row(&self, method: Method, num_mics: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method && r.num_mics == num_mics)
    }
}

/// Groups per-example errors by microphone count. `runs[r][k]` is the
/// `(M, error)` of example `k` in run `r`; every run covers the same
/// examples.
pub fn summarize(method: Method, runs: &[Vec<(usize, f64)>]) -> Result<Vec<EvalRow>> {
    let first = runs.first().ok_or(Error::EmptyDataset("no evaluation runs"))?;
    let mut per_m: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for run in runs {
        if run.len() != first.len() {
            return Err(Error::DimensionMismatch { expected: first.len(), got: run.len() });
        }
        let mut grouped: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for &(m, err) in run {
            grouped.entry(m).or_default().push(err);
        }
        for (m, errs) in grouped {
            per_m.entry(m).or_default().push(errs);
        }
    }
    Ok(per_m
        .into_iter()
        .map(|(m, runs)| {
            let means: Vec<f64> = runs.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            let std = if means.len() > 1 {
                (means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            EvalRow { method, num_mics: m, n_examples: runs[0].len(), mean_error_m: mean, std_error_m: std }
        })
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Directory for PGM heatmaps of the first examples.
    pub heatmap_dir: Option<PathBuf>,
    pub heatmap_count: usize,
}

/// Localizes every test example with `method` and reports the mean error
/// per microphone count. Neural methods run once per model and the rows
/// aggregate across models.
pub fn evaluate(
    method: Method,
    root: &Path,
    manifest: &DatasetManifest,
    config: &LocalizeConfig,
    models: &[RelNet],
    options: &EvalOptions,
) -> Result<EvalReport> {
    let runs: Vec<Option<&RelNet>> = match method.feature_kind() {
        None => vec![None],
        Some(_) if models.is_empty() => return Err(Error::MissingCheckpoint(method.to_string())),
        Some(_) => models.iter().map(Some).collect(),
    };
    let entries: Vec<_> = manifest.entries(Split::Test).collect();
    if entries.is_empty() {
        return Err(Error::EmptyDataset("test split"));
    }
    if let Some(dir) = &options.heatmap_dir {
        std::fs::create_dir_all(dir)?;
    }
    let per_example: Vec<Vec<f64>> = entries
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let (scene, signals) = read_example(&root.join(&e.path))?;
            let (frame, meta) = prepare(&scene, &signals, config.frame_ms)?;
            runs.iter()
                .enumerate()
                .map(|(r, model)| {
                    let result = localize(method, &frame, &meta, config, *model)?;
                    if let Some(dir) = options.heatmap_dir.as_ref().filter(|_| k < options.heatmap_count) {
                        result.heatmap.write(&dir.join(format!("{method}_{r}_{k:04}.pgm")))?;
                    }
                    Ok(distance2d(&result.estimate, &scene.source.xy()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let runs: Vec<Vec<(usize, f64)>> = (0..runs.len())
        .map(|r| entries.iter().zip(&per_example).map(|(e, errs)| (e.num_mics, errs[r])).collect())
        .collect();
    Ok(EvalReport { rows: summarize(method, &runs)? })
}
