use crate::error::{Error, Result};
use crate::features::{Grid, Heatmap};
use crate::scene::{distance2d, Point2};

/// Training target: every cell holds `exp(-d)`, `d` the distance in meters
/// from its center to the source.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    pub values: Vec<f64>,
}

pub fn target_map(source: &Point2, grid: &Grid) -> TargetMap {
    TargetMap { values: grid.centers().map(|c| (-distance2d(&c, source)).exp()).collect() }
}

impl From<TargetMap> for Heatmap {
    fn from(t: TargetMap) -> Self {
        let n = (t.values.len() as f64).sqrt().round() as usize;
        Heatmap { n, values: t.values }
    }
}

/// Mean absolute error and its subgradient `sign(pred - target) / len`,
/// with `sign(0) = 0`.
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: pred.len() });
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            sign(d) / n
        })
        .collect();
    Ok((loss / n, grad))
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
