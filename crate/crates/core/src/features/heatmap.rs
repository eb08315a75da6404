use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Point2, RoomSpec};

/// Square grid of cells over a rectangular room footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub width: f64,
    pub length: f64,
}

impl Grid {
    pub fn new(n: usize, width: f64, length: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("grid needs n >= 2 cells per side, got {n}")));
        }
        if !(width > 0.0 && length > 0.0 && width.is_finite() && length.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grid footprint must be positive, got {width} x {length}"
            )));
        }
        Ok(Self { n, width, length })
    }

    pub fn for_room(n: usize, room: &RoomSpec) -> Result<Self> {
        Self::new(n, room.width, room.length)
    }

    pub fn num_cells(&self) -> usize {
        self.n * self.n
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        u * self.n + v
    }

    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index / self.n, index % self.n)
    }

    pub fn cell_center(&self, u: usize, v: usize) -> Point2 {
        [
            (u as f64 + 0.5) * self.width / self.n as f64,
            (v as f64 + 0.5) * self.length / self.n as f64,
        ]
    }

    pub fn center_of(&self, index: usize) -> Point2 {
        let (u, v) = self.cell(index);
        self.cell_center(u, v)
    }

    /// Cell centers in flat-index order.
    pub fn centers(&self) -> impl Iterator<Item = Point2> + '_ {
        (0..self.num_cells()).map(|i| self.center_of(i))
    }

    pub fn cell_diagonal(&self) -> f64 {
        let dx = self.width / self.n as f64;
        let dy = self.length / self.n as f64;
        (dx * dx + dy * dy).sqrt()
    }

    /// Index of the cell containing `p` (clamped to the footprint).
    pub fn nearest_cell(&self, p: &Point2) -> usize {
        let clamp = |x: f64, size: f64| {
            ((x / size * self.n as f64).floor().max(0.0) as usize).min(self.n - 1)
        };
        self.index(clamp(p[0], self.width), clamp(p[1], self.length))
    }
}

/// Flattened `n x n` map aligned with [`Grid`] indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub n: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n] }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: values.len() });
        }
        Ok(Self { n, values })
    }

    pub fn add_assign(&mut self, other: &Heatmap) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    /// One line per `u`, `n` comma-separated values per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 12);
        for row in self.values.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            rows += 1;
            for cell in line.split(',') {
                let v = cell.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidConfig(format!("heatmap CSV row {rows}: bad value {cell:?}: {e}"))
                })?;
                values.push(v);
            }
        }
        Self::from_values(rows, values)
    }

    /// Binary 8-bit PGM, min-max normalized. Image rows run from the far
    /// wall (`v = n - 1`) down to `v = 0`, columns along `u`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let n = self.n;
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
        for v in (0..n).rev() {
            for u in 0..n {
                let x = self.values[u * n + v];
                let level = if span > 0.0 { (x - lo) / span * 255.0 } else { 0.0 };
                out.push(level.round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    /// Writes CSV or PGM depending on the file extension.
    pub fn write(&self, path: &Path) -> Result<()> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "csv" => std::fs::write(path, self.to_csv())?,
            "pgm" => std::fs::write(path, self.to_pgm())?,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "heatmap path {} must end in .csv or .pgm",
                    path.display()
                )))
            }
        }
        Ok(())
    }
}
