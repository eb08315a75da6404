//! Rooms, microphone arrays and sources, plus seeded random scene sampling.
//!
//! A [`Scene`] is one simulated world: a shoebox room with a reverberation
//! time, `M` microphones and a single static source. Coordinates are meters
//! with the origin at a floor corner, `x` along the width, `y` along the
//! length and `z` up.
//!
//! Scene JSON documents always carry their keys in this order:
//! `room {width, length, height, t60}`, `mics {positions}`,
//! `source {position, signal_id}`, `seed`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustics::eyring_absorption;
use crate::error::{Error, Result};

pub type Point3 = [f64; 3];
pub type Point2 = [f64; 2];

/// Normalization length for room dimensions in pair metadata.
pub const ROOM_DIM_SCALE: f64 = 10.0;

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn distance2d(a: &Point2, b: &Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    /// Reverberation time in seconds.
    pub t60: f64,
}

impl RoomSpec {
    pub fn dims(&self) -> Point3 {
        [self.width, self.length, self.height]
    }

    pub fn volume(&self) -> f64 {
        self.width * self.length * self.height
    }

    pub fn surface(&self) -> f64 {
        2.0 * (self.width * self.length + self.width * self.height + self.length * self.height)
    }

    pub fn footprint(&self) -> (f64, f64) {
        (self.width, self.length)
    }

    /// Whether `p` lies strictly inside the room.
    pub fn contains(&self, p: &Point3) -> bool {
        self.wall_clearance(p) > 0.0
    }

    /// Distance from `p` to the nearest of the six walls (negative outside).
    pub fn wall_clearance(&self, p: &Point3) -> f64 {
        let d = self.dims();
        (0..3)
            .map(|k| p[k].min(d[k] - p[k]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.width, self.length, self.height, self.t60]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScene(format!(
                "room dimensions and t60 must be positive and finite: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicArray {
    pub positions: Vec<Point3>,
}

impl MicArray {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub position: Point3,
    /// Identifies the waveform the source plays (corpus file name or a
    /// synthetic-signal tag).
    pub signal_id: String,
}

impl SourceSpec {
    /// The localization target: the source's projection on the floor plane.
    pub fn xy(&self) -> Point2 {
        [self.position[0], self.position[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: RoomSpec,
    pub mics: MicArray,
    pub source: SourceSpec,
    pub seed: u64,
}

impl Scene {
    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    /// Checks every structural invariant. `min_separation` applies to
    /// mic–mic, mic–source and source–wall distances.
    pub fn validate(&self, min_separation: f64) -> Result<()> {
        self.room.validate()?;
        let m = self.mics.len();
        if m < 2 {
            return Err(Error::TooFewMics(m));
        }
        for (i, p) in self.mics.positions.iter().enumerate() {
            if !self.room.contains(p) {
                return Err(Error::InvalidScene(format!("mic {i} at {p:?} is outside the room")));
            }
            for (j, q) in self.mics.positions.iter().enumerate().skip(i + 1) {
                if distance(p, q) < min_separation {
                    return Err(Error::InvalidScene(format!(
                        "mics {i} and {j} are closer than {min_separation} m"
                    )));
                }
            }
            if distance(p, &self.source.position) < min_separation {
                return Err(Error::InvalidScene(format!(
                    "mic {i} is closer than {min_separation} m to the source"
                )));
            }
        }
        if self.room.wall_clearance(&self.source.position) < min_separation {
            return Err(Error::InvalidScene(format!(
                "source {:?} is closer than {min_separation} m to a wall",
                self.source.position
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Uniform range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
}

impl UniformRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi == self.lo {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo > 0.0 && self.hi >= self.lo) {
            return Err(Error::InvalidConfig(format!(
                "{name}: expected 0 < lo <= hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Distribution that [`sample_scene`] draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneDistribution {
    pub width: UniformRange,
    pub length: UniformRange,
    pub height: UniformRange,
    pub t60: UniformRange,
    /// Allowed microphone counts; `M` is drawn uniformly from this set.
    pub mic_counts: Vec<usize>,
    pub min_separation: f64,
    /// Rejection-sampling budget for one scene.
    pub max_attempts: usize,
}

impl Default for SceneDistribution {
    fn default() -> Self {
        Self {
            width: UniformRange::new(3.0, 6.0),
            length: UniformRange::new(3.0, 6.0),
            height: UniformRange::new(2.0, 4.0),
            t60: UniformRange::new(0.3, 0.6),
            mic_counts: vec![5, 7],
            min_separation: 0.5,
            max_attempts: 10_000,
        }
    }
}

impl SceneDistribution {
    pub fn with_mic_counts(mut self, counts: &[usize]) -> Self {
        self.mic_counts = counts.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.width.validate("width")?;
        self.length.validate("length")?;
        self.height.validate("height")?;
        self.t60.validate("t60")?;
        if self.mic_counts.is_empty() || self.mic_counts.iter().any(|&m| m < 2) {
            return Err(Error::InvalidConfig(format!(
                "mic_counts must be non-empty with every count >= 2, got {:?}",
                self.mic_counts
            )));
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            return Err(Error::InvalidConfig("min_separation must be >= 0".into()));
        }
        let smallest = self.width.lo.min(self.length.lo).min(self.height.lo);
        if smallest <= 2.0 * self.min_separation {
            return Err(Error::InvalidConfig(format!(
                "smallest room dimension {smallest} m leaves no interior at {} m wall clearance",
                self.min_separation
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

/// Draws a random scene. Pure in `(config, seed)`.
///
/// Rooms whose Eyring absorption falls outside `(0, 1)` are redrawn, and
/// devices are placed one at a time by rejection sampling; both count
/// against `config.max_attempts`.
pub fn sample_scene(config: &SceneDistribution, seed: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sep = config.min_separation;
    let mut attempts = 0usize;

    let room = loop {
        attempts += 1;
        if attempts > config.max_attempts {
            return Err(Error::PlacementInfeasible { attempts: config.max_attempts });
        }
        let room = RoomSpec {
            width: config.width.sample(&mut rng),
            length: config.length.sample(&mut rng),
            height: config.height.sample(&mut rng),
            t60: config.t60.sample(&mut rng),
        };
        if eyring_absorption(&room).is_ok() {
            break room;
        }
    };

    let m = config.mic_counts[rng.random_range(0..config.mic_counts.len())];
    let dims = room.dims();
    let mut placed: Vec<Point3> = Vec::with_capacity(m + 1);
    while placed.len() < m + 1 {
        attempts += 1;
        if attempts > config.max_attempts {
            return Err(Error::PlacementInfeasible { attempts: config.max_attempts });
        }
        let p = [
            rng.random_range(sep..dims[0] - sep),
            rng.random_range(sep..dims[1] - sep),
            rng.random_range(sep..dims[2] - sep),
        ];
        if placed.iter().all(|q| distance(&p, q) >= sep) {
            placed.push(p);
        }
    }
    let source = placed.pop().expect("m + 1 devices placed");

    Ok(Scene {
        room,
        mics: MicArray { positions: placed },
        source: SourceSpec { position: source, signal_id: String::new() },
        seed,
    })
}

/// Flat metadata: every microphone's coordinates followed by the room
/// dimensions. Unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataVector {
    pub mics: Vec<Point3>,
    pub room: Point3,
}

impl MetadataVector {
    pub fn new(mics: Vec<Point3>, room: Point3) -> Self {
        Self { mics, room }
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn len(&self) -> usize {
        3 * self.mics.len() + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `[x1, y1, z1, ..., xM, yM, zM, width, length, height]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.mics
            .iter()
            .chain(std::iter::once(&self.room))
            .flat_map(|p| p.iter().copied())
            .collect()
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() < 6 || values.len() % 3 != 0 {
            return Err(Error::InvalidConfig(format!(
                "metadata length {} is not 3M + 3 with M >= 1",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite metadata value {v}")));
        }
        let mut points: Vec<Point3> = values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let room = points.pop().expect("at least two triples");
        Ok(Self { mics: points, room })
    }

    /// Normalized metadata for the pair `(i, j)`, `i < j`: both mic positions
    /// divided by the room dimensions, then the room dimensions divided by
    /// [`ROOM_DIM_SCALE`].
    pub fn pair(&self, i: usize, j: usize) -> Result<[f64; 9]> {
        let m = self.mics.len();
        if i >= j || j >= m {
            return Err(Error::IndexOutOfRange(format!(
                "pair ({i}, {j}) requires i < j < {m}"
            )));
        }
        let mut out = [0.0; 9];
        for k in 0..3 {
            out[k] = self.mics[i][k] / self.room[k];
            out[3 + k] = self.mics[j][k] / self.room[k];
            out[6 + k] = self.room[k] / ROOM_DIM_SCALE;
        }
        Ok(out)
    }
}

pub fn build_metadata(scene: &Scene) -> MetadataVector {
    MetadataVector::new(scene.mics.positions.clone(), scene.room.dims())
}

pub fn pair_metadata(scene: &Scene, i: usize, j: usize) -> Result<[f64; 9]> {
    build_metadata(scene).pair(i, j)
}
