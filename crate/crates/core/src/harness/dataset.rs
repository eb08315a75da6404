use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{
    add_noise, auralize, provide_source_signal, MultichannelSignal, RirConfig, SourceSignalConfig, DEFAULT_FS,
};
use crate::error::{read_text, Error, Result};
use crate::scene::{sample_scene, Point2, Scene, SceneDistribution};
use crate::wav;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENE_FILE: &str = "scene.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn id(self) -> u64 {
        self as u64
    }
}

/// Largest example index a split can hold.
pub const MAX_SPLIT_SIZE: usize = 1 << 28;

/// Seed of example `index` in `split`. Splits occupy disjoint seed ranges.
pub fn example_seed(master_seed: u64, split: Split, index: usize) -> u64 {
    debug_assert!(index < MAX_SPLIT_SIZE);
    (master_seed << 32) | (split.id() << 28) | index as u64
}

/// How a sampled scene is turned into microphone signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub fs: f64,
    /// Length of the emitted source signal, seconds.
    pub duration_s: f64,
    pub snr_db: f64,
    pub source: SourceSignalConfig,
    pub rir: RirConfig,
    /// Ignore the scene's T60 and keep only the direct path.
    pub anechoic: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            fs: DEFAULT_FS,
            duration_s: 1.0,
            snr_db: 30.0,
            source: SourceSignalConfig::Synthetic,
            rir: RirConfig::default(),
            anechoic: false,
        }
    }
}

impl SynthesisConfig {
    pub fn rir_config(&self) -> RirConfig {
        if self.anechoic {
            RirConfig { speed_of_sound: self.rir.speed_of_sound, ..RirConfig::direct_path_only() }
        } else {
            self.rir
        }
    }
}

/// Renders `scene` at its microphones: source signal, room response and
/// sensor noise, all seeded from `scene.seed`.
pub fn synthesize(scene: &mut Scene, config: &SynthesisConfig) -> Result<MultichannelSignal> {
    let signal = provide_source_signal(&config.source, config.duration_s, config.fs, scene.seed)?;
    scene.source.signal_id = signal.id;
    let clean = auralize(scene, &signal.samples, config.fs, &config.rir_config())?;
    add_noise(&clean, config.snr_db, scene.seed ^ 0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub master_seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Microphone counts of the training and validation examples.
    pub train_mic_counts: Vec<usize>,
    pub test_mic_counts: Vec<usize>,
    /// Room, T60 and placement distribution. Its `mic_counts` is replaced
    /// per split.
    pub scene: SceneDistribution,
    pub synthesis: SynthesisConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            train: 15_000,
            val: 5_000,
            test: 10_000,
            train_mic_counts: vec![5, 7],
            test_mic_counts: vec![4, 5, 6, 7],
            scene: SceneDistribution::default(),
            synthesis: SynthesisConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn distribution(&self, split: Split) -> SceneDistribution {
        let counts = match split {
            Split::Train | Split::Val => &self.train_mic_counts,
            Split::Test => &self.test_mic_counts,
        };
        self.scene.clone().with_mic_counts(counts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.master_seed >= 1 << 32 {
            return Err(Error::InvalidConfig(format!("master_seed must fit in 32 bits, got {}", self.master_seed)));
        }
        for split in Split::ALL {
            if self.count(split) > MAX_SPLIT_SIZE {
                return Err(Error::InvalidConfig(format!("{} split exceeds {MAX_SPLIT_SIZE} examples", split.name())));
            }
            self.distribution(split).validate()?;
        }
        let s = &self.synthesis;
        if !(s.fs > 0.0 && s.duration_s > 0.0) || s.snr_db.is_nan() {
            return Err(Error::InvalidConfig("synthesis needs positive fs and duration and a numeric SNR".into()));
        }
        Ok(())
    }

    /// The scene of example `index` in `split`, or `None` when its
    /// placement is infeasible.
    pub fn scene(&self, split: Split, index: usize) -> Result<Option<Scene>> {
        match sample_scene(&self.distribution(split), example_seed(self.master_seed, split, index)) {
            Ok(scene) => Ok(Some(scene)),
            Err(Error::PlacementInfeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Scene and microphone signals of example `index` in `split`.
    pub fn example(&self, split: Split, index: usize) -> Result<Option<(Scene, MultichannelSignal)>> {
        let Some(mut scene) = self.scene(split, index)? else {
            return Ok(None);
        };
        let signals = synthesize(&mut scene, &self.synthesis)?;
        Ok(Some((scene, signals)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Example directory relative to the dataset root.
    pub path: String,
    pub split: Split,
    pub num_mics: usize,
    pub room: [f64; 3],
    pub source_xy: Point2,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: DatasetConfig,
    pub counts: SplitCounts,
    /// Examples dropped because their placement was infeasible.
    pub skipped: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn load(root: &Path) -> Result<Self> {
        let manifest: Self = serde_json::from_str(&read_text(&root.join(MANIFEST_FILE))?)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::InvalidConfig(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        Ok(manifest)
    }
}

pub fn channel_file(m: usize) -> String {
    format!("ch_{m:02}.wav")
}

/// Writes one example directory: a float WAV per channel and the scene.
pub fn write_example(dir: &Path, scene: &Scene, signals: &MultichannelSignal) -> Result<()> {
    fs::create_dir_all(dir)?;
    let fs_hz = signals.fs.round() as u32;
    for (m, ch) in signals.channels.iter().enumerate() {
        wav::write_mono_f32(&dir.join(channel_file(m)), ch, fs_hz)?;
    }
    fs::write(dir.join(SCENE_FILE), scene.to_json())?;
    Ok(())
}

/// Reads an example directory written by [`write_example`].
pub fn read_example(dir: &Path) -> Result<(Scene, MultichannelSignal)> {
    let scene = Scene::from_json(&read_text(&dir.join(SCENE_FILE))?)?;
    let mut channels = Vec::with_capacity(scene.num_mics());
    let mut rate = None;
    for m in 0..scene.num_mics() {
        let (samples, fs_hz) = wav::read_mono(&dir.join(channel_file(m)))?;
        if rate.is_some_and(|r| r != fs_hz) {
            return Err(Error::InvalidScene(format!("{} has mixed sample rates", dir.display())));
        }
        rate = Some(fs_hz);
        channels.push(samples);
    }
    let signals = MultichannelSignal::new(channels, f64::from(rate.unwrap_or(0)))?;
    Ok((scene, signals))
}

/// Synthesizes every example and writes it under `out_dir` together with
/// the manifest. Examples are rendered in parallel; the output does not
/// depend on the thread count.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::new();
    let mut counts = SplitCounts::default();
    let mut skipped = 0;
    for split in Split::ALL {
        let results: Vec<Option<ManifestEntry>> = (0..config.count(split))
            .into_par_iter()
            .map(|index| -> Result<Option<ManifestEntry>> {
                let Some((scene, signals)) = config.example(split, index)? else {
                    return Ok(None);
                };
                let rel: PathBuf = [split.name(), &format!("{index:06}")].iter().collect();
                write_example(&out_dir.join(&rel), &scene, &signals)?;
                Ok(Some(ManifestEntry {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    split,
                    num_mics: scene.num_mics(),
                    room: scene.room.dims(),
                    source_xy: scene.source.xy(),
                    seed: scene.seed,
                }))
            })
            .collect::<Result<_>>()?;
        let before = entries.len();
        for r in results {
            match r {
                Some(e) => entries.push(e),
                None => skipped += 1,
            }
        }
        let n = entries.len() - before;
        match split {
            Split::Train => counts.train = n,
            Split::Val => counts.val = n,
            Split::Test => counts.test = n,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} examples with infeasible placement");
    }
    let manifest = DatasetManifest { version: MANIFEST_VERSION, config: config.clone(), counts, skipped, entries };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_disjoint_across_splits() {
        let a = example_seed(7, Split::Train, 5);
        let b = example_seed(7, Split::Val, 5);
        let c = example_seed(7, Split::Test, 5);
        assert!(a != b && b != c && a != c);
        assert_eq!(example_seed(7, Split::Test, MAX_SPLIT_SIZE - 1) >> 32, 7);
    }

    #[test]
    fn split_mic_counts() {
        let cfg = DatasetConfig::default();
        assert_eq!(cfg.distribution(Split::Val).mic_counts, vec![5, 7]);
        assert_eq!(cfg.distribution(Split::Test).mic_counts, vec![4, 5, 6, 7]);
        assert!(DatasetConfig { master_seed: 1 << 32, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn anechoic_override_keeps_speed_of_sound() {
        let mut cfg = SynthesisConfig { anechoic: true, ..Default::default() };
        cfg.rir.speed_of_sound = 340.0;
        let rir = cfg.rir_config();
        assert_eq!(rir.max_order, Some(0));
        assert_eq!(rir.speed_of_sound, 340.0);
    }
}
