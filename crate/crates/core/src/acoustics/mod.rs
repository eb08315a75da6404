//! Shoebox room acoustics: Eyring absorption, image-source impulse
//! responses, auralization, sensor noise and source waveforms.

mod noise;
mod rir;
mod source;

pub use noise::{add_noise, NO_NOISE};
pub use rir::{
    eyring_absorption, simulate_rir, simulate_rir_with_absorption, wall_absorption,
    AbsorptionModel, Rir, RirConfig,
};
pub use source::{provide_source_signal, SourceSignal, SourceSignalConfig};

use serde::{Deserialize, Serialize};

use crate::dsp::convolve;
use crate::error::{Error, Result};
use crate::scene::Scene;

/// Speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
/// Default sample rate in Hz.
pub const DEFAULT_FS: f64 = 16_000.0;

/// `M` equal-length channels sampled at `fs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichannelSignal {
    pub channels: Vec<Vec<f64>>,
    pub fs: f64,
}

impl MultichannelSignal {
    pub fn new(channels: Vec<Vec<f64>>, fs: f64) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if let Some(c) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::DimensionMismatch { expected: len, got: c.len() });
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("signal contains non-finite samples".into()));
        }
        Ok(Self { channels, fs })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Renders the source signal at every microphone: channel `m` is the
/// signal convolved with the room impulse response from the source to mic
/// `m`. All channels share the time origin of the source emission.
pub fn auralize(
    scene: &Scene,
    source_signal: &[f64],
    fs: f64,
    config: &RirConfig,
) -> Result<MultichannelSignal> {
    if source_signal.is_empty() {
        return Err(Error::SignalTooShort { len: 0, required: 1 });
    }
    let alpha = wall_absorption(&scene.room, fs, config)?;
    let rirs = scene
        .mics
        .positions
        .iter()
        .map(|mic| {
            simulate_rir_with_absorption(&scene.room, &scene.source.position, mic, fs, alpha, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let rir_len = rirs.iter().map(|r| r.taps.len()).max().unwrap_or(0);
    let out_len = source_signal.len() + rir_len - 1;
    let channels = rirs
        .iter()
        .map(|rir| {
            let mut y = convolve(source_signal, &rir.taps);
            y.resize(out_len, 0.0);
            y
        })
        .collect();
    Ok(MultichannelSignal { channels, fs })
}
