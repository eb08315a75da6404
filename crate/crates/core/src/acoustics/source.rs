use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{forward_plan, inverse_plan, zero_padded};
use crate::error::{Error, Result};
use crate::wav;

/// Where source waveforms come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSignalConfig {
    /// Pink-ish Gaussian noise, amplitude-modulated at a syllabic rate.
    #[default]
    Synthetic,
    /// Mono WAV files picked at random from a directory.
    Corpus { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSignal {
    pub samples: Vec<f64>,
    /// Corpus file name, or `synthetic:<seed>`.
    pub id: String,
}

/// Syllabic modulation rate of the synthetic signal, Hz.
const SYLLABLE_RATE: f64 = 4.0;
/// Below this the synthetic spectrum is empty; above it falls as `1/sqrt(f)`.
const LOW_CUT_HZ: f64 = 80.0;
const TARGET_RMS: f64 = 0.1;

pub fn provide_source_signal(
    config: &SourceSignalConfig,
    duration: f64,
    fs: f64,
    rng_seed: u64,
) -> Result<SourceSignal> {
    if !(duration.is_finite() && duration > 0.0 && fs > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "duration ({duration}) and fs ({fs}) must be positive"
        )));
    }
    let n = (duration * fs).round() as usize;
    match config {
        SourceSignalConfig::Synthetic => Ok(SourceSignal {
            samples: synthetic_speech_like(n, fs, rng_seed),
            id: format!("synthetic:{rng_seed}"),
        }),
        SourceSignalConfig::Corpus { dir } => {
            let files = list_wavs(dir)?;
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let path = &files[rng.random_range(0..files.len())];
            let (samples, file_fs) = wav::read_mono(path)?;
            let mut samples = if f64::from(file_fs) == fs {
                samples
            } else {
                resample_linear(&samples, f64::from(file_fs), fs)
            };
            // Short files are zero-padded, long ones truncated.
            samples.resize(n, 0.0);
            let id = path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
            Ok(SourceSignal { samples, id })
        }
    }
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    if files.is_empty() {
        return Err(Error::EmptyCorpus(dir.to_path_buf()));
    }
    files.sort();
    Ok(files)
}

fn resample_linear(x: &[f64], from: f64, to: f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let out_len = ((x.len() as f64) * to / from).round() as usize;
    (0..out_len)
        .map(|i| {
            let t = i as f64 * from / to;
            let k = t.floor() as usize;
            if k + 1 >= x.len() {
                x[x.len() - 1]
            } else {
                let frac = t - k as f64;
                x[k] * (1.0 - frac) + x[k + 1] * frac
            }
        })
        .collect()
}

/// Gaussian noise shaped to a `1/f` power spectrum above [`LOW_CUT_HZ`],
/// modulated by a `sin^2` envelope at [`SYLLABLE_RATE`], zero mean.
fn synthetic_speech_like(n: usize, fs: f64, seed: u64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let phase = rng.random_range(0.0..PI);

    let mut spec = zero_padded(&white, n);
    forward_plan(n).process(&mut spec);
    for (k, bin) in spec.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        *bin *= if f < LOW_CUT_HZ { 0.0 } else { 1.0 / f.sqrt() };
    }
    inverse_plan(n).process(&mut spec);

    let mut x: Vec<f64> = spec
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let env = 0.05 + (PI * SYLLABLE_RATE * i as f64 / fs + phase).sin().powi(2);
            c.re * env
        })
        .collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= TARGET_RMS / rms);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_length_and_zero_mean() {
        let s = provide_source_signal(&SourceSignalConfig::Synthetic, 0.5, 16000.0, 11).unwrap();
        assert_eq!(s.samples.len(), 8000);
        let n = s.samples.len() as f64;
        let mean = s.samples.iter().sum::<f64>() / n;
        let rms = (s.samples.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.01 * rms);
        assert_eq!(s.id, "synthetic:11");
    }

    #[test]
    fn synthetic_is_seeded() {
        let cfg = SourceSignalConfig::Synthetic;
        let a = provide_source_signal(&cfg, 0.25, 16000.0, 3).unwrap();
        assert_eq!(a, provide_source_signal(&cfg, 0.25, 16000.0, 3).unwrap());
        assert_ne!(a, provide_source_signal(&cfg, 0.25, 16000.0, 4).unwrap());
    }

    #[test]
    fn synthetic_is_amplitude_modulated() {
        // Energy in 62.5 ms blocks swings by an order of magnitude.
        let s = synthetic_speech_like(16000, 16000.0, 5);
        let energies: Vec<f64> = s.chunks(1000).map(|c| c.iter().map(|v| v * v).sum()).collect();
        let max = energies.iter().cloned().fold(0.0, f64::max);
        let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max > 10.0 * min);
    }

    #[test]
    fn corpus_wav_passes_through() {
        let dir = tempfile::tempdir().unwrap();
        let x: Vec<f64> = (0..8000).map(|i| ((i % 50) as f64 - 25.0) / 64.0).collect();
        wav::write_mono_i16(&dir.path().join("only.wav"), &x, 16000).unwrap();
        let cfg = SourceSignalConfig::Corpus { dir: dir.path().to_path_buf() };
        let s = provide_source_signal(&cfg, 0.5, 16000.0, 0).unwrap();
        assert_eq!(s.samples, x);
        assert_eq!(s.id, "only.wav");
    }

    #[test]
    fn corpus_is_resampled_and_fitted() {
        let dir = tempfile::tempdir().unwrap();
        let x: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.01).sin() * 0.5).collect();
        wav::write_mono_f32(&dir.path().join("a.wav"), &x, 8000).unwrap();
        let cfg = SourceSignalConfig::Corpus { dir: dir.path().to_path_buf() };
        let s = provide_source_signal(&cfg, 0.25, 16000.0, 0).unwrap();
        assert_eq!(s.samples.len(), 4000);
        assert!((s.samples[2] - x[1] as f32 as f64).abs() < 1e-6);
        let long = provide_source_signal(&cfg, 1.0, 16000.0, 0).unwrap();
        assert_eq!(long.samples.len(), 16000);
        assert!(long.samples[8000..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let cfg = SourceSignalConfig::Corpus { dir: dir.path().to_path_buf() };
        assert!(matches!(
            provide_source_signal(&cfg, 0.5, 16000.0, 0),
            Err(Error::EmptyCorpus(_))
        ));
        let cfg = SourceSignalConfig::Corpus { dir: dir.path().join("missing") };
        assert!(provide_source_signal(&cfg, 0.5, 16000.0, 0).is_err());
    }
}
