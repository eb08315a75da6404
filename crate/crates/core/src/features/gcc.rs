use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::MultichannelFrame;
use crate::dsp::{forward_plan, inverse_plan, zero_padded};
use crate::error::{Error, Result};

/// Magnitude floor of the PHAT weighting.
pub const PHAT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GccConfig {
    /// DFT length; windows of this size hop by half of it.
    pub fft_size: usize,
    /// Number of lags kept around lag 0 for the network feature.
    pub n_central: usize,
}

impl Default for GccConfig {
    fn default() -> Self {
        Self { fft_size: 1024, n_central: 200 }
    }
}

impl GccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "fft_size must be even and >= 2, got {}",
                self.fft_size
            )));
        }
        if self.n_central == 0 || self.n_central > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "n_central must be in 1..={}, got {}",
                self.fft_size, self.n_central
            )));
        }
        Ok(())
    }
}

/// Lag-centered circular cross-correlation. `full[k]` holds lag
/// `k - fft_size / 2`, so lag 0 sits at index `fft_size / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationVector {
    pub full: Vec<f64>,
    pub n_central: usize,
    pub fs: f64,
}

impl CorrelationVector {
    pub fn fft_size(&self) -> usize {
        self.full.len()
    }

    pub fn zero_index(&self) -> usize {
        self.full.len() / 2
    }

    pub fn lag_of(&self, index: usize) -> isize {
        index as isize - self.zero_index() as isize
    }

    /// The `n_central` lags `[-n_central/2, n_central - n_central/2)`.
    pub fn central(&self) -> &[f64] {
        let start = self.zero_index() - self.n_central / 2;
        &self.full[start..start + self.n_central]
    }

    /// Lag of the largest value with `|lag| <= max_lag`; ties go to the
    /// most negative lag.
    pub fn peak_lag(&self, max_lag: usize) -> isize {
        let z = self.zero_index();
        let lo = z.saturating_sub(max_lag);
        let hi = (z + max_lag).min(self.full.len() - 1);
        let mut best = lo;
        for k in lo..=hi {
            if self.full[k] > self.full[best] {
                best = k;
            }
        }
        self.lag_of(best)
    }
}

/// Divides each bin by its magnitude (floored at [`PHAT_FLOOR`]).
pub fn phat_normalize(spectrum: &mut [Complex64]) {
    for c in spectrum {
        *c /= c.norm().max(PHAT_FLOOR);
    }
}

/// GCC-PHAT between two frames, with a peak near `fs * (tau_i - tau_j)`.
///
/// Both frames are cut into `fft_size` windows with 50% overlap; the
/// PHAT-weighted cross-spectra of all windows are averaged before a single
/// inverse transform.
pub fn gcc_phat(x_i: &[f64], x_j: &[f64], fs: f64, config: &GccConfig) -> Result<CorrelationVector> {
    if x_i.len() != x_j.len() {
        return Err(Error::DimensionMismatch { expected: x_i.len(), got: x_j.len() });
    }
    let spectra = ChannelSpectra::new(&[x_i, x_j], fs, config)?;
    Ok(spectra.gcc(0, 1))
}

/// Windowed spectra of every channel of a frame, so each pair's GCC reuses
/// them.
#[derive(Debug, Clone)]
pub struct ChannelSpectra {
    /// `[channel][window]` spectra.
    spectra: Vec<Vec<Vec<Complex64>>>,
    config: GccConfig,
    fs: f64,
}

impl ChannelSpectra {
    pub fn new(channels: &[&[f64]], fs: f64, config: &GccConfig) -> Result<Self> {
        config.validate()?;
        let n = config.fft_size;
        let len = channels.first().map_or(0, |c| c.len());
        if let Some(c) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::DimensionMismatch { expected: len, got: c.len() });
        }
        if len < n {
            return Err(Error::SignalTooShort { len, required: n });
        }
        let hop = n / 2;
        let n_windows = (len - n) / hop + 1;
        let fft = forward_plan(n);
        let spectra = channels
            .iter()
            .map(|ch| {
                (0..n_windows)
                    .map(|w| {
                        let mut buf = zero_padded(&ch[w * hop..w * hop + n], n);
                        fft.process(&mut buf);
                        buf
                    })
                    .collect()
            })
            .collect();
        Ok(Self { spectra, config: *config, fs })
    }

    pub fn from_frame(frame: &MultichannelFrame, config: &GccConfig) -> Result<Self> {
        let refs: Vec<&[f64]> = frame.channels.iter().map(Vec::as_slice).collect();
        Self::new(&refs, frame.fs, config)
    }

    pub fn num_channels(&self) -> usize {
        self.spectra.len()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn gcc(&self, i: usize, j: usize) -> CorrelationVector {
        let n = self.config.fft_size;
        let windows = self.spectra[i].len();
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut cross = vec![Complex64::new(0.0, 0.0); n];
        for (si, sj) in self.spectra[i].iter().zip(&self.spectra[j]) {
            for ((c, a), b) in cross.iter_mut().zip(si).zip(sj) {
                *c = a * b.conj();
            }
            phat_normalize(&mut cross);
            for (a, c) in acc.iter_mut().zip(&cross) {
                *a += c;
            }
        }
        inverse_plan(n).process(&mut acc);
        let scale = 1.0 / (n * windows) as f64;
        let half = n / 2;
        let full = (0..n).map(|k| acc[(k + half) % n].re * scale).collect();
        CorrelationVector { full, n_central: self.config.n_central, fs: self.fs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn identical_frames_peak_at_zero() {
        let x = noise(8000, 1);
        let c = gcc_phat(&x, &x, 16000.0, &GccConfig::default()).unwrap();
        assert_eq!(c.peak_lag(512), 0);
        assert!((c.full[512] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn central_slice_bounds() {
        let x = noise(2048, 2);
        let c = gcc_phat(&x, &x, 16000.0, &GccConfig::default()).unwrap();
        assert_eq!(c.central().len(), 200);
        assert_eq!(c.central()[100], c.full[512]);
        assert_eq!(c.lag_of(512 - 100), -100);
    }

    #[test]
    fn phat_unit_magnitude() {
        let mut s: Vec<Complex64> =
            noise(64, 3).chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
        s.push(Complex64::new(0.0, 0.0));
        phat_normalize(&mut s);
        for c in &s[..s.len() - 1] {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(s[s.len() - 1].norm(), 0.0);
    }

    #[test]
    fn errors() {
        let x = noise(1000, 4);
        assert!(matches!(
            gcc_phat(&x, &x, 16000.0, &GccConfig::default()),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(gcc_phat(&x, &x[..999], 16000.0, &GccConfig::default()).is_err());
        let bad = GccConfig { fft_size: 1024, n_central: 2000 };
        assert!(gcc_phat(&noise(2048, 5), &noise(2048, 6), 16000.0, &bad).is_err());
    }
}
