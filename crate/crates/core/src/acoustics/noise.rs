use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::MultichannelSignal;
use crate::dsp::mean_power;
use crate::error::{Error, Result};

/// SNR sentinel meaning "leave the signal untouched".
pub const NO_NOISE: f64 = f64::INFINITY;

/// Adds independent white Gaussian noise to every channel so that each
/// channel's signal-to-noise ratio is `snr_db`. Channels draw consecutively
/// from one seeded stream.
pub fn add_noise(
    signals: &MultichannelSignal,
    snr_db: f64,
    rng_seed: u64,
) -> Result<MultichannelSignal> {
    if snr_db == f64::INFINITY {
        return Ok(signals.clone());
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidConfig("snr_db is NaN".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut channels = Vec::with_capacity(signals.num_channels());
    for (m, ch) in signals.channels.iter().enumerate() {
        let power = mean_power(ch);
        if power == 0.0 {
            return Err(Error::SilentChannel { channel: m });
        }
        let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        channels.push(
            ch.iter()
                .map(|&x| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    x + sigma * n
                })
                .collect(),
        );
    }
    Ok(MultichannelSignal { channels, fs: signals.fs })
}
