use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SPEED_OF_SOUND;
use crate::error::{Error, Result};
use crate::scene::{distance, Point3, RoomSpec};

/// Wall absorption coefficient that yields the room's T60 under Eyring's
/// reverberation formula, `alpha = 1 - exp(-0.161 V / (S T60))`.
pub fn eyring_absorption(room: &RoomSpec) -> Result<f64> {
    room.validate()?;
    let alpha = 1.0 - (-0.161 * room.volume() / (room.surface() * room.t60)).exp();
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::InfeasibleAbsorption { alpha })
    }
}

/// How the wall absorption is derived from the room's T60.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorptionModel {
    /// Eyring's diffuse-field formula, used as is.
    Eyring,
    /// Eyring's value refined until a reference impulse response of the
    /// room decays at the requested T60. Specular shoebox reflections are
    /// not diffuse, so the plain formula gives slower decays, most visibly
    /// in rooms with low ceilings.
    #[default]
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RirConfig {
    pub speed_of_sound: f64,
    /// Maximum total number of wall reflections per image. `None` keeps
    /// every image whose path fits in the impulse response.
    pub max_order: Option<u32>,
    /// Impulse response length as a multiple of T60.
    pub length_factor: f64,
    /// Apply the 100 Hz high-pass of the original image method, which
    /// removes the low-frequency build-up of coincident positive taps.
    pub highpass: bool,
    pub absorption: AbsorptionModel,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self { speed_of_sound: SPEED_OF_SOUND, max_order: None, length_factor: 1.25, highpass: true, absorption: AbsorptionModel::Calibrated }
    }
}

impl RirConfig {
    /// Anechoic propagation: the direct path only.
    pub fn direct_path_only() -> Self {
        Self { max_order: Some(0), highpass: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub fs: f64,
}

impl Rir {
    pub fn first_nonzero(&self) -> Option<usize> {
        self.taps.iter().position(|&v| v != 0.0)
    }
}

/// Relative tolerance of the calibrated decay time.
const CALIBRATION_TOLERANCE: f64 = 0.02;
const CALIBRATION_ROUNDS: usize = 6;

/// Wall absorption coefficient used for `room` under `config`.
pub fn wall_absorption(room: &RoomSpec, fs: f64, config: &RirConfig) -> Result<f64> {
    let alpha = eyring_absorption(room)?;
    if config.absorption == AbsorptionModel::Eyring || config.max_order.is_some() {
        return Ok(alpha);
    }
    // Reference pair well inside the room, away from its symmetry planes.
    let d = room.dims();
    let source = [0.27 * d[0], 0.36 * d[1], 0.41 * d[2]];
    let mic = [0.71 * d[0], 0.62 * d[1], 0.57 * d[2]];
    // Decay time scales inversely with the per-reflection energy loss
    // -ln(1 - alpha).
    let mut loss = -(1.0 - alpha).ln();
    for _ in 0..CALIBRATION_ROUNDS {
        let alpha = 1.0 - (-loss).exp();
        let rir = simulate_rir_with_absorption(room, &source, &mic, fs, alpha, config)?;
        let Some(measured) = schroeder_t20(&rir.taps, fs) else {
            break;
        };
        let ratio = measured / room.t60;
        loss *= ratio;
        if (ratio - 1.0).abs() < CALIBRATION_TOLERANCE {
            break;
        }
    }
    let alpha = 1.0 - (-loss).exp();
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::InfeasibleAbsorption { alpha })
    }
}

/// Decay time from a line fit to the Schroeder curve between -5 and
/// -25 dB, extrapolated to 60 dB.
fn schroeder_t20(taps: &[f64], fs: f64) -> Option<f64> {
    let mut edc: Vec<f64> = taps.iter().map(|v| v * v).collect();
    for i in (0..edc.len().saturating_sub(1)).rev() {
        edc[i] += edc[i + 1];
    }
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if (-25.0..=-5.0).contains(&db) {
            let t = i as f64 / fs;
            n += 1.0;
            sx += t;
            sy += db;
            sxx += t * t;
            sxy += t * db;
        }
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (n >= 2.0 && slope < 0.0).then(|| -60.0 / slope)
}

/// Image-source impulse response between `source` and `mic` in a shoebox
/// room with uniform wall absorption from [`wall_absorption`].
pub fn simulate_rir(
    room: &RoomSpec,
    source: &Point3,
    mic: &Point3,
    fs: f64,
    config: &RirConfig,
) -> Result<Rir> {
    let alpha = wall_absorption(room, fs, config)?;
    simulate_rir_with_absorption(room, source, mic, fs, alpha, config)
}

/// Image-source impulse response for an explicit absorption coefficient.
///
/// Each image contributes `beta^k / (4 pi d)` at sample `round(fs d / c)`,
/// where `k` is its reflection count, `d` its path length and
/// `beta = sqrt(1 - alpha)` the pressure reflection coefficient. The
/// response is `ceil(length_factor * t60 * fs)` samples long (extended if
/// needed to hold the direct path).
pub fn simulate_rir_with_absorption(
    room: &RoomSpec,
    source: &Point3,
    mic: &Point3,
    fs: f64,
    alpha: f64,
    config: &RirConfig,
) -> Result<Rir> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::InvalidConfig(format!("sample rate must be positive, got {fs}")));
    }
    if !room.contains(source) || !room.contains(mic) {
        return Err(Error::DegenerateGeometry(format!(
            "source {source:?} and mic {mic:?} must both lie inside the room"
        )));
    }
    let direct = distance(source, mic);
    if direct < 1e-9 {
        return Err(Error::DegenerateGeometry("source coincides with microphone".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InfeasibleAbsorption { alpha });
    }
    let c = config.speed_of_sound;
    let beta = (1.0 - alpha).sqrt();

    let direct_tap = (fs * direct / c).round() as usize;
    let len = ((config.length_factor * room.t60 * fs).ceil() as usize).max(direct_tap + 1);
    let max_dist = c * len as f64 / fs;
    let max_order = config.max_order.map_or(u32::MAX, |o| o);

    // Per-axis image offsets (mic-relative) and their reflection counts.
    let dims = room.dims();
    let axes: Vec<Vec<(f64, u32)>> = (0..3)
        .map(|k| {
            let n_max = (max_dist / (2.0 * dims[k])).ceil() as i64 + 1;
            let mut v = Vec::new();
            for q in 0..2i64 {
                for n in -n_max..=n_max {
                    let coord = (1 - 2 * q) as f64 * source[k] + 2.0 * n as f64 * dims[k];
                    let refl = ((n - q).abs() + n.abs()) as u32;
                    let offset = coord - mic[k];
                    if offset.abs() <= max_dist && refl <= max_order {
                        v.push((offset, refl));
                    }
                }
            }
            v
        })
        .collect();

    let max_refl = axes.iter().map(|a| a.iter().map(|e| e.1).max().unwrap_or(0)).sum::<u32>();
    let mut beta_pow = Vec::with_capacity(max_refl as usize + 1);
    let mut b = 1.0;
    for _ in 0..=max_refl {
        beta_pow.push(b);
        b *= beta;
    }

    let mut taps = vec![0.0; len];
    let max_d2 = max_dist * max_dist;
    let scale = fs / c;
    for &(dx, kx) in &axes[0] {
        let dx2 = dx * dx;
        for &(dy, ky) in &axes[1] {
            let dxy2 = dx2 + dy * dy;
            if dxy2 > max_d2 || kx + ky > max_order {
                continue;
            }
            for &(dz, kz) in &axes[2] {
                let k = kx + ky + kz;
                let d2 = dxy2 + dz * dz;
                if d2 > max_d2 || k > max_order {
                    continue;
                }
                let d = d2.sqrt();
                let tap = (scale * d).round() as usize;
                if tap < len {
                    taps[tap] += beta_pow[k as usize] / (4.0 * PI * d);
                }
            }
        }
    }
    if config.highpass {
        highpass_in_place(&mut taps, fs, 100.0);
    }
    Ok(Rir { taps, fs })
}

/// Allen & Berkley's two-pole, two-zero high-pass (zeros at DC).
fn highpass_in_place(x: &mut [f64], fs: f64, cutoff: f64) {
    let w = 2.0 * PI * cutoff / fs;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y0 = b1 * y1 + b2 * y2 + *v;
        *v = y0 + a1 * y1 + r1 * y2;
        y2 = y1;
        y1 = y0;
    }
}
