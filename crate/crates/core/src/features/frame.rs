use serde::{Deserialize, Serialize};

use crate::acoustics::MultichannelSignal;
use crate::error::{Error, Result};

/// One analysis window taken from every channel at the same offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichannelFrame {
    pub channels: Vec<Vec<f64>>,
    pub fs: f64,
    /// Start of the window in the source recording, in samples.
    pub offset: usize,
}

impl MultichannelFrame {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The same frame with channels reordered: channel `k` of the result is
    /// channel `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            channels: order.iter().map(|&k| self.channels[k].clone()).collect(),
            fs: self.fs,
            offset: self.offset,
        }
    }
}

/// Picks the non-overlapping window of `frame_ms` with the highest mean
/// energy across channels. Ties go to the earliest window.
pub fn extract_frame(signals: &MultichannelSignal, frame_ms: f64) -> Result<MultichannelFrame> {
    let frame_len = (signals.fs * frame_ms / 1000.0).round() as usize;
    if frame_len == 0 {
        return Err(Error::InvalidConfig(format!("frame of {frame_ms} ms is empty")));
    }
    let len = signals.len();
    if len < frame_len || signals.num_channels() == 0 {
        return Err(Error::SignalTooShort { len, required: frame_len });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..len / frame_len {
        let start = k * frame_len;
        let energy: f64 = signals
            .channels
            .iter()
            .map(|ch| ch[start..start + frame_len].iter().map(|v| v * v).sum::<f64>())
            .sum();
        if energy > best.1 {
            best = (start, energy);
        }
    }
    let start = best.0;
    Ok(MultichannelFrame {
        channels: signals.channels.iter().map(|ch| ch[start..start + frame_len].to_vec()).collect(),
        fs: signals.fs,
        offset: start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(channels: Vec<Vec<f64>>) -> MultichannelSignal {
        MultichannelSignal::new(channels, 16000.0).unwrap()
    }

    #[test]
    fn frame_length_follows_sample_rate() {
        let s = signal(vec![vec![0.1; 32000]; 3]);
        let f = extract_frame(&s, 500.0).unwrap();
        assert_eq!(f.len(), 8000);
        assert_eq!(f.num_channels(), 3);
    }

    #[test]
    fn loudest_window_wins() {
        let mut ch = vec![0.0; 32000];
        for v in &mut ch[20000..26000] {
            *v = 1.0;
        }
        let s = signal(vec![ch.clone(), ch]);
        let f = extract_frame(&s, 500.0).unwrap();
        assert!(f.offset >= 16000);
        assert_eq!(f.offset, 16000);
    }

    #[test]
    fn constant_energy_takes_first_window() {
        let s = signal(vec![vec![0.5; 40000]]);
        assert_eq!(extract_frame(&s, 500.0).unwrap().offset, 0);
    }

    #[test]
    fn short_signal_is_rejected() {
        let s = signal(vec![vec![0.5; 7999]]);
        assert!(matches!(extract_frame(&s, 500.0), Err(Error::SignalTooShort { .. })));
        let s = signal(vec![vec![0.5; 8000]]);
        assert!(extract_frame(&s, 500.0).is_ok());
    }
}
