//! Speech front-end: waveform → Hamming-windowed frames → log-Mel
//! spectrogram → static/Δ/ΔΔ stack → overlapping 64-frame segments.
//!
//! At 16 kHz a 25 ms window is 400 samples and the 10 ms hop is 160, so a
//! 655 ms signal yields exactly 64 frames, i.e. one segment.

mod fft;
mod mel;

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use fft::{fft_in_place, power_spectrum};
pub use mel::{hz_to_mel, log_mel, mel_to_hz, MelConfig, MelFilterbank, LOG_FLOOR_ENERGY};

pub const MIN_SAMPLE_RATE: u32 = 16_000;
pub const WINDOW_MS: u32 = 25;
pub const HOP_MS: u32 = 10;
pub const DELTA_WINDOW: usize = 2;
pub const SEGMENT_FRAMES: usize = 64;
pub const SEGMENT_OVERLAP: usize = 30;

/// Mono audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate < MIN_SAMPLE_RATE {
            return Err(Error::config(
                "sample_rate",
                format!("{sample_rate} Hz is below {MIN_SAMPLE_RATE} Hz; the mel bank needs 8 kHz of bandwidth"),
            ));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::data(Some(i), "non-finite audio sample"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate as f64
    }
}

fn ms_to_samples(ms: u32, sample_rate: u32) -> usize {
    ((ms as u64 * sample_rate as u64 + 500) / 1000) as usize
}

/// Symmetric Hamming window `0.54 − 0.46·cos(2πn / (N − 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return alloc::vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * libm::cos(2.0 * PI * n as f64 / (len - 1) as f64))
        .collect()
}

/// Splits the signal into Hamming-windowed frames `[T, window_samples]`
/// with `T = floor((len − window) / hop) + 1`. The partial tail is dropped.
pub fn frame_signal(w: &Waveform, window_ms: u32, hop_ms: u32) -> Result<Tensor> {
    let win = ms_to_samples(window_ms, w.sample_rate);
    let hop = ms_to_samples(hop_ms, w.sample_rate);
    if win == 0 || hop == 0 {
        return Err(Error::config("window_ms", "window and hop must span at least one sample"));
    }
    let len = w.samples.len();
    if len < win {
        return Err(Error::TooShort {
            what: "signal",
            len,
            needed: win,
        });
    }
    let t = (len - win) / hop + 1;
    let window = hamming(win);
    let mut frames = Tensor::zeros([t, win]);
    for f in 0..t {
        let src = &w.samples[f * hop..f * hop + win];
        let dst = &mut frames.data_mut()[f * win..(f + 1) * win];
        for ((d, s), h) in dst.iter_mut().zip(src).zip(&window) {
            *d = s * h;
        }
    }
    Ok(frames)
}

/// Regression deltas along the time axis of `[F, T]` features:
/// `d_t = Σₙ n·(c_{t+n} − c_{t−n}) / (2·Σₙ n²)`, indices clamped at the edges.
pub fn delta(feat: &Tensor, window: usize) -> Result<Tensor> {
    if feat.rank() != 2 {
        return Err(Error::dim("delta", format!("features must be [F, T], got {:?}", feat.shape())));
    }
    if window == 0 {
        return Err(Error::config("delta_window", "must be positive"));
    }
    let (f, t) = (feat.shape()[0], feat.shape()[1]);
    if t < 2 * window + 1 {
        return Err(Error::TooShort {
            what: "feature sequence",
            len: t,
            needed: 2 * window + 1,
        });
    }
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Tensor::zeros([f, t]);
    for row in 0..f {
        let c = feat.row(row);
        for i in 0..t {
            let mut acc = 0.0;
            for n in 1..=window {
                let ahead = (i + n).min(t - 1);
                let behind = i.saturating_sub(n);
                acc += n as f64 * (c[ahead] - c[behind]);
            }
            out.data_mut()[row * t + i] = acc / denom;
        }
    }
    Ok(out)
}

/// Stacks static, Δ and ΔΔ coefficients into `[F, T, 3]`.
pub fn stack_deltas(static_feat: &Tensor, window: usize) -> Result<Tensor> {
    let d1 = delta(static_feat, window)?;
    let d2 = delta(&d1, window)?;
    let (f, t) = (static_feat.shape()[0], static_feat.shape()[1]);
    let mut out = Tensor::zeros([f, t, 3]);
    for i in 0..f * t {
        let dst = &mut out.data_mut()[i * 3..i * 3 + 3];
        dst[0] = static_feat.data()[i];
        dst[1] = d1.data()[i];
        dst[2] = d2.data()[i];
    }
    Ok(out)
}

/// One `[F, T, 3]` block of static/Δ/ΔΔ log-Mel features.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSegment {
    pub data: Tensor,
    pub utterance: usize,
    pub start_frame: usize,
}

impl MelSegment {
    /// Channel-first `[3, F, T]` layout consumed by the network.
    pub fn to_input(&self) -> Tensor {
        let (f, t, c) = (self.data.shape()[0], self.data.shape()[1], self.data.shape()[2]);
        let mut out = Tensor::zeros([c, f, t]);
        for i in 0..f * t {
            for ch in 0..c {
                out.data_mut()[ch * f * t + i] = self.data.data()[i * c + ch];
            }
        }
        out
    }
}

/// Number of `length`-frame windows with the given overlap in `t` frames.
pub fn segment_count(t: usize, length: usize, overlap: usize) -> usize {
    if t < length {
        0
    } else {
        (t - length) / (length - overlap) + 1
    }
}

/// Cuts `[F, T, C]` features into windows of `length` frames starting every
/// `length − overlap` frames. The tail that does not fill a window is dropped.
pub fn segment(spec3: &Tensor, length: usize, overlap: usize, utterance: usize) -> Result<Vec<MelSegment>> {
    if spec3.rank() != 3 {
        return Err(Error::dim("segment", format!("features must be [F, T, C], got {:?}", spec3.shape())));
    }
    if overlap >= length {
        return Err(Error::config("segment_overlap", format!("overlap {overlap} must be below length {length}")));
    }
    let (f, t, c) = (spec3.shape()[0], spec3.shape()[1], spec3.shape()[2]);
    if t < length {
        return Err(Error::TooShort {
            what: "utterance",
            len: t,
            needed: length,
        });
    }
    let hop = length - overlap;
    let count = segment_count(t, length, overlap);
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let start = s * hop;
        let mut data = Tensor::zeros([f, length, c]);
        for row in 0..f {
            let src = &spec3.data()[(row * t + start) * c..(row * t + start + length) * c];
            data.data_mut()[row * length * c..(row + 1) * length * c].copy_from_slice(src);
        }
        out.push(MelSegment {
            data,
            utterance,
            start_frame: start,
        });
    }
    Ok(out)
}

/// Full front-end for one utterance with the default 25 ms / 10 ms framing,
/// 64 mel bands between 20 Hz and 8 kHz, N = 2 deltas and 64-frame segments
/// overlapping by 30 frames.
pub fn extract_segments(w: &Waveform, utterance: usize) -> Result<Vec<MelSegment>> {
    let frames = frame_signal(w, WINDOW_MS, HOP_MS)?;
    let spec = log_mel(&frames, w.sample_rate, &MelConfig::default())?;
    let spec3 = stack_deltas(&spec, DELTA_WINDOW)?;
    segment(&spec3, SEGMENT_FRAMES, SEGMENT_OVERLAP, utterance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn silence(ms: usize) -> Waveform {
        Waveform::new(alloc::vec![0.0; ms * 16], 16_000).unwrap()
    }

    #[test]
    fn framing_arithmetic() {
        assert_eq!(frame_signal(&silence(655), 25, 10).unwrap().shape(), &[64, 400]);
        assert_eq!(frame_signal(&silence(25), 25, 10).unwrap().shape()[0], 1);
        assert_eq!(frame_signal(&silence(654), 25, 10).unwrap().shape()[0], 63);
        assert!(matches!(
            frame_signal(&silence(24), 25, 10),
            Err(Error::TooShort { what: "signal", .. })
        ));
    }

    #[test]
    fn low_sample_rate_rejected() {
        assert!(Waveform::new(alloc::vec![0.0; 100], 8000).is_err());
        assert!(Waveform::new(alloc::vec![0.0; 100], 44_100).is_ok());
    }

    #[test]
    fn zero_signal_hits_floor() {
        let frames = frame_signal(&silence(100), 25, 10).unwrap();
        let spec = log_mel(&frames, 16_000, &MelConfig::default()).unwrap();
        let floor = libm::log(LOG_FLOOR_ENERGY);
        assert!(spec.data().iter().all(|&v| v == floor));
    }

    #[test]
    fn sine_peaks_at_nearest_center() {
        let sr = 16_000;
        let samples: Vec<f64> = (0..sr as usize / 2)
            .map(|n| 0.5 * libm::sin(2.0 * PI * 1000.0 * n as f64 / sr as f64))
            .collect();
        let w = Waveform::new(samples, sr).unwrap();
        let frames = frame_signal(&w, 25, 10).unwrap();
        let spec = log_mel(&frames, sr, &MelConfig::default()).unwrap();
        let bank = MelFilterbank::new(&MelConfig::default(), 512, sr).unwrap();
        let nearest = (0..64)
            .min_by(|&a, &b| {
                (bank.centers_hz[a] - 1000.0).abs().total_cmp(&(bank.centers_hz[b] - 1000.0).abs())
            })
            .unwrap();
        let t = spec.shape()[1];
        for frame in 0..t {
            let best = (0..64)
                .max_by(|&a, &b| spec.data()[a * t + frame].total_cmp(&spec.data()[b * t + frame]))
                .unwrap();
            assert_eq!(best, nearest);
        }
    }

    #[test]
    fn delta_of_constant_and_ramp() {
        let c = Tensor::full([2, 10], 3.5);
        assert!(delta(&c, 2).unwrap().data().iter().all(|&v| v == 0.0));
        let ramp = Tensor::from_fn([1, 12], |i| i as f64);
        let d = delta(&ramp, 2).unwrap();
        for t in 2..10 {
            assert_eq!(d.data()[t], 1.0);
        }
        assert!(matches!(delta(&Tensor::zeros([1, 4]), 2), Err(Error::TooShort { .. })));
    }

    #[test]
    fn delta_matches_direct_formula() {
        let mut r = rng::seeded(5);
        let feat = Tensor::from_fn([3, 9], |_| r.random_range(-5.0..5.0));
        let d = delta(&feat, 2).unwrap();
        let at = |row: usize, t: isize| feat.data()[row * 9 + t.clamp(0, 8) as usize];
        for row in 0..3 {
            for t in 0..9isize {
                let expect = (1.0 * (at(row, t + 1) - at(row, t - 1)) + 2.0 * (at(row, t + 2) - at(row, t - 2))) / 10.0;
                assert!((d.data()[row * 9 + t as usize] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn segment_counts() {
        let mk = |t| Tensor::zeros([64, t, 3]);
        assert_eq!(segment(&mk(64), 64, 30, 0).unwrap().len(), 1);
        let two = segment(&mk(98), 64, 30, 0).unwrap();
        assert_eq!(two.iter().map(|s| s.start_frame).collect::<Vec<_>>(), alloc::vec![0, 34]);
        assert_eq!(segment(&mk(97), 64, 30, 0).unwrap().len(), 1);
        assert!(matches!(segment(&mk(63), 64, 30, 0), Err(Error::TooShort { what: "utterance", .. })));
    }

    #[test]
    fn segment_copies_the_right_frames() {
        let spec3 = Tensor::from_fn([2, 100, 3], |i| i as f64);
        let segs = segment(&spec3, 64, 30, 7).unwrap();
        let s = &segs[1];
        assert_eq!(s.utterance, 7);
        // mel bin 1, frame 34 + 5, channel 2
        assert_eq!(s.data.data()[(64 + 5) * 3 + 2], spec3.data()[(100 + 39) * 3 + 2]);
        let input = s.to_input();
        assert_eq!(input.shape(), &[3, 2, 64]);
        assert_eq!(input.data()[2 * 128 + 64 + 5], spec3.data()[(100 + 39) * 3 + 2]);
    }

    #[test]
    fn end_to_end_655ms() {
        let mut r = rng::seeded(1);
        let samples: Vec<f64> = (0..10_480).map(|_| r.random_range(-0.5..0.5)).collect();
        let segs = extract_segments(&Waveform::new(samples, 16_000).unwrap(), 3).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].data.shape(), &[64, 64, 3]);
        assert!(segs[0].data.is_finite());
    }
}
