use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::fft::power_spectrum;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Natural-log floor applied to mel energies: `ln(max(E, 1e-10))`.
pub const LOG_FLOOR_ENERGY: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 64,
            fmin: 20.0,
            fmax: 8000.0,
        }
    }
}

/// Triangular filters on the mel scale with area (Slaney) normalisation.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `[n_mels, n_fft / 2 + 1]`
    pub weights: Tensor,
    /// Centre frequency of each filter in Hz.
    pub centers_hz: Vec<f64>,
    pub n_fft: usize,
    pub sample_rate: u32,
}

impl MelFilterbank {
    pub fn new(config: &MelConfig, n_fft: usize, sample_rate: u32) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if config.fmax > nyquist {
            return Err(Error::config(
                "fmax",
                format!("{} Hz exceeds the Nyquist frequency {nyquist} Hz", config.fmax),
            ));
        }
        if !(config.fmin >= 0.0 && config.fmin < config.fmax) {
            return Err(Error::config("fmin", format!("need 0 <= fmin < fmax, got {}", config.fmin)));
        }
        if config.n_mels == 0 {
            return Err(Error::config("n_mels", "must be positive"));
        }
        let (lo, hi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax));
        let edges: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let bins = n_fft / 2 + 1;
        let bin_hz = |k: usize| k as f64 * sample_rate as f64 / n_fft as f64;
        let mut weights = Tensor::zeros([config.n_mels, bins]);
        for m in 0..config.n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (right - left);
            let row = &mut weights.data_mut()[m * bins..(m + 1) * bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = bin_hz(k);
                let rise = (f - left) / (center - left);
                let fall = (right - f) / (right - center);
                *w = rise.min(fall).max(0.0) * norm;
            }
        }
        Ok(Self {
            weights,
            centers_hz: edges[1..=config.n_mels].to_vec(),
            n_fft,
            sample_rate,
        })
    }
}

/// Log mel energies `[n_mels, T]` of Hamming-windowed frames `[T, window]`.
///
/// Each frame's power spectrum `|X_k|²` is taken with an FFT of the next
/// power of two at or above the window length.
pub fn log_mel(frames: &Tensor, sample_rate: u32, config: &MelConfig) -> Result<Tensor> {
    if frames.rank() != 2 {
        return Err(Error::dim("log_mel", format!("frames must be [T, window], got {:?}", frames.shape())));
    }
    let (t, window) = (frames.shape()[0], frames.shape()[1]);
    let n_fft = window.next_power_of_two();
    let bank = MelFilterbank::new(config, n_fft, sample_rate)?;
    let bins = n_fft / 2 + 1;
    let mut power = vec![0.0; bins];
    let mut out = Tensor::zeros([config.n_mels, t]);
    let floor = libm::log(LOG_FLOOR_ENERGY);
    for frame in 0..t {
        power_spectrum(frames.row(frame), n_fft, &mut power);
        for m in 0..config.n_mels {
            let w = &bank.weights.data()[m * bins..(m + 1) * bins];
            let e: f64 = w.iter().zip(&power).map(|(a, b)| a * b).sum();
            out.data_mut()[m * t + frame] = if e > LOG_FLOOR_ENERGY { libm::log(e) } else { floor };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trip() {
        for hz in [20.0, 440.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.1);
    }

    #[test]
    fn filterbank_rows_and_band_limits() {
        let bank = MelFilterbank::new(&MelConfig::default(), 512, 16000).unwrap();
        let bins = 257;
        for m in 0..64 {
            let row = &bank.weights.data()[m * bins..(m + 1) * bins];
            assert!(row.iter().sum::<f64>() > 0.0, "row {m} empty");
            for (k, &w) in row.iter().enumerate() {
                let f = k as f64 * 16000.0 / 512.0;
                if f < 20.0 || f > 8000.0 {
                    assert_eq!(w, 0.0);
                }
            }
        }
        assert!(bank.centers_hz.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fmax_above_nyquist_rejected() {
        let cfg = MelConfig { fmax: 9000.0, ..MelConfig::default() };
        assert!(matches!(MelFilterbank::new(&cfg, 512, 16000), Err(Error::Config { field: "fmax", .. })));
    }
}
