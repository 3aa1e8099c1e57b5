//! Synthetic stand-ins for the emotion corpora.
//!
//! The visual generator renders one coloured pattern per class: a blob at a
//! class-specific position over an oriented grating.
//! Dataset B sees the same classes through a global style transform (a
//! rotation and zoom of the sampling grid, a colour mix towards the next
//! class's hue and a brightness lift), so both datasets share semantics but
//! differ in distribution. The audio generator synthesizes harmonic tones
//! with class-specific pitch, timbre and tremolo and runs them through the
//! real log-Mel front-end.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Modality, Sample};
use crate::audio::{extract_segments, Waveform};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

pub const SYNTH_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub per_class: usize,
    /// Strength of dataset B's style transform; 0 makes B a copy of A.
    pub shift: f64,
    /// Per-sample variation: pixel noise std, which also scales blob position jitter.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            per_class: 40,
            shift: 0.5,
            noise: 0.1,
        }
    }
}

const CLASS_COLORS: [[f64; 3]; NUM_CLASSES] = [
    [0.9, 0.2, 0.2],
    [0.3, 0.8, 0.2],
    [0.3, 0.3, 0.9],
    [0.9, 0.8, 0.2],
    [0.6, 0.3, 0.8],
    [0.2, 0.8, 0.8],
];

/// Distance of each class's blob from the image centre, its width and the
/// largest per-sample displacement, in image-width units.
const BLOB_RADIUS: f64 = 0.25;
const BLOB_WIDTH: f64 = 0.1;
const BLOB_JITTER: f64 = 0.05;

struct Style {
    rotation: f64,
    zoom: f64,
    color_mix: f64,
    brightness: f64,
}

impl Style {
    fn identity() -> Self {
        Self::shifted(0.0)
    }

    fn shifted(shift: f64) -> Self {
        Self {
            rotation: 0.8 * shift,
            zoom: 1.0 + 0.3 * shift,
            color_mix: 0.8 * shift,
            brightness: 0.4 * shift,
        }
    }
}

fn render(class: usize, phase: f64, offset: (f64, f64), style: &Style, noise: f64, rng: &mut impl Rng) -> Tensor {
    let s = SYNTH_SIZE;
    let theta = class as f64 * PI / NUM_CLASSES as f64;
    let freq = 3.0 + (class % 3) as f64;
    let (sb, cb) = libm::sincos(2.0 * PI * class as f64 / NUM_CLASSES as f64);
    let blob = (BLOB_RADIUS * cb + offset.0, BLOB_RADIUS * sb + offset.1);
    let next = CLASS_COLORS[(class + 1) % NUM_CLASSES];
    let color: Vec<f64> = (0..3)
        .map(|ch| (1.0 - style.color_mix) * CLASS_COLORS[class][ch] + style.color_mix * next[ch])
        .collect();
    let (sr, cr) = libm::sincos(style.rotation);
    let (st, ct) = libm::sincos(theta);
    let gain = 1.0 - style.brightness;
    let pixel_noise = if noise > 0.0 {
        Some(Normal::new(0.0, noise).expect("positive std"))
    } else {
        None
    };
    let mut out = Tensor::zeros([3, s, s]);
    for y in 0..s {
        for x in 0..s {
            let u0 = (x as f64 + 0.5) / s as f64 - 0.5;
            let v0 = (y as f64 + 0.5) / s as f64 - 0.5;
            let u = (cr * u0 - sr * v0) / style.zoom;
            let v = (sr * u0 + cr * v0) / style.zoom;
            let grating = 0.5 + 0.5 * libm::sin(2.0 * PI * freq * (u * ct + v * st) + phase);
            let r2 = (u - blob.0) * (u - blob.0) + (v - blob.1) * (v - blob.1);
            let spot = libm::exp(-r2 / (2.0 * BLOB_WIDTH * BLOB_WIDTH));
            let p = 0.6 * spot + 0.4 * grating;
            for (ch, c) in color.iter().enumerate() {
                let mut val = style.brightness + gain * c * p;
                if let Some(d) = &pixel_noise {
                    val += d.sample(rng);
                }
                out.data_mut()[(ch * s + y) * s + x] = val.clamp(0.0, 1.0);
            }
        }
    }
    out
}

fn render_domain(spec: &SynthSpec, style: &Style, id: &str, seed: u64) -> Result<Dataset> {
    let mut r = rng::seeded(seed);
    let wobble = (BLOB_JITTER * 10.0 * spec.noise).min(BLOB_JITTER);
    let mut samples = Vec::with_capacity(spec.per_class * NUM_CLASSES);
    for n in 0..spec.per_class * NUM_CLASSES {
        let label = n % NUM_CLASSES;
        let offset = if spec.noise > 0.0 {
            (r.random_range(-wobble..=wobble), r.random_range(-wobble..=wobble))
        } else {
            (0.0, 0.0)
        };
        let phase = label as f64;
        samples.push(Sample {
            input: render(label, phase, offset, style, spec.noise, &mut r),
            label,
            group: n,
        });
    }
    Dataset::new(id, Modality::Visual, samples)
}

/// Two class-balanced 64×64×3 visual datasets, `A` in the reference style
/// and `B` in the shifted style. Deterministic per seed.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    if spec.per_class < 2 {
        return Err(Error::config("per_class", format!("need at least 2 samples per class, got {}", spec.per_class)));
    }
    if !(spec.shift >= 0.0 && spec.shift <= 1.0) {
        return Err(Error::config("shift", format!("must lie in [0, 1], got {}", spec.shift)));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::config("noise", format!("must be non-negative, got {}", spec.noise)));
    }
    // Both domains draw the same per-sample randomness so that shift = 0
    // reproduces A exactly.
    let a = render_domain(spec, &Style::identity(), "synth-a", seed)?;
    let b = render_domain(spec, &Style::shifted(spec.shift), "synth-b", seed)?;
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthAudioSpec {
    pub per_class: usize,
    pub duration_ms: u32,
    /// Pitch jitter fraction and white-noise amplitude.
    pub noise: f64,
    /// Moves every class's pitch up and flattens its timbre.
    pub shift: f64,
}

impl Default for SynthAudioSpec {
    fn default() -> Self {
        Self {
            per_class: 10,
            duration_ms: 1000,
            noise: 0.1,
            shift: 0.0,
        }
    }
}

const AUDIO_RATE: u32 = 16_000;

fn tone(class: usize, spec: &SynthAudioSpec, r: &mut impl Rng) -> Vec<f64> {
    let n = (AUDIO_RATE as usize * spec.duration_ms as usize) / 1000;
    let jitter = 1.0 + spec.noise * r.random_range(-0.5..0.5);
    let f0 = (140.0 + 45.0 * class as f64) * (1.0 + 0.25 * spec.shift) * jitter;
    let decay = 0.35 + 0.1 * (class % 3) as f64 + 0.3 * spec.shift;
    let tremolo = 2.0 + class as f64;
    let harmonics = 4 + class % 4;
    let white = Normal::new(0.0, 1.0).expect("unit normal");
    let rate = AUDIO_RATE as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let mut v = 0.0;
            let mut amp = 1.0;
            for h in 1..=harmonics {
                v += amp * libm::sin(2.0 * PI * f0 * h as f64 * t);
                amp *= decay;
            }
            let env = 0.6 + 0.4 * libm::sin(2.0 * PI * tremolo * t);
            0.2 * env * v + 0.02 * spec.noise * white.sample(r)
        })
        .collect()
}

/// The labelled 16 kHz utterances behind [`synth_audio`], in utterance order.
pub fn synth_audio_waveforms(spec: &SynthAudioSpec, seed: u64) -> Result<Vec<(Waveform, usize)>> {
    if spec.per_class < 1 {
        return Err(Error::config("per_class", "need at least one utterance per class"));
    }
    let mut r = rng::seeded(seed);
    (0..spec.per_class * NUM_CLASSES)
        .map(|u| {
            let label = u % NUM_CLASSES;
            Ok((Waveform::new(tone(label, spec, &mut r), AUDIO_RATE)?, label))
        })
        .collect()
}

/// An audio-modality dataset of log-Mel segments cut from synthetic
/// utterances. All segments of utterance `u` carry group `u`.
pub fn synth_audio(spec: &SynthAudioSpec, id: &str, seed: u64) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (u, (wave, label)) in synth_audio_waveforms(spec, seed)?.into_iter().enumerate() {
        for seg in extract_segments(&wave, u)? {
            samples.push(Sample {
                input: seg.to_input(),
                label,
                group: u,
            });
        }
    }
    Dataset::new(id, Modality::Audio, samples)
}
