use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Sample;

/// Bilinear resize of an interleaved `[h, w, c]` image to `[c, out_h, out_w]`.
///
/// Uses pixel-centre alignment (`src = (dst + 0.5)·scale − 0.5`, clamped to
/// the border), so outputs stay inside the input's value range and a linear
/// ramp stays linear away from the edges. The aspect ratio is not preserved.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, c: usize, out_h: usize, out_w: usize) -> Result<Tensor> {
    if h == 0 || w == 0 || c == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::dim("resize_bilinear", "all sizes must be positive"));
    }
    if src.len() != h * w * c {
        return Err(Error::dim(
            "resize_bilinear",
            format!("buffer holds {} values, {h}×{w}×{c} needs {}", src.len(), h * w * c),
        ));
    }
    let coords = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = s as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let ys = coords(out_h, h);
    let xs = coords(out_w, w);
    let mut out = Tensor::zeros([c, out_h, out_w]);
    let at = |y: usize, x: usize, ch: usize| src[(y * w + x) * c + ch];
    for ch in 0..c {
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = at(y0, x0, ch) * (1.0 - fx) + at(y0, x1, ch) * fx;
                let bottom = at(y1, x0, ch) * (1.0 - fx) + at(y1, x1, ch) * fx;
                out.data_mut()[(ch * out_h + oy) * out_w + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

/// Per-channel z-normalization with statistics from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Channels whose spread falls below this are only centred.
const MIN_STD: f64 = 1e-8;

impl Normalizer {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn fit(samples: &[Sample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::data(None, "cannot fit a normalizer on no samples"))?;
        let c = first.input.shape()[0];
        let plane = first.input.len() / c;
        let count = (samples.len() * plane) as f64;
        let mut mean = vec![0.0; c];
        for s in samples {
            for (ch, m) in mean.iter_mut().enumerate() {
                *m += s.input.data()[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for s in samples {
            for (ch, v) in var.iter_mut().enumerate() {
                *v += s.input.data()[ch * plane..(ch + 1) * plane]
                    .iter()
                    .map(|x| (x - mean[ch]) * (x - mean[ch]))
                    .sum::<f64>();
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = libm::sqrt(v / count);
                if s < MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Normalizes an `[N, C, H, W]` batch in place.
    pub fn apply_batch(&self, x: &mut Tensor) -> Result<()> {
        if x.rank() != 4 || x.shape()[1] != self.channels() {
            return Err(Error::dim(
                "normalize",
                format!("batch {:?} does not have {} channels", x.shape(), self.channels()),
            ));
        }
        let plane = x.shape()[2] * x.shape()[3];
        let c = self.channels();
        for (k, chunk) in x.data_mut().chunks_mut(plane).enumerate() {
            let ch = k % c;
            let (m, s) = (self.mean[ch], self.std[ch]);
            chunk.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        Ok(())
    }
}
