//! Image and audio decoding into network inputs.
//!
//! Images are read as 8-bit RGB (PNG or BMP through the `image` crate, or
//! the raw tensor format below), scaled to `[0, 1]` and resized bilinearly
//! to the network's square input. Audio must be 16-bit PCM mono WAV.
//!
//! Raw tensor format (`.raw`): the 4 bytes `JRAW`, then height, width and
//! channel count as little-endian `u32` (channels must be 3), then
//! `height·width·3` bytes of row-major interleaved RGB.

use std::io::Cursor;
use std::path::Path;

use jdcl_core::audio::Waveform;
use jdcl_core::data::resize_bilinear;
use jdcl_core::Tensor;

use crate::error::{Error, Result};
use crate::files;

pub const RAW_MAGIC: &[u8; 4] = b"JRAW";
const RAW_HEADER: usize = 16;

/// Kind of input a file extension denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediaKind {
    Image,
    Audio,
}

pub fn media_kind(path: &Path) -> Option<MediaKind> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "png" | "bmp" | "raw" => Some(MediaKind::Image),
        "wav" => Some(MediaKind::Audio),
        _ => None,
    }
}

/// Interleaved 8-bit RGB pixels with their dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8 {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

pub fn decode_raw(bytes: &[u8]) -> std::result::Result<Rgb8, String> {
    if bytes.len() < RAW_HEADER || &bytes[..4] != RAW_MAGIC {
        return Err("not a raw tensor file (bad magic)".into());
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (height, width, channels) = (field(0), field(1), field(2));
    if channels != 3 {
        return Err(format!("expected 3 channels, header says {channels}"));
    }
    if height == 0 || width == 0 {
        return Err("empty image".into());
    }
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(3))
        .ok_or("image dimensions overflow")?;
    let payload = &bytes[RAW_HEADER..];
    if payload.len() != expected {
        return Err(format!("payload holds {} bytes, {height}×{width}×3 needs {expected}", payload.len()));
    }
    Ok(Rgb8 {
        height,
        width,
        pixels: payload.to_vec(),
    })
}

pub fn encode_raw(img: &Rgb8) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER + img.pixels.len());
    out.extend_from_slice(RAW_MAGIC);
    for v in [img.height, img.width, 3] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_rgb8(path: &Path) -> Result<Rgb8> {
    let bytes = files::read(path)?;
    let is_raw = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("raw"));
    if is_raw {
        return decode_raw(&bytes).map_err(|e| Error::decode(path, e));
    }
    let img = image::load_from_memory(&bytes).map_err(|e| Error::decode(path, e))?.to_rgb8();
    Ok(Rgb8 {
        height: img.height() as usize,
        width: img.width() as usize,
        pixels: img.into_raw(),
    })
}

/// Loads an image as a `[3, size, size]` tensor with values in `[0, 1]`.
pub fn load_image(path: &Path, size: usize) -> Result<Tensor> {
    let img = read_rgb8(path)?;
    let src: Vec<f64> = img.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(resize_bilinear(&src, img.height, img.width, 3, size, size)?)
}

/// Quantizes a `[3, H, W]` tensor with values in `[0, 1]` to 8-bit RGB.
pub fn tensor_to_rgb8(t: &Tensor) -> Result<Rgb8> {
    let shape = t.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::Usage(format!("expected a [3, H, W] image tensor, got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let d = t.data();
    let mut pixels = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = d[(c * h + y) * w + x].clamp(0.0, 1.0);
                pixels.push((v * 255.0).round() as u8);
            }
        }
    }
    Ok(Rgb8 {
        height: h,
        width: w,
        pixels,
    })
}

pub fn save_png(path: &Path, img: &Rgb8) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
        .ok_or_else(|| Error::Usage("pixel buffer does not match image size".into()))?;
    let mut bytes = Cursor::new(Vec::new());
    buf.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| Error::decode(path, e))?;
    files::atomic_write(path, bytes.get_ref())
}

/// Reads a 16-bit PCM mono WAV file.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = files::read(path)?;
    let mut reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| Error::decode(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::decode(
            path,
            format!(
                "expected 16-bit PCM mono, found {} channel(s) of {}-bit {:?}",
                spec.channels, spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::decode(path, e))?;
    Waveform::new(samples, spec.sample_rate).map_err(|e| Error::decode(path, e))
}

/// Writes a waveform as 16-bit PCM mono, clipping to `[-1, 1)`.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut bytes = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut bytes, spec).map_err(|e| Error::decode(path, e))?;
        for &s in w.samples() {
            let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(q).map_err(|e| Error::decode(path, e))?;
        }
        writer.finalize().map_err(|e| Error::decode(path, e))?;
    }
    files::atomic_write(path, bytes.get_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip_and_rejections() {
        let img = Rgb8 {
            height: 2,
            width: 3,
            pixels: (0..18).collect(),
        };
        let bytes = encode_raw(&img);
        assert_eq!(bytes.len(), 16 + 18);
        assert_eq!(decode_raw(&bytes).unwrap(), img);
        assert!(decode_raw(&bytes[..20]).is_err());
        let mut bad = bytes.clone();
        bad[12] = 4;
        assert!(decode_raw(&bad).unwrap_err().contains("3 channels"));
        assert!(decode_raw(b"PNG?").is_err());
    }

    #[test]
    fn extensions_map_to_kinds() {
        assert_eq!(media_kind(Path::new("a/b.PNG")), Some(MediaKind::Image));
        assert_eq!(media_kind(Path::new("x.wav")), Some(MediaKind::Audio));
        assert_eq!(media_kind(Path::new("x.mp3")), None);
        assert_eq!(media_kind(Path::new("noext")), None);
    }
}
