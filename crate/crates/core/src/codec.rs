//! Byte formats for checkpoints and cached datasets.
//!
//! All integers and floats are little-endian. A checkpoint is
//!
//! ```text
//! magic    8 bytes  "JDCLCKPT"
//! version  u32      1
//! arch     u32 input_size, u32 in_channels,
//!          u32 n, n × u32 conv_filters, u32 m, m × u32 fc_dims,
//!          u32 gn_groups (0 = per-layer default), f64 gn_eps,
//!          f64 lrelu_slope, f64 dropout_rate
//! matching f64 margin, u8 has_projection
//! meta     str name, u8 kind, u16 count, count × str dataset,
//!          u64 seed, u64 iterations
//! norm     u32 channels, channels × f64 mean, channels × f64 std
//! tensors  u32 count, then per tensor:
//!          str name, u8 dtype (1 = f64), u8 rank, rank × u32 dims,
//!          product(dims) × f64 payload
//! crc32    u32 over every preceding byte
//! ```
//!
//! where `str` is a u16 byte length followed by UTF-8. Tensors appear in
//! [`ModelParams::named_tensors`] order. A cached dataset (`"JDCLDSET"`)
//! shares the header, string and tensor encodings.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Dataset, Modality, Normalizer, Sample};
use crate::error::{Error, Result};
use crate::network::{build_model, ArchConfig, ModelParams};
use crate::tensor::Tensor;
use crate::train::StageKind;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"JDCLCKPT";
pub const DATASET_MAGIC: &[u8; 8] = b"JDCLDSET";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

/// Provenance of a checkpoint: which stage produced it and from what.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMeta {
    pub name: String,
    pub kind: StageKind,
    pub datasets: Vec<String>,
    pub seed: u64,
    pub iterations: u64,
}

/// Model parameters together with the input statistics they were trained
/// under and the stage that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub meta: StageMeta,
    pub normalizer: Normalizer,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(FORMAT_VERSION);
        w
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn len32(&mut self, n: usize, what: &str) -> Result<()> {
        let v = u32::try_from(n).map_err(|_| Error::Contract(format!("{what} too large to encode: {n}")))?;
        self.u32(v);
        Ok(())
    }

    fn str(&mut self, s: &str) -> Result<()> {
        let n = u16::try_from(s.len()).map_err(|_| Error::Contract(format!("string of {} bytes too long", s.len())))?;
        self.u16(n);
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    fn tensor(&mut self, name: &str, t: &Tensor) -> Result<()> {
        self.str(name)?;
        self.u8(DTYPE_F64);
        self.u8(t.rank() as u8);
        for &d in t.shape() {
            self.len32(d, "tensor axis")?;
        }
        for &v in t.data() {
            self.f64(v);
        }
        Ok(())
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn truncated() -> Error {
    Error::Corrupt(String::from("unexpected end of data"))
}

impl<'a> Reader<'a> {
    /// Checks magic, version and checksum, returning a reader over the body.
    fn open(bytes: &'a [u8], magic: &[u8; 8], what: &str) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != magic {
            return Err(Error::Corrupt(format!("not a {what} file (bad magic)")));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 16 {
            return Err(truncated());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Corrupt(String::from("checksum mismatch (truncated or modified)")));
        }
        Ok(Self { buf: body, pos: 12 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Corrupt(String::from("invalid UTF-8 in string field")))
    }

    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let name = self.str()?;
        let dtype = self.u8()?;
        if dtype != DTYPE_F64 {
            return Err(Error::Corrupt(format!("tensor `{name}` has unknown dtype {dtype}")));
        }
        let rank = self.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.usize()?);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c.saturating_mul(8) <= self.buf.len() - self.pos)
            .ok_or_else(truncated)?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(self.f64()?);
        }
        let t = Tensor::new(shape, data).map_err(|e| Error::Corrupt(format!("tensor `{name}`: {e}")))?;
        Ok((name, t))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn kind_code(kind: StageKind) -> u8 {
    match kind {
        StageKind::Pretrain => 0,
        StageKind::Finetune => 1,
        StageKind::Joint => 2,
    }
}

fn write_arch(w: &mut Writer, a: &ArchConfig) -> Result<()> {
    w.len32(a.input_size, "input_size")?;
    w.len32(a.in_channels, "in_channels")?;
    w.len32(a.conv_filters.len(), "conv_filters")?;
    for &f in &a.conv_filters {
        w.len32(f, "conv filter")?;
    }
    w.len32(a.fc_dims.len(), "fc_dims")?;
    for &d in &a.fc_dims {
        w.len32(d, "fc dim")?;
    }
    w.len32(a.gn_groups.unwrap_or(0), "gn_groups")?;
    w.f64(a.gn_eps);
    w.f64(a.lrelu_slope);
    w.f64(a.dropout_rate);
    Ok(())
}

fn read_arch(r: &mut Reader) -> Result<ArchConfig> {
    let input_size = r.usize()?;
    let in_channels = r.usize()?;
    let n = r.usize()?;
    let conv_filters = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let m = r.usize()?;
    let fc_dims = (0..m).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let groups = r.usize()?;
    Ok(ArchConfig {
        input_size,
        in_channels,
        conv_filters,
        fc_dims,
        gn_groups: (groups != 0).then_some(groups),
        gn_eps: r.f64()?,
        lrelu_slope: r.f64()?,
        dropout_rate: r.f64()?,
    })
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = Writer::new(CHECKPOINT_MAGIC);
    write_arch(&mut w, &ck.params.arch)?;
    w.f64(ck.params.matching.margin());
    w.u8(u8::from(ck.params.matching.projection.is_some()));
    let m = &ck.meta;
    w.str(&m.name)?;
    w.u8(kind_code(m.kind));
    w.u16(u16::try_from(m.datasets.len()).map_err(|_| Error::Contract(String::from("too many datasets")))?);
    for d in &m.datasets {
        w.str(d)?;
    }
    w.u64(m.seed);
    w.u64(m.iterations);
    w.len32(ck.normalizer.channels(), "normalizer")?;
    for &v in ck.normalizer.mean.iter().chain(&ck.normalizer.std) {
        w.f64(v);
    }
    let tensors = ck.params.named_tensors();
    w.len32(tensors.len(), "tensor count")?;
    for (name, _, t) in tensors {
        w.tensor(&name, t)?;
    }
    Ok(w.finish())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, "checkpoint")?;
    let arch = read_arch(&mut r)?;
    arch.validate().map_err(|e| Error::Corrupt(format!("stored architecture is invalid: {e}")))?;
    let margin = r.f64()?;
    let has_projection = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Corrupt(format!("bad projection flag {v}"))),
    };
    let name = r.str()?;
    let kind = match r.u8()? {
        0 => StageKind::Pretrain,
        1 => StageKind::Finetune,
        2 => StageKind::Joint,
        v => return Err(Error::Corrupt(format!("unknown stage kind {v}"))),
    };
    let n = r.u16()? as usize;
    let datasets = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let seed = r.u64()?;
    let iterations = r.u64()?;
    let c = r.usize()?;
    let mean = (0..c).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let std = (0..c).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;

    let mut params = build_model(&arch, 0)?
        .with_matching(margin, has_projection, 0)
        .map_err(|e| Error::Corrupt(format!("stored matching head is invalid: {e}")))?;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _, _)| n).collect();
    let count = r.usize()?;
    if count != names.len() {
        return Err(Error::Corrupt(format!("{count} tensors stored, architecture has {}", names.len())));
    }
    for (expected, (_, slot)) in names.iter().zip(params.tensors_mut()) {
        let (name, t) = r.tensor()?;
        if &name != expected || t.shape() != slot.shape() {
            return Err(Error::Corrupt(format!(
                "tensor `{name}` {:?} where `{expected}` {:?} was expected",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    r.finish()?;
    Ok(Checkpoint {
        params,
        meta: StageMeta {
            name,
            kind,
            datasets,
            seed,
            iterations,
        },
        normalizer: Normalizer { mean, std },
    })
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = Writer::new(DATASET_MAGIC);
    w.str(&ds.id)?;
    w.u8(match ds.modality {
        Modality::Visual => 0,
        Modality::Audio => 1,
    });
    w.len32(ds.len(), "sample count")?;
    for s in ds.samples() {
        w.u8(s.label as u8);
        w.len32(s.group, "group")?;
        w.tensor("", &s.input)?;
    }
    Ok(w.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::open(bytes, DATASET_MAGIC, "dataset")?;
    let id = r.str()?;
    let modality = match r.u8()? {
        0 => Modality::Visual,
        1 => Modality::Audio,
        v => return Err(Error::Corrupt(format!("unknown modality {v}"))),
    };
    let n = r.usize()?;
    let mut samples = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let label = r.u8()? as usize;
        let group = r.usize()?;
        let (_, input) = r.tensor()?;
        samples.push(Sample { input, label, group });
    }
    r.finish()?;
    Dataset::new(id, modality, samples).map_err(|e| Error::Corrupt(format!("stored dataset is invalid: {e}")))
}
