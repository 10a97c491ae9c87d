//! FlowPack: a little-endian container of 8-bit quantized flow fields.
//!
//! ```text
//! magic "PCFL" | version u16 | codec u8 | flags u8 | T u32 | width u32 | height u32
//! per field (T-1 forward, then T-1 backward if flags bit 0):
//!   min_u f32 | max_u f32 | min_v f32 | max_v f32 | u plane u8[w*h] | v plane u8[w*h]
//! ```

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, WriteBytesExt};

use super::quant::{quantize_flow, ChannelRange, ChannelRangeBits, QuantizedFlow};
use super::{dequantize_flow, FlowDirection, FlowVolume};
use crate::binio::CountingReader;
use crate::error::{Error, Result};

pub const FLOWPACK_MAGIC: [u8; 4] = *b"PCFL";
pub const FLOWPACK_VERSION: u16 = 1;

const FLAG_BACKWARD: u8 = 0b1;

/// Plane codec identifier. Only raw 8-bit planes are defined; the byte is
/// reserved for lossy image codecs over the same code planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum CodecId {
    Raw8 = 0,
}

impl TryFrom<u8> for CodecId {
    type Error = u8;

    fn try_from(v: u8) -> std::result::Result<Self, u8> {
        match v {
            0 => Ok(CodecId::Raw8),
            other => Err(other),
        }
    }
}

/// Quantize and serialize `volume`, returning the number of bytes written.
pub fn write_flowpack<W: Write>(volume: &FlowVolume, sink: &mut W) -> Result<u64> {
    let mut out = CountingWriter { inner: sink, count: 0 };
    out.write_all(&FLOWPACK_MAGIC)?;
    out.write_u16::<LittleEndian>(FLOWPACK_VERSION)?;
    out.write_u8(CodecId::Raw8 as u8)?;
    out.write_u8(if volume.has_backward() { FLAG_BACKWARD } else { 0 })?;
    out.write_u32::<LittleEndian>(volume.num_frames())?;
    out.write_u32::<LittleEndian>(volume.width())?;
    out.write_u32::<LittleEndian>(volume.height())?;
    for field in volume.forward_fields().iter().chain(volume.backward_fields()) {
        let q = quantize_flow(field)?;
        write_field(&mut out, &q)?;
    }
    out.flush()?;
    Ok(out.count)
}

fn write_field<W: Write>(out: &mut W, q: &QuantizedFlow) -> io::Result<()> {
    let (ru, rv) = (q.u_range(), q.v_range());
    for x in [ru.min, ru.max, rv.min, rv.max] {
        out.write_f32::<LittleEndian>(x)?;
    }
    out.write_all(&q.q_u)?;
    out.write_all(&q.q_v)
}

/// Parse a FlowPack stream into a dequantized volume.
pub fn read_flowpack<R: Read>(source: R) -> Result<FlowVolume> {
    let mut r = CountingReader::new(source);

    let mut magic = [0u8; 4];
    r.exact(&mut magic, "magic")?;
    if magic != FLOWPACK_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:02x?}")));
    }
    let at = r.pos;
    let version = r.u16("version")?;
    if version != FLOWPACK_VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let at = r.pos;
    let codec = r.u8("codec id")?;
    CodecId::try_from(codec).map_err(|c| Error::format(at, format!("unknown codec id {c}")))?;
    let at = r.pos;
    let flags = r.u8("flags")?;
    if flags & !FLAG_BACKWARD != 0 {
        return Err(Error::format(at, format!("reserved flag bits set: {flags:#04x}")));
    }
    let at = r.pos;
    let num_frames = r.u32("frame count")?;
    if num_frames == 0 {
        return Err(Error::format(at, "frame count is zero"));
    }
    let at = r.pos;
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    if width == 0 || height == 0 {
        return Err(Error::format(at, format!("empty lattice {width}x{height}")));
    }
    let plane = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| Error::format(at, "lattice size overflows"))?;

    let steps = num_frames as usize - 1;
    let mut forward = Vec::with_capacity(steps);
    let mut backward = Vec::new();
    for t in 0..steps {
        forward.push(read_field(&mut r, width, height, plane, FlowDirection::Forward, t)?);
    }
    if flags & FLAG_BACKWARD != 0 {
        backward.reserve(steps);
        for t in 0..steps {
            backward.push(read_field(&mut r, width, height, plane, FlowDirection::Backward, t)?);
        }
    }
    FlowVolume::new(num_frames, width, height, forward, backward)
}

fn read_field<R: Read>(
    r: &mut CountingReader<R>,
    width: u32,
    height: u32,
    plane: usize,
    direction: FlowDirection,
    t: usize,
) -> Result<super::FlowField> {
    let at = r.pos;
    let mut ranges = [0f32; 4];
    for x in ranges.iter_mut() {
        *x = r.f32("channel range")?;
    }
    let ru = ChannelRange { min: ranges[0], max: ranges[1] };
    let rv = ChannelRange { min: ranges[2], max: ranges[3] };
    for r in [ru, rv] {
        if !(r.min.is_finite() && r.max.is_finite() && r.min <= r.max) {
            return Err(Error::format(
                at,
                format!("{direction:?} field {t}: invalid range [{}, {}]", r.min, r.max),
            ));
        }
    }
    let mut q_u = vec![0u8; plane];
    let mut q_v = vec![0u8; plane];
    r.exact(&mut q_u, "u plane")?;
    r.exact(&mut q_v, "v plane")?;
    let q = QuantizedFlow {
        width,
        height,
        q_u,
        q_v,
        range_u: ChannelRangeBits::from(ru),
        range_v: ChannelRangeBits::from(rv),
    };
    Ok(dequantize_flow(&q, direction))
}

struct CountingWriter<'a, W> {
    inner: &'a mut W,
    count: u64,
}

impl<W: Write> Write for CountingWriter<'_, W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.count += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}
