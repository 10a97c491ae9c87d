use super::{FlowDirection, FlowField};
use crate::error::{Error, Result};

/// Closed value range of one flow channel, as stored in a FlowPack header.
///
/// Bounds are single precision, rounded outward so the range always covers
/// the double-precision plane it was taken from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelRange {
    pub min: f32,
    pub max: f32,
}

impl ChannelRange {
    pub(crate) fn of(plane: &[f64]) -> Self {
        if plane.is_empty() {
            return Self { min: 0.0, max: 0.0 };
        }
        let (lo, hi) = plane
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let (mut min, mut max) = (lo as f32, hi as f32);
        if min as f64 > lo {
            min = min.next_down();
        }
        if (max as f64) < hi {
            max = max.next_up();
        }
        Self { min, max }
    }

    /// Worst-case round-trip error for values inside the range.
    pub fn error_bound(&self) -> f64 {
        (self.max as f64 - self.min as f64) / 510.0
    }

    #[inline]
    pub fn encode(&self, x: f64) -> u8 {
        let (lo, hi) = (self.min as f64, self.max as f64);
        if hi <= lo {
            return 0;
        }
        // f64::round rounds half away from zero.
        (255.0 * (x - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
    }

    #[inline]
    pub fn decode(&self, code: u8) -> f64 {
        let (lo, hi) = (self.min as f64, self.max as f64);
        if hi <= lo || code == 0 {
            return lo;
        }
        if code == 255 {
            return hi;
        }
        lo + code as f64 * (hi - lo) / 255.0
    }
}

/// A flow field rescaled linearly to 8-bit codes per channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedFlow {
    pub width: u32,
    pub height: u32,
    pub q_u: Vec<u8>,
    pub q_v: Vec<u8>,
    pub range_u: ChannelRangeBits,
    pub range_v: ChannelRangeBits,
}

/// [`ChannelRange`] compared by bit pattern so quantized flows can be `Eq`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelRangeBits {
    pub min: u32,
    pub max: u32,
}

impl From<ChannelRange> for ChannelRangeBits {
    fn from(r: ChannelRange) -> Self {
        Self {
            min: r.min.to_bits(),
            max: r.max.to_bits(),
        }
    }
}

impl From<ChannelRangeBits> for ChannelRange {
    fn from(r: ChannelRangeBits) -> Self {
        Self {
            min: f32::from_bits(r.min),
            max: f32::from_bits(r.max),
        }
    }
}

impl QuantizedFlow {
    pub fn u_range(&self) -> ChannelRange {
        self.range_u.into()
    }

    pub fn v_range(&self) -> ChannelRange {
        self.range_v.into()
    }
}

/// Rescale each channel of `field` from its own `[min, max]` onto `0..=255`.
pub fn quantize_flow(field: &FlowField) -> Result<QuantizedFlow> {
    if let Some(i) = field.u.iter().chain(field.v.iter()).position(|x| !x.is_finite()) {
        return Err(Error::InvalidFlow(format!("non-finite value at element {i}")));
    }
    let ru = ChannelRange::of(&field.u);
    let rv = ChannelRange::of(&field.v);
    Ok(QuantizedFlow {
        width: field.width,
        height: field.height,
        q_u: field.u.iter().map(|&x| ru.encode(x)).collect(),
        q_v: field.v.iter().map(|&x| rv.encode(x)).collect(),
        range_u: ru.into(),
        range_v: rv.into(),
    })
}

/// Map codes back to displacements: `min + code * (max - min) / 255`.
pub fn dequantize_flow(q: &QuantizedFlow, direction: FlowDirection) -> FlowField {
    let (ru, rv) = (q.u_range(), q.v_range());
    FlowField {
        width: q.width,
        height: q.height,
        u: q.q_u.iter().map(|&c| ru.decode(c)).collect(),
        v: q.q_v.iter().map(|&c| rv.decode(c)).collect(),
        direction,
    }
}
