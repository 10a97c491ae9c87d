//! Optical-flow fields: in-memory representation, 8-bit quantization,
//! the FlowPack container, and bilinear sampling.

mod pack;
mod quant;

pub use pack::{read_flowpack, write_flowpack, CodecId, FLOWPACK_MAGIC, FLOWPACK_VERSION};
pub use quant::{dequantize_flow, quantize_flow, ChannelRange, QuantizedFlow};

use crate::error::{Error, Result};

/// Which way a field maps pixels between consecutive frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlowDirection {
    /// Frame t to frame t+1.
    Forward,
    /// Frame t+1 back to frame t.
    Backward,
}

/// A dense displacement field on a `width x height` pixel lattice.
///
/// Planes are stored row-major in double precision, so 8-bit reconstruction
/// levels are held without a second rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: u32,
    height: u32,
    u: Vec<f64>,
    v: Vec<f64>,
    direction: FlowDirection,
}

impl FlowField {
    pub fn new(
        width: u32,
        height: u32,
        u: Vec<f64>,
        v: Vec<f64>,
        direction: FlowDirection,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFlow(format!(
                "empty lattice {width}x{height}"
            )));
        }
        let n = width as usize * height as usize;
        if u.len() != n || v.len() != n {
            return Err(Error::InvalidFlow(format!(
                "plane sizes ({}, {}) do not match {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        if let Some(i) = u.iter().chain(v.iter()).position(|x| !x.is_finite()) {
            return Err(Error::InvalidFlow(format!("non-finite value at element {i}")));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
            direction,
        })
    }

    /// Field with the same displacement at every pixel.
    pub fn constant(width: u32, height: u32, du: f64, dv: f64, direction: FlowDirection) -> Result<Self> {
        let n = width as usize * height as usize;
        Self::new(width, height, vec![du; n], vec![dv; n], direction)
    }

    /// Build a field by evaluating `f(x, y) -> (u, v)` at every lattice point.
    pub fn from_fn(
        width: u32,
        height: u32,
        direction: FlowDirection,
        mut f: impl FnMut(f64, f64) -> (f64, f64),
    ) -> Result<Self> {
        let n = width as usize * height as usize;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                let (du, dv) = f(x as f64, y as f64);
                u.push(du);
                v.push(dv);
            }
        }
        Self::new(width, height, u, v, direction)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn direction(&self) -> FlowDirection {
        self.direction
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Grid value at an integer lattice point.
    pub fn at(&self, x: u32, y: u32) -> (f64, f64) {
        let i = y as usize * self.width as usize + x as usize;
        (self.u[i], self.v[i])
    }

    /// Whether `(x, y)` lies in the lattice hull `[0, W-1] x [0, H-1]`.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinearly interpolated displacement at a subpixel location.
    ///
    /// Exact at lattice points and on affine fields. Coordinates outside the
    /// lattice hull are rejected; there is no extrapolation.
    pub fn sample(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !self.contains(x, y) {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.sample_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn sample_unchecked(&self, x: f64, y: f64) -> (f64, f64) {
        let w = self.width as usize;
        let (x0, fx) = cell(x, self.width);
        let (y0, fy) = cell(y, self.height);
        let x1 = if self.width > 1 { x0 + 1 } else { x0 };
        let y1 = if self.height > 1 { y0 + 1 } else { y0 };
        let (i00, i10, i01, i11) = (y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1);
        let blend = |p: &[f64]| {
            let top = (1.0 - fx) * p[i00] + fx * p[i10];
            let bottom = (1.0 - fx) * p[i01] + fx * p[i11];
            (1.0 - fy) * top + fy * bottom
        };
        (blend(&self.u), blend(&self.v))
    }
}

/// Lower lattice index and fractional offset along one axis. The last cell
/// is reused for the far edge so that `x = W-1` lands on weight 1.
#[inline]
fn cell(x: f64, extent: u32) -> (usize, f64) {
    if extent < 2 {
        return (0, 0.0);
    }
    let i = (x.floor() as usize).min(extent as usize - 2);
    (i, x - i as f64)
}

/// Free-function form of [`FlowField::sample`].
pub fn sample_flow(field: &FlowField, x: f64, y: f64) -> Result<(f64, f64)> {
    field.sample(x, y)
}

/// Forward and backward flow for every consecutive frame pair of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowVolume {
    num_frames: u32,
    width: u32,
    height: u32,
    forward: Vec<FlowField>,
    backward: Vec<FlowField>,
    quant_meta: Vec<[ChannelRange; 2]>,
}

impl FlowVolume {
    /// `backward` may be empty (no backward flow stored); otherwise it must
    /// hold one field per forward field.
    pub fn new(
        num_frames: u32,
        width: u32,
        height: u32,
        forward: Vec<FlowField>,
        backward: Vec<FlowField>,
    ) -> Result<Self> {
        if num_frames == 0 {
            return Err(Error::InvalidFlow("volume has zero frames".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidFlow(format!("empty lattice {width}x{height}")));
        }
        let steps = num_frames as usize - 1;
        if forward.len() != steps {
            return Err(Error::InvalidFlow(format!(
                "{} forward fields for {num_frames} frames",
                forward.len()
            )));
        }
        if !backward.is_empty() && backward.len() != steps {
            return Err(Error::InvalidFlow(format!(
                "{} backward fields for {steps} forward fields",
                backward.len()
            )));
        }
        for (set, dir) in [(&forward, FlowDirection::Forward), (&backward, FlowDirection::Backward)] {
            for (t, f) in set.iter().enumerate() {
                if f.width != width || f.height != height {
                    return Err(Error::InvalidFlow(format!(
                        "{dir:?} field {t} is {}x{}, volume is {width}x{height}",
                        f.width, f.height
                    )));
                }
                if f.direction != dir {
                    return Err(Error::InvalidFlow(format!(
                        "field {t} in the {dir:?} sequence is tagged {:?}",
                        f.direction
                    )));
                }
            }
        }
        let quant_meta = forward
            .iter()
            .chain(backward.iter())
            .map(|f| [ChannelRange::of(&f.u), ChannelRange::of(&f.v)])
            .collect();
        Ok(Self {
            num_frames,
            width,
            height,
            forward,
            backward,
            quant_meta,
        })
    }

    pub fn num_frames(&self) -> u32 {
        self.num_frames
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn has_backward(&self) -> bool {
        !self.backward.is_empty()
    }

    /// Flow from frame `t` to `t+1`.
    pub fn forward(&self, t: u32) -> Option<&FlowField> {
        self.forward.get(t as usize)
    }

    /// Flow from frame `t+1` back to `t`.
    pub fn backward(&self, t: u32) -> Option<&FlowField> {
        self.backward.get(t as usize)
    }

    pub fn forward_fields(&self) -> &[FlowField] {
        &self.forward
    }

    pub fn backward_fields(&self) -> &[FlowField] {
        &self.backward
    }

    /// Per-field `[u, v]` value ranges, forward fields first.
    pub fn quant_meta(&self) -> &[[ChannelRange; 2]] {
        &self.quant_meta
    }

    /// Whether `(x, y)` lies in the lattice hull.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Replace every field by its 8-bit round trip.
    pub fn quantized(&self) -> Self {
        let q = |fs: &[FlowField]| -> Vec<FlowField> {
            fs.iter().map(|f| dequantize_flow(&quantize_flow(f).expect("validated field"), f.direction)).collect()
        };
        Self::new(self.num_frames, self.width, self.height, q(&self.forward), q(&self.backward))
            .expect("quantization preserves shape")
    }
}
