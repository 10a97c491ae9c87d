use serde::{Deserialize, Serialize};

use super::PixelPair;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

/// A crop of the source frame, resized to `out_size` and optionally
/// mirrored left-right.
///
/// Only coordinates pass through here: resizing is a pure scale by
/// `out_size / crop size`. A source point belongs to the view iff its
/// scaled position lies in `[0, W'-1] x [0, H'-1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewGeometry {
    pub crop: CropRect,
    #[serde(default)]
    pub flip_h: bool,
    pub out_size: (u32, u32),
}

impl ViewGeometry {
    pub fn identity(width: u32, height: u32) -> Self {
        Self {
            crop: CropRect { x0: 0, y0: 0, w: width, h: height },
            flip_h: false,
            out_size: (width, height),
        }
    }

    pub fn validate(&self, src_width: u32, src_height: u32) -> Result<()> {
        let c = &self.crop;
        if c.w == 0 || c.h == 0 || self.out_size.0 == 0 || self.out_size.1 == 0 {
            return Err(Error::InvalidArgument(format!("empty view geometry {self:?}")));
        }
        if c.x0 as u64 + c.w as u64 > src_width as u64 || c.y0 as u64 + c.h as u64 > src_height as u64 {
            return Err(Error::InvalidArgument(format!(
                "crop {c:?} exceeds {src_width}x{src_height} source"
            )));
        }
        Ok(())
    }

    /// View coordinates of a source point, or `None` if the view excludes it.
    #[inline]
    pub fn map(&self, p: [f32; 2]) -> Option<[f32; 2]> {
        let (ow, oh) = (self.out_size.0 as f64, self.out_size.1 as f64);
        let x = (p[0] as f64 - self.crop.x0 as f64) * (ow / self.crop.w as f64);
        let y = (p[1] as f64 - self.crop.y0 as f64) * (oh / self.crop.h as f64);
        if !(x >= 0.0 && y >= 0.0 && x <= ow - 1.0 && y <= oh - 1.0) {
            return None;
        }
        let x = if self.flip_h { ow - 1.0 - x } else { x };
        Some([x as f32, y as f32])
    }
}

/// Move both endpoints of every pair into their views, dropping pairs with
/// an endpoint outside its crop.
pub fn apply_view(pairs: &[PixelPair], geom_a: &ViewGeometry, geom_b: &ViewGeometry) -> Vec<PixelPair> {
    pairs
        .iter()
        .filter_map(|p| {
            Some(PixelPair {
                pa: geom_a.map(p.pa)?,
                pb: geom_b.map(p.pb)?,
                ..*p
            })
        })
        .collect()
}
