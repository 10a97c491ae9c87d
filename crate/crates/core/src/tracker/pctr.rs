//! PCTR trajectory files (little-endian).
//!
//! ```text
//! magic "PCTR" | version u16 | id_len u16 | id utf-8 | width u32 | height u32 | T u32
//! | seed u64 | gamma f32 | delta f32 | count u32
//! per trajectory: start u32 | length u32 | stop u8 | (x f32, y f32) * length
//!                 | residual_count u32 | (a f16, b f16) * residual_count
//! ```
//!
//! A trajectory with more than one point and `residual_count == 0` was
//! written without residuals.

use std::io::{Read, Write};

use byteorder::{LittleEndian, WriteBytesExt};
use half::f16;

use super::{Residual, StopReason, ThresholdParams, Trajectory, TrajectorySet};
use crate::error::{Error, Result};
use crate::binio::CountingReader;

pub const PCTR_MAGIC: [u8; 4] = *b"PCTR";
pub const PCTR_VERSION: u16 = 1;

pub fn write_trajectories<W: Write>(set: &TrajectorySet, sink: &mut W) -> Result<()> {
    let id = set.video_id.as_bytes();
    let id_len = u16::try_from(id.len())
        .map_err(|_| Error::InvalidArgument(format!("video id is {} bytes, max 65535", id.len())))?;
    sink.write_all(&PCTR_MAGIC)?;
    sink.write_u16::<LittleEndian>(PCTR_VERSION)?;
    sink.write_u16::<LittleEndian>(id_len)?;
    sink.write_all(id)?;
    sink.write_u32::<LittleEndian>(set.width)?;
    sink.write_u32::<LittleEndian>(set.height)?;
    sink.write_u32::<LittleEndian>(set.num_frames)?;
    sink.write_u64::<LittleEndian>(set.seed)?;
    sink.write_f32::<LittleEndian>(set.params.gamma)?;
    sink.write_f32::<LittleEndian>(set.params.delta)?;
    sink.write_u32::<LittleEndian>(set.trajectories.len() as u32)?;
    for t in &set.trajectories {
        sink.write_u32::<LittleEndian>(t.start_frame)?;
        sink.write_u32::<LittleEndian>(t.len())?;
        sink.write_u8(t.stop_reason as u8)?;
        for [x, y] in &t.points {
            sink.write_f32::<LittleEndian>(*x)?;
            sink.write_f32::<LittleEndian>(*y)?;
        }
        let residuals = t.residuals.as_deref().unwrap_or(&[]);
        sink.write_u32::<LittleEndian>(residuals.len() as u32)?;
        for r in residuals {
            sink.write_u16::<LittleEndian>(r.a.to_bits())?;
            sink.write_u16::<LittleEndian>(r.b.to_bits())?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn read_trajectories<R: Read>(source: R) -> Result<TrajectorySet> {
    let mut r = CountingReader::new(source);
    let mut magic = [0u8; 4];
    r.exact(&mut magic, "magic")?;
    if magic != PCTR_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:02x?}")));
    }
    let at = r.pos;
    let version = r.u16("version")?;
    if version != PCTR_VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let id_len = r.u16("video id length")? as usize;
    let at = r.pos;
    let mut id = vec![0u8; id_len];
    r.exact(&mut id, "video id")?;
    let video_id = String::from_utf8(id).map_err(|_| Error::format(at, "video id is not UTF-8"))?;
    let at = r.pos;
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    let num_frames = r.u32("frame count")?;
    if width == 0 || height == 0 || num_frames == 0 {
        return Err(Error::format(at, format!("degenerate video {width}x{height}x{num_frames}")));
    }
    let seed = r.u64("seed")?;
    let at = r.pos;
    let params = ThresholdParams {
        gamma: r.f32("gamma")?,
        delta: r.f32("delta")?,
    };
    params
        .validate()
        .map_err(|e| Error::format(at, e.to_string()))?;
    let count = r.u32("trajectory count")?;

    let mut trajectories = Vec::with_capacity(count.min(1 << 20) as usize);
    for i in 0..count {
        let at = r.pos;
        let start_frame = r.u32("start frame")?;
        let len = r.u32("trajectory length")?;
        if len == 0 || start_frame as u64 + len as u64 > num_frames as u64 {
            return Err(Error::format(
                at,
                format!("trajectory {i}: span start={start_frame} len={len} outside {num_frames} frames"),
            ));
        }
        let at = r.pos;
        let stop_reason = StopReason::try_from(r.u8("stop reason")?)
            .map_err(|v| Error::format(at, format!("trajectory {i}: unknown stop reason {v}")))?;
        let mut points = Vec::with_capacity(len as usize);
        for _ in 0..len {
            let at = r.pos;
            let (x, y) = (r.f32("point x")?, r.f32("point y")?);
            if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f32 && y <= (height - 1) as f32) {
                return Err(Error::format(at, format!("trajectory {i}: point ({x}, {y}) out of bounds")));
            }
            points.push([x, y]);
        }
        let at = r.pos;
        let n_res = r.u32("residual count")?;
        let residuals = if n_res == len - 1 {
            let mut v = Vec::with_capacity(n_res as usize);
            for _ in 0..n_res {
                let a = f16::from_bits(r.u16("residual")?);
                let b = f16::from_bits(r.u16("residual")?);
                v.push(Residual { a, b });
            }
            Some(v)
        } else if n_res == 0 {
            None
        } else {
            return Err(Error::format(
                at,
                format!("trajectory {i}: {n_res} residuals for {len} points"),
            ));
        };
        trajectories.push(Trajectory {
            start_frame,
            points,
            residuals,
            stop_reason,
        });
    }
    if !r.at_eof()? {
        return Err(Error::format(r.pos, "trailing bytes after last trajectory"));
    }
    Ok(TrajectorySet {
        video_id,
        width,
        height,
        num_frames,
        seed,
        params,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> TrajectorySet {
        TrajectorySet {
            video_id: "clip-007".into(),
            width: 64,
            height: 48,
            num_frames: 10,
            seed: 42,
            params: ThresholdParams::default(),
            trajectories: vec![
                Trajectory {
                    start_frame: 2,
                    points: vec![[1.0, 2.0], [1.5, 2.25], [3.0, 4.0]],
                    residuals: Some(vec![Residual::new(0.5, 3.0), Residual::new(1.25, 7.5)]),
                    stop_reason: StopReason::Consistency,
                },
                Trajectory {
                    start_frame: 9,
                    points: vec![[63.0, 47.0]],
                    residuals: Some(vec![]),
                    stop_reason: StopReason::EndOfVideo,
                },
            ],
        }
    }

    fn bytes(set: &TrajectorySet) -> Vec<u8> {
        let mut buf = Vec::new();
        write_trajectories(set, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip() {
        let s = sample_set();
        let b = bytes(&s);
        let back = read_trajectories(b.as_slice()).unwrap();
        assert_eq!(back, s);
        assert_eq!(bytes(&back), b);
    }

    #[test]
    fn residuals_absent() {
        let mut s = sample_set();
        s.trajectories[0].residuals = None;
        let back = read_trajectories(bytes(&s).as_slice()).unwrap();
        assert!(back.trajectories[0].residuals.is_none());
        assert!(!back.has_residuals());
    }

    #[test]
    fn header_fields_are_placed() {
        let b = bytes(&sample_set());
        assert_eq!(&b[..4], b"PCTR");
        assert_eq!(u16::from_le_bytes([b[6], b[7]]), 8);
        let off = 8 + 8 + 12 + 8;
        assert_eq!(f32::from_le_bytes(b[off..off + 4].try_into().unwrap()), 0.0);
        assert_eq!(f32::from_le_bytes(b[off + 4..off + 8].try_into().unwrap()), 4.0);
    }

    #[test]
    fn corrupt_inputs() {
        let mut b = bytes(&sample_set());
        b[0] = 0;
        assert!(matches!(read_trajectories(b.as_slice()), Err(Error::Format { offset: 0, .. })));
        let b = bytes(&sample_set());
        assert!(matches!(read_trajectories(&b[..b.len() - 1]), Err(Error::Format { .. })));
        let mut b = bytes(&sample_set());
        b.push(0);
        assert!(matches!(read_trajectories(b.as_slice()), Err(Error::Format { .. })));
    }
}
