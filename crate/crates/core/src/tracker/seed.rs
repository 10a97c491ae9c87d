use rand::Rng;

use crate::error::{Error, Result};
use crate::flowstore::FlowVolume;
use crate::rng::{domain_stream, Domain};

/// Starting position of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub frame: u32,
    pub x: f32,
    pub y: f32,
}

/// `count` seeds drawn uniformly in space and time.
///
/// Frames are uniform over `0..=T-2` (a seed on the last frame could never
/// move); coordinates are uniform over the lattice hull. Seed `i` uses its
/// own ChaCha8 stream, so any prefix of the output is stable in `count`.
pub fn seed_points(volume: &FlowVolume, count: usize, rng_seed: u64) -> Result<Vec<Seed>> {
    if volume.num_frames() < 2 {
        return Err(Error::DegenerateVideo(volume.num_frames()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("seed count must be at least 1".into()));
    }
    let last_start = volume.num_frames() - 2;
    let (xmax, ymax) = ((volume.width() - 1) as f32, (volume.height() - 1) as f32);
    Ok((0..count as u64)
        .map(|i| {
            let mut rng = domain_stream(rng_seed, Domain::SeedPoints, i);
            Seed {
                frame: rng.gen_range(0..=last_start),
                x: rng.gen_range(0.0..=xmax),
                y: rng.gen_range(0.0..=ymax),
            }
        })
        .collect())
}

/// Centers of a regular `stride`-pixel grid over a `width x height` image.
///
/// Cells are `[i*stride, min((i+1)*stride, W) - 1]`; a partial last cell
/// contributes its own center. Row-major order.
pub fn grid_points(stride: u32, width: u32, height: u32) -> Vec<[f32; 2]> {
    let stride = stride.max(1);
    let centers = |extent: u32| -> Vec<f32> {
        (0..extent.div_ceil(stride))
            .map(|i| {
                let lo = i * stride;
                let hi = ((i + 1) * stride).min(extent) - 1;
                (lo + hi) as f32 / 2.0
            })
            .collect()
    };
    let (xs, ys) = (centers(width), centers(height));
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect()
}

/// Grid seeds all placed on `frame`.
pub fn grid_seeds(frame: u32, stride: u32, width: u32, height: u32) -> Vec<Seed> {
    grid_points(stride, width, height)
        .into_iter()
        .map(|[x, y]| Seed { frame, x, y })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowstore::{FlowDirection, FlowField};

    fn volume(frames: u32, w: u32, h: u32) -> FlowVolume {
        let f = FlowField::constant(w, h, 0.0, 0.0, FlowDirection::Forward).unwrap();
        let b = FlowField::constant(w, h, 0.0, 0.0, FlowDirection::Backward).unwrap();
        let n = frames as usize - 1;
        FlowVolume::new(frames, w, h, vec![f; n], vec![b; n]).unwrap()
    }

    #[test]
    fn thousand_points_on_long_video() {
        let v = volume(300, 4, 3);
        let s = seed_points(&v, 1000, 7).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.iter().all(|p| p.frame < 299));
        assert!(s.iter().all(|p| (0.0..=3.0).contains(&p.x) && (0.0..=2.0).contains(&p.y)));
        assert_eq!(s, seed_points(&v, 1000, 7).unwrap());
        assert_ne!(s, seed_points(&v, 1000, 8).unwrap());
        assert_eq!(&s[..10], &seed_points(&v, 10, 7).unwrap()[..]);
    }

    #[test]
    fn frames_are_uniform() {
        let frames = 11u32;
        let v = volume(frames, 2, 2);
        let n = 100_000usize;
        let mut counts = vec![0usize; (frames - 1) as usize];
        for s in seed_points(&v, n, 3).unwrap() {
            counts[s.frame as usize] += 1;
        }
        let p = 1.0 / (frames - 1) as f64;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sigma, "{c} vs {mean}");
        }
    }

    #[test]
    fn degenerate_video() {
        let v = FlowVolume::new(1, 4, 4, vec![], vec![]).unwrap();
        assert!(matches!(seed_points(&v, 5, 0), Err(Error::DegenerateVideo(1))));
    }

    #[test]
    fn grid_layout() {
        assert_eq!(grid_points(4, 32, 32).len(), 64);
        assert_eq!(grid_points(32, 32, 32), vec![[15.5, 15.5]]);
        assert_eq!(grid_points(4, 10, 1), vec![[1.5, 0.0], [5.5, 0.0], [8.5, 0.0]]);
    }
}
