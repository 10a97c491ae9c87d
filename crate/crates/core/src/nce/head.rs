use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;

pub const DEFAULT_HIDDEN_DIM: usize = 2048;
pub const DEFAULT_OUT_DIM: usize = 128;

/// Two-layer per-pixel MLP (`affine -> ReLU -> affine`), i.e. a stack of
/// 1x1 convolutions applied to every pixel of a dense feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    /// `hidden x in`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `out x hidden`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ProjectionHead {
    pub fn new(w1: Array2<f64>, b1: Array1<f64>, w2: Array2<f64>, b2: Array1<f64>) -> Result<Self> {
        if w1.nrows() != b1.len() || w2.ncols() != w1.nrows() || w2.nrows() != b2.len() {
            return Err(Error::Shape(format!(
                "head layers w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                w1.dim(),
                b1.len(),
                w2.dim(),
                b2.len()
            )));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights and biases.
    pub fn random(in_dim: usize, hidden_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, 0x6865_6164, 0);
        let mut layer = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            let w = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..=bound));
            let b = Array1::from_shape_fn(rows, |_| rng.gen_range(-bound..=bound));
            (w, b)
        };
        let (w1, b1) = layer(hidden_dim, in_dim);
        let (w2, b2) = layer(out_dim, hidden_dim);
        Self { w1, b1, w2, b2 }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.nrows()
    }

    /// Apply the head to every row of `pixels` (`M x in_dim`).
    pub fn project(&self, pixels: ArrayView2<f64>) -> Result<Array2<f64>> {
        if pixels.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "pixels have {} channels, head expects {}",
                pixels.ncols(),
                self.in_dim()
            )));
        }
        let mut hidden = pixels.dot(&self.w1.t()) + &self.b1;
        hidden.mapv_inplace(|x| x.max(0.0));
        Ok(hidden.dot(&self.w2.t()) + &self.b2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_head() {
        let eye = Array2::<f64>::eye(3);
        let head = ProjectionHead::new(eye.clone(), Array1::zeros(3), eye, Array1::zeros(3)).unwrap();
        let x = array![[1.0, 0.0, 2.5], [0.0, 3.0, 0.25]];
        assert_eq!(head.project(x.view()).unwrap(), x);
    }

    #[test]
    fn matches_row_loop() {
        let head = ProjectionHead::random(6, 16, 4, 5);
        let x = Array2::from_shape_fn((7, 6), |(i, j)| ((i * 6 + j) as f64 * 0.37).sin());
        let out = head.project(x.view()).unwrap();
        for i in 0..7 {
            for o in 0..4 {
                let mut acc = head.b2[o];
                for h in 0..16 {
                    let mut z = head.b1[h];
                    for k in 0..6 {
                        z += head.w1[[h, k]] * x[[i, k]];
                    }
                    acc += head.w2[[o, h]] * z.max(0.0);
                }
                assert!((acc - out[[i, o]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_permutation_commutes() {
        let head = ProjectionHead::random(5, 12, 3, 1);
        let x = Array2::from_shape_fn((6, 5), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let xp = Array2::from_shape_fn((6, 5), |(i, j)| x[[perm[i], j]]);
        let y = head.project(x.view()).unwrap();
        let yp = head.project(xp.view()).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(yp.row(i), y.row(p));
        }
    }

    #[test]
    fn default_shape_and_errors() {
        let head = ProjectionHead::random(DEFAULT_OUT_DIM, DEFAULT_HIDDEN_DIM, DEFAULT_OUT_DIM, 0);
        let x = Array2::<f64>::zeros((2, DEFAULT_OUT_DIM));
        assert_eq!(head.project(x.view()).unwrap().dim(), (2, DEFAULT_OUT_DIM));
        assert!(matches!(head.project(Array2::zeros((1, 3)).view()), Err(Error::Shape(_))));
        assert!(ProjectionHead::new(Array2::zeros((4, 2)), Array1::zeros(3), Array2::zeros((2, 4)), Array1::zeros(2)).is_err());
    }
}
