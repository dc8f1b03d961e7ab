use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Parameter initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Glorot uniform in `±√(6/(rows+cols))`, deterministic per seed.
    XavierUniform { seed: u64 },
    Constant(f64),
}

pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

impl Init {
    pub fn build<T: Scalar>(self, rows: usize, cols: usize) -> Result<Tensor<T>> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "parameter shape ({rows}, {cols}) has a zero dimension"
            )));
        }
        match self {
            Init::Constant(c) => Ok(Tensor::filled(rows, cols, T::of(c))),
            Init::XavierUniform { seed } => {
                let bound = xavier_bound(rows, cols);
                let dist = Uniform::new_inclusive(-bound, bound);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // Sampled in f64 so f32 and f64 tensors share the same draw.
                let data = (0..rows * cols)
                    .map(|_| T::of(dist.sample(&mut rng)))
                    .collect();
                Tensor::from_vec(rows, cols, data)
            }
        }
    }
}
