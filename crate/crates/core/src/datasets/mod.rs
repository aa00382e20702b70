//! Synthetic distributions and IDX image loading.

mod elliptical;
mod idx;
mod mixture;

pub use elliptical::{EllipticalSpec, Family};
pub use idx::{load_idx, pixel_to_unit, unit_to_pixel, IdxDataset, IMAGES_MAGIC, LABELS_MAGIC};
pub use mixture::{
    MixtureSpec, Preset, BIMODAL_CENTRE, BIMODAL_STD, GRID25_STD, RING8_RADIUS, RING8_STD,
    TWO_MOONS_STD,
};

use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Source of training batches.
pub trait DataSource {
    fn dim(&self) -> usize;

    fn batch(&mut self, b: usize, rng: &mut dyn rand::RngCore) -> Result<Tensor>;
}

impl DataSource for MixtureSpec {
    fn dim(&self) -> usize {
        MixtureSpec::dim(self)
    }

    fn batch(&mut self, b: usize, rng: &mut dyn rand::RngCore) -> Result<Tensor> {
        self.sample(b, rng)
    }
}

/// Uniform minibatches, with replacement, from a fixed sample matrix.
#[derive(Debug, Clone)]
pub struct TensorSource {
    data: Tensor,
}

impl TensorSource {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 2 || data.rows() == 0 {
            return Err(Error::invalid("data source needs a non-empty matrix"));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }
}

impl DataSource for TensorSource {
    fn dim(&self) -> usize {
        self.data.cols()
    }

    fn batch(&mut self, b: usize, rng: &mut dyn rand::RngCore) -> Result<Tensor> {
        if b == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let n = self.data.rows();
        let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
        Ok(self.data.select_rows(&idx))
    }
}
