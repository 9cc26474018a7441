use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::DatasetSplit;
use crate::error::DataError;
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[N, C, H, W]`.
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Positions of the batch members in the split.
    pub indices: Vec<usize>,
}

/// One pass over a split in fixed-size batches; the last batch may be short.
pub struct BatchIter<'a> {
    split: &'a DatasetSplit,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

/// Batches in split order, or in a seeded permutation when `shuffle_seed` is
/// given.
pub fn batch_iterator(
    split: &DatasetSplit,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<BatchIter<'_>, DataError> {
    if batch_size == 0 {
        return Err(DataError::Parameter("batch size must be at least 1".into()));
    }
    if split.is_empty() {
        return Err(DataError::Empty);
    }
    let mut order: Vec<usize> = (0..split.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut rng_from_seed(seed));
    }
    Ok(BatchIter {
        split,
        order,
        batch_size,
        cursor: 0,
    })
}

impl BatchIter<'_> {
    /// Index sequence of the whole pass.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let images = self.split.stack(&indices).expect("indices are in range");
        let labels = indices.iter().map(|&i| self.split.samples()[i].label).collect();
        Some(Batch {
            images,
            labels,
            indices,
        })
    }
}
