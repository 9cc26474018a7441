//! Samples, dataset splits, the synthetic benchmark, and deterministic
//! preprocessing.
//!
//! Images are `[C, H, W]` `f32` tensors with every pixel in `[0, 1]`.

mod augment;
mod batch;
mod blur;
mod resize;
mod split;
mod synth;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use augment::{apply_augment, augment, draw_augment, AugmentDecision, AUGMENT_PAD};
pub use batch::{batch_iterator, Batch, BatchIter};
pub use blur::{gaussian_blur, gaussian_kernel};
pub use resize::resize_bilinear;
pub use split::{stratified_split, SplitRatios, Splits};
pub use synth::{synth_dataset, SynthConfig, SYNTH_CLASSES};

use crate::error::DataError;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    image: Tensor<f32>,
    pub label: usize,
    pub id: String,
}

impl Sample {
    /// Checks that `image` is `[C, H, W]` with every pixel in `[0, 1]`.
    pub fn new(image: Tensor<f32>, label: usize, id: impl Into<String>) -> Result<Self, DataError> {
        if image.ndim() != 3 {
            return Err(DataError::SampleShape {
                got: image.shape().to_vec(),
                expected: Vec::from([0, 0, 0]),
            });
        }
        check_pixels(image.data())?;
        Ok(Self {
            image,
            label,
            id: id.into(),
        })
    }

    pub fn image(&self) -> &Tensor<f32> {
        &self.image
    }

    pub fn into_image(self) -> Tensor<f32> {
        self.image
    }
}

pub(crate) fn check_pixels(data: &[f32]) -> Result<(), DataError> {
    match data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(DataError::PixelRange {
            index,
            value: data[index] as f64,
        }),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SplitTag {
    Train,
    Val,
    Test,
    /// A whole dataset before partitioning.
    All,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::All => "all",
        }
    }
}

/// Ordered samples sharing one image shape and one class list.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    samples: Vec<Sample>,
    class_names: Vec<String>,
    tag: SplitTag,
}

impl DatasetSplit {
    /// Checks labels, id uniqueness and that all images share a shape.
    pub fn new(samples: Vec<Sample>, class_names: Vec<String>, tag: SplitTag) -> Result<Self, DataError> {
        let k = class_names.len();
        let mut ids = BTreeSet::new();
        let shape = samples.first().map(|s| s.image.shape().to_vec());
        for s in &samples {
            if s.label >= k {
                return Err(DataError::Label {
                    label: s.label,
                    classes: k,
                });
            }
            if !ids.insert(s.id.as_str()) {
                return Err(DataError::DuplicateId(s.id.clone()));
            }
            if Some(s.image.shape()) != shape.as_deref() {
                return Err(DataError::SampleShape {
                    got: s.image.shape().to_vec(),
                    expected: shape.clone().unwrap_or_default(),
                });
            }
        }
        Ok(Self {
            samples,
            class_names,
            tag,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn tag(&self) -> SplitTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `[C, H, W]` of every image, if any.
    pub fn image_dims(&self) -> Option<[usize; 3]> {
        self.samples.first().map(|s| {
            let sh = s.image.shape();
            [sh[0], sh[1], sh[2]]
        })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Images at `indices` stacked into `[N, C, H, W]`.
    pub fn stack(&self, indices: &[usize]) -> Result<Tensor<f32>, DataError> {
        if indices.is_empty() {
            return Err(DataError::Empty);
        }
        let images: Vec<&Tensor<f32>> = indices.iter().map(|&i| &self.samples[i].image).collect();
        Ok(Tensor::stack(&images)?)
    }

    /// Same samples under another tag.
    pub fn with_tag(mut self, tag: SplitTag) -> Self {
        self.tag = tag;
        self
    }

    /// Subset at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], tag: SplitTag) -> Result<Self, DataError> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.samples.len()) {
            return Err(DataError::Parameter(format!(
                "index {bad} out of range for {} samples",
                self.samples.len()
            )));
        }
        Self::new(
            indices.iter().map(|&i| self.samples[i].clone()).collect(),
            self.class_names.clone(),
            tag,
        )
    }
}

#[cfg(test)]
mod tests;
