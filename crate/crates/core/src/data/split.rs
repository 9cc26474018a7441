use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{DatasetSplit, SplitTag};
use crate::error::DataError;
use crate::rng::{derive_seed, rng_from_seed};

/// Train/val/test fractions; they must sum to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || libm::fabs(parts.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(DataError::Parameter(format!(
                "split ratios {parts:?} must lie in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: DatasetSplit,
    pub val: DatasetSplit,
    pub test: DatasetSplit,
}

/// Per-class seeded partition. Each class contributes `round(n·train)` and
/// `round(n·val)` samples to train and val and the rest to test; every split
/// keeps the original sample order.
pub fn stratified_split(all: &DatasetSplit, ratios: SplitRatios, seed: u64) -> Result<Splits, DataError> {
    ratios.validate()?;
    if all.is_empty() {
        return Err(DataError::Empty);
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in 0..all.num_classes() {
        let mut members: Vec<usize> = (0..all.len())
            .filter(|&i| all.samples()[i].label == class)
            .collect();
        members.shuffle(&mut rng_from_seed(derive_seed(seed, "split", &[class as u64])));
        let n = members.len() as f64;
        let n_train = libm::round(n * ratios.train) as usize;
        let n_val = (libm::round(n * ratios.val) as usize).min(members.len() - n_train);
        parts[0].extend_from_slice(&members[..n_train]);
        parts[1].extend_from_slice(&members[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&members[n_train + n_val..]);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(Splits {
        train: all.subset(&parts[0], SplitTag::Train)?,
        val: all.subset(&parts[1], SplitTag::Val)?,
        test: all.subset(&parts[2], SplitTag::Test)?,
    })
}
