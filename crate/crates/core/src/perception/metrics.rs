use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{PerceptionError, SegMask, CLASS_COUNT};
use crate::rng::XorShift64Star;

/// Per-class intersection over union. A class absent from both masks is
/// `None` and left out of the mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub per_class: [Option<f64>; CLASS_COUNT],
    /// NaN when no class is defined (empty masks)
    pub miou: f64,
}

impl IouReport {
    pub fn from_counts(intersection: &[u64; CLASS_COUNT], union: &[u64; CLASS_COUNT]) -> Self {
        let per_class: [Option<f64>; CLASS_COUNT] = core::array::from_fn(|c| {
            (union[c] > 0).then(|| intersection[c] as f64 / union[c] as f64)
        });
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        let miou = if defined.is_empty() {
            f64::NAN
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        };
        IouReport { per_class, miou }
    }
}

/// Intersection and union pixel counts per class, for pooling over a dataset.
pub fn iou_counts(
    pred: &SegMask,
    truth: &SegMask,
) -> Result<([u64; CLASS_COUNT], [u64; CLASS_COUNT]), PerceptionError> {
    if pred.width != truth.width || pred.height != truth.height {
        return Err(PerceptionError::SizeMismatch(
            pred.width,
            pred.height,
            truth.width,
            truth.height,
        ));
    }
    let mut inter = [0u64; CLASS_COUNT];
    let mut union = [0u64; CLASS_COUNT];
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        let (p, t) = (p as usize % CLASS_COUNT, t as usize % CLASS_COUNT);
        if p == t {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[t] += 1;
        }
    }
    Ok((inter, union))
}

pub fn iou(pred: &SegMask, truth: &SegMask) -> Result<IouReport, PerceptionError> {
    let (inter, union) = iou_counts(pred, truth)?;
    Ok(IouReport::from_counts(&inter, &union))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then 8:1:1 with validation and test sized by floor and
/// the remainder going to training.
pub fn split_dataset<T: Clone>(ids: &[T], seed: u64) -> Split<T> {
    let mut shuffled: Vec<T> = ids.to_vec();
    XorShift64Star::new(seed).shuffle(&mut shuffled);
    let n_eval = ids.len() / 10;
    let n_train = ids.len() - 2 * n_eval;
    let test = shuffled.split_off(n_train + n_eval);
    let val = shuffled.split_off(n_train);
    Split {
        train: shuffled,
        val,
        test,
    }
}
