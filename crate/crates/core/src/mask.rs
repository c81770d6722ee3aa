//! Binary region masks and the small mask algebra the annotator builds on.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic class a mask contributes to in the three-channel map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskLabel {
    Attack,
    Living,
    Background,
}

/// A binary pixel mask tagged with its semantic class and the region (or PAI
/// identifier) it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    /// Row-major bitmap, values 0 or 1, same dimensions as the source image.
    pub bitmap: Array2<u8>,
    pub label: MaskLabel,
    pub source_region: String,
}

impl RegionMask {
    pub fn new(bitmap: Array2<u8>, label: MaskLabel, source_region: impl Into<String>) -> Self {
        debug_assert!(bitmap.iter().all(|&v| v <= 1), "mask values must be 0/1");
        RegionMask {
            bitmap,
            label,
            source_region: source_region.into(),
        }
    }

    pub fn zeros(height: usize, width: usize, label: MaskLabel) -> Self {
        RegionMask::new(Array2::zeros((height, width)), label, "")
    }

    pub fn from_bits(bits: &[u8], height: usize, width: usize, label: MaskLabel) -> Self {
        let bitmap = Array2::from_shape_vec((height, width), bits.to_vec())
            .expect("bitmap length must equal height * width");
        RegionMask::new(bitmap, label, "")
    }

    pub fn dims(&self) -> (usize, usize) {
        self.bitmap.dim()
    }

    pub fn count_set(&self) -> usize {
        self.bitmap.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bitmap.iter().all(|&v| v == 0)
    }
}

fn check_same_dims(a: &RegionMask, b: &RegionMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            got: b.dims(),
        });
    }
    Ok(())
}

/// Per-pixel OR over a list of same-sized masks; the label of the result is
/// chosen by the caller. An empty list on a given canvas yields all zeros.
pub fn mask_union(masks: &[&RegionMask], height: usize, width: usize, label: MaskLabel) -> Result<RegionMask> {
    let mut out = Array2::<u8>::zeros((height, width));
    for m in masks {
        if m.dims() != (height, width) {
            return Err(Error::DimensionMismatch {
                expected: (height, width),
                got: m.dims(),
            });
        }
        for (o, &v) in out.iter_mut().zip(m.bitmap.iter()) {
            *o |= v;
        }
    }
    Ok(RegionMask::new(out, label, ""))
}

/// Per-pixel logical NOT.
pub fn mask_invert(mask: &RegionMask) -> RegionMask {
    let bitmap = mask.bitmap.mapv(|v| 1 - v);
    RegionMask::new(bitmap, mask.label, mask.source_region.clone())
}

/// Per-pixel AND of two masks.
pub fn mask_intersect(a: &RegionMask, b: &RegionMask, label: MaskLabel) -> Result<RegionMask> {
    check_same_dims(a, b)?;
    let mut bitmap = a.bitmap.clone();
    for (o, &v) in bitmap.iter_mut().zip(b.bitmap.iter()) {
        *o &= v;
    }
    Ok(RegionMask::new(bitmap, label, ""))
}

/// Pixels of `a` not set in `b`.
pub fn mask_difference(a: &RegionMask, b: &RegionMask, label: MaskLabel) -> Result<RegionMask> {
    check_same_dims(a, b)?;
    let mut bitmap = a.bitmap.clone();
    for (o, &v) in bitmap.iter_mut().zip(b.bitmap.iter()) {
        if v == 1 {
            *o = 0;
        }
    }
    Ok(RegionMask::new(bitmap, label, ""))
}
