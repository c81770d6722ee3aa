//! Normalized depth rasters used as the value source for the attack and
//! living channels.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mask::RegionMask;

/// An `H x W` raster of depth values in `[0, 1]`. Pixels outside every face
/// region are exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Array2<f32>,
}

impl DepthMap {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Affinely rescales raw depth inside `face_support` so the minimum maps to
/// 0 and the maximum to 1; everything outside the support becomes exactly 0.
///
/// When the raw values inside the support are all equal the supported pixels
/// are set to 1.0, so a flat face still stands out from the zero background.
pub fn normalize_depth(raw: &Array2<f32>, face_support: &RegionMask) -> Result<DepthMap> {
    if raw.dim() != face_support.dims() {
        return Err(Error::DimensionMismatch {
            expected: face_support.dims(),
            got: raw.dim(),
        });
    }
    if face_support.is_empty() {
        return Err(Error::invalid("face support mask is empty"));
    }
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for (&v, &m) in raw.iter().zip(face_support.bitmap.iter()) {
        if m == 1 {
            min = min.min(v);
            max = max.max(v);
        }
    }
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::invalid("non-finite depth values inside face support"));
    }
    let span = max - min;
    let values = Array2::from_shape_fn(raw.dim(), |ij| {
        if face_support.bitmap[ij] == 1 {
            if span > 0.0 {
                (raw[ij] - min) / span
            } else {
                1.0
            }
        } else {
            0.0
        }
    });
    Ok(DepthMap { values })
}
