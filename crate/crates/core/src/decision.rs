//! Turning a predicted three-plane map into an attack / bona fide call.
//! The attack evidence is averaged over the whole face footprint, the
//! liveness evidence over a union of key regions, and the gap between the
//! two is compared against a margin.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::chanmap::ThreeChannelMap;
use crate::error::{Error, Result};
use crate::evalkit::{acer, ScoredSample};
use crate::geometry::fill_hull;
use crate::landmarks::LandmarkSet;
use crate::sample::TruthLabel;

fn default_epsilon() -> f64 {
    0.0
}

fn default_key_regions() -> Vec<String> {
    ["eyes", "nose", "mouth"].map(String::from).to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionConfig {
    /// Margin the attack mean must clear above the liveness mean.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_key_regions")]
    pub key_regions: Vec<String>,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        DecisionConfig {
            epsilon: default_epsilon(),
            key_regions: default_key_regions(),
        }
    }
}

impl DecisionConfig {
    pub fn check(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::invalid(format!(
                "margin {} must be finite and >= 0",
                self.epsilon
            )));
        }
        if self.key_regions.is_empty() {
            return Err(Error::invalid("no key regions configured"));
        }
        Ok(())
    }
}

/// Binary supports for the two intensity averages. The key area is always
/// contained in the face area and both are nonempty.
pub struct FaceAreas {
    pub face_area: Array2<u8>,
    pub key_area: Array2<u8>,
}

pub fn compute_areas(
    landmarks: &LandmarkSet,
    height: usize,
    width: usize,
    cfg: &DecisionConfig,
) -> Result<FaceAreas> {
    cfg.check()?;
    landmarks.check_bounds(height, width)?;
    let face_flat = fill_hull(&landmarks.points, height, width)?;
    let face_area = Array2::from_shape_vec((height, width), face_flat)
        .expect("fill covers the full raster");

    let mut key_area = Array2::<u8>::zeros((height, width));
    for region in &cfg.key_regions {
        let pts = landmarks.region_points(region)?;
        let filled = fill_hull(&pts, height, width)?;
        for (slot, v) in key_area.iter_mut().zip(filled) {
            *slot |= v;
        }
    }
    // Region points sit inside the full landmark hull, so intersecting only
    // guards the rasterized boundary.
    for (k, f) in key_area.iter_mut().zip(face_area.iter()) {
        *k &= f;
    }
    if face_area.iter().all(|&v| v == 0) {
        return Err(Error::invalid("face footprint rasterized to nothing"));
    }
    if key_area.iter().all(|&v| v == 0) {
        return Err(Error::invalid("key regions rasterized to nothing"));
    }
    Ok(FaceAreas { face_area, key_area })
}

fn mean_over(plane: &ndarray::ArrayView2<f32>, area: &Array2<u8>) -> Result<f64> {
    if plane.dim() != area.dim() {
        return Err(Error::DimensionMismatch {
            expected: area.dim(),
            got: plane.dim(),
        });
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (&v, &a) in plane.iter().zip(area.iter()) {
        if a != 0 {
            sum += v as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("intensity support is empty"));
    }
    Ok(sum / count as f64)
}

/// Mean of the attack plane over the face footprint.
pub fn attack_intensity(map: &ThreeChannelMap, areas: &FaceAreas) -> Result<f64> {
    mean_over(&map.attack.view(), &areas.face_area)
}

/// Mean of the living plane over the key-region union.
pub fn living_intensity(map: &ThreeChannelMap, areas: &FaceAreas) -> Result<f64> {
    mean_over(&map.living.view(), &areas.key_area)
}

pub fn decision_score(map: &ThreeChannelMap, areas: &FaceAreas) -> Result<f64> {
    Ok(attack_intensity(map, areas)? - living_intensity(map, areas)?)
}

/// The single decision path: attack iff the score clears the margin
/// strictly.
pub fn predict(map: &ThreeChannelMap, areas: &FaceAreas, cfg: &DecisionConfig) -> Result<TruthLabel> {
    cfg.check()?;
    let score = decision_score(map, areas)?;
    Ok(if score > cfg.epsilon {
        TruthLabel::Attack
    } else {
        TruthLabel::BonaFide
    })
}

/// Margin sweep over dev scores: candidates are zero, midpoints between
/// consecutive distinct scores, and one past the top, all clamped to >= 0.
/// Picks the margin with the lowest average error; ties go to the smallest.
pub fn calibrate_epsilon(dev: &[ScoredSample]) -> Result<f64> {
    if dev.is_empty() {
        return Err(Error::invalid("no dev scores to calibrate on"));
    }
    let mut scores: Vec<f64> = dev.iter().map(|s| s.score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).ok_or(()).expect("finite scores"));
    scores.dedup();
    let mut candidates = vec![0.0f64];
    for pair in scores.windows(2) {
        candidates.push(((pair[0] + pair[1]) / 2.0).max(0.0));
    }
    candidates.push((scores[scores.len() - 1] + 1.0).max(0.0));
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    candidates.dedup();

    let mut best_eps = candidates[0];
    let mut best_acer = f64::INFINITY;
    for &eps in &candidates {
        let a = acer(dev, eps)?;
        if a < best_acer {
            best_acer = a;
            best_eps = eps;
        }
    }
    Ok(best_eps)
}
