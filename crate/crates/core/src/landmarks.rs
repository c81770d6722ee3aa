//! Named 2-D facial keypoints grouped into semantic regions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};

/// The fixed face-region vocabulary. Datasets may declare additional PAI
/// region names on top of these.
pub const FACE_REGIONS: [&str; 8] = [
    "eyes",
    "mouth",
    "eyebrows",
    "forehead",
    "nose",
    "ears",
    "hair",
    "face_skin",
];

/// Ordered landmark points plus a region index mapping region names to the
/// point indices that belong to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<Point>,
    /// BTreeMap keeps region iteration order deterministic.
    pub regions: BTreeMap<String, Vec<usize>>,
}

impl LandmarkSet {
    /// Builds a landmark set, validating the region index against the point
    /// list and the region vocabulary.
    ///
    /// `extra_regions` lists dataset-declared PAI region names allowed in
    /// addition to the fixed face vocabulary.
    pub fn new(
        points: Vec<Point>,
        regions: BTreeMap<String, Vec<usize>>,
        extra_regions: &[String],
    ) -> Result<Self> {
        for (name, idx) in &regions {
            if !FACE_REGIONS.contains(&name.as_str())
                && !extra_regions.iter().any(|r| r == name)
            {
                return Err(Error::UnknownRegion(name.clone()));
            }
            if idx.is_empty() {
                return Err(Error::invalid(format!("region `{name}` has no points")));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= points.len()) {
                return Err(Error::invalid(format!(
                    "region `{name}` references point {bad} but only {} points exist",
                    points.len()
                )));
            }
        }
        Ok(LandmarkSet { points, regions })
    }

    /// Checks that every point lies inside a `height x width` canvas.
    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        for (i, &(x, y)) in self.points.iter().enumerate() {
            if !(0.0..width as f64).contains(&x) || !(0.0..height as f64).contains(&y) {
                return Err(Error::invalid(format!(
                    "landmark {i} at ({x}, {y}) outside {width}x{height} image"
                )));
            }
        }
        Ok(())
    }

    pub fn region_names(&self) -> impl Iterator<Item = &str> {
        self.regions.keys().map(|s| s.as_str())
    }

    pub fn has_region(&self, name: &str) -> bool {
        self.regions.contains_key(name)
    }

    /// Points of one region, in index order.
    pub fn region_points(&self, name: &str) -> Result<Vec<Point>> {
        let idx = self
            .regions
            .get(name)
            .ok_or_else(|| Error::UnknownRegion(name.to_string()))?;
        Ok(idx.iter().map(|&i| self.points[i]).collect())
    }

    /// Every point that is not part of `region`, used for background hints.
    pub fn points_outside_region(&self, region: &str) -> Vec<Point> {
        let member: Vec<usize> = self.regions.get(region).cloned().unwrap_or_default();
        self.points
            .iter()
            .enumerate()
            .filter(|(i, _)| !member.contains(i))
            .map(|(_, &p)| p)
            .collect()
    }
}

/// Convex hull of a region's points, vertices in counter-clockwise order.
///
/// Rejects unknown regions and regions with fewer than 3 points.
pub fn landmark_region_polygon(landmarks: &LandmarkSet, region: &str) -> Result<Vec<Point>> {
    let pts = landmarks.region_points(region)?;
    if pts.len() < 3 {
        return Err(Error::invalid(format!(
            "region `{region}` has {} points, need at least 3 for a polygon",
            pts.len()
        )));
    }
    geometry::convex_hull(&pts)
}
