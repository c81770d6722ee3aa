//! Landmark-prompted segmentation: build point prompts from a landmark set,
//! run them through a backend (HTTP service or deterministic mock), and pick
//! one mask out of the candidates.

pub mod mock;
#[cfg(feature = "service")]
pub mod service;
pub mod wire;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, fill_convex, point_in_convex, Point};
use crate::landmarks::LandmarkSet;
use crate::mask::{MaskLabel, RegionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptPolarity {
    Foreground,
    BackgroundHint,
}

#[derive(Debug, Clone)]
pub struct PromptPoint {
    pub x: f64,
    pub y: f64,
    pub polarity: PromptPolarity,
}

/// Points steering the segmenter toward one named region. Foreground points
/// are the region's own landmarks; landmarks of other regions ride along as
/// background hints to sharpen the boundary.
#[derive(Debug, Clone)]
pub struct PointPrompt {
    pub points: Vec<PromptPoint>,
    pub target_region: String,
}

impl PointPrompt {
    pub fn foreground(&self) -> impl Iterator<Item = Point> + '_ {
        self.points
            .iter()
            .filter(|p| p.polarity == PromptPolarity::Foreground)
            .map(|p| (p.x, p.y))
    }

    pub fn check(&self, height: usize, width: usize) -> Result<()> {
        if !self
            .points
            .iter()
            .any(|p| p.polarity == PromptPolarity::Foreground)
        {
            return Err(Error::invalid(format!(
                "prompt for {} has no foreground points",
                self.target_region
            )));
        }
        for p in &self.points {
            if p.x < 0.0 || p.y < 0.0 || p.x >= width as f64 || p.y >= height as f64 {
                return Err(Error::invalid(format!(
                    "prompt point ({}, {}) outside {}x{} frame",
                    p.x, p.y, width, height
                )));
            }
        }
        Ok(())
    }
}

/// Candidate masks with confidences, one entry each, same order.
#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub masks: Vec<Array2<u8>>,
    pub scores: Vec<f32>,
}

impl SegmentationResult {
    pub fn check(&self, height: usize, width: usize) -> Result<()> {
        if self.masks.is_empty() {
            return Err(Error::integrity("segmentation returned no masks"));
        }
        if self.masks.len() != self.scores.len() {
            return Err(Error::integrity("mask/score count mismatch"));
        }
        for m in &self.masks {
            if m.dim() != (height, width) {
                return Err(Error::DimensionMismatch {
                    expected: (height, width),
                    got: m.dim(),
                });
            }
        }
        for &s in &self.scores {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::integrity(format!("score {s} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub trait SegmenterBackend: Send + Sync {
    fn segment_raw(&self, image: &Array3<u8>, prompt: &PointPrompt) -> Result<SegmentationResult>;
}

/// One prompt per requested region: that region's landmarks as foreground,
/// every other landmark as a background hint.
pub fn build_point_prompts(landmarks: &LandmarkSet, regions: &[String]) -> Result<Vec<PointPrompt>> {
    let mut prompts = Vec::with_capacity(regions.len());
    for region in regions {
        let fg = landmarks.region_points(region)?;
        let bg = landmarks.points_outside_region(region);
        let mut points: Vec<PromptPoint> = fg
            .iter()
            .map(|&(x, y)| PromptPoint {
                x,
                y,
                polarity: PromptPolarity::Foreground,
            })
            .collect();
        points.extend(bg.iter().map(|&(x, y)| PromptPoint {
            x,
            y,
            polarity: PromptPolarity::BackgroundHint,
        }));
        prompts.push(PointPrompt {
            points,
            target_region: region.clone(),
        });
    }
    Ok(prompts)
}

/// Run one prompt through a backend, validating the prompt against the frame
/// and the result against the contract before handing it back.
pub fn segment(
    image: &Array3<u8>,
    prompt: &PointPrompt,
    backend: &dyn SegmenterBackend,
) -> Result<SegmentationResult> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(Error::invalid(format!("expected 3 image channels, got {c}")));
    }
    prompt.check(h, w)?;
    let result = backend.segment_raw(image, prompt)?;
    result.check(h, w)?;
    Ok(result)
}

#[derive(Debug, Clone)]
pub enum SelectionPolicy {
    MaxScore,
    MaxOverlapWithHull(Vec<Point>),
}

/// Pick one candidate. Ties go to the lowest mask index.
pub fn select_mask(
    result: &SegmentationResult,
    policy: &SelectionPolicy,
    label: MaskLabel,
    source_region: &str,
) -> Result<RegionMask> {
    if result.masks.is_empty() {
        return Err(Error::invalid("empty segmentation result"));
    }
    let idx = match policy {
        SelectionPolicy::MaxScore => {
            let mut best = 0usize;
            for (i, &s) in result.scores.iter().enumerate() {
                if s > result.scores[best] {
                    best = i;
                }
            }
            best
        }
        SelectionPolicy::MaxOverlapWithHull(polygon) => {
            let (h, w) = result.masks[0].dim();
            let hull = convex_hull(polygon)?;
            let hull_fill = fill_convex(&hull, h, w);
            let mut best = 0usize;
            let mut best_iou = -1.0f64;
            for (i, mask) in result.masks.iter().enumerate() {
                let mut inter = 0usize;
                let mut union = 0usize;
                for (m, hf) in mask.iter().zip(hull_fill.iter()) {
                    let a = *m != 0;
                    let b = *hf != 0;
                    if a && b {
                        inter += 1;
                    }
                    if a || b {
                        union += 1;
                    }
                }
                let iou = if union == 0 {
                    0.0
                } else {
                    inter as f64 / union as f64
                };
                if iou > best_iou {
                    best_iou = iou;
                    best = i;
                }
            }
            best
        }
    };
    let bitmap = result.masks[idx].mapv(|v| u8::from(v != 0));
    Ok(RegionMask {
        bitmap,
        label,
        source_region: source_region.to_string(),
    })
}

/// True when `point` falls inside the convex hull of the prompt's
/// foreground points. Exposed for tests that cross-check the mock backend.
pub fn hull_contains(prompt: &PointPrompt, point: Point) -> Result<bool> {
    let fg: Vec<Point> = prompt.foreground().collect();
    let hull = convex_hull(&fg)?;
    Ok(point_in_convex(&hull, point))
}

/// Backend selection: `FAS_SEGMENTER_URL` set picks the HTTP service,
/// otherwise the deterministic mock.
pub fn backend_from_env() -> Result<Box<dyn SegmenterBackend>> {
    match std::env::var("FAS_SEGMENTER_URL") {
        Ok(url) if !url.is_empty() => {
            #[cfg(feature = "service")]
            {
                Ok(Box::new(service::ServiceSegmenter::new(&url)))
            }
            #[cfg(not(feature = "service"))]
            {
                let _ = url;
                Err(Error::invalid(
                    "FAS_SEGMENTER_URL is set but the service feature is not compiled in",
                ))
            }
        }
        _ => Ok(Box::new(mock::MockSegmenter::default())),
    }
}
