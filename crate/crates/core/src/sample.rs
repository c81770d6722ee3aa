//! Dataset samples: an RGB frame plus landmarks, ground truth and optional
//! depth.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::landmarks::LandmarkSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthLabel {
    BonaFide,
    Attack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Where the presentation attack instrument sits in the frame. Either a
/// named landmark region or an explicit polygon in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PaiRegionSpec {
    Named(String),
    Polygon(Vec<Point>),
}

/// One dataset record. `image` is `H x W x 3`, channels RGB, u8.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Array3<u8>,
    pub landmarks: LandmarkSet,
    pub depth: Option<DepthMap>,
    pub truth: TruthLabel,
    pub attack_type: Option<String>,
    pub pai_regions: Vec<PaiRegionSpec>,
    pub split: Split,
}

impl Sample {
    pub fn frame_dims(&self) -> (usize, usize) {
        let (h, w, _) = self.image.dim();
        (h, w)
    }

    /// Structural checks: channel count, landmark bounds against the frame,
    /// depth dimensions, and label/attack-type agreement.
    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.image.dim();
        if c != 3 {
            return Err(Error::invalid(format!("expected 3 image channels, got {c}")));
        }
        if h == 0 || w == 0 {
            return Err(Error::invalid("empty image frame"));
        }
        self.landmarks.check_bounds(h, w)?;
        if let Some(depth) = &self.depth {
            if depth.values.dim() != (h, w) {
                return Err(Error::DimensionMismatch {
                    expected: (h, w),
                    got: depth.values.dim(),
                });
            }
        }
        match self.truth {
            TruthLabel::Attack => {
                if self.attack_type.is_none() {
                    return Err(Error::invalid(format!(
                        "sample {}: attack sample without attack_type",
                        self.id
                    )));
                }
            }
            TruthLabel::BonaFide => {
                if self.attack_type.is_some() {
                    return Err(Error::invalid(format!(
                        "sample {}: bona fide sample carries attack_type",
                        self.id
                    )));
                }
                if !self.pai_regions.is_empty() {
                    return Err(Error::invalid(format!(
                        "sample {}: bona fide sample carries pai_regions",
                        self.id
                    )));
                }
            }
        }
        for spec in &self.pai_regions {
            match spec {
                PaiRegionSpec::Named(name) => {
                    if !self.landmarks.has_region(name) {
                        return Err(Error::UnknownRegion(name.clone()));
                    }
                }
                PaiRegionSpec::Polygon(points) => {
                    if points.len() < 3 {
                        return Err(Error::invalid("pai polygon needs at least 3 points"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_attack(&self) -> bool {
        self.truth == TruthLabel::Attack
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn landmarks_4x4() -> LandmarkSet {
        let points = vec![(0.5, 0.5), (3.0, 0.5), (3.0, 3.0), (0.5, 3.0)];
        let mut regions = BTreeMap::new();
        regions.insert("face_skin".to_string(), vec![0, 1, 2, 3]);
        LandmarkSet::new(points, regions, &[]).unwrap()
    }

    fn bona_fide() -> Sample {
        Sample {
            id: "s0".into(),
            image: Array3::zeros((4, 4, 3)),
            landmarks: landmarks_4x4(),
            depth: None,
            truth: TruthLabel::BonaFide,
            attack_type: None,
            pai_regions: vec![],
            split: Split::Train,
        }
    }

    #[test]
    fn bona_fide_validates() {
        bona_fide().validate().unwrap();
    }

    #[test]
    fn attack_requires_attack_type() {
        let mut s = bona_fide();
        s.truth = TruthLabel::Attack;
        assert!(s.validate().is_err());
        s.attack_type = Some("print".into());
        s.validate().unwrap();
    }

    #[test]
    fn bona_fide_rejects_attack_fields() {
        let mut s = bona_fide();
        s.attack_type = Some("print".into());
        assert!(s.validate().is_err());
    }

    #[test]
    fn named_pai_region_must_exist() {
        let mut s = bona_fide();
        s.truth = TruthLabel::Attack;
        s.attack_type = Some("patch".into());
        s.pai_regions = vec![PaiRegionSpec::Named("antenna".into())];
        assert!(matches!(s.validate(), Err(Error::UnknownRegion(_))));
    }

    #[test]
    fn pai_spec_serde_shapes() {
        let named: PaiRegionSpec = serde_json::from_str("\"mouth\"").unwrap();
        assert_eq!(named, PaiRegionSpec::Named("mouth".into()));
        let poly: PaiRegionSpec = serde_json::from_str("[[0.0,0.0],[4.0,0.0],[2.0,3.0]]").unwrap();
        assert!(matches!(poly, PaiRegionSpec::Polygon(p) if p.len() == 3));
    }

    #[test]
    fn depth_dims_must_match_frame() {
        let mut s = bona_fide();
        s.depth = Some(DepthMap {
            values: ndarray::Array2::zeros((2, 2)),
        });
        assert!(s.validate().is_err());
    }
}
