//! Map assembly: apply the labeling policy to region masks, multiply in
//! depth, and emit the three-channel annotation.

mod fga1;
pub mod preview;

pub use fga1::{read_map, write_map};
pub use preview::export_preview;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::chanmap::{Channel, ThreeChannelMap};
use crate::error::{Error, Result};
use crate::geometry::fill_hull;
use crate::mask::{mask_difference, mask_intersect, mask_union, MaskLabel, RegionMask};
use crate::sample::{PaiRegionSpec, Sample, TruthLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackRegionSource {
    /// Attack support comes from the sample's PAI regions; samples without
    /// any (full-frame print/replay attacks) fall back to the face hull.
    PaiRegions,
    /// Attack support is the whole-face hull for every attack sample.
    WholeFaceHull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    DepthValued,
    BinaryMask,
}

fn default_living() -> Vec<String> {
    vec!["face_skin".to_string()]
}

fn default_background() -> Vec<String> {
    vec!["hair".to_string(), "eyebrows".to_string(), "ears".to_string()]
}

fn default_source() -> AttackRegionSource {
    AttackRegionSource::PaiRegions
}

fn default_kind() -> AnnotationKind {
    AnnotationKind::DepthValued
}

fn default_subset() -> Vec<ChannelName> {
    vec![ChannelName::Attack, ChannelName::Living, ChannelName::Background]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelName {
    Attack,
    Living,
    Background,
}

impl From<ChannelName> for Channel {
    fn from(c: ChannelName) -> Channel {
        match c {
            ChannelName::Attack => Channel::Attack,
            ChannelName::Living => Channel::Living,
            ChannelName::Background => Channel::Background,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelingPolicy {
    #[serde(default = "default_living")]
    pub living_regions: Vec<String>,
    #[serde(default = "default_background")]
    pub background_regions: Vec<String>,
    #[serde(default = "default_source")]
    pub attack_region_source: AttackRegionSource,
    #[serde(default = "default_kind")]
    pub annotation_kind: AnnotationKind,
    #[serde(default = "default_subset")]
    pub channel_subset: Vec<ChannelName>,
}

impl Default for LabelingPolicy {
    fn default() -> Self {
        LabelingPolicy {
            living_regions: default_living(),
            background_regions: default_background(),
            attack_region_source: default_source(),
            annotation_kind: default_kind(),
            channel_subset: default_subset(),
        }
    }
}

impl LabelingPolicy {
    pub fn check(&self) -> Result<()> {
        if self.channel_subset.is_empty() {
            return Err(Error::invalid("channel_subset must not be empty"));
        }
        for r in &self.living_regions {
            if self.background_regions.contains(r) {
                return Err(Error::invalid(format!(
                    "region {r} listed as both living and background"
                )));
            }
        }
        Ok(())
    }

    pub fn keeps(&self, c: ChannelName) -> bool {
        self.channel_subset.contains(&c)
    }

    /// Regions the segmenter must be asked for under this policy: the
    /// living set plus any named PAI regions of the sample.
    pub fn regions_to_segment(&self, sample: &Sample) -> Vec<String> {
        let mut regions = self.living_regions.clone();
        if self.attack_region_source == AttackRegionSource::PaiRegions {
            for spec in &sample.pai_regions {
                if let PaiRegionSpec::Named(name) = spec {
                    if !regions.contains(name) {
                        regions.push(name.clone());
                    }
                }
            }
        }
        regions
    }
}

fn whole_face_mask(sample: &Sample) -> Result<RegionMask> {
    let (h, w) = sample.frame_dims();
    let fill = fill_hull(&sample.landmarks.points, h, w)?;
    let bitmap = Array2::from_shape_vec((h, w), fill).expect("fill length is h*w");
    Ok(RegionMask {
        bitmap,
        label: MaskLabel::Attack,
        source_region: "whole_face".to_string(),
    })
}

/// Split the segmented masks into attack and living supports. Attack wins
/// contested pixels: an instrument covers whatever skin it sits on.
pub fn label_regions(
    sample: &Sample,
    masks: &[RegionMask],
    policy: &LabelingPolicy,
) -> Result<(RegionMask, RegionMask)> {
    policy.check()?;
    let (h, w) = sample.frame_dims();

    let attack = match sample.truth {
        TruthLabel::BonaFide => {
            if !sample.pai_regions.is_empty() {
                return Err(Error::integrity(format!(
                    "sample {}: bona fide with pai_regions",
                    sample.id
                )));
            }
            RegionMask::zeros(h, w, MaskLabel::Attack)
        }
        TruthLabel::Attack => match policy.attack_region_source {
            AttackRegionSource::WholeFaceHull => whole_face_mask(sample)?,
            AttackRegionSource::PaiRegions => {
                if sample.pai_regions.is_empty() {
                    // Full-frame attack: no localized instrument, the whole
                    // presented face is the artifact.
                    whole_face_mask(sample)?
                } else {
                    let mut parts: Vec<RegionMask> = Vec::new();
                    for spec in &sample.pai_regions {
                        match spec {
                            PaiRegionSpec::Named(name) => {
                                let found = masks
                                    .iter()
                                    .find(|m| &m.source_region == name)
                                    .ok_or_else(|| {
                                        Error::invalid(format!(
                                            "no segmented mask for pai region {name}"
                                        ))
                                    })?;
                                parts.push(found.clone());
                            }
                            PaiRegionSpec::Polygon(points) => {
                                let fill = fill_hull(points, h, w)?;
                                let bitmap = Array2::from_shape_vec((h, w), fill)
                                    .expect("fill length is h*w");
                                parts.push(RegionMask {
                                    bitmap,
                                    label: MaskLabel::Attack,
                                    source_region: "pai_polygon".to_string(),
                                });
                            }
                        }
                    }
                    let refs: Vec<&RegionMask> = parts.iter().collect();
                    mask_union(&refs, h, w, MaskLabel::Attack)?
                }
            }
        },
    };

    let mut living_parts: Vec<&RegionMask> = Vec::new();
    for name in &policy.living_regions {
        let found = masks
            .iter()
            .find(|m| &m.source_region == name)
            .ok_or_else(|| Error::invalid(format!("no segmented mask for living region {name}")))?;
        living_parts.push(found);
    }
    let living_union = mask_union(&living_parts, h, w, MaskLabel::Living)?;
    let living = mask_difference(&living_union, &attack, MaskLabel::Living)?;

    Ok((attack, living))
}

/// Eq.-style assembly: depth (or 1 in binary mode) inside each support,
/// background the inversion of their union; ablated channels are zeroed.
pub fn construct_three_channel_map(
    sample: &Sample,
    attack_mask: &RegionMask,
    living_mask: &RegionMask,
    policy: &LabelingPolicy,
) -> Result<ThreeChannelMap> {
    policy.check()?;
    let (h, w) = sample.frame_dims();
    if attack_mask.dims() != (h, w) || living_mask.dims() != (h, w) {
        return Err(Error::DimensionMismatch {
            expected: (h, w),
            got: attack_mask.dims(),
        });
    }
    if mask_intersect(attack_mask, living_mask, MaskLabel::Attack)?.count_set() > 0 {
        return Err(Error::integrity("attack and living masks overlap"));
    }

    let depth: Array2<f32> = match policy.annotation_kind {
        AnnotationKind::BinaryMask => Array2::ones((h, w)),
        AnnotationKind::DepthValued => {
            let d = sample
                .depth
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("sample {}: depth_valued annotation without depth", sample.id)))?;
            if d.values.dim() != (h, w) {
                return Err(Error::DimensionMismatch {
                    expected: (h, w),
                    got: d.values.dim(),
                });
            }
            for &v in d.values.iter() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::integrity(format!("depth value {v} outside [0, 1]")));
                }
            }
            d.values.clone()
        }
    };

    let mut map = ThreeChannelMap::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let a = attack_mask.bitmap[[i, j]];
            let l = living_mask.bitmap[[i, j]];
            if a == 1 {
                map.attack[[i, j]] = depth[[i, j]];
            }
            if l == 1 {
                map.living[[i, j]] = depth[[i, j]];
            }
            if a == 0 && l == 0 {
                map.background[[i, j]] = 1.0;
            }
        }
    }

    if !policy.keeps(ChannelName::Attack) {
        map.attack.fill(0.0);
    }
    if !policy.keeps(ChannelName::Living) {
        map.living.fill(0.0);
    }
    if !policy.keeps(ChannelName::Background) {
        map.background.fill(0.0);
    }
    Ok(map)
}
