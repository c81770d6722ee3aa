//! Pseudo-depth for corpora that ship no depth sensor data: a smooth dome
//! over the face hull, peaking at the nose and falling to zero at the hull
//! boundary.

use ndarray::Array2;

use crate::depth::{normalize_depth, DepthMap};
use crate::error::Result;
use crate::geometry::{centroid, convex_hull, point_in_convex, ray_exit_distance};
use crate::landmarks::LandmarkSet;
use crate::mask::{MaskLabel, RegionMask};
use crate::sample::Sample;

/// Raised-cosine dome over the `face_skin` hull. At pixel center `p` the raw
/// value is `0.5 * (1 + cos(pi * t))` where `t` is the fraction of the ray
/// from the peak through `p` that is already behind `p`; the result is then
/// passed through `normalize_depth`, so the peak pixel reads 1.0 and
/// everything outside the hull reads exactly 0.
///
/// The peak sits at the `nose` region centroid when that region exists and
/// its centroid lies inside the hull; otherwise at the hull centroid.
pub fn pseudo_depth(landmarks: &LandmarkSet, height: usize, width: usize) -> Result<DepthMap> {
    let face_points = landmarks.region_points("face_skin")?;
    let hull = convex_hull(&face_points)?;

    let mut peak = centroid(&hull);
    if landmarks.has_region("nose") {
        let nose = centroid(&landmarks.region_points("nose")?);
        if point_in_convex(&hull, nose) {
            peak = nose;
        }
    }

    let support = RegionMask {
        bitmap: Array2::from_shape_vec(
            (height, width),
            crate::geometry::fill_convex(&hull, height, width),
        )
        .expect("fill covers the full raster"),
        label: MaskLabel::Living,
        source_region: "face_skin".to_string(),
    };

    let mut raw = Array2::<f32>::zeros((height, width));
    for i in 0..height {
        for j in 0..width {
            if support.bitmap[[i, j]] == 0 {
                continue;
            }
            let p = (j as f64 + 0.5, i as f64 + 0.5);
            let dx = p.0 - peak.0;
            let dy = p.1 - peak.1;
            let dist = (dx * dx + dy * dy).sqrt();
            let t = if dist < 1e-9 {
                0.0
            } else {
                let dir = (dx / dist, dy / dist);
                match ray_exit_distance(&hull, peak, dir) {
                    Some(exit) if exit > 0.0 => (dist / exit).clamp(0.0, 1.0),
                    _ => 1.0,
                }
            };
            raw[[i, j]] = 0.5 * (1.0 + (std::f64::consts::PI * t).cos()) as f32;
        }
    }
    normalize_depth(&raw, &support)
}

/// Fills in `sample.depth` with [`pseudo_depth`] when the sample has none.
/// Samples that already carry depth are left untouched.
pub fn attach_pseudo_depth(sample: &mut Sample) -> Result<()> {
    if sample.depth.is_some() {
        return Ok(());
    }
    let (h, w) = sample.frame_dims();
    sample.depth = Some(pseudo_depth(&sample.landmarks, h, w)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::geometry::fill_hull;
    use std::collections::BTreeMap;

    fn landmarks(nose_center: (f64, f64)) -> LandmarkSet {
        let points = vec![
            (3.0, 3.0),
            (28.0, 3.0),
            (28.0, 28.0),
            (3.0, 28.0),
            (nose_center.0 - 1.0, nose_center.1 - 1.0),
            (nose_center.0 + 1.0, nose_center.1 - 1.0),
            (nose_center.0, nose_center.1 + 2.0),
        ];
        let mut regions = BTreeMap::new();
        regions.insert("face_skin".to_string(), vec![0, 1, 2, 3]);
        regions.insert("nose".to_string(), vec![4, 5, 6]);
        LandmarkSet::new(points, regions, &[]).unwrap()
    }

    #[test]
    fn peak_pixel_reads_one_and_exterior_reads_zero() {
        // Nose centroid at (15.5, 15.5), the center of pixel (15, 15).
        let lm = landmarks((15.5, 15.5));
        let depth = pseudo_depth(&lm, 32, 32).unwrap();
        assert_eq!(depth.values[[15, 15]], 1.0);

        let face = fill_hull(&lm.region_points("face_skin").unwrap(), 32, 32).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let v = depth.values[[i, j]];
                assert!((0.0..=1.0).contains(&v));
                if face[i * 32 + j] == 0 {
                    assert_eq!(v, 0.0, "pixel ({i}, {j}) is outside the hull");
                }
            }
        }
    }

    #[test]
    fn decays_monotonically_along_rays_from_the_peak() {
        let lm = landmarks((15.5, 15.5));
        let depth = pseudo_depth(&lm, 32, 32).unwrap();
        for (di, dj) in [(0i64, 1i64), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, 1), (1, -1), (-1, -1)] {
            let mut prev = depth.values[[15, 15]];
            for step in 1..16 {
                let i = 15 + di * step;
                let j = 15 + dj * step;
                if !(0..32).contains(&i) || !(0..32).contains(&j) {
                    break;
                }
                let v = depth.values[[i as usize, j as usize]];
                assert!(
                    v <= prev + 1e-6,
                    "depth rose from {prev} to {v} along ({di}, {dj}) at step {step}"
                );
                prev = v;
            }
        }
    }

    #[test]
    fn missing_face_skin_region_is_an_error() {
        let points = vec![(4.0, 4.0), (12.0, 4.0), (8.0, 12.0)];
        let mut regions = BTreeMap::new();
        regions.insert("nose".to_string(), vec![0, 1, 2]);
        let lm = LandmarkSet::new(points, regions, &[]).unwrap();
        match pseudo_depth(&lm, 16, 16) {
            Err(Error::UnknownRegion(name)) => assert_eq!(name, "face_skin"),
            other => panic!("expected UnknownRegion, got {other:?}"),
        }
    }

    #[test]
    fn nose_outside_the_hull_falls_back_to_the_hull_centroid() {
        // Nose centroid parked far outside the face square.
        let lm = landmarks((100.0, 100.0));
        let depth = pseudo_depth(&lm, 128, 128).unwrap();
        // Peak lands at the hull centroid (15.5, 15.5) = pixel (15, 15).
        assert_eq!(depth.values[[15, 15]], 1.0);
    }

    #[test]
    fn existing_depth_is_preserved() {
        let lm = landmarks((15.5, 15.5));
        let existing = DepthMap { values: Array2::from_elem((32, 32), 0.25) };
        let mut sample = Sample {
            id: "s".to_string(),
            image: ndarray::Array3::zeros((32, 32, 3)),
            landmarks: lm,
            depth: Some(existing.clone()),
            truth: crate::sample::TruthLabel::BonaFide,
            attack_type: None,
            pai_regions: Vec::new(),
            split: crate::sample::Split::Train,
        };
        attach_pseudo_depth(&mut sample).unwrap();
        assert_eq!(sample.depth.unwrap().values, existing.values);
    }

    #[test]
    fn attaches_when_absent() {
        let lm = landmarks((15.5, 15.5));
        let mut sample = Sample {
            id: "s".to_string(),
            image: ndarray::Array3::zeros((32, 32, 3)),
            landmarks: lm,
            depth: None,
            truth: crate::sample::TruthLabel::BonaFide,
            attack_type: None,
            pai_regions: Vec::new(),
            split: crate::sample::Split::Train,
        };
        attach_pseudo_depth(&mut sample).unwrap();
        let d = sample.depth.unwrap();
        assert_eq!(d.dims(), (32, 32));
        assert!(d.values.iter().any(|&v| v == 1.0));
    }
}
