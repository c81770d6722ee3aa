//! Multi-channel region exchange augmentation: per selected sample, draw a
//! region of its own, a donor sample and a donor region, align the donor
//! region onto the target region, and rewrite image and label planes in
//! lockstep. Fully deterministic given the seed.

pub mod align;

pub use align::{fit_similarity, plan_warp, Edit, RegionWarp, Similarity};

use ndarray::Array3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chanmap::ThreeChannelMap;
use crate::error::{Error, Result};
use crate::geometry::convex_hull;
use crate::landmarks::LandmarkSet;

const DONOR_RETRIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    IntegratedAttack,
    Overlay,
    ClippingExchange,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Scheme> {
        match s {
            "integrated_attack" => Ok(Scheme::IntegratedAttack),
            "overlay" => Ok(Scheme::Overlay),
            "clipping_exchange" => Ok(Scheme::ClippingExchange),
            other => Err(Error::invalid(format!("unknown scheme {other}"))),
        }
    }
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Fraction of the batch that receives exchanges.
    pub gamma: f64,
    /// Exchange steps per selected sample.
    pub rho: u32,
    pub scheme: Scheme,
    pub seed: u64,
    /// Blend weight for the overlay scheme; labels follow the donor only
    /// when alpha >= 0.5.
    #[serde(default = "default_alpha")]
    pub overlay_alpha: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            gamma: 0.5,
            rho: 1,
            scheme: Scheme::Overlay,
            seed: 0,
            overlay_alpha: 1.0,
        }
    }
}

impl AugmentConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.rho < 1 {
            return Err(Error::invalid("rho must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.overlay_alpha) {
            return Err(Error::invalid("overlay_alpha outside [0, 1]"));
        }
        Ok(())
    }
}

/// One augmentable sample: RGB frame, its label map, its landmarks.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub image: Array3<u8>,
    pub label: ThreeChannelMap,
    pub landmarks: LandmarkSet,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

impl Batch {
    pub fn check(&self) -> Result<()> {
        let Some(first) = self.items.first() else {
            return Ok(());
        };
        let dims = first.image.dim();
        for (idx, item) in self.items.iter().enumerate() {
            if item.image.dim() != dims {
                return Err(Error::invalid(format!(
                    "batch item {idx} has image dims {:?}, expected {:?}",
                    item.image.dim(),
                    dims
                )));
            }
            let (h, w, _) = dims;
            if item.label.dims() != (h, w) {
                return Err(Error::DimensionMismatch {
                    expected: (h, w),
                    got: item.label.dims(),
                });
            }
            item.landmarks.check_bounds(h, w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawRecord {
    pub target_index: usize,
    pub step: u32,
    pub target_region: String,
    pub donor_index: Option<usize>,
    pub donor_region: Option<String>,
    pub applied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawLog {
    pub seed: u64,
    pub gamma: f64,
    pub rho: u32,
    pub scheme: Scheme,
    pub records: Vec<DrawRecord>,
}

struct DonorSnapshot {
    image: Array3<u8>,
    label: ThreeChannelMap,
    points: Vec<crate::geometry::Point>,
}

fn overlay_exchange(
    target: &mut BatchItem,
    donor: &DonorSnapshot,
    warp: &RegionWarp,
    alpha: f64,
) {
    let copy_labels = alpha >= 0.5;
    for e in &warp.edits {
        let (ti, tj) = e.target;
        let (si, sj) = e.source;
        for c in 0..3 {
            let d = donor.image[[si, sj, c]] as f64;
            let t = target.image[[ti, tj, c]] as f64;
            target.image[[ti, tj, c]] = (alpha * d + (1.0 - alpha) * t).round() as u8;
        }
        if copy_labels {
            target.label.attack[[ti, tj]] = donor.label.attack[[si, sj]];
            target.label.living[[ti, tj]] = donor.label.living[[si, sj]];
            target.label.background[[ti, tj]] = donor.label.background[[si, sj]];
        }
    }
}

fn integrated_attack_exchange(target: &mut BatchItem, donor: &DonorSnapshot, warp: &RegionWarp) {
    for e in &warp.edits {
        let (si, sj) = e.source;
        if donor.label.attack[[si, sj]] <= 0.0 {
            continue;
        }
        let (ti, tj) = e.target;
        for c in 0..3 {
            target.image[[ti, tj, c]] = donor.image[[si, sj, c]];
        }
        target.label.attack[[ti, tj]] = donor.label.attack[[si, sj]];
        target.label.living[[ti, tj]] = donor.label.living[[si, sj]];
        target.label.background[[ti, tj]] = donor.label.background[[si, sj]];
    }
}

/// Bounding box of the target region hull, clipped to the frame, as
/// half-open pixel ranges.
fn hull_bbox(points: &[crate::geometry::Point], h: usize, w: usize) -> Result<(usize, usize, usize, usize)> {
    let hull = convex_hull(points)?;
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &hull {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let x0 = min_x.floor().max(0.0) as usize;
    let y0 = min_y.floor().max(0.0) as usize;
    let x1 = (max_x.ceil() as usize).min(w);
    let y1 = (max_y.ceil() as usize).min(h);
    Ok((y0, y1, x0, x1))
}

fn clipping_exchange(a: &mut BatchItem, b: &mut BatchItem, rect: (usize, usize, usize, usize)) {
    let (y0, y1, x0, x1) = rect;
    for i in y0..y1 {
        for j in x0..x1 {
            for c in 0..3 {
                let t = a.image[[i, j, c]];
                a.image[[i, j, c]] = b.image[[i, j, c]];
                b.image[[i, j, c]] = t;
            }
            let t = a.label.attack[[i, j]];
            a.label.attack[[i, j]] = b.label.attack[[i, j]];
            b.label.attack[[i, j]] = t;
            let t = a.label.living[[i, j]];
            a.label.living[[i, j]] = b.label.living[[i, j]];
            b.label.living[[i, j]] = t;
            let t = a.label.background[[i, j]];
            a.label.background[[i, j]] = b.label.background[[i, j]];
            b.label.background[[i, j]] = t;
        }
    }
}

fn clamp_point(p: crate::geometry::Point, h: usize, w: usize) -> crate::geometry::Point {
    (
        p.0.clamp(0.0, (w as f64 - 1.0).max(0.0)),
        p.1.clamp(0.0, (h as f64 - 1.0).max(0.0)),
    )
}

/// Run the augmentation over the first floor(gamma * N) samples, rho steps
/// each. Returns the new batch plus a replayable log of every draw.
pub fn mcrea_augment(batch: &Batch, cfg: &AugmentConfig) -> Result<(Batch, DrawLog)> {
    cfg.check()?;
    batch.check()?;
    let n = batch.items.len();
    let selected = (cfg.gamma * n as f64).floor() as usize;
    if selected >= 1 && n < 2 {
        return Err(Error::invalid(
            "augmentation needs a batch of at least 2 samples",
        ));
    }

    let mut items = batch.items.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();

    for i in 0..selected {
        for step in 0..cfg.rho {
            let (h, w, _) = items[i].image.dim();
            let target_regions: Vec<String> = items[i]
                .landmarks
                .region_names()
                .map(str::to_string)
                .collect();
            let target_region = target_regions[rng.gen_range(0..target_regions.len())].clone();
            let target_points = items[i].landmarks.region_points(&target_region)?;

            if target_points.len() < 3 || convex_hull(&target_points).is_err() {
                log::warn!(
                    "skip exchange: target region {target_region} of sample {i} is degenerate"
                );
                records.push(DrawRecord {
                    target_index: i,
                    step,
                    target_region,
                    donor_index: None,
                    donor_region: None,
                    applied: false,
                    note: Some("degenerate target region".to_string()),
                });
                continue;
            }

            let mut applied = false;
            let mut last_note = None;
            let mut chosen: Option<(usize, String)> = None;
            for _attempt in 0..=DONOR_RETRIES {
                let j = rng.gen_range(0..n);
                let donor_regions: Vec<String> = items[j]
                    .landmarks
                    .region_names()
                    .map(str::to_string)
                    .collect();
                let donor_region = donor_regions[rng.gen_range(0..donor_regions.len())].clone();
                let donor_points = items[j].landmarks.region_points(&donor_region)?;

                if donor_points.len() != target_points.len() {
                    last_note = Some(format!(
                        "donor {donor_region} has {} points, target needs {}",
                        donor_points.len(),
                        target_points.len()
                    ));
                    continue;
                }
                if donor_points.len() < 3 {
                    last_note = Some("donor region too small".to_string());
                    continue;
                }

                match cfg.scheme {
                    Scheme::ClippingExchange => {
                        let rect = hull_bbox(&target_points, h, w)?;
                        if j == i {
                            // Swapping a rectangle with itself is a no-op
                            // but the draw stands.
                            chosen = Some((j, donor_region));
                            applied = true;
                            break;
                        }
                        let (left, right) = items.split_at_mut(i.max(j));
                        let (first, second) = if i < j {
                            (&mut left[i], &mut right[0])
                        } else {
                            (&mut right[0], &mut left[j])
                        };
                        clipping_exchange(first, second, rect);
                        chosen = Some((j, donor_region));
                        applied = true;
                        break;
                    }
                    Scheme::Overlay | Scheme::IntegratedAttack => {
                        let donor_dims = {
                            let (dh, dw, _) = items[j].image.dim();
                            (dh, dw)
                        };
                        let warp =
                            match plan_warp(&donor_points, &target_points, donor_dims, (h, w)) {
                                Ok(wp) => wp,
                                Err(Error::SingularFit) => {
                                    last_note = Some("degenerate donor fit".to_string());
                                    continue;
                                }
                                Err(e) => return Err(e),
                            };
                        let snapshot = DonorSnapshot {
                            image: items[j].image.clone(),
                            label: items[j].label.clone(),
                            points: donor_points.clone(),
                        };
                        let target = &mut items[i];
                        match cfg.scheme {
                            Scheme::Overlay => {
                                overlay_exchange(target, &snapshot, &warp, cfg.overlay_alpha)
                            }
                            Scheme::IntegratedAttack => {
                                integrated_attack_exchange(target, &snapshot, &warp)
                            }
                            Scheme::ClippingExchange => unreachable!(),
                        }
                        // The transplanted region brings its own geometry.
                        let indices: Vec<usize> =
                            target.landmarks.regions[&target_region].clone();
                        for (k, &idx) in indices.iter().enumerate() {
                            let moved = warp.transform.apply(snapshot.points[k]);
                            target.landmarks.points[idx] = clamp_point(moved, h, w);
                        }
                        chosen = Some((j, donor_region));
                        applied = true;
                        break;
                    }
                }
            }

            if !applied {
                log::warn!(
                    "skip exchange: no usable donor for sample {i} region {target_region} after {DONOR_RETRIES} retries"
                );
            }
            let (donor_index, donor_region) = match chosen {
                Some((j, r)) => (Some(j), Some(r)),
                None => (None, None),
            };
            records.push(DrawRecord {
                target_index: i,
                step,
                target_region,
                donor_index,
                donor_region,
                applied,
                note: if applied { None } else { last_note },
            });
        }
    }

    Ok((
        Batch { items },
        DrawLog {
            seed: cfg.seed,
            gamma: cfg.gamma,
            rho: cfg.rho,
            scheme: cfg.scheme,
            records,
        },
    ))
}

/// Photometric/geometric training augmentation shared by the pipeline:
/// horizontal flip and padded random crop. Kept here so the label planes
/// and landmarks move with the image.
pub fn horizontal_flip(item: &mut BatchItem) {
    let (h, w, _) = item.image.dim();
    let flip3 = |a: &mut Array3<u8>| {
        for i in 0..h {
            for j in 0..w / 2 {
                for c in 0..3 {
                    let t = a[[i, j, c]];
                    a[[i, j, c]] = a[[i, w - 1 - j, c]];
                    a[[i, w - 1 - j, c]] = t;
                }
            }
        }
    };
    flip3(&mut item.image);
    for plane in [
        &mut item.label.attack,
        &mut item.label.living,
        &mut item.label.background,
    ] {
        for i in 0..h {
            for j in 0..w / 2 {
                let t = plane[[i, j]];
                plane[[i, j]] = plane[[i, w - 1 - j]];
                plane[[i, w - 1 - j]] = t;
            }
        }
    }
    for p in &mut item.landmarks.points {
        p.0 = (w as f64 - 1.0) - p.0;
    }
}

/// Shift the content by (dy, dx) within the frame, zero-filling exposed
/// pixels on the image and marking them background on the label.
pub fn shift_crop(item: &mut BatchItem, dy: isize, dx: isize) {
    let (h, w, _) = item.image.dim();
    let mut image = Array3::<u8>::zeros((h, w, 3));
    let mut label = ThreeChannelMap::zeros(h, w);
    label.background.fill(1.0);
    for i in 0..h as isize {
        for j in 0..w as isize {
            let (si, sj) = (i - dy, j - dx);
            if si < 0 || sj < 0 || si >= h as isize || sj >= w as isize {
                continue;
            }
            let (iu, ju, siu, sju) = (i as usize, j as usize, si as usize, sj as usize);
            for c in 0..3 {
                image[[iu, ju, c]] = item.image[[siu, sju, c]];
            }
            label.attack[[iu, ju]] = item.label.attack[[siu, sju]];
            label.living[[iu, ju]] = item.label.living[[siu, sju]];
            label.background[[iu, ju]] = item.label.background[[siu, sju]];
        }
    }
    item.image = image;
    item.label = label;
    for p in &mut item.landmarks.points {
        p.0 = (p.0 + dx as f64).clamp(0.0, (w as f64 - 1.0).max(0.0));
        p.1 = (p.1 + dy as f64).clamp(0.0, (h as f64 - 1.0).max(0.0));
    }
}

/// Seeded flip/crop pass used by the training loop. Uses its own RNG so the
/// exchange draw sequence stays stable whether or not this runs.
pub fn photometric_pass(items: &mut [BatchItem], seed: u64, flips: bool, crops: bool) {
    let mut rng = StdRng::seed_from_u64(seed);
    for item in items.iter_mut() {
        if flips && rng.gen_bool(0.5) {
            horizontal_flip(item);
        }
        if crops {
            let dy = rng.gen_range(-2..=2);
            let dx = rng.gen_range(-2..=2);
            if dy != 0 || dx != 0 {
                shift_crop(item, dy, dx);
            }
        }
    }
}
