//! Synthetic face corpus: parametric face renders with exact landmarks,
//! plus print/replay/patch attack variants. Good enough to exercise the
//! whole annotate/train/eval path without any real data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depth::{normalize_depth, DepthMap};
use crate::error::{Error, Result};
use crate::geometry::{centroid, convex_hull, fill_convex, fill_hull, point_in_convex, ray_exit_distance, Point};
use crate::landmarks::LandmarkSet;
use crate::mask::{MaskLabel, RegionMask};
use crate::sample::{PaiRegionSpec, Sample, Split, TruthLabel};

use super::io::export_corpus;

pub const SYNTH_FRAME: usize = 64;

fn default_share() -> f64 {
    0.25
}

/// Class shares for the generator. Shares are normalized, so any positive
/// weights work; zero removes a class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixSpec {
    #[serde(default = "default_share")]
    pub bona: f64,
    #[serde(default = "default_share")]
    pub print: f64,
    #[serde(default = "default_share")]
    pub replay: f64,
    #[serde(default = "default_share")]
    pub patch: f64,
}

impl Default for MixSpec {
    fn default() -> Self {
        MixSpec { bona: 0.25, print: 0.25, replay: 0.25, patch: 0.25 }
    }
}

impl MixSpec {
    pub fn check(&self) -> Result<()> {
        let shares = [self.bona, self.print, self.replay, self.patch];
        if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("mix shares must be finite and non-negative"));
        }
        if shares.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("mix shares sum to zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SynthClass {
    Bona,
    Print,
    Replay,
    Patch,
}

impl SynthClass {
    fn tag(self) -> &'static str {
        match self {
            SynthClass::Bona => "bona",
            SynthClass::Print => "print",
            SynthClass::Replay => "replay",
            SynthClass::Patch => "patch",
        }
    }
}

/// Largest-remainder split of `count` into the four classes.
fn class_counts(count: usize, mix: &MixSpec) -> [usize; 4] {
    let weights = [mix.bona, mix.print, mix.replay, mix.patch];
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| count as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut leftover = count - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &idx in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[idx] += 1;
        leftover -= 1;
    }
    [counts[0], counts[1], counts[2], counts[3]]
}

struct FaceGeometry {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    landmarks: LandmarkSet,
}

fn build_geometry(rng: &mut ChaCha8Rng) -> FaceGeometry {
    let cx = 31.5 + rng.gen_range(-2.0..2.0);
    let cy = 33.0 + rng.gen_range(-1.5..1.5);
    let a = rng.gen_range(17.0..20.0);
    let b = rng.gen_range(21.0..24.0);

    let mut points: Vec<Point> = Vec::with_capacity(50);
    let mut regions: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut push_region = |name: &str, pts: Vec<Point>, points: &mut Vec<Point>| {
        let start = points.len();
        points.extend(pts);
        regions.insert(name.to_string(), (start..points.len()).collect());
    };

    let face: Vec<Point> = (0..12)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 12.0;
            let s = rng.gen_range(0.97..1.0);
            (cx + a * s * theta.cos(), cy + b * s * theta.sin())
        })
        .collect();
    push_region("face_skin", face, &mut points);

    let eye_l = (cx - 0.42 * a, cy - 0.30 * b);
    let eye_r = (cx + 0.42 * a, cy - 0.30 * b);
    let mut eyes = Vec::new();
    for c in [eye_l, eye_r] {
        for deg in [90.0f64, 210.0, 330.0] {
            let t = deg.to_radians();
            eyes.push((c.0 + 2.2 * t.cos(), c.1 + 2.2 * t.sin()));
        }
    }
    push_region("eyes", eyes, &mut points);

    let mut brows = Vec::new();
    for c in [(cx - 0.42 * a, cy - 0.48 * b), (cx + 0.42 * a, cy - 0.48 * b)] {
        for (dx, dy) in [(-2.6, 0.3), (0.0, -0.7), (2.6, 0.3)] {
            brows.push((c.0 + dx, c.1 + dy));
        }
    }
    push_region("eyebrows", brows, &mut points);

    let nose_c = (cx, cy + 0.02 * b);
    let nose: Vec<Point> = [-90.0f64, -18.0, 54.0, 126.0, 198.0]
        .iter()
        .map(|deg| {
            let t = deg.to_radians();
            (nose_c.0 + 2.7 * t.cos(), nose_c.1 + 2.7 * t.sin())
        })
        .collect();
    push_region("nose", nose, &mut points);

    let mouth_c = (cx, cy + 0.45 * b);
    let mouth: Vec<Point> = (0..6)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 6.0;
            (mouth_c.0 + 0.36 * a * t.cos(), mouth_c.1 + 0.105 * b * t.sin())
        })
        .collect();
    push_region("mouth", mouth, &mut points);

    let forehead = vec![
        (cx - 0.50 * a, cy - 0.62 * b),
        (cx + 0.50 * a, cy - 0.62 * b),
        (cx + 0.32 * a, cy - 0.78 * b),
        (cx - 0.32 * a, cy - 0.78 * b),
    ];
    push_region("forehead", forehead, &mut points);

    // Mid-face band from above the brows to below the mouth. Patch attacks
    // strap their occluder card over this region; it stays strictly inside
    // the face ellipse (corner radius 0.62^2 + 0.58^2 < 0.97^2).
    let visor = vec![
        (cx - 0.62 * a, cy - 0.55 * b),
        (cx + 0.62 * a, cy - 0.55 * b),
        (cx + 0.62 * a, cy + 0.58 * b),
        (cx - 0.62 * a, cy + 0.58 * b),
    ];
    push_region("visor", visor, &mut points);

    let mut ears = Vec::new();
    for side in [-1.0, 1.0] {
        let c = (cx + side * (a + 1.3), cy - 0.05 * b);
        ears.push((c.0, c.1 - 2.6));
        ears.push((c.0 + side, c.1));
        ears.push((c.0, c.1 + 2.6));
    }
    push_region("ears", ears, &mut points);

    let hair: Vec<Point> = [-1.0f64, -0.5, 0.0, 0.5, 1.0]
        .iter()
        .map(|t| (cx + t * 0.85 * a, cy - b * (1.04 + 0.10 * (1.0 - t * t))))
        .collect();
    push_region("hair", hair, &mut points);

    let landmarks = LandmarkSet::new(points, regions, &["visor".to_string()])
        .expect("generated regions are valid");
    FaceGeometry { cx, cy, a, b, landmarks }
}

/// Deterministic per-pixel hash noise in `[-range, range]`.
fn noise(i: usize, j: usize, salt: u32, range: i32) -> i32 {
    let mut h = (i as u32)
        .wrapping_mul(0x9E37_79B9)
        ^ (j as u32).wrapping_mul(0x85EB_CA6B)
        ^ salt;
    h ^= h >> 13;
    h = h.wrapping_mul(0xC2B2_AE35);
    h ^= h >> 16;
    (h % (2 * range as u32 + 1)) as i32 - range
}

fn put(image: &mut Array3<u8>, i: usize, j: usize, rgb: (i32, i32, i32)) {
    image[[i, j, 0]] = rgb.0.clamp(0, 255) as u8;
    image[[i, j, 1]] = rgb.1.clamp(0, 255) as u8;
    image[[i, j, 2]] = rgb.2.clamp(0, 255) as u8;
}

fn get(image: &Array3<u8>, i: usize, j: usize) -> (i32, i32, i32) {
    (
        image[[i, j, 0]] as i32,
        image[[i, j, 1]] as i32,
        image[[i, j, 2]] as i32,
    )
}

fn fill_disk(image: &mut Array3<u8>, center: Point, radius: f64, color: (i32, i32, i32), salt: u32) {
    let n = SYNTH_FRAME;
    for i in 0..n {
        for j in 0..n {
            let dx = j as f64 + 0.5 - center.0;
            let dy = i as f64 + 0.5 - center.1;
            if dx * dx + dy * dy <= radius * radius {
                let nz = noise(i, j, salt ^ 0x5151, 2);
                put(image, i, j, (color.0 + nz, color.1 + nz, color.2 + nz));
            }
        }
    }
}

fn render_face(geo: &FaceGeometry, rng: &mut ChaCha8Rng) -> (Array3<u8>, u32) {
    let n = SYNTH_FRAME;
    let salt: u32 = rng.gen();
    let mut image = Array3::<u8>::zeros((n, n, 3));

    for i in 0..n {
        for j in 0..n {
            let nz = noise(i, j, salt, 6);
            let g0 = 40 + (i as i32) / 4 + nz;
            put(&mut image, i, j, (g0, g0 + 3, g0 + 8));
        }
    }

    let skin = (
        218 + rng.gen_range(-6..6),
        182 + rng.gen_range(-6..6),
        154 + rng.gen_range(-6..6),
    );

    let face_pts = geo.landmarks.region_points("face_skin").expect("region exists");
    let face_hull = convex_hull(&face_pts).expect("12-gon hull");
    let face_fill = fill_convex(&face_hull, n, n);
    for i in 0..n {
        for j in 0..n {
            if face_fill[i * n + j] == 0 {
                continue;
            }
            let dx = (j as f64 + 0.5 - geo.cx) / geo.a;
            let dy = (i as f64 + 0.5 - geo.cy) / geo.b;
            let shade = 1.0 - 0.14 * (dx * dx + dy * dy);
            let nz = noise(i, j, salt ^ 0xA3A3, 2);
            put(
                &mut image,
                i,
                j,
                (
                    (skin.0 as f64 * shade) as i32 + nz,
                    (skin.1 as f64 * shade) as i32 + nz,
                    (skin.2 as f64 * shade) as i32 + nz,
                ),
            );
        }
    }

    // Ears: skin-toned disks abutting the face sides.
    for side in [-1.0, 1.0] {
        let c = (geo.cx + side * (geo.a + 1.3), geo.cy - 0.05 * geo.b);
        fill_disk(&mut image, c, 1.7, (skin.0 - 18, skin.1 - 16, skin.2 - 14), salt);
    }

    // Hair: band over the top arc of the face.
    let mut hair_pts = geo.landmarks.region_points("hair").expect("region exists");
    hair_pts.extend_from_slice(&face_pts[8..=10]);
    if let Ok(hair_fill) = fill_hull(&hair_pts, n, n) {
        for i in 0..n {
            for j in 0..n {
                if hair_fill[i * n + j] == 1 {
                    let nz = noise(i, j, salt ^ 0x77, 4);
                    put(&mut image, i, j, (56 + nz, 43 + nz, 35 + nz));
                }
            }
        }
    }

    // Eyes, brows, nose, mouth.
    for c in [
        (geo.cx - 0.42 * geo.a, geo.cy - 0.30 * geo.b),
        (geo.cx + 0.42 * geo.a, geo.cy - 0.30 * geo.b),
    ] {
        fill_disk(&mut image, c, 2.0, (48, 38, 36), salt);
    }
    for c in [
        (geo.cx - 0.42 * geo.a, geo.cy - 0.48 * geo.b),
        (geo.cx + 0.42 * geo.a, geo.cy - 0.48 * geo.b),
    ] {
        for i in 0..n {
            for j in 0..n {
                if (j as f64 + 0.5 - c.0).abs() <= 2.8 && (i as f64 + 0.5 - c.1).abs() <= 0.9 {
                    put(&mut image, i, j, (70, 52, 40));
                }
            }
        }
    }
    let nose_pts = geo.landmarks.region_points("nose").expect("region exists");
    if let Ok(nose_fill) = fill_hull(&nose_pts, n, n) {
        for i in 0..n {
            for j in 0..n {
                if nose_fill[i * n + j] == 1 {
                    let (r, g, b) = get(&image, i, j);
                    put(&mut image, i, j, (r - 16, g - 18, b - 18));
                }
            }
        }
    }
    let mouth_pts = geo.landmarks.region_points("mouth").expect("region exists");
    if let Ok(mouth_fill) = fill_hull(&mouth_pts, n, n) {
        for i in 0..n {
            for j in 0..n {
                if mouth_fill[i * n + j] == 1 {
                    let nz = noise(i, j, salt ^ 0xBEEF, 3);
                    put(&mut image, i, j, (168 + nz, 76 + nz, 78 + nz));
                }
            }
        }
    }

    (image, salt)
}

/// Print attack: a dim, desaturated, blue-shifted reproduction of the whole
/// presented face with period-2 halftone row banding. Two load-bearing cues:
/// the banding is high-frequency and covers the full support, so a
/// difference convolution locks onto it, and the heavy ink loss leaves the
/// reproduction far darker than live skin, a near-linear cue that random
/// features pass through from the first step. Both survive flips and crops.
fn apply_print(image: &mut Array3<u8>, support: &[u8]) {
    let n = SYNTH_FRAME;
    for i in 0..n {
        for j in 0..n {
            if support[i * n + j] == 0 {
                continue;
            }
            let (r, g, b) = get(image, i, j);
            let m = (r + g + b) / 3;
            let (mut r, mut g, mut b) = (
                (r * 6 + m * 4) / 10 * 11 / 20,
                (g * 6 + m * 4) / 10 * 11 / 20,
                (b * 6 + m * 4) / 10 * 11 / 20,
            );
            if i % 2 == 0 {
                r = r * 7 / 10;
                g = g * 7 / 10;
                b = b * 7 / 10;
            }
            put(image, i, j, (r - 12, g, b + 30));
        }
    }
}

/// Replay attack: a dim screen rendition with period-2 refresh column
/// banding, a green shift and a small specular glare blob. Column
/// orientation keeps it apart from print rows; like print, the screen sits
/// well below live-skin brightness.
fn apply_replay(image: &mut Array3<u8>, support: &[u8], rng: &mut ChaCha8Rng, cx: f64, cy: f64) {
    let n = SYNTH_FRAME;
    let gx = cx + rng.gen_range(-6.0..6.0);
    let gy = cy + rng.gen_range(-8.0..8.0);
    let sigma = rng.gen_range(4.5..6.5);
    for i in 0..n {
        for j in 0..n {
            if support[i * n + j] == 0 {
                continue;
            }
            let (r, g, b) = get(image, i, j);
            let (mut r, mut g, mut b) = (r * 3 / 5, g * 3 / 5, b * 3 / 5);
            if j % 2 == 0 {
                r = r * 7 / 10;
                g = g * 7 / 10;
                b = b * 7 / 10;
            }
            if (i + 2 * j) % 9 == 0 {
                g += 6;
            }
            let dx = j as f64 + 0.5 - gx;
            let dy = i as f64 + 0.5 - gy;
            let glare = (45.0 * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()) as i32;
            put(image, i, j, (r - 12 + glare, g + 32 + glare, b + glare));
        }
    }
}

/// Regions a patch attack occludes. The visor band covers the decision
/// rule's default key regions (eyes, nose, mouth) on purpose: a patch that
/// hides all of them leaves no living evidence where the verdict looks for
/// it, so even partial attacks land on the attack side of the margin once
/// the planes are predicted. The band is also wide enough to carry real
/// regression mass, unlike the key regions alone.
pub const PATCH_OCCLUDER_REGIONS: [&str; 1] = ["visor"];

/// Patch attack: a flat occluder card in a bold period-4 blue checkerboard.
/// Cold blue against warm bright skin, so the card is separable by both
/// chroma and brightness as well as by its texture; period 4 survives one
/// round of pooling where period 2 averages out.
fn apply_patch(image: &mut Array3<u8>, support: &[u8], salt: u32) {
    let n = SYNTH_FRAME;
    for i in 0..n {
        for j in 0..n {
            if support[i * n + j] == 0 {
                continue;
            }
            let nz = noise(i, j, salt ^ 0xCAFE, 4);
            let c = if (i / 2 + j / 2) % 2 == 0 {
                (36 + nz, 52 + nz, 128 + nz)
            } else {
                (84 + nz, 104 + nz, 196 + nz)
            };
            put(image, i, j, c);
        }
    }
}

/// Sensor-style depth for synthetic samples: a broad plateau over the face
/// hull, full depth out to two thirds of each ray and a linear taper to zero
/// at the rim. A plateau keeps most of the face at high depth, so the
/// regression targets carry real mass and the learned score margins stay
/// wide; a thin dome would leave the positive planes mostly near zero.
fn synth_depth(landmarks: &LandmarkSet, height: usize, width: usize) -> Result<DepthMap> {
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
        bitmap: Array2::from_shape_vec((height, width), fill_convex(&hull, height, width))
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
            raw[[i, j]] = (3.0 * (1.0 - t)).min(1.0) as f32;
        }
    }
    normalize_depth(&raw, &support)
}

fn build_sample(class: SynthClass, index_in_class: usize, global_index: u64, seed: u64) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_add(global_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    );
    let geo = build_geometry(&mut rng);
    let (mut image, salt) = render_face(&geo, &mut rng);

    let (truth, attack_type, pai_regions) = match class {
        SynthClass::Bona => (TruthLabel::BonaFide, None, Vec::new()),
        SynthClass::Print => {
            let wf = fill_hull(&geo.landmarks.points, SYNTH_FRAME, SYNTH_FRAME)?;
            apply_print(&mut image, &wf);
            (TruthLabel::Attack, Some("print".to_string()), Vec::new())
        }
        SynthClass::Replay => {
            let wf = fill_hull(&geo.landmarks.points, SYNTH_FRAME, SYNTH_FRAME)?;
            apply_replay(&mut image, &wf, &mut rng, geo.cx, geo.cy);
            (TruthLabel::Attack, Some("replay".to_string()), Vec::new())
        }
        SynthClass::Patch => {
            let mut occluder = vec![0u8; SYNTH_FRAME * SYNTH_FRAME];
            for name in PATCH_OCCLUDER_REGIONS {
                let pts = geo.landmarks.region_points(name)?;
                let fill = fill_hull(&pts, SYNTH_FRAME, SYNTH_FRAME)?;
                for (o, f) in occluder.iter_mut().zip(fill.iter()) {
                    *o |= f;
                }
            }
            apply_patch(&mut image, &occluder, salt);
            (
                TruthLabel::Attack,
                Some("patch".to_string()),
                PATCH_OCCLUDER_REGIONS
                    .iter()
                    .map(|n| PaiRegionSpec::Named(n.to_string()))
                    .collect(),
            )
        }
    };

    let split = match index_in_class % 5 {
        0 | 1 | 2 => Split::Train,
        3 => Split::Dev,
        _ => Split::Test,
    };

    let depth = synth_depth(&geo.landmarks, SYNTH_FRAME, SYNTH_FRAME)?;
    let sample = Sample {
        id: format!("{}_{:05}", class.tag(), index_in_class),
        image,
        landmarks: geo.landmarks,
        depth: Some(depth),
        truth,
        attack_type,
        pai_regions,
        split,
    };
    sample.validate()?;
    Ok(sample)
}

/// Renders `count` synthetic samples with depth attached. The same
/// `(count, mix, seed)` triple always produces a bit-identical corpus.
pub fn generate_synthetic(count: usize, mix: &MixSpec, seed: u64) -> Result<Vec<Sample>> {
    mix.check()?;
    let counts = class_counts(count, mix);
    let classes = [SynthClass::Bona, SynthClass::Print, SynthClass::Replay, SynthClass::Patch];
    let mut samples = Vec::with_capacity(count);
    let mut global: u64 = 0;
    for (class, &n) in classes.iter().zip(counts.iter()) {
        for j in 0..n {
            samples.push(build_sample(*class, j, global, seed)?);
            global += 1;
        }
    }
    Ok(samples)
}

/// Generates and writes a corpus under `dir`, returning the manifest path.
pub fn synth_corpus(dir: &Path, count: usize, mix: &MixSpec, seed: u64) -> Result<PathBuf> {
    let samples = generate_synthetic(count, mix, seed)?;
    export_corpus(dir, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::LabelingPolicy;
    use crate::mask::MaskLabel;
    use crate::segmenter::mock::MockSegmenter;
    use crate::segmenter::{build_point_prompts, segment, select_mask, SelectionPolicy};

    #[test]
    fn seeded_generation_is_bit_identical() {
        let a = generate_synthetic(24, &MixSpec::default(), 7).unwrap();
        let b = generate_synthetic(24, &MixSpec::default(), 7).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.image, y.image);
            assert_eq!(x.landmarks, y.landmarks);
            assert_eq!(
                x.depth.as_ref().unwrap().values,
                y.depth.as_ref().unwrap().values
            );
            assert_eq!(x.split, y.split);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_synthetic(4, &MixSpec::default(), 1).unwrap();
        let b = generate_synthetic(4, &MixSpec::default(), 2).unwrap();
        assert!(a.iter().zip(b.iter()).any(|(x, y)| x.image != y.image));
    }

    #[test]
    fn mix_controls_class_counts_and_splits_cover_all_three() {
        let samples = generate_synthetic(40, &MixSpec::default(), 3).unwrap();
        let count = |tag: &str| samples.iter().filter(|s| s.id.starts_with(tag)).count();
        assert_eq!(count("bona"), 10);
        assert_eq!(count("print"), 10);
        assert_eq!(count("replay"), 10);
        assert_eq!(count("patch"), 10);
        for split in [Split::Train, Split::Dev, Split::Test] {
            assert!(samples.iter().any(|s| s.split == split && s.is_attack()));
            assert!(samples.iter().any(|s| s.split == split && !s.is_attack()));
        }

        let only_bona = MixSpec { bona: 1.0, print: 0.0, replay: 0.0, patch: 0.0 };
        let samples = generate_synthetic(5, &only_bona, 3).unwrap();
        assert_eq!(samples.len(), 5);
        assert!(samples.iter().all(|s| !s.is_attack()));
    }

    #[test]
    fn every_sample_validates_and_carries_depth() {
        for sample in generate_synthetic(12, &MixSpec::default(), 9).unwrap() {
            sample.validate().unwrap();
            let depth = sample.depth.as_ref().unwrap();
            assert_eq!(depth.dims(), (SYNTH_FRAME, SYNTH_FRAME));
            assert!(depth.values.iter().any(|&v| v == 1.0));
        }
    }

    #[test]
    fn patch_occluder_matches_the_mock_segmenter_support() {
        let mix = MixSpec { bona: 0.0, print: 0.0, replay: 0.0, patch: 1.0 };
        let sample = generate_synthetic(1, &mix, 11).unwrap().pop().unwrap();
        assert_eq!(sample.attack_type.as_deref(), Some("patch"));

        let policy = LabelingPolicy::default();
        let regions = policy.regions_to_segment(&sample);
        let backend = MockSegmenter::default();
        for name in PATCH_OCCLUDER_REGIONS {
            assert!(regions.contains(&name.to_string()));
            let prompts = build_point_prompts(&sample.landmarks, &[name.to_string()]).unwrap();
            let result = segment(&sample.image, &prompts[0], &backend).unwrap();
            let mask = select_mask(&result, &SelectionPolicy::MaxScore, MaskLabel::Attack, name).unwrap();

            let pts = sample.landmarks.region_points(name).unwrap();
            let expected = fill_hull(&pts, SYNTH_FRAME, SYNTH_FRAME).unwrap();
            let got: Vec<u8> = mask.bitmap.iter().copied().collect();
            assert_eq!(got, expected, "region {name}");
        }
    }

    #[test]
    fn attack_texture_lands_only_inside_the_face_hull() {
        let mix = MixSpec { bona: 1.0, print: 1.0, replay: 0.0, patch: 0.0 };
        let samples = generate_synthetic(2, &mix, 21).unwrap();
        let bona = &samples[0];
        let print = &samples[1];
        // Same seed stream per sample index, so the two differ only by the
        // class-specific pass; outside the face hull nothing may change
        // between a bona render and its print twin is NOT guaranteed (the
        // faces are different draws), so check the print sample against its
        // own hull instead: background rows far above the hair stay dark.
        let wf = fill_hull(&print.landmarks.points, SYNTH_FRAME, SYNTH_FRAME).unwrap();
        let mut outside_blue = 0i64;
        let mut n_outside = 0i64;
        for i in 0..SYNTH_FRAME {
            for j in 0..SYNTH_FRAME {
                if wf[i * SYNTH_FRAME + j] == 0 {
                    outside_blue += print.image[[i, j, 2]] as i64 - print.image[[i, j, 0]] as i64;
                    n_outside += 1;
                }
            }
        }
        // Background keeps its mild blue tint; the strong print cast (over
        // +40 blue-red gap) never leaks outside the hull.
        assert!(n_outside > 0);
        assert!((outside_blue as f64 / n_outside as f64) < 20.0);
        assert!(bona.image != print.image);
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = synth_corpus(dir.path(), 8, &MixSpec::default(), 5).unwrap();
        let loaded = super::super::io::ingest(&manifest).unwrap();
        assert_eq!(loaded.len(), 8);
        let direct = generate_synthetic(8, &MixSpec::default(), 5).unwrap();
        for (a, b) in direct.iter().zip(loaded.iter()) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.image, b.image);
            assert_eq!(a.landmarks, b.landmarks);
            assert_eq!(a.depth.as_ref().unwrap().values, b.depth.as_ref().unwrap().values);
        }
    }

    #[test]
    fn degenerate_mixes_are_rejected() {
        let zero = MixSpec { bona: 0.0, print: 0.0, replay: 0.0, patch: 0.0 };
        assert!(generate_synthetic(4, &zero, 0).is_err());
        let neg = MixSpec { bona: -1.0, ..MixSpec::default() };
        assert!(generate_synthetic(4, &neg, 0).is_err());
    }
}
