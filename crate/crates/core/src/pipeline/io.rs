//! Corpus files: JSONL manifests, landmark JSON, FGD1 depth rasters and PNG
//! frames. Ingest resolves paths relative to the manifest and reports the
//! offending line on any failure; export writes a layout ingest can read
//! back unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::landmarks::{LandmarkSet, FACE_REGIONS};
use crate::sample::{PaiRegionSpec, Sample, Split, TruthLabel};

const DEPTH_MAGIC: &[u8; 4] = b"FGD1";

/// One manifest line. Paths are relative to the manifest file's directory
/// unless absolute.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Defaults to the image file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub image_path: String,
    pub landmarks_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_path: Option<String>,
    pub truth_label: TruthLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_type: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pai_regions: Vec<PaiRegionSpec>,
    pub split: Split,
}

/// On-disk landmark record. `extra_regions` lists region names outside the
/// built-in face vocabulary so ingest can re-validate the index map.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LandmarkFile {
    points: Vec<Point>,
    regions: BTreeMap<String, Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extra_regions: Vec<String>,
}

pub fn read_landmarks(path: &Path) -> Result<LandmarkSet> {
    let text = fs::read_to_string(path)?;
    let file: LandmarkFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    LandmarkSet::new(file.points, file.regions, &file.extra_regions)
}

pub fn write_landmarks(path: &Path, landmarks: &LandmarkSet) -> Result<()> {
    let extra_regions: Vec<String> = landmarks
        .region_names()
        .filter(|n| !FACE_REGIONS.contains(n))
        .map(str::to_string)
        .collect();
    let file = LandmarkFile {
        points: landmarks.points.clone(),
        regions: landmarks.regions.clone(),
        extra_regions,
    };
    let text = serde_json::to_string_pretty(&file).expect("landmark file serializes");
    fs::write(path, text)?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<Array3<u8>> {
    let img = image::open(path)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Array3::from_shape_vec((h as usize, w as usize, 3), img.into_raw())
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

pub fn write_image(path: &Path, image: &Array3<u8>) -> Result<()> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(Error::invalid(format!("expected 3 image channels, got {c}")));
    }
    let data = image.as_standard_layout();
    let flat = data.as_slice().expect("standard layout is contiguous");
    image::save_buffer(
        path,
        flat,
        w as u32,
        h as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// FGD1 depth raster: magic, `height` and `width` u32 LE, then `h*w` f32 LE
/// values in row-major order.
pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let (h, w) = depth.dims();
    let mut buf = Vec::with_capacity(12 + h * w * 4);
    buf.extend_from_slice(DEPTH_MAGIC);
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    for &v in depth.values.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| Error::format(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[0..4] != DEPTH_MAGIC {
        return Err(fail("not an FGD1 depth file"));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail("dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(fail("length does not match header dimensions"));
    }
    let mut values = Vec::with_capacity(h * w);
    for chunk in bytes[12..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(fail("depth value outside [0, 1]"));
        }
        values.push(v);
    }
    let values = Array2::from_shape_vec((h, w), values).expect("length checked");
    Ok(DepthMap { values })
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

fn entry_to_sample(base: &Path, entry: &ManifestEntry) -> Result<Sample> {
    let image_path = resolve(base, &entry.image_path);
    let image = read_image(&image_path)?;
    let landmarks = read_landmarks(&resolve(base, &entry.landmarks_path))?;
    let depth = match &entry.depth_path {
        Some(p) => Some(read_depth(&resolve(base, p))?),
        None => None,
    };
    let id = match &entry.id {
        Some(id) => id.clone(),
        None => image_path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| Error::invalid(format!("cannot derive id from {}", entry.image_path)))?,
    };
    let sample = Sample {
        id,
        image,
        landmarks,
        depth,
        truth: entry.truth_label,
        attack_type: entry.attack_type.clone(),
        pai_regions: entry.pai_regions.clone(),
        split: entry.split,
    };
    sample.validate()?;
    Ok(sample)
}

/// Loads every sample referenced by a JSONL manifest. Blank lines are
/// skipped; any malformed entry or unreadable referenced file aborts with
/// the 1-based manifest line in the error. An empty manifest is an empty
/// corpus, not an error.
pub fn ingest(manifest_path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    let mut ids = std::collections::BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let at_line = |e: Error| match e {
            Error::Manifest { line: Some(_), .. } => e,
            other => Error::Manifest {
                line: Some(lineno),
                message: other.to_string(),
            },
        };
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: Some(lineno),
            message: e.to_string(),
        })?;
        let sample = entry_to_sample(base, &entry).map_err(at_line)?;
        if !ids.insert(sample.id.clone()) {
            return Err(Error::Manifest {
                line: Some(lineno),
                message: format!("duplicate sample id {}", sample.id),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes `samples` under `dir` as `images/<id>.png`, `landmarks/<id>.json`,
/// optional `depth/<id>.fgd1`, plus `manifest.jsonl`. Returns the manifest
/// path; ingesting it reproduces the samples in order.
pub fn export_corpus(dir: &Path, samples: &[Sample]) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("landmarks"))?;
    if samples.iter().any(|s| s.depth.is_some()) {
        fs::create_dir_all(dir.join("depth"))?;
    }
    let mut lines = String::new();
    for sample in samples {
        sample.validate()?;
        if sample.id.contains('/') || sample.id.contains('\\') {
            return Err(Error::invalid(format!("sample id {} is not a file stem", sample.id)));
        }
        let image_rel = format!("images/{}.png", sample.id);
        let landmarks_rel = format!("landmarks/{}.json", sample.id);
        write_image(&dir.join(&image_rel), &sample.image)?;
        write_landmarks(&dir.join(&landmarks_rel), &sample.landmarks)?;
        let depth_rel = match &sample.depth {
            Some(d) => {
                let rel = format!("depth/{}.fgd1", sample.id);
                write_depth(&dir.join(&rel), d)?;
                Some(rel)
            }
            None => None,
        };
        let entry = ManifestEntry {
            id: Some(sample.id.clone()),
            image_path: image_rel,
            landmarks_path: landmarks_rel,
            depth_path: depth_rel,
            truth_label: sample.truth,
            attack_type: sample.attack_type.clone(),
            pai_regions: sample.pai_regions.clone(),
            split: sample.split,
        };
        lines.push_str(&serde_json::to_string(&entry).expect("manifest entry serializes"));
        lines.push('\n');
    }
    let manifest_path = dir.join("manifest.jsonl");
    fs::write(&manifest_path, lines)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn square_landmarks() -> LandmarkSet {
        let points = vec![
            (1.0, 1.0),
            (14.0, 1.0),
            (14.0, 14.0),
            (1.0, 14.0),
            (4.0, 5.0),
            (10.0, 5.0),
            (7.0, 8.0),
            (5.0, 11.0),
            (9.0, 11.0),
            (7.0, 12.5),
        ];
        let mut regions = BTreeMap::new();
        regions.insert("face_skin".to_string(), vec![0, 1, 2, 3]);
        regions.insert("eyes".to_string(), vec![4, 5, 6]);
        regions.insert("nose".to_string(), vec![4, 5, 6]);
        regions.insert("mouth".to_string(), vec![7, 8, 9]);
        LandmarkSet::new(points, regions, &[]).unwrap()
    }

    fn sample(id: &str, truth: TruthLabel) -> Sample {
        let mut image = Array3::zeros((16, 16, 3));
        for (i, v) in image.iter_mut().enumerate() {
            *v = (i % 251) as u8;
        }
        let depth = DepthMap {
            values: Array2::from_shape_fn((16, 16), |(i, j)| {
                if (4..12).contains(&i) && (4..12).contains(&j) {
                    1.0 - (i as f32) / 32.0
                } else {
                    0.0
                }
            }),
        };
        Sample {
            id: id.to_string(),
            image,
            landmarks: square_landmarks(),
            depth: Some(depth),
            truth,
            attack_type: (truth == TruthLabel::Attack).then(|| "print".to_string()),
            pai_regions: if truth == TruthLabel::Attack {
                vec![PaiRegionSpec::Named("mouth".to_string())]
            } else {
                Vec::new()
            },
            split: Split::Train,
        }
    }

    fn assert_samples_equal(a: &Sample, b: &Sample) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.image, b.image);
        assert_eq!(a.landmarks, b.landmarks);
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.attack_type, b.attack_type);
        assert_eq!(a.pai_regions, b.pai_regions);
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn export_then_ingest_round_trips() {
        let dir = tempdir().unwrap();
        let originals = vec![sample("a", TruthLabel::BonaFide), sample("b", TruthLabel::Attack)];
        let manifest = export_corpus(dir.path(), &originals).unwrap();
        let loaded = ingest(&manifest).unwrap();
        assert_eq!(loaded.len(), originals.len());
        for (a, b) in originals.iter().zip(loaded.iter()) {
            assert_samples_equal(a, b);
        }
    }

    #[test]
    fn empty_manifest_is_an_empty_corpus() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        fs::write(&path, "\n\n").unwrap();
        assert!(ingest(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempdir().unwrap();
        let originals = vec![sample("a", TruthLabel::BonaFide)];
        let manifest = export_corpus(dir.path(), &originals).unwrap();
        let mut text = fs::read_to_string(&manifest).unwrap();
        text.push_str("{\"image_path\": 7}\n");
        fs::write(&manifest, text).unwrap();
        let err = ingest(&manifest).unwrap_err();
        match err {
            Error::Manifest { line, .. } => assert_eq!(line, Some(2)),
            other => panic!("expected manifest error, got {other}"),
        }
        assert!(err.is_validation());
    }

    #[test]
    fn missing_referenced_file_reports_the_line() {
        let dir = tempdir().unwrap();
        let originals = vec![sample("a", TruthLabel::BonaFide), sample("b", TruthLabel::Attack)];
        let manifest = export_corpus(dir.path(), &originals).unwrap();
        fs::remove_file(dir.path().join("images/b.png")).unwrap();
        match ingest(&manifest).unwrap_err() {
            Error::Manifest { line, message } => {
                assert_eq!(line, Some(2));
                assert!(message.contains("b.png"), "message: {message}");
            }
            other => panic!("expected manifest error, got {other}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempdir().unwrap();
        let originals = vec![sample("a", TruthLabel::BonaFide)];
        let manifest = export_corpus(dir.path(), &originals).unwrap();
        let mut text = fs::read_to_string(&manifest).unwrap();
        let line = text.clone();
        text.push_str(&line);
        fs::write(&manifest, text).unwrap();
        match ingest(&manifest).unwrap_err() {
            Error::Manifest { line, message } => {
                assert_eq!(line, Some(2));
                assert!(message.contains("duplicate"));
            }
            other => panic!("expected manifest error, got {other}"),
        }
    }

    #[test]
    fn depth_file_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.fgd1");
        let depth = DepthMap {
            values: Array2::from_shape_fn((5, 7), |(i, j)| ((i * 7 + j) as f32) / 34.0),
        };
        write_depth(&path, &depth).unwrap();
        let back = read_depth(&path).unwrap();
        assert_eq!(depth.values, back.values);
        let bytes_a = fs::read(&path).unwrap();
        write_depth(&path, &back).unwrap();
        assert_eq!(bytes_a, fs::read(&path).unwrap());
    }

    #[test]
    fn depth_reader_rejects_damage() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.fgd1");
        let depth = DepthMap { values: Array2::zeros((3, 3)) };
        write_depth(&path, &depth).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        bytes.push(0);
        fs::write(&path, &bytes).unwrap();
        assert!(read_depth(&path).is_err());

        bytes.pop();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(read_depth(&path).is_err());

        bytes[0] = b'F';
        let two = 2.0f32.to_le_bytes();
        bytes[12..16].copy_from_slice(&two);
        fs::write(&path, &bytes).unwrap();
        assert!(read_depth(&path).is_err());
    }

    #[test]
    fn default_id_is_the_image_stem() {
        let dir = tempdir().unwrap();
        let originals = vec![sample("face_001", TruthLabel::BonaFide)];
        let manifest = export_corpus(dir.path(), &originals).unwrap();
        let text = fs::read_to_string(&manifest).unwrap();
        let mut entry: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        entry.as_object_mut().unwrap().remove("id");
        fs::write(&manifest, format!("{entry}\n")).unwrap();
        let loaded = ingest(&manifest).unwrap();
        assert_eq!(loaded[0].id, "face_001");
    }
}
