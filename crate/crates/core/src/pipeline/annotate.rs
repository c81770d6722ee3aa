//! Annotation stage: run the segmenter over each sample, assemble the
//! three-channel map, and cache it as an FGA1 file keyed by sample id.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::annotator::{construct_three_channel_map, label_regions, write_map, LabelingPolicy};
use crate::chanmap::ThreeChannelMap;
use crate::error::{Error, Result};
use crate::mask::MaskLabel;
use crate::sample::Sample;
use crate::segmenter::{build_point_prompts, segment, select_mask, SegmenterBackend, SelectionPolicy};

/// Segments every region the policy needs and assembles the map for one
/// sample. Pure function of (sample, policy, backend): a deterministic
/// backend makes repeated annotation bit-identical.
pub fn annotate_sample(
    sample: &Sample,
    policy: &LabelingPolicy,
    backend: &dyn SegmenterBackend,
) -> Result<ThreeChannelMap> {
    policy.check()?;
    sample.validate()?;

    let regions = policy.regions_to_segment(sample);
    let prompts = build_point_prompts(&sample.landmarks, &regions)?;
    let mut masks = Vec::with_capacity(prompts.len());
    for prompt in &prompts {
        let result = segment(&sample.image, prompt, backend)?;
        // The face outline is large and concave-ish in real predictions, so
        // rank candidates by hull overlap there; small parts go by score.
        let selection = if prompt.target_region == "face_skin" {
            SelectionPolicy::MaxOverlapWithHull(sample.landmarks.region_points("face_skin")?)
        } else {
            SelectionPolicy::MaxScore
        };
        let label = if policy.living_regions.contains(&prompt.target_region) {
            MaskLabel::Living
        } else {
            MaskLabel::Attack
        };
        masks.push(select_mask(&result, &selection, label, &prompt.target_region)?);
    }

    let (attack, living) = label_regions(sample, &masks, policy)?;
    construct_three_channel_map(sample, &attack, &living, policy)
}

/// Annotates a whole corpus into `out_dir/<id>.fga1`. Existing files are
/// overwritten so the cache always reflects the requested policy.
pub fn annotate_corpus(
    samples: &[Sample],
    policy: &LabelingPolicy,
    backend: &dyn SegmenterBackend,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(samples.len());
    for (idx, sample) in samples.iter().enumerate() {
        let map = annotate_sample(sample, policy, backend)?;
        let path = out_dir.join(format!("{}.fga1", sample.id));
        write_map(&map, &path)?;
        paths.push(path);
        if (idx + 1) % 100 == 0 {
            log::info!("annotated {}/{} samples", idx + 1, samples.len());
        }
    }
    Ok(paths)
}

/// Loads cached label maps for `samples` from `dir`, keyed by sample id.
/// A missing file is a validation error naming the sample, since training
/// must never fall back to segmenting on the fly.
pub fn load_labels(dir: &Path, samples: &[Sample]) -> Result<BTreeMap<String, ThreeChannelMap>> {
    let mut labels = BTreeMap::new();
    for sample in samples {
        let path = dir.join(format!("{}.fga1", sample.id));
        if !path.exists() {
            return Err(Error::invalid(format!(
                "no cached label map for sample {} (expected {}); run annotate first",
                sample.id,
                path.display()
            )));
        }
        let map = crate::annotator::read_map(&path)?;
        if map.dims() != sample.frame_dims() {
            return Err(Error::DimensionMismatch {
                expected: sample.frame_dims(),
                got: map.dims(),
            });
        }
        labels.insert(sample.id.clone(), map);
    }
    Ok(labels)
}
