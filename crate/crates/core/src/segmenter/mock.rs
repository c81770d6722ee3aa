//! Deterministic stand-in backend: the mask is the filled convex hull of
//! the prompt's foreground points, optionally dilated. Pure function of
//! (image dims, prompt), so tests have a closed-form oracle.

use ndarray::{Array2, Array3};

use crate::error::Result;
use crate::geometry::{convex_hull, fill_convex, Point};

use super::{PointPrompt, SegmentationResult, SegmenterBackend};

#[derive(Debug, Clone, Default)]
pub struct MockSegmenter {
    /// Chebyshev dilation radius applied to the hull fill. 0 = exact hull.
    pub dilation: usize,
}

impl MockSegmenter {
    pub fn new(dilation: usize) -> Self {
        MockSegmenter { dilation }
    }
}

fn dilate(bitmap: &Array2<u8>, radius: usize) -> Array2<u8> {
    if radius == 0 {
        return bitmap.clone();
    }
    let (h, w) = bitmap.dim();
    let r = radius as isize;
    let mut out = Array2::<u8>::zeros((h, w));
    for i in 0..h as isize {
        for j in 0..w as isize {
            'scan: for di in -r..=r {
                for dj in -r..=r {
                    let (y, x) = (i + di, j + dj);
                    if y >= 0
                        && x >= 0
                        && (y as usize) < h
                        && (x as usize) < w
                        && bitmap[[y as usize, x as usize]] == 1
                    {
                        out[[i as usize, j as usize]] = 1;
                        break 'scan;
                    }
                }
            }
        }
    }
    out
}

impl SegmenterBackend for MockSegmenter {
    fn segment_raw(&self, image: &Array3<u8>, prompt: &PointPrompt) -> Result<SegmentationResult> {
        let (h, w, _) = image.dim();
        let fg: Vec<Point> = prompt.foreground().collect();
        let hull = convex_hull(&fg)?;
        let fill = fill_convex(&hull, h, w);
        let bitmap = Array2::from_shape_vec((h, w), fill).expect("fill length is h*w");
        let bitmap = dilate(&bitmap, self.dilation);
        Ok(SegmentationResult {
            masks: vec![bitmap],
            scores: vec![1.0],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_in_convex;
    use crate::segmenter::{segment, PromptPoint, PromptPolarity};

    fn square_prompt() -> PointPrompt {
        PointPrompt {
            points: [(3.0, 3.0), (12.0, 3.0), (12.0, 12.0), (3.0, 12.0)]
                .iter()
                .map(|&(x, y)| PromptPoint {
                    x,
                    y,
                    polarity: PromptPolarity::Foreground,
                })
                .collect(),
            target_region: "face_skin".into(),
        }
    }

    #[test]
    fn mask_is_the_filled_hull() {
        let image = Array3::<u8>::zeros((16, 16, 3));
        let prompt = square_prompt();
        let result = segment(&image, &prompt, &MockSegmenter::default()).unwrap();
        assert_eq!(result.masks.len(), 1);
        assert_eq!(result.scores, vec![1.0]);
        let hull = convex_hull(&prompt.foreground().collect::<Vec<_>>()).unwrap();
        for i in 0..16usize {
            for j in 0..16usize {
                let inside = point_in_convex(&hull, (j as f64 + 0.5, i as f64 + 0.5));
                assert_eq!(result.masks[0][[i, j]] == 1, inside, "pixel ({j}, {i})");
            }
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let image = Array3::<u8>::zeros((16, 16, 3));
        let prompt = square_prompt();
        let backend = MockSegmenter::default();
        let a = segment(&image, &prompt, &backend).unwrap();
        let b = segment(&image, &prompt, &backend).unwrap();
        assert_eq!(a.masks[0], b.masks[0]);
    }

    #[test]
    fn dilation_grows_the_mask_by_one_ring() {
        let image = Array3::<u8>::zeros((16, 16, 3));
        let prompt = square_prompt();
        let plain = segment(&image, &prompt, &MockSegmenter::default()).unwrap();
        let grown = segment(&image, &prompt, &MockSegmenter::new(1)).unwrap();
        let n0 = plain.masks[0].iter().filter(|&&v| v == 1).count();
        let n1 = grown.masks[0].iter().filter(|&&v| v == 1).count();
        assert!(n1 > n0);
        // Every original pixel survives dilation.
        for (a, b) in plain.masks[0].iter().zip(grown.masks[0].iter()) {
            assert!(*b >= *a);
        }
    }

    #[test]
    fn hull_ignores_background_hints() {
        let image = Array3::<u8>::zeros((16, 16, 3));
        let mut prompt = square_prompt();
        prompt.points.push(PromptPoint {
            x: 0.0,
            y: 0.0,
            polarity: PromptPolarity::BackgroundHint,
        });
        let with_hint = segment(&image, &prompt, &MockSegmenter::default()).unwrap();
        let without = segment(&image, &square_prompt(), &MockSegmenter::default()).unwrap();
        assert_eq!(with_hint.masks[0], without.masks[0]);
    }
}
