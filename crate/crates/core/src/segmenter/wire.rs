//! Wire protocol for the HTTP segmentation service: JSON bodies, masks as
//! run-length counts alternating 0s/1s in row-major order, starting with
//! the count of 0s.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WirePoint {
    pub x: i64,
    pub y: i64,
    /// 1 = foreground, 0 = background hint.
    pub label: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image_png_b64: String,
    pub points: Vec<WirePoint>,
    pub multimask: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireMask {
    pub rle_counts: Vec<u64>,
    pub height: u32,
    pub width: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<WireMask>,
    pub scores: Vec<f32>,
}

/// Canonical encoding: first count covers 0s (may itself be 0 when the
/// raster starts with a 1), every later count is positive.
pub fn encode_rle(bitmap: &Array2<u8>) -> Vec<u64> {
    let mut counts = Vec::new();
    let mut current: u8 = 0;
    let mut run: u64 = 0;
    for &v in bitmap.iter() {
        let bit = u8::from(v != 0);
        if bit == current {
            run += 1;
        } else {
            counts.push(run);
            current = bit;
            run = 1;
        }
    }
    counts.push(run);
    if bitmap.is_empty() {
        counts.clear();
        counts.push(0);
    }
    counts
}

pub fn decode_rle(counts: &[u64], height: usize, width: usize) -> Result<Array2<u8>> {
    let total: u64 = counts.iter().sum();
    let expect = (height * width) as u64;
    if total != expect {
        return Err(Error::format(format!(
            "rle counts sum to {total}, raster has {expect} pixels"
        )));
    }
    let mut flat = Vec::with_capacity(height * width);
    let mut bit: u8 = 0;
    for &c in counts {
        for _ in 0..c {
            flat.push(bit);
        }
        bit ^= 1;
    }
    Array2::from_shape_vec((height, width), flat)
        .map_err(|e| Error::format(format!("rle shape: {e}")))
}

impl WireMask {
    pub fn from_bitmap(bitmap: &Array2<u8>) -> Self {
        let (h, w) = bitmap.dim();
        WireMask {
            rle_counts: encode_rle(bitmap),
            height: h as u32,
            width: w as u32,
        }
    }

    pub fn to_bitmap(&self) -> Result<Array2<u8>> {
        decode_rle(&self.rle_counts, self.height as usize, self.width as usize)
    }
}

/// PNG bytes for the request body. RGB8, row-major.
pub fn encode_png(image: &Array3<u8>) -> Result<Vec<u8>> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(Error::invalid(format!("expected 3 channels, got {c}")));
    }
    let std = image.as_standard_layout();
    let raw = std.as_slice().expect("standard layout is contiguous");
    let mut out = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut out);
    image::ImageEncoder::write_image(
        encoder,
        raw,
        w as u32,
        h as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::format(format!("png encode: {e}")))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip_checkerboard() {
        let bitmap = Array2::from_shape_fn((5, 7), |(i, j)| ((i + j) % 2) as u8);
        let counts = encode_rle(&bitmap);
        let back = decode_rle(&counts, 5, 7).unwrap();
        assert_eq!(back, bitmap);
    }

    #[test]
    fn rle_starts_with_zero_count_when_first_pixel_set() {
        let bitmap = Array2::from_shape_vec((1, 4), vec![1, 1, 0, 0]).unwrap();
        assert_eq!(encode_rle(&bitmap), vec![0, 2, 2]);
    }

    #[test]
    fn rle_all_zeros_and_all_ones() {
        let zeros = Array2::<u8>::zeros((3, 3));
        assert_eq!(encode_rle(&zeros), vec![9]);
        let ones = Array2::<u8>::ones((3, 3));
        assert_eq!(encode_rle(&ones), vec![0, 9]);
    }

    #[test]
    fn rle_bad_sum_is_a_format_error() {
        assert!(decode_rle(&[3, 2], 2, 3).is_err());
    }

    #[test]
    fn wire_mask_round_trip() {
        let bitmap = Array2::from_shape_fn((9, 4), |(i, j)| u8::from(i * j % 3 == 0));
        let wire = WireMask::from_bitmap(&bitmap);
        assert_eq!(wire.to_bitmap().unwrap(), bitmap);
    }

    #[test]
    fn request_json_shape() {
        let req = SegmentRequest {
            image_png_b64: "AAAA".into(),
            points: vec![WirePoint { x: 3, y: 4, label: 1 }],
            multimask: true,
        };
        let json = serde_json::to_value(&req).unwrap();
        assert_eq!(json["points"][0]["label"], 1);
        assert_eq!(json["multimask"], true);
        assert!(json["image_png_b64"].is_string());
    }

    #[test]
    fn png_encodes_nonempty() {
        let image = Array3::<u8>::from_elem((4, 6, 3), 128);
        let png = encode_png(&image).unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }
}
