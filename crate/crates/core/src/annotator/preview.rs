//! Human-viewable render of a map: attack in red, living in green,
//! background in blue.

use std::path::Path;

use crate::chanmap::ThreeChannelMap;
use crate::error::{Error, Result};

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn render_rgb(map: &ThreeChannelMap) -> Vec<u8> {
    let (h, w) = map.dims();
    let mut out = Vec::with_capacity(h * w * 3);
    for i in 0..h {
        for j in 0..w {
            out.push(to_byte(map.attack[[i, j]]));
            out.push(to_byte(map.living[[i, j]]));
            out.push(to_byte(map.background[[i, j]]));
        }
    }
    out
}

pub fn export_preview(map: &ThreeChannelMap, path: &Path) -> Result<()> {
    let (h, w) = map.dims();
    if h == 0 || w == 0 {
        return Err(Error::invalid("refusing to render an empty map"));
    }
    let raw = render_rgb(map);
    image::save_buffer(
        path,
        &raw,
        w as u32,
        h as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::format(format!("preview export: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_background_renders_solid_blue() {
        let mut map = ThreeChannelMap::zeros(3, 3);
        map.background.fill(1.0);
        let raw = render_rgb(&map);
        for px in raw.chunks_exact(3) {
            assert_eq!(px, [0, 0, 255]);
        }
    }

    #[test]
    fn all_attack_binary_renders_solid_red() {
        let mut map = ThreeChannelMap::zeros(2, 2);
        map.attack.fill(1.0);
        let raw = render_rgb(&map);
        for px in raw.chunks_exact(3) {
            assert_eq!(px, [255, 0, 0]);
        }
    }

    #[test]
    fn mixed_values_scale_per_channel() {
        let mut map = ThreeChannelMap::zeros(1, 2);
        map.attack[[0, 0]] = 0.5;
        map.living[[0, 1]] = 0.2;
        let raw = render_rgb(&map);
        assert_eq!(raw[0], (0.5f32 * 255.0).round() as u8);
        assert_eq!(raw[1], 0);
        assert_eq!(raw[4], (0.2f32 * 255.0).round() as u8);
    }

    #[test]
    fn preview_file_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let mut map = ThreeChannelMap::zeros(4, 4);
        map.background.fill(1.0);
        export_preview(&map, &path).unwrap();
        assert!(path.metadata().unwrap().len() > 0);
    }
}
