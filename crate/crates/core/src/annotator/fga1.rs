//! FGA1 map file: magic "FGA1", height and width as u32 LE, then the
//! attack, living and background planes as f32 LE, row-major. Values must
//! be finite and in [0, 1]; round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::chanmap::ThreeChannelMap;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FGA1";

pub fn write_map(map: &ThreeChannelMap, path: &Path) -> Result<()> {
    let (h, w) = map.dims();
    if h == 0 || w == 0 {
        return Err(Error::invalid("refusing to write an empty map"));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(h as u32).to_le_bytes())?;
    out.write_all(&(w as u32).to_le_bytes())?;
    for plane in [&map.attack, &map.living, &map.background] {
        for &v in plane.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_plane(reader: &mut impl Read, h: usize, w: usize) -> Result<Array2<f32>> {
    let mut buf = vec![0u8; h * w * 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| Error::format("truncated plane data"))?;
    let mut values = Vec::with_capacity(h * w);
    for chunk in buf.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::format(format!("plane value {v} outside [0, 1]")));
        }
        values.push(v);
    }
    Ok(Array2::from_shape_vec((h, w), values).expect("length checked"))
}

pub fn read_map(path: &Path) -> Result<ThreeChannelMap> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::format("file too short for magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(format!(
            "bad magic {:?}, expected FGA1",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut dims = [0u8; 8];
    reader
        .read_exact(&mut dims)
        .map_err(|_| Error::format("file too short for dimensions"))?;
    let h = u32::from_le_bytes([dims[0], dims[1], dims[2], dims[3]]) as usize;
    let w = u32::from_le_bytes([dims[4], dims[5], dims[6], dims[7]]) as usize;
    if h == 0 || w == 0 {
        return Err(Error::format("zero-sized map"));
    }
    if h.saturating_mul(w) > 1 << 28 {
        return Err(Error::format(format!("implausible dimensions {h}x{w}")));
    }
    let attack = read_plane(&mut reader, h, w)?;
    let living = read_plane(&mut reader, h, w)?;
    let background = read_plane(&mut reader, h, w)?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::format("trailing bytes after planes"));
    }
    Ok(ThreeChannelMap {
        attack,
        living,
        background,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ThreeChannelMap {
        let mut map = ThreeChannelMap::zeros(h, w);
        for i in 0..h {
            for j in 0..w {
                match rng.gen_range(0..3) {
                    0 => map.attack[[i, j]] = rng.gen_range(0.0..=1.0),
                    1 => map.living[[i, j]] = rng.gen_range(0.0..=1.0),
                    _ => map.background[[i, j]] = 1.0,
                }
            }
        }
        map
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fga1");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let map = random_map(&mut rng, 9, 13);
            write_map(&map, &path).unwrap();
            let back = read_map(&path).unwrap();
            for (a, b) in [
                (&map.attack, &back.attack),
                (&map.living, &back.living),
                (&map.background, &back.background),
            ] {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn double_write_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.fga1");
        let p2 = dir.path().join("b.fga1");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let map = random_map(&mut rng, 6, 6);
        write_map(&map, &p1).unwrap();
        let back = read_map(&p1).unwrap();
        write_map(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.fga1");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_map(&path), Err(Error::Format(_))));
    }

    #[test]
    fn zero_dims_rejected_on_read_and_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.fga1");
        std::fs::write(&path, b"FGA1\x00\x00\x00\x00\x05\x00\x00\x00").unwrap();
        assert!(read_map(&path).is_err());
        let empty = ThreeChannelMap::zeros(0, 0);
        assert!(write_map(&empty, &path).is_err());
    }

    #[test]
    fn truncated_plane_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.fga1");
        let map = ThreeChannelMap::zeros(4, 4);
        write_map(&map, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(read_map(&path), Err(Error::Format(_))));
    }

    #[test]
    fn out_of_range_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.fga1");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FGA1");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_map(&path), Err(Error::Format(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.fga1");
        let map = ThreeChannelMap::zeros(2, 2);
        write_map(&map, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_map(&path).is_err());
    }
}
