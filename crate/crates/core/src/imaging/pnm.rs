//! Binary PGM (P5) and PBM (P4) files.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{BinaryMap, DistanceMap, GrayImage};

#[derive(Debug, Error)]
pub enum PnmError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed PGM: {0}")]
    Malformed(String),
}

pub fn read_pgm<R: Read>(reader: R) -> Result<GrayImage, PnmError> {
    let mut r = BufReader::new(reader);
    let magic = header_token(&mut r)?;
    if magic != "P5" {
        return Err(PnmError::Malformed(format!("expected P5 magic, found {magic:?}")));
    }
    let mut field = |name: &str| -> Result<usize, PnmError> {
        let tok = header_token(&mut r)?;
        tok.parse()
            .map_err(|_| PnmError::Malformed(format!("bad {name} {tok:?}")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(PnmError::Malformed(format!("only 8-bit maxval is supported, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(PnmError::Malformed("zero image size".into()));
    }
    let mut pixels = vec![0u8; width * height];
    r.read_exact(&mut pixels)
        .map_err(|_| PnmError::Malformed(format!("pixel data shorter than {width}x{height}")))?;
    if maxval < 255 {
        for p in &mut pixels {
            *p = ((*p as u32 * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8;
        }
    }
    GrayImage::new(width, height, pixels).map_err(|e| PnmError::Malformed(e.to_string()))
}

/// Reads one whitespace-delimited header token, skipping `#` comments, and
/// consumes the single whitespace byte that follows it.
fn header_token<R: BufRead>(r: &mut R) -> Result<String, PnmError> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            if tok.is_empty() {
                return Err(PnmError::Malformed("truncated header".into()));
            }
            break;
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
        if tok.len() > 32 {
            return Err(PnmError::Malformed("header token too long".into()));
        }
    }
    String::from_utf8(tok).map_err(|_| PnmError::Malformed("non-ASCII header".into()))
}

pub fn write_pgm<W: Write>(mut w: W, img: &GrayImage) -> io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width(), img.height())?;
    w.write_all(img.pixels())
}

/// Set pixels are written as 1 (black).
pub fn write_pbm<W: Write>(mut w: W, map: &BinaryMap) -> io::Result<()> {
    write!(w, "P4\n{} {}\n", map.width(), map.height())?;
    let row_bytes = map.width().div_ceil(8);
    let mut row = vec![0u8; row_bytes];
    for y in 0..map.height() {
        row.iter_mut().for_each(|b| *b = 0);
        for x in 0..map.width() {
            if map.get(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        w.write_all(&row)?;
    }
    Ok(())
}

/// Distance map as an 8-bit PGM, one gray level per pixel of distance, saturating at 255.
pub fn write_distance_pgm<W: Write>(w: W, dist: &DistanceMap) -> io::Result<()> {
    let pixels = dist.values().iter().map(|&d| d.round().min(255.0) as u8).collect();
    let img = GrayImage::new(dist.width(), dist.height(), pixels).expect("sizes match");
    write_pgm(w, &img)
}

pub fn read_pgm_file(path: &Path) -> Result<GrayImage, PnmError> {
    read_pgm(std::fs::File::open(path)?)
}

pub fn write_pgm_file(path: &Path, img: &GrayImage) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    write_pgm(&mut f, img)?;
    f.flush()
}

pub fn write_pbm_file(path: &Path, map: &BinaryMap) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    write_pbm(&mut f, map)?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_comments_and_low_maxval() {
        let mut data = b"P5\n# made by hand\n3 2\n# max\n15\n".to_vec();
        data.extend_from_slice(&[0, 15, 5, 10, 1, 2]);
        let img = read_pgm(&data[..]).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixels(), &[0, 255, 85, 170, 17, 34]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n255\n\x00"[..]).is_err());
        assert!(read_pgm(&b"P5\n2"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n65535\n"[..]).is_err());
        assert!(read_pgm(&b""[..]).is_err());
    }

    #[test]
    fn pbm_packing() {
        let mut m = BinaryMap::empty(10, 2);
        m.set(0, 0, true);
        m.set(9, 1, true);
        let mut buf = Vec::new();
        write_pbm(&mut buf, &m).unwrap();
        let header = b"P4\n10 2\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(&buf[header.len()..], &[0x80, 0x00, 0x00, 0x40]);
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let pixels: Vec<u8> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            let img = GrayImage::new(w, h, pixels).unwrap();
            let mut buf = Vec::new();
            write_pgm(&mut buf, &img).unwrap();
            prop_assert_eq!(read_pgm(&buf[..]).unwrap(), img);
        }
    }
}
