//! 8-bit PGM (binary P5 and ASCII P2); PNG behind the `png` feature.

use std::fs;
use std::path::Path;

use super::{DataError, Result};
use crate::raster::{GrayImage, Mask};

/// Parses P5 or P2 data. `#` comments are allowed between header fields.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'2') {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(DataError::NotPgm(shown));
    }
    let binary = bytes[1] == b'5';
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        let name = ["width", "height", "maxval"][k];
        // Whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(DataError::BadHeader(format!("missing {name}"))),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(DataError::BadHeader(format!("{name} is not a number")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| DataError::BadHeader(format!("{name} out of range")))?;
    }
    let [w, h, maxval] = fields;
    let (w, h) = (w as usize, h as usize);
    if w == 0 || h == 0 {
        return Err(DataError::ZeroDimension(w, h));
    }
    if maxval == 0 || maxval > 255 {
        return Err(DataError::UnsupportedMaxval(maxval));
    }
    let n = w.checked_mul(h).ok_or_else(|| DataError::BadHeader("dimensions overflow".into()))?;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(DataError::BadHeader("no separator after maxval".into()));
    }
    pos += 1;
    let scale = |v: u32| if maxval == 255 { v as u8 } else { ((v * 255 + maxval / 2) / maxval) as u8 };
    let data = if binary {
        let raw = &bytes[pos..];
        if raw.len() < n {
            return Err(DataError::Truncated { expected: n, found: raw.len() });
        }
        raw[..n].iter().map(|&v| scale((v as u32).min(maxval))).collect()
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| DataError::BadHeader("P2 body is not ASCII".into()))?;
        let mut out = Vec::with_capacity(n);
        for tok in text.split_ascii_whitespace().take(n) {
            let v: u32 = tok.parse().map_err(|_| DataError::BadHeader(format!("bad sample {tok:?}")))?;
            if v > maxval {
                return Err(DataError::BadHeader(format!("sample {v} exceeds maxval {maxval}")));
            }
            out.push(scale(v));
        }
        if out.len() < n {
            return Err(DataError::Truncated { expected: n, found: out.len() });
        }
        out
    };
    Ok(GrayImage::from_raw(w, h, data).expect("length checked"))
}

/// Binary P5 with maxval 255.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.as_raw());
    out
}

fn is_png(bytes: &[u8]) -> bool {
    bytes.starts_with(b"\x89PNG\r\n\x1a\n")
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |e: png::DecodingError| DataError::UnsupportedFormat(format!("png: {e}"));
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(bad)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let ch = info.color_type.samples();
    // Luma as the plain average of the colour channels; alpha is dropped.
    let colour = if ch >= 3 { 3 } else { 1 };
    let data = buf[..info.buffer_size()]
        .chunks_exact(ch)
        .map(|px| (px[..colour].iter().map(|&v| v as u32).sum::<u32>() / colour as u32) as u8)
        .collect();
    GrayImage::from_raw(w, h, data).ok_or_else(|| DataError::UnsupportedFormat("png: size mismatch".into()))
}

#[cfg(feature = "png")]
fn encode_png(image: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let bad = |e: png::EncodingError| DataError::UnsupportedFormat(format!("png: {e}"));
    let mut w = enc.write_header().map_err(bad)?;
    w.write_image_data(image.as_raw()).map_err(bad)?;
    w.finish().map_err(bad)?;
    Ok(out)
}

/// Reads a PGM (or PNG with the `png` feature) as grayscale.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    if is_png(&bytes) {
        #[cfg(feature = "png")]
        return decode_png(&bytes);
        #[cfg(not(feature = "png"))]
        return Err(DataError::UnsupportedFormat("PNG support not compiled in".into()));
    }
    decode_pgm(&bytes)
}

/// Writes PGM, or PNG when the extension is `.png` and the feature is on.
pub fn save_image(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let wants_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if wants_png {
        #[cfg(feature = "png")]
        {
            encode_png(image)?
        }
        #[cfg(not(feature = "png"))]
        return Err(DataError::UnsupportedFormat("PNG support not compiled in".into()));
    } else {
        encode_pgm(image)
    };
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

/// Masks are stored as images: 0 background, 255 foreground. On load any
/// value ≥ 128 is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Ok(Mask::from_image(&load_image(path)?, 128))
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_image(&mask.to_image(), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_matches_p5() {
        let p2 = b"P2\n# tiny\n3 2\n255\n0 10 20\n30 40 255\n";
        let img = decode_pgm(p2).unwrap();
        assert_eq!(img.as_raw(), &[0, 10, 20, 30, 40, 255]);
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn header_errors_are_distinct() {
        assert!(matches!(decode_pgm(b"P6\n1 1\n255\n\0"), Err(DataError::NotPgm(_))));
        assert!(matches!(decode_pgm(b"P5\n0 4\n255\n"), Err(DataError::ZeroDimension(0, 4))));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\0\0"), Err(DataError::Truncated { expected: 4, found: 2 })));
        assert!(matches!(decode_pgm(b"P5\n2 2\n65535\n"), Err(DataError::UnsupportedMaxval(65535))));
        assert!(matches!(decode_pgm(b"P5\nx"), Err(DataError::BadHeader(_))));
    }

    #[test]
    fn low_maxval_is_rescaled() {
        let img = decode_pgm(b"P2 2 1 15 0 15").unwrap();
        assert_eq!(img.as_raw(), &[0, 255]);
    }
}
