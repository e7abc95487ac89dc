//! Binary 8-bit PGM (`P5`, maxval 255).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while self.data.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("{what} out of range")))
    }
}

pub fn decode_pgm(data: &[u8]) -> Result<Image> {
    match data.get(..2) {
        Some(b"P5") => {}
        Some(m) => {
            return Err(Error::UnsupportedFormat(format!(
                "magic {:?}, only binary P5 is supported",
                String::from_utf8_lossy(m)
            )))
        }
        None => return Err(Error::MalformedHeader("file shorter than magic number".into())),
    }
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "maxval {maxval}, only 255 is supported"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    if !data.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::MalformedHeader("no whitespace after maxval".into()));
    }
    let payload = &data[cur.pos + 1..];
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    Image::new(width, height, payload[..expected].iter().map(|&b| b as f64).collect())
}

/// Valid pixels are stretched linearly from their `[min, max]` to `[0, 255]`
/// and rounded half-up; masked-out pixels and constant images write 0.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let (lo, hi) = img
        .valid_values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.reserve(img.pixels().len());
    for (i, &v) in img.pixels().iter().enumerate() {
        let byte = if !img.is_valid_index(i) || !(range > 0.0) {
            0
        } else {
            ((v - lo) / range * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
        };
        out.push(byte);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(bytes: &[u8]) -> &[u8] {
        &bytes[bytes.len() - 4..]
    }

    #[test]
    fn decode_basic() {
        let mut data = b"P5 2 2 255\n".to_vec();
        data.extend_from_slice(&[0, 128, 255, 64]);
        let img = decode_pgm(&data).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 128.0, 255.0, 64.0]);
        assert!(img.mask().is_none());
    }

    #[test]
    fn decode_with_comments() {
        let mut data = b"P5\n# made by hand\n2 1\n# another\n255\n".to_vec();
        data.extend_from_slice(&[7, 9]);
        assert_eq!(decode_pgm(&data).unwrap().pixels(), &[7.0, 9.0]);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(
            decode_pgm(b"P2 2 2 255\n0 1 2 3"),
            Err(Error::UnsupportedFormat(_))
        ));
        let mut data = b"P5 2 2 255\n".to_vec();
        data.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(
            decode_pgm(&data),
            Err(Error::TruncatedPayload { expected: 4, found: 3 })
        ));
        assert!(matches!(
            decode_pgm(b"P5 2 2 65535\n"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(decode_pgm(b"P5 2 x 255\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b"P"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b"P5 0 2 255\n"), Err(Error::InvalidImage(_))));
    }

    #[test]
    fn encode_rescale() {
        let img = Image::new(2, 1, vec![0.0, 255.0]).unwrap();
        assert_eq!(&encode_pgm(&img)[11..], &[0, 255]);
        let img = Image::new(2, 1, vec![-1.0, 1.0]).unwrap();
        assert_eq!(&encode_pgm(&img)[11..], &[0, 255]);
        // midpoint 127.5 rounds half-up
        let img = Image::new(3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(&encode_pgm(&img)[11..], &[0, 128, 255]);
    }

    #[test]
    fn encode_constant_and_masked() {
        let img = Image::new(2, 2, vec![5.0; 4]).unwrap();
        assert_eq!(payload(&encode_pgm(&img)), &[0, 0, 0, 0]);
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 100.0])
            .unwrap()
            .with_mask(vec![true, true, true, false])
            .unwrap();
        assert_eq!(payload(&encode_pgm(&img)), &[0, 128, 255, 0]);
    }

    #[test]
    fn file_roundtrip_and_missing_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = Image::new(3, 1, vec![0.0, 17.0, 255.0]).unwrap();
        save_pgm(&img, &path).unwrap();
        assert_eq!(load_pgm(&path).unwrap(), img);
        let missing = dir.path().join("missing.pgm");
        let err = load_pgm(&missing).unwrap_err().to_string();
        assert!(err.contains("missing.pgm"), "{err}");
    }

    proptest::proptest! {
        #[test]
        fn full_range_payload_roundtrips(
            w in 1usize..12,
            h in 1usize..12,
            seed in proptest::collection::vec(proptest::prelude::any::<u8>(), 144),
        ) {
            let mut bytes: Vec<u8> = seed[..w * h].to_vec();
            // min-max rescaling is the identity only when the payload spans 0..=255
            if bytes.len() < 2 {
                return Ok(());
            }
            bytes[0] = 0;
            bytes[1] = 255;
            let mut file = format!("P5\n{w} {h}\n255\n").into_bytes();
            file.extend_from_slice(&bytes);
            let img = decode_pgm(&file).unwrap();
            proptest::prop_assert_eq!(encode_pgm(&img), file);
        }
    }
}
