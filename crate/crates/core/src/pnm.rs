//! Binary PGM (`P5`, one channel) and PPM (`P6`, three channels), maxval 255.
//!
//! Loading scales bytes by `1/255`. Saving clamps to `[0, 1]` and quantizes
//! with round-half-up, so a save/load round trip moves any in-range value by at
//! most half a quantum.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::MalformedHeader("missing P5/P6 magic".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        // whitespace and comments between fields
        let start_ws = pos;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if pos == start_ws {
            return Err(Error::MalformedHeader(format!("expected whitespace before field {k}")));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader(format!("expected a decimal number for field {k}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("number {text} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedHeader("expected one whitespace byte after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} unsupported (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("empty image {width}x{height}")));
    }
    Ok(Header { channels, width, height, payload_offset: pos })
}

/// Decodes an in-memory P5/P6 file.
pub fn decode<T: Scalar>(bytes: &[u8], expected_channels: usize) -> Result<Tensor<T>> {
    let header = parse_header(bytes)?;
    if header.channels != expected_channels {
        return Err(Error::ChannelCount { expected: expected_channels, found: header.channels });
    }
    decode_with_header(bytes, &header)
}

/// Decodes either variant, returning whatever channel count the file declares.
pub fn decode_any<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let header = parse_header(bytes)?;
    decode_with_header(bytes, &header)
}

fn decode_with_header<T: Scalar>(bytes: &[u8], h: &Header) -> Result<Tensor<T>> {
    let plane = h.width * h.height;
    let expected = plane * h.channels;
    let payload = &bytes[h.payload_offset..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload { expected, found: payload.len() });
    }
    let scale = T::of(255.0);
    let mut t = Tensor::zeros(h.channels, h.height, h.width);
    // interleaved samples → planar
    for (i, &b) in payload[..expected].iter().enumerate() {
        let (pixel, c) = (i / h.channels, i % h.channels);
        t.data_mut()[c * plane + pixel] = T::of(f64::from(b)) / scale;
    }
    Ok(t)
}

/// Round-half-up quantization of a clamped value.
pub fn quantize<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64();
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let magic = match t.channels() {
        1 => "P5",
        3 => "P6",
        found => return Err(Error::ChannelCount { expected: 3, found }),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", t.width(), t.height()).into_bytes();
    let plane = t.plane_len();
    out.reserve(t.len());
    for pixel in 0..plane {
        for c in 0..t.channels() {
            out.push(quantize(t.data()[c * plane + pixel]));
        }
    }
    Ok(out)
}

pub fn load_image<T: Scalar>(path: impl AsRef<Path>, expected_channels: usize) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected_channels)
}

/// Loads a P5 or P6 file as three channels; gray images are replicated.
pub fn load_rgb<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let t: Tensor<T> = decode_any(&bytes)?;
    if t.channels() == 3 {
        return Ok(t);
    }
    let mut data = Vec::with_capacity(t.len() * 3);
    for _ in 0..3 {
        data.extend_from_slice(t.data());
    }
    Tensor::new(3, t.height(), t.width(), data)
}

pub fn save_image<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(t)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pgm(w: usize, h: usize, payload: &[u8]) -> Vec<u8> {
        let mut v = format!("P5\n{w} {h}\n255\n").into_bytes();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn p5_bytes_scale_to_unit_range() {
        let t: Tensor<f64> = decode(&pgm(2, 2, &[0, 255, 128, 64]), 1).unwrap();
        assert_eq!(t.shape(), (1, 2, 2));
        assert_eq!(t.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn p6_short_payload_is_truncated() {
        let mut bytes = b"P6\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        match decode::<f64>(&bytes, 3) {
            Err(Error::TruncatedPayload { expected: 9, found: 6 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors_are_distinct() {
        assert!(matches!(decode::<f64>(b"P3\n1 1\n255\n\0", 1), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode::<f64>(b"P5\n1 x\n255\n\0", 1), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode::<f64>(b"P5\n1 1\n65535\n\0\0", 1), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            decode::<f64>(&pgm(1, 1, &[7]), 3),
            Err(Error::ChannelCount { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let bytes = b"P5\n# made by hand\n1 1\n255\n\x80";
        let t: Tensor<f64> = decode(bytes, 1).unwrap();
        assert_eq!(t.data(), &[128.0 / 255.0]);
    }

    #[test]
    fn quantization_rules() {
        assert_eq!(quantize(0.5f64), 128);
        assert_eq!(quantize(1.2f64), 255);
        assert_eq!(quantize(-0.3f64), 0);
    }

    #[test]
    fn zero_image_payload() {
        let t = Tensor::<f64>::zeros(1, 4, 4);
        let bytes = encode(&t).unwrap();
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0u8; 16]);
    }

    #[test]
    fn save_load_through_filesystem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.ppm");
        let t = Tensor::<f64>::from_fn(3, 3, 5, |c, y, x| ((c + 2 * y + 3 * x) % 7) as f64 / 6.0);
        save_image(&t, &path).unwrap();
        let back: Tensor<f64> = load_image(&path, 3).unwrap();
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert!(matches!(
            save_image(&t, dir.path().join("missing/dir/x.ppm")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_error_is_half_quantum(
            c in prop::sample::select(vec![1usize, 3]),
            h in 1usize..6,
            w in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::rng::SeededRng::new(seed);
            let t = Tensor::<f64>::from_fn(c, h, w, |_, _, _| rng.next_uniform());
            let back: Tensor<f64> = decode(&encode(&t).unwrap(), c).unwrap();
            for (a, b) in t.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
