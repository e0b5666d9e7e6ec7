//! Binary PPM (P6, maxval 255) encoding and decoding.

use super::{PixelImage, RasterError};

pub fn encode_ppm(img: &PixelImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.width() * img.height() * 3);
    out.extend_from_slice(header.as_bytes());
    out.extend(img.to_rgb_bytes());
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_whitespace(&mut self) -> Result<(), RasterError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(RasterError::MalformedHeader("expected whitespace".into()));
        }
        Ok(())
    }

    fn number(&mut self, what: &str) -> Result<usize, RasterError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::MalformedHeader(format!("bad {what}")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<PixelImage, RasterError> {
    if bytes.len() < 2 {
        return Err(RasterError::MalformedHeader("missing magic".into()));
    }
    match &bytes[..2] {
        b"P6" => {}
        [b'P', d] if d.is_ascii_digit() => {
            return Err(RasterError::UnsupportedDialect(
                String::from_utf8_lossy(&bytes[..2]).into_owned(),
            ))
        }
        _ => return Err(RasterError::WrongMagic),
    }
    let mut r = HeaderReader { bytes, pos: 2 };
    r.skip_whitespace()?;
    let width = r.number("width")?;
    r.skip_whitespace()?;
    let height = r.number("height")?;
    r.skip_whitespace()?;
    let maxval = r.number("maxval")?;
    if maxval != 255 {
        return Err(RasterError::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if r.pos >= bytes.len() || !bytes[r.pos].is_ascii_whitespace() {
        return Err(RasterError::MalformedHeader("missing payload separator".into()));
    }
    let payload = &bytes[r.pos + 1..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| RasterError::MalformedHeader("dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(RasterError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(RasterError::TrailingBytes(payload.len() - expected));
    }
    PixelImage::from_rgb_bytes(width, height, payload)
}
