//! Binary PGM (P5) codec, 8-bit and 16-bit big-endian.

use super::Image;
use crate::{Error, Result};

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset,
        reason: reason.into(),
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<u64> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| format_err(start, format!("{what} out of range")))
    }
}

/// Decodes a P5 stream, returning the image and the header's maxval.
pub fn decode_pgm_with_maxval(bytes: &[u8]) -> Result<(Image, u16)> {
    if bytes.len() < 2 {
        return Err(format_err(0, "truncated magic number"));
    }
    if &bytes[..2] != b"P5" {
        return Err(format_err(0, "unsupported magic number, expected P5"));
    }
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.read_uint("width")?;
    let height = rd.read_uint("height")?;
    let maxval_pos = rd.pos;
    let maxval = rd.read_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err(maxval_pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(
            maxval_pos,
            format!("maxval {maxval} not in 1..=65535"),
        ));
    }
    match bytes.get(rd.pos) {
        Some(c) if c.is_ascii_whitespace() => rd.pos += 1,
        _ => return Err(format_err(rd.pos, "missing whitespace after maxval")),
    }
    let (width, height) = (width as usize, height as usize);
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let n = width
        .checked_mul(height)
        .ok_or_else(|| format_err(0, "image dimensions overflow"))?;
    let payload = &bytes[rd.pos..];
    if payload.len() < n * bytes_per_sample {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated payload: {} bytes, expected {}",
                payload.len(),
                n * bytes_per_sample
            ),
        ));
    }
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let s = if bytes_per_sample == 2 {
            u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as u64
        } else {
            payload[i] as u64
        };
        if s > maxval {
            return Err(format_err(
                rd.pos + i * bytes_per_sample,
                format!("sample {s} exceeds maxval {maxval}"),
            ));
        }
        data.push(s as f64 / scale);
    }
    Ok((Image::new(width, height, data)?, maxval as u16))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    decode_pgm_with_maxval(bytes).map(|(img, _)| img)
}

/// Encodes in canonical form: `P5\n<w> <h>\n<maxval>\n` followed by samples.
pub fn encode_pgm(image: &Image, maxval: u16) -> Vec<u8> {
    let maxval = maxval.max(1);
    let mut out = format!("P5\n{} {}\n{}\n", image.width(), image.height(), maxval).into_bytes();
    let scale = maxval as f64;
    for &v in image.data() {
        let s = (v * scale).round().clamp(0.0, scale) as u16;
        if maxval > 255 {
            out.extend_from_slice(&s.to_be_bytes());
        } else {
            out.push(s as u8);
        }
    }
    out
}
