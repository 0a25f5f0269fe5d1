//! Binary PGM (`P5`) reading and writing, 8-bit only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn skip_ws_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(pos) {
                    pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            _ => return pos,
        }
    }
}

fn read_uint(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let pos = skip_ws_and_comments(bytes, pos);
    let start = pos;
    let mut end = pos;
    let mut value: usize = 0;
    while let Some(&b) = bytes.get(end) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as usize))
            .ok_or_else(|| parse_err(start, format!("{what} overflows")))?;
        end += 1;
    }
    if end == start {
        return Err(match bytes.get(start) {
            None => parse_err(start, format!("unexpected end of header, expected {what}")),
            Some(_) => parse_err(start, format!("expected decimal {what}")),
        });
    }
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(parse_err(0, "bad magic, expected \"P5\""));
    }
    let (width, pos) = read_uint(bytes, 2, "width")?;
    let (height, pos) = read_uint(bytes, pos, "height")?;
    let (maxval, pos) = read_uint(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(pos, format!("image size {width}x{height} must be positive")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(pos, format!("maxval {maxval} outside 1..=255")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(parse_err(pos, "expected a single whitespace byte after maxval")),
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

/// Decodes a P5 image into a `[1, H, W]` tensor scaled by `1/maxval`.
pub fn load_pgm(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let payload = &bytes[h.data_start..];
    if payload.len() < n {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: expected {n} pixel bytes, found {}", payload.len()),
        ));
    }
    let scale = 1.0 / h.maxval as f32;
    let mut data = Vec::with_capacity(n);
    for (i, &b) in payload[..n].iter().enumerate() {
        if b as usize > h.maxval {
            return Err(parse_err(
                h.data_start + i,
                format!("sample {b} exceeds maxval {}", h.maxval),
            ));
        }
        data.push(b as f32 * scale);
    }
    Tensor::new(&[1, h.height, h.width], data)
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_pgm(&bytes)
}

/// Quantizes `[0,1]` pixels to 8 bits, rounding half up.
pub fn encode_pgm(img: &Tensor) -> Result<Vec<u8>> {
    img.expect_rank("encode_pgm", 3)?;
    let (c, h, w) = (img.dims()[0], img.dims()[1], img.dims()[2]);
    if c != 1 {
        return Err(Error::dim("encode_pgm", &[1, h, w], img.dims()));
    }
    if let Some(v) = img.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Validation(format!("pixel value {v} outside [0, 1]")));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.data().iter().map(|&v| (v * 255.0 + 0.5).floor().min(255.0) as u8));
    Ok(out)
}

pub fn save_pgm(img: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_pgm(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
