//! Binary greyscale PGM images and the `GTSR` tensor file format.
//!
//! `GTSR` layout: the bytes `G T S R 0x01`, then B, C, H, W as `u32`
//! little-endian, then B·C·H·W `f32` little-endian values, width fastest.
//!
//! Every writer goes through [`write_atomic`]: the bytes land in a
//! temporary sibling file that is renamed over the target.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"GTSR";
pub const TENSOR_VERSION: u8 = 1;
const TENSOR_HEADER: usize = 5 + 16;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} is not a file path", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
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
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format(format!("malformed PGM header: missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("malformed PGM header: {what} out of range")))
    }
}

/// Decodes a binary `P5` image with maxval 255 into a (1, 1, H, W) tensor
/// with pixel p mapped to p / 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("wrong magic: expected binary PGM \"P5\"".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}: only 255 is accepted")));
    }
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("malformed PGM header: no separator before pixel data".into()));
    }
    let data = &bytes[cur.pos + 1..];
    let shape = Shape::new(1, 1, height, width).map_err(|_| Error::Format(format!("malformed PGM header: empty {width}x{height} image")))?;
    if data.len() < shape.numel() {
        return Err(Error::Format(format!("truncated PGM payload: expected {} bytes, found {}", shape.numel(), data.len())));
    }
    Ok(Tensor::from_fn(shape, |_, _, y, x| data[y * width + x] as f64 / 255.0))
}

/// Encodes a single-plane tensor, clamping to [0, 1] and rounding half up.
pub fn encode_pgm<T: Real>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let s = t.shape();
    if s.batch != 1 || s.channels != 1 {
        return Err(Error::Format(format!("PGM output needs a single 1x1xHxW plane, got {s}")));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("PGM pixel values".into()));
    }
    let mut out = format!("P5\n{} {}\n255\n", s.width, s.height).into_bytes();
    out.extend(t.data().iter().map(|v| (v.to_f64().clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8));
    Ok(out)
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm<T: Real>(t: &Tensor<T>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_pgm(t)?)
}

/// Rescales a plane to [0, 1] by its maximum; an all-zero plane stays zero.
pub fn normalize_for_display<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let max = t.data().iter().fold(0.0f64, |m, v| m.max(v.to_f64().abs()));
    if max > 0.0 {
        t.map(|v| v.abs() / max)
    } else {
        t.clone()
    }
}

pub fn encode_tensor<T: Real>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(TENSOR_HEADER + 4 * t.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(TENSOR_VERSION);
    for d in t.shape().dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 5 || &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::Format("wrong magic: expected tensor file \"GTSR\"".into()));
    }
    if bytes[4] != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor file version {}", bytes[4])));
    }
    if bytes.len() < TENSOR_HEADER {
        return Err(Error::Format(format!("truncated tensor header: {} bytes", bytes.len())));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().expect("4 bytes")) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2), dim(3)).map_err(|e| Error::Format(format!("bad tensor dims: {e}")))?;
    let payload = &bytes[TENSOR_HEADER..];
    let expected = shape.numel().checked_mul(4).ok_or_else(|| Error::Format("tensor dims overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "tensor payload length {} does not match dims {shape} ({expected} bytes)",
            payload.len()
        )));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Tensor::new(shape, data)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

pub fn write_tensor<T: Real>(t: &Tensor<T>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_tensor(t))
}
