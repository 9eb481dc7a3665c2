//! Greyscale PGM (`P2` ASCII and `P5` binary) reading and writing.
//!
//! Pixels map linearly between `[0, maxval]` and `[0, 1]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spaces::{BlockVector, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Ascii,
    Binary,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments running to end of line.
    fn skip_space(&mut self) {
        while let Some(&c) = self.buf.get(self.pos) {
            if c == b'#' {
                while self.buf.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next decimal number and the byte offset it starts at.
    fn number(&mut self, what: &str) -> Result<(u32, usize)> {
        self.skip_space();
        let start = self.pos;
        while self.buf.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if start >= self.buf.len() {
                Error::format(start, format!("unexpected end of file reading {what}"))
            } else {
                Error::format(start, format!("expected {what}"))
            });
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map(|v| (v, start))
            .map_err(|_| Error::format(start, format!("{what} out of range")))
    }
}

/// Parses a PGM byte stream into a single `rows×cols` image block.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<BlockVector<T>> {
    let encoding = match bytes.get(..2) {
        Some(b"P2") => Encoding::Ascii,
        Some(b"P5") => Encoding::Binary,
        _ => return Err(Error::format(0, "missing P2/P5 magic number")),
    };
    let mut cur = Cursor { buf: bytes, pos: 2 };
    let (cols, cols_at) = cur.number("width")?;
    let (rows, rows_at) = cur.number("height")?;
    if cols == 0 || rows == 0 {
        return Err(Error::format(if cols == 0 { cols_at } else { rows_at }, "zero image dimension"));
    }
    let (cols, rows) = (cols as usize, rows as usize);
    let (maxval, max_pos) = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(max_pos, format!("maxval must lie in 1..=65535, got {maxval}")));
    }
    let scale = T::one() / T::lit(f64::from(maxval));
    let count = rows * cols;
    let mut data = Vec::with_capacity(count);
    match encoding {
        Encoding::Ascii => {
            for _ in 0..count {
                let (v, at) = cur.number("pixel value")?;
                if v > maxval {
                    return Err(Error::format(at, format!("pixel {v} exceeds maxval {maxval}")));
                }
                data.push(T::lit(f64::from(v)) * scale);
            }
        }
        Encoding::Binary => {
            // exactly one whitespace byte separates the header from the raster
            if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
                return Err(Error::format(cur.pos, "expected whitespace before raster"));
            }
            let start = cur.pos + 1;
            let width = if maxval < 256 { 1 } else { 2 };
            let need = count * width;
            let raster = bytes.get(start..start + need).ok_or_else(|| {
                Error::format(
                    bytes.len(),
                    format!("truncated raster: need {need} bytes, have {}", bytes.len().saturating_sub(start)),
                )
            })?;
            for (i, px) in raster.chunks_exact(width).enumerate() {
                let v = if width == 1 {
                    u32::from(px[0])
                } else {
                    u32::from(px[0]) << 8 | u32::from(px[1])
                };
                if v > maxval {
                    return Err(Error::format(start + i * width, format!("pixel {v} exceeds maxval {maxval}")));
                }
                data.push(T::lit(f64::from(v)) * scale);
            }
        }
    }
    BlockVector::from_vec(Shape::image(rows, cols)?, data)
}

/// Encodes a single-block image with maxval 255, clamping to `[0, 1]`.
pub fn encode<T: Real>(img: &BlockVector<T>, encoding: Encoding) -> Result<Vec<u8>> {
    let (rows, cols) = match img.blocks() {
        [b] => b
            .shape
            .as_image()
            .ok_or_else(|| Error::shape(format!("expected an image, got shape {}", b.shape)))?,
        _ => return Err(Error::shape("expected a single image block")),
    };
    if !img.is_finite() {
        return Err(Error::param("cannot encode non-finite pixels"));
    }
    let levels = img.iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8);
    let magic = match encoding {
        Encoding::Ascii => "P2",
        Encoding::Binary => "P5",
    };
    let mut out = format!("{magic}\n{cols} {rows}\n255\n").into_bytes();
    match encoding {
        Encoding::Binary => out.extend(levels),
        Encoding::Ascii => {
            for (i, v) in levels.enumerate() {
                out.extend_from_slice(v.to_string().as_bytes());
                out.push(if (i + 1) % cols == 0 { b'\n' } else { b' ' });
            }
        }
    }
    Ok(out)
}

pub fn load_pgm<T: Real>(path: impl AsRef<Path>) -> Result<BlockVector<T>> {
    decode(&fs::read(path)?)
}

/// Writes binary `P5`.
pub fn save_pgm<T: Real>(img: &BlockVector<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(img, Encoding::Binary)?)?;
    Ok(())
}
