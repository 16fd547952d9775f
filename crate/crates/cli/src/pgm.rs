//! PGM (portable graymap) reading and writing. Reads P2 (ASCII) and P5
//! (binary) with maxval up to 65535; writes P5 with maxval 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::GrayImage;

struct Lexer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            if self.bytes[self.pos] == b'#' {
                break;
            }
            self.pos += 1;
        }
        if self.pos > start {
            Some(&self.bytes[start..self.pos])
        } else {
            None
        }
    }

    fn unsigned(&mut self, what: &str) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "bad {what} token {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut lex = Lexer::new(bytes);
    let magic = lex
        .token()
        .ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(Error::MalformedHeader(format!(
                "magic {:?} is not P2/P5",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = lex.unsigned("width")?;
    let height = lex.unsigned("height")?;
    let maxval = lex.unsigned("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "degenerate size {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval}")));
    }
    let count = width * height;
    let scale = maxval as f64;

    let pixels = if binary {
        // Exactly one whitespace byte after maxval, then raw samples.
        if lex.pos >= bytes.len() || !bytes[lex.pos].is_ascii_whitespace() {
            return Err(Error::MalformedHeader(
                "missing separator before binary data".into(),
            ));
        }
        let data = &bytes[lex.pos + 1..];
        let per_sample = if maxval > 255 { 2 } else { 1 };
        if data.len() < count * per_sample {
            return Err(Error::TruncatedData {
                expected: count * per_sample,
                found: data.len(),
            });
        }
        (0..count)
            .map(|i| {
                let raw = if per_sample == 1 {
                    data[i] as usize
                } else {
                    ((data[2 * i] as usize) << 8) | data[2 * i + 1] as usize
                };
                raw.min(maxval) as f64 / scale
            })
            .collect()
    } else {
        let mut pixels = Vec::with_capacity(count);
        for i in 0..count {
            match lex.token() {
                Some(tok) => {
                    let raw: usize = std::str::from_utf8(tok)
                        .ok()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| {
                            Error::MalformedHeader(format!(
                                "bad sample {:?}",
                                String::from_utf8_lossy(tok)
                            ))
                        })?;
                    pixels.push(raw.min(maxval) as f64 / scale);
                }
                None => {
                    return Err(Error::TruncatedData {
                        expected: count,
                        found: i,
                    })
                }
            }
        }
        pixels
    };
    GrayImage::new(width, height, pixels)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    parse_pgm(&fs::read(path)?)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + image.pixels().len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", image.width(), image.height()).as_bytes());
    for &p in image.pixels() {
        out.push((p.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    out
}

pub fn write_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_pgm(image))?;
    Ok(())
}
