//! Grayscale PGM, plain (P2) and raw (P5), maxval 255 or 65535.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
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
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        ensure!(self.pos > start, "malformed PGM: expected {what}");
        std::str::from_utf8(&self.bytes[start..self.pos])?
            .parse()
            .with_context(|| format!("malformed PGM: {what} out of range"))
    }
}

impl PgmImage {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self> {
        ensure!(width > 0 && height > 0, "PGM dimensions must be positive");
        ensure!(maxval == 255 || maxval == 65535, "unsupported maxval {maxval} (need 255 or 65535)");
        ensure!(
            pixels.len() == width * height,
            "PGM has {} pixels, expected {}",
            pixels.len(),
            width * height
        );
        ensure!(pixels.iter().all(|&p| p <= maxval), "pixel above maxval {maxval}");
        Ok(Self {
            width,
            height,
            maxval,
            pixels,
        })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        ensure!(bytes.len() >= 2, "malformed PGM: file too short");
        let raw = match &bytes[..2] {
            b"P5" => true,
            b"P2" => false,
            _ => bail!("malformed PGM: magic must be P2 or P5"),
        };
        let mut h = Header { bytes, pos: 2 };
        let width = h.number("width")?;
        let height = h.number("height")?;
        let maxval = h.number("maxval")?;
        ensure!(maxval == 255 || maxval == 65535, "unsupported maxval {maxval} (need 255 or 65535)");
        let maxval = maxval as u16;
        let count = width
            .checked_mul(height)
            .filter(|&c| c > 0)
            .context("malformed PGM: bad dimensions")?;
        let pixels = if raw {
            // Exactly one whitespace byte separates the header from the raster.
            ensure!(
                h.bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace),
                "malformed PGM: missing raster separator"
            );
            let data = &bytes[h.pos + 1..];
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            ensure!(data.len() >= need, "malformed PGM: raster has {} bytes, expected {need}", data.len());
            if wide {
                data[..need].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            } else {
                data[..count].iter().map(|&b| u16::from(b)).collect()
            }
        } else {
            let mut px = Vec::with_capacity(count);
            for _ in 0..count {
                let v = h.number("pixel value")?;
                ensure!(v <= maxval as usize, "malformed PGM: pixel {v} above maxval {maxval}");
                px.push(v as u16);
            }
            px
        };
        Self::new(width, height, maxval, pixels)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&bytes).with_context(|| format!("in {}", path.display()))
    }

    /// Raw (P5) encoding.
    pub fn to_raw(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            for p in &self.pixels {
                out.extend_from_slice(&p.to_be_bytes());
            }
        } else {
            out.extend(self.pixels.iter().map(|&p| p as u8));
        }
        out
    }

    /// Plain (P2) encoding, at most 16 values per line.
    pub fn to_plain(&self) -> String {
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.height, self.maxval);
        for row in self.pixels.chunks(16) {
            let line: Vec<String> = row.iter().map(u16::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_raw()).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Pixels scaled to `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f64> {
        let m = f64::from(self.maxval);
        self.pixels.iter().map(|&p| f64::from(p) / m).collect()
    }

    /// Quantizes `[0, 1]` values (clamped) to `maxval` levels.
    pub fn from_unit(width: usize, height: usize, maxval: u16, values: &[f64]) -> Result<Self> {
        let m = f64::from(maxval);
        let pixels = values.iter().map(|v| (v.clamp(0.0, 1.0) * m).round() as u16).collect();
        Self::new(width, height, maxval, pixels)
    }
}
