//! `decompose` and `reconstruct`: band images for viewing, lossless band
//! tensors for the round trip, and a JSON manifest tying them together.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use swd_core::wavelet::{self, Bands2D, Pyramid1D};
use swd_core::{Matrix, Tensor4, WaveletKind};

use crate::pgm::PgmImage;

pub const MANIFEST: &str = "manifest.json";
const LEVELS_1D: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum DecompMode {
    /// Flatten the image and run a 3-level 1D decomposition.
    #[value(name = "1d")]
    #[serde(rename = "1d")]
    OneD,
    /// One-level 2D decomposition.
    #[value(name = "2d")]
    #[serde(rename = "2d")]
    TwoD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandEntry {
    pub name: String,
    /// Shape of the coefficient array; 1D bands are `[1, len]`.
    pub rows: usize,
    pub cols: usize,
    /// Sum of squared coefficients, pixels scaled to `[0, 1]`.
    pub energy: f64,
    pub image: String,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub wavelet: WaveletKind,
    pub mode: DecompMode,
    /// Input length of each 1D level (1D mode only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub level_lens: Vec<usize>,
    pub bands: Vec<BandEntry>,
}

/// Rescales a band to 8-bit gray. Signed detail bands map zero to mid-gray
/// and the largest magnitude to 0 or 255; the approximation band is min-max
/// stretched. Constant bands come out mid-gray.
pub fn render_band(values: &[f64], signed: bool) -> Vec<u16> {
    let to_gray = |t: f64| (t * 255.0).round().clamp(0.0, 255.0) as u16;
    if signed {
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return vec![128; values.len()];
        }
        values.iter().map(|v| to_gray(0.5 + 0.5 * v / peak)).collect()
    } else {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 0.0 {
            return vec![128; values.len()];
        }
        values.iter().map(|v| to_gray((v - lo) / (hi - lo))).collect()
    }
}

/// A 1D band laid out in rows of `width`, the tail padded with the value
/// that renders as zero coefficient.
fn strip(values: &[f64], width: usize, signed: bool) -> Result<PgmImage> {
    let gray = render_band(values, signed);
    let width = width.min(values.len()).max(1);
    let rows = values.len().div_ceil(width);
    let pad = if signed { 128 } else { 0 };
    let mut pixels = gray;
    pixels.resize(rows * width, pad);
    PgmImage::new(width, rows, 255, pixels)
}

fn energy(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum()
}

fn write_band(out: &Path, name: &str, rows: usize, cols: usize, values: &[f64], image: &PgmImage) -> Result<BandEntry> {
    let image_file = format!("{name}.pgm");
    let data_file = format!("{name}.bin");
    image.write(&out.join(&image_file))?;
    let tensor = Tensor4::new([1, 1, rows, cols], values.to_vec())?;
    std::fs::write(out.join(&data_file), tensor.to_bytes())
        .with_context(|| format!("cannot write {}", out.join(&data_file).display()))?;
    Ok(BandEntry {
        name: name.to_string(),
        rows,
        cols,
        energy: energy(values),
        image: image_file,
        data: data_file,
    })
}

pub fn decompose(input: &Path, wavelet: WaveletKind, mode: DecompMode, out: &Path) -> Result<Manifest> {
    let img = PgmImage::read(input)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let f = wavelet.filter();
    let x = img.to_unit();
    let mut bands = Vec::new();
    let mut level_lens = Vec::new();
    match mode {
        DecompMode::TwoD => {
            let m = Matrix::new(img.height, img.width, x)?;
            let b = wavelet::dwt2d(&m, &f)?;
            for (name, band, signed) in [("ll", &b.ll, false), ("lh", &b.lh, true), ("hl", &b.hl, true), ("hh", &b.hh, true)] {
                let (r, c) = band.shape();
                let image = PgmImage::new(c, r, 255, render_band(band.data(), signed))?;
                bands.push(write_band(out, name, r, c, band.data(), &image)?);
            }
        }
        DecompMode::OneD => {
            let p = wavelet::dwt1d(&x, &f, LEVELS_1D)?;
            level_lens = p.lens.clone();
            let named = std::iter::once(("ap", &p.ap, false))
                .chain(["l1", "l2", "l3"].into_iter().zip(&p.details).map(|(n, d)| (n, d, true)));
            for (name, values, signed) in named {
                let image = strip(values, img.width, signed)?;
                bands.push(write_band(out, name, 1, values.len(), values, &image)?);
            }
        }
    }
    let manifest = Manifest {
        width: img.width,
        height: img.height,
        maxval: img.maxval,
        wavelet,
        mode,
        level_lens,
        bands,
    };
    std::fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write manifest in {}", out.display()))?;
    Ok(manifest)
}

fn load_band(dir: &Path, manifest: &Manifest, name: &str) -> Result<Tensor4> {
    let entry = manifest
        .bands
        .iter()
        .find(|b| b.name == name)
        .with_context(|| format!("manifest has no band '{name}'"))?;
    let path = dir.join(&entry.data);
    let bytes = std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let t = Tensor4::from_bytes(&bytes).with_context(|| format!("in {}", path.display()))?;
    ensure!(
        t.shape() == [1, 1, entry.rows, entry.cols],
        "band '{name}' has shape {:?}, manifest says {}x{}",
        t.shape(),
        entry.rows,
        entry.cols
    );
    Ok(t)
}

/// Inverts a `decompose` output directory back to an image.
pub fn reconstruct(dir: &Path) -> Result<PgmImage> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("in {}", path.display()))?;
    let f = manifest.wavelet.filter();
    let values = match manifest.mode {
        DecompMode::TwoD => {
            let band = |name: &str| -> Result<Matrix> {
                let t = load_band(dir, &manifest, name)?;
                let [_, _, r, c] = t.shape();
                Ok(Matrix::new(r, c, t.into_data())?)
            };
            let b = Bands2D {
                ll: band("ll")?,
                lh: band("lh")?,
                hl: band("hl")?,
                hh: band("hh")?,
                orig: (manifest.height, manifest.width),
            };
            wavelet::idwt2d(&b, &f)?.into_data()
        }
        DecompMode::OneD => {
            if manifest.level_lens.len() != LEVELS_1D {
                bail!("1d manifest needs {LEVELS_1D} level lengths");
            }
            let p = Pyramid1D {
                ap: load_band(dir, &manifest, "ap")?.into_data(),
                details: ["l1", "l2", "l3"]
                    .iter()
                    .map(|n| Ok(load_band(dir, &manifest, n)?.into_data()))
                    .collect::<Result<_>>()?,
                lens: manifest.level_lens.clone(),
            };
            wavelet::idwt1d(&p, &f)?
        }
    };
    ensure!(
        values.len() == manifest.width * manifest.height,
        "reconstruction has {} samples, expected {}",
        values.len(),
        manifest.width * manifest.height
    );
    PgmImage::from_unit(manifest.width, manifest.height, manifest.maxval, &values)
}
