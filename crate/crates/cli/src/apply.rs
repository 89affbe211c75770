//! `dropout`: one seeded training-mode forward on an image.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use swd_core::dropout::{self, Mode};
use swd_core::{Band, MaskRecord, SeededRng, SpectralDropoutConfig, Tensor4};

use crate::pgm::PgmImage;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropoutSummary {
    pub variant: String,
    pub wavelet: String,
    pub p: f64,
    pub eta: f64,
    pub seed: u64,
    /// The band mask came from `--force-mask` instead of the RNG.
    pub forced: bool,
    /// Wavelet bands zeroed by the mask; empty for the DCT variants.
    pub bands_dropped: Vec<Band>,
    /// Coefficients surviving pruning and masking; DCT variants only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kept_coefficients: Option<usize>,
    pub total_coefficients: usize,
    /// Sum of squares, pixels scaled to `[0, 1]`.
    pub energy_before: f64,
    pub energy_after: f64,
}

/// Parses a band mask such as `101`: one character per band slot, `1` keeps
/// the band and `0` drops it.
pub fn parse_mask(s: &str, cfg: &SpectralDropoutConfig) -> Result<Vec<bool>> {
    ensure!(cfg.variant.is_wavelet(), "--force-mask applies to swd1d and swd2d only");
    let bits: Vec<bool> = s
        .chars()
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            _ => bail!("--force-mask takes 0/1 characters, got '{c}'"),
        })
        .collect::<Result<_>>()?;
    ensure!(
        bits.len() == cfg.mask_bits(),
        "--force-mask needs {} bits for {} ({:?})",
        cfg.mask_bits(),
        cfg.variant.name(),
        cfg.band_slots()
    );
    Ok(bits)
}

pub struct DropoutRun {
    pub output: PgmImage,
    pub tensor: Tensor4,
    pub record: MaskRecord,
    pub summary: DropoutSummary,
}

/// Applies `cfg` to the image as a `(1, 1, H, W)` tensor. With `forced`
/// bits the record is built from them and replayed; otherwise the mask is
/// drawn from `seed`.
pub fn apply(img: &PgmImage, cfg: &SpectralDropoutConfig, seed: u64, forced: Option<Vec<bool>>) -> Result<DropoutRun> {
    cfg.validate()?;
    let x = Tensor4::new([1, 1, img.height, img.width], img.to_unit())?;
    let was_forced = forced.is_some();
    let (y, record) = match forced {
        Some(bits) => {
            let record = MaskRecord {
                seed,
                ..MaskRecord::forced(cfg, bits)
            };
            (dropout::replay(&x, &record, cfg)?, record)
        }
        None => dropout::forward(&x, cfg, &mut SeededRng::new(seed), Mode::Train)?,
    };
    let bands_dropped = if cfg.variant.is_wavelet() && !cfg.drop_approximation {
        cfg.band_slots()
            .iter()
            .zip(&record.bits)
            .filter(|(b, &keep)| !keep && cfg.band_select.as_ref().is_none_or(|s| s.contains(b)))
            .map(|(&b, _)| b)
            .collect()
    } else {
        Vec::new()
    };
    let kept_coefficients = (!cfg.variant.is_wavelet()).then(|| record.bits.iter().filter(|&&k| k).count());
    let summary = DropoutSummary {
        variant: cfg.variant.name().into(),
        wavelet: cfg.wavelet.name().into(),
        p: cfg.p,
        eta: cfg.eta,
        seed,
        forced: was_forced,
        bands_dropped,
        kept_coefficients,
        total_coefficients: x.len(),
        energy_before: x.dot(&x),
        energy_after: y.dot(&y),
    };
    let output = PgmImage::from_unit(img.width, img.height, img.maxval, y.data())?;
    Ok(DropoutRun {
        output,
        tensor: y,
        record,
        summary,
    })
}

pub fn write(run: &DropoutRun, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    run.output.write(&out.join("output.pgm"))?;
    let files = [
        ("output.bin", run.tensor.to_bytes()),
        ("mask.bin", run.record.to_bytes()),
        ("summary.json", (serde_json::to_string_pretty(&run.summary)? + "\n").into_bytes()),
    ];
    for (name, bytes) in files {
        let path = out.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}
