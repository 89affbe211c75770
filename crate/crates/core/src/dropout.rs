//! Spectral dropout operators.
//!
//! * `Swd1d`: flatten each channel, 3-level 1D DWT, drop whole detail bands.
//! * `Swd2d`: 1-level 2D DWT per channel, drop whole LH/HL/HH sub-bands.
//! * `Sfd1d` / `Sfd2d`: DCT per channel, prune the weakest coefficients,
//!   then drop the survivors i.i.d.
//!
//! Every train-mode forward is split into sampling a [`MaskRecord`] and
//! applying it, so a record replays the forward exactly. SWD samples one
//! band mask per call, shared by every batch element and channel; the
//! approximation band is never touched. Survivors are scaled by `1/(1-p)`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dct;
use crate::error::{Result, SwdError};
use crate::rng::SeededRng;
use crate::tensor::{Matrix, Tensor4};
use crate::wavelet::{self, WaveletFilter, WaveletKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Swd1d,
    Swd2d,
    Sfd1d,
    Sfd2d,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Swd1d, Variant::Swd2d, Variant::Sfd1d, Variant::Sfd2d];

    pub fn is_wavelet(self) -> bool {
        matches!(self, Variant::Swd1d | Variant::Swd2d)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Swd1d => "swd1d",
            Variant::Swd2d => "swd2d",
            Variant::Sfd1d => "sfd1d",
            Variant::Sfd2d => "sfd2d",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Variant::Swd1d => 0,
            Variant::Swd2d => 1,
            Variant::Sfd1d => 2,
            Variant::Sfd2d => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == tag)
            .ok_or_else(|| SwdError::Malformed(format!("unknown variant tag {tag}")))
    }
}

impl FromStr for Variant {
    type Err = SwdError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| SwdError::InvalidArgument(format!("unknown variant '{s}'")))
    }
}

/// Droppable frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    L1,
    L2,
    L3,
    LH,
    HL,
    HH,
}

impl FromStr for Band {
    type Err = SwdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Band::L1),
            "L2" => Ok(Band::L2),
            "L3" => Ok(Band::L3),
            "LH" => Ok(Band::LH),
            "HL" => Ok(Band::HL),
            "HH" => Ok(Band::HH),
            _ => Err(SwdError::InvalidArgument(format!("unknown band '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

fn default_wavelet() -> WaveletKind {
    WaveletKind::Db3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralDropoutConfig {
    pub variant: Variant,
    /// Drop probability in `[0, 1)`.
    pub p: f64,
    /// Pruning rate in `[0, 1)`; SFD only.
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_wavelet")]
    pub wavelet: WaveletKind,
    /// Restricts masking to these detail bands; the rest pass unscaled.
    #[serde(default)]
    pub band_select: Option<Vec<Band>>,
    /// Ablation diagnostic for `Swd1d`: mask the approximation band instead
    /// of the details.
    #[serde(default)]
    pub drop_approximation: bool,
}

impl SpectralDropoutConfig {
    fn base(variant: Variant, p: f64, eta: f64) -> Self {
        Self {
            variant,
            p,
            eta,
            wavelet: WaveletKind::Db3,
            band_select: None,
            drop_approximation: false,
        }
    }

    pub fn swd1d(p: f64) -> Self {
        Self::base(Variant::Swd1d, p, 0.0)
    }

    pub fn swd2d(p: f64) -> Self {
        Self::base(Variant::Swd2d, p, 0.0)
    }

    pub fn sfd1d(p: f64, eta: f64) -> Self {
        Self::base(Variant::Sfd1d, p, eta)
    }

    pub fn sfd2d(p: f64, eta: f64) -> Self {
        Self::base(Variant::Sfd2d, p, eta)
    }

    pub fn new(variant: Variant, p: f64, eta: f64) -> Self {
        Self::base(variant, p, eta)
    }

    pub fn with_wavelet(mut self, wavelet: WaveletKind) -> Self {
        self.wavelet = wavelet;
        self
    }

    pub fn with_bands(mut self, bands: &[Band]) -> Self {
        self.band_select = Some(bands.to_vec());
        self
    }

    /// 1D-SWD that masks the approximation band only.
    pub fn approximation_diagnostic(p: f64) -> Self {
        Self {
            drop_approximation: true,
            ..Self::swd1d(p)
        }
    }

    /// Decomposition depth: 3 for 1D-SWD, 1 for 2D-SWD, 0 for the DCT variants.
    pub fn levels(&self) -> usize {
        match self.variant {
            Variant::Swd1d => 3,
            Variant::Swd2d => 1,
            _ => 0,
        }
    }

    /// Bands a wavelet mask bit can address, in mask-bit order.
    pub fn band_slots(&self) -> &'static [Band] {
        match self.variant {
            Variant::Swd1d => &[Band::L1, Band::L2, Band::L3],
            Variant::Swd2d => &[Band::LH, Band::HL, Band::HH],
            _ => &[],
        }
    }

    /// Number of bits one wavelet mask carries.
    pub fn mask_bits(&self) -> usize {
        if self.drop_approximation {
            1
        } else {
            self.band_slots().len()
        }
    }

    fn selected(&self, band: Band) -> bool {
        self.band_select
            .as_ref()
            .is_none_or(|set| set.contains(&band))
    }

    pub fn scale(&self) -> f64 {
        1.0 / (1.0 - self.p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SwdError::InvalidConfig(msg));
        if !(self.p.is_finite() && (0.0..1.0).contains(&self.p)) {
            return bad(format!("p = {} outside [0, 1)", self.p));
        }
        if !(self.eta.is_finite() && (0.0..1.0).contains(&self.eta)) {
            return bad(format!("eta = {} outside [0, 1)", self.eta));
        }
        if self.variant.is_wavelet() && self.eta != 0.0 {
            return bad(format!("eta must be 0 for {}", self.variant.name()));
        }
        if let Some(bands) = &self.band_select {
            if !self.variant.is_wavelet() {
                return bad("band_select applies to wavelet variants only".into());
            }
            if let Some(b) = bands.iter().find(|b| !self.band_slots().contains(b)) {
                return bad(format!("band {b:?} is not droppable for {}", self.variant.name()));
            }
        }
        if self.drop_approximation {
            if self.variant != Variant::Swd1d {
                return bad("drop_approximation is a swd1d diagnostic".into());
            }
            if self.band_select.is_some() {
                return bad("drop_approximation excludes band_select".into());
            }
        }
        Ok(())
    }

    fn expect_variant(&self, variant: Variant) -> Result<()> {
        if self.variant != variant {
            return Err(SwdError::InvalidConfig(format!(
                "config is {}, operator is {}",
                self.variant.name(),
                variant.name()
            )));
        }
        Ok(())
    }
}

/// Everything needed to replay one forward call.
///
/// For the wavelet variants `bits` is the band mask (`mask_bits()` long).
/// For the DCT variants it is the per-coefficient keep map over the whole
/// batch in tensor order: a bit is set iff the coefficient survived pruning
/// and its Bernoulli draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRecord {
    pub variant: Variant,
    pub mode: Mode,
    pub p: f64,
    pub eta: f64,
    pub seed: u64,
    pub drop_approximation: bool,
    pub bits: Vec<bool>,
}

const RECORD_MAGIC: &[u8; 4] = b"SWDM";
const RECORD_VERSION: u8 = 1;
const RECORD_HEADER: usize = 36;

impl MaskRecord {
    /// Record for an externally chosen wavelet band mask.
    pub fn forced(cfg: &SpectralDropoutConfig, bits: Vec<bool>) -> Self {
        Self {
            variant: cfg.variant,
            mode: Mode::Train,
            p: cfg.p,
            eta: cfg.eta,
            seed: 0,
            drop_approximation: cfg.drop_approximation,
            bits,
        }
    }

    pub fn eval(cfg: &SpectralDropoutConfig) -> Self {
        Self {
            mode: Mode::Eval,
            ..Self::forced(cfg, Vec::new())
        }
    }

    /// Serialized layout (little-endian):
    ///
    /// ```text
    /// 0  magic "SWDM"     4  version (1)       5  variant tag
    /// 6  mode (0 eval, 1 train)                7  flags (bit 0: drop_approximation)
    /// 8  p: f64           16 eta: f64          24 seed: u64
    /// 32 bit count: u32   36 bits, LSB first, ceil(count / 8) bytes
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RECORD_HEADER + self.bits.len().div_ceil(8));
        out.extend_from_slice(RECORD_MAGIC);
        out.push(RECORD_VERSION);
        out.push(self.variant.tag());
        out.push(match self.mode {
            Mode::Eval => 0,
            Mode::Train => 1,
        });
        out.push(u8::from(self.drop_approximation));
        out.extend_from_slice(&self.p.to_le_bytes());
        out.extend_from_slice(&self.eta.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.bits.len() as u32).to_le_bytes());
        for chunk in self.bits.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << i));
            out.push(byte);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < RECORD_HEADER || &bytes[0..4] != RECORD_MAGIC {
            return Err(SwdError::Malformed("not a mask record".into()));
        }
        if bytes[4] != RECORD_VERSION {
            return Err(SwdError::Malformed(format!(
                "unsupported mask record version {}",
                bytes[4]
            )));
        }
        let variant = Variant::from_tag(bytes[5])?;
        let mode = match bytes[6] {
            0 => Mode::Eval,
            1 => Mode::Train,
            m => return Err(SwdError::Malformed(format!("bad mode byte {m}"))),
        };
        let word = |at: usize| -> [u8; 8] { bytes[at..at + 8].try_into().unwrap() };
        let p = f64::from_le_bytes(word(8));
        let eta = f64::from_le_bytes(word(16));
        let seed = u64::from_le_bytes(word(24));
        let count = u32::from_le_bytes(bytes[32..36].try_into().unwrap()) as usize;
        let payload = &bytes[RECORD_HEADER..];
        if payload.len() != count.div_ceil(8) {
            return Err(SwdError::Malformed(format!(
                "expected {} payload bytes, found {}",
                count.div_ceil(8),
                payload.len()
            )));
        }
        let bits = (0..count)
            .map(|i| payload[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        Ok(Self {
            variant,
            mode,
            p,
            eta,
            seed,
            drop_approximation: bytes[7] & 1 == 1,
            bits,
        })
    }

    fn check_against(&self, cfg: &SpectralDropoutConfig, x: &Tensor4) -> Result<()> {
        let mismatch = |what: &str| Err(SwdError::RecordMismatch(what.into()));
        if self.variant != cfg.variant {
            return mismatch("variant");
        }
        if self.p.to_bits() != cfg.p.to_bits() {
            return mismatch("p");
        }
        if self.eta.to_bits() != cfg.eta.to_bits() {
            return mismatch("eta");
        }
        if self.drop_approximation != cfg.drop_approximation {
            return mismatch("drop_approximation");
        }
        if self.mode == Mode::Train {
            let expected = if cfg.variant.is_wavelet() {
                cfg.mask_bits()
            } else {
                x.len()
            };
            if self.bits.len() != expected {
                return Err(SwdError::RecordMismatch(format!(
                    "{} mask bits, expected {expected}",
                    self.bits.len()
                )));
            }
        }
        Ok(())
    }
}

fn check_shape(x: &Tensor4, cfg: &SpectralDropoutConfig) -> Result<()> {
    let [_, _, h, w] = x.shape();
    match cfg.variant {
        Variant::Swd1d if h * w < 1 << cfg.levels() => Err(SwdError::TooSmall(format!(
            "{h}x{w} map cannot carry a {}-level decomposition (needs H*W >= {})",
            cfg.levels(),
            1 << cfg.levels()
        ))),
        Variant::Swd2d if h < 2 || w < 2 => Err(SwdError::TooSmall(format!(
            "{h}x{w} map is too small for a 2D decomposition"
        ))),
        _ => Ok(()),
    }
}

/// Multiplier applied to each wavelet band: index 0 is the approximation,
/// then the detail slots.
fn band_factors(cfg: &SpectralDropoutConfig, bits: &[bool]) -> [f64; 4] {
    let scale = cfg.scale();
    let factor = |bit: bool| if bit { scale } else { 0.0 };
    let mut out = [1.0; 4];
    if cfg.drop_approximation {
        out[0] = factor(bits[0]);
    } else {
        for (i, (&band, &bit)) in cfg.band_slots().iter().zip(bits).enumerate() {
            if cfg.selected(band) {
                out[i + 1] = factor(bit);
            }
        }
    }
    out
}

fn scale_band(band: &mut [f64], factor: f64) {
    if factor == 0.0 {
        band.fill(0.0);
    } else if factor != 1.0 {
        band.iter_mut().for_each(|v| *v *= factor);
    }
}

fn scale_matrix(m: &mut Matrix, factor: f64) {
    scale_band(m.data_mut(), factor);
}

fn swd1d_plane(plane: &[f64], f: &WaveletFilter, levels: usize, factors: &[f64; 4]) -> Result<Vec<f64>> {
    let mut p = wavelet::dwt1d(plane, f, levels)?;
    scale_band(&mut p.ap, factors[0]);
    for (d, &factor) in p.details.iter_mut().zip(&factors[1..]) {
        scale_band(d, factor);
    }
    wavelet::idwt1d(&p, f)
}

fn swd2d_plane(plane: &[f64], h: usize, w: usize, f: &WaveletFilter, factors: &[f64; 4]) -> Result<Vec<f64>> {
    let m = Matrix::new(h, w, plane.to_vec())?;
    let mut b = wavelet::dwt2d(&m, f)?;
    scale_matrix(&mut b.ll, factors[0]);
    scale_matrix(&mut b.lh, factors[1]);
    scale_matrix(&mut b.hl, factors[2]);
    scale_matrix(&mut b.hh, factors[3]);
    Ok(wavelet::idwt2d(&b, f)?.into_data())
}

/// Applies a band mask to every channel.
fn apply_wavelet(x: &Tensor4, cfg: &SpectralDropoutConfig, bits: &[bool]) -> Result<Tensor4> {
    let [_, _, h, w] = x.shape();
    let f = cfg.wavelet.filter();
    let factors = band_factors(cfg, bits);
    let mut out = Vec::with_capacity(x.len());
    for plane in x.planes() {
        let y = match cfg.variant {
            Variant::Swd1d => swd1d_plane(plane, &f, cfg.levels(), &factors)?,
            _ => swd2d_plane(plane, h, w, &f, &factors)?,
        };
        out.extend(y);
    }
    Tensor4::new(x.shape(), out)
}

fn dct_forward(plane: &[f64], variant: Variant, h: usize, w: usize) -> Result<Vec<f64>> {
    match variant {
        Variant::Sfd1d => dct::dct2_1d(plane),
        _ => Ok(dct::dct2_2d(&Matrix::new(h, w, plane.to_vec())?)?.into_data()),
    }
}

fn dct_inverse(coeffs: Vec<f64>, variant: Variant, h: usize, w: usize) -> Result<Vec<f64>> {
    match variant {
        Variant::Sfd1d => dct::idct_1d(&coeffs),
        _ => Ok(dct::idct_2d(&Matrix::new(h, w, coeffs)?)?.into_data()),
    }
}

fn masked_inverse(mut coeffs: Vec<f64>, keep: &[bool], scale: f64, variant: Variant, h: usize, w: usize) -> Result<Vec<f64>> {
    for (c, &k) in coeffs.iter_mut().zip(keep) {
        *c = if k { *c * scale } else { 0.0 };
    }
    dct_inverse(coeffs, variant, h, w)
}

/// Samples the SFD keep map and applies it in one pass over the channels.
fn sfd_sample_and_apply(x: &Tensor4, cfg: &SpectralDropoutConfig, rng: &mut SeededRng) -> Result<(Tensor4, Vec<bool>)> {
    let [_, _, h, w] = x.shape();
    let keep_prob = 1.0 - cfg.p;
    let mut bits = Vec::with_capacity(x.len());
    let mut out = Vec::with_capacity(x.len());
    for plane in x.planes() {
        let coeffs = dct_forward(plane, cfg.variant, h, w)?;
        let survived = dct::prune_keep_mask(&coeffs, cfg.eta)?;
        let keep: Vec<bool> = survived
            .into_iter()
            .map(|s| rng.bernoulli(keep_prob) && s)
            .collect();
        out.extend(masked_inverse(coeffs, &keep, cfg.scale(), cfg.variant, h, w)?);
        bits.extend(keep);
    }
    Ok((Tensor4::new(x.shape(), out)?, bits))
}

fn apply_dct(x: &Tensor4, cfg: &SpectralDropoutConfig, bits: &[bool]) -> Result<Tensor4> {
    let [_, _, h, w] = x.shape();
    let n = x.plane_len();
    let mut out = Vec::with_capacity(x.len());
    for (plane, keep) in x.planes().zip(bits.chunks(n)) {
        let coeffs = dct_forward(plane, cfg.variant, h, w)?;
        out.extend(masked_inverse(coeffs, keep, cfg.scale(), cfg.variant, h, w)?);
    }
    Tensor4::new(x.shape(), out)
}

/// Forward pass of any variant. Eval mode returns `x` untouched without
/// running a transform.
pub fn forward(x: &Tensor4, cfg: &SpectralDropoutConfig, rng: &mut SeededRng, mode: Mode) -> Result<(Tensor4, MaskRecord)> {
    cfg.validate()?;
    check_shape(x, cfg)?;
    if mode == Mode::Eval {
        return Ok((x.clone(), MaskRecord::eval(cfg)));
    }
    let seed = rng.seed();
    let (y, bits) = if cfg.variant.is_wavelet() {
        let bits: Vec<bool> = (0..cfg.mask_bits())
            .map(|_| rng.bernoulli(1.0 - cfg.p))
            .collect();
        (apply_wavelet(x, cfg, &bits)?, bits)
    } else {
        sfd_sample_and_apply(x, cfg, rng)?
    };
    let record = MaskRecord {
        seed,
        bits,
        ..MaskRecord::forced(cfg, Vec::new())
    };
    Ok((y, record))
}

pub fn swd1d_forward(x: &Tensor4, cfg: &SpectralDropoutConfig, rng: &mut SeededRng, mode: Mode) -> Result<(Tensor4, MaskRecord)> {
    cfg.expect_variant(Variant::Swd1d)?;
    forward(x, cfg, rng, mode)
}

pub fn swd2d_forward(x: &Tensor4, cfg: &SpectralDropoutConfig, rng: &mut SeededRng, mode: Mode) -> Result<(Tensor4, MaskRecord)> {
    cfg.expect_variant(Variant::Swd2d)?;
    forward(x, cfg, rng, mode)
}

pub fn sfd1d_forward(x: &Tensor4, cfg: &SpectralDropoutConfig, rng: &mut SeededRng, mode: Mode) -> Result<(Tensor4, MaskRecord)> {
    cfg.expect_variant(Variant::Sfd1d)?;
    forward(x, cfg, rng, mode)
}

pub fn sfd2d_forward(x: &Tensor4, cfg: &SpectralDropoutConfig, rng: &mut SeededRng, mode: Mode) -> Result<(Tensor4, MaskRecord)> {
    cfg.expect_variant(Variant::Sfd2d)?;
    forward(x, cfg, rng, mode)
}

/// Re-applies a recorded mask. Reproduces the original forward bit for bit
/// when given the same input.
pub fn replay(x: &Tensor4, record: &MaskRecord, cfg: &SpectralDropoutConfig) -> Result<Tensor4> {
    cfg.validate()?;
    check_shape(x, cfg)?;
    record.check_against(cfg, x)?;
    if record.mode == Mode::Eval {
        return Ok(x.clone());
    }
    if cfg.variant.is_wavelet() {
        apply_wavelet(x, cfg, &record.bits)
    } else {
        apply_dct(x, cfg, &record.bits)
    }
}

/// Gradient of a train-mode forward with respect to its input.
///
/// Given the record, the forward is the linear map `T⁻¹ D T` with `T` the
/// analysis transform and `D` the diagonal band/coefficient scaling. Its
/// transpose is `Tᵀ D T⁻ᵀ`. Both transforms satisfy `T⁻¹ = Tᵀ` (the wavelet
/// synthesis is implemented as the analysis transpose and the DCT is
/// orthonormal), so the transpose is evaluated by the same pipeline.
pub fn backward(grad_out: &Tensor4, record: &MaskRecord, cfg: &SpectralDropoutConfig) -> Result<Tensor4> {
    replay(grad_out, record, cfg)
}

/// Deterministic part of SFD: prune each channel's spectrum, no dropout.
/// This is the expectation of the train-mode output.
pub fn sfd_prune_only(x: &Tensor4, cfg: &SpectralDropoutConfig) -> Result<Tensor4> {
    cfg.validate()?;
    if cfg.variant.is_wavelet() {
        return Err(SwdError::InvalidConfig("prune-only reference is for sfd variants".into()));
    }
    let [_, _, h, w] = x.shape();
    let mut out = Vec::with_capacity(x.len());
    for plane in x.planes() {
        let coeffs = dct_forward(plane, cfg.variant, h, w)?;
        let keep = dct::prune_keep_mask(&coeffs, cfg.eta)?;
        out.extend(masked_inverse(coeffs, &keep, 1.0, cfg.variant, h, w)?);
    }
    Tensor4::new(x.shape(), out)
}
