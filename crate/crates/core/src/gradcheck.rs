//! Gradient verification: adjoint (dot-product) tests for linear maps and
//! central finite differences for everything else.

use crate::dct;
use crate::dropout::{self, MaskRecord, SpectralDropoutConfig};
use crate::error::{Result, SwdError};
use crate::rng::SeededRng;
use crate::tensor::{Matrix, Tensor4};
use crate::wavelet::{self, WaveletFilter};

type VecMap = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A linear map paired with its claimed transpose.
pub struct LinearMapHandle {
    pub name: String,
    pub forward: VecMap,
    pub backward: VecMap,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LinearMapHandle {
    pub fn new(
        name: impl Into<String>,
        in_dim: usize,
        out_dim: usize,
        forward: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        backward: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            forward: Box::new(forward),
            backward: Box::new(backward),
            in_dim,
            out_dim,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::new("identity", n, n, <[f64]>::to_vec, <[f64]>::to_vec)
    }

    /// One DWT level `x -> [low; high]` against its synthesis.
    pub fn dwt_level(n: usize, f: WaveletFilter) -> Self {
        let k = wavelet::coeff_len(n, f.len());
        let fb = f.clone();
        Self::new(
            format!("dwt1d_level/{}/{n}", f.name),
            n,
            2 * k,
            move |x| {
                let (lo, hi) = wavelet::dwt1d_level(x, &f).expect("dims fixed at construction");
                lo.into_iter().chain(hi).collect()
            },
            move |c| wavelet::idwt1d_level(&c[..k], &c[k..], &fb, n).expect("dims fixed at construction"),
        )
    }

    /// Multi-level DWT against the multi-level synthesis.
    pub fn dwt_pyramid(n: usize, f: WaveletFilter, levels: usize) -> Self {
        let template = wavelet::dwt1d(&vec![0.0; n], &f, levels).expect("n >= 1");
        let sizes: Vec<usize> = std::iter::once(template.ap.len())
            .chain(template.details.iter().map(Vec::len))
            .collect();
        let out_dim = sizes.iter().sum();
        let fb = f.clone();
        Self::new(
            format!("dwt1d/{}/{n}/J={levels}", f.name),
            n,
            out_dim,
            move |x| {
                let p = wavelet::dwt1d(x, &f, levels).expect("dims fixed at construction");
                p.ap.into_iter().chain(p.details.into_iter().flatten()).collect()
            },
            move |c| {
                let mut p = template.clone();
                let mut at = 0;
                for (band, &len) in std::iter::once(&mut p.ap)
                    .chain(p.details.iter_mut())
                    .zip(&sizes)
                {
                    band.copy_from_slice(&c[at..at + len]);
                    at += len;
                }
                wavelet::idwt1d(&p, &fb).expect("dims fixed at construction")
            },
        )
    }

    /// One-level 2D DWT, bands stacked `[LL, LH, HL, HH]`.
    pub fn dwt2d(h: usize, w: usize, f: WaveletFilter) -> Self {
        let kh = wavelet::coeff_len(h, f.len());
        let kw = wavelet::coeff_len(w, f.len());
        let band = kh * kw;
        let fb = f.clone();
        Self::new(
            format!("dwt2d/{}/{h}x{w}", f.name),
            h * w,
            4 * band,
            move |x| {
                let b = wavelet::dwt2d(&Matrix::new(h, w, x.to_vec()).unwrap(), &f).unwrap();
                [b.ll, b.lh, b.hl, b.hh]
                    .into_iter()
                    .flat_map(Matrix::into_data)
                    .collect()
            },
            move |c| {
                let m = |i: usize| Matrix::new(kh, kw, c[i * band..(i + 1) * band].to_vec()).unwrap();
                let b = wavelet::Bands2D {
                    ll: m(0),
                    lh: m(1),
                    hl: m(2),
                    hh: m(3),
                    orig: (h, w),
                };
                wavelet::idwt2d(&b, &fb).unwrap().into_data()
            },
        )
    }

    pub fn dct1d(n: usize) -> Self {
        Self::new(
            format!("dct2_1d/{n}"),
            n,
            n,
            |x| dct::dct2_1d(x).unwrap(),
            |c| dct::idct_1d(c).unwrap(),
        )
    }

    pub fn dct2d(h: usize, w: usize) -> Self {
        Self::new(
            format!("dct2_2d/{h}x{w}"),
            h * w,
            h * w,
            move |x| dct::dct2_2d(&Matrix::new(h, w, x.to_vec()).unwrap()).unwrap().into_data(),
            move |c| dct::idct_2d(&Matrix::new(h, w, c.to_vec()).unwrap()).unwrap().into_data(),
        )
    }

    /// A dropout forward with its mask pinned by `record`.
    pub fn dropout(shape: [usize; 4], record: MaskRecord, cfg: SpectralDropoutConfig) -> Self {
        let n = shape.iter().product();
        let (rf, cf) = (record.clone(), cfg.clone());
        Self::new(
            format!("{}/fixed-mask", cfg.variant.name()),
            n,
            n,
            move |x| {
                let t = Tensor4::new(shape, x.to_vec()).unwrap();
                dropout::replay(&t, &rf, &cf).unwrap().into_data()
            },
            move |g| {
                let t = Tensor4::new(shape, g.to_vec()).unwrap();
                dropout::backward(&t, &record, &cfg).unwrap().into_data()
            },
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Max over `trials` random pairs of the adjoint mismatch
/// `|<Fx, y> - <x, By>| / max(|<Fx, y>|, |<x, By>|, 1e-3 ‖Fx‖ ‖y‖)`.
///
/// The norm term only guards against near-orthogonal draws; a backward
/// that is off by a factor `s` scores `|1 - 1/s|`.
pub fn adjoint_test(h: &LinearMapHandle, rng: &mut SeededRng, trials: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..h.in_dim).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..h.out_dim).map(|_| rng.normal()).collect();
        let fx = (h.forward)(&x);
        let by = (h.backward)(&y);
        let lhs = dot(&fx, &y);
        let rhs = dot(&x, &by);
        let denom = lhs
            .abs()
            .max(rhs.abs())
            .max(1e-3 * norm(&fx) * norm(&y))
            .max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / denom);
    }
    worst
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff_grad(f: impl Fn(&Tensor4) -> f64, x: &Tensor4, eps: f64) -> Tensor4 {
    let mut data = x.data().to_vec();
    let mut grad = vec![0.0; data.len()];
    for i in 0..data.len() {
        let orig = data[i];
        data[i] = orig + eps;
        let up = f(&Tensor4::new(x.shape(), data.clone()).unwrap());
        data[i] = orig - eps;
        let down = f(&Tensor4::new(x.shape(), data.clone()).unwrap());
        data[i] = orig;
        grad[i] = (up - down) / (2.0 * eps);
    }
    Tensor4::new(x.shape(), grad).unwrap()
}

/// Central differences over a flat parameter vector.
pub fn finite_diff_vec(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64, coords: &[usize]) -> Vec<f64> {
    let mut v = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = v[i];
            v[i] = orig + eps;
            let up = f(&v);
            v[i] = orig - eps;
            let down = f(&v);
            v[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Elementwise relative error between an analytic and a numeric gradient,
/// `|a - n| / max(|a|, |n|, 1e-2 ‖a‖∞)`. The floor keeps entries that are
/// tiny compared with the rest of the gradient from dominating.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-2 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn backward_for(grad_out: &Tensor4, record: &MaskRecord, cfg: &SpectralDropoutConfig, wavelet_family: bool) -> Result<Tensor4> {
    if cfg.variant.is_wavelet() != wavelet_family || record.variant != cfg.variant {
        return Err(SwdError::RecordMismatch(format!(
            "record {:?} / config {:?}",
            record.variant, cfg.variant
        )));
    }
    dropout::backward(grad_out, record, cfg)
}

/// Input gradient of 1D/2D-SWD given the forward's record.
pub fn swd_backward(grad_out: &Tensor4, record: &MaskRecord, cfg: &SpectralDropoutConfig) -> Result<Tensor4> {
    backward_for(grad_out, record, cfg, true)
}

/// Input gradient of 1D/2D-SFD given the forward's record. The pruning set
/// is piecewise constant in the input, so it is held fixed.
pub fn sfd_backward(grad_out: &Tensor4, record: &MaskRecord, cfg: &SpectralDropoutConfig) -> Result<Tensor4> {
    backward_for(grad_out, record, cfg, false)
}

/// Gradient of `0.5 ‖op(x)‖²` for a dropout op with a pinned mask.
pub fn half_energy_grad(x: &Tensor4, record: &MaskRecord, cfg: &SpectralDropoutConfig) -> Result<Tensor4> {
    let y = dropout::replay(x, record, cfg)?;
    dropout::backward(&y, record, cfg)
}
