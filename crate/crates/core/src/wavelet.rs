//! One- and two-dimensional discrete wavelet transforms with zero padding.
//!
//! A level is the full convolution of the zero-extended input with the
//! analysis taps, downsampled at odd indices:
//!
//! ```text
//! c[m]  = sum_k f[k] * x[m - k]     m = 0 ..= N + L - 2
//! y[n]  = c[2n + 1]                 n = 0 .. (N + L - 1) / 2
//! ```
//!
//! For an orthonormal filter pair this map `W` satisfies `WᵀW = I`, so the
//! inverse is the transpose restricted to the original `N` samples. The
//! inverse is exact on the whole range of `W`, but `WWᵀ != I` near the
//! borders because of the padding.

use serde::{Deserialize, Serialize};

use crate::counter;
use crate::error::{Result, SwdError};
use crate::tensor::Matrix;

/// Analysis filter pair: low-pass `g` and its quadrature mirror `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilter {
    pub name: String,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Db3,
    Haar,
}

impl WaveletKind {
    pub fn filter(self) -> WaveletFilter {
        match self {
            WaveletKind::Db3 => db3_filter(),
            WaveletKind::Haar => haar_filter(),
        }
    }

    pub fn vanishing_moments(self) -> usize {
        match self {
            WaveletKind::Db3 => 3,
            WaveletKind::Haar => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WaveletKind::Db3 => "db3",
            WaveletKind::Haar => "haar",
        }
    }
}

impl std::str::FromStr for WaveletKind {
    type Err = SwdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "db3" => Ok(WaveletKind::Db3),
            "haar" => Ok(WaveletKind::Haar),
            other => Err(SwdError::InvalidArgument(format!("unknown wavelet '{other}'"))),
        }
    }
}

impl WaveletFilter {
    /// Builds the pair from low-pass taps; `h[k] = (-1)^k g[L-1-k]`.
    pub fn from_lowpass(name: impl Into<String>, g: Vec<f64>) -> Self {
        let l = g.len();
        let h = (0..l)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * g[l - 1 - k]
            })
            .collect();
        Self {
            name: name.into(),
            g,
            h,
        }
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

/// Daubechies-3 scaling taps from the closed-form spectral factorization
/// (normalized so the taps sum to √2).
pub fn db3_filter() -> WaveletFilter {
    let s = 10f64.sqrt();
    let t = (5.0 + 2.0 * s).sqrt();
    let norm = 16.0 * std::f64::consts::SQRT_2;
    let g = vec![
        (1.0 + s + t) / norm,
        (5.0 + s + 3.0 * t) / norm,
        (10.0 - 2.0 * s + 2.0 * t) / norm,
        (10.0 - 2.0 * s - 2.0 * t) / norm,
        (5.0 + s - 3.0 * t) / norm,
        (1.0 + s - t) / norm,
    ];
    WaveletFilter::from_lowpass("db3", g)
}

pub fn haar_filter() -> WaveletFilter {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    WaveletFilter::from_lowpass("haar", vec![a, a])
}

/// Outcome of one named filter check.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCheck {
    pub name: String,
    pub error: f64,
    pub passed: bool,
}

/// Runs the orthonormal filter-bank checks: tap sums, double-shift
/// orthonormality of `g` and `h`, their cross-orthogonality, the mirror rule
/// and `moments` vanishing moments of `h`.
pub fn filter_checks(f: &WaveletFilter, moments: usize, tol: f64) -> Vec<FilterCheck> {
    let l = f.len();
    let mut out = Vec::new();
    let mut push = |name: String, error: f64| {
        out.push(FilterCheck {
            name,
            error,
            passed: error <= tol,
        })
    };
    push(
        "sum(g) = sqrt(2)".into(),
        (f.g.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs(),
    );
    push("sum(h) = 0".into(), f.h.iter().sum::<f64>().abs());

    let shifted = |a: &[f64], b: &[f64], m: usize| -> f64 {
        (0..l).filter(|k| k + 2 * m < l).map(|k| a[k] * b[k + 2 * m]).sum()
    };
    let mut orth_g: f64 = 0.0;
    let mut orth_h: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for m in 0..l.div_ceil(2) {
        let delta = if m == 0 { 1.0 } else { 0.0 };
        orth_g = orth_g.max((shifted(&f.g, &f.g, m) - delta).abs());
        orth_h = orth_h.max((shifted(&f.h, &f.h, m) - delta).abs());
        cross = cross
            .max(shifted(&f.g, &f.h, m).abs())
            .max(shifted(&f.h, &f.g, m).abs());
    }
    push("g orthonormal under even shifts".into(), orth_g);
    push("h orthonormal under even shifts".into(), orth_h);
    push("g, h orthogonal under even shifts".into(), cross);

    let mirror = (0..l)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            (f.h[k] - sign * f.g[l - 1 - k]).abs()
        })
        .fold(0.0, f64::max);
    push("h is the quadrature mirror of g".into(), mirror);

    for p in 0..moments {
        let moment: f64 = f
            .h
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64).powi(p as i32) * v)
            .sum();
        push(format!("vanishing moment p={p}"), moment.abs());
    }
    out
}

/// Length of each output band for an input of length `n`.
pub fn coeff_len(n: usize, filter_len: usize) -> usize {
    (n + filter_len - 1) / 2
}

/// One analysis level. Both bands have length `(N + L - 1) / 2`.
pub fn dwt1d_level(x: &[f64], f: &WaveletFilter) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.is_empty() {
        return Err(SwdError::EmptyInput);
    }
    counter::bump();
    let n = x.len();
    let l = f.len();
    let k_out = coeff_len(n, l);
    let mut low = vec![0.0; k_out];
    let mut high = vec![0.0; k_out];
    for i in 0..k_out {
        let m = 2 * i + 1;
        // taps k with 0 <= m - k < n
        let k_lo = (m + 1).saturating_sub(n);
        let k_hi = m.min(l - 1);
        let (mut lo, mut hi) = (0.0, 0.0);
        for k in k_lo..=k_hi {
            let v = x[m - k];
            lo += f.g[k] * v;
            hi += f.h[k] * v;
        }
        low[i] = lo;
        high[i] = hi;
    }
    Ok((low, high))
}

/// Synthesis level: the transpose of [`dwt1d_level`] truncated to `out_len`
/// samples.
pub fn idwt1d_level(low: &[f64], high: &[f64], f: &WaveletFilter, out_len: usize) -> Result<Vec<f64>> {
    if out_len == 0 {
        return Err(SwdError::EmptyInput);
    }
    let expected = coeff_len(out_len, f.len());
    if low.len() != expected {
        return Err(SwdError::LengthMismatch {
            expected,
            got: low.len(),
        });
    }
    if high.len() != expected {
        return Err(SwdError::LengthMismatch {
            expected,
            got: high.len(),
        });
    }
    counter::bump();
    let l = f.len();
    let mut x = vec![0.0; out_len];
    for (i, (&a, &d)) in low.iter().zip(high).enumerate() {
        let m = 2 * i + 1;
        let k_lo = (m + 1).saturating_sub(out_len);
        let k_hi = m.min(l - 1);
        for k in k_lo..=k_hi {
            x[m - k] += f.g[k] * a + f.h[k] * d;
        }
    }
    Ok(x)
}

/// Multi-level 1D decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid1D {
    /// Approximation coefficients of the coarsest level.
    pub ap: Vec<f64>,
    /// Detail bands, finest first (`L1, L2, ...`).
    pub details: Vec<Vec<f64>>,
    /// Input length of each level; `lens[0]` is the signal length.
    pub lens: Vec<usize>,
}

impl Pyramid1D {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn zeros_like(&self) -> Pyramid1D {
        Pyramid1D {
            ap: vec![0.0; self.ap.len()],
            details: self.details.iter().map(|d| vec![0.0; d.len()]).collect(),
            lens: self.lens.clone(),
        }
    }

    pub fn check_consistent(&self, filter_len: usize) -> Result<()> {
        let j = self.details.len();
        if j == 0 || self.lens.len() != j {
            return Err(SwdError::DimensionMismatch(format!(
                "{} detail bands but {} recorded lengths",
                j,
                self.lens.len()
            )));
        }
        for (level, (d, &n)) in self.details.iter().zip(&self.lens).enumerate() {
            let expected = coeff_len(n, filter_len);
            if d.len() != expected {
                return Err(SwdError::LengthMismatch {
                    expected,
                    got: d.len(),
                });
            }
            let next = if level + 1 < j {
                self.lens[level + 1]
            } else {
                self.ap.len()
            };
            if next != expected {
                return Err(SwdError::LengthMismatch { expected, got: next });
            }
        }
        Ok(())
    }
}

/// `levels`-deep decomposition, iterating on the approximation band.
pub fn dwt1d(x: &[f64], f: &WaveletFilter, levels: usize) -> Result<Pyramid1D> {
    if levels == 0 {
        return Err(SwdError::InvalidArgument("levels must be >= 1".into()));
    }
    if x.is_empty() {
        return Err(SwdError::EmptyInput);
    }
    let mut current = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut lens = Vec::with_capacity(levels);
    for _ in 0..levels {
        lens.push(current.len());
        let (low, high) = dwt1d_level(&current, f)?;
        details.push(high);
        current = low;
    }
    Ok(Pyramid1D {
        ap: current,
        details,
        lens,
    })
}

pub fn idwt1d(p: &Pyramid1D, f: &WaveletFilter) -> Result<Vec<f64>> {
    p.check_consistent(f.len())?;
    let mut current = p.ap.clone();
    for level in (0..p.levels()).rev() {
        current = idwt1d_level(&current, &p.details[level], f, p.lens[level])?;
    }
    Ok(current)
}

/// One-level 2D decomposition. `lh` is low-pass along rows and high-pass
/// along columns, `hl` the opposite.
#[derive(Debug, Clone, PartialEq)]
pub struct Bands2D {
    pub ll: Matrix,
    pub lh: Matrix,
    pub hl: Matrix,
    pub hh: Matrix,
    /// Original `(H, W)`.
    pub orig: (usize, usize),
}

impl Bands2D {
    pub fn band_shape(&self) -> (usize, usize) {
        self.ll.shape()
    }
}

fn split_columns(m: &Matrix, f: &WaveletFilter) -> Result<(Matrix, Matrix)> {
    let mut lows = Vec::with_capacity(m.cols());
    let mut highs = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let (lo, hi) = dwt1d_level(&m.column(j), f)?;
        lows.push(lo);
        highs.push(hi);
    }
    Ok((Matrix::from_columns(lows)?, Matrix::from_columns(highs)?))
}

pub fn dwt2d(m: &Matrix, f: &WaveletFilter) -> Result<Bands2D> {
    let (h, w) = m.shape();
    if h == 0 || w == 0 {
        return Err(SwdError::EmptyInput);
    }
    let mut row_low = Vec::with_capacity(h);
    let mut row_high = Vec::with_capacity(h);
    for i in 0..h {
        let (lo, hi) = dwt1d_level(m.row(i), f)?;
        row_low.push(lo);
        row_high.push(hi);
    }
    let (ll, lh) = split_columns(&Matrix::from_rows(row_low)?, f)?;
    let (hl, hh) = split_columns(&Matrix::from_rows(row_high)?, f)?;
    Ok(Bands2D {
        ll,
        lh,
        hl,
        hh,
        orig: (h, w),
    })
}

pub fn idwt2d(b: &Bands2D, f: &WaveletFilter) -> Result<Matrix> {
    let (h, w) = b.orig;
    if h == 0 || w == 0 {
        return Err(SwdError::EmptyInput);
    }
    let expected = (coeff_len(h, f.len()), coeff_len(w, f.len()));
    for band in [&b.ll, &b.lh, &b.hl, &b.hh] {
        if band.shape() != expected {
            return Err(SwdError::DimensionMismatch(format!(
                "band shape {:?}, expected {:?}",
                band.shape(),
                expected
            )));
        }
    }
    let kw = expected.1;
    let mut low_cols = Vec::with_capacity(kw);
    let mut high_cols = Vec::with_capacity(kw);
    for j in 0..kw {
        low_cols.push(idwt1d_level(&b.ll.column(j), &b.lh.column(j), f, h)?);
        high_cols.push(idwt1d_level(&b.hl.column(j), &b.hh.column(j), f, h)?);
    }
    let low = Matrix::from_columns(low_cols)?;
    let high = Matrix::from_columns(high_cols)?;
    let mut rows = Vec::with_capacity(h);
    for i in 0..h {
        rows.push(idwt1d_level(low.row(i), high.row(i), f, w)?);
    }
    Matrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.normal()).collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Dense level matrix built straight from the convolution definition,
    /// rows `[low; high]`.
    fn level_matrix(n: usize, f: &WaveletFilter) -> Vec<Vec<f64>> {
        let l = f.len();
        let k = (n + l - 1) / 2;
        let mut rows = Vec::new();
        for taps in [&f.g, &f.h] {
            for i in 0..k {
                let mut row = vec![0.0; n];
                for (j, r) in row.iter_mut().enumerate() {
                    let idx = 2 * i as isize + 1 - j as isize;
                    if (0..l as isize).contains(&idx) {
                        *r = taps[idx as usize];
                    }
                }
                rows.push(row);
            }
        }
        rows
    }

    #[test]
    fn filter_invariants_hold() {
        for kind in [WaveletKind::Db3, WaveletKind::Haar] {
            for check in filter_checks(&kind.filter(), kind.vanishing_moments(), 1e-12) {
                assert!(check.passed, "{kind:?}: {} err {}", check.name, check.error);
            }
        }
    }

    #[test]
    fn db3_sums_and_moments() {
        let f = db3_filter();
        assert!((f.g.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-10);
        for p in 1..3 {
            let m: f64 = f
                .h
                .iter()
                .enumerate()
                .map(|(k, v)| (k as f64).powi(p) * v)
                .sum();
            assert!(m.abs() < 1e-10, "moment {p} = {m}");
        }
    }

    #[test]
    fn haar_taps() {
        let f = haar_filter();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(f.g, vec![a, a]);
        assert_eq!(f.h, vec![a, -a]);
    }

    #[test]
    fn perturbed_tap_fails_checks() {
        let mut f = db3_filter();
        f.g[2] += 1e-3;
        let failed = filter_checks(&f, 3, 1e-10).iter().any(|c| !c.passed);
        assert!(failed);
    }

    #[test]
    fn haar_constant_pair() {
        let a = 1.7;
        let (lo, hi) = dwt1d_level(&[a, a], &haar_filter()).unwrap();
        assert!((lo[0] - a * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(lo.len(), 1);
        assert_eq!(hi, vec![0.0]);
        let back = idwt1d_level(&lo, &hi, &haar_filter(), 2).unwrap();
        assert!(max_diff(&back, &[a, a]) < 1e-15);
    }

    #[test]
    fn db3_kills_quadratics_away_from_border() {
        let f = db3_filter();
        let x: Vec<f64> = (0..64).map(|i| (i * i) as f64).collect();
        let (_, high) = dwt1d_level(&x, &f).unwrap();
        // Output n reads x[2n+1-k] for k in 0..6; keep the fully interior ones.
        let mut checked = 0;
        for (n, v) in high.iter().enumerate() {
            let m = 2 * n + 1;
            if (5..=63).contains(&m) {
                assert!(v.abs() <= 1e-10, "n={n}: {v}");
                checked += 1;
            }
        }
        assert_eq!(checked, 30);
    }

    #[test]
    fn level_matches_matrix_oracle_and_transpose_inverts() {
        let f = db3_filter();
        let mut rng = SeededRng::new(10);
        let x = random_vec(&mut rng, 10);
        let (low, high) = dwt1d_level(&x, &f).unwrap();
        assert_eq!(low.len(), 7);
        assert_eq!(high.len(), 7);
        let w = level_matrix(10, &f);
        let coeffs: Vec<f64> = low.iter().chain(&high).copied().collect();
        for (row, c) in w.iter().zip(&coeffs) {
            let v: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((v - c).abs() < 1e-12);
        }
        // Wᵀ(Wx) computed with the dense matrix
        let wt: Vec<f64> = (0..10)
            .map(|j| w.iter().zip(&coeffs).map(|(row, c)| row[j] * c).sum())
            .collect();
        assert!(max_diff(&wt, &x) < 1e-10);
        let back = idwt1d_level(&low, &high, &f, 10).unwrap();
        assert!(max_diff(&back, &x) < 1e-10);
        assert!(max_diff(&back, &wt) < 1e-12);
    }

    #[test]
    fn level_round_trip_all_short_lengths() {
        let mut rng = SeededRng::new(11);
        for kind in [WaveletKind::Db3, WaveletKind::Haar] {
            let f = kind.filter();
            for n in 1..=64 {
                let x = random_vec(&mut rng, n);
                let (lo, hi) = dwt1d_level(&x, &f).unwrap();
                let back = idwt1d_level(&lo, &hi, &f, n).unwrap();
                assert!(max_diff(&back, &x) <= 1e-10, "{kind:?} n={n}");
            }
        }
    }

    #[test]
    fn zero_coefficients_give_zero_signal() {
        let f = db3_filter();
        let back = idwt1d_level(&[0.0; 7], &[0.0; 7], &f, 9).unwrap();
        assert_eq!(back, vec![0.0; 9]);
    }

    #[test]
    fn level_errors() {
        let f = db3_filter();
        assert_eq!(dwt1d_level(&[], &f), Err(SwdError::EmptyInput));
        assert!(matches!(
            idwt1d_level(&[0.0; 6], &[0.0; 7], &f, 9),
            Err(SwdError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn pyramid_lengths_for_36() {
        let f = db3_filter();
        let x: Vec<f64> = (0..36).map(|i| i as f64).collect();
        let p = dwt1d(&x, &f, 3).unwrap();
        let band_lens: Vec<usize> = p.details.iter().map(Vec::len).collect();
        assert_eq!(band_lens, vec![20, 12, 8]);
        assert_eq!(p.ap.len(), 8);
        assert_eq!(p.lens, vec![36, 20, 12]);
        // independent check of the recursion
        let mut n = 36;
        for len in band_lens {
            n = (n + 5) / 2;
            assert_eq!(len, n);
        }
    }

    #[test]
    fn one_level_pyramid_equals_level() {
        let f = db3_filter();
        let x: Vec<f64> = (0..13).map(|i| (i as f64).cos()).collect();
        let p = dwt1d(&x, &f, 1).unwrap();
        let (lo, hi) = dwt1d_level(&x, &f).unwrap();
        assert_eq!(p.ap, lo);
        assert_eq!(p.details, vec![hi]);
    }

    #[test]
    fn pyramid_round_trip() {
        let mut rng = SeededRng::new(12);
        for kind in [WaveletKind::Db3, WaveletKind::Haar] {
            let f = kind.filter();
            for n in 8..=256 {
                let x = random_vec(&mut rng, n);
                let p = dwt1d(&x, &f, 3).unwrap();
                let back = idwt1d(&p, &f).unwrap();
                assert!(max_diff(&back, &x) <= 1e-10, "{kind:?} n={n}");
            }
        }
    }

    #[test]
    fn approximation_only_reconstruction_is_projection() {
        // P = S_apᵀ S_ap where S_ap maps x to the level-3 approximation band,
        // built column by column from unit impulses.
        let f = db3_filter();
        let n = 20;
        let mut rng = SeededRng::new(13);
        let x = random_vec(&mut rng, n);
        let s_ap: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                dwt1d(&e, &f, 3).unwrap().ap
            })
            .collect(); // s_ap[j] = column j
        let k = s_ap[0].len();
        let ap_x: Vec<f64> = (0..k)
            .map(|r| (0..n).map(|j| s_ap[j][r] * x[j]).sum())
            .collect();
        let expected: Vec<f64> = (0..n)
            .map(|j| (0..k).map(|r| s_ap[j][r] * ap_x[r]).sum())
            .collect();

        let mut p = dwt1d(&x, &f, 3).unwrap();
        for d in &mut p.details {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
        let got = idwt1d(&p, &f).unwrap();
        assert!(max_diff(&got, &expected) < 1e-10);
    }

    #[test]
    fn zero_pyramid_and_haar_single_level() {
        let f = db3_filter();
        let p = dwt1d(&[1.0; 17], &f, 3).unwrap().zeros_like();
        assert_eq!(idwt1d(&p, &f).unwrap(), vec![0.0; 17]);

        let a = 0.4;
        let haar = Pyramid1D {
            ap: vec![a * std::f64::consts::SQRT_2],
            details: vec![vec![0.0]],
            lens: vec![2],
        };
        let back = idwt1d(&haar, &haar_filter()).unwrap();
        assert!(max_diff(&back, &[a, a]) < 1e-15);
    }

    #[test]
    fn inconsistent_pyramid_rejected() {
        let f = db3_filter();
        let mut p = dwt1d(&[1.0; 17], &f, 3).unwrap();
        p.details[1].pop();
        assert!(idwt1d(&p, &f).is_err());
        let mut q = dwt1d(&[1.0; 17], &f, 3).unwrap();
        q.lens.pop();
        assert!(idwt1d(&q, &f).is_err());
        assert!(dwt1d(&[1.0], &f, 0).is_err());
        assert_eq!(dwt1d(&[], &f, 3), Err(SwdError::EmptyInput));
    }

    #[test]
    fn energy_preserved() {
        let mut rng = SeededRng::new(14);
        for kind in [WaveletKind::Db3, WaveletKind::Haar] {
            let f = kind.filter();
            for n in [1, 2, 7, 33, 64] {
                let x = random_vec(&mut rng, n);
                let (lo, hi) = dwt1d_level(&x, &f).unwrap();
                let e_in: f64 = x.iter().map(|v| v * v).sum();
                let e_out: f64 = lo.iter().chain(&hi).map(|v| v * v).sum();
                assert!((e_in - e_out).abs() <= 1e-10 * e_in.max(1.0));
            }
        }
    }

    #[test]
    fn haar_constant_matrix() {
        let c = 3.0;
        let m = Matrix::from_fn(8, 8, |_, _| c);
        let b = dwt2d(&m, &haar_filter()).unwrap();
        assert_eq!(b.band_shape(), (4, 4));
        for i in 0..4 {
            for j in 0..4 {
                assert!((b.ll.get(i, j) - 2.0 * c).abs() < 1e-12);
                assert!(b.lh.get(i, j).abs() < 1e-12);
                assert!(b.hl.get(i, j).abs() < 1e-12);
                assert!(b.hh.get(i, j).abs() < 1e-12);
            }
        }
        let only_ll = Bands2D {
            ll: b.ll.clone(),
            lh: Matrix::zeros(4, 4),
            hl: Matrix::zeros(4, 4),
            hh: Matrix::zeros(4, 4),
            orig: (8, 8),
        };
        let back = idwt2d(&only_ll, &haar_filter()).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn round_trip_2d() {
        let mut rng = SeededRng::new(15);
        for kind in [WaveletKind::Db3, WaveletKind::Haar] {
            let f = kind.filter();
            for (h, w) in [(7, 9), (16, 16), (1, 1), (1, 5), (6, 1)] {
                let m = Matrix::from_fn(h, w, |_, _| rng.normal());
                let b = dwt2d(&m, &f).unwrap();
                let k = (coeff_len(h, f.len()), coeff_len(w, f.len()));
                assert_eq!(b.band_shape(), k);
                let back = idwt2d(&b, &f).unwrap();
                assert!(back.max_abs_diff(&m) <= 1e-10, "{kind:?} {h}x{w}");
            }
        }
    }

    #[test]
    fn separable_input_gives_outer_products() {
        let f = db3_filter();
        let mut rng = SeededRng::new(16);
        let u = random_vec(&mut rng, 9);
        let v = random_vec(&mut rng, 11);
        let m = Matrix::from_fn(9, 11, |i, j| u[i] * v[j]);
        let b = dwt2d(&m, &f).unwrap();
        let (u_lo, u_hi) = dwt1d_level(&u, &f).unwrap();
        let (v_lo, v_hi) = dwt1d_level(&v, &f).unwrap();
        // rows carry v, columns carry u: LH = column-high x row-low
        let outer = |a: &[f64], b: &[f64]| Matrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j]);
        assert!(b.ll.max_abs_diff(&outer(&u_lo, &v_lo)) < 1e-12);
        assert!(b.lh.max_abs_diff(&outer(&u_hi, &v_lo)) < 1e-12);
        assert!(b.hl.max_abs_diff(&outer(&u_lo, &v_hi)) < 1e-12);
        assert!(b.hh.max_abs_diff(&outer(&u_hi, &v_hi)) < 1e-12);
    }

    #[test]
    fn zero_bands_and_errors_2d() {
        let f = haar_filter();
        let z = Bands2D {
            ll: Matrix::zeros(3, 2),
            lh: Matrix::zeros(3, 2),
            hl: Matrix::zeros(3, 2),
            hh: Matrix::zeros(3, 2),
            orig: (6, 4),
        };
        assert_eq!(idwt2d(&z, &f).unwrap(), Matrix::zeros(6, 4));
        let bad = Bands2D {
            orig: (7, 4),
            ..z.clone()
        };
        assert!(idwt2d(&bad, &f).is_err());
        assert_eq!(dwt2d(&Matrix::zeros(0, 3), &f), Err(SwdError::EmptyInput));
    }
}
