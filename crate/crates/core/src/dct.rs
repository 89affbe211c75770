//! Orthonormal DCT-II / DCT-III, separable 2D versions, the radix-2 FFT
//! behind the fast path, and magnitude-quantile pruning.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::counter;
use crate::error::{Result, SwdError};
use crate::tensor::Matrix;

/// Unitary radix-2 DFT (`1/sqrt(N)` in both directions).
pub fn fft(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(SwdError::NotPowerOfTwo(n));
    }
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, inverse);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(buf)
}

/// Unnormalized iterative Cooley-Tukey; `buf.len()` must be a power of two.
fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    counter::bump();
    let n = buf.len();
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn dct_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// `cos(pi * j / (2N))` for `j` in `0..4N`; every DCT kernel entry
/// `cos(pi (2n+1) k / 2N)` is one of these.
fn cos_table(n: usize) -> Vec<f64> {
    (0..4 * n)
        .map(|j| (PI * j as f64 / (2 * n) as f64).cos())
        .collect()
}

/// Orthonormal DCT-II by direct O(N²) summation.
pub fn dct2_1d_direct(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return Err(SwdError::EmptyInput);
    }
    counter::bump();
    let table = cos_table(n);
    Ok((0..n)
        .map(|k| {
            // Walks j = (2i + 1) k mod 4N without a division per term.
            let (period, step) = (4 * n, (2 * k) % (4 * n));
            let mut j = k % period;
            let mut s = 0.0;
            for v in x {
                s += v * table[j];
                j += step;
                if j >= period {
                    j -= period;
                }
            }
            dct_scale(k, n) * s
        })
        .collect())
}

/// Orthonormal DCT-III (inverse of [`dct2_1d_direct`]) by direct summation.
pub fn idct_1d_direct(coeffs: &[f64]) -> Result<Vec<f64>> {
    let n = coeffs.len();
    if n == 0 {
        return Err(SwdError::EmptyInput);
    }
    counter::bump();
    let table = cos_table(n);
    Ok((0..n)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| dct_scale(k, n) * c * table[((2 * i + 1) * k) % (4 * n)])
                .sum()
        })
        .collect())
}

/// Even/odd reordering followed by one length-N FFT.
fn dct2_1d_fast(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n / 2 {
        v[i] = Complex64::new(x[2 * i], 0.0);
        v[n - 1 - i] = Complex64::new(x[2 * i + 1], 0.0);
    }
    if n == 1 {
        v[0] = Complex64::new(x[0], 0.0);
    }
    fft_in_place(&mut v, false);
    (0..n)
        .map(|k| {
            let w = Complex64::from_polar(1.0, -PI * k as f64 / (2 * n) as f64);
            dct_scale(k, n) * (v[k] * w).re
        })
        .collect()
}

fn idct_1d_fast(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let c: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, v)| v / dct_scale(k, n))
        .collect();
    let mut v: Vec<Complex64> = (0..n)
        .map(|k| {
            if k == 0 {
                Complex64::new(c[0], 0.0)
            } else {
                Complex64::from_polar(1.0, PI * k as f64 / (2 * n) as f64)
                    * Complex64::new(c[k], -c[n - k])
            }
        })
        .collect();
    fft_in_place(&mut v, true);
    let inv_n = 1.0 / n as f64;
    let mut x = vec![0.0; n];
    for i in 0..n / 2 {
        x[2 * i] = v[i].re * inv_n;
        x[2 * i + 1] = v[n - 1 - i].re * inv_n;
    }
    if n == 1 {
        x[0] = v[0].re;
    }
    x
}

/// Orthonormal DCT-II: FFT path for power-of-two lengths, direct otherwise.
pub fn dct2_1d(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(SwdError::EmptyInput);
    }
    if x.len().is_power_of_two() {
        Ok(dct2_1d_fast(x))
    } else {
        dct2_1d_direct(x)
    }
}

/// Orthonormal DCT-III, the exact inverse of [`dct2_1d`].
pub fn idct_1d(coeffs: &[f64]) -> Result<Vec<f64>> {
    if coeffs.is_empty() {
        return Err(SwdError::EmptyInput);
    }
    if coeffs.len().is_power_of_two() {
        Ok(idct_1d_fast(coeffs))
    } else {
        idct_1d_direct(coeffs)
    }
}

fn separable(m: &Matrix, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Matrix> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(SwdError::EmptyInput);
    }
    let rows = (0..m.rows())
        .map(|i| f(m.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let rows = Matrix::from_rows(rows)?;
    let cols = (0..rows.cols())
        .map(|j| f(&rows.column(j)))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_columns(cols)
}

/// Separable 2D DCT-II: rows, then columns.
pub fn dct2_2d(m: &Matrix) -> Result<Matrix> {
    separable(m, dct2_1d)
}

pub fn idct_2d(m: &Matrix) -> Result<Matrix> {
    separable(m, idct_1d)
}

/// 2D DCT-II that never takes the FFT path; O(n³) for an n×n input.
pub fn dct2_2d_direct(m: &Matrix) -> Result<Matrix> {
    separable(m, dct2_1d_direct)
}

/// Number of entries pruned at rate `eta` out of `m`: `ceil(eta * m)`.
/// A relative slack absorbs products like `0.3 * 10 = 3.0000000000000004`.
pub fn prune_count(eta: f64, m: usize) -> usize {
    let raw = eta * m as f64;
    ((raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize).min(m)
}

/// Keep-mask of magnitude-quantile pruning: entry `i` is dropped iff
/// `|c_i|` is strictly below the `(k+1)`-th smallest magnitude, with
/// `k = ceil(eta * M)`. Distinct magnitudes lose exactly `k` entries; ties at
/// the threshold are all kept. When `k` reaches `M` the threshold is the
/// largest magnitude, so the largest entries always survive.
pub fn prune_keep_mask(coeffs: &[f64], eta: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&eta) {
        return Err(SwdError::InvalidArgument(format!(
            "pruning rate {eta} outside [0, 1)"
        )));
    }
    let m = coeffs.len();
    let k = prune_count(eta, m);
    if k == 0 {
        return Ok(vec![true; m]);
    }
    let mut mags: Vec<f64> = coeffs.iter().map(|c| c.abs()).collect();
    mags.sort_unstable_by(f64::total_cmp);
    let threshold = mags[k.min(m - 1)];
    Ok(coeffs.iter().map(|c| c.abs() >= threshold).collect())
}

/// Zeroes the coefficients below the `eta` magnitude quantile.
pub fn prune_quantile(coeffs: &[f64], eta: f64) -> Result<Vec<f64>> {
    let keep = prune_keep_mask(coeffs, eta)?;
    Ok(coeffs
        .iter()
        .zip(keep)
        .map(|(&c, k)| if k { c } else { 0.0 })
        .collect())
}

pub fn prune_quantile_2d(m: &Matrix, eta: f64) -> Result<Matrix> {
    Matrix::new(m.rows(), m.cols(), prune_quantile(m.data(), eta)?)
}
