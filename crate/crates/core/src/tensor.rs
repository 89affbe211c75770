//! Dense row-major containers: batched feature maps, their spatially
//! flattened form and plain matrices.

use std::io::{Read, Write};

use crate::error::{Result, SwdError};

/// Batched feature map with shape `(B, C, H, W)`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

/// Spatially flattened feature map with shape `(B, C, H*W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: [usize; 3],
    data: Vec<f64>,
}

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SwdError::LengthMismatch { expected, got });
    }
    Ok(())
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(SwdError::DimensionMismatch(format!(
                "all dims must be positive, got {shape:?}"
            )));
        }
        check_len(shape.iter().product(), data.len())?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let [b, c, h, w] = shape;
        let mut data = Vec::with_capacity(b * c * h * w);
        for ib in 0..b {
            for ic in 0..c {
                for ih in 0..h {
                    for iw in 0..w {
                        data.push(f([ib, ic, ih, iw]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of values in one `(H, W)` channel plane.
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn index(&self, idx: [usize; 4]) -> usize {
        let [_, c, h, w] = self.shape;
        ((idx[0] * c + idx[1]) * h + idx[2]) * w + idx[3]
    }

    pub fn get(&self, idx: [usize; 4]) -> f64 {
        self.data[self.index(idx)]
    }

    /// Channel plane `(b, c)` as a contiguous slice of length `H*W`.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let n = self.plane_len();
        let start = (b * self.shape[1] + c) * n;
        &self.data[start..start + n]
    }

    /// Iterates over all `B*C` channel planes in storage order.
    pub fn planes(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.plane_len())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Tensor4) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes the little-endian binary form: four `u32` dims followed by
    /// the `f64` payload.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for &d in &self.shape {
            let d = u32::try_from(d).map_err(|_| {
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "dim exceeds u32")
            })?;
            out.write_all(&d.to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 8 * self.data.len());
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 16];
        input
            .read_exact(&mut header)
            .map_err(|e| SwdError::Malformed(format!("tensor header: {e}")))?;
        let mut shape = [0usize; 4];
        for (i, d) in shape.iter_mut().enumerate() {
            let bytes: [u8; 4] = header[4 * i..4 * i + 4].try_into().unwrap();
            *d = u32::from_le_bytes(bytes) as usize;
        }
        let n: usize = shape.iter().product();
        let mut payload = vec![0u8; n * 8];
        input
            .read_exact(&mut payload)
            .map_err(|e| SwdError::Malformed(format!("tensor payload: {e}")))?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(shape, data)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(SwdError::Malformed("tensor shorter than header".into()));
        }
        let t = Self::read_binary(bytes)?;
        if bytes.len() != 16 + 8 * t.len() {
            return Err(SwdError::Malformed("trailing bytes after tensor".into()));
        }
        Ok(t)
    }
}

impl Tensor3 {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_len(shape.iter().product(), data.len())?;
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: [usize; 3]) -> f64 {
        let [_, c, n] = self.shape;
        self.data[(idx[0] * c + idx[1]) * n + idx[2]]
    }
}

/// Flattens the two spatial dims: element `(b, c, h, w)` moves to
/// `(b, c, h*W + w)`. Row-major storage makes this a relabelling.
pub fn flatten_spatial(x: &Tensor4) -> Tensor3 {
    let [b, c, h, w] = x.shape;
    Tensor3 {
        shape: [b, c, h * w],
        data: x.data.clone(),
    }
}

/// Inverse of [`flatten_spatial`].
pub fn reshape_spatial(x: &Tensor3, h: usize, w: usize) -> Result<Tensor4> {
    let [b, c, n] = x.shape;
    if n != h * w {
        return Err(SwdError::DimensionMismatch(format!(
            "cannot reshape last dim {n} into {h}x{w}"
        )));
    }
    Tensor4::new([b, c, h, w], x.data.clone())
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Builds a matrix whose rows are the given equal-length vectors.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Matrix> {
        let cols = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            check_len(cols, r.len())?;
            data.extend(r);
        }
        Ok(Matrix {
            rows: n,
            cols,
            data,
        })
    }

    /// Builds a matrix whose columns are the given equal-length vectors.
    pub fn from_columns(cols: Vec<Vec<f64>>) -> Result<Matrix> {
        Ok(Matrix::from_rows(cols)?.transpose())
    }
}
