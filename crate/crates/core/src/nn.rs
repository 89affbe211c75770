//! Plain CPU layers for the toy network. Each forward has a matching
//! backward that takes the forward input and the output gradient.

use crate::error::{Result, SwdError};
use crate::rng::SeededRng;
use crate::tensor::Tensor4;

/// Same-padded 2D convolution with an odd square kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    /// He-uniform weights, zero bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut SeededRng) -> Result<Self> {
        if kernel % 2 == 0 || kernel == 0 {
            return Err(SwdError::InvalidArgument(format!("kernel {kernel} must be odd")));
        }
        let fan_in = (in_channels * kernel * kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = (0..out_channels * in_channels * kernel * kernel)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weight,
            bias: vec![0.0; out_channels],
        })
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        if x.shape()[1] != self.in_channels {
            return Err(SwdError::DimensionMismatch(format!(
                "conv expects {} channels, got {}",
                self.in_channels,
                x.shape()[1]
            )));
        }
        Ok(())
    }

    /// Patch matrix of one `(C, H, W)` plane: row `(i, ky, kx)`, column
    /// `(y, x)`, zeros where the tap falls outside.
    fn im2col(&self, src: &[f64], h: usize, w: usize, col: &mut [f64]) {
        let pad = self.kernel / 2;
        col.fill(0.0);
        for i in 0..self.in_channels {
            let plane = &src[i * h * w..(i + 1) * h * w];
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let q = (i * self.kernel + ky) * self.kernel + kx;
                    let row = &mut col[q * h * w..(q + 1) * h * w];
                    let (y0, y1) = valid_range(h, ky, pad);
                    let (x0, x1) = valid_range(w, kx, pad);
                    let (s0, s1) = (x0 + kx - pad, x1 + kx - pad);
                    for yy in y0..y1 {
                        let sy = yy + ky - pad;
                        row[yy * w + x0..yy * w + x1].copy_from_slice(&plane[sy * w + s0..sy * w + s1]);
                    }
                }
            }
        }
    }

    /// Adds a patch-matrix gradient back onto the plane it came from.
    fn col2im(&self, col: &[f64], h: usize, w: usize, dst: &mut [f64]) {
        let pad = self.kernel / 2;
        for i in 0..self.in_channels {
            let plane = &mut dst[i * h * w..(i + 1) * h * w];
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let q = (i * self.kernel + ky) * self.kernel + kx;
                    let row = &col[q * h * w..(q + 1) * h * w];
                    let (y0, y1) = valid_range(h, ky, pad);
                    let (x0, x1) = valid_range(w, kx, pad);
                    let (s0, s1) = (x0 + kx - pad, x1 + kx - pad);
                    for yy in y0..y1 {
                        let sy = yy + ky - pad;
                        for (d, v) in plane[sy * w + s0..sy * w + s1].iter_mut().zip(&row[yy * w + x0..yy * w + x1]) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }

    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let [b, _, h, w] = x.shape();
        let (hw, q_len) = (h * w, self.patch_rows());
        let in_len = self.in_channels * hw;
        let mut out = vec![0.0; b * self.out_channels * hw];
        let mut col = vec![0.0; q_len * hw];
        for (src, dst) in x.data().chunks(in_len).zip(out.chunks_mut(self.out_channels * hw)) {
            self.im2col(src, h, w, &mut col);
            for (o, orow) in dst.chunks_mut(hw).enumerate() {
                orow.fill(self.bias[o]);
                for (&wv, crow) in self.weight[o * q_len..(o + 1) * q_len].iter().zip(col.chunks(hw)) {
                    for (d, c) in orow.iter_mut().zip(crow) {
                        *d += wv * c;
                    }
                }
            }
        }
        Tensor4::new([b, self.out_channels, h, w], out)
    }

    pub fn backward(&self, x: &Tensor4, grad_out: &Tensor4) -> Result<ConvGrads> {
        self.check_input(x)?;
        let [b, _, h, w] = x.shape();
        if grad_out.shape() != [b, self.out_channels, h, w] {
            return Err(SwdError::DimensionMismatch("conv grad shape".into()));
        }
        let (hw, q_len) = (h * w, self.patch_rows());
        let in_len = self.in_channels * hw;
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; self.weight.len()];
        let mut gb = vec![0.0; self.out_channels];
        let mut col = vec![0.0; q_len * hw];
        let mut gcol = vec![0.0; q_len * hw];
        for ((src, g), gxs) in x
            .data()
            .chunks(in_len)
            .zip(grad_out.data().chunks(self.out_channels * hw))
            .zip(gx.chunks_mut(in_len))
        {
            self.im2col(src, h, w, &mut col);
            gcol.fill(0.0);
            for (o, grow) in g.chunks(hw).enumerate() {
                gb[o] += grow.iter().sum::<f64>();
                let wrow = &self.weight[o * q_len..(o + 1) * q_len];
                let gwrow = &mut gw[o * q_len..(o + 1) * q_len];
                for (q, (crow, gcrow)) in col.chunks(hw).zip(gcol.chunks_mut(hw)).enumerate() {
                    let wv = wrow[q];
                    let mut acc = 0.0;
                    for ((gv, cv), gc) in grow.iter().zip(crow).zip(gcrow.iter_mut()) {
                        acc += gv * cv;
                        *gc += wv * gv;
                    }
                    gwrow[q] += acc;
                }
            }
            self.col2im(&gcol, h, w, gxs);
        }
        Ok(ConvGrads {
            input: Tensor4::new(x.shape(), gx)?,
            weight: gw,
            bias: gb,
        })
    }
}

/// Output rows/cols `[lo, hi)` whose tap `k` lands inside an axis of
/// length `n` under padding `pad`.
fn valid_range(n: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (n + pad).saturating_sub(k).min(n);
    (lo, hi.max(lo))
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor4::new(x.shape(), data).expect("same shape")
}

/// 2x2 average pooling, stride 2; odd trailing rows/cols are dropped.
pub fn avgpool2(x: &Tensor4) -> Result<Tensor4> {
    let [b, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(SwdError::DimensionMismatch(format!("cannot pool {h}x{w}")));
    }
    Ok(Tensor4::from_fn([b, c, oh, ow], |[ib, ic, i, j]| {
        0.25 * (x.get([ib, ic, 2 * i, 2 * j])
            + x.get([ib, ic, 2 * i, 2 * j + 1])
            + x.get([ib, ic, 2 * i + 1, 2 * j])
            + x.get([ib, ic, 2 * i + 1, 2 * j + 1]))
    }))
}

pub fn avgpool2_backward(input_shape: [usize; 4], grad_out: &Tensor4) -> Tensor4 {
    let [_, _, h, w] = input_shape;
    let [_, _, oh, ow] = grad_out.shape();
    Tensor4::from_fn(input_shape, |[ib, ic, i, j]| {
        let (pi, pj) = (i / 2, j / 2);
        if pi < oh && pj < ow && i < 2 * oh && j < 2 * ow && i < h && j < w {
            0.25 * grad_out.get([ib, ic, pi, pj])
        } else {
            0.0
        }
    })
}

/// Fully connected layer over the flattened `C*H*W` features.
/// Output shape is `(B, out, 1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub input: Tensor4,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    /// Uniform `±1/sqrt(in)` weights, zero bias.
    pub fn new(in_features: usize, out_features: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        Self {
            in_features,
            out_features,
            weight: (0..in_features * out_features)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect(),
            bias: vec![0.0; out_features],
        }
    }

    fn features(&self, x: &Tensor4) -> Result<usize> {
        let [_, c, h, w] = x.shape();
        if c * h * w != self.in_features {
            return Err(SwdError::DimensionMismatch(format!(
                "linear expects {} features, got {}",
                self.in_features,
                c * h * w
            )));
        }
        Ok(self.in_features)
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let n = self.features(x)?;
        let b = x.shape()[0];
        let mut out = Vec::with_capacity(b * self.out_features);
        for row in x.data().chunks(n) {
            for o in 0..self.out_features {
                let wrow = &self.weight[o * n..(o + 1) * n];
                out.push(self.bias[o] + wrow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        Tensor4::new([b, self.out_features, 1, 1], out)
    }

    pub fn backward(&self, x: &Tensor4, grad_out: &Tensor4) -> Result<LinearGrads> {
        let n = self.features(x)?;
        let b = x.shape()[0];
        if grad_out.shape() != [b, self.out_features, 1, 1] {
            return Err(SwdError::DimensionMismatch("linear grad shape".into()));
        }
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; self.weight.len()];
        let mut gb = vec![0.0; self.out_features];
        for ((row, g), gxrow) in x
            .data()
            .chunks(n)
            .zip(grad_out.data().chunks(self.out_features))
            .zip(gx.chunks_mut(n))
        {
            for (o, &go) in g.iter().enumerate() {
                gb[o] += go;
                let wrow = &self.weight[o * n..(o + 1) * n];
                let gwrow = &mut gw[o * n..(o + 1) * n];
                for k in 0..n {
                    gwrow[k] += go * row[k];
                    gxrow[k] += go * wrow[k];
                }
            }
        }
        Ok(LinearGrads {
            input: Tensor4::new(x.shape(), gx)?,
            weight: gw,
            bias: gb,
        })
    }
}

/// Mean softmax cross-entropy over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct XentOutput {
    pub loss: f64,
    pub grad: Tensor4,
    pub correct: usize,
}

pub fn softmax_xent(logits: &Tensor4, labels: &[usize]) -> Result<XentOutput> {
    let [b, k, _, _] = logits.shape();
    if labels.len() != b || logits.shape()[2] * logits.shape()[3] != 1 {
        return Err(SwdError::DimensionMismatch("logits must be (B, K, 1, 1) with B labels".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    let mut grad = Vec::with_capacity(b * k);
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        if label >= k {
            return Err(SwdError::InvalidArgument(format!("label {label} >= {k} classes")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + max - row[label];
        let argmax = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0;
        if argmax == label {
            correct += 1;
        }
        for (i, e) in exps.iter().enumerate() {
            let target = if i == label { 1.0 } else { 0.0 };
            grad.push((e / sum - target) / b as f64);
        }
    }
    Ok(XentOutput {
        loss: loss / b as f64,
        grad: Tensor4::new(logits.shape(), grad)?,
        correct,
    })
}
