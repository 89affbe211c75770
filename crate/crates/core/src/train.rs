//! Toy conv-net with one spectral-dropout site, SGD with momentum, and the
//! ablation sweeps built on top of it.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Split, SyntheticDataset, CLASSES};
use crate::dropout::{self, Band, MaskRecord, Mode, SpectralDropoutConfig, Variant};
use crate::error::{Result, SwdError};
use crate::gradcheck::{finite_diff_vec, max_relative_error};
use crate::nn::{self, Conv2d, Linear};
use crate::rng::SeededRng;
use crate::tensor::Tensor4;

pub const DEFAULT_P_GRID: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_ETA_GRID: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];

/// Largest relative error the pre-training gradient self-test accepts.
pub const SELF_TEST_TOL: f64 = 1e-5;

fn default_kernel() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        #[serde(default = "default_kernel")]
        kernel: usize,
    },
    Relu,
    AvgPool,
    Linear {
        out_features: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    BeforeConv,
    AfterConv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyNetSpec {
    pub blocks: Vec<LayerSpec>,
    /// Index of the conv block the dropout site is attached to.
    pub insertion_point: usize,
    pub placement: Placement,
}

impl Default for ToyNetSpec {
    /// conv8-relu-pool-conv16-relu-pool-linear4, dropout after the second conv.
    fn default() -> Self {
        Self {
            blocks: vec![
                LayerSpec::Conv { out_channels: 8, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::AvgPool,
                LayerSpec::Conv { out_channels: 16, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::AvgPool,
                LayerSpec::Linear { out_features: CLASSES },
            ],
            insertion_point: 3,
            placement: Placement::AfterConv,
        }
    }
}

impl ToyNetSpec {
    pub fn with_site(mut self, insertion_point: usize, placement: Placement) -> Self {
        self.insertion_point = insertion_point;
        self.placement = placement;
        self
    }

    /// Indices of the conv blocks, i.e. the legal insertion points.
    pub fn conv_indices(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| matches!(b, LayerSpec::Conv { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(SwdError::InvalidConfig("net has no blocks".into()));
        }
        match self.blocks.get(self.insertion_point) {
            Some(LayerSpec::Conv { .. }) => {}
            Some(other) => {
                return Err(SwdError::InvalidConfig(format!(
                    "insertion_point {} is a {other:?} block, not a conv",
                    self.insertion_point
                )))
            }
            None => {
                return Err(SwdError::InvalidConfig(format!(
                    "insertion_point {} out of range for {} blocks",
                    self.insertion_point,
                    self.blocks.len()
                )))
            }
        }
        for b in &self.blocks {
            let bad = match b {
                LayerSpec::Conv { out_channels, kernel } => *out_channels == 0 || kernel % 2 == 0,
                LayerSpec::Linear { out_features } => *out_features == 0,
                _ => false,
            };
            if bad {
                return Err(SwdError::InvalidConfig(format!("bad block {b:?}")));
            }
        }
        Ok(())
    }

    /// Layer index whose input the dropout acts on.
    fn site(&self) -> usize {
        match self.placement {
            Placement::BeforeConv => self.insertion_point,
            Placement::AfterConv => self.insertion_point + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv(Conv2d),
    Relu,
    Pool,
    Linear(Linear),
}

/// Instantiated toy network.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    spec: ToyNetSpec,
    layers: Vec<Layer>,
    /// `[C, H, W]` of each layer's input, plus the final output.
    shapes: Vec<[usize; 3]>,
}

/// Values saved by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Tensor4>,
    record: Option<MaskRecord>,
}

impl Trace {
    pub fn record(&self) -> Option<&MaskRecord> {
        self.record.as_ref()
    }
}

impl ToyNet {
    pub fn new(spec: &ToyNetSpec, input: [usize; 3], classes: usize, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let mut shape = input;
        let mut shapes = vec![shape];
        let mut layers = Vec::with_capacity(spec.blocks.len());
        for block in &spec.blocks {
            let [c, h, w] = shape;
            let (layer, next) = match *block {
                LayerSpec::Conv { out_channels, kernel } => {
                    (Layer::Conv(Conv2d::new(c, out_channels, kernel, rng)?), [out_channels, h, w])
                }
                LayerSpec::Relu => (Layer::Relu, shape),
                LayerSpec::AvgPool => {
                    if h < 2 || w < 2 {
                        return Err(SwdError::InvalidConfig(format!("cannot pool a {h}x{w} map")));
                    }
                    (Layer::Pool, [c, h / 2, w / 2])
                }
                LayerSpec::Linear { out_features } => {
                    (Layer::Linear(Linear::new(c * h * w, out_features, rng)), [out_features, 1, 1])
                }
            };
            layers.push(layer);
            shape = next;
            shapes.push(shape);
        }
        if shape != [classes, 1, 1] {
            return Err(SwdError::InvalidConfig(format!(
                "net output {shape:?} does not match {classes} classes"
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
            shapes,
        })
    }

    pub fn spec(&self) -> &ToyNetSpec {
        &self.spec
    }

    /// `[C, H, W]` of the tensor the dropout site sees.
    pub fn site_shape(&self) -> [usize; 3] {
        self.shapes[self.spec.site()]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter tensors in a fixed order (per layer: weight, bias).
    pub fn params(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => out.extend([&c.weight, &c.bias]),
                Layer::Linear(l) => out.extend([&l.weight, &l.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => out.extend([&mut c.weight, &mut c.bias]),
                Layer::Linear(l) => out.extend([&mut l.weight, &mut l.bias]),
                _ => {}
            }
        }
        out
    }

    fn layer_forward(layer: &Layer, x: &Tensor4) -> Result<Tensor4> {
        match layer {
            Layer::Conv(c) => c.forward(x),
            Layer::Relu => Ok(nn::relu(x)),
            Layer::Pool => nn::avgpool2(x),
            Layer::Linear(l) => l.forward(x),
        }
    }

    /// Input gradient plus parameter gradients (weight, bias) if any.
    fn layer_backward(layer: &Layer, x: &Tensor4, g: &Tensor4) -> Result<(Tensor4, Vec<Vec<f64>>)> {
        Ok(match layer {
            Layer::Conv(c) => {
                let gr = c.backward(x, g)?;
                (gr.input, vec![gr.weight, gr.bias])
            }
            Layer::Relu => (nn::relu_backward(x, g), Vec::new()),
            Layer::Pool => (nn::avgpool2_backward(x.shape(), g), Vec::new()),
            Layer::Linear(l) => {
                let gr = l.backward(x, g)?;
                (gr.input, vec![gr.weight, gr.bias])
            }
        })
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        let [_, c, h, w] = x.shape();
        if [c, h, w] != self.shapes[0] {
            return Err(SwdError::DimensionMismatch(format!(
                "net expects {:?} inputs, got {:?}",
                self.shapes[0],
                [c, h, w]
            )));
        }
        Ok(())
    }

    /// Forward pass. Dropout runs only when `dropout` is given and
    /// `mode` is `Train`.
    pub fn forward(
        &self,
        x: &Tensor4,
        dropout: Option<(&SpectralDropoutConfig, &mut SeededRng)>,
        mode: Mode,
    ) -> Result<(Tensor4, Trace)> {
        self.check_input(x)?;
        let site = self.spec.site();
        let mut dropout = dropout.filter(|_| mode == Mode::Train);
        let mut record = None;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for k in 0..=self.layers.len() {
            if k == site {
                if let Some((cfg, rng)) = dropout.as_mut() {
                    let (y, rec) = dropout::forward(&cur, cfg, rng, Mode::Train)?;
                    cur = y;
                    record = Some(rec);
                }
            }
            if let Some(layer) = self.layers.get(k) {
                let next = Self::layer_forward(layer, &cur)?;
                inputs.push(std::mem::replace(&mut cur, next));
            }
        }
        Ok((cur, Trace { inputs, record }))
    }

    /// Eval-mode logits.
    pub fn logits(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.forward(x, None, Mode::Eval)?.0)
    }

    /// Parameter gradients in `params()` order.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_out: &Tensor4,
        dropout: Option<&SpectralDropoutConfig>,
    ) -> Result<Vec<Vec<f64>>> {
        let site = self.spec.site();
        let through_dropout = |g: Tensor4| -> Result<Tensor4> {
            match (&trace.record, dropout) {
                (Some(rec), Some(cfg)) => dropout::backward(&g, rec, cfg),
                _ => Ok(g),
            }
        };
        let mut g = grad_out.clone();
        if site == self.layers.len() {
            g = through_dropout(g)?;
        }
        let mut grads = Vec::new();
        for k in (0..self.layers.len()).rev() {
            let (gx, mut pg) = Self::layer_backward(&self.layers[k], &trace.inputs[k], &g)?;
            pg.reverse();
            grads.extend(pg);
            g = if k == site { through_dropout(gx)? } else { gx };
        }
        grads.reverse();
        Ok(grads)
    }

    /// Finite-difference check of every layer and the dropout site at their
    /// in-network shapes (batch 2). Returns the worst relative error.
    pub fn self_test(&self, dropout: Option<&SpectralDropoutConfig>, rng: &mut SeededRng) -> Result<f64> {
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        let random = |shape: [usize; 3], rng: &mut SeededRng| {
            Tensor4::from_fn([2, shape[0], shape[1], shape[2]], |_| rng.normal())
        };
        let sample = |n: usize, rng: &mut SeededRng| -> Vec<usize> { (0..n.min(6)).map(|_| rng.below(n)).collect() };
        for (k, layer) in self.layers.iter().enumerate() {
            let x = random(self.shapes[k], rng);
            let r = random(self.shapes[k + 1], rng);
            let (gx, pg) = Self::layer_backward(layer, &x, &r)?;
            let loss = |l: &Layer, t: &Tensor4| Self::layer_forward(l, t).map(|y| y.dot(&r)).unwrap_or(f64::NAN);
            let coords = sample(x.len(), rng);
            let num = finite_diff_vec(
                |v| loss(layer, &Tensor4::new(x.shape(), v.to_vec()).expect("shape")),
                x.data(),
                eps,
                &coords,
            );
            let ana: Vec<f64> = coords.iter().map(|&i| gx.data()[i]).collect();
            worst = worst.max(max_relative_error(&ana, &num));
            for (pi, grad) in pg.iter().enumerate() {
                let coords = sample(grad.len(), rng);
                let num = finite_diff_vec(
                    |v| {
                        let mut l = layer.clone();
                        match &mut l {
                            Layer::Conv(c) => *[&mut c.weight, &mut c.bias][pi] = v.to_vec(),
                            Layer::Linear(c) => *[&mut c.weight, &mut c.bias][pi] = v.to_vec(),
                            _ => unreachable!("parameter-free layer"),
                        }
                        loss(&l, &x)
                    },
                    match layer {
                        Layer::Conv(c) => [&c.weight, &c.bias][pi],
                        Layer::Linear(c) => [&c.weight, &c.bias][pi],
                        _ => unreachable!("parameter-free layer"),
                    },
                    eps,
                    &coords,
                );
                let ana: Vec<f64> = coords.iter().map(|&i| grad[i]).collect();
                worst = worst.max(max_relative_error(&ana, &num));
            }
        }
        if let Some(cfg) = dropout {
            let x = random(self.site_shape(), rng);
            let (_, rec) = dropout::forward(&x, cfg, rng, Mode::Train)?;
            let r = Tensor4::from_fn(x.shape(), |_| rng.normal());
            let ana = dropout::backward(&r, &rec, cfg)?;
            let coords: Vec<usize> = (0..16).map(|_| rng.below(x.len())).collect();
            let num = finite_diff_vec(
                |v| {
                    let t = Tensor4::new(x.shape(), v.to_vec()).expect("shape");
                    dropout::replay(&t, &rec, cfg).map(|y| y.dot(&r)).unwrap_or(f64::NAN)
                },
                x.data(),
                eps,
                &coords,
            );
            let ana: Vec<f64> = coords.iter().map(|&i| ana.data()[i]).collect();
            worst = worst.max(max_relative_error(&ana, &num));
        }
        if worst.is_nan() || worst > SELF_TEST_TOL {
            return Err(SwdError::InvalidConfig(format!(
                "gradient self-test failed: relative error {worst:.3e}"
            )));
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSpec {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 32,
        }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(SwdError::InvalidConfig(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(SwdError::InvalidConfig(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(SwdError::InvalidConfig("weight_decay must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(SwdError::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v = mu*v + g + wd*w; w -= lr*v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    spec: OptimizerSpec,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(spec: &OptimizerSpec, net: &ToyNet) -> Self {
        Self {
            spec: spec.clone(),
            velocity: net.params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut ToyNet, grads: &[Vec<f64>]) {
        let OptimizerSpec { lr, momentum, weight_decay, .. } = self.spec;
        for ((w, g), v) in net.params_mut().into_iter().zip(grads).zip(&mut self.velocity) {
            for ((wi, gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = momentum * *vi + gi + weight_decay * *wi;
                *wi -= lr * *vi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub epoch_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Row 0 is the untrained net; row `e` follows epoch `e`.
    pub epochs: Vec<EpochMetrics>,
    /// Training stopped on a non-finite loss.
    pub diverged: bool,
}

pub const CSV_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc,epoch_seconds";

impl RunMetrics {
    pub fn last(&self) -> &EpochMetrics {
        self.epochs.last().expect("metrics always hold the initial row")
    }

    /// Final train accuracy minus test accuracy, in percentage points.
    pub fn final_gap(&self) -> f64 {
        100.0 * (self.last().train_acc - self.last().test_acc)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_acc, e.test_loss, e.test_acc, e.epoch_seconds
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Store wall-clock epoch times; when off `epoch_seconds` is 0 so the
    /// metrics are reproducible byte for byte.
    pub record_timing: bool,
    /// Run the gradient self-test before training.
    pub self_test: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_timing: true,
            self_test: true,
        }
    }
}

/// Mean loss and accuracy over `split`, eval mode.
pub fn evaluate(net: &ToyNet, split: &Split) -> Result<(f64, f64)> {
    let n = split.len();
    let mut loss = 0.0;
    let mut correct = 0;
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(256) {
        let (x, y) = split.gather(chunk);
        let out = nn::softmax_xent(&net.logits(&x)?, &y)?;
        loss += out.loss * chunk.len() as f64;
        correct += out.correct;
    }
    Ok((loss / n as f64, correct as f64 / n as f64))
}

fn data_shape(data: &SyntheticDataset) -> [usize; 3] {
    let [_, c, h, w] = data.train.images.shape();
    [c, h, w]
}

/// Trains and returns the final net with its metrics.
///
/// `seed` drives three independent streams (initialization, batch order,
/// dropout masks), so a dropout config that never drops leaves the other two
/// untouched.
pub fn fit(
    spec: &ToyNetSpec,
    data: &SyntheticDataset,
    dropout: Option<&SpectralDropoutConfig>,
    opt: &OptimizerSpec,
    epochs: usize,
    seed: u64,
    options: RunOptions,
) -> Result<(ToyNet, RunMetrics)> {
    opt.validate()?;
    if let Some(cfg) = dropout {
        cfg.validate()?;
    }
    let root = SeededRng::new(seed);
    let mut net = ToyNet::new(spec, data_shape(data), CLASSES, &mut root.derive(1))?;
    if options.self_test {
        net.self_test(dropout, &mut root.derive(4))?;
    } else if let Some(cfg) = dropout {
        let [c, h, w] = net.site_shape();
        dropout::forward(&Tensor4::zeros([1, c, h, w]), cfg, &mut root.derive(4), Mode::Train)?;
    }
    let mut order_rng = root.derive(2);
    let mut mask_rng = root.derive(3);
    let mut sgd = Sgd::new(opt, &net);

    let row = |net: &ToyNet, epoch: usize, seconds: f64| -> Result<EpochMetrics> {
        let (train_loss, train_acc) = evaluate(net, &data.train)?;
        let (test_loss, test_acc) = evaluate(net, &data.test)?;
        Ok(EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
            epoch_seconds: if options.record_timing { seconds } else { 0.0 },
        })
    };
    let mut metrics = RunMetrics {
        epochs: vec![row(&net, 0, 0.0)?],
        diverged: false,
    };
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    'epochs: for epoch in 1..=epochs {
        let start = Instant::now();
        order_rng.shuffle(&mut order);
        for batch in order.chunks(opt.batch_size) {
            let (x, y) = data.train.gather(batch);
            let (logits, trace) = net.forward(&x, dropout.map(|c| (c, &mut mask_rng)), Mode::Train)?;
            let out = nn::softmax_xent(&logits, &y)?;
            if !out.loss.is_finite() {
                metrics.diverged = true;
                break 'epochs;
            }
            let grads = net.backward(&trace, &out.grad, dropout)?;
            sgd.step(&mut net, &grads);
        }
        let seconds = start.elapsed().as_secs_f64();
        let r = row(&net, epoch, seconds)?;
        if ![r.train_loss, r.train_acc, r.test_loss, r.test_acc].iter().all(|v| v.is_finite()) {
            metrics.diverged = true;
            break;
        }
        metrics.epochs.push(r);
    }
    Ok((net, metrics))
}

/// `fit` with default options, metrics only.
pub fn train(
    spec: &ToyNetSpec,
    data: &SyntheticDataset,
    dropout: Option<&SpectralDropoutConfig>,
    opt: &OptimizerSpec,
    epochs: usize,
    seed: u64,
) -> Result<RunMetrics> {
    Ok(fit(spec, data, dropout, opt, epochs, seed, RunOptions::default())?.1)
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub label: String,
    pub net: ToyNetSpec,
    pub dropout: Option<SpectralDropoutConfig>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run: RunSpec,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub runs: usize,
    pub diverged: usize,
    pub mean_train_acc: f64,
    pub mean_test_acc: f64,
    /// Mean final train-test gap in points.
    pub mean_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Labels in first-seen order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.run.label) {
                out.push(r.run.label.clone());
            }
        }
        out
    }

    pub fn rows_for(&self, label: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.run.label == label).collect()
    }

    /// Metrics for `label` at `seed`.
    pub fn get(&self, label: &str, seed: u64) -> Option<&RunMetrics> {
        self.rows
            .iter()
            .find(|r| r.run.label == label && r.run.seed == seed)
            .map(|r| &r.metrics)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.labels()
            .into_iter()
            .map(|label| {
                let rows = self.rows_for(&label);
                let n = rows.len() as f64;
                let mean = |f: &dyn Fn(&RunMetrics) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
                SummaryRow {
                    runs: rows.len(),
                    diverged: rows.iter().filter(|r| r.metrics.diverged).count(),
                    mean_train_acc: mean(&|m| m.last().train_acc),
                    mean_test_acc: mean(&|m| m.last().test_acc),
                    mean_gap: mean(&|m| m.final_gap()),
                    label,
                }
            })
            .collect()
    }

    /// Cell with the highest mean test accuracy; ties keep the earlier cell.
    pub fn best(&self) -> Option<SummaryRow> {
        self.summary()
            .into_iter()
            .fold(None, |best: Option<SummaryRow>, row| match best {
                Some(b) if b.mean_test_acc >= row.mean_test_acc => Some(b),
                _ => Some(row),
            })
    }

    /// One line per run with its final metrics.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,seed,variant,p,eta,epochs,diverged,train_loss,train_acc,test_loss,test_acc,gap\n");
        for r in &self.rows {
            let last = r.metrics.last();
            let (variant, p, eta) = match &r.run.dropout {
                Some(c) => (c.variant.name(), c.p, c.eta),
                None => ("none", 0.0, 0.0),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.run.label,
                r.run.seed,
                variant,
                p,
                eta,
                last.epoch,
                r.metrics.diverged,
                last.train_loss,
                last.train_acc,
                last.test_loss,
                last.test_acc,
                r.metrics.final_gap()
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("label,runs,diverged,mean_train_acc,mean_test_acc,mean_gap\n");
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.label, r.runs, r.diverged, r.mean_train_acc, r.mean_test_acc, r.mean_gap
            );
        }
        s
    }

    /// Fixed-width text table of the summary.
    pub fn format_summary(&self) -> String {
        let summary = self.summary();
        let width = summary.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
        let mut s = format!(
            "{:<width$}  {:>4}  {:>9}  {:>8}  {:>7}\n",
            "label", "runs", "train_acc", "test_acc", "gap"
        );
        for r in summary {
            let _ = writeln!(
                s,
                "{:<width$}  {:>4}  {:>9.4}  {:>8.4}  {:>7.2}{}",
                r.label,
                r.runs,
                r.mean_train_acc,
                r.mean_test_acc,
                r.mean_gap,
                if r.diverged > 0 { format!("  ({} diverged)", r.diverged) } else { String::new() }
            );
        }
        s
    }
}

/// Runs every cell, in parallel across cells. Each run is itself
/// single-threaded and deterministic, so the table does not depend on
/// scheduling.
pub fn run_sweep(
    runs: &[RunSpec],
    data: &SyntheticDataset,
    opt: &OptimizerSpec,
    epochs: usize,
    options: RunOptions,
) -> Result<SweepTable> {
    let rows = runs
        .par_iter()
        .map(|run| {
            let (_, metrics) = fit(&run.net, data, run.dropout.as_ref(), opt, epochs, run.seed, options)?;
            Ok(SweepRow {
                run: run.clone(),
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}

fn placement_name(p: Placement) -> &'static str {
    match p {
        Placement::BeforeConv => "before",
        Placement::AfterConv => "after",
    }
}

/// Same dropout config at each `(insertion_point, placement)`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_positions(
    net: &ToyNetSpec,
    data: &SyntheticDataset,
    cfg: &SpectralDropoutConfig,
    positions: &[(usize, Placement)],
    seeds: &[u64],
    opt: &OptimizerSpec,
    epochs: usize,
    options: RunOptions,
) -> Result<SweepTable> {
    let mut runs = Vec::new();
    for &(point, placement) in positions {
        let spec = net.clone().with_site(point, placement);
        spec.validate()?;
        for &seed in seeds {
            runs.push(RunSpec {
                label: format!("{}-conv{point}", placement_name(placement)),
                net: spec.clone(),
                dropout: Some(cfg.clone()),
                seed,
            });
        }
    }
    run_sweep(&runs, data, opt, epochs, options)
}

/// Which coefficients a band-ablation cell masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSubset {
    Details(Vec<Band>),
    /// Mask the approximation band (1D only, diagnostic).
    Approximation,
}

impl BandSubset {
    pub fn label(&self) -> String {
        match self {
            BandSubset::Details(bands) => bands.iter().map(|b| format!("{b:?}")).collect::<Vec<_>>().join("+"),
            BandSubset::Approximation => "AP".into(),
        }
    }

    pub fn apply(&self, base: &SpectralDropoutConfig) -> SpectralDropoutConfig {
        match self {
            BandSubset::Details(bands) => SpectralDropoutConfig {
                drop_approximation: false,
                ..base.clone()
            }
            .with_bands(bands),
            BandSubset::Approximation => SpectralDropoutConfig {
                band_select: None,
                drop_approximation: true,
                ..base.clone()
            },
        }
    }
}

/// `{L3}, {L2}, {L1}, {L1,L2,L3}` and the approximation diagnostic.
pub fn default_band_subsets() -> Vec<BandSubset> {
    vec![
        BandSubset::Details(vec![Band::L3]),
        BandSubset::Details(vec![Band::L2]),
        BandSubset::Details(vec![Band::L1]),
        BandSubset::Details(vec![Band::L1, Band::L2, Band::L3]),
        BandSubset::Approximation,
    ]
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_bands(
    net: &ToyNetSpec,
    data: &SyntheticDataset,
    base: &SpectralDropoutConfig,
    subsets: &[BandSubset],
    seeds: &[u64],
    opt: &OptimizerSpec,
    epochs: usize,
    options: RunOptions,
) -> Result<SweepTable> {
    let mut runs = Vec::new();
    for subset in subsets {
        let cfg = subset.apply(base);
        cfg.validate()?;
        for &seed in seeds {
            runs.push(RunSpec {
                label: subset.label(),
                net: net.clone(),
                dropout: Some(cfg.clone()),
                seed,
            });
        }
    }
    run_sweep(&runs, data, opt, epochs, options)
}

/// Cross product of `p_grid` and `eta_grid`. The wavelet variants ignore
/// pruning, so their eta axis collapses to `{0}`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_hparams(
    net: &ToyNetSpec,
    data: &SyntheticDataset,
    variant: Variant,
    p_grid: &[f64],
    eta_grid: &[f64],
    seeds: &[u64],
    opt: &OptimizerSpec,
    epochs: usize,
    options: RunOptions,
) -> Result<SweepTable> {
    let etas: &[f64] = if variant.is_wavelet() { &[0.0] } else { eta_grid };
    let mut runs = Vec::new();
    for &p in p_grid {
        for &eta in etas {
            let cfg = SpectralDropoutConfig::new(variant, p, eta);
            cfg.validate()?;
            for &seed in seeds {
                runs.push(RunSpec {
                    label: format!("p={p},eta={eta}"),
                    net: net.clone(),
                    dropout: Some(cfg.clone()),
                    seed,
                });
            }
        }
    }
    run_sweep(&runs, data, opt, epochs, options)
}

/// Baseline (no dropout) runs over `seeds`, labelled `baseline`.
pub fn baseline_runs(net: &ToyNetSpec, seeds: &[u64]) -> Vec<RunSpec> {
    seeds
        .iter()
        .map(|&seed| RunSpec {
            label: "baseline".into(),
            net: net.clone(),
            dropout: None,
            seed,
        })
        .collect()
}
