//! Timing harness: median wall-clock per input size, log-log slope fits,
//! and training-time multipliers.
//!
//! Timed regions run on the calling thread only.

use std::fmt::Write as _;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use swd_core::dct;
use swd_core::dropout::{self, Mode};
use swd_core::train::{fit, OptimizerSpec, RunOptions, ToyNetSpec};
use swd_core::wavelet;
use swd_core::{Matrix, Result, SeededRng, SpectralDropoutConfig, SwdError, SyntheticDataset, Tensor4};

pub const MIN_REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    /// One-level db3 2D DWT of an n×n matrix.
    Dwt2d,
    /// 2D DCT-II; FFT path for power-of-two sides.
    Dct2d,
    /// 2D DCT-II by direct summation, O(n³).
    Dct2dDirect,
    Swd1d,
    Swd2d,
    Sfd1d,
    Sfd2d,
    /// Does nothing; calibrates the harness.
    Noop,
}

impl BenchOp {
    pub const ALL: [BenchOp; 8] = [
        BenchOp::Dwt2d,
        BenchOp::Dct2d,
        BenchOp::Dct2dDirect,
        BenchOp::Swd1d,
        BenchOp::Swd2d,
        BenchOp::Sfd1d,
        BenchOp::Sfd2d,
        BenchOp::Noop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Dwt2d => "dwt2d",
            BenchOp::Dct2d => "dct2d",
            BenchOp::Dct2dDirect => "dct2d-direct",
            BenchOp::Swd1d => "swd1d",
            BenchOp::Swd2d => "swd2d",
            BenchOp::Sfd1d => "sfd1d",
            BenchOp::Sfd2d => "sfd2d",
            BenchOp::Noop => "noop",
        }
    }

    /// A closure running the op once on an n×n input.
    pub fn prepare(self, n: usize) -> Box<dyn FnMut()> {
        let mut rng = SeededRng::new(n as u64);
        let m = Matrix::from_fn(n, n, |_, _| rng.normal());
        let t = Tensor4::new([1, 1, n, n], m.data().to_vec()).expect("square input");
        let dropout_op = |cfg: SpectralDropoutConfig| -> Box<dyn FnMut()> {
            let mut rng = SeededRng::new(7);
            let t = t.clone();
            Box::new(move || {
                black_box(dropout::forward(&t, &cfg, &mut rng, Mode::Train).expect("valid input"));
            })
        };
        match self {
            BenchOp::Dwt2d => {
                let f = wavelet::db3_filter();
                Box::new(move || {
                    black_box(wavelet::dwt2d(&m, &f).expect("non-empty"));
                })
            }
            BenchOp::Dct2d => Box::new(move || {
                black_box(dct::dct2_2d(&m).expect("non-empty"));
            }),
            BenchOp::Dct2dDirect => Box::new(move || {
                black_box(dct::dct2_2d_direct(&m).expect("non-empty"));
            }),
            BenchOp::Swd1d => dropout_op(SpectralDropoutConfig::swd1d(0.5)),
            BenchOp::Swd2d => dropout_op(SpectralDropoutConfig::swd2d(0.5)),
            BenchOp::Sfd1d => dropout_op(SpectralDropoutConfig::sfd1d(0.5, 0.2)),
            BenchOp::Sfd2d => dropout_op(SpectralDropoutConfig::sfd2d(0.5, 0.2)),
            BenchOp::Noop => Box::new(move || {
                black_box(&m);
            }),
        }
    }
}

impl FromStr for BenchOp {
    type Err = SwdError;

    fn from_str(s: &str) -> Result<Self> {
        BenchOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| SwdError::InvalidArgument(format!("unknown op '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub op: String,
    pub sizes: Vec<usize>,
    /// Median seconds per size.
    pub medians: Vec<f64>,
    pub slope: f64,
    /// 95% confidence interval of the slope (infinite with fewer than
    /// three sizes).
    pub slope_ci: [f64; 2],
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("op,n,median_seconds\n");
        for (n, t) in self.sizes.iter().zip(&self.medians) {
            let _ = writeln!(s, "{},{n},{t:e}", self.op);
        }
        s
    }

    /// Two whitespace-separated columns, `n median_seconds`, with the fit in
    /// a comment header.
    pub fn to_gnuplot(&self) -> String {
        let mut s = format!(
            "# {} slope {:.4} ci [{:.4}, {:.4}]\n",
            self.op, self.slope, self.slope_ci[0], self.slope_ci[1]
        );
        for (n, t) in self.sizes.iter().zip(&self.medians) {
            let _ = writeln!(s, "{n} {t:e}");
        }
        s
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Two-sided 97.5% Student-t quantile.
fn t_quantile(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
        2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    TABLE.get(dof.wrapping_sub(1)).copied().unwrap_or(1.96)
}

/// Least-squares slope of `ln t` against `ln n`, with its 95% interval.
pub fn loglog_fit(sizes: &[usize], times: &[f64]) -> (f64, [f64; 2]) {
    let k = sizes.len();
    if k < 2 {
        return (f64::NAN, [f64::NEG_INFINITY, f64::INFINITY]);
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if k < 3 {
        return (slope, [f64::NEG_INFINITY, f64::INFINITY]);
    }
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (rss / (k - 2) as f64 / sxx).sqrt();
    let half = t_quantile(k - 2) * se;
    (slope, [slope - half, slope + half])
}

fn check_plan(sizes: &[usize], repeats: usize) -> Result<()> {
    if repeats < MIN_REPEATS {
        return Err(SwdError::InvalidArgument(format!(
            "repeats {repeats} below the minimum of {MIN_REPEATS}"
        )));
    }
    if sizes.is_empty() || sizes.contains(&0) || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SwdError::InvalidArgument(
            "sizes must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Median seconds of `run` over `repeats` calls after one discarded warm-up.
pub fn time_repeats(run: &mut dyn FnMut(), repeats: usize) -> f64 {
    run();
    let samples: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            run();
            start.elapsed().as_secs_f64()
        })
        .collect();
    // Clamp to the timer floor so log-log fits stay finite.
    median(&samples).max(1e-9)
}

/// Times `make(n)` for each size and fits the scaling slope.
pub fn time_sized(
    name: &str,
    sizes: &[usize],
    repeats: usize,
    mut make: impl FnMut(usize) -> Box<dyn FnMut()>,
) -> Result<ScalingReport> {
    check_plan(sizes, repeats)?;
    let medians: Vec<f64> = sizes
        .iter()
        .map(|&n| time_repeats(&mut *make(n), repeats))
        .collect();
    let (slope, slope_ci) = loglog_fit(sizes, &medians);
    Ok(ScalingReport {
        op: name.to_string(),
        sizes: sizes.to_vec(),
        medians,
        slope,
        slope_ci,
    })
}

pub fn time_op(op: BenchOp, sizes: &[usize], repeats: usize) -> Result<ScalingReport> {
    time_sized(op.name(), sizes, repeats, |n| op.prepare(n))
}

/// One arm of a training-time comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtmArm {
    pub label: String,
    pub dropout: Option<SpectralDropoutConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtmReport {
    pub baseline: String,
    pub arm: String,
    pub baseline_median_seconds: f64,
    pub arm_median_seconds: f64,
    /// Arm median epoch time over baseline median epoch time.
    pub ratio: f64,
}

/// Training-time multiplier of `arm` relative to `baseline`: median epoch
/// seconds over all seeds and epochs. Runs alternate between the arms seed by
/// seed so slow drift hits both.
#[allow(clippy::too_many_arguments)]
pub fn ttm(
    net: &ToyNetSpec,
    data: &SyntheticDataset,
    baseline: &TtmArm,
    arm: &TtmArm,
    opt: &OptimizerSpec,
    epochs: usize,
    seeds: &[u64],
) -> Result<TtmReport> {
    if epochs == 0 || seeds.is_empty() {
        return Err(SwdError::InvalidArgument("ttm needs at least one epoch and one seed".into()));
    }
    let options = RunOptions {
        record_timing: true,
        self_test: false,
    };
    let mut times = [Vec::new(), Vec::new()];
    for &seed in seeds {
        for (slot, a) in [baseline, arm].into_iter().enumerate() {
            let (_, m) = fit(net, data, a.dropout.as_ref(), opt, epochs, seed, options)?;
            times[slot].extend(m.epochs.iter().skip(1).map(|e| e.epoch_seconds));
        }
    }
    let (b, a) = (median(&times[0]), median(&times[1]));
    Ok(TtmReport {
        baseline: baseline.label.clone(),
        arm: arm.label.clone(),
        baseline_median_seconds: b,
        arm_median_seconds: a,
        ratio: a / b,
    })
}
