//! Self-contained property suites behind `swd verify`.
//!
//! Every check reduces to a worst-case error compared against a tolerance.
//! The filters under test are part of the options so a deliberately broken
//! filter can be fed through the same suite.

use std::fmt::Write as _;

use serde::Serialize;

use crate::counter;
use crate::dct;
use crate::dropout::{self, MaskRecord, Mode, SpectralDropoutConfig, Variant};
use crate::error::{Result, SwdError};
use crate::gradcheck::{adjoint_test, finite_diff_grad, half_energy_grad, max_relative_error, LinearMapHandle};
use crate::rng::SeededRng;
use crate::tensor::{Matrix, Tensor4};
use crate::train::{ToyNet, ToyNetSpec};
use crate::wavelet::{self, WaveletFilter, WaveletKind};

pub const EXACT_TOL: f64 = 1e-10;
pub const FD_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Wavelet,
    Dct,
    Dropout,
    Grad,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Wavelet, Suite::Dct, Suite::Dropout, Suite::Grad];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Wavelet => "wavelet",
            Suite::Dct => "dct",
            Suite::Dropout => "dropout",
            Suite::Grad => "grad",
        }
    }

    /// A suite name or `all`.
    pub fn parse_selection(s: &str) -> Result<Vec<Suite>> {
        match s {
            "all" => Ok(Suite::ALL.to_vec()),
            other => Suite::ALL
                .into_iter()
                .find(|suite| suite.name() == other)
                .map(|suite| vec![suite])
                .ok_or_else(|| SwdError::InvalidArgument(format!("unknown suite '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for suite in &self.suites {
            let _ = writeln!(s, "[{}] {}", suite.suite.name(), if suite.passed { "PASS" } else { "FAIL" });
            for c in &suite.checks {
                let _ = writeln!(
                    s,
                    "  {} {:<44} {:.3e} (tol {:.0e})",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance
                );
            }
        }
        let _ = writeln!(s, "{}", if self.passed { "all suites passed" } else { "verification FAILED" });
        s
    }
}

/// A filter under test with the number of vanishing moments it must have.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterUnderTest {
    pub filter: WaveletFilter,
    pub moments: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub filters: Vec<FilterUnderTest>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            filters: [WaveletKind::Db3, WaveletKind::Haar]
                .into_iter()
                .map(|k| FilterUnderTest {
                    filter: k.filter(),
                    moments: k.vanishing_moments(),
                })
                .collect(),
            seed: 0,
        }
    }
}

impl VerifyOptions {
    /// Default filters with db3 tap `tap` shifted by `delta`.
    pub fn with_perturbed_db3(tap: usize, delta: f64) -> Self {
        let mut opts = Self::default();
        let mut g = wavelet::db3_filter().g;
        g[tap] += delta;
        opts.filters[0].filter = WaveletFilter::from_lowpass("db3-perturbed", g);
        opts
    }
}

pub fn run(suites: &[Suite], opts: &VerifyOptions) -> VerifyReport {
    let suites: Vec<SuiteReport> = suites.iter().map(|&s| run_suite(s, opts)).collect();
    VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> SuiteReport {
    let mut checks = Checks::default();
    let mut rng = SeededRng::new(opts.seed).derive(suite as u64);
    match suite {
        Suite::Wavelet => wavelet_suite(&mut checks, opts, &mut rng),
        Suite::Dct => dct_suite(&mut checks, &mut rng),
        Suite::Dropout => dropout_suite(&mut checks, &mut rng),
        Suite::Grad => grad_suite(&mut checks, opts, &mut rng),
    }
    let checks = checks.0;
    SuiteReport {
        suite,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn push(&mut self, name: impl Into<String>, value: f64, tolerance: f64) {
        self.0.push(Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        });
    }

    /// Worst value of a fallible computation; errors count as infinite.
    fn worst(&mut self, name: impl Into<String>, tolerance: f64, f: impl FnOnce() -> Result<f64>) {
        self.push(name, f().unwrap_or(f64::INFINITY), tolerance);
    }
}

fn random_vec(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

fn random_tensor(shape: [usize; 4], rng: &mut SeededRng) -> Tensor4 {
    Tensor4::from_fn(shape, |_| rng.normal())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn wavelet_suite(checks: &mut Checks, opts: &VerifyOptions, rng: &mut SeededRng) {
    for fut in &opts.filters {
        let f = &fut.filter;
        for c in wavelet::filter_checks(f, fut.moments, EXACT_TOL) {
            checks.push(format!("filter/{}/{}", f.name, c.name), c.error, EXACT_TOL);
        }
        checks.worst(format!("roundtrip1d/{}/N1..64,J1..3", f.name), EXACT_TOL, || {
            let mut worst: f64 = 0.0;
            for n in 1..=64 {
                let x = random_vec(n, rng);
                for levels in 1..=3 {
                    let back = wavelet::idwt1d(&wavelet::dwt1d(&x, f, levels)?, f)?;
                    worst = worst.max(max_abs_diff(&back, &x));
                }
            }
            Ok(worst)
        });
        checks.worst(format!("roundtrip2d/{}/HW1..16", f.name), EXACT_TOL, || {
            let mut worst: f64 = 0.0;
            for h in 1..=16 {
                for w in 1..=16 {
                    let m = Matrix::from_fn(h, w, |_, _| rng.normal());
                    let back = wavelet::idwt2d(&wavelet::dwt2d(&m, f)?, f)?;
                    worst = worst.max(back.max_abs_diff(&m));
                }
            }
            Ok(worst)
        });
        checks.worst(format!("energy1d/{}", f.name), EXACT_TOL, || {
            let mut worst: f64 = 0.0;
            for n in [7, 32, 63] {
                let x = random_vec(n, rng);
                let p = wavelet::dwt1d(&x, f, 3)?;
                let e: f64 = p.ap.iter().chain(p.details.iter().flatten()).map(|v| v * v).sum();
                let ex: f64 = x.iter().map(|v| v * v).sum();
                worst = worst.max((e - ex).abs() / ex);
            }
            Ok(worst)
        });
    }
}

/// Zero set of quantile pruning by counting: entry `i` is pruned iff at most
/// `k` magnitudes are `<= |c_i|` (the largest magnitudes always survive).
pub fn prune_oracle(c: &[f64], k: usize) -> Vec<bool> {
    let m = c.len();
    let k = k.min(m - 1);
    c.iter()
        .map(|ci| c.iter().filter(|cj| cj.abs() <= ci.abs()).count() <= k)
        .collect()
}

fn dct_suite(checks: &mut Checks, rng: &mut SeededRng) {
    checks.worst("roundtrip1d/N1..64", EXACT_TOL, || {
        let mut worst: f64 = 0.0;
        for n in 1..=64 {
            let x = random_vec(n, rng);
            worst = worst.max(max_abs_diff(&dct::idct_1d(&dct::dct2_1d(&x)?)?, &x));
        }
        Ok(worst)
    });
    checks.worst("parseval1d/N1..64", EXACT_TOL, || {
        let mut worst: f64 = 0.0;
        for n in 1..=64 {
            let x = random_vec(n, rng);
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = dct::dct2_1d(&x)?.iter().map(|v| v * v).sum();
            worst = worst.max((ex - ec).abs() / ex);
        }
        Ok(worst)
    });
    checks.worst("fast-vs-direct/N2..512", EXACT_TOL, || {
        let mut worst: f64 = 0.0;
        for e in 1..=9 {
            let x = random_vec(1 << e, rng);
            worst = worst.max(max_abs_diff(&dct::dct2_1d(&x)?, &dct::dct2_1d_direct(&x)?));
        }
        Ok(worst)
    });
    checks.worst("roundtrip2d/HW1..12", EXACT_TOL, || {
        let mut worst: f64 = 0.0;
        for h in 1..=12 {
            for w in 1..=12 {
                let m = Matrix::from_fn(h, w, |_, _| rng.normal());
                worst = worst.max(dct::idct_2d(&dct::dct2_2d(&m)?)?.max_abs_diff(&m));
            }
        }
        Ok(worst)
    });
    checks.worst("prune-vs-counting-oracle", 0.0, || {
        let mut mismatches = 0usize;
        for _ in 0..200 {
            let m = 1 + rng.below(40);
            // Few distinct levels so ties are common.
            let c: Vec<f64> = (0..m)
                .map(|_| (rng.below(7) as f64 - 3.0) * if rng.bernoulli(0.5) { 1.0 } else { 0.5 })
                .collect();
            let a = rng.below(20);
            let eta = a as f64 / 20.0;
            let k = (a * m).div_ceil(20);
            let keep = dct::prune_keep_mask(&c, eta)?;
            let pruned: Vec<bool> = keep.iter().map(|k| !k).collect();
            let expect = if a == 0 { vec![false; m] } else { prune_oracle(&c, k) };
            if pruned != expect {
                mismatches += 1;
            }
        }
        Ok(mismatches as f64)
    });
    checks.worst("prune-eta0-noop", 0.0, || {
        let c = random_vec(33, rng);
        Ok(max_abs_diff(&dct::prune_quantile(&c, 0.0)?, &c))
    });
}

const SHAPES: [[usize; 4]; 3] = [[1, 1, 8, 8], [2, 3, 16, 16], [1, 4, 7, 9]];

fn dropout_suite(checks: &mut Checks, rng: &mut SeededRng) {
    for v in Variant::ALL {
        let cfg = SpectralDropoutConfig::new(v, 0.0, 0.0);
        checks.worst(format!("p0-identity/{}", v.name()), EXACT_TOL, || {
            let mut worst: f64 = 0.0;
            for shape in SHAPES {
                let x = random_tensor(shape, rng);
                let (y, _) = dropout::forward(&x, &cfg, rng, Mode::Train)?;
                worst = worst.max(y.max_abs_diff(&x));
            }
            Ok(worst)
        });
        let cfg = SpectralDropoutConfig::new(v, 0.4, if v.is_wavelet() { 0.0 } else { 0.2 });
        checks.worst(format!("eval-passthrough/{}", v.name()), 0.0, || {
            let x = random_tensor([2, 3, 16, 16], rng);
            let before = counter::transform_ops();
            let (y, _) = dropout::forward(&x, &cfg, rng, Mode::Eval)?;
            let ops = counter::transform_ops() - before;
            Ok(if y.to_bytes() == x.to_bytes() && ops == 0 { 0.0 } else { 1.0 })
        });
        checks.worst(format!("replay-and-seed/{}", v.name()), 0.0, || {
            let x = random_tensor([2, 3, 16, 16], rng);
            let (y1, rec) = dropout::forward(&x, &cfg, &mut SeededRng::new(77), Mode::Train)?;
            let (y2, _) = dropout::forward(&x, &cfg, &mut SeededRng::new(77), Mode::Train)?;
            let rec2 = MaskRecord::from_bytes(&rec.to_bytes())?;
            let y3 = dropout::replay(&x, &rec2, &cfg)?;
            let same = y1.to_bytes() == y2.to_bytes() && y1.to_bytes() == y3.to_bytes();
            Ok(if same { 0.0 } else { 1.0 })
        });
        if v.is_wavelet() {
            checks.worst(format!("mask-shared/{}", v.name()), EXACT_TOL, || {
                let x = random_tensor([3, 4, 8, 8], rng);
                let (y, rec) = dropout::forward(&x, &cfg, rng, Mode::Train)?;
                let mut worst: f64 = 0.0;
                for b in 0..3 {
                    for c in 0..4 {
                        let one = Tensor4::new([1, 1, 8, 8], x.plane(b, c).to_vec())?;
                        let alone = dropout::replay(&one, &rec, &cfg)?;
                        worst = worst.max(max_abs_diff(alone.data(), y.plane(b, c)));
                    }
                }
                Ok(worst)
            });
        }
        checks.worst(format!("unbiased-4sigma/{}", v.name()), 4.0, || monte_carlo_z(&cfg, 4000, rng));
    }
}

/// Largest elementwise |mean - reference| / (std / sqrt(draws)) over
/// `draws` masked forwards of one fixed input. Entries with zero sample
/// variance must match the reference to 1e-12.
pub fn monte_carlo_z(cfg: &SpectralDropoutConfig, draws: usize, rng: &mut SeededRng) -> Result<f64> {
    let x = random_tensor([1, 2, 8, 8], rng);
    let reference = if cfg.variant.is_wavelet() {
        x.clone()
    } else {
        dropout::sfd_prune_only(&x, cfg)?
    };
    let n = x.len();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..draws {
        let (y, _) = dropout::forward(&x, cfg, rng, Mode::Train)?;
        for ((s, q), v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(y.data()) {
            *s += v;
            *q += v * v;
        }
    }
    let d = draws as f64;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mean = sum[i] / d;
        let var = ((sum_sq[i] / d - mean * mean) * d / (d - 1.0)).max(0.0);
        let se = (var / d).sqrt();
        let diff = (mean - reference.data()[i]).abs();
        let z = if se > 1e-12 {
            diff / se
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    Ok(worst)
}

fn grad_suite(checks: &mut Checks, opts: &VerifyOptions, rng: &mut SeededRng) {
    let mut maps = Vec::new();
    for fut in &opts.filters {
        let f = &fut.filter;
        for n in [1, 5, 16, 33] {
            maps.push(LinearMapHandle::dwt_level(n, f.clone()));
            maps.push(LinearMapHandle::dwt_pyramid(n, f.clone(), 3));
        }
        maps.push(LinearMapHandle::dwt2d(7, 10, f.clone()));
        maps.push(LinearMapHandle::dwt2d(16, 16, f.clone()));
    }
    for n in [1, 6, 16, 31] {
        maps.push(LinearMapHandle::dct1d(n));
    }
    maps.push(LinearMapHandle::dct2d(7, 9));
    let shape = [2, 2, 8, 8];
    let mut fd_cases = Vec::new();
    for v in Variant::ALL {
        let cfg = SpectralDropoutConfig::new(v, 0.3, if v.is_wavelet() { 0.0 } else { 0.25 });
        let x = random_tensor(shape, rng);
        if let Ok((_, rec)) = dropout::forward(&x, &cfg, rng, Mode::Train) {
            maps.push(LinearMapHandle::dropout(shape, rec.clone(), cfg.clone()));
            fd_cases.push((x, rec, cfg));
        }
    }
    for h in &maps {
        checks.push(format!("adjoint/{}", h.name), adjoint_test(h, rng, 3), EXACT_TOL);
    }
    for (x, rec, cfg) in &fd_cases {
        checks.worst(format!("finite-diff/{}", cfg.variant.name()), FD_TOL, || {
            let ana = half_energy_grad(x, rec, cfg)?;
            let num = finite_diff_grad(
                |t| dropout::replay(t, rec, cfg).map(|y| 0.5 * y.dot(&y)).unwrap_or(f64::NAN),
                x,
                1e-6,
            );
            Ok(max_relative_error(ana.data(), num.data()))
        });
    }
    checks.worst("finite-diff/toy-net-layers", FD_TOL, || {
        let net = ToyNet::new(&ToyNetSpec::default(), [1, 16, 16], crate::data::CLASSES, rng)?;
        net.self_test(Some(&SpectralDropoutConfig::swd1d(0.3)), rng)
    });
}
