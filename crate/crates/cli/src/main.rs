//! `swd`: wavelet decomposition, seeded spectral dropout, verification
//! suites, timing and toy-net training from the command line.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage, config or
//! input error.

mod apply;
mod bands;
mod config;
mod pgm;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};

use swd_bench::{BenchOp, TtmArm};
use swd_core::verify::{self, Suite, VerifyOptions};
use swd_core::{SpectralDropoutConfig, SyntheticDataset, Variant, WaveletKind};

use bands::DecompMode;
use config::{SweepConfig, SweepSpec, TrainConfig};
use pgm::PgmImage;

#[derive(Parser)]
#[command(name = "swd", version, about = "Spectral wavelet dropout toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a PGM image into wavelet bands.
    Decompose {
        input: PathBuf,
        #[arg(long, default_value = "db3")]
        wavelet: WaveletKind,
        #[arg(long, value_enum, default_value = "2d")]
        mode: DecompMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild an image from a `decompose` output directory.
    Reconstruct {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write plain (P2) instead of raw (P5).
        #[arg(long)]
        plain: bool,
    },
    /// Apply one training-mode dropout pass to a PGM image.
    Dropout {
        input: PathBuf,
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "db3")]
        wavelet: WaveletKind,
        /// Band mask instead of a random draw: one 0/1 per band, `1` keeps.
        /// Order is LH,HL,HH for swd2d and L1,L2,L3 for swd1d.
        #[arg(long)]
        force_mask: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in property suites.
    Verify {
        /// wavelet, dct, dropout, grad or all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Check a db3 filter with this tap perturbed (mutation smoke test).
        #[arg(long, requires = "perturb_delta")]
        perturb_tap: Option<usize>,
        #[arg(long, requires = "perturb_tap", allow_negative_numbers = true)]
        perturb_delta: Option<f64>,
    },
    /// Time an op across sizes, or compare epoch times of two train configs.
    Bench {
        #[arg(long, required_unless_present = "ttm", conflicts_with = "ttm")]
        op: Option<BenchOp>,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 9)]
        repeats: usize,
        /// CSV for `--op`, JSON for `--ttm`; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Two-column data file for plotting (`--op` only).
        #[arg(long, conflicts_with = "ttm")]
        gnuplot: Option<PathBuf>,
        /// Baseline and arm train configs.
        #[arg(long, num_args = 2, value_names = ["BASE", "ARM"])]
        ttm: Option<Vec<PathBuf>>,
    },
    /// Train the toy net from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of training runs from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn verify_cmd(suite: &str, json: Option<&Path>, perturb: Option<(usize, f64)>) -> Result<u8> {
    let suites = Suite::parse_selection(suite)?;
    let opts = match perturb {
        Some((tap, delta)) => {
            ensure!(tap < 6, "--perturb-tap {tap} out of range for db3 (0..6)");
            VerifyOptions::with_perturbed_db3(tap, delta)
        }
        None => VerifyOptions::default(),
    };
    let report = verify::run(&suites, &opts);
    print!("{}", report.to_text());
    if let Some(path) = json {
        write_file(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn ttm_cmd(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let base: TrainConfig = config::load(&paths[0])?;
    let arm: TrainConfig = config::load(&paths[1])?;
    base.validate()?;
    arm.validate()?;
    ensure!(
        base.dataset == arm.dataset
            && base.net == arm.net
            && base.optimizer == arm.optimizer
            && base.epochs == arm.epochs
            && base.seeds == arm.seeds,
        "--ttm configs must agree on dataset, net, optimizer, epochs and seeds"
    );
    let data = SyntheticDataset::generate(&base.dataset)?;
    let arm_of = |c: &TrainConfig| TtmArm {
        label: c.label(),
        dropout: c.dropout.clone(),
    };
    let report = swd_bench::ttm(
        &base.net,
        &data,
        &arm_of(&base),
        &arm_of(&arm),
        &base.optimizer,
        base.epochs,
        &base.seeds,
    )?;
    eprintln!("ttm {} vs {}: {:.3}x", report.arm, report.baseline, report.ratio);
    emit(out, &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Decompose {
            input,
            wavelet,
            mode,
            out,
        } => {
            let m = bands::decompose(&input, wavelet, mode, &out)?;
            for b in &m.bands {
                println!("{:<3} {:>4}x{:<4} energy {:.6}", b.name, b.rows, b.cols, b.energy);
            }
        }
        Command::Reconstruct { dir, out, plain } => {
            let img = bands::reconstruct(&dir)?;
            if plain {
                write_file(&out, img.to_plain())?;
            } else {
                img.write(&out)?;
            }
        }
        Command::Dropout {
            input,
            variant,
            p,
            eta,
            seed,
            wavelet,
            force_mask,
            out,
        } => {
            let cfg = SpectralDropoutConfig::new(variant, p, eta).with_wavelet(wavelet);
            cfg.validate()?;
            let forced = force_mask.map(|s| apply::parse_mask(&s, &cfg)).transpose()?;
            let img = PgmImage::read(&input)?;
            let result = apply::apply(&img, &cfg, seed, forced)?;
            apply::write(&result, &out)?;
            println!("{}", serde_json::to_string(&result.summary)?);
        }
        Command::Verify {
            suite,
            json,
            perturb_tap,
            perturb_delta,
        } => {
            return verify_cmd(&suite, json.as_deref(), perturb_tap.zip(perturb_delta));
        }
        Command::Bench {
            op,
            sizes,
            repeats,
            out,
            gnuplot,
            ttm,
        } => {
            if let Some(paths) = ttm {
                ttm_cmd(&paths, out.as_deref())?;
            } else {
                let Some(op) = op else { bail!("--op or --ttm is required") };
                let report = swd_bench::time_op(op, &sizes, repeats)?;
                eprintln!(
                    "{} slope {:.3} ci [{:.3}, {:.3}]",
                    report.op, report.slope, report.slope_ci[0], report.slope_ci[1]
                );
                emit(out.as_deref(), &report.to_csv())?;
                if let Some(path) = gnuplot {
                    write_file(&path, report.to_gnuplot())?;
                }
            }
        }
        Command::Train { config, out } => {
            let cfg: TrainConfig = config::load(&config)?;
            let table = cfg.run()?;
            config::write_table(&table, &out)?;
            print!("{}", table.format_summary());
        }
        Command::Sweep { config, out } => {
            let cfg: SweepConfig = config::load(&config)?;
            let table = cfg.run()?;
            config::write_table(&table, &out)?;
            print!("{}", table.format_summary());
            if matches!(cfg.sweep, SweepSpec::Hparams { .. }) {
                let best = table
                    .summary()
                    .into_iter()
                    .filter(|r| r.label != "baseline")
                    .max_by(|a, b| a.mean_test_acc.total_cmp(&b.mean_test_acc))
                    .context("sweep produced no runs")?;
                println!("best: {} (mean test acc {:.4})", best.label, best.mean_test_acc);
                write_file(&out.join("best.json"), serde_json::to_string_pretty(&best)? + "\n")?;
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
