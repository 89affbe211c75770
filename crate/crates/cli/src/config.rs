//! JSON configs for `train`, `sweep` and `bench --ttm`.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use swd_core::train::{
    self, default_band_subsets, BandSubset, RunOptions, RunSpec, SweepTable, DEFAULT_ETA_GRID, DEFAULT_P_GRID,
};
use swd_core::{DatasetSpec, OptimizerSpec, Placement, SpectralDropoutConfig, SyntheticDataset, ToyNetSpec, Variant};

fn default_epochs() -> usize {
    60
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn yes() -> bool {
    true
}

/// Settings shared by `train` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub net: ToyNetSpec,
    /// Absent or null trains without dropout.
    #[serde(default)]
    pub dropout: Option<SpectralDropoutConfig>,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// When false, `epoch_seconds` is written as 0 so reruns produce
    /// identical CSVs.
    #[serde(default = "yes")]
    pub record_timing: bool,
    /// Finite-difference gradient check before each run.
    #[serde(default = "yes")]
    pub self_test: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub insertion_point: usize,
    pub placement: Placement,
}

fn default_p_grid() -> Vec<f64> {
    DEFAULT_P_GRID.to_vec()
}

fn default_eta_grid() -> Vec<f64> {
    DEFAULT_ETA_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    /// Grid over drop rate and pruning rate for one variant.
    Hparams {
        variant: Variant,
        #[serde(default = "default_p_grid")]
        p_grid: Vec<f64>,
        #[serde(default = "default_eta_grid")]
        eta_grid: Vec<f64>,
    },
    /// Band subsets of one base config.
    Bands {
        base: SpectralDropoutConfig,
        #[serde(default = "default_band_subsets")]
        subsets: Vec<BandSubset>,
    },
    /// One dropout config at several insertion sites.
    Positions {
        dropout: SpectralDropoutConfig,
        positions: Vec<Position>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub net: ToyNetSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "yes")]
    pub record_timing: bool,
    #[serde(default = "yes")]
    pub self_test: bool,
    /// Adds no-dropout runs labelled `baseline`.
    #[serde(default = "yes")]
    pub include_baseline: bool,
    pub sweep: SweepSpec,
}

/// Reads a JSON file; errors name the offending field path.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        anyhow::anyhow!("{}: at '{field}': {}", path.display(), e.inner())
    })?;
    de.end().with_context(|| format!("{}: trailing characters", path.display()))?;
    Ok(value)
}

fn check_common(dataset: &DatasetSpec, net: &ToyNetSpec, opt: &OptimizerSpec, seeds: &[u64]) -> Result<()> {
    dataset.validate().context("dataset")?;
    net.validate().context("net")?;
    opt.validate().context("optimizer")?;
    ensure!(!seeds.is_empty(), "seeds: need at least one seed");
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(&self.dataset, &self.net, &self.optimizer, &self.seeds)?;
        if let Some(d) = &self.dropout {
            d.validate().context("dropout")?;
        }
        Ok(())
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            record_timing: self.record_timing,
            self_test: self.self_test,
        }
    }

    pub fn label(&self) -> String {
        match &self.dropout {
            None => "baseline".into(),
            Some(d) if d.variant.is_wavelet() => format!("{},p={}", d.variant.name(), d.p),
            Some(d) => format!("{},p={},eta={}", d.variant.name(), d.p, d.eta),
        }
    }

    pub fn run(&self) -> Result<SweepTable> {
        self.validate()?;
        let data = SyntheticDataset::generate(&self.dataset)?;
        let runs: Vec<RunSpec> = self
            .seeds
            .iter()
            .map(|&seed| RunSpec {
                label: self.label(),
                net: self.net.clone(),
                dropout: self.dropout.clone(),
                seed,
            })
            .collect();
        Ok(train::run_sweep(&runs, &data, &self.optimizer, self.epochs, self.options())?)
    }
}

impl SweepConfig {
    pub fn run(&self) -> Result<SweepTable> {
        check_common(&self.dataset, &self.net, &self.optimizer, &self.seeds)?;
        let data = SyntheticDataset::generate(&self.dataset)?;
        let options = RunOptions {
            record_timing: self.record_timing,
            self_test: self.self_test,
        };
        let (net, opt, epochs, seeds) = (&self.net, &self.optimizer, self.epochs, &self.seeds[..]);
        let mut table = match &self.sweep {
            SweepSpec::Hparams {
                variant,
                p_grid,
                eta_grid,
            } => {
                ensure!(!p_grid.is_empty(), "sweep.p_grid: empty grid");
                ensure!(variant.is_wavelet() || !eta_grid.is_empty(), "sweep.eta_grid: empty grid");
                train::sweep_hparams(net, &data, *variant, p_grid, eta_grid, seeds, opt, epochs, options)?
            }
            SweepSpec::Bands { base, subsets } => {
                ensure!(!subsets.is_empty(), "sweep.subsets: no subsets");
                train::sweep_bands(net, &data, base, subsets, seeds, opt, epochs, options)?
            }
            SweepSpec::Positions { dropout, positions } => {
                ensure!(!positions.is_empty(), "sweep.positions: no positions");
                let sites: Vec<_> = positions.iter().map(|p| (p.insertion_point, p.placement)).collect();
                train::sweep_positions(net, &data, dropout, &sites, seeds, opt, epochs, options)?
            }
        };
        if self.include_baseline {
            let base = train::run_sweep(&train::baseline_runs(net, seeds), &data, opt, epochs, options)?;
            table.rows.splice(0..0, base.rows);
        }
        Ok(table)
    }
}

/// File-name-safe form of a run label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '.' | '-' | '+' => c,
            _ => '_',
        })
        .collect()
}

/// Writes one metrics CSV per run under `out/runs`, plus `runs.csv` and
/// `summary.csv`. Returns the per-run paths.
pub fn write_table(table: &SweepTable, out: &Path) -> Result<Vec<PathBuf>> {
    let runs_dir = out.join("runs");
    std::fs::create_dir_all(&runs_dir).with_context(|| format!("cannot create {}", runs_dir.display()))?;
    let mut paths = Vec::new();
    for row in &table.rows {
        let path = runs_dir.join(format!("{}_seed{}.csv", slug(&row.run.label), row.run.seed));
        std::fs::write(&path, row.metrics.to_csv()).with_context(|| format!("cannot write {}", path.display()))?;
        paths.push(path);
    }
    for (name, body) in [("runs.csv", table.to_csv()), ("summary.csv", table.summary_csv())] {
        let path = out.join(name);
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(paths)
}
