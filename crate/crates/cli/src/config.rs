//! Run configuration. Values come from command-line flags, then the JSON
//! config file, then built-in defaults; the first one set wins. The output
//! directory additionally falls back to `SOLARCAP_OUT_DIR` before the
//! default `solarcap-out`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use solarcap_core::apps::AllocationPolicy;
use solarcap_core::gbtree::{default_grid, FoldStrategy, Hyperparams};
use solarcap_core::panel::SynthConfig;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "SOLARCAP_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "solarcap-out";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    /// 72 points: depth {3,4,6} × rate {0.05,0.1,0.3} × rounds {100,300} ×
    /// min child weight {1,5} × subsample {0.8,1}.
    #[default]
    Default,
    /// 4 points: depth {3,5} × rounds {100,200}, rate 0.1.
    Quick,
}

impl GridPreset {
    pub fn grid(self, seed: u64) -> Vec<Hyperparams> {
        match self {
            GridPreset::Default => default_grid(seed),
            GridPreset::Quick => {
                let mut grid = Vec::new();
                for max_depth in [3, 5] {
                    for n_rounds in [100, 200] {
                        grid.push(Hyperparams {
                            n_rounds,
                            max_depth,
                            seed,
                            ..Default::default()
                        });
                    }
                }
                grid
            }
        }
    }
}

/// Contents of the JSON config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub panel: Option<PathBuf>,
    pub national: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub train_years: Option<Vec<i32>>,
    pub test_years: Option<Vec<i32>>,
    pub features: Option<Vec<String>>,
    pub threshold_grid: Option<Vec<f64>>,
    pub availability_threshold: Option<f64>,
    /// Explicit grid; overrides `grid_preset`.
    pub hyperparameter_grid: Option<Vec<Hyperparams>>,
    pub grid_preset: Option<GridPreset>,
    pub folds: Option<usize>,
    pub grouped_folds: Option<bool>,
    pub absolute_corr: Option<bool>,
    pub allocation_policy: Option<AllocationPolicy>,
    pub years: Option<Vec<i32>>,
    pub regions: Option<Vec<String>>,
    pub clusters: Option<usize>,
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
        serde_json::from_str(&text).map_err(|e| CliError::failed(format!("{}: {e}", path.display())))
    }

    /// Field-wise merge: values in `self` win over `other`.
    pub fn or(self, other: RunConfig) -> RunConfig {
        RunConfig {
            panel: self.panel.or(other.panel),
            national: self.national.or(other.national),
            schema: self.schema.or(other.schema),
            model: self.model.or(other.model),
            out_dir: self.out_dir.or(other.out_dir),
            seed: self.seed.or(other.seed),
            workers: self.workers.or(other.workers),
            train_years: self.train_years.or(other.train_years),
            test_years: self.test_years.or(other.test_years),
            features: self.features.or(other.features),
            threshold_grid: self.threshold_grid.or(other.threshold_grid),
            availability_threshold: self.availability_threshold.or(other.availability_threshold),
            hyperparameter_grid: self.hyperparameter_grid.or(other.hyperparameter_grid),
            grid_preset: self.grid_preset.or(other.grid_preset),
            folds: self.folds.or(other.folds),
            grouped_folds: self.grouped_folds.or(other.grouped_folds),
            absolute_corr: self.absolute_corr.or(other.absolute_corr),
            allocation_policy: self.allocation_policy.or(other.allocation_policy),
            years: self.years.or(other.years),
            regions: self.regions.or(other.regions),
            clusters: self.clusters.or(other.clusters),
            synth: self.synth.or(other.synth),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn input(&self, value: &Option<PathBuf>, default_name: &str) -> PathBuf {
        value.clone().unwrap_or_else(|| self.out_dir().join(default_name))
    }

    pub fn panel_path(&self) -> PathBuf {
        self.input(&self.panel, "panel.csv")
    }

    pub fn national_path(&self) -> PathBuf {
        self.input(&self.national, "national.csv")
    }

    pub fn schema_path(&self) -> PathBuf {
        self.input(&self.schema, "schema.json")
    }

    pub fn model_path(&self) -> PathBuf {
        self.input(&self.model, "model.json")
    }

    pub fn require_seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::missing(format!("{command} needs a seed (--seed or \"seed\" in the config)")))
    }

    pub fn grid(&self, seed: u64) -> Vec<Hyperparams> {
        self.hyperparameter_grid
            .clone()
            .unwrap_or_else(|| self.grid_preset.unwrap_or_default().grid(seed))
    }

    pub fn folds(&self) -> usize {
        self.folds.unwrap_or(10)
    }

    pub fn fold_strategy(&self) -> FoldStrategy {
        if self.grouped_folds.unwrap_or(false) {
            FoldStrategy::GroupedByYear
        } else {
            FoldStrategy::Random
        }
    }

    pub fn threshold_grid(&self) -> Vec<f64> {
        self.threshold_grid
            .clone()
            .unwrap_or_else(|| (0..10).map(|i| i as f64 / 10.0).collect())
    }

    pub fn availability_threshold(&self) -> f64 {
        self.availability_threshold.unwrap_or(0.0)
    }

    /// Train and test years; by default the last three years are held out.
    pub fn split_years(&self, available: &BTreeSet<i32>) -> (BTreeSet<i32>, BTreeSet<i32>) {
        match (&self.train_years, &self.test_years) {
            (Some(tr), Some(te)) => (tr.iter().copied().collect(), te.iter().copied().collect()),
            (Some(tr), None) => {
                let tr: BTreeSet<i32> = tr.iter().copied().collect();
                let te = available.difference(&tr).copied().collect();
                (tr, te)
            }
            (None, Some(te)) => {
                let te: BTreeSet<i32> = te.iter().copied().collect();
                (available.difference(&te).copied().collect(), te)
            }
            (None, None) => {
                let cut = available.len().saturating_sub(3).max(1);
                let train = available.iter().take(cut).copied().collect();
                let test = available.iter().skip(cut).copied().collect();
                (train, test)
            }
        }
    }
}

/// Parses `2010-2020` or `2010`.
pub fn parse_year_range(s: &str) -> Result<Vec<i32>, String> {
    let parse = |t: &str| t.trim().parse::<i32>().map_err(|e| format!("bad year {t:?}: {e}"));
    match s.split_once('-') {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return Err(format!("empty year range {s}"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![parse(s)?]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let flags = RunConfig {
            seed: Some(1),
            ..Default::default()
        };
        let file = RunConfig {
            seed: Some(2),
            folds: Some(5),
            ..Default::default()
        };
        let merged = flags.or(file);
        assert_eq!(merged.seed, Some(1));
        assert_eq!(merged.folds(), 5);
        assert_eq!(RunConfig::default().folds(), 10);
    }

    #[test]
    fn default_split_holds_out_last_three() {
        let years: BTreeSet<i32> = (2010..=2023).collect();
        let (tr, te) = RunConfig::default().split_years(&years);
        assert_eq!(tr, (2010..=2020).collect());
        assert_eq!(te, (2021..=2023).collect());
    }

    #[test]
    fn year_ranges() {
        assert_eq!(parse_year_range("2010-2012").unwrap(), [2010, 2011, 2012]);
        assert_eq!(parse_year_range("2015").unwrap(), [2015]);
        assert!(parse_year_range("2012-2010").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"grid_preset": "quick", "allocation_policy": "full_rescale"}"#).unwrap();
        assert_eq!(c.grid(0).len(), 4);
        assert_eq!(c.allocation_policy, Some(AllocationPolicy::FullRescale));
    }
}
