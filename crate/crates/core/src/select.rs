//! Feature ranking by averaged Pearson/Spearman correlation with the capacity
//! share, threshold-based selection, and a cross-validated threshold sweep.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbtree::{kfold_grid_search, FoldStrategy, GbtError, Hyperparams, TrainingMatrix};
use crate::panel::{feature_availability, PanelDataset, PanelError};
use crate::stats::{avg_correlation, linfit_r2, pearson, spearman, PairedSeries, StatsError};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("dataset must be normalized before ranking")]
    NotNormalized,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error(
        "no feature reaches correlation {corr_threshold} with availability {availability_threshold}; try a lower threshold"
    )]
    NoFeaturesSelected {
        corr_threshold: f64,
        availability_threshold: f64,
    },
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("every threshold in the grid selects no features")]
    AllSelectionsEmpty,
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Gbt(#[from] GbtError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub feature: String,
    pub pearson: f64,
    pub spearman: f64,
    pub linfit_r2: f64,
    pub avg_corr: f64,
    pub availability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedFeature {
    pub feature: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// Sorted by ranking score descending, ties by name.
    pub rows: Vec<RankingRow>,
    /// Features whose statistics are undefined (too few pairs, zero variance).
    pub excluded: Vec<ExcludedFeature>,
    /// Rank and select on |avg_corr| instead of the signed value.
    pub absolute: bool,
}

impl FeatureRanking {
    pub fn score(&self, row: &RankingRow) -> f64 {
        if self.absolute {
            row.avg_corr.abs()
        } else {
            row.avg_corr
        }
    }
}

fn row_stats(x: &[Option<f64>], y: &[Option<f64>]) -> Result<(f64, f64, f64, f64), StatsError> {
    let s = PairedSeries::from_options(x, y)?;
    Ok((pearson(&s)?, spearman(&s)?, linfit_r2(&s)?, avg_correlation(&s)?))
}

/// Correlation statistics of every feature against the capacity share,
/// pooled over all region-years.
pub fn rank_features(ds: &PanelDataset, absolute: bool) -> Result<FeatureRanking, SelectError> {
    if !ds.is_normalized() {
        return Err(SelectError::NotNormalized);
    }
    let target = ds.capacity_shares();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for spec in ds.feature_specs() {
        let column = ds.column(&spec.name)?;
        match row_stats(&column, &target) {
            Ok((p, s, r2, avg)) => rows.push(RankingRow {
                feature: spec.name.clone(),
                pearson: p,
                spearman: s,
                linfit_r2: r2,
                avg_corr: avg,
                availability: feature_availability(ds, &spec.name)?,
            }),
            Err(e) => excluded.push(ExcludedFeature {
                feature: spec.name.clone(),
                reason: e.to_string(),
            }),
        }
    }
    let mut ranking = FeatureRanking {
        rows,
        excluded,
        absolute,
    };
    let mut rows = std::mem::take(&mut ranking.rows);
    rows.sort_by(|a, b| {
        ranking
            .score(b)
            .total_cmp(&ranking.score(a))
            .then_with(|| a.feature.cmp(&b.feature))
    });
    ranking.rows = rows;
    Ok(ranking)
}

/// Features meeting both thresholds, in rank order.
pub fn select_features(
    ranking: &FeatureRanking,
    corr_threshold: f64,
    availability_threshold: f64,
) -> Result<Vec<String>, SelectError> {
    for t in [corr_threshold, availability_threshold] {
        if !(0.0..=1.0).contains(&t) {
            return Err(SelectError::InvalidThreshold(t));
        }
    }
    let picked: Vec<String> = ranking
        .rows
        .iter()
        .filter(|r| ranking.score(r) >= corr_threshold && r.availability >= availability_threshold)
        .map(|r| r.feature.clone())
        .collect();
    if picked.is_empty() {
        Err(SelectError::NoFeaturesSelected {
            corr_threshold,
            availability_threshold,
        })
    } else {
        Ok(picked)
    }
}

/// Scores a candidate feature set by cross-validated RMSE (lower is better).
pub trait CvEvaluator: Sync {
    fn cv_rmse(&self, ds: &PanelDataset, features: &[String]) -> Result<f64, SelectError>;
}

/// k-fold CV of the tree learner; with several parameter sets the best mean
/// RMSE of the grid is reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtCvEvaluator {
    pub grid: Vec<Hyperparams>,
    pub k: usize,
    pub seed: u64,
    pub strategy: FoldStrategy,
}

impl CvEvaluator for GbtCvEvaluator {
    fn cv_rmse(&self, ds: &PanelDataset, features: &[String]) -> Result<f64, SelectError> {
        let matrix = TrainingMatrix::from_panel(ds, features)?;
        let result = kfold_grid_search(&matrix, &self.grid, self.k, self.seed, self.strategy)?;
        Ok(result.results[result.best_index].mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub threshold: f64,
    pub features: Vec<String>,
    /// `None` when the threshold selects nothing.
    pub cv_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_threshold: f64,
    pub best_features: Vec<String>,
    pub entries: Vec<SweepEntry>,
}

/// Evaluates each correlation threshold of `grid` and returns the one with
/// the lowest CV RMSE (first in grid order on ties). Identical feature sets
/// are evaluated once.
pub fn sweep_thresholds(
    ds: &PanelDataset,
    ranking: &FeatureRanking,
    grid: &[f64],
    availability_threshold: f64,
    evaluator: &dyn CvEvaluator,
) -> Result<SweepResult, SelectError> {
    if grid.is_empty() {
        return Err(SelectError::EmptyGrid);
    }
    let mut selections = Vec::with_capacity(grid.len());
    for &t in grid {
        match select_features(ranking, t, availability_threshold) {
            Ok(f) => selections.push(f),
            Err(SelectError::NoFeaturesSelected { .. }) => selections.push(Vec::new()),
            Err(e) => return Err(e),
        }
    }
    let mut distinct: Vec<&Vec<String>> = selections.iter().filter(|s| !s.is_empty()).collect();
    distinct.sort();
    distinct.dedup();
    if distinct.is_empty() {
        return Err(SelectError::AllSelectionsEmpty);
    }
    let scores = distinct
        .par_iter()
        .map(|f| evaluator.cv_rmse(ds, f))
        .collect::<Result<Vec<_>, _>>()?;
    let by_set: BTreeMap<&Vec<String>, f64> = distinct.into_iter().zip(scores).collect();
    let entries: Vec<SweepEntry> = grid
        .iter()
        .zip(&selections)
        .map(|(&threshold, features)| SweepEntry {
            threshold,
            cv_rmse: by_set.get(features).copied(),
            features: features.clone(),
        })
        .collect();
    let best = entries
        .iter()
        .filter(|e| e.cv_rmse.is_some())
        .fold(None::<&SweepEntry>, |acc, e| match acc {
            Some(b) if b.cv_rmse.unwrap() <= e.cv_rmse.unwrap() => Some(b),
            _ => Some(e),
        })
        .expect("at least one non-empty selection");
    Ok(SweepResult {
        best_threshold: best.threshold,
        best_features: best.features.clone(),
        entries,
    })
}

/// Ranking table: rank, feature, Pearson, Spearman, average, linear-fit R²,
/// availability (%). Excluded features follow with empty statistics.
pub fn write_ranking_csv<W: Write>(ranking: &FeatureRanking, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank",
        "feature",
        "pearson",
        "spearman",
        "avg_corr",
        "linfit_r2",
        "availability_pct",
        "note",
    ])?;
    for (i, r) in ranking.rows.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.feature.clone(),
            r.pearson.to_string(),
            r.spearman.to_string(),
            r.avg_corr.to_string(),
            r.linfit_r2.to_string(),
            (r.availability * 100.0).to_string(),
            String::new(),
        ])?;
    }
    for e in &ranking.excluded {
        w.write_record(["", &e.feature, "", "", "", "", "", &e.reason])?;
    }
    w.flush()?;
    Ok(())
}
