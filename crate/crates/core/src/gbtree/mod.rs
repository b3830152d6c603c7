//! Second-order gradient-boosted regression trees.
//!
//! Squared-error objective (`g = prediction − target`, `h = 1`), exact greedy
//! split enumeration over sorted unique values, learned default directions
//! for missing values, shrinkage folded into the stored leaf weights.

mod cv;
mod io;
mod tree;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PanelDataset, PanelError};

pub use cv::{
    assign_folds, cross_validate, default_grid, kfold_grid_search, CvResult, FoldStrategy,
    GridSearchResult,
};
pub use io::{load_model, read_model, save_model, write_cv_report, write_model, MODEL_SCHEMA_VERSION};
pub use tree::{fit_tree, TreeNode};

#[derive(Debug, Error)]
pub enum GbtError {
    #[error("training matrix has no rows")]
    EmptyMatrix,
    #[error("NaN in feature {feature} at row {row}; use a missing value instead")]
    NanFeature { feature: String, row: usize },
    #[error("non-finite target at row {0}")]
    NonFiniteTarget(usize),
    #[error("target {value} at row {row} is not a percentage in [0, 100]")]
    TargetOutOfRange { row: usize, value: f64 },
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid hyperparameter: {0}")]
    InvalidParam(String),
    #[error("feature {0:?} absent from input")]
    MissingFeature(String),
    #[error("{k} folds requested but only {available} {unit} available")]
    TooManyFolds {
        k: usize,
        available: usize,
        unit: &'static str,
    },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("row group labels (years) required for grouped folds")]
    MissingGroups,
    #[error("model schema version {found:?}, expected {expected}")]
    SchemaVersion { found: Option<u64>, expected: u64 },
    #[error("dataset must be normalized before building a training matrix")]
    NotNormalized,
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 4,
            min_child_weight: 1.0,
            reg_lambda: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), GbtError> {
        let bad = |m: &str| Err(GbtError::InvalidParam(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1");
        }
        if !(self.min_child_weight >= 0.0) || !self.min_child_weight.is_finite() {
            return bad("min_child_weight must be >= 0");
        }
        if !(self.reg_lambda >= 0.0) || !self.reg_lambda.is_finite() {
            return bad("reg_lambda must be >= 0");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be >= 0");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        Ok(())
    }
}

/// Identifies the region-year a matrix row came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowKey {
    pub region: String,
    pub year: i32,
}

/// Column-major feature matrix with a regression target. `None` marks a
/// missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    feature_names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
    target: Vec<f64>,
    keys: Option<Vec<RowKey>>,
}

impl TrainingMatrix {
    pub fn new(
        feature_names: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
        target: Vec<f64>,
    ) -> Result<Self, GbtError> {
        if columns.len() != feature_names.len() {
            return Err(GbtError::LengthMismatch {
                what: "columns",
                expected: feature_names.len(),
                got: columns.len(),
            });
        }
        for (name, col) in feature_names.iter().zip(&columns) {
            if col.len() != target.len() {
                return Err(GbtError::LengthMismatch {
                    what: "column",
                    expected: target.len(),
                    got: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| v.is_some_and(f64::is_nan)) {
                return Err(GbtError::NanFeature {
                    feature: name.clone(),
                    row,
                });
            }
        }
        if let Some(row) = target.iter().position(|t| !t.is_finite()) {
            return Err(GbtError::NonFiniteTarget(row));
        }
        Ok(Self {
            feature_names,
            columns,
            target,
            keys: None,
        })
    }

    /// Builds a matrix from row-major values.
    pub fn from_rows(
        feature_names: Vec<String>,
        rows: &[Vec<Option<f64>>],
        target: Vec<f64>,
    ) -> Result<Self, GbtError> {
        let mut columns = vec![Vec::with_capacity(rows.len()); feature_names.len()];
        for row in rows {
            if row.len() != feature_names.len() {
                return Err(GbtError::LengthMismatch {
                    what: "row",
                    expected: feature_names.len(),
                    got: row.len(),
                });
            }
            for (c, v) in columns.iter_mut().zip(row) {
                c.push(*v);
            }
        }
        Self::new(feature_names, columns, target)
    }

    /// Rows of a normalized panel that have a capacity share, restricted to
    /// `features`. The target is the capacity share in percent.
    pub fn from_panel(ds: &PanelDataset, features: &[String]) -> Result<Self, GbtError> {
        if !ds.is_normalized() {
            return Err(GbtError::NotNormalized);
        }
        let idx = features
            .iter()
            .map(|f| ds.feature_index(f))
            .collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<_> = ds
            .records()
            .iter()
            .filter(|r| r.capacity_share.is_some())
            .collect();
        let columns = idx
            .iter()
            .map(|&j| rows.iter().map(|r| r.features[j]).collect())
            .collect();
        let target: Vec<f64> = rows.iter().map(|r| r.capacity_share.unwrap()).collect();
        if let Some((row, &value)) = target
            .iter()
            .enumerate()
            .find(|(_, t)| !(0.0..=100.0).contains(*t))
        {
            return Err(GbtError::TargetOutOfRange { row, value });
        }
        let keys = rows
            .iter()
            .map(|r| RowKey {
                region: r.region.to_string(),
                year: r.year,
            })
            .collect();
        Ok(Self::new(features.to_vec(), columns, target)?.with_keys(keys))
    }

    pub fn with_keys(mut self, keys: Vec<RowKey>) -> Self {
        assert_eq!(keys.len(), self.target.len(), "one key per row");
        self.keys = Some(keys);
        self
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column(&self, j: usize) -> &[Option<f64>] {
        &self.columns[j]
    }

    pub fn value(&self, row: usize, feature: usize) -> Option<f64> {
        self.columns[feature][row]
    }

    pub fn row(&self, i: usize) -> Vec<Option<f64>> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn keys(&self) -> Option<&[RowKey]> {
        self.keys.as_deref()
    }

    pub fn subset(&self, rows: &[usize]) -> TrainingMatrix {
        TrainingMatrix {
            feature_names: self.feature_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
            keys: self
                .keys
                .as_ref()
                .map(|k| rows.iter().map(|&i| k[i].clone()).collect()),
        }
    }
}

/// Feature values of one observation keyed by feature name.
pub type FeatureRow = BTreeMap<String, Option<f64>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub train_years: Vec<i32>,
    pub cv_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GBTModel {
    pub base_score: f64,
    /// Leaf weights are stored after shrinkage by the learning rate.
    pub trees: Vec<TreeNode>,
    pub feature_names: Vec<String>,
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub training_meta: TrainingMeta,
}

/// Mean that is exact for constant input.
fn stable_mean(v: &[f64]) -> f64 {
    let anchor = v[0];
    anchor + v.iter().map(|x| x - anchor).sum::<f64>() / v.len() as f64
}

/// Fits `n_rounds` trees sequentially on squared-error gradients.
pub fn train(matrix: &TrainingMatrix, params: &Hyperparams) -> Result<GBTModel, GbtError> {
    params.validate()?;
    let n = matrix.n_rows();
    if n == 0 {
        return Err(GbtError::EmptyMatrix);
    }
    let base_score = stable_mean(matrix.target());
    let mut preds = vec![base_score; n];
    let hess = vec![1.0; n];
    let builder = tree::TreeBuilder::new(matrix, params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let all_rows: Vec<usize> = (0..n).collect();
    let sample_size = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let grad: Vec<f64> = preds.iter().zip(matrix.target()).map(|(p, y)| p - y).collect();
        let rows = if sample_size < n {
            let mut s = rand::seq::index::sample(&mut rng, n, sample_size).into_vec();
            s.sort_unstable();
            s
        } else {
            all_rows.clone()
        };
        let tree = builder.build(&grad, &hess, &rows);
        for (i, p) in preds.iter_mut().enumerate() {
            *p += tree.predict_with(|j| matrix.value(i, j));
        }
        trees.push(tree);
    }
    Ok(GBTModel {
        base_score,
        trees,
        feature_names: matrix.feature_names().to_vec(),
        hyperparams: params.clone(),
        training_meta: TrainingMeta::default(),
    })
}

impl GBTModel {
    /// Prediction for values aligned with `feature_names`.
    pub fn predict_values(&self, values: &[Option<f64>]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| t.predict_with(|j| values[j]))
                .sum::<f64>()
    }

    /// Predicts name-keyed rows. A model feature absent from a row is an
    /// error; a present `None` is a missing value.
    pub fn predict(&self, rows: &[FeatureRow]) -> Result<Vec<f64>, GbtError> {
        rows.iter()
            .map(|row| Ok(self.predict_values(&self.align_row(row)?)))
            .collect()
    }

    pub fn align_row(&self, row: &FeatureRow) -> Result<Vec<Option<f64>>, GbtError> {
        self.feature_names
            .iter()
            .map(|f| {
                row.get(f)
                    .copied()
                    .ok_or_else(|| GbtError::MissingFeature(f.clone()))
            })
            .collect()
    }

    /// Maps model features onto the columns of `matrix` by name.
    pub fn column_map(&self, matrix: &TrainingMatrix) -> Result<Vec<usize>, GbtError> {
        self.feature_names
            .iter()
            .map(|f| {
                matrix
                    .feature_names()
                    .iter()
                    .position(|m| m == f)
                    .ok_or_else(|| GbtError::MissingFeature(f.clone()))
            })
            .collect()
    }

    pub fn predict_matrix(&self, matrix: &TrainingMatrix) -> Result<Vec<f64>, GbtError> {
        let map = self.column_map(matrix)?;
        Ok((0..matrix.n_rows())
            .map(|i| {
                self.base_score
                    + self
                        .trees
                        .iter()
                        .map(|t| t.predict_with(|j| matrix.value(i, map[j])))
                        .sum::<f64>()
            })
            .collect())
    }

    /// Training-set RMSE after 0, 1, …, n trees.
    pub fn staged_rmse(&self, matrix: &TrainingMatrix) -> Result<Vec<f64>, GbtError> {
        let map = self.column_map(matrix)?;
        let n = matrix.n_rows();
        let mut preds = vec![self.base_score; n];
        let rmse = |p: &[f64]| {
            let sse: f64 = p
                .iter()
                .zip(matrix.target())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            (sse / n as f64).sqrt()
        };
        let mut out = vec![rmse(&preds)];
        for t in &self.trees {
            for (i, p) in preds.iter_mut().enumerate() {
                *p += t.predict_with(|j| matrix.value(i, map[j]));
            }
            out.push(rmse(&preds));
        }
        Ok(out)
    }

    /// Cover-weighted mean prediction, E[f(x)] under the training covers.
    pub fn expected_value(&self) -> f64 {
        self.base_score + self.trees.iter().map(TreeNode::expected_value).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(xs: &[f64], ys: &[f64]) -> TrainingMatrix {
        TrainingMatrix::new(
            vec!["x".into()],
            vec![xs.iter().map(|v| Some(*v)).collect()],
            ys.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn constant_target_is_exact() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.7).collect();
        let m = matrix(&xs, &[0.1; 30]);
        let model = train(&m, &Hyperparams::default()).unwrap();
        for v in [-5.0, 0.0, 3.3, 100.0] {
            assert_eq!(model.predict_values(&[Some(v)]), 0.1);
        }
        assert_eq!(model.predict_values(&[None]), 0.1);
        assert!(model.trees.iter().all(|t| matches!(t, TreeNode::Leaf { .. })));
    }

    #[test]
    fn zero_rounds_is_base_score() {
        let m = matrix(&[1.0, 2.0, 3.0], &[1.0, 2.0, 6.0]);
        let p = Hyperparams {
            n_rounds: 0,
            ..Default::default()
        };
        let model = train(&m, &p).unwrap();
        assert!(model.trees.is_empty());
        assert_eq!(model.predict_values(&[Some(2.0)]), 3.0);
    }

    #[test]
    fn unsplittable_rows_stay_at_base() {
        // identical x: every tree is a root leaf with G = 0 since base = mean
        let m = matrix(&[1.0; 4], &[2.0, 4.0, 6.0, 8.0]);
        let p = Hyperparams {
            n_rounds: 3,
            learning_rate: 0.5,
            reg_lambda: 4.0,
            ..Default::default()
        };
        let model = train(&m, &p).unwrap();
        assert_eq!(model.predict_values(&[Some(1.0)]), 5.0);
    }

    #[test]
    fn nan_feature_rejected() {
        let err = TrainingMatrix::new(vec!["x".into()], vec![vec![Some(f64::NAN)]], vec![1.0]);
        assert!(matches!(err, Err(GbtError::NanFeature { row: 0, .. })));
    }

    #[test]
    fn empty_matrix_rejected() {
        let m = matrix(&[], &[]);
        assert!(matches!(train(&m, &Hyperparams::default()), Err(GbtError::EmptyMatrix)));
    }

    #[test]
    fn overfit_recovers_training_targets() {
        let xs: Vec<f64> = (0..16).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.3).sin() * 5.0 + 7.0).collect();
        let m = matrix(&xs, &ys);
        let p = Hyperparams {
            n_rounds: 400,
            learning_rate: 0.5,
            max_depth: 6,
            min_child_weight: 0.0,
            reg_lambda: 0.0,
            ..Default::default()
        };
        let model = train(&m, &p).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((model.predict_values(&[Some(*x)]) - y).abs() < 1e-6);
        }
    }

    #[test]
    fn predict_requires_every_model_feature() {
        let m = matrix(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 5.0, 5.0]);
        let model = train(&m, &Hyperparams::default()).unwrap();
        let ok: FeatureRow = [("x".to_string(), None)].into();
        assert!(model.predict(&[ok.clone(), ok]).is_ok());
        let bad: FeatureRow = [("y".to_string(), Some(1.0))].into();
        assert!(matches!(model.predict(&[bad]), Err(GbtError::MissingFeature(f)) if f == "x"));
    }

    #[test]
    fn subsample_is_seeded() {
        let xs: Vec<f64> = (0..50).map(|i| (i * 7 % 50) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x / 50.0).collect();
        let m = matrix(&xs, &ys);
        let p = Hyperparams {
            subsample: 0.6,
            seed: 9,
            n_rounds: 20,
            ..Default::default()
        };
        assert_eq!(train(&m, &p).unwrap(), train(&m, &p).unwrap());
        let other = Hyperparams { seed: 10, ..p.clone() };
        assert_ne!(train(&m, &p).unwrap(), train(&m, &other).unwrap());
    }

    #[test]
    fn invalid_params() {
        for p in [
            Hyperparams { learning_rate: 0.0, ..Default::default() },
            Hyperparams { max_depth: 0, ..Default::default() },
            Hyperparams { subsample: 1.5, ..Default::default() },
            Hyperparams { reg_lambda: -1.0, ..Default::default() },
        ] {
            assert!(matches!(p.validate(), Err(GbtError::InvalidParam(_))));
        }
    }
}
