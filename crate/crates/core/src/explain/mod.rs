//! Model explanations: TreeSHAP attributions, SHAP importance shares, and
//! PCA-based clustering of correlated features.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbtree::{GBTModel, GbtError, TrainingMatrix};

mod pca;
mod shap;

pub use pca::{cluster_features, pca, FeatureCluster, FeatureClustering, PcaResult};
pub use shap::{shap_matrix, shap_values, tree_shap, tree_shap_single, ShapExplanation};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("all SHAP values are zero; the model does not use any feature")]
    DegenerateModel,
    #[error("no rows to explain")]
    NoRows,
    #[error("PCA needs at least two features, got {0}")]
    TooFewFeatures(usize),
    #[error("PCA needs at least max(3, features) complete rows, got {rows} rows for {features} features")]
    TooFewRows { rows: usize, features: usize },
    #[error("row length does not match the feature list")]
    RowLength,
    #[error("non-finite value in PCA input")]
    NonFinite,
    #[error("feature {0} has zero variance")]
    ZeroVariance(String),
    #[error("cluster count {k} must be between 1 and the number of features ({features})")]
    InvalidClusterCount { k: usize, features: usize },
    #[error("feature {0} has no group")]
    UngroupedFeature(String),
    #[error(transparent)]
    Gbt(#[from] GbtError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<String>,
    pub mean_abs_shap: Vec<f64>,
    /// Percent of the total mean |SHAP|; sums to 100.
    pub shares: Vec<f64>,
    pub n_rows: usize,
}

impl ImportanceReport {
    /// (feature, share) by decreasing share; ties in feature order.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut order: Vec<usize> = (0..self.features.len()).collect();
        order.sort_by(|&a, &b| self.shares[b].total_cmp(&self.shares[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .map(|j| (self.features[j].clone(), self.shares[j]))
            .collect()
    }

    pub fn share(&self, feature: &str) -> Option<f64> {
        self.features.iter().position(|f| f == feature).map(|j| self.shares[j])
    }
}

/// Mean absolute SHAP value per feature over the rows of `matrix`,
/// normalized to percentage shares.
pub fn importance_shares(model: &GBTModel, matrix: &TrainingMatrix) -> Result<ImportanceReport, ExplainError> {
    if matrix.n_rows() == 0 {
        return Err(ExplainError::NoRows);
    }
    let phis = shap_matrix(model, matrix)?;
    let p = model.feature_names.len();
    let mut totals = vec![0.0; p];
    for phi in &phis {
        for (t, v) in totals.iter_mut().zip(phi) {
            *t += v.abs();
        }
    }
    let n = matrix.n_rows() as f64;
    let mean_abs_shap: Vec<f64> = totals.iter().map(|t| t / n).collect();
    let sum: f64 = mean_abs_shap.iter().sum();
    if sum <= 0.0 {
        return Err(ExplainError::DegenerateModel);
    }
    Ok(ImportanceReport {
        features: model.feature_names.clone(),
        shares: mean_abs_shap.iter().map(|m| 100.0 * m / sum).collect(),
        mean_abs_shap,
        n_rows: matrix.n_rows(),
    })
}

/// Sums shares by group (e.g. climate / economic / landuse).
pub fn group_shares(
    report: &ImportanceReport,
    groups: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, f64>, ExplainError> {
    let mut out = BTreeMap::new();
    for (f, s) in report.features.iter().zip(&report.shares) {
        let g = groups.get(f).ok_or_else(|| ExplainError::UngroupedFeature(f.clone()))?;
        *out.entry(g.clone()).or_insert(0.0) += s;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallStep {
    pub feature: String,
    pub contribution: f64,
    pub start: f64,
    pub end: f64,
}

/// Contributions ordered by decreasing magnitude, accumulated from the base
/// value; the last step ends at the prediction.
pub fn waterfall(expl: &ShapExplanation) -> Vec<WaterfallStep> {
    let mut items: Vec<(&String, f64)> = expl.contributions.iter().map(|(f, v)| (f, *v)).collect();
    items.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(b.0)));
    let mut at = expl.base_value;
    items
        .into_iter()
        .map(|(f, v)| {
            let start = at;
            at += v;
            WaterfallStep {
                feature: f.clone(),
                contribution: v,
                start,
                end: at,
            }
        })
        .collect()
}

pub fn write_importance_csv<W: Write>(report: &ImportanceReport, writer: W) -> Result<(), ExplainError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["rank", "feature", "mean_abs_shap", "share_pct"])?;
    for (rank, (f, share)) in report.ranked().into_iter().enumerate() {
        let j = report.features.iter().position(|x| *x == f).expect("ranked feature");
        out.write_record([
            (rank + 1).to_string(),
            f,
            report.mean_abs_shap[j].to_string(),
            share.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_waterfall_csv<W: Write>(expl: &ShapExplanation, writer: W) -> Result<(), ExplainError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["feature", "contribution", "start", "end"])?;
    out.write_record(["base_value", "", "", &expl.base_value.to_string()])?;
    for s in waterfall(expl) {
        out.write_record([
            s.feature,
            s.contribution.to_string(),
            s.start.to_string(),
            s.end.to_string(),
        ])?;
    }
    out.write_record(["prediction", "", "", &expl.prediction.to_string()])?;
    out.flush()?;
    Ok(())
}
