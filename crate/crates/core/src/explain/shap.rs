//! Path-dependent TreeSHAP: exact Shapley values of a tree ensemble in
//! polynomial time, with the conditional expectations taken under the
//! training covers stored in each node.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::gbtree::{FeatureRow, GBTModel, TrainingMatrix, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    /// E[f(x)] under the training covers.
    pub base_value: f64,
    pub contributions: BTreeMap<String, f64>,
    pub prediction: f64,
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

const ROOT: usize = usize::MAX;

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: usize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) as f64 / d1;
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one_portion = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one_portion * d1 / ((i + 1) as f64 * one);
            next_one_portion = tmp - path[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].pweight = path[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.truncate(depth);
}

/// Total permutation weight of the path with element `index` removed.
fn unwound_path_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one_portion = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one_portion * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one_portion = path[i].pweight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].pweight / zero / ((depth - i) as f64 / d1);
        }
    }
    total
}

fn recurse(
    node: &TreeNode,
    row: &[Option<f64>],
    phi: &mut [f64],
    parent: &[PathElement],
    zero_fraction: f64,
    one_fraction: f64,
    feature: usize,
) {
    let mut path = parent.to_vec();
    extend_path(&mut path, zero_fraction, one_fraction, feature);
    match node {
        TreeNode::Leaf { weight, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = path[i];
                phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * weight;
            }
        }
        TreeNode::Split {
            feature: split,
            threshold,
            default_left,
            cover,
            left,
            right,
            ..
        } => {
            let (hot, cold) = if TreeNode::goes_left(*threshold, *default_left, row[*split]) {
                (left, right)
            } else {
                (right, left)
            };
            let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
            if let Some(k) = path.iter().skip(1).position(|e| e.feature == *split).map(|k| k + 1) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            let hot_zero = hot.cover() / cover * incoming_zero;
            let cold_zero = cold.cover() / cover * incoming_zero;
            recurse(hot, row, phi, &path, hot_zero, incoming_one, *split);
            recurse(cold, row, phi, &path, cold_zero, 0.0, *split);
        }
    }
}

/// Adds one tree's SHAP values for `row` into `phi`.
pub fn tree_shap_single(tree: &TreeNode, row: &[Option<f64>], phi: &mut [f64]) {
    if matches!(tree, TreeNode::Leaf { .. }) {
        return;
    }
    recurse(tree, row, phi, &[], 1.0, 1.0, ROOT);
}

/// SHAP values aligned with the model's features.
pub fn shap_values(model: &GBTModel, row: &[Option<f64>]) -> Vec<f64> {
    let mut phi = vec![0.0; model.feature_names.len()];
    for tree in &model.trees {
        tree_shap_single(tree, row, &mut phi);
    }
    phi
}

/// Explains one prediction. The row must supply every model feature (a
/// `None` value is a missing value).
pub fn tree_shap(model: &GBTModel, row: &FeatureRow) -> Result<ShapExplanation, ExplainError> {
    let values = model.align_row(row)?;
    Ok(explanation(model, &values))
}

pub(crate) fn explanation(model: &GBTModel, values: &[Option<f64>]) -> ShapExplanation {
    let phi = shap_values(model, values);
    ShapExplanation {
        base_value: model.expected_value(),
        contributions: model.feature_names.iter().cloned().zip(phi).collect(),
        prediction: model.predict_values(values),
    }
}

/// SHAP values for every row of `matrix`, aligned with the model features.
pub fn shap_matrix(model: &GBTModel, matrix: &TrainingMatrix) -> Result<Vec<Vec<f64>>, ExplainError> {
    let map = model.column_map(matrix)?;
    Ok((0..matrix.n_rows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<Option<f64>> = map.iter().map(|&j| matrix.value(i, j)).collect();
            shap_values(model, &row)
        })
        .collect())
}
