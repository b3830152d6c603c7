use serde::{Deserialize, Serialize};

use super::{GbtError, Hyperparams, TrainingMatrix};

/// A regression tree. Rows with `value < threshold` go left; missing values
/// follow `default_left`. `cover` is the hessian sum of the training rows that
/// reached the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        weight: f64,
        cover: f64,
    },
    Split {
        /// Index into the model's `feature_names`.
        feature: usize,
        threshold: f64,
        default_left: bool,
        gain: f64,
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Leaf { cover, .. } | TreeNode::Split { cover, .. } => *cover,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Child taken by a row with the given value of this node's feature.
    pub fn goes_left(threshold: f64, default_left: bool, value: Option<f64>) -> bool {
        match value {
            Some(v) => v < threshold,
            None => default_left,
        }
    }

    pub fn predict_with(&self, value: impl Fn(usize) -> Option<f64>) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight, .. } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    node = if Self::goes_left(*threshold, *default_left, value(*feature)) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Cover-weighted average leaf weight.
    pub fn expected_value(&self) -> f64 {
        match self {
            TreeNode::Leaf { weight, .. } => *weight,
            TreeNode::Split {
                cover, left, right, ..
            } => {
                if *cover == 0.0 {
                    return 0.0;
                }
                (left.cover() * left.expected_value() + right.cover() * right.expected_value())
                    / cover
            }
        }
    }

    /// Distinct feature indices used by splits.
    pub fn split_features(&self, out: &mut Vec<usize>) {
        if let TreeNode::Split {
            feature,
            left,
            right,
            ..
        } = self
        {
            if !out.contains(feature) {
                out.push(*feature);
            }
            left.split_features(out);
            right.split_features(out);
        }
    }
}

/// Fits a single tree on all rows of `matrix`.
pub fn fit_tree(
    grad: &[f64],
    hess: &[f64],
    matrix: &TrainingMatrix,
    params: &Hyperparams,
) -> Result<TreeNode, GbtError> {
    params.validate()?;
    let n = matrix.n_rows();
    if n == 0 {
        return Err(GbtError::EmptyMatrix);
    }
    for (what, v) in [("grad", grad), ("hess", hess)] {
        if v.len() != n {
            return Err(GbtError::LengthMismatch {
                what,
                expected: n,
                got: v.len(),
            });
        }
    }
    if hess.iter().any(|h| !(*h >= 0.0)) {
        return Err(GbtError::InvalidParam("hessian entries must be >= 0".into()));
    }
    let rows: Vec<usize> = (0..n).collect();
    Ok(TreeBuilder::new(matrix, params).build(grad, hess, &rows))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    default_left: bool,
    gain: f64,
    /// Position in the feature's sorted list after which rows go right.
    cut: usize,
}

/// Exact greedy tree grower. Each feature's rows are sorted once; nodes keep
/// their rows in that order so no per-node sorting is needed.
pub(crate) struct TreeBuilder<'a> {
    matrix: &'a TrainingMatrix,
    params: &'a Hyperparams,
    /// Per feature: rows with a present value, ascending by value.
    sorted: Vec<Vec<usize>>,
}

impl<'a> TreeBuilder<'a> {
    pub(crate) fn new(matrix: &'a TrainingMatrix, params: &'a Hyperparams) -> Self {
        let sorted = (0..matrix.n_features())
            .map(|j| {
                let col = matrix.column(j);
                let mut rows: Vec<usize> = (0..matrix.n_rows()).filter(|&i| col[i].is_some()).collect();
                rows.sort_by(|&a, &b| col[a].unwrap().total_cmp(&col[b].unwrap()).then(a.cmp(&b)));
                rows
            })
            .collect();
        Self {
            matrix,
            params,
            sorted,
        }
    }

    /// Grows a tree on `rows` (ascending row indices).
    pub(crate) fn build(&self, grad: &[f64], hess: &[f64], rows: &[usize]) -> TreeNode {
        let n = self.matrix.n_rows();
        let mut member = vec![false; n];
        for &i in rows {
            member[i] = true;
        }
        let lists: Vec<Vec<usize>> = self
            .sorted
            .iter()
            .map(|l| l.iter().copied().filter(|&i| member[i]).collect())
            .collect();
        let mut side = vec![false; n];
        self.grow(grad, hess, rows.to_vec(), lists, 0, &mut side)
    }

    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.reg_lambda;
        if denom == 0.0 {
            0.0
        } else {
            -g / denom * self.params.learning_rate
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.reg_lambda;
        if denom == 0.0 {
            0.0
        } else {
            g * g / denom
        }
    }

    fn grow(
        &self,
        grad: &[f64],
        hess: &[f64],
        rows: Vec<usize>,
        lists: Vec<Vec<usize>>,
        depth: usize,
        side: &mut [bool],
    ) -> TreeNode {
        let g: f64 = rows.iter().map(|&i| grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| hess[i]).sum();
        let leaf = TreeNode::Leaf {
            weight: self.leaf_weight(g, h),
            cover: h,
        };
        if depth >= self.params.max_depth || rows.len() < 2 {
            return leaf;
        }
        let Some(best) = self.best_split(grad, hess, &rows, &lists, g, h) else {
            return leaf;
        };

        // side[i] = true when row i goes left
        let list = &lists[best.feature];
        for &i in &rows {
            side[i] = best.default_left;
        }
        for (pos, &i) in list.iter().enumerate() {
            side[i] = pos < best.cut;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| side[i]);
        let (left_lists, right_lists): (Vec<_>, Vec<_>) = lists
            .iter()
            .map(|l| l.iter().partition::<Vec<usize>, _>(|&&i| side[i]))
            .unzip();
        let left = self.grow(grad, hess, left_rows, left_lists, depth + 1, side);
        let right = self.grow(grad, hess, right_rows, right_lists, depth + 1, side);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            default_left: best.default_left,
            gain: best.gain,
            cover: h,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(
        &self,
        grad: &[f64],
        hess: &[f64],
        rows: &[usize],
        lists: &[Vec<usize>],
        g: f64,
        h: f64,
    ) -> Option<Candidate> {
        let p = self.params;
        let parent = self.score(g, h);
        let mut best: Option<Candidate> = None;
        for (feature, list) in lists.iter().enumerate() {
            if list.len() < 2 {
                continue;
            }
            let col = self.matrix.column(feature);
            let n_missing = rows.len() - list.len();
            let (g_present, h_present) = list
                .iter()
                .fold((0.0, 0.0), |(a, b), &i| (a + grad[i], b + hess[i]));
            let (g_miss, h_miss) = (g - g_present, h - h_present);
            let (mut gl, mut hl) = (0.0, 0.0);
            for pos in 0..list.len() - 1 {
                let i = list[pos];
                gl += grad[i];
                hl += hess[i];
                let lo = col[i].unwrap();
                let hi = col[list[pos + 1]].unwrap();
                if lo == hi {
                    continue;
                }
                // missing right first; missing left only when there is something to route
                let directions: &[bool] = if n_missing > 0 { &[false, true] } else { &[false] };
                for &default_left in directions {
                    let (gl_d, hl_d) = if default_left {
                        (gl + g_miss, hl + h_miss)
                    } else {
                        (gl, hl)
                    };
                    let (gr_d, hr_d) = (g - gl_d, h - hl_d);
                    if hl_d < p.min_child_weight || hr_d < p.min_child_weight {
                        continue;
                    }
                    let gain =
                        0.5 * (self.score(gl_d, hl_d) + self.score(gr_d, hr_d) - parent) - p.gamma;
                    if best.is_none_or(|b| gain > b.gain) {
                        let mid = lo + (hi - lo) / 2.0;
                        best = Some(Candidate {
                            feature,
                            threshold: if mid > lo { mid } else { hi },
                            default_left,
                            gain,
                            cut: pos + 1,
                        });
                    }
                }
            }
        }
        best.filter(|b| b.gain > 0.0)
    }
}
