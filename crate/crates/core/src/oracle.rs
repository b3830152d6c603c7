//! Slow reference implementations used to check the fast paths in tests.

use rand::Rng;

use crate::gbtree::{GBTModel, Hyperparams, TrainingMatrix, TreeNode};

/// E[tree(x) | x_S] where unknown features are integrated out with the
/// node covers.
pub fn conditional_expectation(tree: &TreeNode, row: &[Option<f64>], known: &[bool]) -> f64 {
    match tree {
        TreeNode::Leaf { weight, .. } => *weight,
        TreeNode::Split {
            feature,
            threshold,
            default_left,
            cover,
            left,
            right,
            ..
        } => {
            if known[*feature] {
                let next = if TreeNode::goes_left(*threshold, *default_left, row[*feature]) {
                    left
                } else {
                    right
                };
                conditional_expectation(next, row, known)
            } else {
                (left.cover() * conditional_expectation(left, row, known)
                    + right.cover() * conditional_expectation(right, row, known))
                    / cover
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values by enumerating every coalition. Exponential in the
/// number of features.
pub fn brute_force_shap(model: &GBTModel, row: &[Option<f64>]) -> Vec<f64> {
    let p = model.feature_names.len();
    assert!(p <= 16, "coalition enumeration is limited to 16 features");
    let value = |mask: usize| -> f64 {
        let known: Vec<bool> = (0..p).map(|j| mask >> j & 1 == 1).collect();
        model
            .trees
            .iter()
            .map(|t| conditional_expectation(t, row, &known))
            .sum()
    };
    let values: Vec<f64> = (0..1usize << p).map(value).collect();
    let total = factorial(p);
    (0..p)
        .map(|i| {
            (0..1usize << p)
                .filter(|m| m >> i & 1 == 0)
                .map(|m| {
                    let s = m.count_ones() as usize;
                    let w = factorial(s) * factorial(p - s - 1) / total;
                    w * (values[m | 1 << i] - values[m])
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub gain: f64,
}

/// Best root split found by testing every threshold between adjacent
/// distinct values and both missing-value directions, with all sums
/// recomputed from scratch.
pub fn best_split_exhaustive(
    grad: &[f64],
    hess: &[f64],
    matrix: &TrainingMatrix,
    params: &Hyperparams,
) -> Option<SplitChoice> {
    let n = matrix.n_rows();
    let score = |g: f64, h: f64| {
        let d = h + params.reg_lambda;
        if d == 0.0 {
            0.0
        } else {
            g * g / d
        }
    };
    let g: f64 = grad.iter().sum();
    let h: f64 = hess.iter().sum();
    let mut best: Option<SplitChoice> = None;
    for j in 0..matrix.n_features() {
        let col = matrix.column(j);
        let mut distinct: Vec<f64> = col.iter().flatten().copied().collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for w in distinct.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let t = if t > w[0] { t } else { w[1] };
            for default_left in [false, true] {
                let (mut gl, mut hl) = (0.0, 0.0);
                for i in 0..n {
                    if TreeNode::goes_left(t, default_left, col[i]) {
                        gl += grad[i];
                        hl += hess[i];
                    }
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < params.min_child_weight || hr < params.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(g, h)) - params.gamma;
                if best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice { feature: j, gain });
                }
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

/// Random tree over `n_features` features with values in [0, 1) and
/// consistent covers.
pub fn random_tree<R: Rng>(rng: &mut R, n_features: usize, max_depth: usize) -> TreeNode {
    if max_depth == 0 || rng.random_bool(0.2) {
        return TreeNode::Leaf {
            weight: rng.random_range(-5.0..5.0),
            cover: rng.random_range(0.5..20.0),
        };
    }
    let left = random_tree(rng, n_features, max_depth - 1);
    let right = random_tree(rng, n_features, max_depth - 1);
    TreeNode::Split {
        feature: rng.random_range(0..n_features),
        threshold: rng.random::<f64>(),
        default_left: rng.random_bool(0.5),
        gain: 1.0,
        cover: left.cover() + right.cover(),
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Row of values in [0, 1), each missing with probability `missing`.
pub fn random_row<R: Rng>(rng: &mut R, n_features: usize, missing: f64) -> Vec<Option<f64>> {
    (0..n_features)
        .map(|_| (!rng.random_bool(missing)).then(|| rng.random::<f64>()))
        .collect()
}
