use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, GbtError, Hyperparams, TrainingMatrix};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldStrategy {
    /// Seeded random assignment of rows to folds.
    #[default]
    Random,
    /// Whole years are assigned to folds; needs row keys.
    GroupedByYear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub fold_rmse: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub std: f64,
    pub params: Hyperparams,
}

impl CvResult {
    fn from_folds(fold_rmse: Vec<f64>, params: Hyperparams) -> Self {
        let k = fold_rmse.len() as f64;
        let mean = fold_rmse.iter().sum::<f64>() / k;
        let var = if fold_rmse.len() > 1 {
            fold_rmse.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Self {
            fold_rmse,
            mean,
            std: var.sqrt(),
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: Hyperparams,
    pub best_index: usize,
    pub results: Vec<CvResult>,
}

/// Fold index for each row, as balanced as possible.
pub fn assign_folds(n_rows: usize, k: usize, seed: u64) -> Result<Vec<usize>, GbtError> {
    if k < 2 {
        return Err(GbtError::InvalidK(k));
    }
    if k > n_rows {
        return Err(GbtError::TooManyFolds {
            k,
            available: n_rows,
            unit: "rows",
        });
    }
    let mut perm: Vec<usize> = (0..n_rows).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n_rows];
    for (pos, &row) in perm.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(folds)
}

fn grouped_folds(matrix: &TrainingMatrix, k: usize, seed: u64) -> Result<Vec<usize>, GbtError> {
    if k < 2 {
        return Err(GbtError::InvalidK(k));
    }
    let keys = matrix.keys().ok_or(GbtError::MissingGroups)?;
    let mut years: Vec<i32> = keys.iter().map(|k| k.year).collect::<BTreeSet<_>>().into_iter().collect();
    if k > years.len() {
        return Err(GbtError::TooManyFolds {
            k,
            available: years.len(),
            unit: "years",
        });
    }
    years.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(keys
        .iter()
        .map(|key| years.iter().position(|y| *y == key.year).unwrap() % k)
        .collect())
}

fn make_folds(
    matrix: &TrainingMatrix,
    k: usize,
    seed: u64,
    strategy: FoldStrategy,
) -> Result<Vec<usize>, GbtError> {
    match strategy {
        FoldStrategy::Random => assign_folds(matrix.n_rows(), k, seed),
        FoldStrategy::GroupedByYear => grouped_folds(matrix, k, seed),
    }
}

fn fold_rmse(
    matrix: &TrainingMatrix,
    params: &Hyperparams,
    folds: &[usize],
    fold: usize,
) -> Result<f64, GbtError> {
    let (held, kept): (Vec<usize>, Vec<usize>) = (0..matrix.n_rows()).partition(|&i| folds[i] == fold);
    let model = train(&matrix.subset(&kept), params)?;
    let sse: f64 = held
        .iter()
        .map(|&i| (model.predict_values(&matrix.row(i)) - matrix.target()[i]).powi(2))
        .sum();
    Ok((sse / held.len() as f64).sqrt())
}

/// k-fold cross-validated RMSE of one parameter set.
pub fn cross_validate(
    matrix: &TrainingMatrix,
    params: &Hyperparams,
    k: usize,
    seed: u64,
    strategy: FoldStrategy,
) -> Result<CvResult, GbtError> {
    params.validate()?;
    let folds = make_folds(matrix, k, seed, strategy)?;
    let scores = (0..k)
        .into_par_iter()
        .map(|f| fold_rmse(matrix, params, &folds, f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CvResult::from_folds(scores, params.clone()))
}

/// Evaluates every grid point on the same folds and picks the lowest mean
/// RMSE; ties go to fewer rounds, then shallower trees, then grid order.
pub fn kfold_grid_search(
    matrix: &TrainingMatrix,
    grid: &[Hyperparams],
    k: usize,
    seed: u64,
    strategy: FoldStrategy,
) -> Result<GridSearchResult, GbtError> {
    if grid.is_empty() {
        return Err(GbtError::EmptyGrid);
    }
    for p in grid {
        p.validate()?;
    }
    let folds = make_folds(matrix, k, seed, strategy)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..k).map(move |f| (g, f)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(g, f)| fold_rmse(matrix, &grid[g], &folds, f))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<CvResult> = scores
        .chunks(k)
        .zip(grid)
        .map(|(s, p)| CvResult::from_folds(s.to_vec(), p.clone()))
        .collect();
    let best_index = (0..results.len())
        .min_by(|&a, &b| {
            let (ra, rb) = (&results[a], &results[b]);
            ra.mean
                .total_cmp(&rb.mean)
                .then(ra.params.n_rounds.cmp(&rb.params.n_rounds))
                .then(ra.params.max_depth.cmp(&rb.params.max_depth))
                .then(a.cmp(&b))
        })
        .expect("grid is non-empty");
    Ok(GridSearchResult {
        best: results[best_index].params.clone(),
        best_index,
        results,
    })
}

/// max_depth {3,4,6} × learning_rate {0.05,0.1,0.3} × n_rounds {100,300} ×
/// min_child_weight {1,5} × subsample {0.8,1.0}, λ = 1, γ = 0.
pub fn default_grid(seed: u64) -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    for max_depth in [3, 4, 6] {
        for learning_rate in [0.05, 0.1, 0.3] {
            for n_rounds in [100, 300] {
                for min_child_weight in [1.0, 5.0] {
                    for subsample in [0.8, 1.0] {
                        grid.push(Hyperparams {
                            n_rounds,
                            learning_rate,
                            max_depth,
                            min_child_weight,
                            reg_lambda: 1.0,
                            gamma: 0.0,
                            subsample,
                            seed,
                        });
                    }
                }
            }
        }
    }
    grid
}
