use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExplainError;

const KMEANS_RESTARTS: usize = 50;
const KMEANS_MAX_ITER: usize = 300;

/// Principal components of the correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    /// Sample standard deviations used for standardization.
    pub scales: Vec<f64>,
    /// Descending, with round-off negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
    /// `loadings[c][j]`: unit eigenvector of component `c`. The entry of
    /// largest magnitude in each component is positive.
    pub loadings: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
}

impl PcaResult {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Component scores of one raw row.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let z = self.standardize(row);
        self.loadings
            .iter()
            .map(|l| l.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Standardized row rebuilt from all component scores.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        (0..self.n_features())
            .map(|j| scores.iter().zip(&self.loadings).map(|(s, l)| s * l[j]).sum())
            .collect()
    }

    /// Loading scaled by the component's standard deviation, i.e. the
    /// correlation between feature `j` and component `c`.
    pub fn structure_loading(&self, c: usize, j: usize) -> f64 {
        self.loadings[c][j] * self.eigenvalues[c].sqrt()
    }
}

fn top_eigen(m: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&c| eig.eigenvalues[c].max(0.0)).collect();
    let vectors = order
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let lead = (0..n).fold(0, |best, j| if v[j].abs() > v[best].abs() + 1e-12 { j } else { best });
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    (values, vectors)
}

/// PCA on the correlation matrix of complete rows.
pub fn pca(feature_names: &[String], rows: &[Vec<f64>]) -> Result<PcaResult, ExplainError> {
    let p = feature_names.len();
    let n = rows.len();
    if p < 2 {
        return Err(ExplainError::TooFewFeatures(p));
    }
    if n < p.max(3) {
        return Err(ExplainError::TooFewRows { rows: n, features: p });
    }
    if rows.iter().any(|r| r.len() != p) {
        return Err(ExplainError::RowLength);
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ExplainError::NonFinite);
    }
    let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let scales: Vec<f64> = (0..p)
        .map(|j| (rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt())
        .collect();
    if let Some(j) = (0..p).find(|&j| scales[j] <= 1e-12 * (1.0 + means[j].abs())) {
        return Err(ExplainError::ZeroVariance(feature_names[j].clone()));
    }
    let z = DMatrix::from_fn(n, p, |i, j| (rows[i][j] - means[j]) / scales[j]);
    let corr = (z.transpose() * &z) / (n - 1) as f64;
    let correlation: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| corr[(i, j)]).collect()).collect();
    let (eigenvalues, loadings) = top_eigen(corr);
    let total: f64 = eigenvalues.iter().sum();
    Ok(PcaResult {
        feature_names: feature_names.to_vec(),
        means,
        scales,
        explained_variance_ratio: eigenvalues.iter().map(|v| v / total).collect(),
        eigenvalues,
        loadings,
        correlation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCluster {
    pub features: Vec<String>,
    pub representative: String,
    /// Squared correlation of the representative with the cluster's first
    /// principal component.
    pub representative_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClustering {
    pub clusters: Vec<FeatureCluster>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn assign(points: &[[f64; 2]], centers: &[[f64; 2]]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (c, d) = centers
                .iter()
                .enumerate()
                .map(|(c, m)| (c, sq_dist(p, m)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            inertia += d;
            c
        })
        .collect();
    (labels, inertia)
}

fn kmeans_pp(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        };
        centers.push(points[next]);
    }
    centers
}

fn lloyd(points: &[[f64; 2]], mut centers: Vec<[f64; 2]>) -> (Vec<usize>, f64) {
    let k = centers.len();
    let (mut labels, mut inertia) = assign(points, &centers);
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            } else {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]]).total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .unwrap();
                centers[c] = points[far];
            }
        }
        let (next, next_inertia) = assign(points, &centers);
        let done = next == labels;
        labels = next;
        inertia = next_inertia;
        if done {
            break;
        }
    }
    (labels, inertia)
}

fn representative(pca: &PcaResult, members: &[usize]) -> (usize, f64) {
    if members.len() == 1 {
        return (members[0], 1.0);
    }
    let m = DMatrix::from_fn(members.len(), members.len(), |a, b| pca.correlation[members[a]][members[b]]);
    let (values, vectors) = top_eigen(m);
    let (idx, r2) = vectors[0]
        .iter()
        .map(|v| v * v * values[0])
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 + 1e-12 { cur } else { best });
    (members[idx], r2)
}

/// Groups features by k-means on their correlations with the first two
/// components and picks, per group, the member best correlated with the
/// group's own first component.
pub fn cluster_features(pca: &PcaResult, k: usize, seed: u64) -> Result<FeatureClustering, ExplainError> {
    let p = pca.n_features();
    if k == 0 || k > p {
        return Err(ExplainError::InvalidClusterCount { k, features: p });
    }
    let points: Vec<[f64; 2]> = (0..p)
        .map(|j| [pca.structure_loading(0, j), pca.structure_loading(1, j)])
        .collect();
    let (labels, inertia) = if k == p {
        ((0..p).collect(), 0.0)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<(Vec<usize>, f64)> = None;
        for _ in 0..KMEANS_RESTARTS {
            let init = kmeans_pp(&points, k, &mut rng);
            let run = lloyd(&points, init);
            if best.as_ref().is_none_or(|b| run.1 < b.1 - 1e-12) {
                best = Some(run);
            }
        }
        best.unwrap()
    };
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (j, &l) in labels.iter().enumerate() {
        groups[l].push(j);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by_key(|g| g[0]);
    let clusters = groups
        .iter()
        .map(|g| {
            let (rep, r2) = representative(pca, g);
            FeatureCluster {
                features: g.iter().map(|&j| pca.feature_names[j].clone()).collect(),
                representative: pca.feature_names[rep].clone(),
                representative_r2: r2,
            }
        })
        .collect();
    Ok(FeatureClustering { clusters, inertia })
}
