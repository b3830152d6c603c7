//! Correlation measures, simple linear-fit R² and the regression error metrics
//! used for regional and national evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} complete pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("{0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("empty input")]
    Empty,
    #[error("MAPE undefined: actual value is zero at position {0}")]
    ZeroActual(usize),
}

/// Two aligned series with every incomplete pair already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    x: Vec<f64>,
    y: Vec<f64>,
}

pub const MIN_PAIRS: usize = 3;

impl PairedSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, StatsError> {
        if x.len() != y.len() {
            return Err(StatsError::LengthMismatch(x.len(), y.len()));
        }
        if let Some(i) = x
            .iter()
            .zip(&y)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(StatsError::NonFinite(i));
        }
        if x.len() < MIN_PAIRS {
            return Err(StatsError::TooFewPairs {
                needed: MIN_PAIRS,
                got: x.len(),
            });
        }
        Ok(Self { x, y })
    }

    /// Builds a series from optional values, dropping any pair with a missing side.
    pub fn from_options(x: &[Option<f64>], y: &[Option<f64>]) -> Result<Self, StatsError> {
        if x.len() != y.len() {
            return Err(StatsError::LengthMismatch(x.len(), y.len()));
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(y)
            .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
            .unzip();
        Self::new(xs, ys)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson_raw(x: &[f64], y: &[f64], what: (&'static str, &'static str)) -> Result<f64, StatsError> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance(what.0));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance(what.1));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Product-moment correlation coefficient.
pub fn pearson(s: &PairedSeries) -> Result<f64, StatsError> {
    pearson_raw(&s.x, &s.y, ("x", "y"))
}

/// 1-based ranks where tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// Rank correlation: Pearson on mean-tie ranks.
pub fn spearman(s: &PairedSeries) -> Result<f64, StatsError> {
    let rx = average_ranks(&s.x);
    let ry = average_ranks(&s.y);
    pearson_raw(&rx, &ry, ("ranks of x", "ranks of y"))
}

/// Coefficient of determination of the least-squares line `y ~ a + b x`.
pub fn linfit_r2(s: &PairedSeries) -> Result<f64, StatsError> {
    let mx = mean(&s.x);
    let my = mean(&s.y);
    let sxx: f64 = s.x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    let sxy: f64 = s.x.iter().zip(&s.y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = s.y.iter().map(|b| (b - my).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    let ss_res: f64 = s
        .x
        .iter()
        .zip(&s.y)
        .map(|(a, b)| (b - (intercept + slope * a)).powi(2))
        .sum();
    Ok((1.0 - ss_res / ss_tot).clamp(0.0, 1.0))
}

/// Mean of the Pearson and Spearman coefficients.
pub fn avg_correlation(s: &PairedSeries) -> Result<f64, StatsError> {
    Ok((pearson(s)? + spearman(s)?) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub r2: f64,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Percent; only present for national-level evaluation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mape: Option<f64>,
}

/// Standard regression error metrics of `predicted` against `actual`.
///
/// When `actual` is constant the R² denominator vanishes; R² is then 1 for a
/// perfect prediction and 0 otherwise.
pub fn error_metrics(
    actual: &[f64],
    predicted: &[f64],
    include_mape: bool,
) -> Result<MetricReport, StatsError> {
    if actual.len() != predicted.len() {
        return Err(StatsError::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(i) = actual
        .iter()
        .zip(predicted)
        .position(|(a, p)| !a.is_finite() || !p.is_finite())
    {
        return Err(StatsError::NonFinite(i));
    }
    let n = actual.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (a, p) in actual.iter().zip(predicted) {
        abs += (a - p).abs();
        sq += (a - p).powi(2);
    }
    let mape = if include_mape {
        let mut acc = 0.0;
        for (i, (a, p)) in actual.iter().zip(predicted).enumerate() {
            if *a == 0.0 {
                return Err(StatsError::ZeroActual(i));
            }
            acc += ((a - p) / a).abs();
        }
        Some(100.0 * acc / n)
    } else {
        None
    };
    let ma = mean(actual);
    let ss_tot: f64 = actual.iter().map(|a| (a - ma).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - sq / ss_tot
    } else if sq == 0.0 {
        1.0
    } else {
        0.0
    };
    let mse = sq / n;
    Ok(MetricReport {
        r2,
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
        mape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(x: &[f64], y: &[f64]) -> PairedSeries {
        PairedSeries::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn pearson_affine_and_hand_value() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&series(&x, &y)).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&series(&x, &neg)).unwrap() + 1.0).abs() < 1e-15);
        // sxy = 4, sxx = syy = 5
        let r = pearson(&series(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])).unwrap();
        assert!((r - 0.8).abs() < 1e-14);
    }

    #[test]
    fn zero_variance_is_error() {
        let s = series(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]);
        assert_eq!(pearson(&s), Err(StatsError::ZeroVariance("x")));
        assert!(spearman(&s).is_err());
        assert!(linfit_r2(&s).is_err());
    }

    #[test]
    fn spearman_small_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let cube: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        assert!((spearman(&series(&x, &cube)).unwrap() - 1.0).abs() < 1e-15);
        let r = spearman(&series(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0])).unwrap();
        assert!((r + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 5.0, 20.0]),
            vec![2.0, 4.0, 4.0, 1.0, 4.0]
        );
        assert_eq!(average_ranks(&[1.0, 1.0]), vec![1.5, 1.5]);
    }

    #[test]
    fn spearman_ties_match_rank_table() {
        // y has a tie at positions 1 and 2; mean ranks 2.5 each.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 3.0, 3.0, 2.0, 5.0];
        let rx = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ry = [1.0, 3.5, 3.5, 2.0, 5.0];
        let expected = pearson(&series(&rx, &ry)).unwrap();
        assert!((spearman(&series(&x, &y)).unwrap() - expected).abs() < 1e-15);
        // hand value: sxy = 6.5, sxx = 10, syy = 9.5
        assert!((expected - 6.5 / (10.0f64 * 9.5).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn listwise_deletion() {
        let s = PairedSeries::from_options(
            &[Some(1.0), None, Some(3.0), Some(4.0), Some(5.0)],
            &[Some(1.0), Some(2.0), None, Some(4.0), Some(6.0)],
        )
        .unwrap();
        assert_eq!(s.x(), &[1.0, 4.0, 5.0]);
        assert_eq!(s.y(), &[1.0, 4.0, 6.0]);
        let short = PairedSeries::from_options(&[Some(1.0), None], &[Some(1.0), Some(2.0)]);
        assert_eq!(short, Err(StatsError::TooFewPairs { needed: 3, got: 1 }));
    }

    #[test]
    fn linfit_matches_pearson_square() {
        let s = series(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]);
        assert!((linfit_r2(&s).unwrap() - 0.64).abs() < 1e-14);
        let line = series(&[0.0, 1.0, 2.0], &[3.0, 5.0, 7.0]);
        assert!((linfit_r2(&line).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linfit_independent_noise_is_small() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        assert!(linfit_r2(&series(&x, &y)).unwrap() < 0.05);
    }

    #[test]
    fn avg_correlation_cases() {
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        assert!((avg_correlation(&series(&x, &x)).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
        let s = series(&x, &y);
        let expected = (pearson(&s).unwrap() - 1.0) / 2.0;
        assert!((avg_correlation(&s).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn metrics_hand_values() {
        let m = error_metrics(&[100.0, 200.0], &[110.0, 180.0], true).unwrap();
        assert_eq!(m.mae, 15.0);
        assert_eq!(m.mse, 250.0);
        assert!((m.rmse - 250f64.sqrt()).abs() < 1e-12);
        // (10/100 + 20/200) / 2
        assert!((m.mape.unwrap() - 10.0).abs() < 1e-12);
        // ss_tot = 5000, ss_res = 500
        assert!((m.r2 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn metrics_perfect_and_mean() {
        let a = [3.0, 5.0, 9.0];
        let m = error_metrics(&a, &a, true).unwrap();
        assert_eq!((m.mae, m.mse, m.rmse, m.mape, m.r2), (0.0, 0.0, 0.0, Some(0.0), 1.0));
        let m = error_metrics(&a, &[17.0 / 3.0; 3], false).unwrap();
        assert!(m.r2.abs() < 1e-12);
        assert_eq!(m.mape, None);
    }

    #[test]
    fn metrics_errors() {
        assert_eq!(error_metrics(&[], &[], false), Err(StatsError::Empty));
        assert_eq!(
            error_metrics(&[1.0, 0.0], &[1.0, 1.0], true),
            Err(StatsError::ZeroActual(1))
        );
        assert!(error_metrics(&[1.0, 0.0], &[1.0, 1.0], false).is_ok());
    }
}
