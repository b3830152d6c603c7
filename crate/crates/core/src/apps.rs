//! Capacity applications: regional estimates converted to MW, scaling to the
//! national total, allocation of unallocated capacity, the solar PV
//! deployment index (SPVDI) and national/regional error reports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbtree::{GBTModel, GbtError};
use crate::panel::{PanelDataset, PanelError, RegionCode};
use crate::stats::{error_metrics, MetricReport, StatsError};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("dataset must be normalized first")]
    NotNormalized,
    #[error("model feature {0} is not in the dataset")]
    SchemaMismatch(String),
    #[error("year {0} is not in the dataset")]
    UnknownYear(i32),
    #[error("no national capacity for year {0}")]
    MissingNational(i32),
    #[error("predicted capacity for year {0} sums to {1}; cannot scale")]
    NonPositivePredictedSum(i32, f64),
    #[error("estimates for year {0} have not been scaled")]
    NotScaled(i32),
    #[error("unallocated capacity for year {year} is negative ({value} MW)")]
    NegativeUnallocated { year: i32, value: f64 },
    #[error("invalid year range {0}..={1}")]
    InvalidRange(i32, i32),
    #[error("missing region-years in SPVDI inputs: {}", format_pairs(.0))]
    CoverageGap(Vec<(String, i32)>),
    #[error("no estimates")]
    Empty,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Gbt(#[from] GbtError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_pairs(pairs: &[(String, i32)]) -> String {
    let shown: Vec<String> = pairs.iter().take(20).map(|(r, y)| format!("{r}/{y}")).collect();
    if pairs.len() > 20 {
        format!("{} and {} more", shown.join(", "), pairs.len() - 20)
    } else {
        shown.join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalEstimate {
    pub region: RegionCode,
    pub year: i32,
    pub predicted_share_pct: f64,
    pub predicted_mw: f64,
    pub scaled_mw: Option<f64>,
}

/// Which prediction column a report uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    #[default]
    Unscaled,
    Scaled,
}

impl RegionalEstimate {
    pub fn mw(&self, basis: Basis) -> Result<f64, AppError> {
        match basis {
            Basis::Unscaled => Ok(self.predicted_mw),
            Basis::Scaled => self.scaled_mw.ok_or(AppError::NotScaled(self.year)),
        }
    }
}

/// Model share predictions for every record in `years` (all years when
/// `None`), converted to MW with the same-year national total.
pub fn predict_unscaled(
    model: &GBTModel,
    ds: &PanelDataset,
    years: Option<&BTreeSet<i32>>,
) -> Result<Vec<RegionalEstimate>, AppError> {
    if !ds.is_normalized() {
        return Err(AppError::NotNormalized);
    }
    let idx = model
        .feature_names
        .iter()
        .map(|f| ds.feature_index(f).map_err(|_| AppError::SchemaMismatch(f.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let available = ds.years();
    if let Some(ys) = years {
        if let Some(y) = ys.iter().find(|y| !available.contains(y)) {
            return Err(AppError::UnknownYear(*y));
        }
    }
    let national = ds.national_capacity_mw();
    let records: Vec<_> = ds
        .records()
        .iter()
        .filter(|r| years.is_none_or(|ys| ys.contains(&r.year)))
        .collect();
    records
        .par_iter()
        .map(|r| {
            let nat = *national.get(&r.year).ok_or(AppError::MissingNational(r.year))?;
            let values: Vec<Option<f64>> = idx.iter().map(|&j| r.features[j]).collect();
            let share = model.predict_values(&values);
            Ok(RegionalEstimate {
                region: r.region.clone(),
                year: r.year,
                predicted_share_pct: share,
                predicted_mw: share / 100.0 * nat,
                scaled_mw: None,
            })
        })
        .collect()
}

/// Multiplies each year's predictions so they sum to the national total.
pub fn scale_to_national(
    estimates: &[RegionalEstimate],
    national: &BTreeMap<i32, f64>,
) -> Result<Vec<RegionalEstimate>, AppError> {
    let mut sums: BTreeMap<i32, f64> = BTreeMap::new();
    for e in estimates {
        *sums.entry(e.year).or_insert(0.0) += e.predicted_mw;
    }
    let mut factors = BTreeMap::new();
    for (&year, &sum) in &sums {
        let nat = *national.get(&year).ok_or(AppError::MissingNational(year))?;
        if !(sum > 0.0) {
            return Err(AppError::NonPositivePredictedSum(year, sum));
        }
        factors.insert(year, nat / sum);
    }
    Ok(estimates
        .iter()
        .map(|e| RegionalEstimate {
            scaled_mw: Some(e.predicted_mw * factors[&e.year]),
            ..e.clone()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPolicy {
    /// Known regional capacity plus a share of the unallocated remainder.
    #[default]
    Additive,
    /// Regional totals replaced by the scaled model.
    FullRescale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocatedRegion {
    pub region: RegionCode,
    pub known_mw: f64,
    pub predicted_share_pct: f64,
    pub allocated_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub year: i32,
    pub policy: AllocationPolicy,
    pub national_mw: f64,
    pub unallocated_input_mw: f64,
    pub regions: Vec<AllocatedRegion>,
}

impl AllocationResult {
    pub fn total_mw(&self) -> f64 {
        self.regions.iter().map(|r| r.allocated_mw).sum()
    }
}

/// Allocation from known capacities and predicted shares. Negative
/// predicted shares get zero weight.
pub fn allocate(
    year: i32,
    known: &[(RegionCode, f64)],
    predicted_share_pct: &[f64],
    national_mw: f64,
    policy: AllocationPolicy,
) -> Result<AllocationResult, AppError> {
    assert_eq!(known.len(), predicted_share_pct.len(), "one share per region");
    let allocated: f64 = known.iter().map(|(_, k)| k).sum();
    let unallocated = national_mw - allocated;
    if unallocated < -1e-9 * national_mw.abs().max(1.0) {
        return Err(AppError::NegativeUnallocated {
            year,
            value: unallocated,
        });
    }
    let unallocated = unallocated.max(0.0);
    let weights: Vec<f64> = predicted_share_pct.iter().map(|s| s.max(0.0)).collect();
    let total_weight: f64 = weights.iter().sum();
    let needs_weights = policy == AllocationPolicy::FullRescale || unallocated > 0.0;
    if needs_weights && !(total_weight > 0.0) {
        return Err(AppError::NonPositivePredictedSum(year, total_weight));
    }
    let regions = known
        .iter()
        .zip(predicted_share_pct.iter().zip(&weights))
        .map(|((region, k), (&share, &w))| {
            let allocated_mw = match policy {
                AllocationPolicy::Additive if unallocated == 0.0 => *k,
                AllocationPolicy::Additive => k + unallocated * w / total_weight,
                AllocationPolicy::FullRescale => national_mw * w / total_weight,
            };
            AllocatedRegion {
                region: region.clone(),
                known_mw: *k,
                predicted_share_pct: share,
                allocated_mw,
            }
        })
        .collect();
    Ok(AllocationResult {
        year,
        policy,
        national_mw,
        unallocated_input_mw: unallocated,
        regions,
    })
}

/// Distributes one year's unallocated national capacity across the regions
/// of `ds` using the model's predicted shares. Missing known capacities
/// count as zero.
pub fn allocate_unallocated(
    ds: &PanelDataset,
    model: &GBTModel,
    year: i32,
    policy: AllocationPolicy,
) -> Result<AllocationResult, AppError> {
    let years = BTreeSet::from([year]);
    let estimates = predict_unscaled(model, ds, Some(&years))?;
    let national = *ds.national_capacity_mw().get(&year).ok_or(AppError::MissingNational(year))?;
    let known: Vec<(RegionCode, f64)> = ds
        .records()
        .iter()
        .filter(|r| r.year == year)
        .map(|r| (r.region.clone(), r.capacity_mw.unwrap_or(0.0)))
        .collect();
    let shares: Vec<f64> = estimates.iter().map(|e| e.predicted_share_pct).collect();
    allocate(year, &known, &shares, national, policy)
}

pub type RegionYearMw = BTreeMap<(RegionCode, i32), f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpvdiEntry {
    pub rank: usize,
    pub region: RegionCode,
    pub index_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpvdiReport {
    pub start_year: i32,
    pub end_year: i32,
    /// Descending by index; ties in region order.
    pub entries: Vec<SpvdiEntry>,
}

impl SpvdiReport {
    pub fn index(&self, region: &RegionCode) -> Option<f64> {
        self.entries.iter().find(|e| &e.region == region).map(|e| e.index_mw)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.index_mw).sum()
    }
}

/// Per region, the sum over `t1..=t2` of actual minus predicted MW.
/// Positive values mean more capacity than the model expects.
pub fn spvdi(actual: &RegionYearMw, predicted: &RegionYearMw, t1: i32, t2: i32) -> Result<SpvdiReport, AppError> {
    if t1 > t2 {
        return Err(AppError::InvalidRange(t1, t2));
    }
    let regions: BTreeSet<&RegionCode> = actual.keys().chain(predicted.keys()).map(|(r, _)| r).collect();
    if regions.is_empty() {
        return Err(AppError::Empty);
    }
    let mut missing = Vec::new();
    let mut entries = Vec::new();
    for region in regions {
        let mut index = 0.0;
        for year in t1..=t2 {
            let key = (region.clone(), year);
            match (actual.get(&key), predicted.get(&key)) {
                (Some(a), Some(p)) => index += a - p,
                _ => missing.push((region.to_string(), year)),
            }
        }
        entries.push(SpvdiEntry {
            rank: 0,
            region: region.clone(),
            index_mw: index,
        });
    }
    if !missing.is_empty() {
        return Err(AppError::CoverageGap(missing));
    }
    entries.sort_by(|a, b| b.index_mw.total_cmp(&a.index_mw).then(a.region.cmp(&b.region)));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(SpvdiReport {
        start_year: t1,
        end_year: t2,
        entries,
    })
}

/// Recorded regional MW keyed by (region, year).
pub fn actual_mw(ds: &PanelDataset) -> RegionYearMw {
    ds.records()
        .iter()
        .filter_map(|r| r.capacity_mw.map(|c| ((r.region.clone(), r.year), c)))
        .collect()
}

pub fn estimates_mw(estimates: &[RegionalEstimate], basis: Basis) -> Result<RegionYearMw, AppError> {
    estimates
        .iter()
        .map(|e| Ok(((e.region.clone(), e.year), e.mw(basis)?)))
        .collect()
}

/// Yearly national totals against the summed regional predictions, MAPE
/// included.
pub fn national_report(
    estimates: &[RegionalEstimate],
    national: &BTreeMap<i32, f64>,
    basis: Basis,
) -> Result<MetricReport, AppError> {
    let mut sums: BTreeMap<i32, f64> = BTreeMap::new();
    for e in estimates {
        *sums.entry(e.year).or_insert(0.0) += e.mw(basis)?;
    }
    if sums.is_empty() {
        return Err(AppError::Empty);
    }
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    for (&year, &sum) in &sums {
        actual.push(*national.get(&year).ok_or(AppError::MissingNational(year))?);
        predicted.push(sum);
    }
    Ok(error_metrics(&actual, &predicted, true)?)
}

/// Region-year MW metrics over estimates that have a recorded capacity.
pub fn regional_report(
    estimates: &[RegionalEstimate],
    actual: &RegionYearMw,
    basis: Basis,
) -> Result<MetricReport, AppError> {
    let mut a = Vec::new();
    let mut p = Vec::new();
    for e in estimates {
        if let Some(v) = actual.get(&(e.region.clone(), e.year)) {
            a.push(*v);
            p.push(e.mw(basis)?);
        }
    }
    if a.is_empty() {
        return Err(AppError::Empty);
    }
    Ok(error_metrics(&a, &p, false)?)
}

pub fn write_estimates_csv<W: Write>(estimates: &[RegionalEstimate], writer: W) -> Result<(), AppError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["region", "year", "predicted_share_pct", "predicted_mw", "scaled_mw"])?;
    for e in estimates {
        out.write_record([
            e.region.to_string(),
            e.year.to_string(),
            e.predicted_share_pct.to_string(),
            e.predicted_mw.to_string(),
            e.scaled_mw.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_spvdi_csv<W: Write>(report: &SpvdiReport, writer: W) -> Result<(), AppError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["rank", "region", "spvdi_mw", "start_year", "end_year"])?;
    for e in &report.entries {
        out.write_record([
            e.rank.to_string(),
            e.region.to_string(),
            e.index_mw.to_string(),
            report.start_year.to_string(),
            report.end_year.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_allocation_csv<W: Write>(results: &[AllocationResult], writer: W) -> Result<(), AppError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "year",
        "region",
        "policy",
        "known_mw",
        "predicted_share_pct",
        "allocated_mw",
        "added_mw",
    ])?;
    for r in results {
        let policy = match r.policy {
            AllocationPolicy::Additive => "additive",
            AllocationPolicy::FullRescale => "full_rescale",
        };
        for g in &r.regions {
            out.write_record([
                r.year.to_string(),
                g.region.to_string(),
                policy.to_string(),
                g.known_mw.to_string(),
                g.predicted_share_pct.to_string(),
                g.allocated_mw.to_string(),
                (g.allocated_mw - g.known_mw).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
