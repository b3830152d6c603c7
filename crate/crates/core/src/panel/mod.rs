//! Region × year panel data: NUTS region codes, feature metadata, national
//! totals, normalization and the year split used for training/testing.

mod csv_io;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{
    load_national_csv, load_panel_csv, read_national_csv, read_panel_csv, write_national_csv,
    write_panel_csv,
};
pub use synth::{generate_synthetic, SynthConfig, SynthFeature, SynthTruth};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("invalid NUTS code {0:?}")]
    InvalidRegionCode(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("duplicate record for ({region}, {year})")]
    DuplicateRecord { region: String, year: i32 },
    #[error("negative capacity {value} for ({region}, {year})")]
    NegativeCapacity {
        region: String,
        year: i32,
        value: f64,
    },
    #[error("record has {got} feature values, schema declares {expected}")]
    FeatureCount { expected: usize, got: usize },
    #[error("non-finite value for feature {feature} at ({region}, {year})")]
    NonFinite {
        feature: String,
        region: String,
        year: i32,
    },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("duplicate feature {0:?} in schema")]
    DuplicateFeature(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("allocated capacity {allocated} MW exceeds national capacity {national} MW in {year}")]
    AllocatedExceedsNational {
        year: i32,
        allocated: f64,
        national: f64,
    },
    #[error("invalid national capacity {value} for {year}")]
    InvalidNational { year: i32, value: f64 },
    #[error("national aggregate of {feature} is zero in {year}")]
    ZeroAggregate { feature: String, year: i32 },
    #[error("NUTS-3 regions without a parent value: {0:?}")]
    OrphanRegions(Vec<String>),
    #[error("train and test years overlap: {0:?}")]
    OverlappingYears(Vec<i32>),
    #[error("years assigned to neither split: {0:?}")]
    UnassignedYears(Vec<i32>),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A NUTS region code; the level is implied by the length (`UK` = 0 … `UKH12` = 3).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RegionCode(String);

impl RegionCode {
    pub fn new(code: impl Into<String>) -> Result<Self, PanelError> {
        let code = code.into();
        let valid = (2..=5).contains(&code.len())
            && code.chars().take(2).all(|c| c.is_ascii_uppercase())
            && code.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
        if valid {
            Ok(Self(code))
        } else {
            Err(PanelError::InvalidRegionCode(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn level(&self) -> u8 {
        (self.0.len() - 2) as u8
    }

    /// Code one level up, or `None` for a country code.
    pub fn parent(&self) -> Option<RegionCode> {
        (self.level() > 0).then(|| Self(self.0[..self.0.len() - 1].to_string()))
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for RegionCode {
    type Err = PanelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for RegionCode {
    type Error = PanelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<RegionCode> for String {
    fn from(c: RegionCode) -> String {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Climate,
    Economic,
    Landuse,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// value / Σ value × 100 over the regions of a year
    NationalTotalShare,
    /// value / mean(value) over the regions of a year
    NationalAverageRelative,
    None,
}

impl FeatureKind {
    pub fn default_normalization(self) -> Normalization {
        match self {
            FeatureKind::Climate => Normalization::NationalAverageRelative,
            FeatureKind::Economic | FeatureKind::Landuse => Normalization::NationalTotalShare,
            FeatureKind::Other => Normalization::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub normalization: Normalization,
}

impl FeatureSpec {
    /// Spec with the kind's default normalization.
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
            normalization: kind.default_normalization(),
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }
}

/// One NUTS-3 region in one year. `features` is aligned with the owning
/// dataset's `feature_specs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionYearRecord {
    pub region: RegionCode,
    pub year: i32,
    pub features: Vec<Option<f64>>,
    pub capacity_mw: Option<f64>,
    /// Percent of the national total; filled in by [`normalize_dataset`].
    pub capacity_share: Option<f64>,
}

impl RegionYearRecord {
    pub fn new(
        region: RegionCode,
        year: i32,
        features: Vec<Option<f64>>,
        capacity_mw: Option<f64>,
    ) -> Self {
        Self {
            region,
            year,
            features,
            capacity_mw,
            capacity_share: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    records: Vec<RegionYearRecord>,
    feature_specs: Vec<FeatureSpec>,
    national_capacity_mw: BTreeMap<i32, f64>,
    allocated_capacity_mw: BTreeMap<i32, f64>,
    normalized: bool,
}

/// Relative slack tolerated when comparing allocated against national totals.
const TOTAL_TOLERANCE: f64 = 1e-9;

impl PanelDataset {
    /// Validates and builds a dataset. Records are stored sorted by
    /// (region, year). Years without an explicit national total use the sum
    /// of regional capacities.
    pub fn new(
        feature_specs: Vec<FeatureSpec>,
        mut records: Vec<RegionYearRecord>,
        national_capacity_mw: Option<BTreeMap<i32, f64>>,
    ) -> Result<Self, PanelError> {
        let mut names = BTreeSet::new();
        for spec in &feature_specs {
            if !names.insert(spec.name.as_str()) {
                return Err(PanelError::DuplicateFeature(spec.name.clone()));
            }
        }
        records.sort_by(|a, b| (&a.region, a.year).cmp(&(&b.region, b.year)));
        for pair in records.windows(2) {
            if pair[0].region == pair[1].region && pair[0].year == pair[1].year {
                return Err(PanelError::DuplicateRecord {
                    region: pair[0].region.to_string(),
                    year: pair[0].year,
                });
            }
        }
        let mut allocated: BTreeMap<i32, f64> = BTreeMap::new();
        for r in &records {
            if r.region.level() != 3 {
                return Err(PanelError::InvalidRegionCode(r.region.to_string()));
            }
            if r.features.len() != feature_specs.len() {
                return Err(PanelError::FeatureCount {
                    expected: feature_specs.len(),
                    got: r.features.len(),
                });
            }
            for (spec, v) in feature_specs.iter().zip(&r.features) {
                if v.is_some_and(|v| !v.is_finite()) {
                    return Err(PanelError::NonFinite {
                        feature: spec.name.clone(),
                        region: r.region.to_string(),
                        year: r.year,
                    });
                }
            }
            let entry = allocated.entry(r.year).or_insert(0.0);
            if let Some(c) = r.capacity_mw {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(PanelError::NegativeCapacity {
                        region: r.region.to_string(),
                        year: r.year,
                        value: c,
                    });
                }
                *entry += c;
            }
        }
        let mut national = national_capacity_mw.unwrap_or_default();
        for (&year, &value) in &national {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(PanelError::InvalidNational { year, value });
            }
        }
        for (&year, &alloc) in &allocated {
            let nat = *national.entry(year).or_insert(alloc);
            if alloc > nat * (1.0 + TOTAL_TOLERANCE) {
                return Err(PanelError::AllocatedExceedsNational {
                    year,
                    allocated: alloc,
                    national: nat,
                });
            }
        }
        Ok(Self {
            records,
            feature_specs,
            national_capacity_mw: national,
            allocated_capacity_mw: allocated,
            normalized: false,
        })
    }

    pub fn records(&self) -> &[RegionYearRecord] {
        &self.records
    }

    pub fn feature_specs(&self) -> &[FeatureSpec] {
        &self.feature_specs
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize, PanelError> {
        self.feature_specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| PanelError::UnknownFeature(name.to_string()))
    }

    /// Values of one feature across all records, in record order.
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>, PanelError> {
        let i = self.feature_index(name)?;
        Ok(self.records.iter().map(|r| r.features[i]).collect())
    }

    pub fn capacity_shares(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.capacity_share).collect()
    }

    pub fn national_capacity_mw(&self) -> &BTreeMap<i32, f64> {
        &self.national_capacity_mw
    }

    pub fn allocated_capacity_mw(&self) -> &BTreeMap<i32, f64> {
        &self.allocated_capacity_mw
    }

    /// National minus regionally recorded capacity for a year.
    pub fn unallocated_mw(&self, year: i32) -> Option<f64> {
        let nat = self.national_capacity_mw.get(&year)?;
        let alloc = self.allocated_capacity_mw.get(&year).copied().unwrap_or(0.0);
        Some(nat - alloc)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.records.iter().map(|r| r.year).collect()
    }

    pub fn regions(&self) -> BTreeSet<RegionCode> {
        self.records.iter().map(|r| r.region.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Copy restricted to the given years; national totals follow.
    pub fn filter_years(&self, years: &BTreeSet<i32>) -> PanelDataset {
        let keep = |y: &i32| years.contains(y);
        PanelDataset {
            records: self
                .records
                .iter()
                .filter(|r| keep(&r.year))
                .cloned()
                .collect(),
            feature_specs: self.feature_specs.clone(),
            national_capacity_mw: self
                .national_capacity_mw
                .iter()
                .filter(|(y, _)| keep(y))
                .map(|(y, v)| (*y, *v))
                .collect(),
            allocated_capacity_mw: self
                .allocated_capacity_mw
                .iter()
                .filter(|(y, _)| keep(y))
                .map(|(y, v)| (*y, *v))
                .collect(),
            normalized: self.normalized,
        }
    }
}

/// Assigns every level-3 region the value of its level-2 parent.
pub fn broadcast_nuts2_to_nuts3(
    values: &BTreeMap<RegionCode, f64>,
    registry: &[RegionCode],
) -> Result<BTreeMap<RegionCode, f64>, PanelError> {
    let mut out = BTreeMap::new();
    let mut orphans = Vec::new();
    for code in registry {
        let parent = (code.level() == 3).then(|| code.parent()).flatten();
        match parent.and_then(|p| values.get(&p)) {
            Some(v) => {
                out.insert(code.clone(), *v);
            }
            None => orphans.push(code.to_string()),
        }
    }
    if orphans.is_empty() {
        Ok(out)
    } else {
        Err(PanelError::OrphanRegions(orphans))
    }
}

/// Applies each feature's normalization per year and derives capacity shares
/// (percent of the national total).
///
/// Share and relative features are fixed points of their own transform (the
/// present values of a year already sum to 100, resp. average to 1), so
/// normalizing a normalized dataset changes them only by rounding. Capacity
/// shares are always recomputed from `capacity_mw` and the stored national
/// totals, hence exactly idempotent.
pub fn normalize_dataset(ds: &PanelDataset) -> Result<PanelDataset, PanelError> {
    let mut out = ds.clone();
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        by_year.entry(r.year).or_default().push(i);
    }
    for (j, spec) in ds.feature_specs.iter().enumerate() {
        if spec.normalization == Normalization::None {
            continue;
        }
        for (&year, rows) in &by_year {
            let present: Vec<f64> = rows.iter().filter_map(|&i| ds.records[i].features[j]).collect();
            if present.is_empty() {
                continue;
            }
            let total: f64 = present.iter().sum();
            let divisor = match spec.normalization {
                Normalization::NationalTotalShare => total / 100.0,
                Normalization::NationalAverageRelative => total / present.len() as f64,
                Normalization::None => unreachable!(),
            };
            if divisor == 0.0 {
                return Err(PanelError::ZeroAggregate {
                    feature: spec.name.clone(),
                    year,
                });
            }
            for &i in rows {
                if let Some(v) = ds.records[i].features[j] {
                    out.records[i].features[j] = Some(v / divisor);
                }
            }
        }
    }
    for r in &mut out.records {
        r.capacity_share = match r.capacity_mw {
            None => None,
            Some(c) => {
                let nat = ds.national_capacity_mw[&r.year];
                if nat == 0.0 {
                    return Err(PanelError::ZeroAggregate {
                        feature: "capacity_mw".to_string(),
                        year: r.year,
                    });
                }
                Some(c / nat * 100.0)
            }
        };
    }
    out.normalized = true;
    Ok(out)
}

/// Partitions records into train and test years. Every record year must be
/// assigned to exactly one side.
pub fn split_by_year(
    ds: &PanelDataset,
    train_years: &BTreeSet<i32>,
    test_years: &BTreeSet<i32>,
) -> Result<(PanelDataset, PanelDataset), PanelError> {
    let overlap: Vec<i32> = train_years.intersection(test_years).copied().collect();
    if !overlap.is_empty() {
        return Err(PanelError::OverlappingYears(overlap));
    }
    let unassigned: Vec<i32> = ds
        .years()
        .into_iter()
        .filter(|y| !train_years.contains(y) && !test_years.contains(y))
        .collect();
    if !unassigned.is_empty() {
        return Err(PanelError::UnassignedYears(unassigned));
    }
    Ok((ds.filter_years(train_years), ds.filter_years(test_years)))
}

/// Fraction of records with a value for `feature`.
pub fn feature_availability(ds: &PanelDataset, feature: &str) -> Result<f64, PanelError> {
    let j = ds.feature_index(feature)?;
    if ds.records.is_empty() {
        return Ok(0.0);
    }
    let present = ds.records.iter().filter(|r| r.features[j].is_some()).count();
    Ok(present as f64 / ds.records.len() as f64)
}
