//! Seeded synthetic panels with a known capacity-share law.
//!
//! For every year the normalized features `z` of each region determine an
//! unnormalized weight
//!
//! ```text
//! g = exp(coef_linear · z_signal1 + coef_sqrt · sqrt(z_signal2)) · exp(noise_scale · ε),  ε ~ N(0, 1)
//! ```
//!
//! and the regional shares of the *allocated* capacity are `g / Σ g × 100`.
//! Allocated capacity grows geometrically; the national total adds a constant
//! unallocated fraction on top. Noise features are independent of capacity.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    normalize_dataset, FeatureKind, FeatureSpec, PanelDataset, PanelError, RegionCode,
    RegionYearRecord,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFeature {
    pub name: String,
    pub kind: FeatureKind,
}

impl SynthFeature {
    fn new(name: &str, kind: FeatureKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_regions: usize,
    pub start_year: i32,
    pub n_years: usize,
    /// Exactly two: the first enters linearly, the second through a square root.
    pub signal_features: Vec<SynthFeature>,
    pub noise_features: Vec<SynthFeature>,
    pub coef_linear: f64,
    pub coef_sqrt: f64,
    /// Standard deviation of the log-normal multiplicative noise on capacity.
    pub noise_scale: f64,
    /// Log-scale spread of the static per-region feature levels.
    pub region_spread: f64,
    /// Log-scale year-to-year jitter of feature values.
    pub year_jitter: f64,
    pub initial_capacity_mw: f64,
    pub annual_growth: f64,
    /// National capacity = allocated × (1 + unallocated_fraction).
    pub unallocated_fraction: f64,
    /// Probability that a noise-feature cell is left empty.
    pub missing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_regions: 168,
            start_year: 2010,
            n_years: 14,
            signal_features: vec![
                SynthFeature::new("arable_land", FeatureKind::Landuse),
                SynthFeature::new("gva_veterinary", FeatureKind::Economic),
            ],
            noise_features: vec![
                SynthFeature::new("ghi", FeatureKind::Climate),
                SynthFeature::new("temperature", FeatureKind::Climate),
                SynthFeature::new("forest", FeatureKind::Landuse),
                SynthFeature::new("water_bodies", FeatureKind::Landuse),
                SynthFeature::new("gva_retail", FeatureKind::Economic),
                SynthFeature::new("population_density", FeatureKind::Other),
            ],
            coef_linear: 1.2,
            coef_sqrt: 1.5,
            noise_scale: 0.1,
            region_spread: 0.6,
            year_jitter: 0.03,
            initial_capacity_mw: 1000.0,
            annual_growth: 0.25,
            unallocated_fraction: 0.03,
            missing_rate: 0.0,
        }
    }
}

/// Ground truth of a generated panel, for test harnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub formula: String,
    pub linear_feature: String,
    pub sqrt_feature: String,
    pub coef_linear: f64,
    pub coef_sqrt: f64,
    pub noise_scale: f64,
    pub noise_features: Vec<String>,
    pub seed: u64,
}

const LEVEL1: &[u8] = b"CDEFGHIJKLMN";

fn region_code(i: usize) -> RegionCode {
    let l1 = LEVEL1[i % LEVEL1.len()] as char;
    let j = i / LEVEL1.len();
    RegionCode::new(format!("UK{l1}{}{}", j / 9 + 1, j % 9 + 1)).expect("generated code is valid")
}

impl SynthConfig {
    fn validate(&self) -> Result<(), PanelError> {
        let bad = |m: &str| Err(PanelError::InvalidConfig(m.to_string()));
        let max_regions = LEVEL1.len() * 81;
        if self.n_regions < 10 || self.n_regions > max_regions {
            return bad(&format!("n_regions must be in 10..={max_regions}"));
        }
        if self.n_years < 3 {
            return bad("n_years must be at least 3");
        }
        if self.signal_features.len() != 2 {
            return bad("exactly two signal features are required");
        }
        if self.noise_features.is_empty() {
            return bad("at least one noise feature is required");
        }
        let mut names: Vec<&str> = self
            .signal_features
            .iter()
            .chain(&self.noise_features)
            .map(|f| f.name.as_str())
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("feature names must be unique");
        }
        let scalars = [
            ("noise_scale", self.noise_scale),
            ("region_spread", self.region_spread),
            ("year_jitter", self.year_jitter),
            ("annual_growth", self.annual_growth),
            ("unallocated_fraction", self.unallocated_fraction),
        ];
        for (name, v) in scalars {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be a finite non-negative number"));
            }
        }
        if !(self.initial_capacity_mw > 0.0) || !self.initial_capacity_mw.is_finite() {
            return bad("initial_capacity_mw must be positive");
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad("missing_rate must be in [0, 1)");
        }
        if !self.coef_linear.is_finite() || !self.coef_sqrt.is_finite() {
            return bad("coefficients must be finite");
        }
        Ok(())
    }

    pub fn feature_specs(&self) -> Vec<FeatureSpec> {
        self.signal_features
            .iter()
            .chain(&self.noise_features)
            .map(|f| FeatureSpec::new(&f.name, f.kind))
            .collect()
    }

    pub fn truth(&self, seed: u64) -> SynthTruth {
        SynthTruth {
            formula: "share ∝ exp(coef_linear * z1 + coef_sqrt * sqrt(z2)) * exp(noise_scale * N(0,1)), z = normalized features".into(),
            linear_feature: self.signal_features[0].name.clone(),
            sqrt_feature: self.signal_features[1].name.clone(),
            coef_linear: self.coef_linear,
            coef_sqrt: self.coef_sqrt,
            noise_scale: self.noise_scale,
            noise_features: self.noise_features.iter().map(|f| f.name.clone()).collect(),
            seed,
        }
    }

    /// Noise-free capacity weight of the law for normalized signal values.
    pub fn weight(&self, z_linear: f64, z_sqrt: f64) -> f64 {
        (self.coef_linear * z_linear + self.coef_sqrt * z_sqrt.sqrt()).exp()
    }
}

fn kind_scale(kind: FeatureKind) -> f64 {
    match kind {
        FeatureKind::Climate => 1000.0,
        FeatureKind::Economic => 50.0,
        FeatureKind::Landuse => 120.0,
        FeatureKind::Other => 10.0,
    }
}

/// Generates a raw (unnormalized) panel. Deterministic in `seed`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<PanelDataset, PanelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };

    let specs = config.feature_specs();
    let n_feat = specs.len();
    let (nr, ny) = (config.n_regions, config.n_years);
    // raw[f][r][t]; climate features get a tighter spread, as irradiance does.
    let mut raw = vec![vec![vec![0.0; ny]; nr]; n_feat];
    for (f, spec) in specs.iter().enumerate() {
        let spread = match spec.kind {
            FeatureKind::Climate => config.region_spread / 6.0,
            _ => config.region_spread,
        };
        for row in raw[f].iter_mut() {
            let level = kind_scale(spec.kind) * (spread * normal()).exp();
            let trend = 0.01 * normal();
            for (t, cell) in row.iter_mut().enumerate() {
                *cell = level * (trend * t as f64 + config.year_jitter * normal()).exp();
            }
        }
    }
    let noise: Vec<Vec<f64>> = (0..nr)
        .map(|_| (0..ny).map(|_| config.noise_scale * normal()).collect())
        .collect();

    let years: Vec<i32> = (0..ny).map(|t| config.start_year + t as i32).collect();
    let regions: Vec<RegionCode> = (0..nr).map(region_code).collect();
    let records: Vec<RegionYearRecord> = regions
        .iter()
        .enumerate()
        .flat_map(|(r, code)| {
            let raw = &raw;
            years.iter().enumerate().map(move |(t, &year)| {
                let feats = (0..n_feat).map(|f| Some(raw[f][r][t])).collect();
                RegionYearRecord::new(code.clone(), year, feats, None)
            })
        })
        .collect();

    // Capacity follows from the normalized signal features.
    let provisional = PanelDataset::new(specs.clone(), records, None)?;
    let normalized = normalize_dataset(&provisional)?;
    let region_index: BTreeMap<&RegionCode, usize> =
        regions.iter().enumerate().map(|(r, c)| (c, r)).collect();
    let mut weights: BTreeMap<i32, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, rec) in normalized.records().iter().enumerate() {
        let r = region_index[&rec.region];
        let t = (rec.year - config.start_year) as usize;
        let z1 = rec.features[0].expect("signal present");
        let z2 = rec.features[1].expect("signal present");
        let g = config.weight(z1, z2) * noise[r][t].exp();
        weights.entry(rec.year).or_default().push((i, g));
    }
    let mut records = provisional.records().to_vec();
    let mut national = BTreeMap::new();
    for (t, &year) in years.iter().enumerate() {
        let allocated = config.initial_capacity_mw * (1.0 + config.annual_growth).powi(t as i32);
        let w = &weights[&year];
        let total: f64 = w.iter().map(|(_, g)| g).sum();
        for &(i, g) in w {
            records[i].capacity_mw = Some(g / total * allocated);
        }
        national.insert(year, allocated * (1.0 + config.unallocated_fraction));
    }

    if config.missing_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x006d_6973_7369_6e67);
        for rec in &mut records {
            for cell in rec.features.iter_mut().skip(2) {
                if rng.random::<f64>() < config.missing_rate {
                    *cell = None;
                }
            }
        }
    }
    PanelDataset::new(specs, records, Some(national))
}
