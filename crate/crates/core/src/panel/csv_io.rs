use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{FeatureSpec, PanelDataset, PanelError, RegionCode, RegionYearRecord};

const REGION: &str = "region";
const YEAR: &str = "year";
const CAPACITY: &str = "capacity_mw";
const NATIONAL: &str = "national_capacity_mw";

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn malformed(line: u64, message: impl Into<String>) -> PanelError {
    PanelError::Malformed {
        line,
        message: message.into(),
    }
}

fn parse_opt(cell: &str, column: &str, line: u64) -> Result<Option<f64>, PanelError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| malformed(line, format!("column {column}: cannot parse {cell:?}")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("column {column}: non-finite value {cell:?}")));
    }
    Ok(Some(v))
}

/// Parses a panel table (`region,year,capacity_mw,<features…>`). Columns not
/// declared in `schema` are ignored.
pub fn read_panel_csv<R: Read>(
    reader: R,
    schema: &[FeatureSpec],
    national: Option<BTreeMap<i32, f64>>,
) -> Result<PanelDataset, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let region_col = col(REGION)?;
    let year_col = col(YEAR)?;
    let cap_col = col(CAPACITY)?;
    let feature_cols = schema
        .iter()
        .map(|s| col(&s.name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = line_of(&row);
        let region = RegionCode::new(&row[region_col])
            .map_err(|e| malformed(line, e.to_string()))?;
        if region.level() != 3 {
            return Err(malformed(line, format!("{region} is not a NUTS-3 code")));
        }
        let year: i32 = row[year_col]
            .parse()
            .map_err(|_| malformed(line, format!("bad year {:?}", &row[year_col])))?;
        if !seen.insert((region.clone(), year)) {
            return Err(PanelError::DuplicateRecord {
                region: region.to_string(),
                year,
            });
        }
        let capacity = parse_opt(&row[cap_col], CAPACITY, line)?;
        if let Some(c) = capacity.filter(|c| *c < 0.0) {
            return Err(PanelError::NegativeCapacity {
                region: region.to_string(),
                year,
                value: c,
            });
        }
        let features = schema
            .iter()
            .zip(&feature_cols)
            .map(|(s, &c)| parse_opt(&row[c], &s.name, line))
            .collect::<Result<Vec<_>, _>>()?;
        records.push(RegionYearRecord::new(region, year, features, capacity));
    }
    PanelDataset::new(schema.to_vec(), records, national)
}

/// Parses a `year,national_capacity_mw` table.
pub fn read_national_csv<R: Read>(reader: R) -> Result<BTreeMap<i32, f64>, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let (yc, nc) = (col(YEAR)?, col(NATIONAL)?);
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = line_of(&row);
        let year: i32 = row[yc]
            .parse()
            .map_err(|_| malformed(line, format!("bad year {:?}", &row[yc])))?;
        let value = parse_opt(&row[nc], NATIONAL, line)?
            .ok_or_else(|| malformed(line, "empty national capacity"))?;
        if out.insert(year, value).is_some() {
            return Err(malformed(line, format!("duplicate year {year}")));
        }
    }
    Ok(out)
}

/// Loads a panel CSV, taking national totals from `national_path` when given
/// (otherwise the regional sums are used).
pub fn load_panel_csv(
    path: &Path,
    schema: &[FeatureSpec],
    national_path: Option<&Path>,
) -> Result<PanelDataset, PanelError> {
    let national = national_path.map(load_national_csv).transpose()?;
    read_panel_csv(File::open(path)?, schema, national)
}

pub fn load_national_csv(path: &Path) -> Result<BTreeMap<i32, f64>, PanelError> {
    read_national_csv(File::open(path)?)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the panel in the same layout `read_panel_csv` accepts. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_panel_csv<W: Write>(ds: &PanelDataset, writer: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![REGION.to_string(), YEAR.to_string(), CAPACITY.to_string()];
    header.extend(ds.feature_names());
    w.write_record(&header)?;
    for r in ds.records() {
        let mut row = vec![r.region.to_string(), r.year.to_string(), cell(r.capacity_mw)];
        row.extend(r.features.iter().map(|v| cell(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_national_csv<W: Write>(national: &BTreeMap<i32, f64>, writer: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([YEAR, NATIONAL])?;
    for (year, v) in national {
        w.write_record([year.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
