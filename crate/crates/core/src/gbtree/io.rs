use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use super::{GBTModel, GbtError, GridSearchResult};

pub const MODEL_SCHEMA_VERSION: u64 = 1;

#[derive(Serialize)]
struct ModelFileRef<'a> {
    schema_version: u64,
    model: &'a GBTModel,
}

pub fn write_model<W: Write>(model: &GBTModel, writer: W) -> Result<(), GbtError> {
    let file = ModelFileRef {
        schema_version: MODEL_SCHEMA_VERSION,
        model,
    };
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

pub fn read_model<R: Read>(reader: R) -> Result<GBTModel, GbtError> {
    let mut value: serde_json::Value = serde_json::from_reader(reader)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    if found != Some(MODEL_SCHEMA_VERSION) {
        return Err(GbtError::SchemaVersion {
            found,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let model = value
        .get_mut("model")
        .map(serde_json::Value::take)
        .ok_or_else(|| serde::de::Error::missing_field("model"))
        .map_err(GbtError::Json)?;
    Ok(serde_json::from_value(model)?)
}

pub fn save_model(model: &GBTModel, path: &Path) -> Result<(), GbtError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<GBTModel, GbtError> {
    read_model(BufReader::new(File::open(path)?))
}

/// One row per grid point: parameters, mean/std RMSE and per-fold RMSE.
pub fn write_cv_report<W: Write>(result: &GridSearchResult, writer: W) -> Result<(), GbtError> {
    let k = result.results.first().map_or(0, |r| r.fold_rmse.len());
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = [
        "grid_index",
        "best",
        "n_rounds",
        "learning_rate",
        "max_depth",
        "min_child_weight",
        "reg_lambda",
        "gamma",
        "subsample",
        "seed",
        "mean_rmse",
        "std_rmse",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=k).map(|f| format!("fold_{f}")));
    out.write_record(&header).map_err(csv_err)?;
    for (i, r) in result.results.iter().enumerate() {
        let p = &r.params;
        let mut row = vec![
            i.to_string(),
            (i == result.best_index).to_string(),
            p.n_rounds.to_string(),
            p.learning_rate.to_string(),
            p.max_depth.to_string(),
            p.min_child_weight.to_string(),
            p.reg_lambda.to_string(),
            p.gamma.to_string(),
            p.subsample.to_string(),
            p.seed.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
        ];
        row.extend(r.fold_rmse.iter().map(f64::to_string));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> GbtError {
    GbtError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbtree::{train, Hyperparams, TrainingMatrix};

    fn model(rounds: usize) -> GBTModel {
        let xs: Vec<Option<f64>> = (0..40).map(|i| (i % 7 != 0).then_some(i as f64 / 3.0)).collect();
        let ys: Vec<f64> = (0..40).map(|i| (i as f64 / 3.0).cos() + 0.1).collect();
        let m = TrainingMatrix::new(vec!["a".into()], vec![xs], ys).unwrap();
        train(
            &m,
            &Hyperparams {
                n_rounds: rounds,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_predictions_bit_exact() {
        for rounds in [0, 25] {
            let m = model(rounds);
            let mut buf = Vec::new();
            write_model(&m, &mut buf).unwrap();
            let back = read_model(buf.as_slice()).unwrap();
            assert_eq!(back, m);
            for i in 0..200 {
                let x = Some(i as f64 * 0.071 - 1.0);
                assert_eq!(
                    back.predict_values(&[x]).to_bits(),
                    m.predict_values(&[x]).to_bits()
                );
            }
        }
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let mut buf = Vec::new();
        write_model(&model(5), &mut buf).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(matches!(read_model(buf.as_slice()), Err(GbtError::Json(_))));
    }

    #[test]
    fn wrong_version_rejected() {
        let mut buf = Vec::new();
        write_model(&model(1), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(
            "\"schema_version\": 1",
            "\"schema_version\": 99",
        );
        assert!(matches!(
            read_model(text.as_bytes()),
            Err(GbtError::SchemaVersion { found: Some(99), .. })
        ));
    }
}
