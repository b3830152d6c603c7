use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use solarcap_core::apps::{
    actual_mw, allocate_unallocated, estimates_mw, national_report, predict_unscaled, regional_report,
    scale_to_national, spvdi, write_allocation_csv, write_estimates_csv, write_spvdi_csv, Basis,
};
use solarcap_core::explain::{
    cluster_features, group_shares, importance_shares, pca, tree_shap, write_importance_csv, write_waterfall_csv,
};
use solarcap_core::gbtree::{
    kfold_grid_search, load_model, save_model, train, write_cv_report, FeatureRow, GBTModel, Hyperparams,
    TrainingMatrix, TrainingMeta,
};
use solarcap_core::panel::{
    generate_synthetic, load_panel_csv, normalize_dataset, split_by_year, write_national_csv,
    write_panel_csv, FeatureSpec, PanelDataset, RegionCode,
};
use solarcap_core::select::{rank_features, sweep_thresholds, write_ranking_csv, GbtCvEvaluator};
use solarcap_core::stats::{error_metrics, MetricReport};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg;

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(format!("{what} not found: {}", path.display())))
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::failed(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
{
    let file = File::create(path).map_err(|e| CliError::failed(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::failed(format!("cannot write {}: {e}", path.display())))
}

fn load_schema(cfg: &RunConfig) -> Result<Vec<FeatureSpec>, CliError> {
    let path = cfg.schema_path();
    require(&path, "schema file")?;
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| CliError::failed(format!("{}: {e}", path.display())))
}

/// Panel, schema and national totals, normalized.
fn load_dataset(cfg: &RunConfig) -> Result<PanelDataset, CliError> {
    let schema = load_schema(cfg)?;
    let panel = cfg.panel_path();
    let national = cfg.national_path();
    require(&panel, "panel file")?;
    require(&national, "national totals file")?;
    let ds = load_panel_csv(&panel, &schema, Some(&national))?;
    Ok(normalize_dataset(&ds)?)
}

fn load_trained(cfg: &RunConfig) -> Result<GBTModel, CliError> {
    let path = cfg.model_path();
    require(&path, "model file")?;
    Ok(load_model(&path)?)
}

fn selected_years(cfg: &RunConfig, ds: &PanelDataset) -> Result<BTreeSet<i32>, CliError> {
    match &cfg.years {
        Some(ys) => {
            let available = ds.years();
            if let Some(y) = ys.iter().find(|y| !available.contains(y)) {
                return Err(CliError::failed(format!("year {y} is not in the panel")));
            }
            Ok(ys.iter().copied().collect())
        }
        None => Ok(ds.years()),
    }
}

fn fmt_years(years: &BTreeSet<i32>) -> String {
    match (years.first(), years.last()) {
        (Some(a), Some(b)) if a == b => a.to_string(),
        (Some(a), Some(b)) => format!("{a}-{b}"),
        _ => "none".into(),
    }
}

pub fn synth(cfg: &RunConfig) -> Result<String, CliError> {
    let seed = cfg.require_seed("synth")?;
    let synth = cfg.synth.clone().unwrap_or_default();
    let ds = generate_synthetic(&synth, seed)?;
    let dir = out_dir(cfg)?;
    write_with(&dir.join("panel.csv"), |w| Ok(write_panel_csv(&ds, w)?))?;
    write_with(&dir.join("national.csv"), |w| Ok(write_national_csv(ds.national_capacity_mw(), w)?))?;
    write_json(&dir.join("schema.json"), &synth.feature_specs())?;
    write_json(&dir.join("ground_truth.json"), &synth.truth(seed))?;
    Ok(format!(
        "synth: {} region-years, {} regions, {} features, seed {seed} -> {}",
        ds.len(),
        ds.regions().len(),
        ds.feature_specs().len(),
        dir.display()
    ))
}

pub fn rank(cfg: &RunConfig) -> Result<String, CliError> {
    let ds = load_dataset(cfg)?;
    let ranking = rank_features(&ds, cfg.absolute_corr.unwrap_or(false))?;
    let dir = out_dir(cfg)?;
    let path = dir.join("ranking.csv");
    write_with(&path, |w| Ok(write_ranking_csv(&ranking, w)?))?;
    let top = ranking
        .rows
        .first()
        .map(|r| format!("top {} (avg_corr {:.3})", r.feature, r.avg_corr))
        .unwrap_or_else(|| "no rankable features".into());
    Ok(format!(
        "rank: {} features ranked, {} excluded, {top} -> {}",
        ranking.rows.len(),
        ranking.excluded.len(),
        path.display()
    ))
}

#[derive(Serialize)]
struct Selection<'a> {
    threshold: f64,
    availability_threshold: f64,
    cv_rmse: Option<f64>,
    features: &'a [String],
}

pub fn sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let seed = cfg.require_seed("sweep")?;
    let ds = load_dataset(cfg)?;
    let (train_years, test_years) = cfg.split_years(&ds.years());
    let (train_ds, _) = split_by_year(&ds, &train_years, &test_years)?;
    let ranking = rank_features(&train_ds, cfg.absolute_corr.unwrap_or(false))?;
    let evaluator = GbtCvEvaluator {
        grid: cfg.grid(seed),
        k: cfg.folds(),
        seed,
        strategy: cfg.fold_strategy(),
    };
    let grid = cfg.threshold_grid();
    let result = sweep_thresholds(&train_ds, &ranking, &grid, cfg.availability_threshold(), &evaluator)?;
    let dir = out_dir(cfg)?;
    write_with(&dir.join("sweep.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["threshold", "n_features", "cv_rmse", "best", "features"])?;
        for e in &result.entries {
            out.write_record([
                e.threshold.to_string(),
                e.features.len().to_string(),
                e.cv_rmse.map(|v| v.to_string()).unwrap_or_default(),
                (e.threshold == result.best_threshold).to_string(),
                e.features.join(";"),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let best_rmse = result
        .entries
        .iter()
        .find(|e| e.threshold == result.best_threshold)
        .and_then(|e| e.cv_rmse);
    write_json(
        &dir.join("selected_features.json"),
        &Selection {
            threshold: result.best_threshold,
            availability_threshold: cfg.availability_threshold(),
            cv_rmse: best_rmse,
            features: &result.best_features,
        },
    )?;
    Ok(format!(
        "sweep: best threshold {} selects {} features (cv rmse {:.4}) -> {}",
        result.best_threshold,
        result.best_features.len(),
        best_rmse.unwrap_or(f64::NAN),
        dir.join("selected_features.json").display()
    ))
}

#[derive(Serialize)]
struct TrainReport<'a> {
    features: &'a [String],
    train_years: Vec<i32>,
    test_years: Vec<i32>,
    best_params: &'a Hyperparams,
    cv_mean_rmse: f64,
    cv_std_rmse: f64,
    train: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<MetricReport>,
}

pub fn train_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let seed = cfg.require_seed("train")?;
    let ds = load_dataset(cfg)?;
    let features = cfg.features.clone().unwrap_or_else(|| ds.feature_names());
    let (train_years, test_years) = cfg.split_years(&ds.years());
    let (train_ds, test_ds) = split_by_year(&ds, &train_years, &test_years)?;
    let train_m = TrainingMatrix::from_panel(&train_ds, &features)?;
    let search = kfold_grid_search(&train_m, &cfg.grid(seed), cfg.folds(), seed, cfg.fold_strategy())?;
    let best = &search.results[search.best_index];
    let mut model = train(&train_m, &search.best)?;
    model.training_meta = TrainingMeta {
        train_years: train_years.iter().copied().collect(),
        cv_scores: best.fold_rmse.clone(),
    };
    let train_metrics = error_metrics(train_m.target(), &model.predict_matrix(&train_m)?, false)
        .map_err(|e| CliError::failed(e.to_string()))?;
    let test = if test_ds.is_empty() {
        None
    } else {
        let test_m = TrainingMatrix::from_panel(&test_ds, &features)?;
        Some(
            error_metrics(test_m.target(), &model.predict_matrix(&test_m)?, false)
                .map_err(|e| CliError::failed(e.to_string()))?,
        )
    };
    let dir = out_dir(cfg)?;
    let model_path = cfg.model.clone().unwrap_or_else(|| dir.join("model.json"));
    save_model(&model, &model_path)?;
    write_with(&dir.join("cv_report.csv"), |w| Ok(write_cv_report(&search, w)?))?;
    write_json(
        &dir.join("train_metrics.json"),
        &TrainReport {
            features: &features,
            train_years: train_years.iter().copied().collect(),
            test_years: test_years.iter().copied().collect(),
            best_params: &search.best,
            cv_mean_rmse: best.mean,
            cv_std_rmse: best.std,
            train: train_metrics,
            test,
        },
    )?;
    let test_note = test.map(|t| format!(", test R² {:.3}", t.r2)).unwrap_or_default();
    Ok(format!(
        "train: {} features, best of {} grid points: depth {} rounds {} lr {} (cv rmse {:.4}){test_note} -> {}",
        features.len(),
        search.results.len(),
        search.best.max_depth,
        search.best.n_rounds,
        search.best.learning_rate,
        best.mean,
        model_path.display()
    ))
}

#[derive(Serialize)]
struct PredictReport {
    years: Vec<i32>,
    national_unscaled: MetricReport,
    national_scaled: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    regional_unscaled: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regional_scaled: Option<MetricReport>,
}

pub fn predict(cfg: &RunConfig) -> Result<String, CliError> {
    let model = load_trained(cfg)?;
    let ds = load_dataset(cfg)?;
    let years = selected_years(cfg, &ds)?;
    let estimates = predict_unscaled(&model, &ds, Some(&years))?;
    let national = ds.national_capacity_mw();
    let scaled = scale_to_national(&estimates, national)?;
    let actual = actual_mw(&ds);
    let report = PredictReport {
        years: years.iter().copied().collect(),
        national_unscaled: national_report(&scaled, national, Basis::Unscaled)?,
        national_scaled: national_report(&scaled, national, Basis::Scaled)?,
        regional_unscaled: regional_report(&scaled, &actual, Basis::Unscaled).ok(),
        regional_scaled: regional_report(&scaled, &actual, Basis::Scaled).ok(),
    };
    let dir = out_dir(cfg)?;
    let path = dir.join("estimates.csv");
    write_with(&path, |w| Ok(write_estimates_csv(&scaled, w)?))?;
    write_json(&dir.join("metrics.json"), &report)?;
    Ok(format!(
        "predict: {} estimates for {}, national MAPE {:.2}% unscaled, {:.2}% scaled -> {}",
        scaled.len(),
        fmt_years(&years),
        report.national_unscaled.mape.unwrap_or(f64::NAN),
        report.national_scaled.mape.unwrap_or(f64::NAN),
        path.display()
    ))
}

pub fn disaggregate(cfg: &RunConfig) -> Result<String, CliError> {
    let model = load_trained(cfg)?;
    let ds = load_dataset(cfg)?;
    let years: Vec<i32> = selected_years(cfg, &ds)?.into_iter().collect();
    let policy = cfg.allocation_policy.unwrap_or_default();
    let results = years
        .par_iter()
        .map(|&y| allocate_unallocated(&ds, &model, y, policy))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(cfg)?;
    let path = dir.join("allocation.csv");
    write_with(&path, |w| Ok(write_allocation_csv(&results, w)?))?;
    let total: f64 = results.iter().map(|r| r.unallocated_input_mw).sum();
    let policy_name = serde_json::to_value(policy)?.as_str().unwrap_or_default().to_string();
    Ok(format!(
        "disaggregate: {total:.1} MW unallocated capacity over {} years distributed ({policy_name}) -> {}",
        results.len(),
        path.display()
    ))
}

pub fn benchmark(cfg: &RunConfig) -> Result<String, CliError> {
    let model = load_trained(cfg)?;
    let ds = load_dataset(cfg)?;
    let years = selected_years(cfg, &ds)?;
    let (t1, t2) = match (years.first(), years.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(CliError::failed("no years to benchmark")),
    };
    let range: BTreeSet<i32> = (t1..=t2).filter(|y| ds.years().contains(y)).collect();
    let estimates = predict_unscaled(&model, &ds, Some(&range))?;
    let predicted = estimates_mw(&estimates, Basis::Unscaled)?;
    let actual: BTreeMap<_, _> = actual_mw(&ds)
        .into_iter()
        .filter(|((_, y), _)| range.contains(y))
        .collect();
    let report = spvdi(&actual, &predicted, t1, t2)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("spvdi.csv");
    write_with(&path, |w| Ok(write_spvdi_csv(&report, w)?))?;
    let bars: Vec<(String, f64)> = report
        .entries
        .iter()
        .map(|e| (e.region.to_string(), e.index_mw))
        .collect();
    write_text(
        &dir.join("spvdi.svg"),
        &svg::bar_chart(&format!("SPVDI {t1}-{t2} (MW)"), &bars),
    )?;
    let first = report.entries.first().expect("spvdi has regions");
    let last = report.entries.last().expect("spvdi has regions");
    Ok(format!(
        "benchmark: SPVDI {t1}-{t2} for {} regions, highest {} {:+.1} MW, lowest {} {:+.1} MW -> {}",
        report.entries.len(),
        first.region,
        first.index_mw,
        last.region,
        last.index_mw,
        path.display()
    ))
}

pub fn explain(cfg: &RunConfig) -> Result<String, CliError> {
    let model = load_trained(cfg)?;
    let ds = load_dataset(cfg)?;
    let years = selected_years(cfg, &ds)?;
    let subset = ds.filter_years(&years);
    let matrix = TrainingMatrix::from_panel(&subset, &model.feature_names)?;
    let report = importance_shares(&model, &matrix)?;
    let dir = out_dir(cfg)?;
    write_with(&dir.join("importance.csv"), |w| Ok(write_importance_csv(&report, w)?))?;
    let ranked = report.ranked();
    write_text(
        &dir.join("importance.svg"),
        &svg::bar_chart("Share of mean |SHAP| (%)", &ranked),
    )?;

    let kinds: BTreeMap<String, String> = ds
        .feature_specs()
        .iter()
        .map(|s| {
            let kind = serde_json::to_value(s.kind).ok().and_then(|v| v.as_str().map(String::from));
            (s.name.clone(), kind.unwrap_or_default())
        })
        .collect();
    write_json(&dir.join("group_shares.json"), &group_shares(&report, &kinds)?)?;

    let mut notes = Vec::new();
    let complete: Vec<Vec<f64>> = (0..matrix.n_rows())
        .filter_map(|i| matrix.row(i).into_iter().collect::<Option<Vec<f64>>>())
        .collect();
    match pca(&model.feature_names, &complete) {
        Ok(p) => {
            let k = cfg.clusters.unwrap_or(2).min(p.n_features());
            let clusters = cluster_features(&p, k, cfg.seed.unwrap_or(0))?;
            write_json(&dir.join("pca.json"), &p)?;
            write_json(&dir.join("clusters.json"), &clusters)?;
            notes.push(format!("{} clusters", clusters.clusters.len()));
        }
        Err(e) => notes.push(format!("PCA skipped: {e}")),
    }

    let year = *years.last().ok_or_else(|| CliError::failed("no years selected"))?;
    for region in cfg.regions.iter().flatten() {
        let code = RegionCode::new(region.as_str())?;
        let record = ds
            .records()
            .iter()
            .find(|r| r.region == code && r.year == year)
            .ok_or_else(|| CliError::failed(format!("region {region} has no record for {year}")))?;
        let row: FeatureRow = model
            .feature_names
            .iter()
            .map(|f| Ok((f.clone(), record.features[ds.feature_index(f)?])))
            .collect::<Result<_, CliError>>()?;
        let expl = tree_shap(&model, &row)?;
        let stem = format!("waterfall_{region}_{year}");
        write_with(&dir.join(format!("{stem}.csv")), |w| Ok(write_waterfall_csv(&expl, w)?))?;
        write_text(
            &dir.join(format!("{stem}.svg")),
            &svg::waterfall_chart(&format!("{region} {year}: capacity share (%)"), &expl),
        )?;
    }
    if let Some(rs) = &cfg.regions {
        notes.push(format!("{} waterfalls for {year}", rs.len()));
    }
    let top = ranked
        .first()
        .map(|(f, s)| format!("top {f} {s:.1}%"))
        .unwrap_or_default();
    Ok(format!(
        "explain: {} rows, {top}, {} -> {}",
        matrix.n_rows(),
        notes.join(", "),
        dir.display()
    ))
}
