use std::collections::BTreeSet;

use solarcap_core::explain::importance_shares;
use solarcap_core::gbtree::{train, Hyperparams, TrainingMatrix};
use solarcap_core::panel::{generate_synthetic, normalize_dataset, split_by_year, SynthConfig};
use solarcap_core::select::rank_features;
use solarcap_core::stats::error_metrics;

#[test]
fn pipeline_recovers_signal_features() {
    let cfg = SynthConfig::default();
    let ds = normalize_dataset(&generate_synthetic(&cfg, 7).unwrap()).unwrap();
    let truth = cfg.truth(7);
    let signal = [truth.linear_feature.clone(), truth.sqrt_feature.clone()];

    let ranking = rank_features(&ds, false).unwrap();
    let top3: Vec<&str> = ranking.rows.iter().take(3).map(|r| r.feature.as_str()).collect();
    for s in &signal {
        assert!(top3.contains(&s.as_str()), "{s} not in {top3:?}");
    }

    let years: Vec<i32> = ds.years().into_iter().collect();
    let (train_years, test_years) = years.split_at(years.len() - 3);
    let (train_ds, test_ds) = split_by_year(
        &ds,
        &train_years.iter().copied().collect::<BTreeSet<_>>(),
        &test_years.iter().copied().collect::<BTreeSet<_>>(),
    )
    .unwrap();
    let features = ds.feature_names();
    let train_m = TrainingMatrix::from_panel(&train_ds, &features).unwrap();
    let test_m = TrainingMatrix::from_panel(&test_ds, &features).unwrap();
    let params = Hyperparams {
        n_rounds: 300,
        learning_rate: 0.05,
        max_depth: 4,
        subsample: 0.8,
        seed: 7,
        ..Default::default()
    };
    let model = train(&train_m, &params).unwrap();
    let pred = model.predict_matrix(&test_m).unwrap();
    let report = error_metrics(test_m.target(), &pred, false).unwrap();
    assert!(report.r2 >= 0.80, "test R² {}", report.r2);

    let imp = importance_shares(&model, &train_m).unwrap();
    let ranked = imp.ranked();
    let top2: BTreeSet<&str> = ranked.iter().take(2).map(|(f, _)| f.as_str()).collect();
    assert_eq!(top2, signal.iter().map(String::as_str).collect());
    let combined: f64 = ranked.iter().take(2).map(|(_, s)| s).sum();
    assert!(combined >= 60.0, "combined share {combined}");
}
