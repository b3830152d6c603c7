//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use solarcap_cli::{execute, Command, RunConfig};
use solarcap_core::apps::{
    allocate, national_report, scale_to_national, spvdi, AllocationPolicy, Basis, RegionYearMw, RegionalEstimate,
};
use solarcap_core::explain::{cluster_features, pca, shap_values};
use solarcap_core::gbtree::{fit_tree, train, GBTModel, Hyperparams, TrainingMatrix, TrainingMeta, TreeNode};
use solarcap_core::oracle::{best_split_exhaustive, brute_force_shap, random_row, random_tree};
use solarcap_core::panel::RegionCode;
use solarcap_core::stats::{error_metrics, linfit_r2, pearson, spearman, PairedSeries};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(_), Some(l)) if elapsed > l => Err(format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), l.as_secs())),
        (o, _) => o,
    };
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id:>2} [{tag}] {name}: {detail} ({:.1}s)", elapsed.as_secs_f64());
    outcome.is_ok()
}

fn model_of(trees: Vec<TreeNode>, p: usize, base: f64) -> GBTModel {
    GBTModel {
        base_score: base,
        trees,
        feature_names: (0..p).map(|j| format!("f{j}")).collect(),
        hyperparams: Hyperparams::default(),
        training_meta: TrainingMeta::default(),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize, missing: f64) -> TrainingMatrix {
    let cols = (0..p)
        .map(|_| {
            (0..n)
                .map(|_| (!rng.random_bool(missing)).then(|| (rng.random_range(0..15) as f64) / 3.0))
                .collect()
        })
        .collect();
    let y = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    TrainingMatrix::new((0..p).map(|j| format!("f{j}")).collect(), cols, y).unwrap()
}

fn shap_additivity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut pairs = 0;
    let mut worst = 0.0f64;
    let mut check = |model: &GBTModel, row: &[Option<f64>]| -> Result<(), String> {
        let phi = shap_values(model, row);
        let err = (model.expected_value() + phi.iter().sum::<f64>() - model.predict_values(row)).abs();
        worst = worst.max(err);
        pairs += 1;
        ensure(err < 1e-9, || format!("additivity error {err:e}"))
    };
    for _ in 0..1500 {
        let p = rng.random_range(1..=8);
        let trees = (0..rng.random_range(1..=5)).map(|_| random_tree(&mut rng, p, 5)).collect();
        let model = model_of(trees, p, rng.random_range(-2.0..2.0));
        for _ in 0..5 {
            check(&model, &random_row(&mut rng, p, 0.15))?;
        }
    }
    for _ in 0..100 {
        let p = rng.random_range(1..=4);
        let m = random_matrix(&mut rng, 40, p, 0.1);
        let params = Hyperparams {
            n_rounds: 15,
            max_depth: rng.random_range(1..=4),
            subsample: 0.8,
            seed: rng.random(),
            ..Default::default()
        };
        let model = train(&m, &params).unwrap();
        for i in 0..25 {
            check(&model, &m.row(i))?;
        }
    }
    ensure(pairs >= 10_000, || format!("only {pairs} pairs"))?;
    Ok(format!("{pairs} (model, row) pairs, max |base + sum(phi) - f(x)| = {worst:.1e}"))
}

fn shap_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for t in 0..200 {
        let p = rng.random_range(1..=5);
        let model = model_of(vec![random_tree(&mut rng, p, 3)], p, 0.0);
        for _ in 0..5 {
            let row = random_row(&mut rng, p, 0.2);
            let fast = shap_values(&model, &row);
            let slow = brute_force_shap(&model, &row);
            for (a, b) in fast.iter().zip(&slow) {
                worst = worst.max((a - b).abs());
                ensure((a - b).abs() < 1e-9, || format!("tree {t}: {fast:?} vs {slow:?}"))?;
            }
        }
    }
    Ok(format!("200 trees x 5 rows, max |TreeSHAP - coalition Shapley| = {worst:.1e}"))
}

fn code(i: usize) -> RegionCode {
    RegionCode::new(format!("UK{}{}{}", (b'C' + (i / 81) as u8) as char, 1 + i / 9 % 9, 1 + i % 9)).unwrap()
}

fn random_estimates(rng: &mut ChaCha8Rng, regions: usize, years: std::ops::RangeInclusive<i32>) -> Vec<RegionalEstimate> {
    let mut out = Vec::new();
    for r in 0..regions {
        for year in years.clone() {
            let mw = rng.random_range(0.01..500.0);
            out.push(RegionalEstimate {
                region: code(r),
                year,
                predicted_share_pct: 0.0,
                predicted_mw: mw,
                scaled_mw: None,
            });
        }
    }
    out
}

fn scaling_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut worst_mape = 0.0f64;
    for _ in 0..200 {
        let est = random_estimates(&mut rng, 168, 2010..=2023);
        let national: BTreeMap<i32, f64> = (2010..=2023).map(|y| (y, rng.random_range(1e3..1e5))).collect();
        let scaled = scale_to_national(&est, &national).unwrap();
        let mut sums: BTreeMap<i32, f64> = BTreeMap::new();
        for e in &scaled {
            *sums.entry(e.year).or_default() += e.scaled_mw.unwrap();
        }
        for (y, s) in &sums {
            let rel = (s - national[y]).abs() / national[y];
            worst = worst.max(rel);
            ensure(rel < 1e-9, || format!("year {y}: relative error {rel:e}"))?;
        }
        let report = national_report(&scaled, &national, Basis::Scaled).unwrap();
        let mape = report.mape.unwrap();
        worst_mape = worst_mape.max(mape);
        ensure(mape < 1e-9 && (1.0 - report.r2) < 1e-9, || format!("scaled report {report:?}"))?;
    }
    Ok(format!(
        "200 sets x 168 regions x 14 years, max relative total error {worst:.1e}, scaled MAPE <= {worst_mape:.1e}%"
    ))
}

fn to_map(est: &[RegionalEstimate], basis: Basis) -> RegionYearMw {
    est.iter()
        .map(|e| ((e.region.clone(), e.year), e.mw(basis).unwrap()))
        .collect()
}

fn spvdi_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_scaled = 0.0f64;
    let mut worst_unscaled = 0.0f64;
    for _ in 0..20 {
        let actual_est = random_estimates(&mut rng, 168, 2010..=2023);
        let actual = to_map(&actual_est, Basis::Unscaled);
        let mut national: BTreeMap<i32, f64> = BTreeMap::new();
        for ((_, y), v) in &actual {
            *national.entry(*y).or_default() += v;
        }
        let predicted = scale_to_national(&random_estimates(&mut rng, 168, 2010..=2023), &national).unwrap();

        let scaled = spvdi(&actual, &to_map(&predicted, Basis::Scaled), 2010, 2023).unwrap();
        worst_scaled = worst_scaled.max(scaled.total().abs());
        ensure(scaled.total().abs() < 1e-6, || format!("scaled total {}", scaled.total()))?;

        let unscaled_map = to_map(&predicted, Basis::Unscaled);
        let unscaled = spvdi(&actual, &unscaled_map, 2010, 2023).unwrap();
        let mut residual = 0.0;
        for y in 2010..=2023 {
            let pred: f64 = unscaled_map.iter().filter(|((_, yy), _)| *yy == y).map(|(_, v)| v).sum();
            residual += national[&y] - pred;
        }
        let diff = (unscaled.total() - residual).abs();
        worst_unscaled = worst_unscaled.max(diff);
        ensure(diff < 1e-6, || format!("unscaled total {} vs residual {residual}", unscaled.total()))?;

        let same = spvdi(&actual, &actual, 2010, 2023).unwrap();
        ensure(same.entries.iter().all(|e| e.index_mw == 0.0), || "predicted = actual gave nonzero index".into())?;
        let ranks: BTreeSet<usize> = unscaled.entries.iter().map(|e| e.rank).collect();
        ensure(ranks == (1..=168).collect(), || "ranking is not a permutation".into())?;
    }
    Ok(format!(
        "20 panels: |sum SPVDI (scaled)| <= {worst_scaled:.1e} MW, |sum SPVDI (unscaled) - national residual| <= {worst_unscaled:.1e} MW, exact predictions give zeros"
    ))
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn synthetic_recovery() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out_dir: Some(dir.path().into()),
        seed: Some(7),
        grid_preset: Some(solarcap_cli::GridPreset::Quick),
        ..Default::default()
    };
    for c in [Command::Synth, Command::Rank, Command::Train, Command::Explain] {
        execute(c, &cfg).map_err(|e| format!("{c:?}: {e}"))?;
    }
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ground_truth.json")).unwrap()).unwrap();
    let signal: BTreeSet<String> = ["linear_feature", "sqrt_feature"]
        .iter()
        .map(|k| truth[k].as_str().unwrap().to_string())
        .collect();
    let panel = fs::read_to_string(dir.path().join("panel.csv")).unwrap();
    ensure(panel.lines().count() == 1 + 168 * 14, || "panel is not 168 x 14".into())?;
    ensure(panel.lines().next().unwrap().split(',').count() == 3 + 8, || "panel does not have 8 features".into())?;

    let ranking = read_csv(&dir.path().join("ranking.csv"));
    let top3: Vec<String> = ranking.iter().take(3).map(|r| r[1].clone()).collect();
    ensure(signal.iter().all(|s| top3.contains(s)), || format!("top 3 by avg_corr {top3:?}"))?;

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("train_metrics.json")).unwrap()).unwrap();
    let r2 = metrics["test"]["r2"].as_f64().unwrap();
    ensure(r2 >= 0.80, || format!("test R2 {r2}"))?;

    let importance = read_csv(&dir.path().join("importance.csv"));
    let top2: BTreeSet<String> = importance.iter().take(2).map(|r| r[1].clone()).collect();
    ensure(top2 == signal, || format!("top-2 importance {top2:?}"))?;
    let combined: f64 = importance.iter().take(2).map(|r| r[3].parse::<f64>().unwrap()).sum();
    ensure(combined >= 60.0, || format!("combined share {combined}"))?;
    Ok(format!(
        "signal features {signal:?} in top 3 by avg_corr, test R2 {r2:.3}, top-2 SHAP share {combined:.1}%"
    ))
}

fn gbt_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for d in 0..50 {
        let (n, p) = (rng.random_range(20..120), rng.random_range(1..5));
        let m = random_matrix(&mut rng, n, p, 0.1);
        let params = Hyperparams {
            n_rounds: 40,
            learning_rate: rng.random_range(0.05..1.0),
            max_depth: rng.random_range(1..6),
            reg_lambda: rng.random_range(0.0..3.0),
            ..Default::default()
        };
        let staged = train(&m, &params).unwrap().staged_rmse(&m).unwrap();
        ensure(staged.windows(2).all(|w| w[1] <= w[0] + 1e-12), || format!("dataset {d}: {staged:?}"))?;
    }
    for case in 0..300 {
        let n = rng.random_range(2..=50);
        let p = rng.random_range(1..=3);
        let m = random_matrix(&mut rng, n, p, if case % 2 == 0 { 0.0 } else { 0.25 });
        let grad: Vec<f64> = m.target().iter().map(|y| -y).collect();
        let hess: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let params = Hyperparams {
            max_depth: 1,
            min_child_weight: rng.random_range(0.0..4.0),
            reg_lambda: rng.random_range(0.0..2.0),
            gamma: if case % 5 == 0 { 0.5 } else { 0.0 },
            ..Default::default()
        };
        let tree = fit_tree(&grad, &hess, &m, &params).unwrap();
        match (&tree, best_split_exhaustive(&grad, &hess, &m, &params)) {
            (TreeNode::Leaf { .. }, None) => {}
            (TreeNode::Split { gain, .. }, Some(best)) => {
                ensure((gain - best.gain).abs() <= 1e-9 * best.gain.abs().max(1.0), || {
                    format!("case {case}: gain {gain} vs exhaustive {}", best.gain)
                })?
            }
            (t, o) => return Err(format!("case {case}: tree {t:?} vs exhaustive {o:?}")),
        }
    }
    for c in [0.1, 17.3, -2.5, 1e6 + 0.3] {
        let m = random_matrix(&mut rng, 50, 3, 0.1);
        let m = TrainingMatrix::new(
            m.feature_names().to_vec(),
            (0..3).map(|j| m.column(j).to_vec()).collect(),
            vec![c; 50],
        )
        .unwrap();
        let model = train(&m, &Hyperparams { subsample: 0.7, ..Default::default() }).unwrap();
        ensure(model.predict_matrix(&m).unwrap().iter().all(|p| *p == c), || format!("constant {c} not exact"))?;
    }
    Ok("RMSE non-increasing on 50 datasets, root gain = exhaustive maximum on 300 matrices, 4 constant targets exact".into())
}

fn close12(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-12 * b.abs().max(1e-300) || a == b
}

fn metric_oracle() -> Check {
    // (actual, predicted, r2, mae, mse, rmse, mape %), all derived by hand
    let fixed: [(&[f64], &[f64], f64, f64, f64, f64, f64); 5] = [
        (&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], 1.0, 0.0, 0.0, 0.0, 0.0),
        // errors ±1; SStot 20, SSres 4; MAPE (1/2+1/4+1/6+1/8)/4
        (&[2.0, 4.0, 6.0, 8.0], &[3.0, 3.0, 7.0, 7.0], 0.8, 1.0, 1.0, 1.0, 2500.0 / 96.0),
        // errors 2,-2,3; SStot 200, SSres 17
        (&[10.0, 20.0, 30.0], &[12.0, 18.0, 33.0], 1.0 - 17.0 / 200.0, 7.0 / 3.0, 17.0 / 3.0, (17.0f64 / 3.0).sqrt(), 40.0 / 3.0),
        // errors -10,10; SStot 1250, SSres 200
        (&[100.0, 50.0], &[90.0, 60.0], 0.84, 10.0, 100.0, 10.0, 15.0),
        // errors 1,-1,0,-1; SStot 12, SSres 3
        (&[1.0, 1.0, 1.0, 5.0], &[2.0, 0.0, 1.0, 4.0], 0.75, 0.75, 0.75, 0.75f64.sqrt(), 55.0),
    ];
    for (i, (a, p, r2, mae, mse, rmse, mape)) in fixed.iter().enumerate() {
        let m = error_metrics(a, p, true).unwrap();
        let got = [m.r2, m.mae, m.mse, m.rmse, m.mape.unwrap()];
        let want = [*r2, *mae, *mse, *rmse, *mape];
        ensure(got.iter().zip(&want).all(|(g, w)| close12(*g, *w)), || {
            format!("vector {i}: got {got:?}, want {want:?}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let m = error_metrics(&a, &p, false).unwrap();
        ensure((m.rmse * m.rmse - m.mse).abs() <= 1e-12 * m.mse, || format!("rmse^2 {} vs mse {}", m.rmse * m.rmse, m.mse))?;
        ensure(m.mae <= m.rmse * (1.0 + 1e-15), || format!("mae {} > rmse {}", m.mae, m.rmse))?;
    }
    Ok("5 hand-computed vectors match to 12 significant digits, identities hold on 1000 random vectors".into())
}

fn correlation_invariances() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    let mut series = 0;
    while series < 100 {
        let n = rng.random_range(5..80);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-40.0..40.0)).collect();
        let s = PairedSeries::new(x.clone(), y.clone()).unwrap();
        let (Ok(rs), Ok(rp)) = (spearman(&s), pearson(&s)) else { continue };
        series += 1;
        for _ in 0..20 {
            let c = rng.random_range(0.01..0.05);
            let d = rng.random_range(-10.0..10.0);
            let kind = rng.random_range(0..5);
            let f = |v: f64| match kind {
                0 => (c * v).exp(),
                1 => v.powi(3) + v,
                2 => (c * v).atan(),
                3 => (v + 60.0).ln() + d,
                _ => c * v + d,
            };
            let t = PairedSeries::new(x.iter().map(|v| f(*v)).collect(), y.clone()).unwrap();
            let diff = (spearman(&t).unwrap() - rs).abs();
            worst = worst.max(diff);
            ensure(diff < 1e-12, || format!("spearman changed by {diff:e} under transform {kind}"))?;
        }
        let a = rng.random_range(0.01..100.0);
        let b = rng.random_range(-1e3..1e3);
        let t = PairedSeries::new(x.iter().map(|v| a * v + b).collect(), y.clone()).unwrap();
        let dp = (pearson(&t).unwrap() - rp).abs();
        let dl = (linfit_r2(&s).unwrap() - rp * rp).abs();
        worst = worst.max(dp).max(dl);
        ensure(dp < 1e-12 && dl < 1e-12, || format!("pearson diff {dp:e}, linfit diff {dl:e}"))?;
    }
    Ok(format!("100 series: Spearman (20 monotone maps each), Pearson (affine), linfit_r2 = r^2; max deviation {worst:.1e}"))
}

fn block_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let mut row = Vec::with_capacity(6);
            for j in 0..3 {
                row.push(a + 0.25 * (j + 1) as f64 * rng.sample::<f64, _>(StandardNormal));
            }
            for j in 0..3 {
                row.push(50.0 - 4.0 * (b + 0.25 * (j + 1) as f64 * rng.sample::<f64, _>(StandardNormal)));
            }
            row
        })
        .collect()
}

fn pca_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = rng.random_range(2..9);
        let n = rng.random_range(p + 3..120);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let common: f64 = rng.sample(StandardNormal);
                (0..p).map(|j| common * j as f64 / 4.0 + rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect();
        let names: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
        let r = pca(&names, &rows).map_err(|e| e.to_string())?;
        for a in 0..p {
            for b in 0..p {
                let dot: f64 = (0..p).map(|j| r.loadings[a][j] * r.loadings[b][j]).sum();
                let err = (dot - if a == b { 1.0 } else { 0.0 }).abs();
                worst = worst.max(err);
                ensure(err < 1e-9, || format!("loadings {a},{b} dot {dot}"))?;
            }
        }
        let total: f64 = r.explained_variance_ratio.iter().sum();
        ensure((total - 1.0).abs() < 1e-9, || format!("ratios sum to {total}"))?;
    }
    let names: Vec<String> = (0..6).map(|j| format!("f{j}")).collect();
    let rows = block_rows(&mut rng, 300);
    let r = pca(&names, &rows).map_err(|e| e.to_string())?;
    for seed in 0..20 {
        let c = cluster_features(&r, 2, seed).map_err(|e| e.to_string())?;
        let groups: Vec<Vec<String>> = c.clusters.iter().map(|g| g.features.clone()).collect();
        ensure(groups == [vec!["f0", "f1", "f2"], vec!["f3", "f4", "f5"]], || format!("seed {seed}: {groups:?}"))?;
    }
    Ok(format!("50 random sets orthonormal (max error {worst:.1e}), ratios sum to 1, 2 blocks recovered for 20 seeds"))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Check {
    let mut runs = Vec::new();
    for workers in [1, 1, 8, 8] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            out_dir: Some(dir.path().into()),
            seed: Some(11),
            workers: Some(workers),
            folds: Some(5),
            hyperparameter_grid: Some(
                [3, 5]
                    .into_iter()
                    .map(|max_depth| Hyperparams {
                        n_rounds: 60,
                        max_depth,
                        subsample: 0.8,
                        seed: 11,
                        ..Default::default()
                    })
                    .collect(),
            ),
            ..Default::default()
        };
        for c in [Command::Synth, Command::Rank, Command::Train, Command::Predict, Command::Benchmark] {
            execute(c, &cfg).map_err(|e| format!("{c:?}: {e}"))?;
        }
        runs.push((workers, snapshot(dir.path())));
    }
    let (_, reference) = &runs[0];
    for (workers, files) in &runs[1..] {
        ensure(files.keys().eq(reference.keys()), || format!("workers {workers}: different file set"))?;
        for (name, bytes) in files {
            ensure(bytes == &reference[name], || format!("workers {workers}: {name} differs"))?;
        }
    }
    Ok(format!(
        "4 runs (workers 1, 1, 8, 8) produced {} byte-identical files",
        reference.len()
    ))
}

fn allocation_conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(1..200);
        let known: Vec<(RegionCode, f64)> = (0..n).map(|i| (code(i), rng.random_range(0.0..300.0))).collect();
        let shares: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..3.0)).collect();
        let shares = if shares.iter().all(|s| *s <= 0.0) { vec![1.0; n] } else { shares };
        let national = known.iter().map(|(_, k)| k).sum::<f64>() + rng.random_range(0.0..2000.0);
        for policy in [AllocationPolicy::Additive, AllocationPolicy::FullRescale] {
            let r = allocate(2023, &known, &shares, national, policy).map_err(|e| e.to_string())?;
            let rel = (r.total_mw() - national).abs() / national;
            worst = worst.max(rel);
            ensure(rel < 1e-9, || format!("{policy:?}: total {} vs {national}", r.total_mw()))?;
            if policy == AllocationPolicy::Additive {
                ensure(r.regions.iter().all(|g| g.allocated_mw >= g.known_mw), || "additive decreased a region".into())?;
            }
        }
    }
    let known: Vec<(RegionCode, f64)> = (0..168).map(|i| (code(i), rng.random_range(0.0..400.0))).collect();
    let national = known.iter().map(|(_, k)| k).sum::<f64>() + 829.0;
    let r = allocate(2023, &known, &[100.0 / 168.0; 168], national, AllocationPolicy::Additive).unwrap();
    let part = 829.0 / 168.0;
    ensure(
        r.regions.iter().all(|g| ((g.allocated_mw - g.known_mw) - part).abs() < 1e-9),
        || "uniform split is not 829/168 per region".into(),
    )?;
    Ok(format!(
        "500 random years x 2 policies, max relative error {worst:.1e}; 829 MW split into 168 parts of {part:.4} MW"
    ))
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        run(1, "SHAP additivity", Some(secs(60)), shap_additivity),
        run(2, "TreeSHAP vs brute-force Shapley", Some(secs(60)), shap_oracle),
        run(3, "scaling identity", None, scaling_identity),
        run(4, "SPVDI identities", None, spvdi_identities),
        run(5, "synthetic pipeline recovery", Some(secs(300)), synthetic_recovery),
        run(6, "GBT correctness", None, gbt_correctness),
        run(7, "metric oracle", None, metric_oracle),
        run(8, "correlation invariances", None, correlation_invariances),
        run(9, "PCA properties", None, pca_properties),
        run(10, "determinism", None, determinism),
        run(11, "allocation conservation", None, allocation_conservation),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
