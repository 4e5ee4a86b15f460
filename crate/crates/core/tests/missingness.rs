use std::collections::HashSet;

use mi_workbench::mice::{fit_column_models, DrawMethod};
use mi_workbench::missingness::{
    ampute, augment, fit_missingness, generate_synthetic, AmputeConfig, AmputeMode, AugmentConfig,
    AugmentOrder, ColumnMissingness, Correlation, Mechanism, MissingnessModel, SyntheticSpec,
};
use mi_workbench::rng::rng_from_seed;
use mi_workbench::stats::{auc, mean, median, pearson, std_dev};
use mi_workbench::trees::{BoostParams, ForestParams};
use mi_workbench::{Dataset, Error};
use rand::Rng;

fn mcar(n: usize, p: usize, rate: f64, seed: u64) -> Dataset {
    let mut spec = SyntheticSpec::gaussian_benchmark(n, p, rate);
    spec.mechanism = Mechanism::Mcar { rate, targets: None };
    generate_synthetic(&spec, seed).unwrap().amputed
}

fn complete(n: usize, p: usize, rho: f64, seed: u64) -> Dataset {
    let mut spec = SyntheticSpec::gaussian_benchmark(n, p, 0.0);
    spec.correlation = Correlation::Exchangeable { rho };
    spec.mechanism = Mechanism::None;
    generate_synthetic(&spec, seed).unwrap().complete
}

fn column(ds: &Dataset, j: usize) -> Vec<f64> {
    ds.values().column(j).to_vec()
}

fn missing_rate(ds: &Dataset) -> f64 {
    ds.missing_count() as f64 / (ds.n_rows() * ds.n_cols()) as f64
}

#[test]
fn mcar_probabilities_match_the_rate_on_fresh_rows() {
    let train = mcar(1000, 4, 0.3, 4);
    let model = fit_missingness(&train, &BoostParams::classifier(), 1).unwrap();
    let fresh = mcar(2000, 4, 0.3, 99);
    for j in 0..4 {
        let p = model.predict_proba(j, &fresh).unwrap();
        assert!((mean(&p) - 0.3).abs() <= 0.05, "column {j}: mean {}", mean(&p));
        assert!((median(&p) - 0.3).abs() <= 0.05, "column {j}: median {}", median(&p));
    }
}

#[test]
fn threshold_missingness_is_separable() {
    let mut rng = rng_from_seed(8);
    let rows: Vec<Vec<Option<f64>>> = (0..1500)
        .map(|_| {
            let b: f64 = rng.random_range(-1.0..1.0);
            let a: f64 = rng.random();
            let c: f64 = rng.random();
            vec![if b > 0.0 { None } else { Some(a) }, Some(b), Some(c)]
        })
        .collect();
    let ds = Dataset::from_rows(&["a", "b", "c"], &rows).unwrap();
    let train: Vec<usize> = (0..1000).collect();
    let test: Vec<usize> = (1000..1500).collect();
    let model = fit_missingness(&ds.select_rows(&train), &BoostParams::classifier(), 2).unwrap();
    let held = ds.select_rows(&test);
    let p = model.predict_proba(0, &held).unwrap();
    let labels: Vec<bool> = (0..held.n_rows()).map(|i| !held.is_observed(i, 0)).collect();
    assert!(auc(&p, &labels) > 0.95, "auc {}", auc(&p, &labels));
}

#[test]
fn never_missing_column_gets_zero_probability() {
    let ds = mcar(300, 3, 0.2, 5);
    let mut keep = ds.mask().clone();
    keep.column_mut(2).fill(true);
    let full = complete(300, 3, 0.5, 5).with_mask_and(&keep).unwrap();
    let model = fit_missingness(&full, &BoostParams::classifier(), 0).unwrap();
    assert!(matches!(model.model(2), ColumnMissingness::Constant(p) if *p == 0.0));
    assert!(model.predict_proba(2, &full).unwrap().iter().all(|&p| p == 0.0));
}

fn twin_with(source: &Dataset, draw_method: DrawMethod, order: AugmentOrder, seed: u64) -> Dataset {
    let forest = ForestParams {
        n_trees: 30,
        ..ForestParams::default()
    };
    let models = fit_column_models(source, source.mask(), &forest, seed).unwrap();
    let cfg = AugmentConfig {
        draw_method,
        order,
        ..AugmentConfig::default()
    };
    augment(source, &models, &cfg, seed + 1).unwrap()
}

fn twin(source: &Dataset, method: DrawMethod, seed: u64) -> Dataset {
    twin_with(source, method, AugmentOrder::Sequential, seed)
}

#[test]
fn augment_pmm_draws_only_source_values() {
    let source = complete(400, 3, 0.8, 11);
    let out = twin(&source, DrawMethod::Pmm, 3);
    assert!(out.is_complete());
    for j in 0..3 {
        let support: HashSet<u64> = column(&source, j).iter().map(|v| v.to_bits()).collect();
        assert!(column(&out, j).iter().all(|v| support.contains(&v.to_bits())));
    }
}

#[test]
fn augment_preserves_moments_and_correlation() {
    let source = complete(1000, 3, 0.8, 12);
    let out = twin(&source, DrawMethod::Pmm, 4);
    for j in 0..3 {
        let (a, b) = (column(&source, j), column(&out, j));
        assert!((mean(&b) / mean(&a) - 1.0).abs() <= 0.1, "column {j} mean");
        assert!((std_dev(&b) / std_dev(&a) - 1.0).abs() <= 0.1, "column {j} sd");
    }
    for j in 0..3 {
        for k in 0..j {
            let ra = pearson(&column(&source, j), &column(&source, k));
            let rb = pearson(&column(&out, j), &column(&out, k));
            assert!((ra - rb).abs() <= 0.1, "corr ({j}, {k}): source {ra}, twin {rb}");
        }
    }
}

#[test]
fn parallel_augment_attenuates_correlation() {
    // Exact conditional draws on three exchangeable columns give a twin
    // correlation of b^2 (3 rho + 1) with b = rho / (1 + rho), about 0.67
    // at rho = 0.8; a sequential sweep keeps the joint distribution.
    let source = complete(1000, 3, 0.8, 14);
    let gap = |order| {
        let out = twin_with(&source, DrawMethod::Pmm, order, 6);
        let ra = pearson(&column(&source, 0), &column(&source, 1));
        ra - pearson(&column(&out, 0), &column(&out, 1))
    };
    let (sequential, parallel) = (gap(AugmentOrder::Sequential), gap(AugmentOrder::Parallel));
    assert!(parallel > 0.1, "parallel gap {parallel}");
    assert!(sequential.abs() < parallel, "sequential gap {sequential}");
}

#[test]
fn augment_rarely_copies_whole_rows() {
    let source = complete(1000, 4, 0.8, 13);
    let out = twin(&source, DrawMethod::Pmm, 5);
    let key = |ds: &Dataset, i: usize| -> Vec<u64> { ds.values().row(i).iter().map(|v| v.to_bits()).collect() };
    let rows: HashSet<Vec<u64>> = (0..source.n_rows()).map(|i| key(&source, i)).collect();
    let copies = (0..out.n_rows()).filter(|&i| rows.contains(&key(&out, i))).count();
    assert!((copies as f64) < 0.01 * out.n_rows() as f64, "{copies} copied rows");
}

#[test]
fn augment_rejects_point_draws_and_incomplete_input() {
    let source = complete(100, 2, 0.5, 1);
    let models = fit_column_models(&source, source.mask(), &ForestParams::default(), 0).unwrap();
    let point = AugmentConfig {
        draw_method: DrawMethod::Point,
        ..AugmentConfig::default()
    };
    assert!(matches!(augment(&source, &models, &point, 0), Err(Error::Argument(_))));
    let holed = source.with_cells_missing(&[(0, 0)]);
    assert!(matches!(
        augment(&holed, &models, &AugmentConfig::default(), 0),
        Err(Error::Argument(_))
    ));
}

fn constant(ds: &Dataset, p: f64) -> MissingnessModel {
    MissingnessModel::constant(ds.column_names(), &vec![p; ds.n_cols()]).unwrap()
}

fn one_round() -> AmputeConfig {
    AmputeConfig {
        n_rounds: 1,
        ..AmputeConfig::default()
    }
}

#[test]
fn ampute_with_zero_probability_is_identity() {
    let ds = complete(200, 3, 0.5, 2);
    let out = ampute(&ds, &constant(&ds, 0.0), &AmputeConfig::default(), 1).unwrap();
    assert_eq!(out, ds);
}

#[test]
fn ampute_with_unit_probability_removes_everything() {
    let ds = complete(200, 3, 0.5, 2);
    let out = ampute(&ds, &constant(&ds, 1.0), &one_round(), 1).unwrap();
    assert_eq!(out.observed_count(), 0);
}

#[test]
fn ampute_hits_constant_rate() {
    let ds = complete(1000, 3, 0.5, 3);
    let out = ampute(&ds, &constant(&ds, 0.3), &one_round(), 2).unwrap();
    for (j, rate) in out.missingness().column_rates.iter().enumerate() {
        assert!((rate - 0.3).abs() <= 0.03, "column {j}: rate {rate}");
    }
    for mode in [AmputeMode::Resample, AmputeMode::Accumulate] {
        let cfg = AmputeConfig { n_rounds: 4, mode };
        let rate = missing_rate(&ampute(&ds, &constant(&ds, 0.3), &cfg, 2).unwrap());
        let expected = match mode {
            AmputeMode::Resample => 0.3,
            AmputeMode::Accumulate => 1.0 - 0.7f64.powi(4),
        };
        assert!((rate - expected).abs() <= 0.03, "{mode:?}: rate {rate}");
    }
}

#[test]
fn ampute_never_restores_source_gaps() {
    let ds = mcar(500, 3, 0.25, 6);
    for mode in [AmputeMode::Resample, AmputeMode::Accumulate] {
        let cfg = AmputeConfig { n_rounds: 3, mode };
        let out = ampute(&ds, &constant(&ds, 0.2), &cfg, 7).unwrap();
        for i in 0..ds.n_rows() {
            for j in 0..ds.n_cols() {
                if out.is_observed(i, j) {
                    assert!(ds.is_observed(i, j));
                    assert_eq!(out.values()[[i, j]], ds.values()[[i, j]]);
                }
            }
        }
    }
}

#[test]
fn ampute_rejects_column_mismatch() {
    let ds = complete(50, 3, 0.5, 1);
    let model = MissingnessModel::constant(vec!["x".into(), "y".into()], &[0.1, 0.1]).unwrap();
    assert!(matches!(ampute(&ds, &model, &one_round(), 0), Err(Error::Argument(_))));
}

#[test]
fn ampute_follows_learned_mechanism() {
    let spec = SyntheticSpec::gaussian_benchmark(1000, 4, 0.3);
    let data = generate_synthetic(&spec, 21).unwrap();
    let model = fit_missingness(&data.amputed, &BoostParams::classifier(), 3).unwrap();
    let out = ampute(&data.complete, &model, &AmputeConfig::default(), 4).unwrap();
    for j in 0..4 {
        let src = data.amputed.missingness().column_rates[j];
        let got = out.missingness().column_rates[j];
        assert!((src - got).abs() <= 0.05, "column {j}: source {src}, twin {got}");
    }
}

#[test]
fn identity_correlation_gives_uncorrelated_columns() {
    let mut spec = SyntheticSpec::gaussian_benchmark(1000, 3, 0.0);
    spec.correlation = Correlation::Identity;
    spec.mechanism = Mechanism::None;
    let ds = generate_synthetic(&spec, 5).unwrap().complete;
    for j in 0..3 {
        for k in 0..j {
            let r = pearson(&column(&ds, j), &column(&ds, k));
            assert!(r.abs() <= 0.07, "corr ({j}, {k}) = {r}");
        }
    }
}

#[test]
fn mcar_spec_hits_its_rate() {
    let mut spec = SyntheticSpec::gaussian_benchmark(1000, 5, 0.0);
    spec.mechanism = Mechanism::Mcar { rate: 0.2, targets: None };
    let data = generate_synthetic(&spec, 6).unwrap();
    assert!((missing_rate(&data.amputed) - 0.2).abs() <= 0.02);
    assert_eq!(data.truth.len(), data.amputed.missing_count());
    for h in &data.truth {
        assert_eq!(data.complete.values()[[h.row, h.col]], h.value);
    }
}

#[test]
fn mar_spec_rate_rises_with_driver() {
    let spec = SyntheticSpec::gaussian_benchmark(2000, 3, 0.3);
    let ds = generate_synthetic(&spec, 7).unwrap().amputed;
    assert_eq!(ds.missingness().column_rates[0], 0.0);
    let mut rows: Vec<usize> = (0..ds.n_rows()).collect();
    rows.sort_by(|&a, &b| ds.values()[[a, 0]].total_cmp(&ds.values()[[b, 0]]));
    let rates: Vec<f64> = rows
        .chunks(ds.n_rows() / 4)
        .map(|q| q.iter().filter(|&&i| !ds.is_observed(i, 1)).count() as f64 / q.len() as f64)
        .collect();
    assert!(rates.windows(2).all(|w| w[0] < w[1]), "quartile rates {rates:?}");
}

#[test]
fn non_positive_definite_correlation_is_rejected() {
    let mut spec = SyntheticSpec::gaussian_benchmark(10, 3, 0.0);
    spec.correlation = Correlation::Matrix {
        values: vec![vec![1.0, 0.9, -0.9], vec![0.9, 1.0, 0.9], vec![-0.9, 0.9, 1.0]],
    };
    assert!(matches!(generate_synthetic(&spec, 0), Err(Error::Spec(_))));
}

#[test]
fn synthetic_generation_is_deterministic() {
    let spec = SyntheticSpec::gaussian_benchmark(100, 3, 0.3);
    let a = generate_synthetic(&spec, 9).unwrap();
    let b = generate_synthetic(&spec, 9).unwrap();
    let c = generate_synthetic(&spec, 10).unwrap();
    assert_eq!(a.amputed, b.amputed);
    assert_ne!(a.amputed, c.amputed);
}
