use mi_workbench::mice::{mice_multiple, DrawMethod, ImputationSet, MiceConfig};
use mi_workbench::missingness::{generate_synthetic, SyntheticSpec};
use mi_workbench::rng::rng_from_seed;
use mi_workbench::scoring::{
    comparison_table, compute_scores, evaluate, run_workflow, score_distribution, width_by_missing_rate,
    Level, Metrics, ScoringModel, WorkflowConfig,
};
use mi_workbench::trees::ForestParams;
use mi_workbench::{Dataset, Error, HeldOut};
use ndarray::Array2;
use rand::Rng;

fn model(json: &str) -> ScoringModel {
    ScoringModel::from_json(json).unwrap()
}

fn row_dataset(names: &[&str], rows: &[Vec<f64>]) -> Dataset {
    let rows: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
    Dataset::from_rows(names, &rows).unwrap()
}

const TOY: &str = r#"{
    "descriptors": {"D1": {"k1": 3, "k2": 1}, "D2": {"k3": 2}, "D3": {"k4": 5}},
    "pillars": {"Environment": {"D1": 2, "D2": 1}, "Social": {"D3": 1}},
    "overall": {"Environment": 3, "Social": 1}
}"#;

#[test]
fn equal_weight_descriptor_is_the_average() {
    let m = model(
        r#"{"descriptors": {"D": {"a": 1, "b": 1}},
            "pillars": {"Environment": {"D": 1}},
            "overall": {"Environment": 1}}"#,
    );
    let ds = row_dataset(&["a", "b"], &[vec![0.2, 0.6]]);
    let s = compute_scores(&ds, &m).unwrap();
    assert!((s.values[[0, 0]] - 0.4).abs() < 1e-15);
    assert!((s.values[[0, 2]] - 0.4).abs() < 1e-15);
}

#[test]
fn single_kpi_descriptor_equals_its_kpi() {
    let ds = row_dataset(&["k1", "k2", "k3", "k4"], &[vec![0.1, 0.2, 0.7, 0.9]]);
    let s = compute_scores(&ds, &model(TOY)).unwrap();
    assert_eq!(s.values[[0, 1]], 0.7);
    assert_eq!(s.values[[0, 2]], 0.9);
}

#[test]
fn scores_match_flattened_weights() {
    let m = model(TOY);
    // products of the normalised weights, worked out by hand
    let overall = [0.75 * (2.0 / 3.0) * 0.75, 0.75 * (2.0 / 3.0) * 0.25, 0.75 * (1.0 / 3.0), 0.25];
    let mut rng = rng_from_seed(3);
    let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.random()).collect()).collect();
    let ds = row_dataset(&["k1", "k2", "k3", "k4"], &rows);
    let s = compute_scores(&ds, &m).unwrap();
    let flat = m.flat_weights(&ds).unwrap();
    let last = s.units.len() - 1;
    for (c, w) in overall.iter().enumerate() {
        assert!((flat[[last, c]] - w).abs() < 1e-15);
    }
    for (i, r) in rows.iter().enumerate() {
        let direct: f64 = r.iter().zip(&overall).map(|(v, w)| v * w).sum();
        assert!((s.values[[i, last]] - direct).abs() < 1e-12);
        for u in 0..s.units.len() {
            let via_flat: f64 = (0..4).map(|c| flat[[u, c]] * r[c]).sum();
            assert!((s.values[[i, u]] - via_flat).abs() < 1e-12);
        }
    }
}

#[test]
fn unit_order_is_descriptors_pillars_overall() {
    let units = model(TOY).units();
    let levels: Vec<Level> = units.iter().map(|u| u.level).collect();
    assert_eq!(
        levels,
        [Level::Descriptor, Level::Descriptor, Level::Descriptor, Level::Pillar, Level::Pillar, Level::Overall]
    );
    assert_eq!(units[5].name, "ESG");
}

#[test]
fn invalid_models_are_config_errors() {
    let bad = [
        // KPI in two descriptors
        r#"{"descriptors": {"A": {"k": 1}, "B": {"k": 1}}, "pillars": {"Social": {"A": 1, "B": 1}}, "overall": {"Social": 1}}"#,
        // unknown pillar name
        r#"{"descriptors": {"A": {"k": 1}}, "pillars": {"Economy": {"A": 1}}, "overall": {"Economy": 1}}"#,
        // negative weight
        r#"{"descriptors": {"A": {"k": -1}}, "pillars": {"Social": {"A": 1}}, "overall": {"Social": 1}}"#,
        // descriptor without a pillar
        r#"{"descriptors": {"A": {"k": 1}, "B": {"j": 1}}, "pillars": {"Social": {"A": 1}}, "overall": {"Social": 1}}"#,
        // unknown descriptor
        r#"{"descriptors": {"A": {"k": 1}}, "pillars": {"Social": {"A": 1, "Z": 1}}, "overall": {"Social": 1}}"#,
        // all-zero weights
        r#"{"descriptors": {"A": {"k": 0}}, "pillars": {"Social": {"A": 1}}, "overall": {"Social": 1}}"#,
        "not json",
    ];
    for text in bad {
        assert!(matches!(ScoringModel::from_json(text), Err(Error::Config(_))), "{text}");
    }
}

#[test]
fn missing_kpi_column_and_incomplete_data() {
    let m = model(TOY);
    let ds = row_dataset(&["k1", "k2", "k3"], &[vec![0.1, 0.2, 0.3]]);
    assert!(matches!(compute_scores(&ds, &m), Err(Error::Config(_))));
    let holed = Dataset::from_rows(&["k1", "k2", "k3", "k4"], &[vec![Some(0.1), None, Some(0.2), Some(0.3)]]).unwrap();
    assert!(matches!(compute_scores(&holed, &m), Err(Error::Argument(_))));
}

#[test]
fn raising_a_kpi_never_lowers_an_ancestor() {
    let m = model(TOY);
    let mut rng = rng_from_seed(4);
    for _ in 0..200 {
        let base: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let c = rng.random_range(0..4);
        let mut bumped = base.clone();
        bumped[c] += rng.random::<f64>();
        let s = compute_scores(&row_dataset(&["k1", "k2", "k3", "k4"], &[base, bumped]), &m).unwrap();
        for u in 0..s.units.len() {
            assert!(s.values[[1, u]] >= s.values[[0, u]]);
        }
    }
}

/// Imputation set built from explicit completions of a source dataset.
fn manual_set(source: &Dataset, fills: &[Array2<f64>]) -> ImputationSet {
    ImputationSet {
        completed: fills.iter().map(|f| source.completed_with(f).unwrap()).collect(),
        source_mask: source.mask().clone(),
        config: MiceConfig::default(),
        trace: Vec::new(),
        in_bag_fallbacks: 0,
    }
}

fn random_source(n: usize, rate: f64, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|_| {
            (0..4)
                .map(|_| {
                    let v: f64 = rng.random();
                    (rng.random::<f64>() >= rate).then_some(v)
                })
                .collect()
        })
        .collect();
    Dataset::from_rows(&["k1", "k2", "k3", "k4"], &rows).unwrap()
}

fn random_fills(n: usize, m: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..m).map(|_| Array2::from_shape_fn((n, 4), |_| rng.random())).collect()
}

#[test]
fn averaging_commutes_with_aggregation() {
    let m = model(TOY);
    let source = random_source(50, 0.3, 5);
    let set = manual_set(&source, &random_fills(50, 7, 6));
    let dist = score_distribution(&set, &m, 0.95).unwrap();
    let mut mean = Array2::zeros((50, 4));
    for d in &set.completed {
        mean += d.values();
    }
    mean /= set.m() as f64;
    let pooled = compute_scores(&Dataset::complete(mean, source.column_names()).unwrap(), &m).unwrap();
    for i in 0..50 {
        for u in 0..dist.units.len() {
            assert!((dist.get(i, u).mean - pooled.values[[i, u]]).abs() < 1e-10);
        }
    }
}

/// Draws inside the type-7 central interval of `m` distinct values, by
/// order statistic: ranks from `ceil(h)` to `floor(m - 1 - h)` with
/// `h = (m - 1)(1 - level) / 2`, in exact integer arithmetic for a level
/// given in percent.
fn order_statistic_count(m: usize, level_pct: usize) -> usize {
    let (num, den) = ((m - 1) * (100 - level_pct), 200);
    let lo = num.div_ceil(den);
    let hi = ((m - 1) * den - num) / den;
    hi + 1 - lo
}

#[test]
fn self_coverage_counts_order_statistics() {
    let mut rng = rng_from_seed(7);
    let source = Dataset::from_rows(&["k1", "k2", "k3", "k4"], &[vec![None, Some(0.5), Some(0.5), Some(0.5)]]).unwrap();
    let m_model = model(TOY);
    for m in 2..=10usize {
        for level_pct in [50, 80, 90, 95] {
            let level = level_pct as f64 / 100.0;
            let draws: Vec<f64> = (0..m).map(|_| rng.random()).collect();
            let fills: Vec<Array2<f64>> = draws.iter().map(|&v| Array2::from_elem((1, 4), v)).collect();
            let set = manual_set(&source, &fills);
            let self_truth: Vec<Metrics> = draws
                .iter()
                .map(|&v| {
                    let truth = [HeldOut { row: 0, col: 0, value: v }];
                    evaluate(&set, &truth, &m_model, level).unwrap().find(Level::Kpi, "k1").unwrap().clone()
                })
                .collect();
            let covered = self_truth.iter().filter(|x| x.cr == 1.0).count();
            assert_eq!(covered, order_statistic_count(m, level_pct), "m {m} level {level}");
        }
    }
    // integer quantile positions keep both boundary draws
    let draws: Vec<f64> = (0..41).map(f64::from).collect();
    let (lo, hi) = mi_workbench::stats::central_interval(&draws, 0.95);
    assert_eq!((lo, hi), (1.0, 39.0));
    assert_eq!(order_statistic_count(41, 95), 39);
}

#[test]
fn fully_observed_rows_have_zero_width() {
    let m = model(TOY);
    let source = random_source(40, 0.3, 8);
    let set = manual_set(&source, &random_fills(40, 5, 9));
    let dist = score_distribution(&set, &m, 0.9).unwrap();
    let mut seen = 0;
    for i in 0..40 {
        if (0..4).all(|c| source.is_observed(i, c)) {
            seen += 1;
            for u in 0..dist.units.len() {
                let s = dist.get(i, u);
                assert_eq!(s.width(), 0.0);
                assert_eq!(s.missing_rate, 0.0);
                assert!(dist.draws.iter().all(|d| d[[i, u]] == dist.draws[0][[i, u]]));
                assert!((s.mean - dist.draws[0][[i, u]]).abs() < 1e-15);
            }
        }
    }
    assert!(seen > 0);

    let same = random_fills(40, 1, 10).pop().unwrap();
    let set = manual_set(&source, &[same.clone(), same.clone(), same]);
    let dist = score_distribution(&set, &m, 0.9).unwrap();
    assert!(dist.summary.iter().all(|s| s.width() == 0.0 && s.lower <= s.upper));
}

#[test]
fn score_distribution_needs_two_imputations() {
    let source = random_source(10, 0.3, 11);
    let set = manual_set(&source, &random_fills(10, 1, 12));
    assert!(matches!(score_distribution(&set, &model(TOY), 0.95), Err(Error::Argument(_))));
}

fn truth_for(source: &Dataset, value: impl Fn(usize, usize) -> f64) -> Vec<HeldOut> {
    source
        .missing_cells()
        .into_iter()
        .map(|(row, col)| HeldOut {
            row,
            col,
            value: value(row, col),
        })
        .collect()
}

#[test]
fn truth_at_pooled_means_gives_zero_error() {
    let m = model(TOY);
    let source = random_source(30, 0.3, 13);
    let set = manual_set(&source, &random_fills(30, 4, 14));
    let truth = truth_for(&source, |i, j| set.values_at(i, j).iter().sum::<f64>() / 4.0);
    let report = evaluate(&set, &truth, &m, 0.95).unwrap();
    for row in &report.rows {
        assert!(row.metrics.rmse < 1e-12 && row.metrics.mae < 1e-12, "{row:?}");
    }
}

#[test]
fn covered_truth_gives_full_coverage() {
    let m = model(TOY);
    let source = random_source(30, 0.3, 15);
    // every cell takes 0 and 1 among its completions, so any value in
    // [0.2, 0.8] lies inside every interval
    let fills: Vec<Array2<f64>> = (0..6)
        .map(|k| Array2::from_elem((30, 4), if k % 2 == 0 { 0.0 } else { 1.0 }))
        .collect();
    let set = manual_set(&source, &fills);
    let truth = truth_for(&source, |i, j| 0.2 + 0.6 * ((i + j) % 2) as f64);
    let report = evaluate(&set, &truth, &m, 0.5).unwrap();
    for row in &report.rows {
        if row.metrics.n > 0 {
            assert_eq!(row.metrics.cr, 1.0, "{row:?}");
            assert!(row.metrics.aw > 0.0);
        }
    }
    let all = report.find(Level::Kpi, "all").unwrap();
    assert_eq!(all.n, source.missing_count());
}

#[test]
fn truth_on_observed_cell_is_rejected() {
    let source = random_source(10, 0.3, 16);
    let set = manual_set(&source, &random_fills(10, 2, 17));
    let (i, j) = (0..10)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .find(|&(i, j)| source.is_observed(i, j))
        .unwrap();
    let truth = [HeldOut { row: i, col: j, value: 0.5 }];
    assert!(matches!(evaluate(&set, &truth, &model(TOY), 0.95), Err(Error::Argument(_))));
}

#[test]
fn report_exports_and_table() {
    let m = model(TOY);
    let source = random_source(30, 0.3, 18);
    let set = manual_set(&source, &random_fills(30, 4, 19));
    let truth = truth_for(&source, |_, _| 0.5);
    let report = evaluate(&set, &truth, &m, 0.95).unwrap();
    let rows = report.to_csv_rows();
    assert_eq!(rows.len(), report.rows.len());
    assert!(rows.iter().all(|r| r.len() == 8));
    let table = comparison_table(&[&report, &report]);
    for line in ["RMSE", "MAE", "CR (%)", "AW", "ESG", "Environment", "Social"] {
        assert!(table.contains(line), "{line} missing from\n{table}");
    }
    for mt in report.rows.iter().map(|r| &r.metrics).filter(|m| m.n > 0) {
        assert!((0.0..=1.0).contains(&mt.cr) && mt.rmse >= 0.0 && mt.aw >= 0.0);
    }
}

fn quick_mice(m: usize, seed: u64) -> MiceConfig {
    MiceConfig {
        n_iterations: 3,
        n_imputations: m,
        draw_method: DrawMethod::Pmm,
        forest: ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        },
        seed,
        ..MiceConfig::default()
    }
}

#[test]
fn interval_width_grows_with_missing_rate() {
    let data = generate_synthetic(&SyntheticSpec::gaussian_benchmark(500, 10, 0.2), 20).unwrap();
    let set = mice_multiple(&data.amputed, &quick_mice(20, 21)).unwrap();
    let scoring = ScoringModel::round_robin(&data.amputed.column_names(), 5).unwrap();
    let dist = score_distribution(&set, &scoring, 0.95).unwrap();
    let bins = width_by_missing_rate(&dist, dist.overall_index(), 0.1, None).unwrap();
    let median_at = |lower: f64| {
        bins.iter()
            .find(|b| b.group == "all" && (b.lower - lower).abs() < 1e-9)
            .map(|b| b.median_width)
            .unwrap()
    };
    assert_eq!(median_at(0.0), 0.0);
    assert!(median_at(0.3) > median_at(0.1), "{bins:?}");
}

fn workflow_config(seed: u64) -> WorkflowConfig {
    WorkflowConfig {
        mice: quick_mice(4, 0),
        seed,
        ..WorkflowConfig::default()
    }
}

#[test]
fn workflow_on_complete_data() {
    let data = generate_synthetic(&SyntheticSpec::gaussian_benchmark(200, 4, 0.3), 22).unwrap();
    let raw = data.complete;
    let scoring = ScoringModel::round_robin(&raw.column_names(), 3).unwrap();
    let out = run_workflow(&raw, &scoring, &workflow_config(1)).unwrap();
    assert!(out.scores.summary.iter().all(|s| s.width() == 0.0));
    // nothing was missing, so the twin is never amputated
    assert_eq!(out.amputed_twin.missing_count(), 0);
    assert!(out.validation_truth.is_empty());
    assert_eq!(out.report.find(Level::Kpi, "all").unwrap().n, 0);
}

#[test]
fn workflow_is_deterministic() {
    let data = generate_synthetic(&SyntheticSpec::gaussian_benchmark(200, 4, 0.3), 23).unwrap();
    let scoring = ScoringModel::round_robin(&data.amputed.column_names(), 3).unwrap();
    let a = run_workflow(&data.amputed, &scoring, &workflow_config(5)).unwrap();
    let b = run_workflow(&data.amputed, &scoring, &workflow_config(5)).unwrap();
    assert_eq!(a.report.to_csv_rows(), b.report.to_csv_rows());
    assert_eq!(a.amputed_twin, b.amputed_twin);
    assert!(a.report.find(Level::Kpi, "all").unwrap().n > 0);
    let c = run_workflow(&data.amputed, &scoring, &workflow_config(6)).unwrap();
    assert_ne!(a.report.to_csv_rows(), c.report.to_csv_rows());
}

#[test]
fn workflow_errors_name_the_step() {
    let data = generate_synthetic(&SyntheticSpec::gaussian_benchmark(50, 3, 0.3), 24).unwrap();
    let scoring = model(
        r#"{"descriptors": {"D": {"absent": 1}}, "pillars": {"Social": {"D": 1}}, "overall": {"Social": 1}}"#,
    );
    let err = run_workflow(&data.amputed, &scoring, &workflow_config(1)).unwrap_err();
    assert!(err.to_string().contains("step 1"), "{err}");
}
