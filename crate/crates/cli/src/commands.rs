use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mi_workbench::baseline::{knn_impute, simple_impute, KnnConfig, Statistic};
use mi_workbench::io::{
    format_float, load_column_kinds, load_csv_with, load_truth, read_json, save_csv, save_truth, write_table,
    LoadOptions,
};
use mi_workbench::mice::{mice_multiple, mice_single, pool_cells, save_trace, DrawMethod, ImputationSet, MiceConfig};
use mi_workbench::missingness::{
    ampute as ampute_dataset, fit_missingness, generate_synthetic, AmputeConfig, AmputeMode, MissingnessModel,
    SyntheticSpec,
};
use mi_workbench::scoring::{
    comparison_table, evaluate as evaluate_set, run_workflow, save_histograms, save_width_bins,
    score_distribution, value_histograms, width_by_missing_rate, EvaluationReport, ScoringModel, WorkflowConfig,
};
use mi_workbench::trees::BoostParams;
use mi_workbench::{Dataset, Error, Result};

use crate::manifest::Manifest;
use crate::{
    AmputeArgs, AmputeModeArg, Draw, EvaluateArgs, GenerateArgs, ImputeArgs, ImputeMethod, InputArgs, MiceArgs,
    ScoringArgs, WorkflowArgs,
};

impl From<Draw> for DrawMethod {
    fn from(d: Draw) -> Self {
        match d {
            Draw::Pmm => DrawMethod::Pmm,
            Draw::Lrd => DrawMethod::Lrd,
        }
    }
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::Usage(format!("--seed is required for {what}")))
}

fn load_input(a: &InputArgs) -> Result<Dataset> {
    let opts = LoadOptions {
        missing_token: a.missing_token.clone(),
        group_column: a.group_column.clone(),
    };
    let ds = load_csv_with(&a.input, &opts)?;
    match &a.kinds {
        Some(path) => ds.with_kinds(&load_column_kinds(path)?),
        None => Ok(ds),
    }
}

fn mice_config(a: &MiceArgs, draw: DrawMethod, seed: u64) -> Result<MiceConfig> {
    let mut cfg: MiceConfig = match &a.mice_config {
        Some(path) => read_json(path)?,
        None => MiceConfig::default(),
    };
    if let Some(m) = a.m {
        cfg.n_imputations = m;
    }
    if let Some(d) = a.donors {
        cfg.n_donors = d;
    }
    if let Some(i) = a.iterations {
        cfg.n_iterations = i;
    }
    if let Some(t) = a.trees {
        cfg.forest.n_trees = t;
    }
    if let Some(l) = a.min_leaf {
        cfg.forest.tree.min_samples_leaf = l;
    }
    cfg.draw_method = draw;
    cfg.seed = seed;
    Ok(cfg)
}

fn scoring_model(a: &ScoringArgs, ds: &Dataset) -> Result<ScoringModel> {
    match (&a.scoring, a.descriptors) {
        (Some(path), _) => ScoringModel::load(path),
        (None, Some(n)) => ScoringModel::round_robin(&ds.column_names(), n),
        (None, None) => ScoringModel::round_robin(&ds.column_names(), ds.n_cols()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `dir/b.csv` with a suffix: `dir/b.{suffix}.csv`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    let ext = out.extension().map(|s| s.to_string_lossy()).unwrap_or("csv".into());
    out.with_file_name(format!("{stem}.{suffix}.{ext}"))
}

fn manifest_path(out: &Path) -> PathBuf {
    let name = out.file_name().map(|s| s.to_string_lossy()).unwrap_or_default();
    out.with_file_name(format!("{name}.manifest.json"))
}

fn completion_names(m: usize) -> Vec<String> {
    let width = m.to_string().len().max(3);
    (1..=m).map(|k| format!("{k:0width$}")).collect()
}

fn save_pooled(set: &ImputationSet, level: f64, path: &Path) -> Result<()> {
    let first = &set.completed[0];
    let rows: Vec<Vec<String>> = pool_cells(set, level)?
        .into_iter()
        .map(|c| {
            vec![
                first.row_ids()[c.row].clone(),
                first.columns()[c.col].name.clone(),
                format_float(c.mean),
                format_float(c.lower),
                format_float(c.upper),
            ]
        })
        .collect();
    write_table(path, &["row", "column", "mean", "lower", "upper"], &rows)
}

fn save_completions(set: &ImputationSet, out: &Path, manifest: &mut Manifest) -> Result<()> {
    for (d, name) in set.completed.iter().zip(completion_names(set.m())) {
        let path = sibling(out, &name);
        save_csv(d, &path)?;
        manifest.output(path);
    }
    Ok(())
}

pub fn impute(a: ImputeArgs) -> Result<()> {
    let ds = load_input(&a.input)?;
    let stochastic = matches!(a.method, ImputeMethod::MicePoint | ImputeMethod::MiceMi);
    let seed = if stochastic {
        Some(require_seed(a.seed, "mice methods")?)
    } else {
        a.seed
    };
    let mut manifest = Manifest::new("impute", seed);
    manifest.config("method", a.method.to_possible_value().map(|v| v.get_name().to_string()));
    let single = match a.method {
        ImputeMethod::Mean => Some(simple_impute(&ds, Statistic::Mean)?),
        ImputeMethod::Median => Some(simple_impute(&ds, Statistic::Median)?),
        ImputeMethod::Mode => Some(simple_impute(&ds, Statistic::Mode)?),
        ImputeMethod::Knn => {
            let cfg = KnnConfig {
                k: a.k,
                min_overlap: a.min_overlap,
            };
            manifest.config("knn", cfg);
            let outcome = knn_impute(&ds, &cfg)?;
            for w in &outcome.warnings {
                eprintln!("miwb: warning: {w}");
            }
            Some(outcome.dataset)
        }
        ImputeMethod::MicePoint => {
            let cfg = mice_config(&a.mice, DrawMethod::Point, seed.expect("checked"))?;
            manifest.config("mice", &cfg);
            Some(mice_single(&ds, &cfg)?.dataset)
        }
        ImputeMethod::MiceMi => None,
    };
    match single {
        Some(out) => {
            save_csv(&out, &a.out)?;
            manifest.output(&a.out);
        }
        None => {
            let cfg = mice_config(&a.mice, a.draw.into(), seed.expect("checked"))?;
            manifest.config("mice", &cfg);
            manifest.config("level", a.level);
            let set = mice_multiple(&ds, &cfg)?;
            save_completions(&set, &a.out, &mut manifest)?;
            let pooled = sibling(&a.out, "pooled");
            save_pooled(&set, a.level, &pooled)?;
            manifest.output(pooled);
            let trace = sibling(&a.out, "trace");
            save_trace(&set.trace, &ds.column_names(), &trace)?;
            manifest.output(trace);
        }
    }
    manifest.write(&manifest_path(&a.out))
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let seed = require_seed(a.seed, "generate")?;
    let spec = match &a.spec {
        Some(path) => read_json::<SyntheticSpec>(path).map_err(|e| match e {
            Error::Config(msg) => Error::Spec(msg),
            other => other,
        })?,
        None => SyntheticSpec::gaussian_benchmark(a.rows, a.cols, a.rate),
    };
    let data = generate_synthetic(&spec, seed)?;
    create_dir(&a.out_dir)?;
    let mut manifest = Manifest::new("generate", Some(seed));
    manifest.config("spec", &spec);
    let complete = a.out_dir.join("complete.csv");
    let amputed = a.out_dir.join("amputed.csv");
    let truth = a.out_dir.join("truth.csv");
    save_csv(&data.complete, &complete)?;
    save_csv(&data.amputed, &amputed)?;
    save_truth(&data.amputed, &data.truth, &truth)?;
    for p in [complete, amputed, truth] {
        manifest.output(p);
    }
    manifest.write(&a.out_dir.join("manifest.json"))
}

pub fn ampute(a: AmputeArgs) -> Result<()> {
    let seed = require_seed(a.seed, "ampute")?;
    let ds = load_input(&a.input)?;
    let mut manifest = Manifest::new("ampute", Some(seed));
    let model = match (&a.reference, a.rate) {
        (Some(path), _) => {
            let reference = load_csv_with(
                path,
                &LoadOptions {
                    missing_token: a.input.missing_token.clone(),
                    group_column: a.input.group_column.clone(),
                },
            )?;
            let params = BoostParams::classifier();
            manifest.config("missingness", params);
            fit_missingness(&reference, &params, seed)?
        }
        (None, Some(rate)) => {
            manifest.config("rate", rate);
            MissingnessModel::constant(ds.column_names(), &vec![rate; ds.n_cols()])?
        }
        (None, None) => return Err(Error::Usage("give --reference or --rate".into())),
    };
    let cfg = AmputeConfig {
        n_rounds: a.rounds,
        mode: match a.mode {
            AmputeModeArg::Resample => AmputeMode::Resample,
            AmputeModeArg::Accumulate => AmputeMode::Accumulate,
        },
    };
    manifest.config("ampute", cfg);
    let out = ampute_dataset(&ds, &model, &cfg, seed)?;
    save_csv(&out, &a.out)?;
    manifest.output(&a.out);
    manifest.write(&manifest_path(&a.out))
}

fn save_reports(reports: &[EvaluationReport], dir: &Path, manifest: &mut Manifest) -> Result<()> {
    let rows: Vec<Vec<String>> = reports.iter().flat_map(|r| r.to_csv_rows()).collect();
    let csv = dir.join("report.csv");
    write_table(&csv, &EvaluationReport::CSV_HEADER, &rows)?;
    let txt = dir.join("report.txt");
    let refs: Vec<&EvaluationReport> = reports.iter().collect();
    fs::write(&txt, comparison_table(&refs)).map_err(|e| Error::io(&txt, e))?;
    manifest.output(csv);
    manifest.output(txt);
    Ok(())
}

pub fn workflow(a: WorkflowArgs) -> Result<()> {
    let seed = require_seed(a.seed, "workflow")?;
    let raw = load_input(&a.input)?;
    let scoring = scoring_model(&a.scoring, &raw)?;
    create_dir(&a.out_dir)?;
    let mut manifest = Manifest::new("workflow", Some(seed));
    manifest.config("scoring", &scoring);
    let mut reports = Vec::new();
    for draw in &a.draw {
        let method = DrawMethod::from(*draw);
        let cfg = WorkflowConfig {
            mice: mice_config(&a.mice, method, 0)?,
            ampute: AmputeConfig {
                n_rounds: a.rounds,
                ..AmputeConfig::default()
            },
            test_fraction: a.test_fraction,
            level: a.level,
            seed,
            ..WorkflowConfig::default()
        };
        manifest.config(&format!("workflow_{method}"), &cfg);
        let out = run_workflow(&raw, &scoring, &cfg)?;

        let dir = a.out_dir.join(method.to_string());
        create_dir(&dir)?;
        let mut files = Vec::new();
        let path = |name: &str| dir.join(name);

        out.scores.save(path("scores.csv"))?;
        files.push(path("scores.csv"));
        out.report.save(path("report.csv"))?;
        files.push(path("report.csv"));
        save_histograms(&value_histograms(&out.production, a.hist_bins)?, path("histograms.csv"))?;
        files.push(path("histograms.csv"));
        let widths = width_by_missing_rate(&out.scores, out.scores.overall_index(), a.width_bin, raw.row_groups())?;
        save_width_bins(&widths, path("width_by_missing_rate.csv"))?;
        files.push(path("width_by_missing_rate.csv"));
        save_pooled(&out.production, a.level, &path("pooled.csv"))?;
        files.push(path("pooled.csv"));
        save_trace(&out.production.trace, &raw.column_names(), path("trace.csv"))?;
        files.push(path("trace.csv"));
        save_csv(&out.twin, path("twin.csv"))?;
        files.push(path("twin.csv"));
        save_csv(&out.amputed_twin, path("amputed_twin.csv"))?;
        files.push(path("amputed_twin.csv"));
        if a.write_imputations {
            save_completions(&out.production, &path("imputation.csv"), &mut manifest)?;
        }
        files.into_iter().for_each(|f| manifest.output(f));
        reports.push(out.report);
    }
    save_reports(&reports, &a.out_dir, &mut manifest)?;
    manifest.write(&a.out_dir.join("manifest.json"))
}

fn load_set(source: &Dataset, files: &[PathBuf], input: &InputArgs) -> Result<ImputationSet> {
    if files.len() < 2 {
        return Err(Error::Usage("--imputed needs at least two files".into()));
    }
    let opts = LoadOptions {
        missing_token: input.missing_token.clone(),
        group_column: input.group_column.clone(),
    };
    let completed = files
        .iter()
        .map(|f| {
            let d = load_csv_with(f, &opts)?;
            if d.column_names() != source.column_names() || d.row_ids() != source.row_ids() {
                return Err(Error::Structure(format!(
                    "{} does not match the rows and columns of the input",
                    f.display()
                )));
            }
            if !d.is_complete() {
                return Err(Error::Structure(format!("{} has missing cells", f.display())));
            }
            source.completed_with(d.values())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImputationSet {
        completed,
        source_mask: source.mask().clone(),
        config: MiceConfig::default(),
        trace: Vec::new(),
        in_bag_fallbacks: 0,
    })
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ds = load_input(&a.input)?;
    let truth = load_truth(&ds, &a.truth)?;
    let scoring = scoring_model(&a.scoring, &ds)?;
    create_dir(&a.out_dir)?;
    let mut sets: Vec<(String, ImputationSet)> = Vec::new();
    let mut manifest;
    if a.imputed.is_empty() {
        let seed = require_seed(a.seed, "evaluate without --imputed")?;
        manifest = Manifest::new("evaluate", Some(seed));
        for draw in &a.draw {
            let cfg = mice_config(&a.mice, (*draw).into(), seed)?;
            manifest.config(&format!("mice_{}", cfg.draw_method), &cfg);
            sets.push((cfg.draw_method.to_string(), mice_multiple(&ds, &cfg)?));
        }
    } else {
        manifest = Manifest::new("evaluate", a.seed);
        sets.push(("imputed".into(), load_set(&ds, &a.imputed, &a.input)?));
    }
    manifest.config("scoring", &scoring);
    let mut reports = Vec::new();
    for (name, set) in &sets {
        let dist = score_distribution(set, &scoring, a.level)?;
        let path = a.out_dir.join(format!("scores.{name}.csv"));
        dist.save(&path)?;
        manifest.output(path);
        reports.push(evaluate_set(set, &truth, &scoring, a.level)?);
    }
    save_reports(&reports, &a.out_dir, &mut manifest)?;
    manifest.write(&a.out_dir.join("manifest.json"))
}
