//! Score distributions over imputations and RMSE / MAE / CR / AW reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use super::model::{compute_scores, Level, ScoreUnit, ScoringModel};
use crate::dataset::{Dataset, HeldOut};
use crate::error::{Error, Result};
use crate::io::{format_float, write_table};
use crate::mice::{pool_cells, DrawMethod, ImputationSet};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub row: usize,
    pub unit: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Fraction of the unit's KPIs missing in this row of the source data.
    pub missing_rate: f64,
}

impl ScoreSummary {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone)]
pub struct ScoreDistribution {
    pub units: Vec<ScoreUnit>,
    /// One `(rows, units)` score matrix per imputation.
    pub draws: Vec<Array2<f64>>,
    pub level: f64,
    /// Row-major over `(row, unit)`.
    pub summary: Vec<ScoreSummary>,
    row_ids: Vec<String>,
}

/// Per-row missing share of each unit's KPIs; shape `(rows, units)`.
fn unit_missing_rates(mask: &Array2<bool>, kpi_sets: &[Vec<usize>]) -> Array2<f64> {
    let n = mask.nrows();
    let mut out = Array2::zeros((n, kpi_sets.len()));
    for (u, kpis) in kpi_sets.iter().enumerate() {
        if kpis.is_empty() {
            continue;
        }
        for i in 0..n {
            let miss = kpis.iter().filter(|&&c| !mask[[i, c]]).count();
            out[[i, u]] = miss as f64 / kpis.len() as f64;
        }
    }
    out
}

/// KPI columns each unit aggregates, in [`ScoringModel::units`] order.
fn member_sets(model: &ScoringModel, ds: &Dataset) -> Vec<Vec<usize>> {
    let idx = |k: &String| ds.column_index(k).expect("resolved");
    let mut sets: Vec<Vec<usize>> = model
        .descriptors
        .values()
        .map(|m| m.keys().map(idx).collect())
        .collect();
    let desc = sets.clone();
    for members in model.pillars.values() {
        let mut s: Vec<usize> = members
            .keys()
            .flat_map(|d| desc[model.descriptors.get_index_of(d).expect("validated")].clone())
            .collect();
        s.sort_unstable();
        sets.push(s);
    }
    let mut all: Vec<usize> = model.kpis().into_iter().map(idx).collect();
    all.sort_unstable();
    sets.push(all);
    sets
}

/// Scores every completed dataset and summarises each `(row, unit)` by the
/// mean and the central `level` interval over imputations.
pub fn score_distribution(set: &ImputationSet, model: &ScoringModel, level: f64) -> Result<ScoreDistribution> {
    if set.m() < 2 {
        return Err(Error::Argument("score distributions need at least two imputations".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("level must lie in (0, 1), got {level}")));
    }
    let mut draws = Vec::with_capacity(set.m());
    let mut units = Vec::new();
    for d in &set.completed {
        let s = compute_scores(d, model)?;
        units = s.units;
        draws.push(s.values);
    }
    let first = &set.completed[0];
    let rates = unit_missing_rates(&set.source_mask, &member_sets(model, first));
    let (n, u) = (first.n_rows(), units.len());
    let mut summary = Vec::with_capacity(n * u);
    let mut buf = vec![0.0; set.m()];
    for row in 0..n {
        for unit in 0..u {
            for (k, d) in draws.iter().enumerate() {
                buf[k] = d[[row, unit]];
            }
            let (lower, upper) = stats::central_interval(&buf, level);
            summary.push(ScoreSummary {
                row,
                unit,
                mean: stats::mean(&buf),
                lower,
                upper,
                missing_rate: rates[[row, unit]],
            });
        }
    }
    Ok(ScoreDistribution {
        units,
        draws,
        level,
        summary,
        row_ids: first.row_ids().to_vec(),
    })
}

impl ScoreDistribution {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn get(&self, row: usize, unit: usize) -> &ScoreSummary {
        &self.summary[row * self.units.len() + unit]
    }

    pub fn unit_index(&self, level: Level, name: &str) -> Option<usize> {
        self.units.iter().position(|u| u.level == level && u.name == name)
    }

    pub fn overall_index(&self) -> usize {
        self.units.len() - 1
    }

    /// CSV with header `row,level,name,mean,lower,upper,missing_rate`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .summary
            .iter()
            .map(|s| {
                let unit = &self.units[s.unit];
                vec![
                    self.row_ids[s.row].clone(),
                    unit.level.to_string(),
                    unit.name.clone(),
                    format_float(s.mean),
                    format_float(s.lower),
                    format_float(s.upper),
                    format_float(s.missing_rate),
                ]
            })
            .collect();
        write_table(
            path,
            &["row", "level", "name", "mean", "lower", "upper", "missing_rate"],
            &rows,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Coverage rate as a fraction.
    pub cr: f64,
    pub aw: f64,
}

impl Metrics {
    /// From `(point, lower, upper, truth)` tuples; all fields are NaN when
    /// empty.
    pub fn from_intervals(items: impl IntoIterator<Item = (f64, f64, f64, f64)>) -> Self {
        let (mut n, mut se, mut ae, mut cov, mut w) = (0usize, 0.0, 0.0, 0usize, 0.0);
        for (point, lower, upper, truth) in items {
            n += 1;
            se += (point - truth).powi(2);
            ae += (point - truth).abs();
            cov += usize::from(lower <= truth && truth <= upper);
            w += upper - lower;
        }
        if n == 0 {
            return Self {
                n,
                rmse: f64::NAN,
                mae: f64::NAN,
                cr: f64::NAN,
                aw: f64::NAN,
            };
        }
        let nf = n as f64;
        Self {
            n,
            rmse: (se / nf).sqrt(),
            mae: ae / nf,
            cr: cov as f64 / nf,
            aw: w / nf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub level: Level,
    /// Column, descriptor or pillar name; `"all"` pools every unit of a level.
    pub name: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub draw_method: DrawMethod,
    pub m: usize,
    pub seed: u64,
    pub level: f64,
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub fn find(&self, level: Level, name: &str) -> Option<&Metrics> {
        self.rows
            .iter()
            .find(|r| r.level == level && r.name == name)
            .map(|r| &r.metrics)
    }

    pub fn to_csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    self.draw_method.to_string(),
                    r.level.to_string(),
                    r.name.clone(),
                    r.metrics.n.to_string(),
                    format_float(r.metrics.rmse),
                    format_float(r.metrics.mae),
                    format_float(r.metrics.cr),
                    format_float(r.metrics.aw),
                ]
            })
            .collect()
    }

    pub const CSV_HEADER: [&'static str; 8] = ["method", "level", "name", "n", "rmse", "mae", "cr", "aw"];

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_table(path, &Self::CSV_HEADER, &self.to_csv_rows())
    }
}

/// Metric rows as a fixed-width text table: one column block per score unit
/// (overall first, then pillars, then pooled descriptors and KPIs), one
/// sub-column per report.
pub fn comparison_table(reports: &[&EvaluationReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let mut columns: Vec<(Level, String, String)> = vec![(Level::Overall, "ESG".into(), "ESG".into())];
    for r in first.rows.iter().filter(|r| r.level == Level::Pillar && r.name != "all") {
        columns.push((Level::Pillar, r.name.clone(), r.name.clone()));
    }
    columns.push((Level::Descriptor, "all".into(), "Descriptors".into()));
    columns.push((Level::Kpi, "all".into(), "KPIs".into()));
    let cell = 8;
    let block = cell * reports.len();
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "");
    for (_, _, title) in &columns {
        let _ = write!(out, " | {title:^block$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<8}", "Metrics");
    for _ in &columns {
        out.push_str(" | ");
        for r in reports {
            let _ = write!(out, "{:>cell$}", r.draw_method.to_string().to_uppercase());
        }
    }
    out.push('\n');
    let rule = out.lines().last().map_or(0, str::len);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    let metrics: [(&str, fn(&Metrics) -> String); 4] = [
        ("RMSE", |m| format!("{:.3}", m.rmse)),
        ("MAE", |m| format!("{:.3}", m.mae)),
        ("CR (%)", |m| format!("{:.1}", 100.0 * m.cr)),
        ("AW", |m| format!("{:.3}", m.aw)),
    ];
    for (label, fmt) in metrics {
        let _ = write!(out, "{label:<8}");
        for (level, name, _) in &columns {
            out.push_str(" | ");
            for r in reports {
                let v = r.find(*level, name).map_or_else(|| "-".into(), fmt);
                let _ = write!(out, "{v:>cell$}");
            }
        }
        out.push('\n');
    }
    out
}

/// Accuracy and calibration of an imputation set against held-out truth, at
/// KPI level (pooled per-cell intervals) and at every score level (score
/// intervals against the scores of the first completion with the truth
/// inserted). Score units are evaluated on the rows where at least one of
/// their KPIs is held out.
pub fn evaluate(
    set: &ImputationSet,
    truth: &[HeldOut],
    model: &ScoringModel,
    level: f64,
) -> Result<EvaluationReport> {
    for h in truth {
        if !set.source_mask.get((h.row, h.col)).is_some_and(|&obs| !obs) {
            return Err(Error::Argument(format!(
                "truth cell ({}, {}) was not missing in the source data",
                h.row, h.col
            )));
        }
    }
    let first = &set.completed[0];
    let mut rows = Vec::new();

    let pooled: HashMap<(usize, usize), (f64, f64, f64)> = pool_cells(set, level)?
        .into_iter()
        .map(|c| ((c.row, c.col), (c.mean, c.lower, c.upper)))
        .collect();
    let cell = |h: &HeldOut| {
        let (mean, lower, upper) = pooled[&(h.row, h.col)];
        (mean, lower, upper, h.value)
    };
    let mut kpi_cols: Vec<usize> = model
        .kpis()
        .into_iter()
        .map(|k| first.require_column(k))
        .collect::<Result<_>>()?;
    kpi_cols.sort_unstable();
    for &c in &kpi_cols {
        rows.push(ReportRow {
            level: Level::Kpi,
            name: first.columns()[c].name.clone(),
            metrics: Metrics::from_intervals(truth.iter().filter(|h| h.col == c).map(cell)),
        });
    }
    rows.push(ReportRow {
        level: Level::Kpi,
        name: "all".into(),
        metrics: Metrics::from_intervals(truth.iter().filter(|h| kpi_cols.contains(&h.col)).map(cell)),
    });

    let dist = score_distribution(set, model, level)?;
    let mut truth_values = first.values().clone();
    for h in truth {
        truth_values[[h.row, h.col]] = h.value;
    }
    let truth_ds = first.replace_matrix(truth_values, first.mask().clone());
    let truth_scores = compute_scores(&truth_ds, model)?.values;

    let mut held = Array2::from_elem(set.source_mask.dim(), false);
    for h in truth {
        held[[h.row, h.col]] = true;
    }
    let members = member_sets(model, first);
    let mut by_level: Vec<(Level, Vec<(f64, f64, f64, f64)>)> = Vec::new();
    for (u, unit) in dist.units.iter().enumerate() {
        let items: Vec<(f64, f64, f64, f64)> = (0..dist.n_rows())
            .filter(|&i| members[u].iter().any(|&c| held[[i, c]]))
            .map(|i| {
                let s = dist.get(i, u);
                (s.mean, s.lower, s.upper, truth_scores[[i, u]])
            })
            .collect();
        rows.push(ReportRow {
            level: unit.level,
            name: unit.name.clone(),
            metrics: Metrics::from_intervals(items.iter().copied()),
        });
        match by_level.iter_mut().find(|(l, _)| *l == unit.level) {
            Some((_, v)) => v.extend(items),
            None => by_level.push((unit.level, items)),
        }
    }
    for (lvl, items) in by_level {
        if lvl != Level::Overall {
            rows.push(ReportRow {
                level: lvl,
                name: "all".into(),
                metrics: Metrics::from_intervals(items),
            });
        }
    }

    Ok(EvaluationReport {
        draw_method: set.config.draw_method,
        m: set.m(),
        seed: set.config.seed,
        level,
        rows,
    })
}
