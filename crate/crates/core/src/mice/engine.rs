//! Chained-equations sweeps with random-forest conditional models.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::draws::{lrd_draw, pmm_draw, snap_to_support};
use crate::dataset::Dataset;
use crate::error::{Error, Result, ResultExt};
use crate::io::{format_float, write_table};
use crate::rng::{derive_seed, derived_rng};
use crate::stats;
use crate::trees::{fit_forest, Features, ForestModel, ForestParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMethod {
    Point,
    Pmm,
    Lrd,
}

impl std::fmt::Display for DrawMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DrawMethod::Point => "point",
            DrawMethod::Pmm => "pmm",
            DrawMethod::Lrd => "lrd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VisitOrder {
    #[default]
    AscendingMissingRate,
    ColumnOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiceConfig {
    pub n_iterations: usize,
    pub n_imputations: usize,
    pub draw_method: DrawMethod,
    pub n_donors: usize,
    pub forest: ForestParams,
    /// Per-column forest overrides keyed by column name.
    pub column_forest: BTreeMap<String, ForestParams>,
    pub visit_order: VisitOrder,
    pub seed: u64,
    /// Point-mode stopping rule: every imputed cell moved less than
    /// `tolerance * column SD` between sweeps.
    pub tolerance: f64,
    /// Explicit per-chain seeds; derived from `seed` when absent.
    pub chain_seeds: Option<Vec<u64>>,
}

impl Default for MiceConfig {
    fn default() -> Self {
        Self {
            n_iterations: 10,
            n_imputations: 50,
            draw_method: DrawMethod::Pmm,
            n_donors: 5,
            forest: ForestParams::default(),
            column_forest: BTreeMap::new(),
            visit_order: VisitOrder::AscendingMissingRate,
            seed: 0,
            tolerance: 1e-4,
            chain_seeds: None,
        }
    }
}

impl MiceConfig {
    fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 || self.n_imputations == 0 || self.n_donors == 0 {
            return Err(Error::Argument(
                "n_iterations, n_imputations and n_donors must be at least 1".into(),
            ));
        }
        if let Some(s) = &self.chain_seeds {
            if s.len() != self.n_imputations {
                return Err(Error::Argument(format!(
                    "{} chain seeds for {} imputations",
                    s.len(),
                    self.n_imputations
                )));
            }
        }
        Ok(())
    }

    fn forest_for(&self, name: &str) -> &ForestParams {
        self.column_forest.get(name).unwrap_or(&self.forest)
    }

    pub fn chain_seed(&self, chain: usize) -> u64 {
        match &self.chain_seeds {
            Some(s) => s[chain],
            None => derive_seed(self.seed, &[chain as u64]),
        }
    }
}

/// Forest for one column plus the donor pool used by PMM/LRD draws.
#[derive(Debug, Clone)]
pub struct ColumnModel {
    pub column: usize,
    pub forest: ForestModel,
    /// Dataset rows the forest was trained on; they double as donors.
    pub donor_rows: Vec<usize>,
    /// OOB predictions of the donors (in-bag where a row was never OOB).
    pub donor_predictions: Vec<f64>,
    pub donor_values: Vec<f64>,
    pub donor_residuals: Vec<f64>,
    /// Donors whose prediction fell back to in-bag.
    pub in_bag_fallbacks: usize,
    /// Sorted observed support for discrete column kinds.
    pub support: Option<Vec<f64>>,
}

fn other_columns(p: usize, j: usize) -> Vec<usize> {
    (0..p).filter(|&c| c != j).collect()
}

impl ColumnModel {
    /// Fits column `column` of the complete matrix `work` on `rows`.
    pub fn fit(
        work: &Array2<f64>,
        column: usize,
        rows: Vec<usize>,
        params: &ForestParams,
        discrete: bool,
        seed: u64,
    ) -> Result<Self> {
        let p = work.ncols();
        let features = other_columns(p, column);
        let x = Features::from_matrix(work, &rows, &features);
        let y: Vec<f64> = rows.iter().map(|&i| work[[i, column]]).collect();
        let forest = fit_forest(&x, &y, params, seed)?.with_columns(column, features);
        let mut fallbacks = 0;
        let donor_predictions: Vec<f64> = (0..rows.len())
            .map(|r| {
                let (pred, fell_back) = forest.honest_prediction(&x, r);
                fallbacks += usize::from(fell_back);
                pred
            })
            .collect();
        let donor_residuals = y.iter().zip(&donor_predictions).map(|(v, p)| v - p).collect();
        let support = discrete.then(|| {
            let mut s = y.clone();
            stats::sort_floats(&mut s);
            s.dedup();
            s
        });
        Ok(Self {
            column,
            forest,
            donor_rows: rows,
            donor_predictions,
            donor_values: y,
            donor_residuals,
            in_bag_fallbacks: fallbacks,
            support,
        })
    }

    pub fn predict(&self, work: &Array2<f64>, rows: &[usize]) -> Vec<f64> {
        let x = Features::from_matrix(work, rows, &self.forest.feature_columns);
        (0..rows.len()).map(|r| self.forest.predict_row(&x, r)).collect()
    }

    pub fn draw<R: Rng + ?Sized>(
        &self,
        prediction: f64,
        method: DrawMethod,
        n_donors: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let v = match method {
            DrawMethod::Point => prediction,
            DrawMethod::Pmm => {
                return pmm_draw(prediction, &self.donor_predictions, &self.donor_values, n_donors, rng)
            }
            DrawMethod::Lrd => {
                lrd_draw(prediction, &self.donor_predictions, &self.donor_residuals, n_donors, rng)?
            }
        };
        Ok(match &self.support {
            Some(s) => snap_to_support(v, s),
            None => v,
        })
    }
}

/// Fits a column model for every column of a completed dataset, training
/// column `j` on the rows where `observed[(i, j)]` holds.
pub fn fit_column_models(
    completed: &Dataset,
    observed: &Array2<bool>,
    params: &ForestParams,
    seed: u64,
) -> Result<Vec<ColumnModel>> {
    if !completed.is_complete() {
        return Err(Error::Argument("column models need a completed dataset".into()));
    }
    if observed.dim() != completed.mask().dim() {
        return Err(Error::Argument("observation mask shape mismatch".into()));
    }
    let work = completed.values();
    (0..completed.n_cols())
        .map(|j| {
            let rows: Vec<usize> = (0..completed.n_rows()).filter(|&i| observed[[i, j]]).collect();
            let name = &completed.columns()[j].name;
            if rows.is_empty() {
                return Err(Error::Fit(format!("column {name:?} has no observed value")));
            }
            ColumnModel::fit(
                work,
                j,
                rows,
                params,
                completed.columns()[j].kind.is_discrete(),
                derive_seed(seed, &[j as u64]),
            )
            .context(|| format!("column {name:?}"))
        })
        .collect()
}

/// Fills each missing cell with a uniform draw from its column's observed
/// values.
pub fn init_from_marginals<R: Rng + ?Sized>(ds: &Dataset, rng: &mut R) -> Result<Dataset> {
    let all = vec![true; ds.n_rows()];
    let work = init_matrix(ds, &all, rng)?;
    ds.completed_with(&work)
}

fn init_matrix<R: Rng + ?Sized>(ds: &Dataset, training: &[bool], rng: &mut R) -> Result<Array2<f64>> {
    let mut work = ds.values().clone();
    for j in 0..ds.n_cols() {
        let missing: Vec<usize> = (0..ds.n_rows()).filter(|&i| !ds.is_observed(i, j)).collect();
        if missing.is_empty() {
            continue;
        }
        let pool: Vec<f64> = (0..ds.n_rows())
            .filter(|&i| training[i])
            .filter_map(|i| ds.get(i, j))
            .collect();
        if pool.is_empty() {
            return Err(Error::Fit(format!(
                "column {:?} has no observed value",
                ds.columns()[j].name
            )));
        }
        for i in missing {
            work[[i, j]] = pool[rng.random_range(0..pool.len())];
        }
    }
    Ok(work)
}

/// Mean and SD of a column's imputed cells after one sweep of one chain;
/// iteration 0 is the marginal initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub chain: usize,
    pub iteration: usize,
    pub column: usize,
    pub imputed_mean: f64,
    pub imputed_sd: f64,
}

/// Writes chain diagnostics as CSV with header
/// `chain,iteration,column,imputed_mean,imputed_sd`.
pub fn save_trace(trace: &[TraceRow], column_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|t| {
            vec![
                t.chain.to_string(),
                t.iteration.to_string(),
                column_names[t.column].clone(),
                format_float(t.imputed_mean),
                format_float(t.imputed_sd),
            ]
        })
        .collect();
    write_table(
        path,
        &["chain", "iteration", "column", "imputed_mean", "imputed_sd"],
        &rows,
    )
}

fn visit_order(ds: &Dataset, order: VisitOrder) -> Vec<usize> {
    let rates = ds.missingness().column_rates;
    let mut cols: Vec<usize> = (0..ds.n_cols()).filter(|&j| rates[j] > 0.0).collect();
    if order == VisitOrder::AscendingMissingRate {
        cols.sort_by(|&a, &b| rates[a].partial_cmp(&rates[b]).unwrap().then(a.cmp(&b)));
    }
    cols
}

struct ChainOutput {
    work: Array2<f64>,
    trace: Vec<TraceRow>,
    models: Vec<Option<ColumnModel>>,
    iterations: usize,
    fallbacks: usize,
}

const STREAM_INIT: u64 = 0;
const STREAM_FOREST: u64 = 1;
const STREAM_DRAW: u64 = 2;

fn run_chain(
    ds: &Dataset,
    cfg: &MiceConfig,
    chain: usize,
    chain_seed: u64,
    training: &[bool],
    method: DrawMethod,
) -> Result<ChainOutput> {
    let mut init_rng = derived_rng(chain_seed, &[STREAM_INIT]);
    let mut work = init_matrix(ds, training, &mut init_rng)?;
    let order = visit_order(ds, cfg.visit_order);
    let (n, p) = (ds.n_rows(), ds.n_cols());
    let point = method == DrawMethod::Point;

    let observed_sd: Vec<f64> = (0..p).map(|j| stats::std_dev(&ds.observed_values(j))).collect();
    let mut models: Vec<Option<ColumnModel>> = (0..p).map(|_| None).collect();
    let mut trace = Vec::new();
    let mut fallbacks = 0;
    let mut iterations = 0;

    for &j in &order {
        let init: Vec<f64> = (0..n).filter(|&i| !ds.is_observed(i, j)).map(|i| work[[i, j]]).collect();
        trace.push(TraceRow {
            chain,
            iteration: 0,
            column: j,
            imputed_mean: stats::mean(&init),
            imputed_sd: stats::std_dev(&init),
        });
    }

    for iteration in 0..cfg.n_iterations {
        iterations = iteration + 1;
        let mut converged = true;
        for &j in &order {
            let meta = &ds.columns()[j];
            let train: Vec<usize> = (0..n).filter(|&i| training[i] && ds.is_observed(i, j)).collect();
            if train.is_empty() {
                return Err(Error::Fit(format!("column {:?} has no training value", meta.name)));
            }
            let missing: Vec<usize> = (0..n).filter(|&i| !ds.is_observed(i, j)).collect();
            let forest_seed = if point {
                derive_seed(chain_seed, &[STREAM_FOREST, j as u64])
            } else {
                derive_seed(chain_seed, &[STREAM_FOREST, iteration as u64, j as u64])
            };
            let model = ColumnModel::fit(
                &work,
                j,
                train,
                cfg.forest_for(&meta.name),
                meta.kind.is_discrete(),
                forest_seed,
            )
            .context(|| format!("chain {chain}, iteration {iteration}, column {:?}", meta.name))?;
            fallbacks += model.in_bag_fallbacks;

            let preds = model.predict(&work, &missing);
            let mut draw_rng = derived_rng(chain_seed, &[STREAM_DRAW, iteration as u64, j as u64]);
            let mut max_change: f64 = 0.0;
            let mut imputed = Vec::with_capacity(missing.len());
            for (&i, &pred) in missing.iter().zip(&preds) {
                let v = model
                    .draw(pred, method, cfg.n_donors, &mut draw_rng)
                    .context(|| format!("chain {chain}, column {:?}", meta.name))?;
                max_change = max_change.max((v - work[[i, j]]).abs());
                work[[i, j]] = v;
                imputed.push(v);
            }
            if max_change >= cfg.tolerance * observed_sd[j] {
                converged = false;
            }
            trace.push(TraceRow {
                chain,
                iteration: iteration + 1,
                column: j,
                imputed_mean: stats::mean(&imputed),
                imputed_sd: stats::std_dev(&imputed),
            });
            models[j] = Some(model);
        }
        // the first sweep always replaces the marginal initialisation
        if point && converged && iteration > 0 {
            break;
        }
    }
    Ok(ChainOutput {
        work,
        trace,
        models,
        iterations,
        fallbacks,
    })
}

#[derive(Debug, Clone)]
pub struct SingleImputation {
    pub dataset: Dataset,
    /// One model per column; columns without missing cells are fitted on the
    /// completed data after the last sweep.
    pub models: Vec<ColumnModel>,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Single-imputation MICE: point predictions until the imputed cells stop
/// moving or `n_iterations` sweeps have run.
pub fn mice_single(ds: &Dataset, cfg: &MiceConfig) -> Result<SingleImputation> {
    cfg.validate()?;
    let training = vec![true; ds.n_rows()];
    let seed = cfg.chain_seed(0);
    let out = run_chain(ds, cfg, 0, seed, &training, DrawMethod::Point)?;
    let dataset = ds.completed_with(&out.work)?;
    let models = out
        .models
        .into_iter()
        .enumerate()
        .map(|(j, m)| match m {
            Some(m) => Ok(m),
            None => {
                let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.is_observed(i, j)).collect();
                if rows.is_empty() {
                    return Err(Error::Fit(format!(
                        "column {:?} has no observed value",
                        ds.columns()[j].name
                    )));
                }
                let meta = &ds.columns()[j];
                ColumnModel::fit(
                    dataset.values(),
                    j,
                    rows,
                    cfg.forest_for(&meta.name),
                    meta.kind.is_discrete(),
                    derive_seed(seed, &[STREAM_FOREST, j as u64]),
                )
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SingleImputation {
        dataset,
        models,
        iterations: out.iterations,
        trace: out.trace,
    })
}

/// `m` completed datasets that agree on every originally observed cell.
#[derive(Debug, Clone)]
pub struct ImputationSet {
    pub completed: Vec<Dataset>,
    pub source_mask: Array2<bool>,
    pub config: MiceConfig,
    pub trace: Vec<TraceRow>,
    /// Donor rows that used in-bag instead of OOB predictions, over all fits.
    pub in_bag_fallbacks: usize,
}

impl ImputationSet {
    pub fn m(&self) -> usize {
        self.completed.len()
    }

    /// Cells that were missing in the source data.
    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        self.source_mask
            .indexed_iter()
            .filter(|(_, &m)| !m)
            .map(|(ij, _)| ij)
            .collect()
    }

    pub fn values_at(&self, row: usize, col: usize) -> Vec<f64> {
        self.completed.iter().map(|d| d.values()[[row, col]]).collect()
    }
}

/// Multiple imputation: `n_imputations` independent chains, each a marginal
/// initialisation followed by `n_iterations` stochastic sweeps.
pub fn mice_multiple(ds: &Dataset, cfg: &MiceConfig) -> Result<ImputationSet> {
    let training = vec![true; ds.n_rows()];
    mice_multiple_trained(ds, cfg, &training)
}

/// As [`mice_multiple`], but forests and donor pools only use rows flagged in
/// `training`; the remaining rows are imputed without contributing to any fit.
pub fn mice_multiple_trained(ds: &Dataset, cfg: &MiceConfig, training: &[bool]) -> Result<ImputationSet> {
    cfg.validate()?;
    if cfg.draw_method == DrawMethod::Point {
        return Err(Error::Argument(
            "multiple imputation needs a stochastic draw method (pmm or lrd)".into(),
        ));
    }
    if training.len() != ds.n_rows() {
        return Err(Error::Argument("training flags do not match the row count".into()));
    }
    let outputs: Vec<ChainOutput> = (0..cfg.n_imputations)
        .into_par_iter()
        .map(|c| run_chain(ds, cfg, c, cfg.chain_seed(c), training, cfg.draw_method))
        .collect::<Result<_>>()?;
    let mut completed = Vec::with_capacity(outputs.len());
    let mut trace = Vec::new();
    let mut fallbacks = 0;
    for out in outputs {
        completed.push(ds.completed_with(&out.work)?);
        trace.extend(out.trace);
        fallbacks += out.fallbacks;
    }
    Ok(ImputationSet {
        completed,
        source_mask: ds.mask().clone(),
        config: cfg.clone(),
        trace,
        in_bag_fallbacks: fallbacks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledCell {
    pub row: usize,
    pub col: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per originally-missing cell: mean over imputations and the central
/// empirical `level` interval (type-7 quantiles).
pub fn pool_cells(set: &ImputationSet, level: f64) -> Result<Vec<PooledCell>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!("level must lie in (0, 1), got {level}")));
    }
    if set.m() < 2 {
        return Err(Error::Argument("pooling needs at least two imputations".into()));
    }
    Ok(set
        .missing_cells()
        .into_iter()
        .map(|(row, col)| {
            let v = set.values_at(row, col);
            let (lower, upper) = stats::central_interval(&v, level);
            PooledCell {
                row,
                col,
                mean: stats::mean(&v),
                lower,
                upper,
            }
        })
        .collect())
}
