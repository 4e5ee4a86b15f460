//! Per-column missingness classifiers, synthetic twins and model-driven
//! amputation.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result, ResultExt};
use crate::mice::{ColumnModel, DrawMethod};
use crate::rng::{derive_seed, derived_rng};
use crate::trees::{boosted_predict_proba, fit_boosted, BoostParams, BoostTask, BoostedModel, Features};

#[derive(Debug, Clone)]
pub enum ColumnMissingness {
    /// Fixed probability, used when a column is never or always missing.
    Constant(f64),
    Boosted(BoostedModel),
}

/// One missingness classifier per column, each reading the raw values of
/// every other column.
#[derive(Debug, Clone)]
pub struct MissingnessModel {
    columns: Vec<String>,
    models: Vec<ColumnMissingness>,
}

fn feature_columns(p: usize, target: usize) -> Vec<usize> {
    (0..p).filter(|&c| c != target).collect()
}

impl MissingnessModel {
    /// Constant-probability model, mainly for simulation setups.
    pub fn constant(columns: Vec<String>, probabilities: &[f64]) -> Result<Self> {
        if columns.len() != probabilities.len() {
            return Err(Error::Argument(format!(
                "{} columns but {} probabilities",
                columns.len(),
                probabilities.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Argument(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self {
            columns,
            models: probabilities.iter().map(|&p| ColumnMissingness::Constant(p)).collect(),
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn model(&self, col: usize) -> &ColumnMissingness {
        &self.models[col]
    }

    fn check_columns(&self, ds: &Dataset) -> Result<()> {
        let names = ds.column_names();
        if names != self.columns {
            return Err(Error::Argument(format!(
                "missingness model fitted on columns {:?}, dataset has {:?}",
                self.columns, names
            )));
        }
        Ok(())
    }

    /// Probability that each row of `ds` is missing column `col`, given the
    /// row's (possibly incomplete) values of the other columns.
    pub fn predict_proba(&self, col: usize, ds: &Dataset) -> Result<Vec<f64>> {
        self.check_columns(ds)?;
        if col >= self.models.len() {
            return Err(Error::Argument(format!("column index {col} out of range")));
        }
        match &self.models[col] {
            ColumnMissingness::Constant(p) => Ok(vec![*p; ds.n_rows()]),
            ColumnMissingness::Boosted(m) => {
                let x = Features::from_dataset(ds, &feature_columns(ds.n_cols(), col));
                boosted_predict_proba(m, &x)
            }
        }
    }
}

/// Fits a binary boosted classifier per column on the indicator "cell is
/// missing". Columns that are never (or always) missing get a constant model
/// at their empirical rate.
pub fn fit_missingness(ds: &Dataset, params: &BoostParams, seed: u64) -> Result<MissingnessModel> {
    let params = BoostParams {
        task: BoostTask::BinaryLogloss,
        ..*params
    };
    let (n, p) = (ds.n_rows(), ds.n_cols());
    let models = (0..p)
        .into_par_iter()
        .map(|j| {
            let labels: Vec<f64> = (0..n).map(|i| f64::from(u8::from(!ds.is_observed(i, j)))).collect();
            let missing = labels.iter().filter(|&&l| l == 1.0).count();
            if missing == 0 || missing == n || p == 1 {
                return Ok(ColumnMissingness::Constant(missing as f64 / n.max(1) as f64));
            }
            let x = Features::from_dataset(ds, &feature_columns(p, j));
            fit_boosted(&x, &labels, &params, derive_seed(seed, &[j as u64]))
                .map(ColumnMissingness::Boosted)
                .context(|| format!("missingness model for column {:?}", ds.columns()[j].name))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MissingnessModel {
        columns: ds.column_names(),
        models,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOrder {
    /// Columns are replaced one after another, each conditioning on the
    /// values already replaced (one Gibbs sweep from the source).
    #[default]
    Sequential,
    /// Every column conditions on the untouched source values.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub draw_method: DrawMethod,
    pub n_donors: usize,
    pub order: AugmentOrder,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            draw_method: DrawMethod::Pmm,
            n_donors: 5,
            order: AugmentOrder::Sequential,
        }
    }
}

/// Forest predictions for every row of `input`; rows the forest was trained
/// on only use the trees that left them out of bag.
fn honest_predictions(model: &ColumnModel, input: &Array2<f64>) -> Vec<f64> {
    let rows: Vec<usize> = (0..input.nrows()).collect();
    let x = Features::from_matrix(input, &rows, &model.forest.feature_columns);
    let in_bag = model.forest.in_bag();
    let mut train_row = vec![None; input.nrows()];
    for (k, &r) in model.donor_rows.iter().enumerate() {
        train_row[r] = Some(k);
    }
    rows.par_iter()
        .map(|&i| {
            train_row[i]
                .and_then(|k| model.forest.oob_predict_row(&x, i, &in_bag, k))
                .unwrap_or_else(|| model.forest.predict_row(&x, i))
        })
        .collect()
}

/// Synthetic twin of a completed dataset: every cell of column `j` is
/// replaced by a PMM or LRD draw from `models[j]`, in column order.
pub fn augment(completed: &Dataset, models: &[ColumnModel], cfg: &AugmentConfig, seed: u64) -> Result<Dataset> {
    if !completed.is_complete() {
        return Err(Error::Argument("augment needs a completed dataset".into()));
    }
    if cfg.draw_method == DrawMethod::Point {
        return Err(Error::Argument("augment needs a stochastic draw method (pmm or lrd)".into()));
    }
    let p = completed.n_cols();
    if models.len() != p || models.iter().enumerate().any(|(j, m)| m.column != j) {
        return Err(Error::Argument("need one column model per column, in column order".into()));
    }
    let source = completed.values();
    let mut out = source.clone();
    for model in models {
        let j = model.column;
        let input = match cfg.order {
            AugmentOrder::Sequential => &out,
            AugmentOrder::Parallel => source,
        };
        let preds = honest_predictions(model, input);
        let mut rng = derived_rng(seed, &[j as u64]);
        let drawn = preds
            .iter()
            .map(|&pred| model.draw(pred, cfg.draw_method, cfg.n_donors, &mut rng))
            .collect::<Result<Vec<f64>>>()
            .context(|| format!("augmenting column {:?}", completed.columns()[j].name))?;
        for (i, v) in drawn.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(completed.replace_matrix(out, completed.mask().clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmputeMode {
    /// Each round redraws every amputable cell from the probabilities
    /// predicted on the previous state (a Gibbs sweep over indicators).
    #[default]
    Resample,
    /// Cells removed in any round stay removed.
    Accumulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmputeConfig {
    pub n_rounds: usize,
    pub mode: AmputeMode,
}

impl Default for AmputeConfig {
    fn default() -> Self {
        Self {
            n_rounds: 10,
            mode: AmputeMode::Resample,
        }
    }
}

/// Removes cells by Bernoulli draws with the model's per-cell missingness
/// probabilities, recomputed column by column on the current partially
/// amputed data. Cells already missing in `ds` always stay missing.
pub fn ampute(ds: &Dataset, model: &MissingnessModel, cfg: &AmputeConfig, seed: u64) -> Result<Dataset> {
    model.check_columns(ds)?;
    if cfg.n_rounds == 0 {
        return Err(Error::Argument("n_rounds must be at least 1".into()));
    }
    let source = ds.mask().clone();
    let mut current = ds.clone();
    for round in 0..cfg.n_rounds {
        for j in 0..ds.n_cols() {
            let probs = model.predict_proba(j, &current)?;
            let mut rng = derived_rng(seed, &[round as u64, j as u64]);
            let mut keep = current.mask().clone();
            for (i, &p) in probs.iter().enumerate() {
                let removed = rng.random::<f64>() < p;
                keep[[i, j]] = source[[i, j]]
                    && match cfg.mode {
                        AmputeMode::Resample => !removed,
                        AmputeMode::Accumulate => keep[[i, j]] && !removed,
                    };
            }
            current = ds.with_mask_and(&keep)?;
        }
    }
    Ok(current)
}
