//! Hold-out accuracy of single-imputation methods.

use serde::{Deserialize, Serialize};

use crate::baseline::{knn_impute, simple_impute, KnnConfig, Statistic};
use crate::dataset::{remove_observed, Dataset, HeldOut};
use crate::error::{Error, Result};
use crate::mice::{mice_single, DrawMethod, MiceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SingleMethod {
    Mean,
    Median,
    Mode,
    Knn(KnnConfig),
    MicePoint(MiceConfig),
}

impl SingleMethod {
    pub fn label(&self) -> &'static str {
        match self {
            SingleMethod::Mean => "mean",
            SingleMethod::Median => "median",
            SingleMethod::Mode => "mode",
            SingleMethod::Knn(_) => "knn",
            SingleMethod::MicePoint(_) => "mice-point",
        }
    }

    pub fn impute(&self, ds: &Dataset) -> Result<Dataset> {
        match self {
            SingleMethod::Mean => simple_impute(ds, Statistic::Mean),
            SingleMethod::Median => simple_impute(ds, Statistic::Median),
            SingleMethod::Mode => simple_impute(ds, Statistic::Mode),
            SingleMethod::Knn(cfg) => Ok(knn_impute(ds, cfg)?.dataset),
            SingleMethod::MicePoint(cfg) => {
                let cfg = MiceConfig {
                    draw_method: DrawMethod::Point,
                    ..cfg.clone()
                };
                Ok(mice_single(ds, &cfg)?.dataset)
            }
        }
    }
}

pub fn holdout_rmse(completed: &Dataset, truth: &[HeldOut]) -> f64 {
    let se: f64 = truth
        .iter()
        .map(|h| (completed.values()[[h.row, h.col]] - h.value).powi(2))
        .sum();
    (se / truth.len() as f64).sqrt()
}

/// Masks `fraction` of the observed cells of `ds` at random, imputes with
/// each method and returns the RMSE on the masked cells, in method order.
pub fn holdout_benchmark(
    ds: &Dataset,
    methods: &[SingleMethod],
    fraction: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let (masked, truth) = remove_observed(ds, fraction, seed)?;
    if truth.is_empty() {
        return Err(Error::Argument("hold-out fraction removes no cell".into()));
    }
    methods
        .iter()
        .map(|m| Ok(holdout_rmse(&m.impute(&masked)?, &truth)))
        .collect()
}
