//! Production imputation plus self-validation on a synthetic twin.

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, score_distribution, EvaluationReport, ScoreDistribution};
use super::model::ScoringModel;
use crate::dataset::{split_indices, Dataset, HeldOut};
use crate::error::{Error, Result, ResultExt};
use crate::mice::{fit_column_models, mice_multiple, mice_multiple_trained, ImputationSet, MiceConfig};
use crate::missingness::{
    ampute, augment, fit_missingness, AmputeConfig, AugmentConfig, AugmentOrder, MissingnessModel,
};
use crate::rng::derive_seed;
use crate::trees::BoostParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowConfig {
    pub mice: MiceConfig,
    pub missingness: BoostParams,
    pub augment_order: AugmentOrder,
    pub ampute: AmputeConfig,
    /// Share of the amputed twin's rows held out for validation.
    pub test_fraction: f64,
    /// Interval level for score distributions and coverage.
    pub level: f64,
    /// Which production completion is turned into the synthetic twin.
    pub twin_source: usize,
    pub seed: u64,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        Self {
            mice: MiceConfig::default(),
            missingness: BoostParams::classifier(),
            augment_order: AugmentOrder::default(),
            ampute: AmputeConfig::default(),
            test_fraction: 0.3,
            level: 0.95,
            twin_source: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkflowOutput {
    /// Multiple imputation of the raw data.
    pub production: ImputationSet,
    pub scores: ScoreDistribution,
    pub missingness: MissingnessModel,
    /// Fully synthetic copy of one production completion.
    pub twin: Dataset,
    /// The twin after model-driven amputation.
    pub amputed_twin: Dataset,
    /// Validation imputation restricted to the held-out rows.
    pub validation: ImputationSet,
    /// True twin values of the amputed cells in the held-out rows, indexed
    /// against `validation`.
    pub validation_truth: Vec<HeldOut>,
    pub report: EvaluationReport,
}

const STEP_IMPUTE: u64 = 1;
const STEP_MISSINGNESS: u64 = 2;
const STEP_AUGMENT: u64 = 3;
const STEP_AMPUTE: u64 = 4;
const STEP_VALIDATE: u64 = 5;

fn step<T>(n: u64, what: &str, r: Result<T>) -> Result<T> {
    r.context(|| format!("step {n} ({what})"))
}

/// Runs the five steps: multiple imputation of `raw`; missingness models on
/// `raw`; augmentation of one completion into a synthetic twin; amputation
/// of the twin; re-imputation with the training share of the twin's rows as
/// the only fitting data, evaluated on the held-out rows.
pub fn run_workflow(raw: &Dataset, scoring: &ScoringModel, cfg: &WorkflowConfig) -> Result<WorkflowOutput> {
    let mut mice = cfg.mice.clone();
    mice.seed = derive_seed(cfg.seed, &[STEP_IMPUTE]);
    let production = step(1, "production imputation", mice_multiple(raw, &mice))?;
    let scores = step(1, "score distribution", score_distribution(&production, scoring, cfg.level))?;

    let missingness = step(
        2,
        "missingness models",
        fit_missingness(raw, &cfg.missingness, derive_seed(cfg.seed, &[STEP_MISSINGNESS])),
    )?;

    let source = production.completed.get(cfg.twin_source).ok_or_else(|| {
        Error::Argument(format!(
            "twin source {} out of range for {} imputations",
            cfg.twin_source,
            production.m()
        ))
    })?;
    let augment_seed = derive_seed(cfg.seed, &[STEP_AUGMENT]);
    let models = step(
        3,
        "augmentation models",
        fit_column_models(source, raw.mask(), &cfg.mice.forest, augment_seed),
    )?;
    let twin = step(
        3,
        "augmentation",
        augment(
            source,
            &models,
            &AugmentConfig {
                draw_method: cfg.mice.draw_method,
                n_donors: cfg.mice.n_donors,
                order: cfg.augment_order,
            },
            derive_seed(augment_seed, &[1]),
        ),
    )?;

    let amputed_twin = step(
        4,
        "amputation",
        ampute(&twin, &missingness, &cfg.ampute, derive_seed(cfg.seed, &[STEP_AMPUTE])),
    )?;

    let validate_seed = derive_seed(cfg.seed, &[STEP_VALIDATE]);
    let (train, test) = step(
        5,
        "split",
        split_indices(amputed_twin.n_rows(), cfg.test_fraction, derive_seed(validate_seed, &[0])),
    )?;
    let order: Vec<usize> = train.iter().chain(&test).copied().collect();
    let stacked = amputed_twin.select_rows(&order);
    let training: Vec<bool> = (0..order.len()).map(|k| k < train.len()).collect();
    let mut mice5 = cfg.mice.clone();
    mice5.seed = derive_seed(validate_seed, &[1]);
    let full = step(5, "validation imputation", mice_multiple_trained(&stacked, &mice5, &training))?;

    let test_positions: Vec<usize> = (train.len()..order.len()).collect();
    let validation = ImputationSet {
        completed: full.completed.iter().map(|d| d.select_rows(&test_positions)).collect(),
        source_mask: amputed_twin.select_rows(&test).mask().clone(),
        config: full.config.clone(),
        trace: full.trace.clone(),
        in_bag_fallbacks: full.in_bag_fallbacks,
    };
    let validation_truth: Vec<HeldOut> = test
        .iter()
        .enumerate()
        .flat_map(|(k, &row)| {
            let (twin, amputed_twin) = (&twin, &amputed_twin);
            (0..twin.n_cols())
                .filter(move |&j| !amputed_twin.is_observed(row, j))
                .map(move |j| HeldOut {
                    row: k,
                    col: j,
                    value: twin.values()[[row, j]],
                })
        })
        .collect();
    let mut report = step(
        5,
        "evaluation",
        evaluate(&validation, &validation_truth, scoring, cfg.level),
    )?;
    report.seed = cfg.seed;

    Ok(WorkflowOutput {
        production,
        scores,
        missingness,
        twin,
        amputed_twin,
        validation,
        validation_truth,
        report,
    })
}
