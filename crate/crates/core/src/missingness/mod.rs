//! Missingness simulation: per-column missingness models, synthetic twins,
//! model-driven amputation and a ground-truth benchmark generator.

mod model;
mod synthetic;

pub use model::{
    ampute, augment, fit_missingness, AmputeConfig, AmputeMode, AugmentConfig, AugmentOrder, ColumnMissingness, MissingnessModel,
};
pub use synthetic::{
    generate_synthetic, Correlation, Marginal, Mechanism, SyntheticColumn, SyntheticData, SyntheticSpec,
};
