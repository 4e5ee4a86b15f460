//! Chained-equations imputation: single (point) and multiple (PMM / LRD)
//! modes, plus pooling of the multiple imputations into per-cell intervals.

mod draws;
mod engine;

pub use draws::{closest_donors, lrd_draw, pmm_draw, snap_to_support};
pub use engine::{
    fit_column_models, init_from_marginals, mice_multiple, mice_multiple_trained, mice_single,
    pool_cells, save_trace, ColumnModel, DrawMethod, ImputationSet, MiceConfig, PooledCell, SingleImputation,
    TraceRow, VisitOrder,
};
