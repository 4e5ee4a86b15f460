//! Tree learners: CART-style regression trees, random forests with
//! out-of-bag records, and histogram gradient boosting. All of them route
//! rows with a missing split feature through a learned direction.

mod boost;
mod features;
mod forest;
mod tree;

pub use boost::{
    boosted_predict, boosted_predict_proba, fit_boosted, BinEdges, BoostParams, BoostTask,
    BoostedModel,
};
pub use features::Features;
pub use forest::{fit_forest, forest_predict, oob_residuals, ForestModel, ForestParams, ForestSummary};
pub use tree::{best_split, fit_tree, FeatureSubset, SplitCandidate, TreeNode, TreeParams};
