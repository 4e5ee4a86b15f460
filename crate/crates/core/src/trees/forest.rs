//! Bootstrap-aggregated regression forests with out-of-bag bookkeeping.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_inputs, fit_on_rows, FeatureSubset, TreeNode, TreeParams};
use super::Features;
use crate::error::{Error, Result};
use crate::rng::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeParams {
                max_depth: None,
                min_samples_leaf: 5,
                min_samples_split: 2,
                mtry: FeatureSubset::OneThird,
            },
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    /// Sampled training rows per tree (with replacement, size = rows).
    pub bootstrap_indices: Vec<Vec<usize>>,
    pub target_column: Option<usize>,
    pub feature_columns: Vec<usize>,
    /// Mean prediction over the trees for which the row was out of bag.
    pub oob_predictions: Vec<Option<f64>>,
    pub oob_counts: Vec<usize>,
    n_features: usize,
}

/// Fits `params.n_trees` trees, tree `t` drawing from the stream
/// `(seed, t)`; the result does not depend on how trees are scheduled.
pub fn fit_forest(x: &Features, y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    check_inputs(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::Argument("a forest needs at least one tree".into()));
    }
    let n = x.n_rows();
    let fitted: Vec<(TreeNode, Vec<usize>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(seed, &[t as u64]);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let tree = fit_on_rows(x, y, rows.clone(), &params.tree, &mut rng);
            (tree, rows)
        })
        .collect();
    let (trees, bootstrap_indices): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();

    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let mut in_bag = vec![false; n];
    for (tree, rows) in trees.iter().zip(&bootstrap_indices) {
        in_bag.iter_mut().for_each(|b| *b = false);
        for &i in rows {
            in_bag[i] = true;
        }
        for i in (0..n).filter(|&i| !in_bag[i]) {
            sums[i] += tree.predict_row(x, i);
            counts[i] += 1;
        }
    }
    let oob_predictions = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();

    Ok(ForestModel {
        trees,
        bootstrap_indices,
        target_column: None,
        feature_columns: (0..x.n_cols()).collect(),
        oob_predictions,
        oob_counts: counts,
        n_features: x.n_cols(),
    })
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn with_columns(mut self, target: usize, features: Vec<usize>) -> Self {
        assert_eq!(features.len(), self.n_features);
        self.target_column = Some(target);
        self.feature_columns = features;
        self
    }

    pub fn predict_row(&self, x: &Features, row: usize) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x, row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_one(&self, x: &[Option<f64>]) -> f64 {
        self.trees.iter().map(|t| t.predict_one(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Per-tree in-bag flags over the training rows, indexed `[tree][row]`.
    pub fn in_bag(&self) -> Vec<Vec<bool>> {
        let n = self.oob_predictions.len();
        self.bootstrap_indices
            .iter()
            .map(|rows| {
                let mut flags = vec![false; n];
                rows.iter().for_each(|&i| flags[i] = true);
                flags
            })
            .collect()
    }

    /// Prediction at row `row` of `x` averaged over the trees that did not
    /// see training row `train_row`; `None` when every tree saw it.
    pub fn oob_predict_row(&self, x: &Features, row: usize, in_bag: &[Vec<bool>], train_row: usize) -> Option<f64> {
        let (sum, count) = self
            .trees
            .iter()
            .zip(in_bag)
            .filter(|(_, bag)| !bag[train_row])
            .fold((0.0, 0usize), |(s, c), (t, _)| (s + t.predict_row(x, row), c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// OOB prediction where defined, otherwise the all-tree prediction of the
    /// training row. The flag reports whether the fallback was used.
    pub fn honest_prediction(&self, x: &Features, row: usize) -> (f64, bool) {
        match self.oob_predictions.get(row).copied().flatten() {
            Some(p) => (p, false),
            None => (self.predict_row(x, row), true),
        }
    }

    pub fn summary(&self) -> ForestSummary {
        let depths: Vec<usize> = self.trees.iter().map(TreeNode::depth).collect();
        let leaves: usize = self.trees.iter().map(TreeNode::n_leaves).sum();
        let covered = self.oob_predictions.iter().filter(|p| p.is_some()).count();
        ForestSummary {
            n_trees: self.trees.len(),
            min_depth: depths.iter().copied().min().unwrap_or(0),
            max_depth: depths.iter().copied().max().unwrap_or(0),
            mean_depth: depths.iter().sum::<usize>() as f64 / depths.len().max(1) as f64,
            mean_leaves: leaves as f64 / self.trees.len().max(1) as f64,
            oob_coverage: covered as f64 / self.oob_predictions.len().max(1) as f64,
            missing_fallback_nodes: self.trees.iter().map(TreeNode::n_missing_fallbacks).sum(),
        }
    }
}

pub fn forest_predict(model: &ForestModel, x: &Features) -> Result<Vec<f64>> {
    if x.n_cols() != model.n_features {
        return Err(Error::Argument(format!(
            "forest trained on {} features, got {}",
            model.n_features,
            x.n_cols()
        )));
    }
    Ok((0..x.n_rows()).map(|i| model.predict_row(x, i)).collect())
}

/// `y_i - oob_i` for every training row with an OOB prediction.
pub fn oob_residuals(model: &ForestModel, y: &[f64]) -> Vec<(usize, f64)> {
    model
        .oob_predictions
        .iter()
        .zip(y)
        .enumerate()
        .filter_map(|(i, (p, &yi))| p.map(|p| (i, yi - p)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestSummary {
    pub n_trees: usize,
    pub min_depth: usize,
    pub max_depth: usize,
    pub mean_depth: f64,
    pub mean_leaves: f64,
    pub oob_coverage: f64,
    pub missing_fallback_nodes: usize,
}

impl fmt::Display for ForestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trees: {}", self.n_trees)?;
        writeln!(
            f,
            "depth: min {} / mean {:.2} / max {}",
            self.min_depth, self.mean_depth, self.max_depth
        )?;
        writeln!(f, "mean leaves: {:.2}", self.mean_leaves)?;
        writeln!(f, "oob coverage: {:.4}", self.oob_coverage)?;
        write!(f, "missing-direction fallbacks: {}", self.missing_fallback_nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> (Features, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y = xs.iter().map(|v| 2.0 * v + 1.0).collect();
        (Features::from_column(&xs), y)
    }

    #[test]
    fn single_tree_oob_is_complement_of_bootstrap() {
        let (x, y) = line(12);
        let params = ForestParams {
            n_trees: 1,
            ..ForestParams::default()
        };
        let m = fit_forest(&x, &y, &params, 5).unwrap();
        for i in 0..12 {
            let in_bag = m.bootstrap_indices[0].contains(&i);
            assert_eq!(m.oob_predictions[i].is_some(), !in_bag);
        }
        let res = oob_residuals(&m, &y);
        assert!(res.iter().all(|(i, _)| !m.bootstrap_indices[0].contains(i)));
    }

    #[test]
    fn constant_target_predicts_constant() {
        let (x, _) = line(30);
        let y = vec![4.25; 30];
        let m = fit_forest(&x, &y, &ForestParams::default(), 1).unwrap();
        assert!(forest_predict(&m, &x).unwrap().iter().all(|&p| p == 4.25));
        assert!(oob_residuals(&m, &y).iter().all(|(_, r)| *r == 0.0));
    }

    #[test]
    fn two_tree_forest_averages_trees() {
        let (x, y) = line(25);
        let params = ForestParams {
            n_trees: 2,
            ..ForestParams::default()
        };
        let m = fit_forest(&x, &y, &params, 3).unwrap();
        let p = forest_predict(&m, &x).unwrap();
        for i in 0..25 {
            let manual = (m.trees[0].predict_row(&x, i) + m.trees[1].predict_row(&x, i)) / 2.0;
            assert_eq!(p[i], manual);
        }
    }

    #[test]
    fn all_missing_row_gets_finite_prediction() {
        let (x, y) = line(40);
        let m = fit_forest(&x, &y, &ForestParams::default(), 3).unwrap();
        assert!(m.predict_one(&[None]).is_finite());
    }

    #[test]
    fn column_mismatch_is_argument_error() {
        let (x, y) = line(10);
        let m = fit_forest(&x, &y, &ForestParams::default(), 3).unwrap();
        let wide = Features::new(3, 2);
        assert!(matches!(forest_predict(&m, &wide), Err(Error::Argument(_))));
    }

    #[test]
    fn fitting_is_seed_deterministic() {
        let (x, y) = line(50);
        let a = fit_forest(&x, &y, &ForestParams::default(), 9).unwrap();
        let b = fit_forest(&x, &y, &ForestParams::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_renders() {
        let (x, y) = line(20);
        let s = fit_forest(&x, &y, &ForestParams::default(), 2).unwrap().summary();
        assert_eq!(s.n_trees, 100);
        assert!(s.to_string().contains("trees: 100"));
    }
}
