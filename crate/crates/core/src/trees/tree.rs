//! Greedy variance-reduction regression trees with learned missing-value
//! routing.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Features;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        /// Observed inputs with `x <= threshold` go left.
        threshold: f64,
        missing_goes_left: bool,
        /// False when no training row reaching this node lacked the feature;
        /// the missing direction is then the left fallback.
        saw_missing: bool,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf(value: f64, n_samples: usize) -> Self {
        TreeNode::Leaf { value, n_samples }
    }

    /// Leaf reached by a row given as optional feature values.
    pub fn leaf_for(&self, x: &[Option<f64>]) -> &TreeNode {
        self.descend(|f| x[f])
    }

    pub fn predict_one(&self, x: &[Option<f64>]) -> f64 {
        self.leaf_value(|f| x[f])
    }

    pub fn predict_row(&self, x: &Features, row: usize) -> f64 {
        self.leaf_value(|f| x.get(row, f))
    }

    #[inline]
    fn leaf_value(&self, feature: impl Fn(usize) -> Option<f64>) -> f64 {
        match self.descend(feature) {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split { .. } => unreachable!("descend stops at leaves"),
        }
    }

    #[inline]
    fn descend(&self, feature: impl Fn(usize) -> Option<f64>) -> &TreeNode {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { .. } => return node,
                TreeNode::Split {
                    feature: f,
                    threshold,
                    missing_goes_left,
                    left,
                    right,
                    ..
                } => {
                    let go_left = match feature(*f) {
                        Some(v) => v <= *threshold,
                        None => *missing_goes_left,
                    };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Number of split nodes that fell back to left routing for missing values.
    pub fn n_missing_fallbacks(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split {
                saw_missing,
                left,
                right,
                ..
            } => usize::from(!saw_missing) + left.n_missing_fallbacks() + right.n_missing_fallbacks(),
        }
    }
}

/// How many candidate features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    #[default]
    All,
    /// `ceil(p / 3)`, the usual regression-forest choice.
    OneThird,
    Count(usize),
}

impl FeatureSubset {
    pub fn resolve(self, p: usize) -> usize {
        match self {
            FeatureSubset::All => p,
            FeatureSubset::OneThird => p.div_ceil(3),
            FeatureSubset::Count(k) => k,
        }
        .clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub mtry: FeatureSubset,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            mtry: FeatureSubset::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub missing_goes_left: bool,
    pub saw_missing: bool,
    /// Reduction in sum of squared errors.
    pub gain: f64,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
}

impl Moments {
    #[inline]
    fn add(&mut self, y: f64) {
        self.n += 1;
        self.sum += y;
    }

    #[inline]
    fn plus(self, o: Moments) -> Moments {
        Moments {
            n: self.n + o.n,
            sum: self.sum + o.sum,
        }
    }

    /// `sum^2 / n` of centred targets; zero for empty groups.
    #[inline]
    fn score(self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum * self.sum / self.n as f64
        }
    }
}

/// Best variance-reduction split of `rows` over `features`.
///
/// For every threshold between consecutive distinct observed values, rows
/// missing the feature are tried on both sides. When a node has both missing
/// and observed rows, an extra "is missing" split (threshold `+inf`, missing
/// right) is also considered. Ties keep the first candidate in order of
/// feature index, threshold, then left-before-right.
pub fn best_split(
    x: &Features,
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitCandidate> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let node_mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let min_leaf = min_samples_leaf.max(1);
    let mut best: Option<SplitCandidate> = None;
    let mut obs: Vec<(f64, f64)> = Vec::with_capacity(n);

    let consider = |cand: SplitCandidate, best: &mut Option<SplitCandidate>| {
        if best.is_none_or(|b| cand.gain > b.gain) {
            *best = Some(cand);
        }
    };

    for &f in features {
        obs.clear();
        let mut miss = Moments::default();
        for &i in rows {
            let yc = y[i] - node_mean;
            match x.get(i, f) {
                Some(v) => obs.push((v, yc)),
                None => miss.add(yc),
            }
        }
        obs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        let total_obs = obs.iter().fold(Moments::default(), |mut m, &(_, yc)| {
            m.add(yc);
            m
        });
        let parent = total_obs.plus(miss).score();
        let saw_missing = miss.n > 0;

        let mut left = Moments::default();
        for k in 0..obs.len().saturating_sub(1) {
            left.add(obs[k].1);
            if obs[k].0 == obs[k + 1].0 {
                continue;
            }
            let right = Moments {
                n: total_obs.n - left.n,
                sum: total_obs.sum - left.sum,
            };
            let threshold = midpoint(obs[k].0, obs[k + 1].0);
            let directions: &[bool] = if saw_missing { &[true, false] } else { &[true] };
            for &missing_left in directions {
                let (l, r) = if missing_left {
                    (left.plus(miss), right)
                } else {
                    (left, right.plus(miss))
                };
                if l.n < min_leaf || r.n < min_leaf {
                    continue;
                }
                let gain = l.score() + r.score() - parent;
                consider(
                    SplitCandidate {
                        feature: f,
                        threshold,
                        missing_goes_left: missing_left,
                        saw_missing,
                        gain,
                    },
                    &mut best,
                );
            }
        }
        if saw_missing && total_obs.n >= min_leaf && miss.n >= min_leaf {
            let gain = total_obs.score() + miss.score() - parent;
            consider(
                SplitCandidate {
                    feature: f,
                    threshold: f64::INFINITY,
                    missing_goes_left: false,
                    saw_missing,
                    gain,
                },
                &mut best,
            );
        }
    }
    best
}

/// Midpoint that still sends `lo` left and `hi` right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = lo + (hi - lo) / 2.0;
    if t >= hi || !t.is_finite() {
        lo
    } else {
        t
    }
}

pub fn fit_tree<R: Rng + ?Sized>(
    x: &Features,
    y: &[f64],
    params: &TreeParams,
    rng: &mut R,
) -> Result<TreeNode> {
    check_inputs(x, y)?;
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    Ok(fit_on_rows(x, y, rows, params, rng))
}

pub(crate) fn check_inputs(x: &Features, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::Fit("cannot fit a tree on zero rows".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Argument(format!(
            "{} targets for {} feature rows",
            y.len(),
            x.n_rows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("target contains a non-finite value".into()));
    }
    Ok(())
}

/// Grows a tree on the given row multiset (duplicates allowed for bootstraps).
pub(crate) fn fit_on_rows<R: Rng + ?Sized>(
    x: &Features,
    y: &[f64],
    rows: Vec<usize>,
    params: &TreeParams,
    rng: &mut R,
) -> TreeNode {
    let p = x.n_cols();
    let mtry = params.mtry.resolve(p);
    grow(x, y, rows, params, mtry, 0, rng)
}

fn grow<R: Rng + ?Sized>(
    x: &Features,
    y: &[f64],
    rows: Vec<usize>,
    params: &TreeParams,
    mtry: usize,
    depth: usize,
    rng: &mut R,
) -> TreeNode {
    let n = rows.len();
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let sse: f64 = rows.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    let min_leaf = params.min_samples_leaf.max(1);
    let depth_exhausted = params.max_depth.is_some_and(|d| depth >= d);
    if depth_exhausted
        || n < params.min_samples_split.max(2)
        || n < 2 * min_leaf
        || sse <= 1e-12 * (1.0 + mean.abs())
        || x.n_cols() == 0
    {
        return TreeNode::leaf(mean, n);
    }

    let p = x.n_cols();
    let mut features: Vec<usize> = if mtry >= p {
        (0..p).collect()
    } else {
        index::sample(rng, p, mtry).into_vec()
    };
    features.sort_unstable();

    let split = match best_split(x, y, &rows, &features, min_leaf) {
        Some(s) if s.gain > 1e-12 * sse.max(1e-300) => s,
        _ => return TreeNode::leaf(mean, n),
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&i| match x.get(i, split.feature) {
            Some(v) => v <= split.threshold,
            None => split.missing_goes_left,
        });
    let left = grow(x, y, left_rows, params, mtry, depth + 1, rng);
    let right = grow(x, y, right_rows, params, mtry, depth + 1, rng);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        missing_goes_left: split.missing_goes_left,
        saw_missing: split.saw_missing,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn constant_target_is_single_leaf() {
        let x = Features::from_column(&[1.0, 5.0, -2.0, 8.0]);
        let tree = fit_tree(&x, &[3.0; 4], &TreeParams::default(), &mut rng_from_seed(0)).unwrap();
        assert_eq!(tree, TreeNode::leaf(3.0, 4));
    }

    #[test]
    fn step_function_splits_between_two_and_three() {
        let x = Features::from_column(&[1.0, 2.0, 3.0, 4.0]);
        let y = [0.0, 0.0, 10.0, 10.0];
        let tree = fit_tree(&x, &y, &TreeParams::default(), &mut rng_from_seed(0)).unwrap();
        match &tree {
            TreeNode::Split {
                threshold,
                left,
                right,
                ..
            } => {
                assert!(*threshold > 2.0 && *threshold < 3.0);
                assert_eq!(**left, TreeNode::leaf(0.0, 2));
                assert_eq!(**right, TreeNode::leaf(10.0, 2));
            }
            leaf => panic!("expected split, got {leaf:?}"),
        }
    }

    #[test]
    fn missingness_alone_separates_target() {
        // twenty rows: feature observed -> y = 0, feature missing -> y = 1
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            if i % 3 == 0 {
                rows.push(vec![None]);
                y.push(1.0);
            } else {
                rows.push(vec![Some(i as f64 * 0.37)]);
                y.push(0.0);
            }
        }
        let x = Features::from_rows(&rows);
        let tree = fit_tree(&x, &y, &TreeParams::default(), &mut rng_from_seed(1)).unwrap();
        for i in 0..20 {
            assert_eq!(tree.predict_row(&x, i), y[i]);
        }
    }

    #[test]
    fn empty_input_is_fit_error() {
        let x = Features::new(0, 2);
        assert!(matches!(
            fit_tree(&x, &[], &TreeParams::default(), &mut rng_from_seed(0)),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn unseen_missing_routes_left() {
        let x = Features::from_column(&[1.0, 2.0, 3.0, 4.0]);
        let tree = fit_tree(&x, &[0.0, 0.0, 10.0, 10.0], &TreeParams::default(), &mut rng_from_seed(0))
            .unwrap();
        assert_eq!(tree.predict_one(&[None]), 0.0);
        assert_eq!(tree.n_missing_fallbacks(), 1);
    }

    #[test]
    fn depth_and_leaf_limits() {
        let xs: Vec<f64> = (0..64).map(f64::from).collect();
        let y: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let x = Features::from_column(&xs);
        let p = TreeParams {
            max_depth: Some(3),
            ..TreeParams::default()
        };
        let tree = fit_tree(&x, &y, &p, &mut rng_from_seed(0)).unwrap();
        assert!(tree.depth() <= 3);
        let p = TreeParams {
            min_samples_leaf: 10,
            ..TreeParams::default()
        };
        let tree = fit_tree(&x, &y, &p, &mut rng_from_seed(0)).unwrap();
        fn min_leaf(t: &TreeNode) -> usize {
            match t {
                TreeNode::Leaf { n_samples, .. } => *n_samples,
                TreeNode::Split { left, right, .. } => min_leaf(left).min(min_leaf(right)),
            }
        }
        assert!(min_leaf(&tree) >= 10);
    }

    #[test]
    fn mtry_resolution() {
        assert_eq!(FeatureSubset::OneThird.resolve(5), 2);
        assert_eq!(FeatureSubset::OneThird.resolve(6), 2);
        assert_eq!(FeatureSubset::OneThird.resolve(1), 1);
        assert_eq!(FeatureSubset::All.resolve(4), 4);
        assert_eq!(FeatureSubset::Count(9).resolve(4), 4);
    }
}
