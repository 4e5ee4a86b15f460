//! Histogram gradient boosting.
//!
//! Feature values are bucketed once into at most `n_bins` quantile bins plus
//! a dedicated missing bin. Each stage grows a tree on gradient/hessian
//! histograms; split search tries the missing bin on both sides and also
//! the pure "missing vs observed" partition.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::tree::TreeNode;
use super::Features;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::stats::{self, sigmoid};

const MISSING_BIN: u16 = u16::MAX;
const MIN_HESSIAN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostTask {
    RegressionSquaredLoss,
    BinaryLogloss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub task: BoostTask,
    pub n_stages: usize,
    pub learning_rate: f64,
    pub n_bins: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub l2_regularization: f64,
    /// Fraction of rows drawn (without replacement) for each stage.
    pub subsample: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            task: BoostTask::RegressionSquaredLoss,
            n_stages: 100,
            learning_rate: 0.1,
            n_bins: 255,
            max_depth: Some(5),
            min_samples_leaf: 20,
            l2_regularization: 0.0,
            subsample: 1.0,
        }
    }
}

impl BoostParams {
    pub fn classifier() -> Self {
        Self {
            task: BoostTask::BinaryLogloss,
            ..Self::default()
        }
    }
}

/// Upper bin edges of one feature; `x` falls in the first bin whose edge is
/// `>= x`, or the last bin when it exceeds every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges {
    pub edges: Vec<f64>,
}

impl BinEdges {
    pub fn fit(observed: &[f64], n_bins: usize) -> Self {
        let mut v = observed.to_vec();
        stats::sort_floats(&mut v);
        let mut distinct = v.clone();
        distinct.dedup();
        let edges = if distinct.len() <= n_bins {
            distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
        } else {
            let mut e: Vec<f64> = (1..n_bins)
                .map(|k| stats::quantile_sorted(&v, k as f64 / n_bins as f64))
                .collect();
            e.dedup();
            // the top edge must leave the maximum in a bin of its own side
            e.retain(|&x| x < *distinct.last().expect("non-empty"));
            e
        };
        Self { edges }
    }

    pub fn n_value_bins(&self) -> usize {
        self.edges.len() + 1
    }

    #[inline]
    pub fn bin(&self, x: Option<f64>) -> u16 {
        match x {
            None => MISSING_BIN,
            Some(v) => self
                .edges
                .partition_point(|&e| e.partial_cmp(&v) == Some(Ordering::Less)) as u16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub stages: Vec<TreeNode>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub n_bins: usize,
    pub task: BoostTask,
    pub bin_edges: Vec<BinEdges>,
    /// Training loss before the first stage and after each stage.
    pub train_loss: Vec<f64>,
}

impl BoostedModel {
    /// Model with no stages, predicting `base_score` everywhere.
    pub fn constant(task: BoostTask, base_score: f64) -> Self {
        Self {
            stages: Vec::new(),
            learning_rate: 0.0,
            base_score,
            n_bins: 0,
            task,
            bin_edges: Vec::new(),
            train_loss: Vec::new(),
        }
    }

    pub fn raw_row(&self, x: &Features, row: usize) -> f64 {
        self.base_score
            + self.learning_rate * self.stages.iter().map(|t| t.predict_row(x, row)).sum::<f64>()
    }
}

fn loss(task: BoostTask, raw: &[f64], y: &[f64]) -> f64 {
    let n = y.len().max(1) as f64;
    match task {
        BoostTask::RegressionSquaredLoss => {
            raw.iter().zip(y).map(|(r, t)| (r - t).powi(2)).sum::<f64>() / n
        }
        BoostTask::BinaryLogloss => {
            raw.iter()
                .zip(y)
                .map(|(&r, &t)| {
                    // log(1 + e^r) - t r, stable for large |r|
                    let softplus = if r > 0.0 { r + (-r).exp().ln_1p() } else { r.exp().ln_1p() };
                    softplus - t * r
                })
                .sum::<f64>()
                / n
        }
    }
}

pub fn fit_boosted(x: &Features, y: &[f64], params: &BoostParams, seed: u64) -> Result<BoostedModel> {
    if x.n_rows() == 0 {
        return Err(Error::Fit("cannot boost on zero rows".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Argument(format!("{} targets for {} rows", y.len(), x.n_rows())));
    }
    if !(params.n_bins >= 2 && params.n_bins < MISSING_BIN as usize) {
        return Err(Error::Argument(format!("n_bins {} out of range", params.n_bins)));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(Error::Argument("subsample must lie in (0, 1]".into()));
    }
    let n = x.n_rows();
    let base_score = match params.task {
        BoostTask::RegressionSquaredLoss => stats::mean(y),
        BoostTask::BinaryLogloss => {
            if y.iter().any(|&t| t != 0.0 && t != 1.0) {
                return Err(Error::Argument("binary labels must be 0 or 1".into()));
            }
            let pos = stats::mean(y);
            if pos == 0.0 || pos == 1.0 {
                return Err(Error::Fit("binary labels contain a single class".into()));
            }
            (pos / (1.0 - pos)).ln()
        }
    };

    let bin_edges: Vec<BinEdges> = (0..x.n_cols())
        .map(|f| {
            let obs: Vec<f64> = (0..n).filter_map(|i| x.get(i, f)).collect();
            BinEdges::fit(&obs, params.n_bins)
        })
        .collect();
    let binned: Vec<Vec<u16>> = bin_edges
        .iter()
        .enumerate()
        .map(|(f, e)| (0..n).map(|i| e.bin(x.get(i, f))).collect())
        .collect();

    let learner = HistLearner {
        binned: &binned,
        edges: &bin_edges,
        params,
    };
    let mut rng = rng_from_seed(seed);
    let mut raw = vec![base_score; n];
    let mut train_loss = vec![loss(params.task, &raw, y)];
    let mut stages = Vec::with_capacity(params.n_stages);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..params.n_stages {
        for i in 0..n {
            match params.task {
                BoostTask::RegressionSquaredLoss => {
                    grad[i] = raw[i] - y[i];
                    hess[i] = 1.0;
                }
                BoostTask::BinaryLogloss => {
                    let p = sigmoid(raw[i]);
                    grad[i] = p - y[i];
                    hess[i] = (p * (1.0 - p)).max(1e-16);
                }
            }
        }
        let rows: Vec<usize> = if params.subsample < 1.0 {
            let k = ((params.subsample * n as f64).round() as usize).max(1);
            let mut r = rand::seq::index::sample(&mut rng, n, k).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let tree = learner.grow(&grad, &hess, rows, 0);
        for (i, r) in raw.iter_mut().enumerate() {
            *r += params.learning_rate * tree.predict_row(x, i);
        }
        train_loss.push(loss(params.task, &raw, y));
        stages.push(tree);
    }

    Ok(BoostedModel {
        stages,
        learning_rate: params.learning_rate,
        base_score,
        n_bins: params.n_bins,
        task: params.task,
        bin_edges,
        train_loss,
    })
}

/// Raw scores: regression values, or logits for the binary task.
pub fn boosted_predict(model: &BoostedModel, x: &Features) -> Result<Vec<f64>> {
    if !model.bin_edges.is_empty() && x.n_cols() != model.bin_edges.len() {
        return Err(Error::Argument(format!(
            "model trained on {} features, got {}",
            model.bin_edges.len(),
            x.n_cols()
        )));
    }
    Ok((0..x.n_rows()).map(|i| model.raw_row(x, i)).collect())
}

pub fn boosted_predict_proba(model: &BoostedModel, x: &Features) -> Result<Vec<f64>> {
    if model.task != BoostTask::BinaryLogloss {
        return Err(Error::Usage("probabilities need a binary-task model".into()));
    }
    Ok(boosted_predict(model, x)?
        .into_iter()
        .map(|r| sigmoid(r).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
        .collect())
}

struct HistLearner<'a> {
    binned: &'a [Vec<u16>],
    edges: &'a [BinEdges],
    params: &'a BoostParams,
}

#[derive(Clone, Copy, Default)]
struct Bucket {
    g: f64,
    h: f64,
    n: usize,
}

impl Bucket {
    fn plus(self, o: Bucket) -> Bucket {
        Bucket {
            g: self.g + o.g,
            h: self.h + o.h,
            n: self.n + o.n,
        }
    }

    fn minus(self, o: Bucket) -> Bucket {
        Bucket {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }
}

struct HistSplit {
    feature: usize,
    /// Value bins `<= bin` go left; `None` means all observed bins go left.
    bin: Option<usize>,
    missing_left: bool,
    saw_missing: bool,
    gain: f64,
}

impl HistLearner<'_> {
    fn score(&self, b: Bucket) -> f64 {
        b.g * b.g / (b.h + self.params.l2_regularization)
    }

    fn leaf_value(&self, b: Bucket) -> f64 {
        let denom = b.h + self.params.l2_regularization;
        if denom <= 0.0 {
            0.0
        } else {
            -b.g / denom
        }
    }

    fn valid(&self, b: Bucket) -> bool {
        b.n >= self.params.min_samples_leaf.max(1) && b.h >= MIN_HESSIAN
    }

    fn grow(&self, grad: &[f64], hess: &[f64], rows: Vec<usize>, depth: usize) -> TreeNode {
        let total = rows.iter().fold(Bucket::default(), |acc, &i| {
            acc.plus(Bucket {
                g: grad[i],
                h: hess[i],
                n: 1,
            })
        });
        let leaf = TreeNode::leaf(self.leaf_value(total), rows.len());
        if self.params.max_depth.is_some_and(|d| depth >= d)
            || rows.len() < 2 * self.params.min_samples_leaf.max(1)
        {
            return leaf;
        }
        let Some(split) = self.best_split(grad, hess, &rows, total) else {
            return leaf;
        };
        if split.gain <= 1e-12 {
            return leaf;
        }
        let codes = &self.binned[split.feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| {
            let c = codes[i];
            if c == MISSING_BIN {
                split.missing_left
            } else {
                split.bin.is_none_or(|b| (c as usize) <= b)
            }
        });
        let threshold = match split.bin {
            Some(b) => self.edges[split.feature].edges[b],
            None => f64::INFINITY,
        };
        TreeNode::Split {
            feature: split.feature,
            threshold,
            missing_goes_left: split.missing_left,
            saw_missing: split.saw_missing,
            left: Box::new(self.grow(grad, hess, left_rows, depth + 1)),
            right: Box::new(self.grow(grad, hess, right_rows, depth + 1)),
        }
    }

    fn best_split(&self, grad: &[f64], hess: &[f64], rows: &[usize], total: Bucket) -> Option<HistSplit> {
        let parent = self.score(total);
        let mut best: Option<HistSplit> = None;
        for (f, codes) in self.binned.iter().enumerate() {
            let nb = self.edges[f].n_value_bins();
            let mut hist = vec![Bucket::default(); nb];
            let mut miss = Bucket::default();
            for &i in rows {
                let b = Bucket {
                    g: grad[i],
                    h: hess[i],
                    n: 1,
                };
                match codes[i] {
                    MISSING_BIN => miss = miss.plus(b),
                    c => hist[c as usize] = hist[c as usize].plus(b),
                }
            }
            let observed = total.minus(miss);
            let saw_missing = miss.n > 0;
            let mut left = Bucket::default();
            for (b, bucket) in hist.iter().enumerate().take(nb - 1) {
                left = left.plus(*bucket);
                if bucket.n == 0 && left.n == 0 {
                    continue;
                }
                let right = observed.minus(left);
                if right.n == 0 {
                    break;
                }
                let directions: &[bool] = if saw_missing { &[true, false] } else { &[true] };
                for &ml in directions {
                    let (l, r) = if ml { (left.plus(miss), right) } else { (left, right.plus(miss)) };
                    if !self.valid(l) || !self.valid(r) {
                        continue;
                    }
                    let gain = self.score(l) + self.score(r) - parent;
                    if best.as_ref().is_none_or(|s| gain > s.gain) {
                        best = Some(HistSplit {
                            feature: f,
                            bin: Some(b),
                            missing_left: ml,
                            saw_missing,
                            gain,
                        });
                    }
                }
            }
            if saw_missing && self.valid(observed) && self.valid(miss) {
                let gain = self.score(observed) + self.score(miss) - parent;
                if best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(HistSplit {
                        feature: f,
                        bin: None,
                        missing_left: false,
                        saw_missing,
                        gain,
                    });
                }
            }
        }
        best
    }
}
