//! Benchmark imputers: per-column statistics and partial-distance KNN.

use std::cmp::Ordering;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Median,
    Mode,
}

/// Per-column fill values fitted on observed entries only.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleImputeRule {
    pub statistic: Statistic,
    pub fitted: Vec<f64>,
}

impl SimpleImputeRule {
    /// Fits every column that has at least one missing cell; fully observed
    /// columns get `NaN` since their value is never used.
    pub fn fit(ds: &Dataset, statistic: Statistic) -> Result<Self> {
        let mut fitted = Vec::with_capacity(ds.n_cols());
        for j in 0..ds.n_cols() {
            let obs = ds.observed_values(j);
            if obs.len() == ds.n_rows() {
                fitted.push(column_statistic(&obs, statistic));
                continue;
            }
            if obs.is_empty() {
                return Err(Error::Fit(format!(
                    "column {:?} has no observed value",
                    ds.columns()[j].name
                )));
            }
            fitted.push(column_statistic(&obs, statistic));
        }
        Ok(Self { statistic, fitted })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if self.fitted.len() != ds.n_cols() {
            return Err(Error::Argument("rule fitted on a different column count".into()));
        }
        let fill = Array2::from_shape_fn((ds.n_rows(), ds.n_cols()), |(_, j)| self.fitted[j]);
        ds.completed_with(&fill)
    }
}

fn column_statistic(obs: &[f64], statistic: Statistic) -> f64 {
    match statistic {
        Statistic::Mean => stats::mean(obs),
        Statistic::Median => stats::median(obs),
        Statistic::Mode => mode(obs),
    }
}

/// Most frequent value; ties go to the smallest value.
fn mode(obs: &[f64]) -> f64 {
    let mut v = obs.to_vec();
    stats::sort_floats(&mut v);
    let mut best = f64::NAN;
    let mut best_count = 0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if j - i > best_count {
            best_count = j - i;
            best = v[i];
        }
        i = j.max(i + 1);
    }
    best
}

pub fn simple_impute(ds: &Dataset, statistic: Statistic) -> Result<Dataset> {
    SimpleImputeRule::fit(ds, statistic)?.apply(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    /// Minimum number of co-observed columns for a defined distance.
    pub min_overlap: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5, min_overlap: 1 }
    }
}

/// Euclidean distance over co-observed coordinates, rescaled by
/// `D / |S|` where `D` is the vector length and `S` the co-observed set.
/// Returns `None` when fewer than `min_overlap` coordinates are shared.
pub fn partial_euclidean(
    a: &[f64],
    a_mask: &[bool],
    b: &[f64],
    b_mask: &[bool],
    min_overlap: usize,
) -> Result<Option<f64>> {
    let d = a.len();
    if b.len() != d || a_mask.len() != d || b_mask.len() != d {
        return Err(Error::Argument(format!(
            "vector lengths differ: {} / {} / {} / {}",
            a.len(),
            a_mask.len(),
            b.len(),
            b_mask.len()
        )));
    }
    Ok(partial_euclidean_unchecked(a, a_mask, b, b_mask, min_overlap))
}

fn partial_euclidean_unchecked(
    a: &[f64],
    a_mask: &[bool],
    b: &[f64],
    b_mask: &[bool],
    min_overlap: usize,
) -> Option<f64> {
    let mut shared = 0usize;
    let mut ss = 0.0;
    for i in 0..a.len() {
        if a_mask[i] && b_mask[i] {
            let diff = a[i] - b[i];
            ss += diff * diff;
            shared += 1;
        }
    }
    if shared == 0 || shared < min_overlap {
        return None;
    }
    Some((a.len() as f64 / shared as f64 * ss).sqrt())
}

#[derive(Debug, Clone)]
pub struct KnnOutcome {
    pub dataset: Dataset,
    /// One entry per cell that fell back to the column mean.
    pub warnings: Vec<String>,
}

/// Fills each missing cell with the unweighted mean of the `k` nearest rows
/// (by [`partial_euclidean`]) that observe the column. Ties in distance go to
/// the lower row index.
pub fn knn_impute(ds: &Dataset, cfg: &KnnConfig) -> Result<KnnOutcome> {
    if cfg.k == 0 || cfg.min_overlap == 0 {
        return Err(Error::Argument("k and min_overlap must be at least 1".into()));
    }
    let (n, p) = (ds.n_rows(), ds.n_cols());
    let means: Vec<f64> = (0..p).map(|j| stats::mean(&ds.observed_values(j))).collect();
    let rows: Vec<Vec<f64>> = ds.values().rows().into_iter().map(|r| r.to_vec()).collect();
    let masks: Vec<Vec<bool>> = ds.mask().rows().into_iter().map(|r| r.to_vec()).collect();

    let mut fill = ds.values().clone();
    let mut warnings = Vec::new();
    for i in 0..n {
        if masks[i].iter().all(|&m| m) {
            continue;
        }
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&r| r != i)
            .filter_map(|r| {
                partial_euclidean_unchecked(&rows[i], &masks[i], &rows[r], &masks[r], cfg.min_overlap)
                    .map(|d| (d, r))
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        for j in (0..p).filter(|&j| !masks[i][j]) {
            let donors: Vec<f64> = dists
                .iter()
                .filter(|(_, r)| masks[*r][j])
                .take(cfg.k)
                .map(|&(_, r)| rows[r][j])
                .collect();
            if donors.is_empty() {
                if means[j].is_nan() {
                    return Err(Error::Fit(format!(
                        "column {:?} has no observed value",
                        ds.columns()[j].name
                    )));
                }
                warnings.push(format!(
                    "row {:?} column {:?}: no eligible neighbor, used column mean",
                    ds.row_ids()[i],
                    ds.columns()[j].name
                ));
                fill[[i, j]] = means[j];
            } else {
                fill[[i, j]] = stats::mean(&donors);
            }
        }
    }
    Ok(KnnOutcome {
        dataset: ds.completed_with(&fill)?,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(vals: &[Option<f64>]) -> Dataset {
        let rows: Vec<Vec<Option<f64>>> = vals.iter().map(|v| vec![*v]).collect();
        Dataset::from_rows(&["a"], &rows).unwrap()
    }

    #[test]
    fn mean_rule() {
        let out = simple_impute(&col(&[Some(1.0), None, Some(3.0)]), Statistic::Mean).unwrap();
        assert_eq!(out.get(1, 0), Some(2.0));
        assert!(out.is_complete());
    }

    #[test]
    fn median_rule() {
        let ds = col(&[Some(1.0), Some(2.0), None, Some(100.0)]);
        assert_eq!(simple_impute(&ds, Statistic::Median).unwrap().get(2, 0), Some(2.0));
    }

    #[test]
    fn mode_rule_and_ties() {
        let ds = col(&[Some(5.0), Some(7.0), Some(5.0), None]);
        assert_eq!(simple_impute(&ds, Statistic::Mode).unwrap().get(3, 0), Some(5.0));

        // brute-force frequency count with smallest-value tie-break
        let obs = [3.0, 9.0, 9.0, 3.0, 4.0, 1.0];
        let mut best = (0usize, f64::INFINITY);
        for &v in &obs {
            let c = obs.iter().filter(|&&x| x == v).count();
            if c > best.0 || (c == best.0 && v < best.1) {
                best = (c, v);
            }
        }
        assert_eq!(mode(&obs), best.1);
        assert_eq!(mode(&obs), 3.0);
    }

    #[test]
    fn fully_missing_column_names_the_column() {
        let ds = Dataset::from_rows(&["a", "gone"], &[vec![Some(1.0), None], vec![Some(2.0), None]])
            .unwrap();
        match simple_impute(&ds, Statistic::Mean) {
            Err(Error::Fit(msg)) => assert!(msg.contains("gone")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partial_distance_examples() {
        let a = [1.0, 2.0, 3.0];
        let m = [true; 3];
        assert_eq!(partial_euclidean(&a, &m, &a, &m, 1).unwrap(), Some(0.0));

        let d = partial_euclidean(&[0.0, f64::NAN], &[true, false], &[3.0, 4.0], &[true, true], 1)
            .unwrap()
            .unwrap();
        assert!((d - 18f64.sqrt()).abs() < 1e-12);

        assert_eq!(
            partial_euclidean(&[1.0, 0.0], &[true, false], &[0.0, 1.0], &[false, true], 1).unwrap(),
            None
        );
        assert_eq!(
            partial_euclidean(&[1.0, 2.0], &[true, true], &[1.0, 2.0], &[true, false], 2).unwrap(),
            None
        );
        assert!(partial_euclidean(&[1.0], &[true], &[1.0, 2.0], &[true, true], 1).is_err());
    }

    #[test]
    fn knn_duplicate_row_donates() {
        let ds = Dataset::from_rows(
            &["a", "b"],
            &[
                vec![Some(1.0), None],
                vec![Some(1.0), Some(42.0)],
                vec![Some(9.0), Some(0.0)],
            ],
        )
        .unwrap();
        let out = knn_impute(&ds, &KnnConfig { k: 1, min_overlap: 1 }).unwrap();
        assert_eq!(out.dataset.get(0, 1), Some(42.0));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn knn_two_nearest_average() {
        let ds = Dataset::from_rows(
            &["x", "y"],
            &[
                vec![Some(0.0), None],
                vec![Some(0.5), Some(4.0)],
                vec![Some(-0.7), Some(6.0)],
                vec![Some(5.0), Some(100.0)],
                vec![Some(-8.0), Some(-50.0)],
            ],
        )
        .unwrap();
        let out = knn_impute(&ds, &KnnConfig { k: 2, min_overlap: 1 }).unwrap();
        assert_eq!(out.dataset.get(0, 1), Some(5.0));
    }

    #[test]
    fn knn_noop_on_complete_data() {
        let ds = Dataset::from_rows(&["a"], &[vec![Some(1.0)], vec![Some(2.0)]]).unwrap();
        assert_eq!(knn_impute(&ds, &KnnConfig::default()).unwrap().dataset, ds);
    }

    #[test]
    fn knn_falls_back_to_mean_with_warning() {
        // row 0 shares no observed column with any donor of column b
        let ds = Dataset::from_rows(
            &["a", "b", "c"],
            &[
                vec![Some(1.0), None, None],
                vec![None, Some(2.0), Some(1.0)],
                vec![None, Some(4.0), Some(3.0)],
            ],
        )
        .unwrap();
        let out = knn_impute(&ds, &KnnConfig::default()).unwrap();
        assert_eq!(out.dataset.get(0, 1), Some(3.0));
        // rows 1 and 2 also miss column a with no eligible donor
        assert_eq!(out.warnings.len(), 4);
        assert_eq!(out.dataset.get(1, 0), Some(1.0));
    }
}
