//! Hot-deck draws around a point prediction.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};

/// Indices of the `n_donors` donors whose predictions are closest to
/// `prediction`, ranked by distance then index.
pub fn closest_donors(prediction: f64, donor_predictions: &[f64], n_donors: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = donor_predictions
        .iter()
        .enumerate()
        .map(|(i, &p)| ((p - prediction).abs(), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
    };
    let k = n_donors.min(keyed.len());
    if k == 0 {
        return Vec::new();
    }
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k - 1, cmp);
        keyed.truncate(k);
    }
    keyed.sort_by(cmp);
    keyed.into_iter().map(|(_, i)| i).collect()
}

fn pick<R: Rng + ?Sized>(
    prediction: f64,
    donor_predictions: &[f64],
    paired: &[f64],
    n_donors: usize,
    rng: &mut R,
) -> Result<f64> {
    if donor_predictions.is_empty() {
        return Err(Error::Draw("empty donor pool".into()));
    }
    if donor_predictions.len() != paired.len() {
        return Err(Error::Argument(format!(
            "{} donor predictions but {} donor values",
            donor_predictions.len(),
            paired.len()
        )));
    }
    if n_donors == 0 {
        return Err(Error::Argument("n_donors must be at least 1".into()));
    }
    let pool = closest_donors(prediction, donor_predictions, n_donors);
    Ok(paired[pool[rng.random_range(0..pool.len())]])
}

/// Predictive mean matching: the observed value of a donor drawn uniformly
/// from the `n_donors` closest by prediction.
pub fn pmm_draw<R: Rng + ?Sized>(
    prediction: f64,
    donor_predictions: &[f64],
    donor_values: &[f64],
    n_donors: usize,
    rng: &mut R,
) -> Result<f64> {
    pick(prediction, donor_predictions, donor_values, n_donors, rng)
}

/// Local residual draw: `prediction` plus the residual of a donor drawn
/// uniformly from the `n_donors` closest by prediction.
pub fn lrd_draw<R: Rng + ?Sized>(
    prediction: f64,
    donor_predictions: &[f64],
    donor_residuals: &[f64],
    n_donors: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(prediction + pick(prediction, donor_predictions, donor_residuals, n_donors, rng)?)
}

/// Nearest value of a sorted support.
pub fn snap_to_support(value: f64, support: &[f64]) -> f64 {
    if support.is_empty() {
        return value;
    }
    let k = support.partition_point(|&s| s < value);
    match (k.checked_sub(1).map(|i| support[i]), support.get(k)) {
        (Some(lo), Some(&hi)) => {
            if value - lo <= hi - value {
                lo
            } else {
                hi
            }
        }
        (Some(lo), None) => lo,
        (None, Some(&hi)) => hi,
        (None, None) => value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats;

    #[test]
    fn one_donor_is_deterministic() {
        let mut rng = rng_from_seed(1);
        let preds = [0.0, 1.0, 2.0, 3.0];
        let vals = [10.0, 11.0, 12.0, 13.0];
        for _ in 0..20 {
            assert_eq!(pmm_draw(2.2, &preds, &vals, 1, &mut rng).unwrap(), 12.0);
        }
    }

    #[test]
    fn equal_donor_values() {
        let mut rng = rng_from_seed(2);
        let v = pmm_draw(0.3, &[0.1, 0.5, 0.9], &[7.0; 3], 2, &mut rng).unwrap();
        assert_eq!(v, 7.0);
    }

    #[test]
    fn closest_five_are_uniform() {
        let preds: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let vals: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let mut rng = rng_from_seed(3);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..10_000 {
            let v = pmm_draw(14.2, &preds, &vals, 5, &mut rng).unwrap();
            *counts.entry(v as i64).or_insert(0usize) += 1;
        }
        let mut keys: Vec<i64> = counts.keys().copied().collect();
        keys.sort();
        assert_eq!(keys, vec![112, 113, 114, 115, 116]);
        for c in counts.values() {
            let f = *c as f64 / 10_000.0;
            assert!((f - 0.2).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(closest_donors(1.0, &[0.0, 2.0, 1.0, 0.0], 3), vec![2, 0, 1]);
        assert_eq!(closest_donors(1.0, &[0.5, 1.5], 9), vec![0, 1]);
    }

    #[test]
    fn empty_pool_is_draw_error() {
        let mut rng = rng_from_seed(0);
        assert!(matches!(pmm_draw(0.0, &[], &[], 5, &mut rng), Err(Error::Draw(_))));
        assert!(matches!(lrd_draw(0.0, &[], &[], 5, &mut rng), Err(Error::Draw(_))));
    }

    #[test]
    fn lrd_zero_residuals_and_single_donor() {
        let mut rng = rng_from_seed(4);
        assert_eq!(lrd_draw(3.5, &[1.0, 3.0, 4.0], &[0.0; 3], 3, &mut rng).unwrap(), 3.5);
        assert_eq!(lrd_draw(3.5, &[1.0, 3.0, 4.0], &[0.1, -0.25, 9.0], 1, &mut rng).unwrap(), 3.25);
    }

    #[test]
    fn lrd_spread_matches_donor_residuals() {
        let preds: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let residuals: Vec<f64> = (0..50).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let pool = closest_donors(2.0, &preds, 5);
        let pool_res: Vec<f64> = pool.iter().map(|&i| residuals[i]).collect();
        // population SD of the uniform mixture over the pool
        let m = stats::mean(&pool_res);
        let target = (pool_res.iter().map(|r| (r - m).powi(2)).sum::<f64>() / 5.0).sqrt();
        let mut rng = rng_from_seed(5);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| lrd_draw(2.0, &preds, &residuals, 5, &mut rng).unwrap())
            .collect();
        let sd = stats::std_dev(&draws);
        assert!((sd / target - 1.0).abs() < 0.15, "{sd} vs {target}");
    }

    #[test]
    fn snapping() {
        let s = [0.0, 0.5, 1.0];
        assert_eq!(snap_to_support(0.2, &s), 0.0);
        assert_eq!(snap_to_support(0.3, &s), 0.5);
        assert_eq!(snap_to_support(7.0, &s), 1.0);
        assert_eq!(snap_to_support(-7.0, &s), 0.0);
    }
}
