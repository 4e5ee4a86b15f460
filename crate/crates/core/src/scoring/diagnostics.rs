//! Plot-ready diagnostic tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::eval::ScoreDistribution;
use crate::error::{Error, Result};
use crate::io::{format_float, write_table};
use crate::mice::ImputationSet;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub column: String,
    pub lower: f64,
    pub upper: f64,
    pub observed: usize,
    /// Imputed values in the bin, summed over all imputations.
    pub imputed: usize,
    pub observed_share: f64,
    pub imputed_share: f64,
}

/// Observed versus imputed value histograms per incomplete column, on
/// `n_bins` equal-width bins spanning both.
pub fn value_histograms(set: &ImputationSet, n_bins: usize) -> Result<Vec<HistogramBin>> {
    if n_bins == 0 {
        return Err(Error::Argument("need at least one bin".into()));
    }
    let first = &set.completed[0];
    let mut out = Vec::new();
    for j in 0..first.n_cols() {
        let observed: Vec<f64> = (0..first.n_rows())
            .filter(|&i| set.source_mask[[i, j]])
            .map(|i| first.values()[[i, j]])
            .collect();
        let imputed: Vec<f64> = (0..first.n_rows())
            .filter(|&i| !set.source_mask[[i, j]])
            .flat_map(|i| set.values_at(i, j))
            .collect();
        if imputed.is_empty() {
            continue;
        }
        let all = observed.iter().chain(&imputed);
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
        let bin = |v: f64| (((v - lo) / width) as usize).min(n_bins - 1);
        let mut obs_counts = vec![0usize; n_bins];
        let mut imp_counts = vec![0usize; n_bins];
        observed.iter().for_each(|&v| obs_counts[bin(v)] += 1);
        imputed.iter().for_each(|&v| imp_counts[bin(v)] += 1);
        for b in 0..n_bins {
            out.push(HistogramBin {
                column: first.columns()[j].name.clone(),
                lower: lo + b as f64 * width,
                upper: lo + (b + 1) as f64 * width,
                observed: obs_counts[b],
                imputed: imp_counts[b],
                observed_share: obs_counts[b] as f64 / observed.len().max(1) as f64,
                imputed_share: imp_counts[b] as f64 / imputed.len() as f64,
            });
        }
    }
    Ok(out)
}

pub fn save_histograms(bins: &[HistogramBin], path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<Vec<String>> = bins
        .iter()
        .map(|b| {
            vec![
                b.column.clone(),
                format_float(b.lower),
                format_float(b.upper),
                b.observed.to_string(),
                b.imputed.to_string(),
                format_float(b.observed_share),
                format_float(b.imputed_share),
            ]
        })
        .collect();
    write_table(
        path,
        &["column", "lower", "upper", "observed", "imputed", "observed_share", "imputed_share"],
        &rows,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthBin {
    pub group: String,
    /// Row missing-rate bin `[lower, upper)`.
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub median_width: f64,
    pub mean_width: f64,
}

/// Interval width of one score unit against the row missing rate of that
/// unit's KPIs, in bins of `bin_width`. Rows are grouped by `groups` when
/// given, and always pooled under `"all"`.
pub fn width_by_missing_rate(
    dist: &ScoreDistribution,
    unit: usize,
    bin_width: f64,
    groups: Option<&[String]>,
) -> Result<Vec<WidthBin>> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::Argument(format!("bin width must lie in (0, 1], got {bin_width}")));
    }
    if unit >= dist.units.len() {
        return Err(Error::Argument(format!("unit index {unit} out of range")));
    }
    let n_bins = (1.0 / bin_width).ceil() as usize;
    let mut cells: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for row in 0..dist.n_rows() {
        let s = dist.get(row, unit);
        // a small slack keeps k / 10 rates in bin k despite rounding
        let b = (((s.missing_rate + 1e-9) / bin_width) as usize).min(n_bins - 1);
        cells.entry(("all".into(), b)).or_default().push(s.width());
        if let Some(g) = groups {
            cells.entry((g[row].clone(), b)).or_default().push(s.width());
        }
    }
    Ok(cells
        .into_iter()
        .map(|((group, b), widths)| WidthBin {
            group,
            lower: b as f64 * bin_width,
            upper: ((b + 1) as f64 * bin_width).min(1.0),
            n: widths.len(),
            median_width: stats::median(&widths),
            mean_width: stats::mean(&widths),
        })
        .collect())
}

pub fn save_width_bins(bins: &[WidthBin], path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<Vec<String>> = bins
        .iter()
        .map(|b| {
            vec![
                b.group.clone(),
                format_float(b.lower),
                format_float(b.upper),
                b.n.to_string(),
                format_float(b.median_width),
                format_float(b.mean_width),
            ]
        })
        .collect();
    write_table(
        path,
        &["group", "lower", "upper", "n", "median_width", "mean_width"],
        &rows,
    )
}
