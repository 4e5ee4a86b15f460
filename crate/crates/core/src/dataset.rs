//! The KPI panel: a dense value matrix paired with an authoritative
//! observation mask.

use std::collections::{HashMap, HashSet};

use ndarray::{Array2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::stats;

/// Sentinel stored in unobserved cells. The mask decides observation; this
/// value is never read as data.
pub const MISSING: f64 = f64::NAN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    #[default]
    Continuous,
    SemiContinuous,
    CategoricalEncoded,
}

impl ColumnKind {
    /// Whether imputations must land on the observed support of the column.
    pub fn is_discrete(self) -> bool {
        !matches!(self, ColumnKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    #[serde(default)]
    pub kind: ColumnKind,
}

impl ColumnMeta {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    values: Array2<f64>,
    mask: Array2<bool>,
    columns: Vec<ColumnMeta>,
    row_ids: Vec<String>,
    row_groups: Option<Vec<String>>,
    index_name: String,
}

/// Equal when shapes, metadata, masks and observed values agree; the
/// placeholders of unobserved cells are ignored.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self.columns == other.columns
            && self.row_ids == other.row_ids
            && self.row_groups == other.row_groups
            && self.index_name == other.index_name
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &m)| !m || a.to_bits() == b.to_bits())
    }
}

impl Dataset {
    pub fn new(
        mut values: Array2<f64>,
        mask: Array2<bool>,
        columns: Vec<ColumnMeta>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::Structure(format!(
                "values are {:?} but mask is {:?}",
                values.dim(),
                mask.dim()
            )));
        }
        if row_ids.len() != values.nrows() {
            return Err(Error::Structure(format!(
                "{} row ids for {} rows",
                row_ids.len(),
                values.nrows()
            )));
        }
        if columns.len() != values.ncols() {
            return Err(Error::Structure(format!(
                "{} column names for {} columns",
                columns.len(),
                values.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Structure(format!("duplicate column name {:?}", c.name)));
            }
        }
        ndarray::Zip::from(&mut values).and(&mask).for_each(|v, &m| {
            if !m {
                *v = MISSING;
            }
        });
        Ok(Self {
            values,
            mask,
            columns,
            row_ids,
            row_groups: None,
            index_name: "id".to_string(),
        })
    }

    /// Builds a dataset from row-major optional cells; row ids default to
    /// `r0, r1, ...`.
    pub fn from_rows(names: &[&str], rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let p = names.len();
        let mut values = Array2::from_elem((rows.len(), p), MISSING);
        let mut mask = Array2::from_elem((rows.len(), p), false);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Structure(format!(
                    "row {i} has {} cells, expected {p}",
                    row.len()
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    values[[i, j]] = *v;
                    mask[[i, j]] = true;
                }
            }
        }
        Self::new(
            values,
            mask,
            names.iter().map(|n| ColumnMeta::continuous(*n)).collect(),
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
        )
    }

    /// Fully observed dataset from a value matrix.
    pub fn complete(values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        let mask = Array2::from_elem(values.dim(), true);
        let n = values.nrows();
        Self::new(
            values,
            mask,
            names.into_iter().map(ColumnMeta::continuous).collect(),
            (0..n).map(|i| format!("r{i}")).collect(),
        )
    }

    pub fn with_row_groups(mut self, groups: Vec<String>) -> Result<Self> {
        if groups.len() != self.n_rows() {
            return Err(Error::Structure(format!(
                "{} row groups for {} rows",
                groups.len(),
                self.n_rows()
            )));
        }
        self.row_groups = Some(groups);
        Ok(self)
    }

    pub fn with_index_name(mut self, name: impl Into<String>) -> Self {
        self.index_name = name.into();
        self
    }

    pub fn with_kind(mut self, column: &str, kind: ColumnKind) -> Result<Self> {
        let j = self.require_column(column)?;
        self.columns[j].kind = kind;
        Ok(self)
    }

    pub fn with_kinds(mut self, kinds: &HashMap<String, ColumnKind>) -> Result<Self> {
        for (name, kind) in kinds {
            let j = self.require_column(name)?;
            self.columns[j].kind = *kind;
        }
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row_groups(&self) -> Option<&[String]> {
        self.row_groups.as_deref()
    }

    pub fn index_name(&self) -> &str {
        &self.index_name
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| Error::Config(format!("unknown column {name:?}")))
    }

    #[inline]
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[[row, col]]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if self.mask[[row, col]] {
            Some(self.values[[row, col]])
        } else {
            None
        }
    }

    pub fn observed_values(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).filter_map(|i| self.get(i, col)).collect()
    }

    /// Sorted distinct observed values of a column.
    pub fn observed_support(&self, col: usize) -> Vec<f64> {
        let mut v = self.observed_values(col);
        stats::sort_floats(&mut v);
        v.dedup();
        v
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn missing_count(&self) -> usize {
        self.mask.len() - self.observed_count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        self.mask
            .indexed_iter()
            .filter(|(_, &m)| !m)
            .map(|(ij, _)| ij)
            .collect()
    }

    pub fn missingness(&self) -> MissingnessPattern {
        MissingnessPattern::from_mask(&self.mask)
    }

    /// Completed copy: observed cells are kept from `self`, every other cell
    /// is taken from `fill`. The result is fully observed.
    pub fn completed_with(&self, fill: &Array2<f64>) -> Result<Self> {
        if fill.dim() != self.values.dim() {
            return Err(Error::Argument(format!(
                "fill matrix is {:?}, dataset is {:?}",
                fill.dim(),
                self.values.dim()
            )));
        }
        let mut values = fill.clone();
        ndarray::Zip::from(&mut values)
            .and(&self.values)
            .and(&self.mask)
            .for_each(|v, &src, &m| {
                if m {
                    *v = src;
                }
            });
        Ok(self.replace_matrix(values, Array2::from_elem(self.values.dim(), true)))
    }

    /// Copy with the given cells marked unobserved.
    pub fn with_cells_missing(&self, cells: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        for &(i, j) in cells {
            out.mask[[i, j]] = false;
            out.values[[i, j]] = MISSING;
        }
        out
    }

    /// Copy whose mask is the elementwise AND of this mask and `keep`.
    pub fn with_mask_and(&self, keep: &Array2<bool>) -> Result<Self> {
        if keep.dim() != self.mask.dim() {
            return Err(Error::Argument("mask shape mismatch".into()));
        }
        let mut out = self.clone();
        ndarray::Zip::from(&mut out.mask)
            .and(&mut out.values)
            .and(keep)
            .for_each(|m, v, &k| {
                if !k {
                    *m = false;
                    *v = MISSING;
                }
            });
        Ok(out)
    }

    pub(crate) fn replace_matrix(&self, values: Array2<f64>, mask: Array2<bool>) -> Self {
        let mut out = Self {
            values,
            mask,
            columns: self.columns.clone(),
            row_ids: self.row_ids.clone(),
            row_groups: self.row_groups.clone(),
            index_name: self.index_name.clone(),
        };
        let (values, mask) = (&mut out.values, &out.mask);
        ndarray::Zip::from(values).and(mask).for_each(|v, &m| {
            if !m {
                *v = MISSING;
            }
        });
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
            mask: self.mask.select(Axis(0), rows),
            columns: self.columns.clone(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            row_groups: self
                .row_groups
                .as_ref()
                .map(|g| rows.iter().map(|&i| g[i].clone()).collect()),
            index_name: self.index_name.clone(),
        }
    }

    /// Concatenates rows of two datasets with identical columns.
    pub fn vstack(&self, other: &Dataset) -> Result<Self> {
        if self.columns != other.columns {
            return Err(Error::Argument("cannot stack datasets with different columns".into()));
        }
        let values = ndarray::concatenate(Axis(0), &[self.values.view(), other.values.view()])
            .map_err(|e| Error::Structure(e.to_string()))?;
        let mask = ndarray::concatenate(Axis(0), &[self.mask.view(), other.mask.view()])
            .map_err(|e| Error::Structure(e.to_string()))?;
        let row_groups = match (&self.row_groups, &other.row_groups) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        Ok(Self {
            values,
            mask,
            columns: self.columns.clone(),
            row_ids: self.row_ids.iter().chain(&other.row_ids).cloned().collect(),
            row_groups,
            index_name: self.index_name.clone(),
        })
    }
}

/// Missing-indicator view of a mask with per-column and per-row rates.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessPattern {
    pub indicator: Array2<bool>,
    pub column_rates: Vec<f64>,
    pub row_rates: Vec<f64>,
}

impl MissingnessPattern {
    pub fn from_mask(mask: &Array2<bool>) -> Self {
        let indicator = mask.mapv(|m| !m);
        let (n, p) = indicator.dim();
        let column_rates = (0..p)
            .map(|j| {
                if n == 0 {
                    0.0
                } else {
                    indicator.column(j).iter().filter(|&&x| x).count() as f64 / n as f64
                }
            })
            .collect();
        let row_rates = (0..n)
            .map(|i| {
                if p == 0 {
                    0.0
                } else {
                    indicator.row(i).iter().filter(|&&x| x).count() as f64 / p as f64
                }
            })
            .collect();
        Self {
            indicator,
            column_rates,
            row_rates,
        }
    }

    /// Pearson correlation between the missing indicators of two columns.
    pub fn indicator_correlation(&self, a: usize, b: usize) -> f64 {
        let xa: Vec<f64> = self.indicator.column(a).iter().map(|&x| x as u8 as f64).collect();
        let xb: Vec<f64> = self.indicator.column(b).iter().map(|&x| x as u8 as f64).collect();
        stats::pearson(&xa, &xb)
    }
}

/// Disjoint random row partition into `(train, test)`; the test part holds
/// `round(test_fraction * rows)` rows. Both parts keep the original row order.
pub fn split_rows(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.n_rows(), test_fraction, seed)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

/// Row indices behind [`split_rows`].
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::Argument("split needs at least two rows".into()));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut rng = rng_from_seed(seed);
    let mut is_test = vec![false; n];
    for i in index::sample(&mut rng, n, n_test) {
        is_test[i] = true;
    }
    let test = (0..n).filter(|&i| is_test[i]).collect();
    let train = (0..n).filter(|&i| !is_test[i]).collect();
    Ok((train, test))
}

/// A held-out ground-truth cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Masks exactly `round(fraction * observed)` observed cells chosen uniformly
/// at random and returns them as ground truth, sorted by `(row, col)`.
pub fn remove_observed(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Vec<HeldOut>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Argument(format!(
            "removal fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let observed: Vec<(usize, usize)> = ds
        .mask()
        .indexed_iter()
        .filter(|(_, &m)| m)
        .map(|(ij, _)| ij)
        .collect();
    if observed.is_empty() {
        return Err(Error::Argument("dataset has no observed cell".into()));
    }
    let k = (fraction * observed.len() as f64).round() as usize;
    let mut rng = rng_from_seed(seed);
    let mut picked: Vec<(usize, usize)> = index::sample(&mut rng, observed.len(), k)
        .into_iter()
        .map(|i| observed[i])
        .collect();
    picked.sort_unstable();
    let truth = picked
        .iter()
        .map(|&(row, col)| HeldOut {
            row,
            col,
            value: ds.values()[[row, col]],
        })
        .collect();
    Ok((ds.with_cells_missing(&picked), truth))
}
