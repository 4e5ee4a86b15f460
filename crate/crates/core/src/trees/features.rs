use crate::dataset::Dataset;

/// Column-major feature matrix with an explicit observation flag per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl Features {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![f64::NAN; n_rows * n_cols],
            observed: vec![false; n_rows * n_cols],
        }
    }

    /// Selected columns of a dataset, honouring its mask.
    pub fn from_dataset(ds: &Dataset, cols: &[usize]) -> Self {
        let rows: Vec<usize> = (0..ds.n_rows()).collect();
        Self::from_dataset_rows(ds, &rows, cols)
    }

    pub fn from_dataset_rows(ds: &Dataset, rows: &[usize], cols: &[usize]) -> Self {
        let mut f = Self::new(rows.len(), cols.len());
        for (c, &j) in cols.iter().enumerate() {
            for (r, &i) in rows.iter().enumerate() {
                if let Some(v) = ds.get(i, j) {
                    f.set(r, c, Some(v));
                }
            }
        }
        f
    }

    /// Selected rows and columns of a fully observed matrix.
    pub fn from_matrix(m: &ndarray::Array2<f64>, rows: &[usize], cols: &[usize]) -> Self {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * cols.len());
        for &j in cols {
            values.extend(rows.iter().map(|&i| m[[i, j]]));
        }
        Self {
            n_rows: n,
            n_cols: cols.len(),
            values,
            observed: vec![true; n * cols.len()],
        }
    }

    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut f = Self::new(rows.len(), n_cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n_cols, "ragged feature rows");
            for (j, v) in row.iter().enumerate() {
                f.set(i, j, *v);
            }
        }
        f
    }

    /// Fully observed single-feature matrix, handy for tests.
    pub fn from_column(values: &[f64]) -> Self {
        let rows: Vec<Vec<Option<f64>>> = values.iter().map(|&v| vec![Some(v)]).collect();
        Self::from_rows(&rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Option<f64>) {
        let k = col * self.n_rows + row;
        match v {
            Some(x) => {
                self.values[k] = x;
                self.observed[k] = true;
            }
            None => {
                self.values[k] = f64::NAN;
                self.observed[k] = false;
            }
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let k = col * self.n_rows + row;
        if self.observed[k] {
            Some(self.values[k])
        } else {
            None
        }
    }

    pub fn row(&self, row: usize) -> Vec<Option<f64>> {
        (0..self.n_cols).map(|c| self.get(row, c)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut f = Self::new(rows.len(), self.n_cols);
        for c in 0..self.n_cols {
            for (r, &i) in rows.iter().enumerate() {
                f.set(r, c, self.get(i, c));
            }
        }
        f
    }
}
