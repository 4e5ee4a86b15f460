//! Gaussian-copula benchmark data with a known missingness mechanism.

use nalgebra::{Cholesky, DMatrix};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{ColumnKind, Dataset, HeldOut};
use crate::error::{Error, Result};
use crate::rng::derived_rng;
use crate::stats::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Correlation {
    Identity,
    /// Same correlation `rho` between every pair of columns.
    Exchangeable { rho: f64 },
    /// Single latent factor: `corr(i, j) = loadings[i] * loadings[j]`.
    OneFactor { loadings: Vec<f64> },
    Matrix { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marginal {
    Gaussian { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

impl Default for Marginal {
    fn default() -> Self {
        Marginal::Uniform { low: 0.0, high: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticColumn {
    pub name: String,
    #[serde(default)]
    pub kind: ColumnKind,
    #[serde(default)]
    pub marginal: Marginal,
    /// Finite support for discrete kinds; values are equally likely.
    #[serde(default)]
    pub support: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Mechanism {
    #[default]
    None,
    Mcar {
        rate: f64,
        #[serde(default)]
        targets: Option<Vec<String>>,
    },
    /// Logistic in the latent scores of fully observed driver columns.
    Mar {
        rate: f64,
        drivers: Vec<String>,
        coefficients: Vec<f64>,
        #[serde(default)]
        targets: Option<Vec<String>>,
    },
    /// Logistic in each target's own latent score.
    Mnar {
        rate: f64,
        strength: f64,
        #[serde(default)]
        targets: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub correlation: Correlation,
    pub columns: Vec<SyntheticColumn>,
    #[serde(default)]
    pub mechanism: Mechanism,
    /// Row-group labels assigned cyclically, if any.
    #[serde(default)]
    pub groups: Vec<String>,
}

impl SyntheticSpec {
    /// `n_cols` uniform [0, 1] KPIs on a one-factor copula with pairwise
    /// correlations spread over [0.5, 0.8]. Column `kpi_0` is fully observed
    /// and drives a MAR mechanism on the others, tuned so that `rate` of all
    /// cells are missing.
    pub fn gaussian_benchmark(n_rows: usize, n_cols: usize, rate: f64) -> Self {
        let loadings = (0..n_cols)
            .map(|j| {
                let t = if n_cols > 1 { j as f64 / (n_cols - 1) as f64 } else { 0.0 };
                (0.8 - 0.3 * t).sqrt()
            })
            .collect();
        let columns = (0..n_cols)
            .map(|j| SyntheticColumn {
                name: format!("kpi_{j}"),
                kind: ColumnKind::Continuous,
                marginal: Marginal::default(),
                support: None,
            })
            .collect();
        let target_rate = (rate * n_cols as f64 / (n_cols.max(2) - 1) as f64).min(1.0);
        Self {
            n_rows,
            correlation: Correlation::OneFactor { loadings },
            columns,
            mechanism: Mechanism::Mar {
                rate: target_rate,
                drivers: vec!["kpi_0".into()],
                coefficients: vec![1.0],
                targets: None,
            },
            groups: Vec::new(),
        }
    }

    fn correlation_matrix(&self) -> Result<DMatrix<f64>> {
        let p = self.columns.len();
        let m = match &self.correlation {
            Correlation::Identity => DMatrix::identity(p, p),
            Correlation::Exchangeable { rho } => {
                DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { *rho })
            }
            Correlation::OneFactor { loadings } => {
                if loadings.len() != p {
                    return Err(Error::Spec(format!("{} loadings for {p} columns", loadings.len())));
                }
                if loadings.iter().any(|l| l.abs() >= 1.0) {
                    return Err(Error::Spec("factor loadings must lie in (-1, 1)".into()));
                }
                DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { loadings[i] * loadings[j] })
            }
            Correlation::Matrix { values } => {
                if values.len() != p || values.iter().any(|r| r.len() != p) {
                    return Err(Error::Spec(format!("correlation matrix must be {p} x {p}")));
                }
                DMatrix::from_fn(p, p, |i, j| values[i][j])
            }
        };
        for i in 0..p {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Spec(format!("correlation diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Spec(format!("correlation matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(m)
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Spec(format!("mechanism refers to unknown column {name:?}")))
    }

    fn targets(&self, targets: &Option<Vec<String>>, exclude: &[usize]) -> Result<Vec<usize>> {
        match targets {
            Some(names) => names.iter().map(|n| self.column_index(n)).collect(),
            None => Ok((0..self.columns.len()).filter(|j| !exclude.contains(j)).collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.columns.is_empty() {
            return Err(Error::Spec("need at least one row and one column".into()));
        }
        for c in &self.columns {
            if let Some(s) = &c.support {
                if s.is_empty() || s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Spec(format!("column {:?} has an invalid support", c.name)));
                }
            } else if c.kind.is_discrete() {
                return Err(Error::Spec(format!("discrete column {:?} needs a support", c.name)));
            }
            match c.marginal {
                Marginal::Gaussian { sd, .. } if sd <= 0.0 => {
                    return Err(Error::Spec(format!("column {:?} has sd <= 0", c.name)))
                }
                Marginal::Uniform { low, high } if high <= low => {
                    return Err(Error::Spec(format!("column {:?} has an empty range", c.name)))
                }
                _ => {}
            }
        }
        let rate = match &self.mechanism {
            Mechanism::None => 0.0,
            Mechanism::Mcar { rate, .. } | Mechanism::Mnar { rate, .. } => *rate,
            Mechanism::Mar {
                rate,
                drivers,
                coefficients,
                targets,
            } => {
                if drivers.len() != coefficients.len() || drivers.is_empty() {
                    return Err(Error::Spec("MAR needs one coefficient per driver".into()));
                }
                let d: Vec<usize> = drivers.iter().map(|n| self.column_index(n)).collect::<Result<_>>()?;
                if self.targets(targets, &d)?.iter().any(|t| d.contains(t)) {
                    return Err(Error::Spec("MAR drivers must stay observed".into()));
                }
                *rate
            }
        };
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Spec(format!("missing rate {rate} outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub complete: Dataset,
    pub amputed: Dataset,
    /// True values of every amputed cell, in row-major order.
    pub truth: Vec<HeldOut>,
}

/// Intercept `a` with `mean(sigmoid(a + s_i)) = rate`, by bisection.
fn calibrate_intercept(scores: &[f64], rate: f64) -> f64 {
    let mean_p = |a: f64| scores.iter().map(|s| sigmoid(a + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let corr = spec.correlation_matrix()?;
    let chol = Cholesky::new(corr)
        .ok_or_else(|| Error::Spec("correlation matrix is not positive definite".into()))?;
    let l = chol.l();
    let (n, p) = (spec.n_rows, spec.columns.len());

    let mut rng = derived_rng(seed, &[0]);
    let mut latent = Array2::zeros((n, p));
    let mut z = vec![0.0; p];
    for i in 0..n {
        for zk in z.iter_mut() {
            *zk = rng.sample(StandardNormal);
        }
        for j in 0..p {
            latent[[i, j]] = (0..=j).map(|k| l[(j, k)] * z[k]).sum::<f64>();
        }
    }

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut values = Array2::zeros((n, p));
    for (j, col) in spec.columns.iter().enumerate() {
        for i in 0..n {
            let zij = latent[[i, j]];
            values[[i, j]] = match &col.support {
                Some(s) => {
                    let u = normal.cdf(zij);
                    s[((u * s.len() as f64) as usize).min(s.len() - 1)]
                }
                None => match col.marginal {
                    Marginal::Gaussian { mean, sd } => mean + sd * zij,
                    Marginal::Uniform { low, high } => low + (high - low) * normal.cdf(zij),
                },
            };
        }
    }

    let names = spec.columns.iter().map(|c| c.name.clone()).collect();
    let mut complete = Dataset::complete(values.clone(), names)?;
    for c in &spec.columns {
        complete = complete.with_kind(&c.name, c.kind)?;
    }
    if !spec.groups.is_empty() {
        let labels = (0..n).map(|i| spec.groups[i % spec.groups.len()].clone()).collect();
        complete = complete.with_row_groups(labels)?;
    }

    let mut mask = Array2::from_elem((n, p), true);
    let mut mrng = derived_rng(seed, &[1]);
    let mut remove = |targets: &[usize], rate: f64, score: &dyn Fn(usize, usize) -> f64| {
        for &j in targets {
            let scores: Vec<f64> = (0..n).map(|i| score(i, j)).collect();
            let a = calibrate_intercept(&scores, rate);
            for i in 0..n {
                let prob = if rate <= 0.0 {
                    0.0
                } else if rate >= 1.0 {
                    1.0
                } else {
                    sigmoid(a + scores[i])
                };
                if mrng.random::<f64>() < prob {
                    mask[[i, j]] = false;
                }
            }
        }
    };
    match &spec.mechanism {
        Mechanism::None => {}
        Mechanism::Mcar { rate, targets } => {
            remove(&spec.targets(targets, &[])?, *rate, &|_, _| 0.0);
        }
        Mechanism::Mar {
            rate,
            drivers,
            coefficients,
            targets,
        } => {
            let d: Vec<usize> = drivers.iter().map(|n| spec.column_index(n)).collect::<Result<_>>()?;
            let score = |i: usize, _: usize| d.iter().zip(coefficients).map(|(&k, b)| b * latent[[i, k]]).sum();
            remove(&spec.targets(targets, &d)?, *rate, &score);
        }
        Mechanism::Mnar {
            rate,
            strength,
            targets,
        } => {
            let score = |i: usize, j: usize| strength * latent[[i, j]];
            remove(&spec.targets(targets, &[])?, *rate, &score);
        }
    }

    let amputed = complete.with_mask_and(&mask)?;
    let truth = amputed
        .missing_cells()
        .into_iter()
        .map(|(row, col)| HeldOut {
            row,
            col,
            value: values[[row, col]],
        })
        .collect();
    Ok(SyntheticData {
        complete,
        amputed,
        truth,
    })
}
