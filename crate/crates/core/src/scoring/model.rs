//! Weighted KPI -> descriptor -> pillar -> overall score hierarchy.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const PILLARS: [&str; 3] = ["Environment", "Social", "Governance"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Kpi,
    Descriptor,
    Pillar,
    Overall,
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Kpi => "kpi",
            Level::Descriptor => "descriptor",
            Level::Pillar => "pillar",
            Level::Overall => "overall",
        })
    }
}

/// Scoring hierarchy as read from JSON:
///
/// ```json
/// {
///   "descriptors": {"D1": {"kpi_a": 1, "kpi_b": 2}},
///   "pillars": {"Environment": {"D1": 1}},
///   "overall": {"Environment": 1}
/// }
/// ```
///
/// Weights are normalised to sum to one within each group by
/// [`ScoringModel::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringModel {
    pub descriptors: IndexMap<String, IndexMap<String, f64>>,
    pub pillars: IndexMap<String, IndexMap<String, f64>>,
    pub overall: IndexMap<String, f64>,
}

fn normalise(group: &str, weights: &mut IndexMap<String, f64>) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Config(format!("{group} has no members")));
    }
    if let Some((name, w)) = weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Config(format!("{group}: weight of {name:?} is {w}")));
    }
    let total: f64 = weights.values().sum();
    if total <= 0.0 {
        return Err(Error::Config(format!("{group}: weights sum to zero")));
    }
    weights.values_mut().for_each(|w| *w /= total);
    Ok(())
}

fn check_partition<'a>(
    parents: impl Iterator<Item = (&'a String, &'a IndexMap<String, f64>)>,
    children: &[&String],
    what: &str,
) -> Result<()> {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for (parent, members) in parents {
        for child in members.keys() {
            if let Some(prev) = owner.insert(child, parent) {
                return Err(Error::Config(format!(
                    "{what} {child:?} belongs to both {prev:?} and {parent:?}"
                )));
            }
        }
    }
    for c in children {
        if !owner.contains_key(c.as_str()) {
            return Err(Error::Config(format!("{what} {c:?} is not assigned to any parent")));
        }
    }
    Ok(())
}

impl ScoringModel {
    /// Validates the hierarchy and normalises weights.
    pub fn new(
        descriptors: IndexMap<String, IndexMap<String, f64>>,
        pillars: IndexMap<String, IndexMap<String, f64>>,
        overall: IndexMap<String, f64>,
    ) -> Result<Self> {
        let mut m = Self {
            descriptors,
            pillars,
            overall,
        };
        for (name, w) in m.descriptors.iter_mut() {
            normalise(&format!("descriptor {name:?}"), w)?;
        }
        for (name, w) in m.pillars.iter_mut() {
            if !PILLARS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "pillar {name:?} is not one of {PILLARS:?}"
                )));
            }
            normalise(&format!("pillar {name:?}"), w)?;
        }
        normalise("overall", &mut m.overall)?;

        check_partition(m.descriptors.iter(), &[], "KPI")?;
        let descriptor_names: Vec<&String> = m.descriptors.keys().collect();
        check_partition(m.pillars.iter(), &descriptor_names, "descriptor")?;
        for d in m.pillars.values().flat_map(|p| p.keys()) {
            if !m.descriptors.contains_key(d) {
                return Err(Error::Config(format!("pillar refers to unknown descriptor {d:?}")));
            }
        }
        for p in m.overall.keys() {
            if !m.pillars.contains_key(p) {
                return Err(Error::Config(format!("overall refers to unknown pillar {p:?}")));
            }
        }
        for p in m.pillars.keys() {
            if !m.overall.contains_key(p) {
                return Err(Error::Config(format!("pillar {p:?} is missing from overall")));
            }
        }
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ScoringModel =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("scoring model: {e}")))?;
        Self::new(raw.descriptors, raw.pillars, raw.overall)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Equal-weight hierarchy: KPI `i` goes to descriptor `i % n_descriptors`,
    /// descriptor `d` to pillar `d % 3`.
    pub fn round_robin(kpis: &[String], n_descriptors: usize) -> Result<Self> {
        let n_descriptors = n_descriptors.clamp(1, kpis.len().max(1));
        let mut descriptors: IndexMap<String, IndexMap<String, f64>> = IndexMap::new();
        for d in 0..n_descriptors {
            descriptors.insert(format!("D{:02}", d + 1), IndexMap::new());
        }
        for (i, k) in kpis.iter().enumerate() {
            descriptors[i % n_descriptors].insert(k.clone(), 1.0);
        }
        let mut pillars: IndexMap<String, IndexMap<String, f64>> = IndexMap::new();
        for (d, name) in descriptors.keys().enumerate() {
            pillars
                .entry(PILLARS[d % 3].to_string())
                .or_default()
                .insert(name.clone(), 1.0);
        }
        let overall = pillars.keys().map(|p| (p.clone(), 1.0)).collect();
        Self::new(descriptors, pillars, overall)
    }

    pub fn kpis(&self) -> Vec<&String> {
        self.descriptors.values().flat_map(|d| d.keys()).collect()
    }

    /// Descriptors, then pillars, then the overall score.
    pub fn units(&self) -> Vec<ScoreUnit> {
        let mut out: Vec<ScoreUnit> = self
            .descriptors
            .keys()
            .map(|n| ScoreUnit::new(Level::Descriptor, n))
            .collect();
        out.extend(self.pillars.keys().map(|n| ScoreUnit::new(Level::Pillar, n)));
        out.push(ScoreUnit::new(Level::Overall, "ESG"));
        out
    }

    /// Flattened KPI weights of every unit, shape `(units, dataset columns)`.
    pub fn flat_weights(&self, ds: &Dataset) -> Result<Array2<f64>> {
        let resolved = Resolved::new(self, ds)?;
        let u = self.units().len();
        let mut w = Array2::zeros((u, ds.n_cols()));
        let nd = resolved.descriptors.len();
        for (d, members) in resolved.descriptors.iter().enumerate() {
            for &(c, wk) in members {
                w[[d, c]] += wk;
            }
        }
        for (p, members) in resolved.pillars.iter().enumerate() {
            for &(d, wd) in members {
                for &(c, wk) in &resolved.descriptors[d] {
                    w[[nd + p, c]] += wd * wk;
                }
            }
        }
        let np = resolved.pillars.len();
        for &(p, wp) in &resolved.overall {
            for c in 0..ds.n_cols() {
                w[[nd + np, c]] += wp * w[[nd + p, c]];
            }
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ScoreUnit {
    pub level: Level,
    pub name: String,
}

impl ScoreUnit {
    pub fn new(level: Level, name: impl Into<String>) -> Self {
        Self {
            level,
            name: name.into(),
        }
    }
}

/// Index-resolved hierarchy against a dataset's columns.
struct Resolved {
    descriptors: Vec<Vec<(usize, f64)>>,
    pillars: Vec<Vec<(usize, f64)>>,
    overall: Vec<(usize, f64)>,
}

impl Resolved {
    fn new(model: &ScoringModel, ds: &Dataset) -> Result<Self> {
        let descriptors = model
            .descriptors
            .values()
            .map(|members| {
                members
                    .iter()
                    .map(|(k, &w)| {
                        ds.column_index(k)
                            .map(|c| (c, w))
                            .ok_or_else(|| Error::Config(format!("KPI column {k:?} not in dataset")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let pillars = model
            .pillars
            .values()
            .map(|members| {
                members
                    .iter()
                    .map(|(d, &w)| (model.descriptors.get_index_of(d).expect("validated"), w))
                    .collect()
            })
            .collect();
        let overall = model
            .overall
            .iter()
            .map(|(p, &w)| (model.pillars.get_index_of(p).expect("validated"), w))
            .collect();
        Ok(Self {
            descriptors,
            pillars,
            overall,
        })
    }
}

/// Per-row scores, one column per [`ScoringModel::units`] entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub units: Vec<ScoreUnit>,
    pub values: Array2<f64>,
}

/// Descriptor, pillar and overall scores of every row of a complete dataset.
pub fn compute_scores(ds: &Dataset, model: &ScoringModel) -> Result<Scores> {
    let r = Resolved::new(model, ds)?;
    if !ds.is_complete() {
        return Err(Error::Argument("scores need a complete dataset".into()));
    }
    let units = model.units();
    let (nd, np) = (r.descriptors.len(), r.pillars.len());
    let x = ds.values();
    let mut values = Array2::zeros((ds.n_rows(), units.len()));
    for i in 0..ds.n_rows() {
        for (d, members) in r.descriptors.iter().enumerate() {
            values[[i, d]] = members.iter().map(|&(c, w)| w * x[[i, c]]).sum();
        }
        for (p, members) in r.pillars.iter().enumerate() {
            values[[i, nd + p]] = members.iter().map(|&(d, w)| w * values[[i, d]]).sum();
        }
        values[[i, nd + np]] = r.overall.iter().map(|&(p, w)| w * values[[i, nd + p]]).sum();
    }
    Ok(Scores { units, values })
}
