//! CSV and JSON-config file formats.
//!
//! Dataset CSV: comma separated, header row first, first column holds the
//! row id. Unobserved cells are written as the missing token (empty by
//! default) and floats use 17 significant digits.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;

use crate::dataset::{ColumnKind, ColumnMeta, Dataset, HeldOut, MISSING};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub missing_token: String,
    /// Name of a non-numeric column holding a per-row grouping label.
    pub group_column: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            missing_token: String::new(),
            group_column: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, missing_token: &str) -> Result<Dataset> {
    load_csv_with(
        path,
        &LoadOptions {
            missing_token: missing_token.to_string(),
            group_column: None,
        },
    )
}

pub fn load_csv_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

fn csv_error(err: csv::Error) -> Error {
    match err.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Structure(format!(
            "ragged row at line {}: expected {expected_len} fields, found {len}",
            pos.as_ref().map(|p| p.line()).unwrap_or(0)
        )),
        _ => Error::Structure(err.to_string()),
    }
}

pub fn read_csv(reader: impl std::io::Read, opts: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() {
        return Err(Error::Structure("missing header row".into()));
    }
    let index_name = header[0].to_string();
    let group_pos = match &opts.group_column {
        Some(g) => Some(
            header
                .iter()
                .position(|h| h == g)
                .filter(|&p| p > 0)
                .ok_or_else(|| Error::Config(format!("group column {g:?} not in header")))?,
        ),
        None => None,
    };
    let value_fields: Vec<usize> = (1..header.len()).filter(|&k| Some(k) != group_pos).collect();
    let columns: Vec<ColumnMeta> = value_fields
        .iter()
        .map(|&k| ColumnMeta::continuous(&header[k]))
        .collect();

    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut cells = Vec::new();
    let mut observed = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        ids.push(record[0].to_string());
        if let Some(g) = group_pos {
            groups.push(record[g].to_string());
        }
        for (&k, meta) in value_fields.iter().zip(&columns) {
            let raw = &record[k];
            if raw == opts.missing_token {
                cells.push(MISSING);
                observed.push(false);
            } else {
                let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                    row,
                    column: meta.name.clone(),
                    value: raw.to_string(),
                })?;
                cells.push(v);
                observed.push(true);
            }
        }
    }
    let shape = (ids.len(), columns.len());
    let values = Array2::from_shape_vec(shape, cells).map_err(|e| Error::Structure(e.to_string()))?;
    let mask = Array2::from_shape_vec(shape, observed).map_err(|e| Error::Structure(e.to_string()))?;
    let ds = Dataset::new(values, mask, columns, ids)?.with_index_name(index_name);
    if group_pos.is_some() {
        ds.with_row_groups(groups)
    } else {
        Ok(ds)
    }
}

/// Formats like C's `%.17g`: shortest fixed or scientific notation carrying
/// 17 significant digits, trailing zeros stripped.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let prec = (16 - exp) as usize;
        strip_zeros(&format!("{x:.prec$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(ds, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv(ds: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    let groups = ds.row_groups();
    write!(w, "{}", ds.index_name())?;
    for c in ds.columns() {
        write!(w, ",{}", c.name)?;
    }
    if groups.is_some() {
        write!(w, ",group")?;
    }
    writeln!(w)?;
    for i in 0..ds.n_rows() {
        write!(w, "{}", ds.row_ids()[i])?;
        for j in 0..ds.n_cols() {
            match ds.get(i, j) {
                Some(v) => write!(w, ",{}", format_float(v))?,
                None => write!(w, ",")?,
            }
        }
        if let Some(g) = groups {
            write!(w, ",{}", g[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Ground-truth file with header `row,column,value`; `row` is the row id.
pub fn save_truth(ds: &Dataset, truth: &[HeldOut], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "row,column,value").map_err(io)?;
    for h in truth {
        writeln!(
            w,
            "{},{},{}",
            ds.row_ids()[h.row],
            ds.columns()[h.col].name,
            format_float(h.value)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_truth(ds: &Dataset, path: impl AsRef<Path>) -> Result<Vec<HeldOut>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let row_of: HashMap<&str, usize> = ds
        .row_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() != 3 {
            return Err(Error::Structure(format!("truth line {} needs 3 fields", k + 2)));
        }
        let row = *row_of
            .get(&rec[0])
            .ok_or_else(|| Error::Structure(format!("unknown row id {:?} in truth file", &rec[0])))?;
        let col = ds
            .column_index(&rec[1])
            .ok_or_else(|| Error::Structure(format!("unknown column {:?} in truth file", &rec[1])))?;
        let value = rec[2].parse().map_err(|_| Error::Parse {
            row: k,
            column: "value".into(),
            value: rec[2].to_string(),
        })?;
        out.push(HeldOut { row, col, value });
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Column-kind overrides: a JSON object mapping column name to kind.
pub fn load_column_kinds(path: impl AsRef<Path>) -> Result<HashMap<String, ColumnKind>> {
    read_json(path)
}

/// Writes rows of already-formatted fields as CSV.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
    let err = |e: csv::Error| Error::Structure(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
