//! CSV ingestion, Stata-style variable ranges and model frames.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rectangular numeric data with explicit missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    column_names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
    n_rows: usize,
}

impl Table {
    pub fn new(column_names: Vec<String>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if column_names.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                column_names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Dimension("columns have unequal lengths".into()));
        }
        if columns.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Table {
            column_names,
            columns,
            n_rows,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.column_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// `"(12 vars, 206 obs)"`
    pub fn summary(&self) -> String {
        format!("({} vars, {} obs)", self.n_cols(), self.n_rows)
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file)
}

/// Parses comma-separated numeric data with a header row. Empty cells are
/// missing; rows are numbered from 1 after the header in error messages.
pub fn read_csv<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Csv("missing header row".into()));
    }
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() != names.len() {
            return Err(Error::RaggedRow {
                row,
                expected: names.len(),
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value = if cell.is_empty() {
                None
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column: names[j].clone(),
                            value: cell.to_string(),
                        })
                    }
                }
            };
            columns[j].push(value);
        }
    }
    Table::new(names, columns)
}

fn split_numbered(name: &str) -> Option<(&str, u64, usize)> {
    let digits = name.len() - name.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 || digits == name.len() {
        return None;
    }
    let (prefix, num) = name.split_at(name.len() - digits);
    Some((prefix, num.parse().ok()?, digits))
}

/// Expands a whitespace/comma separated list of names and `prefixN-prefixM`
/// ranges, dropping repeats. Every resulting name must be in `available`.
pub fn expand_varlist(spec: &str, available: &[String]) -> Result<Vec<String>> {
    let known: HashSet<&str> = available.iter().map(String::as_str).collect();
    let mut out: Vec<String> = Vec::new();
    let push = |name: String, out: &mut Vec<String>| {
        if !out.contains(&name) {
            out.push(name);
        }
    };
    for token in spec
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
    {
        if known.contains(token) {
            push(token.to_string(), &mut out);
            continue;
        }
        let Some((lo, hi)) = token.split_once('-') else {
            return Err(Error::UnknownVariable(token.to_string()));
        };
        let (Some((p_lo, n_lo, _)), Some((p_hi, n_hi, _))) =
            (split_numbered(lo), split_numbered(hi))
        else {
            return Err(Error::MalformedRange(token.to_string()));
        };
        if p_lo != p_hi {
            return Err(Error::MismatchedPrefix(token.to_string()));
        }
        if n_lo > n_hi {
            return Err(Error::MalformedRange(token.to_string()));
        }
        for i in n_lo..=n_hi {
            let name = format!("{p_lo}{i}");
            if !known.contains(name.as_str()) {
                return Err(Error::UnknownVariable(name));
            }
            push(name, &mut out);
        }
    }
    Ok(out)
}

/// Estimation data: outcome, regressors `[endogenous | exogenous | const]`
/// and the excluded instruments. The included exogenous columns and the
/// constant are appended to every first-stage instrument set.
#[derive(Debug, Clone)]
pub struct ModelFrame {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z_excl: DMatrix<f64>,
    pub dep_name: String,
    pub endo_names: Vec<String>,
    pub exog_names: Vec<String>,
    pub iv_names: Vec<String>,
    pub has_constant: bool,
    /// Rows removed by listwise deletion.
    pub dropped_rows: usize,
}

impl ModelFrame {
    /// Builds a frame from in-memory blocks with generated names
    /// (`y`, `x1..`, `w1..`, `z1..`).
    pub fn from_parts(
        y: DVector<f64>,
        endo: DMatrix<f64>,
        exog: DMatrix<f64>,
        z_excl: DMatrix<f64>,
        constant: bool,
    ) -> Result<Self> {
        let n = y.len();
        if endo.nrows() != n || exog.nrows() != n || z_excl.nrows() != n {
            return Err(Error::Dimension(
                "blocks must share the row count of y".into(),
            ));
        }
        if endo.ncols() == 0 {
            return Err(Error::EmptyRole("endogenous"));
        }
        if z_excl.ncols() == 0 {
            return Err(Error::EmptyRole("instrument"));
        }
        if n == 0 {
            return Err(Error::NoObservations);
        }
        let any_nonfinite = y
            .iter()
            .chain(endo.iter())
            .chain(exog.iter())
            .chain(z_excl.iter())
            .any(|v| !v.is_finite());
        if any_nonfinite {
            return Err(Error::NonFinite);
        }
        let (d1, d2) = (endo.ncols(), exog.ncols());
        let d = d1 + d2 + usize::from(constant);
        let mut x = DMatrix::zeros(n, d);
        x.columns_mut(0, d1).copy_from(&endo);
        x.columns_mut(d1, d2).copy_from(&exog);
        if constant {
            x.column_mut(d - 1).fill(1.0);
        }
        Ok(ModelFrame {
            y,
            x,
            dep_name: "y".into(),
            endo_names: (1..=d1).map(|i| format!("x{i}")).collect(),
            exog_names: (1..=d2).map(|i| format!("w{i}")).collect(),
            iv_names: (1..=z_excl.ncols()).map(|i| format!("z{i}")).collect(),
            z_excl,
            has_constant: constant,
            dropped_rows: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn d1(&self) -> usize {
        self.endo_names.len()
    }

    pub fn d2(&self) -> usize {
        self.exog_names.len()
    }

    /// Number of excluded instruments `K`.
    pub fn num_instruments(&self) -> usize {
        self.z_excl.ncols()
    }

    /// Columns shared by every instrument set: exogenous plus constant.
    pub fn num_included(&self) -> usize {
        self.d2() + usize::from(self.has_constant)
    }

    /// Coefficient labels, `_cons` last.
    pub fn coef_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .endo_names
            .iter()
            .chain(&self.exog_names)
            .cloned()
            .collect();
        if self.has_constant {
            names.push("_cons".into());
        }
        names
    }

    /// `[z_excl[:, subset] | x1 | const]`.
    pub fn instrument_block(&self, subset: &[usize]) -> DMatrix<f64> {
        let n = self.n();
        let d1 = self.d1();
        let inc = self.num_included();
        let mut z = DMatrix::zeros(n, subset.len() + inc);
        for (j, &c) in subset.iter().enumerate() {
            z.set_column(j, &self.z_excl.column(c));
        }
        z.columns_mut(subset.len(), inc)
            .copy_from(&self.x.columns(d1, inc));
        z
    }

    /// All `K` excluded instruments plus the included columns.
    pub fn full_instruments(&self) -> DMatrix<f64> {
        let all: Vec<usize> = (0..self.num_instruments()).collect();
        self.instrument_block(&all)
    }
}

pub fn build_model_frame(
    table: &Table,
    dep: &str,
    exog: &[String],
    endo: &[String],
    iv: &[String],
    constant: bool,
) -> Result<ModelFrame> {
    if endo.is_empty() {
        return Err(Error::EmptyRole("endogenous"));
    }
    if iv.is_empty() {
        return Err(Error::EmptyRole("instrument"));
    }
    let mut seen = HashSet::new();
    for name in std::iter::once(dep).chain(exog.iter().chain(endo).chain(iv).map(String::as_str)) {
        if !seen.insert(name) {
            return Err(Error::DuplicateRole(name.to_string()));
        }
    }
    let lookup = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    };
    let y_col = lookup(dep)?;
    let endo_cols = endo.iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?;
    let exog_cols = exog.iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?;
    let iv_cols = iv.iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?;

    let used: Vec<&[Option<f64>]> = std::iter::once(y_col)
        .chain(endo_cols.iter().copied())
        .chain(exog_cols.iter().copied())
        .chain(iv_cols.iter().copied())
        .collect();
    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&i| used.iter().all(|c| c[i].is_some()))
        .collect();
    if keep.is_empty() {
        return Err(Error::NoObservations);
    }
    let n = keep.len();
    let block = |cols: &[&[Option<f64>]]| {
        DMatrix::from_fn(n, cols.len(), |i, j| cols[j][keep[i]].unwrap_or(f64::NAN))
    };
    let y = DVector::from_fn(n, |i, _| y_col[keep[i]].unwrap_or(f64::NAN));
    let endo_m = block(&endo_cols);
    let exog_m = block(&exog_cols);
    let iv_m = block(&iv_cols);

    if constant {
        let named = [(&endo_m, endo), (&exog_m, exog), (&iv_m, iv)];
        for (m, names) in named {
            for (j, name) in names.iter().enumerate() {
                let col = m.column(j);
                if col.iter().all(|v| *v == col[0]) {
                    return Err(Error::ConstantColumn(name.clone()));
                }
            }
        }
    }

    let mut frame = ModelFrame::from_parts(y, endo_m, exog_m, iv_m, constant)?;
    frame.dep_name = dep.to_string();
    frame.endo_names = endo.to_vec();
    frame.exog_names = exog.to_vec();
    frame.iv_names = iv.to_vec();
    frame.dropped_rows = table.n_rows() - n;
    Ok(frame)
}
