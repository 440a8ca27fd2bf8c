//! Nodal covariate tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    /// Dense codes `0..book.len()`; `book[c]` is the original label of code `c`.
    Categorical { codes: Vec<u32>, book: Vec<String> },
    Continuous(Vec<f64>),
}

impl Column {
    pub fn column_type(&self) -> ColumnType {
        match self {
            Column::Categorical { .. } => ColumnType::Categorical,
            Column::Continuous(_) => ColumnType::Continuous,
        }
    }

    fn len(&self) -> usize {
        match self {
            Column::Categorical { codes, .. } => codes.len(),
            Column::Continuous(v) => v.len(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Categorical { codes, book } => Column::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                book: book.clone(),
            },
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Declared column types, in the order they should appear in the table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub columns: Vec<(String, ColumnType)>,
}

impl CovariateSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, ty: ColumnType) -> Self {
        self.columns.push((name.to_string(), ty));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    n_nodes: usize,
    names: Vec<String>,
    columns: Vec<Column>,
}

impl CovariateTable {
    /// A table with no columns; enough for purely structural models.
    pub fn empty(n_nodes: usize) -> Self {
        CovariateTable {
            n_nodes,
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn new(n_nodes: usize, columns: Vec<(String, Column)>) -> Result<Self> {
        let mut table = Self::empty(n_nodes);
        for (name, col) in columns {
            table.push(name, col)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, name: String, column: Column) -> Result<()> {
        if self.names.contains(&name) {
            return Err(Error::Invalid(format!("duplicate covariate column `{name}`")));
        }
        if column.len() != self.n_nodes {
            return Err(Error::RowCount {
                expected: self.n_nodes,
                found: column.len(),
            });
        }
        if let Column::Continuous(v) = &column {
            if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::MissingValue { row: row + 1, column: name });
            }
        }
        if let Column::Categorical { codes, book } = &column {
            if codes.iter().any(|&c| c as usize >= book.len()) {
                return Err(Error::Invalid(format!("column `{name}`: code outside code book")));
            }
        }
        self.names.push(name);
        self.columns.push(column);
        Ok(())
    }

    pub fn continuous(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.push(name.to_string(), Column::Continuous(values))?;
        Ok(self)
    }

    /// Adds a categorical column from raw labels, coding them densely in
    /// order of first appearance.
    pub fn categorical<S: AsRef<str>>(mut self, name: &str, labels: &[S]) -> Result<Self> {
        let col = encode_categorical(labels.iter().map(|s| s.as_ref()));
        self.push(name.to_string(), col)?;
        Ok(self)
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| &self.columns[k])
    }

    pub fn continuous_values(&self, name: &str) -> Result<&[f64]> {
        match self.column(name) {
            Some(Column::Continuous(v)) => Ok(v),
            Some(_) => Err(Error::Spec(format!("covariate `{name}` is categorical, expected continuous"))),
            None => Err(Error::Spec(format!("unknown covariate `{name}`"))),
        }
    }

    pub fn categorical_codes(&self, name: &str) -> Result<&[u32]> {
        match self.column(name) {
            Some(Column::Categorical { codes, .. }) => Ok(codes),
            Some(_) => Err(Error::Spec(format!("covariate `{name}` is continuous, expected categorical"))),
            None => Err(Error::Spec(format!("unknown covariate `{name}`"))),
        }
    }

    /// Table whose row `r` is row `rows[r]` of `self`.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_nodes) {
            return Err(Error::Invalid(format!("row {bad} out of range")));
        }
        Ok(CovariateTable {
            n_nodes: rows.len(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
        })
    }

    /// `{column: {code: label}}` for every categorical column.
    pub fn code_books(&self) -> BTreeMap<String, BTreeMap<u32, String>> {
        self.names
            .iter()
            .zip(&self.columns)
            .filter_map(|(name, col)| match col {
                Column::Categorical { book, .. } => Some((
                    name.clone(),
                    book.iter().enumerate().map(|(c, l)| (c as u32, l.clone())).collect(),
                )),
                Column::Continuous(_) => None,
            })
            .collect()
    }

    pub fn write_code_books(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, &self.code_books())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, schema: &CovariateSchema, n_nodes: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, schema, n_nodes)
    }

    /// Reads a header-first CSV with one row per node in node-id order. Only
    /// the declared columns are kept; any missing cell in them is rejected.
    pub fn read<R: std::io::Read>(reader: R, schema: &CovariateSchema, n_nodes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut positions = Vec::with_capacity(schema.columns.len());
        for (name, _) in &schema.columns {
            let pos = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Invalid(format!("covariate file lacks declared column `{name}`")))?;
            positions.push(pos);
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.columns.len()];
        let mut n_rows = 0;
        for rec in rdr.records() {
            let rec = rec?;
            n_rows += 1;
            for (k, &pos) in positions.iter().enumerate() {
                let cell = rec.get(pos).unwrap_or("");
                if is_missing(cell) {
                    return Err(Error::MissingValue {
                        row: n_rows,
                        column: schema.columns[k].0.clone(),
                    });
                }
                raw[k].push(cell.to_string());
            }
        }
        if let Some(n) = n_nodes {
            if n != n_rows {
                return Err(Error::RowCount {
                    expected: n,
                    found: n_rows,
                });
            }
        }
        let mut table = Self::empty(n_rows);
        for ((name, ty), cells) in schema.columns.iter().zip(raw) {
            let col = match ty {
                ColumnType::Categorical => encode_categorical(cells.iter().map(String::as_str)),
                ColumnType::Continuous => {
                    let mut v = Vec::with_capacity(cells.len());
                    for (r, c) in cells.iter().enumerate() {
                        v.push(c.parse::<f64>().map_err(|_| {
                            Error::Invalid(format!("row {}, column `{name}`: `{c}` is not a number", r + 1))
                        })?);
                    }
                    Column::Continuous(v)
                }
            };
            table.push(name.clone(), col)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.names)?;
        for r in 0..self.n_nodes {
            let row: Vec<String> = self
                .columns
                .iter()
                .map(|c| match c {
                    Column::Categorical { codes, book } => book[codes[r] as usize].clone(),
                    Column::Continuous(v) => format!("{}", v[r]),
                })
                .collect();
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<covariates>", e))?;
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL" | ".")
}

fn encode_categorical<'a>(labels: impl Iterator<Item = &'a str>) -> Column {
    let mut book: Vec<String> = Vec::new();
    let codes = labels
        .map(|l| match book.iter().position(|b| b == l) {
            Some(c) => c as u32,
            None => {
                book.push(l.to_string());
                (book.len() - 1) as u32
            }
        })
        .collect();
    Column::Categorical { codes, book }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuous_column() {
        let schema = CovariateSchema::new().with("alc", ColumnType::Continuous);
        let t = CovariateTable::read("alc\n0\n1\n2\n".as_bytes(), &schema, Some(3)).unwrap();
        assert_eq!(t.continuous_values("alc").unwrap(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn categorical_column_with_code_book() {
        let schema = CovariateSchema::new().with("gender", ColumnType::Categorical);
        let t = CovariateTable::read("gender,x\nM,1\nF,2\nM,3\n".as_bytes(), &schema, Some(3)).unwrap();
        assert_eq!(t.categorical_codes("gender").unwrap(), &[0, 1, 0]);
        let books = t.code_books();
        assert_eq!(books["gender"][&0], "M");
        assert_eq!(books["gender"][&1], "F");
        assert!(t.column("x").is_none());
    }

    #[test]
    fn row_count_mismatch() {
        let schema = CovariateSchema::new().with("alc", ColumnType::Continuous);
        let err = CovariateTable::read("alc\n0\n1\n".as_bytes(), &schema, Some(3)).unwrap_err();
        assert!(matches!(err, Error::RowCount { expected: 3, found: 2 }));
    }

    #[test]
    fn missing_cell_rejected() {
        let schema = CovariateSchema::new().with("alc", ColumnType::Continuous);
        let err = CovariateTable::read("alc\n0\nNA\n1\n".as_bytes(), &schema, Some(3)).unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 2, .. }));
        let err = CovariateTable::read("alc,b\n0,1\n,1\n".as_bytes(), &schema, None).unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 2, .. }));
    }

    #[test]
    fn undeclared_column_absent_is_error() {
        let schema = CovariateSchema::new().with("alc", ColumnType::Continuous);
        assert!(CovariateTable::read("x\n0\n".as_bytes(), &schema, None).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let t = CovariateTable::empty(2).continuous("a", vec![0.0, 1.0]).unwrap();
        assert!(t.continuous("a", vec![1.0, 2.0]).is_err());
    }
}
