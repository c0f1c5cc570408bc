//! CSV tables with round-trip float formatting.

use std::path::Path;

use crate::error::CliError;

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// A column-major numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new() -> Self {
        Self {
            header: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) -> &mut Self {
        self.header.push(name.into());
        self.columns.push(column);
        self
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(&self.columns[i])
    }

    pub fn require(&self, name: &str, path: &Path) -> Result<&[f64], CliError> {
        self.column(name)
            .ok_or_else(|| CliError::data(path, format!("missing column `{name}`")))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let rows = self.rows();
        if self.columns.iter().any(|c| c.len() != rows) {
            return Err(CliError::data(path, "columns differ in length"));
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_error(path, e))?;
        let mut record = Vec::with_capacity(self.columns.len());
        for r in 0..rows {
            record.clear();
            record.extend(self.columns.iter().map(|c| fmt(c[r])));
            w.write_record(&record).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns = vec![Vec::new(); header.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| CliError::data(path, format!("row {}: `{field}` is not a number", line + 2)))?;
                columns[c].push(v);
            }
        }
        Ok(Self { header, columns })
    }
}

impl Default for Table {
    fn default() -> Self {
        Self::new()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::data(path, format!("{other:?}")),
    }
}
