//! CSV ingestion into [`Dataset`] and [`ClusterPartition`] values.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{dummy_columns, ClusterPartition, Dataset};
use crate::error::{Error, Result};

/// A CSV file held as text columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<String>>,
    index: HashMap<String, usize>,
}

impl Table {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut index = HashMap::new();
        for (j, h) in headers.iter().enumerate() {
            if index.insert(h.clone(), j).is_some() {
                return Err(Error::DuplicateColumn(h.clone()));
            }
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                col.push(field.to_string());
            }
        }
        if columns.first().is_none_or(|c| c.is_empty()) {
            return Err(Error::Empty("csv file"));
        }
        Ok(Self { headers, columns, index })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn text(&self, name: &str) -> Result<&[String]> {
        let j = *self.index.get(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        Ok(&self.columns[j])
    }

    /// Parses a numeric column. Empty and unparsable cells are errors.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        self.text(name)?
            .iter()
            .enumerate()
            .map(|(row, s)| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonFinite { what: format!("column '{name}' value '{s}'"), row }),
            })
            .collect()
    }

    pub fn partition(&self, name: &str) -> Result<ClusterPartition> {
        ClusterPartition::from_labels(self.text(name)?)
    }
}

/// Which columns of a [`Table`] make up a regression.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelColumns {
    pub outcome: String,
    pub regressors: Vec<String>,
    /// Categorical columns expanded into dummies, first level dropped.
    pub dummies: Vec<String>,
    pub intercept: bool,
}

pub fn build_dataset(table: &Table, cols: &ModelColumns) -> Result<Dataset> {
    let y = table.numeric(&cols.outcome)?;
    let mut x = Vec::new();
    if cols.intercept {
        x.push(("(intercept)".to_string(), vec![1.0; y.len()]));
    }
    for r in &cols.regressors {
        x.push((r.clone(), table.numeric(r)?));
    }
    for d in &cols.dummies {
        x.extend(dummy_columns(d, table.text(d)?)?);
    }
    Dataset::new(y, x)
}

/// Writes rows of already formatted fields.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}
