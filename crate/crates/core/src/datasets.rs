//! Typed data frames read from CSV.
//!
//! Cells equal to `NA` or the empty string are missing. Without a type hint a
//! column is numeric when every non-missing cell parses as a finite real,
//! otherwise it is categorical with levels equal to the distinct strings.

use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use crate::error::{ResiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Numeric(values),
        }
    }

    pub fn categorical(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Categorical(values),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
        }
    }

    pub fn as_numeric(&self) -> Option<&[Option<f64>]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[Option<String>]> {
        match &self.data {
            ColumnData::Categorical(v) => Some(v),
            ColumnData::Numeric(_) => None,
        }
    }

    /// Sorted distinct levels of a categorical column, ignoring missing cells.
    pub fn levels(&self) -> Vec<String> {
        match &self.data {
            ColumnData::Categorical(v) => v
                .iter()
                .flatten()
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            ColumnData::Numeric(_) => Vec::new(),
        }
    }

    fn take(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
        };
        Column {
            name: self.name.clone(),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataFrame {
    columns: Vec<Column>,
    row_count: usize,
}

impl DataFrame {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let row_count = columns.first().map(Column::len).unwrap_or(0);
        let mut seen = BTreeSet::new();
        for col in &columns {
            if !seen.insert(col.name.clone()) {
                return Err(ResiError::DuplicateColumn(col.name.clone()));
            }
            if col.len() != row_count {
                return Err(ResiError::InvalidArgument(format!(
                    "column `{}` has {} rows, expected {}",
                    col.name,
                    col.len(),
                    row_count
                )));
            }
        }
        Ok(DataFrame { columns, row_count })
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| ResiError::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    /// New frame made of the given rows, in order. Rows may repeat.
    pub fn take_rows(&self, rows: &[usize]) -> DataFrame {
        DataFrame {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            row_count: rows.len(),
        }
    }

    /// Indices of rows with no missing value in any of `names`.
    pub fn complete_rows(&self, names: &[&str]) -> Result<Vec<usize>> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.row_count)
            .filter(|&r| cols.iter().all(|c| !c.is_missing(r)))
            .collect())
    }
}

fn is_missing_cell(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a CSV file with a header row.
pub fn read_csv(path: impl AsRef<Path>, hints: &HashMap<String, ColumnKind>) -> Result<DataFrame> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file, hints)
}

pub fn read_csv_from<R: Read>(reader: R, hints: &HashMap<String, ColumnKind>) -> Result<DataFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(b',')
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(ResiError::DuplicateColumn(h.clone()));
        }
    }
    for name in hints.keys() {
        if !seen.contains(name.as_str()) {
            return Err(ResiError::UnknownColumn(name.clone()));
        }
    }

    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            raw[j].push(if is_missing_cell(cell) {
                None
            } else {
                Some(cell.to_string())
            });
        }
    }

    let mut columns = Vec::with_capacity(headers.len());
    for (name, cells) in headers.into_iter().zip(raw) {
        let kind = match hints.get(&name) {
            Some(kind) => *kind,
            None if cells.iter().flatten().all(|c| parse_finite(c).is_some()) => ColumnKind::Numeric,
            None => ColumnKind::Categorical,
        };
        let column = match kind {
            ColumnKind::Categorical => Column::categorical(name, cells),
            ColumnKind::Numeric => {
                let mut values = Vec::with_capacity(cells.len());
                for cell in &cells {
                    values.push(match cell {
                        None => None,
                        Some(c) => Some(parse_finite(c).ok_or_else(|| {
                            ResiError::Csv(format!("column `{name}`: `{c}` is not a finite number"))
                        })?),
                    });
                }
                Column::numeric(name, values)
            }
        };
        columns.push(column);
    }
    DataFrame::new(columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<DataFrame> {
        read_csv_from(text.as_bytes(), &HashMap::new())
    }

    #[test]
    fn infers_column_kinds_and_missing_cells() {
        let df = parse("a,b,c\n1,x,\n2.5,NA,3\nNA,y,4\n").unwrap();
        assert_eq!(df.row_count(), 3);
        assert_eq!(
            df.column("a").unwrap().as_numeric().unwrap(),
            &[Some(1.0), Some(2.5), None]
        );
        assert_eq!(df.column("b").unwrap().kind(), ColumnKind::Categorical);
        assert_eq!(df.column("b").unwrap().levels(), vec!["x", "y"]);
        assert_eq!(
            df.column("c").unwrap().as_numeric().unwrap(),
            &[None, Some(3.0), Some(4.0)]
        );
    }

    #[test]
    fn mixed_column_falls_back_to_categorical() {
        let df = parse("v\n1\n2\nx\n").unwrap();
        let col = df.column("v").unwrap();
        assert_eq!(col.kind(), ColumnKind::Categorical);
        assert_eq!(col.levels(), vec!["1", "2", "x"]);
    }

    #[test]
    fn hint_forces_categorical() {
        let hints = HashMap::from([("v".to_string(), ColumnKind::Categorical)]);
        let df = read_csv_from("v\n3\n1\n3\n".as_bytes(), &hints).unwrap();
        assert_eq!(df.column("v").unwrap().levels(), vec!["1", "3"]);
    }

    #[test]
    fn rejects_ragged_rows_and_duplicate_headers() {
        assert!(matches!(
            parse("a,b\n1,2\n3\n"),
            Err(ResiError::RaggedRow { .. })
        ));
        assert!(matches!(
            parse("a,a\n1,2\n"),
            Err(ResiError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn quoted_fields() {
        let df = parse("name,val\n\"a, b\",1\n\"c\"\"d\",2\n").unwrap();
        assert_eq!(
            df.column("name").unwrap().as_categorical().unwrap(),
            &[Some("a, b".to_string()), Some("c\"d".to_string())]
        );
    }

    #[test]
    fn complete_rows_and_take() {
        let df = parse("a,b\n1,x\nNA,y\n3,\n4,z\n").unwrap();
        assert_eq!(df.complete_rows(&["a"]).unwrap(), vec![0, 2, 3]);
        assert_eq!(df.complete_rows(&["a", "b"]).unwrap(), vec![0, 3]);
        let sub = df.take_rows(&[3, 3, 0]);
        assert_eq!(sub.row_count(), 3);
        assert_eq!(
            sub.column("a").unwrap().as_numeric().unwrap(),
            &[Some(4.0), Some(4.0), Some(1.0)]
        );
    }
}
