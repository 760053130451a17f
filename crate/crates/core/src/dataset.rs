//! Column-schema'd sample matrices shared by the samplers, estimators, and
//! model fitting code.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("column `{0}` already exists")]
    DuplicateColumn(String),
    #[error("column `{name}` has {found} rows, expected {expected}")]
    LengthMismatch {
        name: String,
        found: usize,
        expected: usize,
    },
    #[error("column `{name}` is {found}, expected {expected}")]
    TypeMismatch {
        name: String,
        found: &'static str,
        expected: &'static str,
    },
    #[error("dataset has no rows")]
    Empty,
    #[error("csv error: {0}")]
    Csv(String),
}

/// Values of one column: small-cardinality categorical codes or real numbers.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Discrete(Vec<u32>),
    Real(Vec<f64>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Discrete(v) => v.len(),
            ColumnData::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ColumnData::Discrete(_) => "discrete",
            ColumnData::Real(_) => "real",
        }
    }

    /// Values as f64 regardless of storage type.
    pub fn as_f64(&self) -> Vec<f64> {
        match self {
            ColumnData::Discrete(v) => v.iter().map(|&x| x as f64).collect(),
            ColumnData::Real(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

/// Immutable table of named columns with a uniform row count.
///
/// Mutating operations (`with_real_column`, `select_rows`, ...) return new
/// datasets; existing ones are never modified, so sharing across worker
/// threads is safe.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    columns: Vec<Column>,
    index: HashMap<String, usize>,
    n_rows: usize,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_columns(columns: Vec<Column>) -> Result<Self, DatasetError> {
        let mut ds = Dataset::new();
        for c in columns {
            ds = ds.with_column(c)?;
        }
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&Column, DatasetError> {
        self.index
            .get(name)
            .map(|&i| &self.columns[i])
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    }

    pub fn discrete(&self, name: &str) -> Result<&[u32], DatasetError> {
        match &self.column(name)?.data {
            ColumnData::Discrete(v) => Ok(v),
            ColumnData::Real(_) => Err(DatasetError::TypeMismatch {
                name: name.to_string(),
                found: "real",
                expected: "discrete",
            }),
        }
    }

    pub fn real(&self, name: &str) -> Result<&[f64], DatasetError> {
        match &self.column(name)?.data {
            ColumnData::Real(v) => Ok(v),
            ColumnData::Discrete(_) => Err(DatasetError::TypeMismatch {
                name: name.to_string(),
                found: "discrete",
                expected: "real",
            }),
        }
    }

    /// Column values as f64 whatever the storage type.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, DatasetError> {
        Ok(self.column(name)?.data.as_f64())
    }

    pub fn with_column(&self, column: Column) -> Result<Self, DatasetError> {
        if self.index.contains_key(&column.name) {
            return Err(DatasetError::DuplicateColumn(column.name));
        }
        if !self.columns.is_empty() && column.data.len() != self.n_rows {
            return Err(DatasetError::LengthMismatch {
                name: column.name,
                found: column.data.len(),
                expected: self.n_rows,
            });
        }
        let mut out = self.clone();
        out.n_rows = column.data.len();
        out.index.insert(column.name.clone(), out.columns.len());
        out.columns.push(column);
        Ok(out)
    }

    pub fn with_real_column(&self, name: &str, values: Vec<f64>) -> Result<Self, DatasetError> {
        self.with_column(Column {
            name: name.to_string(),
            data: ColumnData::Real(values),
        })
    }

    pub fn with_discrete_column(&self, name: &str, values: Vec<u32>) -> Result<Self, DatasetError> {
        self.with_column(Column {
            name: name.to_string(),
            data: ColumnData::Discrete(values),
        })
    }

    /// New dataset holding the given rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                data: match &c.data {
                    ColumnData::Discrete(v) => {
                        ColumnData::Discrete(rows.iter().map(|&r| v[r]).collect())
                    }
                    ColumnData::Real(v) => ColumnData::Real(rows.iter().map(|&r| v[r]).collect()),
                },
            })
            .collect();
        Dataset {
            columns,
            index: self.index.clone(),
            n_rows: rows.len(),
        }
    }

    /// Row indices grouped by the value of a discrete column, keyed in
    /// increasing value order.
    pub fn stratify(&self, by: &str) -> Result<BTreeMap<u32, Vec<usize>>, DatasetError> {
        let col = self.discrete(by)?;
        let mut strata: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &v) in col.iter().enumerate() {
            strata.entry(v).or_default().push(i);
        }
        Ok(strata)
    }

    /// Seeded shuffle split into (first, second) with `frac` of rows in the
    /// first part (rounded down, at least one row in each part when possible).
    pub fn split(&self, frac: f64, seed: u64) -> (Self, Self) {
        let mut rows: Vec<usize> = (0..self.n_rows).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rows.shuffle(&mut rng);
        let cut = ((self.n_rows as f64) * frac).floor() as usize;
        let cut = cut.clamp(usize::from(self.n_rows > 1), self.n_rows);
        let (a, b) = rows.split_at(cut);
        (self.select_rows(a), self.select_rows(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new()
            .with_discrete_column("y", vec![0, 1, 0, 1, 1])
            .unwrap()
            .with_real_column("x", vec![0.5, 1.5, 2.5, 3.5, 4.5])
            .unwrap()
    }

    #[test]
    fn column_lookup_and_types() {
        let ds = toy();
        assert_eq!(ds.n_rows(), 5);
        assert_eq!(ds.discrete("y").unwrap(), &[0, 1, 0, 1, 1]);
        assert!(matches!(
            ds.real("y"),
            Err(DatasetError::TypeMismatch { .. })
        ));
        assert!(matches!(
            ds.column("missing"),
            Err(DatasetError::MissingColumn(_))
        ));
    }

    #[test]
    fn duplicate_and_length_checks() {
        let ds = toy();
        assert!(matches!(
            ds.with_real_column("x", vec![0.0; 5]),
            Err(DatasetError::DuplicateColumn(_))
        ));
        assert!(matches!(
            ds.with_real_column("z", vec![0.0; 4]),
            Err(DatasetError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn stratify_groups_rows() {
        let ds = toy();
        let strata = ds.stratify("y").unwrap();
        assert_eq!(strata[&0], vec![0, 2]);
        assert_eq!(strata[&1], vec![1, 3, 4]);
    }

    #[test]
    fn split_is_seeded_and_partitions() {
        let ds = toy();
        let (a1, b1) = ds.split(0.6, 7);
        let (a2, _b2) = ds.split(0.6, 7);
        assert_eq!(a1.real("x").unwrap(), a2.real("x").unwrap());
        assert_eq!(a1.n_rows() + b1.n_rows(), ds.n_rows());
    }
}
