//! Categorical datasets: ingestion, MDLP discretization, fold splitting and
//! synthetic data for timing runs.

mod folds;
mod load;
mod mdlp;
mod synthetic;

pub(crate) use folds::stratified_folds;
pub use folds::{make_folds, FoldPlan};
pub use load::{load_csv, load_suite, ColumnKind, Encoder, Schema};
pub use mdlp::{apply_discretization, fit_mdlp, ColumnCuts, DiscretizationModel};
pub use synthetic::gen_synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One column of a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    /// Label-encoded values in `0..cardinality`.
    Categorical {
        codes: Vec<usize>,
        cardinality: usize,
        labels: Vec<String>,
    },
    /// Raw values awaiting discretization.
    Numeric { values: Vec<f64> },
}

impl Column {
    pub fn categorical(codes: Vec<usize>, cardinality: usize) -> Self {
        let labels = (0..cardinality).map(|v| v.to_string()).collect();
        Column::Categorical {
            codes,
            cardinality,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Categorical { codes, .. } => codes.len(),
            Column::Numeric { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cardinality(&self) -> Option<usize> {
        match self {
            Column::Categorical { cardinality, .. } => Some(*cardinality),
            Column::Numeric { .. } => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Categorical {
                codes,
                cardinality,
                labels,
            } => Column::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                cardinality: *cardinality,
                labels: labels.clone(),
            },
            Column::Numeric { values } => Column::Numeric {
                values: rows.iter().map(|&r| values[r]).collect(),
            },
        }
    }
}

/// A table of categorical (or not-yet-discretized numeric) columns with a
/// designated class column.
///
/// Constructors check that every categorical cell lies below its column's
/// cardinality and that there is at least one row. Row subsets produced by
/// [`Dataset::subset`] may be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
    class_index: usize,
    n_rows: usize,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Column>, class_index: usize) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::config("dataset needs at least one column"));
        }
        if names.len() != columns.len() {
            return Err(Error::config("column names and columns differ in length"));
        }
        if class_index >= columns.len() {
            return Err(Error::config(format!(
                "class index {class_index} out of range for {} columns",
                columns.len()
            )));
        }
        let n_rows = columns[0].len();
        if n_rows == 0 {
            return Err(Error::config("dataset has no rows"));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::config(format!(
                    "column {} has {} rows, expected {n_rows}",
                    names[j],
                    col.len()
                )));
            }
            if let Column::Categorical {
                codes, cardinality, ..
            } = col
            {
                if *cardinality == 0 {
                    return Err(Error::config(format!("column {} has cardinality 0", names[j])));
                }
                if let Some(&bad) = codes.iter().find(|&&v| v >= *cardinality) {
                    return Err(Error::config(format!(
                        "column {} holds value {bad} >= cardinality {cardinality}",
                        names[j]
                    )));
                }
            }
        }
        if !matches!(columns[class_index], Column::Categorical { .. }) {
            return Err(Error::config("class column must be categorical"));
        }
        Ok(Dataset {
            names,
            columns,
            class_index,
            n_rows,
        })
    }

    /// Builds an all-categorical dataset from column-major codes.
    pub fn from_codes(
        columns: Vec<Vec<usize>>,
        cardinalities: Vec<usize>,
        class_index: usize,
    ) -> Result<Self> {
        if columns.len() != cardinalities.len() {
            return Err(Error::config("columns and cardinalities differ in length"));
        }
        let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
        let cols = columns
            .into_iter()
            .zip(cardinalities)
            .map(|(codes, card)| Column::categorical(codes, card))
            .collect();
        Dataset::new(names, cols, class_index)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn cardinality(&self, j: usize) -> Option<usize> {
        self.columns[j].cardinality()
    }

    pub fn cardinalities(&self) -> Vec<Option<usize>> {
        self.columns.iter().map(Column::cardinality).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.columns[self.class_index]
            .cardinality()
            .expect("class column is categorical")
    }

    /// Column indices of the non-class attributes, in column order.
    pub fn attributes(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&j| j != self.class_index)
            .collect()
    }

    pub fn is_categorical(&self) -> bool {
        self.columns
            .iter()
            .all(|c| matches!(c, Column::Categorical { .. }))
    }

    pub fn require_categorical(&self) -> Result<()> {
        match self
            .columns
            .iter()
            .position(|c| matches!(c, Column::Numeric { .. }))
        {
            None => Ok(()),
            Some(j) => Err(Error::config(format!(
                "column {} is numeric; discretize before use",
                self.names[j]
            ))),
        }
    }

    /// Codes of a categorical column.
    ///
    /// Panics if column `j` is numeric; callers validate with
    /// [`Dataset::require_categorical`] first.
    pub fn codes(&self, j: usize) -> &[usize] {
        match &self.columns[j] {
            Column::Categorical { codes, .. } => codes,
            Column::Numeric { .. } => panic!("column {} is numeric", self.names[j]),
        }
    }

    pub fn class_codes(&self) -> &[usize] {
        self.codes(self.class_index)
    }

    /// Row `i` of an all-categorical dataset.
    pub fn row(&self, i: usize) -> Vec<usize> {
        (0..self.columns.len()).map(|j| self.codes(j)[i]).collect()
    }

    /// Labels of a categorical column.
    pub fn labels(&self, j: usize) -> Option<&[String]> {
        match &self.columns[j] {
            Column::Categorical { labels, .. } => Some(labels),
            Column::Numeric { .. } => None,
        }
    }

    /// Rows selected by index, in the given order. The result may be empty.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            class_index: self.class_index,
            n_rows: rows.len(),
        }
    }

    pub(crate) fn with_columns(&self, columns: Vec<Column>) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns,
            class_index: self.class_index,
            n_rows: self.n_rows,
        }
    }
}
