use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Column, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Numeric,
    Ignore,
}

/// Column typing for a CSV file.
///
/// Stored as TOML:
///
/// ```toml
/// class = "species"
///
/// [columns]
/// "petal length" = "numeric"
/// id = "ignore"
/// ```
///
/// Columns not listed are categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub class: String,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnKind>,
}

impl Schema {
    pub fn new(class: impl Into<String>) -> Self {
        Schema {
            class: class.into(),
            columns: BTreeMap::new(),
        }
    }

    pub fn with(mut self, column: impl Into<String>, kind: ColumnKind) -> Self {
        self.columns.insert(column.into(), kind);
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad schema: {e}")))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Schema::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn kind(&self, column: &str) -> ColumnKind {
        self.columns
            .get(column)
            .copied()
            .unwrap_or(ColumnKind::Categorical)
    }

    fn check_header(&self, header: &[String]) -> Result<()> {
        for name in self.columns.keys().chain(std::iter::once(&self.class)) {
            if !header.iter().any(|h| h == name) {
                return Err(Error::config(format!("schema names unknown column {name:?}")));
            }
        }
        match self.kind(&self.class) {
            ColumnKind::Categorical => Ok(()),
            other => Err(Error::config(format!(
                "class column {:?} must be categorical, schema says {other:?}",
                self.class
            ))),
        }
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    /// File line number of each row, for error messages.
    lines: Vec<usize>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, 0))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        rows.push(record.iter().map(str::to_owned).collect());
        lines.push(line);
    }
    Ok(RawTable {
        header,
        rows,
        lines,
    })
}

fn csv_error(e: csv::Error, fallback_row: usize) -> Error {
    let row = e
        .position()
        .map_or(fallback_row, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row,
            message: format!("{other:?}"),
        },
    }
}

fn parse_numeric(text: &str, line: usize, column: &str) -> Result<f64> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row: line,
            message: format!("column {column:?}: {text:?} is not a finite number"),
        }),
    }
}

/// Reads a CSV file with a header row.
///
/// Categorical columns are label-encoded in order of first appearance;
/// numeric columns are kept raw until discretized.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let table = read_table(path.as_ref())?;
    schema.check_header(&table.header)?;

    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut class_index = 0;
    for (j, name) in table.header.iter().enumerate() {
        let column = match schema.kind(name) {
            ColumnKind::Ignore => continue,
            ColumnKind::Numeric => {
                let values = table
                    .rows
                    .iter()
                    .zip(&table.lines)
                    .map(|(r, &line)| parse_numeric(&r[j], line, name))
                    .collect::<Result<Vec<_>>>()?;
                Column::Numeric { values }
            }
            ColumnKind::Categorical => {
                let mut index: HashMap<&str, usize> = HashMap::new();
                let mut labels = Vec::new();
                let codes = table
                    .rows
                    .iter()
                    .map(|r| {
                        *index.entry(r[j].as_str()).or_insert_with(|| {
                            labels.push(r[j].clone());
                            labels.len() - 1
                        })
                    })
                    .collect();
                Column::Categorical {
                    codes,
                    cardinality: labels.len().max(1),
                    labels,
                }
            }
        };
        if *name == schema.class {
            class_index = names.len();
        }
        names.push(name.clone());
        columns.push(column);
    }
    Dataset::new(names, columns, class_index)
}

/// Loads every `NAME.csv` in `dir` that has a `NAME.schema.toml` next to
/// it, sorted by name.
pub fn load_suite(dir: impl AsRef<Path>) -> Result<Vec<(String, Dataset)>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let schema = path.with_extension("schema.toml");
            if schema.exists() {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                found.push((name, path, schema));
            }
        }
    }
    found.sort();
    found
        .into_iter()
        .map(|(name, csv, schema)| Ok((name, load_csv(csv, &Schema::from_file(schema)?)?)))
        .collect()
}

/// Label dictionaries captured from a training table, used to encode new
/// rows at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub names: Vec<String>,
    /// `Some(labels)` for categorical columns, `None` for numeric ones.
    pub labels: Vec<Option<Vec<String>>>,
    pub class_index: usize,
}

impl Encoder {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Encoder {
            names: ds.names().to_vec(),
            labels: (0..ds.n_columns())
                .map(|j| ds.labels(j).map(<[String]>::to_vec))
                .collect(),
            class_index: ds.class_index(),
        }
    }

    /// Encodes a new CSV with the training dictionaries. Extra columns are
    /// ignored and the class column may be absent (filled with code 0).
    /// Labels never seen in training map to the last code of their column.
    pub fn encode_csv(&self, path: impl AsRef<Path>) -> Result<Dataset> {
        let table = read_table(path.as_ref())?;
        let mut columns = Vec::with_capacity(self.names.len());
        for (j, name) in self.names.iter().enumerate() {
            let pos = table.header.iter().position(|h| h == name);
            let pos = match (pos, j == self.class_index) {
                (Some(p), _) => Some(p),
                (None, true) => None,
                (None, false) => {
                    return Err(Error::config(format!("input lacks column {name:?}")));
                }
            };
            let column = match (&self.labels[j], pos) {
                (Some(labels), None) => Column::Categorical {
                    codes: vec![0; table.rows.len()],
                    cardinality: labels.len().max(1),
                    labels: labels.clone(),
                },
                (Some(labels), Some(p)) => {
                    let card = labels.len().max(1);
                    let codes = table
                        .rows
                        .iter()
                        .map(|r| {
                            labels
                                .iter()
                                .position(|l| *l == r[p])
                                .unwrap_or(card - 1)
                        })
                        .collect();
                    Column::Categorical {
                        codes,
                        cardinality: card,
                        labels: labels.clone(),
                    }
                }
                (None, Some(p)) => Column::Numeric {
                    values: table
                        .rows
                        .iter()
                        .zip(&table.lines)
                        .map(|(r, &line)| parse_numeric(&r[p], line, name))
                        .collect::<Result<_>>()?,
                },
                (None, None) => unreachable!("class column is categorical"),
            };
            columns.push(column);
        }
        Dataset::new(self.names.clone(), columns, self.class_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn encodes_in_first_appearance_order() {
        let f = write_tmp("color,class\nred,0\nblue,1\nred,1\n");
        let ds = load_csv(f.path(), &Schema::new("class")).unwrap();
        assert_eq!(ds.cardinalities(), vec![Some(2), Some(2)]);
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.codes(0), &[0, 1, 0]);
        assert_eq!(ds.labels(0).unwrap(), &["red".to_string(), "blue".to_string()]);
        assert_eq!(ds.class_index(), 1);
    }

    #[test]
    fn wrong_arity_names_the_row() {
        let f = write_tmp("color,class\nred,0\nblue\nred,1\n");
        match load_csv(f.path(), &Schema::new("class")) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn numeric_columns_stay_raw() {
        let f = write_tmp("x,class\n3.5,a\n1.0,b\n2.2,a\n");
        let schema = Schema::new("class").with("x", ColumnKind::Numeric);
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.cardinality(0), None);
        assert_eq!(
            ds.column(0),
            &Column::Numeric {
                values: vec![3.5, 1.0, 2.2]
            }
        );
        assert!(ds.require_categorical().is_err());
    }

    #[test]
    fn unknown_schema_column_is_config_error() {
        let f = write_tmp("x,class\n1,a\n");
        let schema = Schema::new("class").with("nope", ColumnKind::Numeric);
        assert!(matches!(load_csv(f.path(), &schema), Err(Error::Config(_))));
        assert!(matches!(
            load_csv(f.path(), &Schema::new("missing")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bad_number_is_parse_error() {
        let f = write_tmp("x,class\n1,a\nfoo,b\n");
        let schema = Schema::new("class").with("x", ColumnKind::Numeric);
        assert!(matches!(
            load_csv(f.path(), &schema),
            Err(Error::Parse { row: 3, .. })
        ));
    }

    #[test]
    fn schema_parses_from_toml() {
        let s = Schema::from_toml_str("class = \"y\"\n[columns]\na = \"numeric\"\nb = \"ignore\"\n")
            .unwrap();
        assert_eq!(s.kind("a"), ColumnKind::Numeric);
        assert_eq!(s.kind("b"), ColumnKind::Ignore);
        assert_eq!(s.kind("c"), ColumnKind::Categorical);
    }

    #[test]
    fn encoder_maps_unseen_labels_to_last_code() {
        let train = write_tmp("color,class\nred,0\nblue,1\n");
        let ds = load_csv(train.path(), &Schema::new("class")).unwrap();
        let enc = Encoder::from_dataset(&ds);
        let new = write_tmp("color\nblue\ngreen\nred\n");
        let encoded = enc.encode_csv(new.path()).unwrap();
        assert_eq!(encoded.codes(0), &[1, 1, 0]);
        assert_eq!(encoded.class_codes(), &[0, 0, 0]);
    }
}
