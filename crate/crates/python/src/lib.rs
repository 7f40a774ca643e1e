//! Python bindings: datasets, training, prediction and single-CPT fits.

use hls_core::bayes::sample_pg;
use hls_core::classifier::{fit_design, fit_pipeline, BncModel, Smoother, TrainConfig};
use hls_core::data::{load_csv, make_folds, Dataset, Schema};
use hls_core::eval::run_cv;
use hls_core::smoothing::additive_cpt;
use hls_core::structure::StructureKind;
use hls_core::tree::{build_design, predict_cpt, CptTree, DesignOptions};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: hls_core::Error) -> PyErr {
    match e {
        hls_core::Error::Io(e) => PyIOError::new_err(e.to_string()),
        hls_core::Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = hls_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// A table of categorical (and possibly numeric) columns with a class column.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Build from column-major integer codes.
    #[staticmethod]
    fn from_codes(columns: Vec<Vec<usize>>, cardinalities: Vec<usize>, class_index: usize) -> PyResult<Self> {
        Ok(PyDataset {
            inner: Dataset::from_codes(columns, cardinalities, class_index).map_err(py_err)?,
        })
    }

    /// Read a CSV with a TOML schema.
    #[staticmethod]
    fn load_csv(path: &str, schema_path: &str) -> PyResult<Self> {
        let schema = Schema::from_file(schema_path).map_err(py_err)?;
        Ok(PyDataset {
            inner: load_csv(path, &schema).map_err(py_err)?,
        })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn class_index(&self) -> usize {
        self.inner.class_index()
    }

    fn row(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i))
    }
}

/// A trained network classifier.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: BncModel,
}

#[pymethods]
impl PyModel {
    /// Learn structure and CPTs. Numeric columns are discretized first.
    #[staticmethod]
    #[pyo3(signature = (dataset, structure = "kdb:1", smoother = "hls-nb", seed = 0))]
    fn train(py: Python<'_>, dataset: &PyDataset, structure: &str, smoother: &str, seed: u64) -> PyResult<Self> {
        let mut cfg = TrainConfig::new(parse::<StructureKind>(structure)?, parse::<Smoother>(smoother)?);
        cfg.seed = seed;
        let ds = &dataset.inner;
        let inner = py.detach(|| fit_pipeline(ds, &cfg)).map_err(py_err)?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: BncModel::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn smoother(&self) -> String {
        self.inner.smoother.clone()
    }

    #[getter]
    fn class_prior(&self) -> Vec<f64> {
        self.inner.class_prior.clone()
    }

    /// Attribute parents of each column, as a list (empty for the class).
    #[getter]
    fn parents(&self) -> Vec<Vec<usize>> {
        self.inner.structure.parents.clone()
    }

    /// Class posteriors for full-width code rows (class entry ignored).
    fn predict_proba(&self, rows: Vec<Vec<usize>>) -> PyResult<Vec<Vec<f64>>> {
        rows.iter()
            .map(|r| self.inner.predict_posterior(r).map_err(py_err))
            .collect()
    }

    fn predict(&self, rows: Vec<Vec<usize>>) -> PyResult<Vec<usize>> {
        rows.iter()
            .map(|r| self.inner.predict_class(r).map_err(py_err))
            .collect()
    }
}

/// Smooth one CPT given `counts[leaf][value]` over a tree with the given
/// parent cardinalities (class first). Returns the `leaves × values` table.
#[pyfunction]
#[pyo3(signature = (counts, parent_cardinalities, smoother = "hls-nb", seed = 0))]
fn fit_cpt(counts: Vec<Vec<f64>>, parent_cardinalities: Vec<usize>, smoother: &str, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let c = counts.first().map_or(0, Vec::len);
    if c < 1 || counts.iter().any(|r| r.len() != c) {
        return Err(PyValueError::new_err("counts must be a non-empty rectangular table"));
    }
    let tree = CptTree::from_cardinalities(c, parent_cardinalities);
    let flat: Vec<f64> = counts.concat();
    let cpt = match parse::<Smoother>(smoother)? {
        Smoother::Additive { m } => additive_cpt(&flat, &tree, m).map_err(py_err)?,
        sm => {
            let design = build_design(&tree, DesignOptions::default())
                .with_counts(flat)
                .map_err(py_err)?;
            let fit = fit_design(&design, &sm, seed, 0).map_err(py_err)?;
            match fit.cpt {
                Some(cpt) => cpt,
                None => predict_cpt(&fit.b, &design).map_err(py_err)?,
            }
        }
    };
    Ok((0..cpt.n_rows).map(|i| cpt.row(i).to_vec()).collect())
}

/// K-fold cross-validation; returns pooled zero-one and log loss.
#[pyfunction]
#[pyo3(signature = (dataset, structure = "kdb:1", smoother = "hls-nb", folds = 10, seed = 0))]
fn cross_validate<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    structure: &str,
    smoother: &str,
    folds: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = TrainConfig::new(parse::<StructureKind>(structure)?, parse::<Smoother>(smoother)?);
    cfg.seed = seed;
    let ds = &dataset.inner;
    let res = py
        .detach(|| make_folds(ds, folds, seed).and_then(|plan| run_cv(ds, "dataset", &cfg, &plan)))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("zero_one", res.zero_one)?;
    out.set_item("log_loss", res.log_loss)?;
    out.set_item("fit_seconds", res.fit_seconds)?;
    Ok(out)
}

/// `n` Pólya-Gamma PG(b, c) draws.
#[pyfunction]
#[pyo3(signature = (b, c, n, seed = 0, terms = 2))]
fn sample_polya_gamma(b: f64, c: f64, n: usize, seed: u64, terms: usize) -> PyResult<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| sample_pg(b, c, terms, &mut rng).map_err(py_err))
        .collect()
}

#[pymodule]
fn hls(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit_cpt, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_polya_gamma, m)?)?;
    Ok(())
}
