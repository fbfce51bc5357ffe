//! Python bindings for the stacking framework (`import mozart`).

use std::path::PathBuf;

use mozart::data::{self, SplitAssignment, SplitRatios, SynthConfig, SynthModel};
use mozart::metrics::{self, MetricSet};
use mozart::nn::NetworkState;
use mozart::stacker::{self, ExperimentPreset};
use mozart::{Error, Matrix};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(py_err)
}

fn metrics_dict<'py>(py: Python<'py>, m: &MetricSet) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("precision", m.precision)?;
    d.set_item("recall", m.recall)?;
    d.set_item("f1", m.f1)?;
    Ok(d)
}

/// A dense network: the stacking meta-learner or a classification head.
#[pyclass(name = "Network", module = "mozart", from_py_object)]
#[derive(Clone)]
pub struct PyNetwork {
    inner: NetworkState,
}

#[pymethods]
impl PyNetwork {
    /// Meta-learner over `input_dim` base-model probabilities.
    #[staticmethod]
    #[pyo3(signature = (input_dim, seed=0))]
    fn meta(input_dim: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: NetworkState::meta_network(input_dim, seed).map_err(py_err)?,
        })
    }

    /// Classification head over a `feature_dim` backbone embedding.
    #[staticmethod]
    #[pyo3(signature = (feature_dim, seed=0))]
    fn head(feature_dim: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: NetworkState::head_network(feature_dim, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: NetworkState::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Inference-mode probabilities, one per input row.
    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let out = self.inner.predict(&matrix(rows)?).map_err(py_err)?;
        Ok(out.into_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(input_dim={}, layers={}, parameters={})",
            self.inner.input_dim(),
            self.inner.layers().len(),
            self.inner.parameter_count()
        )
    }
}

/// Base-model probabilities with ground-truth labels.
#[pyclass(name = "PredictionTable", module = "mozart", from_py_object)]
#[derive(Clone)]
pub struct PyPredictionTable {
    inner: data::PredictionTable,
}

#[pymethods]
impl PyPredictionTable {
    #[new]
    fn new(
        ids: Vec<String>,
        labels: Vec<u8>,
        model_names: Vec<String>,
        probabilities: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        let n = ids.len();
        let probs = if probabilities.is_empty() {
            Matrix::zeros(0, model_names.len())
        } else {
            matrix(probabilities)?
        };
        if probs.rows() != n {
            return Err(PyValueError::new_err(format!(
                "{n} ids but {} probability rows",
                probs.rows()
            )));
        }
        Ok(Self {
            inner: data::PredictionTable::new(ids, labels, model_names, probs).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: data::PredictionTable::parse(text).map_err(py_err)?,
        })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn model_names(&self) -> Vec<String> {
        self.inner.model_names().to_vec()
    }

    fn column(&self, model: usize) -> PyResult<Vec<f64>> {
        if model >= self.inner.num_models() {
            return Err(PyValueError::new_err(format!("no model column {model}")));
        }
        Ok(self.inner.model_column(model))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Result of one trained preset.
#[pyclass(name = "StackRun", module = "mozart", from_py_object)]
#[derive(Clone)]
pub struct PyStackRun {
    inner: stacker::StackRun,
}

#[pymethods]
impl PyStackRun {
    #[getter]
    fn preset(&self) -> String {
        self.inner.preset.name.clone()
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    #[getter]
    fn val_losses(&self) -> Vec<f64> {
        self.inner.history.val_losses()
    }

    #[getter]
    fn network(&self) -> PyNetwork {
        PyNetwork {
            inner: self.inner.network.clone(),
        }
    }

    /// Meta-model metrics on `"meta_train"`, `"meta_val"` or `"test"`.
    fn metrics<'py>(&self, py: Python<'py>, set: &str) -> PyResult<Bound<'py, PyDict>> {
        let s = match set {
            "meta_train" => &self.inner.meta_train,
            "meta_val" => &self.inner.meta_val,
            "test" => &self.inner.test,
            other => return Err(PyValueError::new_err(format!("unknown set {other:?}"))),
        };
        metrics_dict(py, &s.metrics)
    }

    /// Test metrics of each base model, keyed by name.
    fn base_metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (name, s) in &self.inner.base_test {
            d.set_item(name, metrics_dict(py, &s.metrics)?)?;
        }
        Ok(d)
    }

    fn report(&self) -> PyResult<String> {
        stacker::compare_runs(std::slice::from_ref(&self.inner)).map_err(py_err)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(dir).map_err(py_err)
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: stacker::StackRun::load(dir).map_err(py_err)?,
        })
    }
}

/// Stratified split; returns `(train, validation, test)` id lists.
#[pyfunction]
#[pyo3(signature = (ids, labels, train=0.7, validation=0.2, test=0.1, seed=0))]
fn stratified_split(
    ids: Vec<String>,
    labels: Vec<u8>,
    train: f64,
    validation: f64,
    test: f64,
    seed: u64,
) -> PyResult<(Vec<String>, Vec<String>, Vec<String>)> {
    if ids.len() != labels.len() {
        return Err(PyValueError::new_err("ids and labels differ in length"));
    }
    let registry = data::Registry::from_labels(ids.into_iter().zip(labels)).map_err(py_err)?;
    let s = data::stratified_split(
        &registry,
        SplitRatios {
            train,
            validation,
            test,
        },
        seed,
    )
    .map_err(py_err)?;
    Ok((s.train, s.validation, s.test))
}

/// `(tp, tn, fp, fn)` at `threshold`.
#[pyfunction]
#[pyo3(signature = (labels, probabilities, threshold=metrics::DEFAULT_THRESHOLD))]
fn confusion(
    labels: Vec<u8>,
    probabilities: Vec<f64>,
    threshold: f64,
) -> PyResult<(u64, u64, u64, u64)> {
    let cm = metrics::confusion(&labels, &probabilities, threshold).map_err(py_err)?;
    Ok((
        cm.true_positives,
        cm.true_negatives,
        cm.false_positives,
        cm.false_negatives,
    ))
}

#[pyfunction]
#[pyo3(signature = (labels, probabilities, threshold=metrics::DEFAULT_THRESHOLD))]
fn compute_metrics<'py>(
    py: Python<'py>,
    labels: Vec<u8>,
    probabilities: Vec<f64>,
    threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cm = metrics::confusion(&labels, &probabilities, threshold).map_err(py_err)?;
    metrics_dict(py, &cm.metrics())
}

/// Comparison table from `(name, accuracy, precision, recall)` rows.
#[pyfunction]
fn comparison_report(entries: Vec<(String, f64, f64, f64)>) -> PyResult<String> {
    let entries: Vec<(String, MetricSet)> = entries
        .into_iter()
        .map(|(n, a, p, r)| (n, MetricSet::from_rates(a, p, r)))
        .collect();
    metrics::comparison_report(&entries).map_err(py_err)
}

/// Synthetic base learners with the given target accuracies.
#[pyfunction]
#[pyo3(signature = (accuracies, n_samples=10_000, correlation=0.5, class_balance=0.5, seed=42, names=None))]
fn simulate(
    accuracies: Vec<f64>,
    n_samples: usize,
    correlation: f64,
    class_balance: f64,
    seed: u64,
    names: Option<Vec<String>>,
) -> PyResult<PyPredictionTable> {
    let names = names.unwrap_or_else(|| {
        (1..=accuracies.len())
            .map(|i| format!("model{i}"))
            .collect()
    });
    if names.len() != accuracies.len() {
        return Err(PyValueError::new_err(
            "names and accuracies differ in length",
        ));
    }
    let cfg = SynthConfig {
        n_samples,
        class_balance,
        correlation,
        signal: 1.0,
        seed,
        models: names
            .into_iter()
            .zip(accuracies)
            .map(|(n, a)| SynthModel::with_accuracy(n, a))
            .collect(),
    };
    Ok(PyPredictionTable {
        inner: data::synth_base_learners(&cfg).map_err(py_err)?,
    })
}

/// Splits `table`, trains the named preset and scores it on the test split.
#[pyfunction]
#[pyo3(signature = (table, preset="MOZART2", seed=42, split_seed=0, epochs=None))]
fn run_mozart(
    table: &PyPredictionTable,
    preset: &str,
    seed: u64,
    split_seed: u64,
    epochs: Option<usize>,
) -> PyResult<PyStackRun> {
    let mut p = ExperimentPreset::by_name(preset)
        .map_err(py_err)?
        .with_seed(seed);
    if let Some(e) = epochs {
        p.epochs = e;
    }
    let split: SplitAssignment = data::stratified_split(
        &table.inner.to_registry(),
        SplitRatios::default(),
        split_seed,
    )
    .map_err(py_err)?;
    Ok(PyStackRun {
        inner: stacker::run_mozart(&p, &table.inner, &split).map_err(py_err)?,
    })
}

#[pymodule(name = "mozart")]
fn mozart_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyPredictionTable>()?;
    m.add_class::<PyStackRun>()?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(comparison_report, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_mozart, m)?)?;
    Ok(())
}
