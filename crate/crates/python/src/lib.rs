//! Python bindings: generate the synthetic benchmarks, train LSSAE or ERM,
//! predict on unseen domains and move checkpoints between Rust and Python.
//!
//! Features and labels cross the boundary as nested lists. The plain-Rust
//! helpers in [`bridge`] carry all logic so they can be tested without an
//! interpreter.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use evodg::checkpoint::TrainedModel;
use evodg::config::TrainConfig;
use evodg::training::RunRecord;

pub mod bridge {
    //! Interpreter-independent implementations of the Python API.

    use std::path::Path;

    use evodg::checkpoint::{load_checkpoint, save_checkpoint, TrainedModel};
    use evodg::config::TrainConfig;
    use evodg::datasets::{load_dataset, meta_path, save_csv_domains, save_meta, DatasetKind, SplitSpec};
    use evodg::error::{Error, Result};
    use evodg::evaluation::TargetFeatures;
    use evodg::experiment::{target_accuracies, train_algorithm, Algorithm, Splits};
    use evodg::model::RolloutMode;
    use evodg::rng::SeedTree;
    use evodg::training::RunRecord;
    use evodg::Tensor;

    /// A generated benchmark flattened to one row per sample.
    #[derive(Debug, Clone, PartialEq)]
    pub struct Flat {
        pub domain: Vec<usize>,
        pub label: Vec<usize>,
        pub x: Vec<Vec<f64>>,
        pub split: (usize, usize, usize),
    }

    pub fn generate(dataset: &str, seed: u64, out: Option<&Path>) -> Result<Flat> {
        let kind: DatasetKind = dataset.parse()?;
        let data = kind.generate(seed)?;
        if let Some(path) = out {
            save_csv_domains(&data.sequence, path)?;
            save_meta(&data.meta, &meta_path(path))?;
        }
        let mut flat = Flat {
            domain: Vec::new(),
            label: Vec::new(),
            x: Vec::new(),
            split: (data.meta.split.n_source, data.meta.split.n_intermediate, data.meta.split.n_target),
        };
        for d in data.sequence.domains() {
            for (i, &y) in d.y.iter().enumerate() {
                flat.domain.push(d.t);
                flat.label.push(y);
                flat.x.push(d.x.row(i).to_vec());
            }
        }
        Ok(flat)
    }

    pub fn load_splits(data: &Path, split: Option<&str>) -> Result<Splits> {
        let split: Option<SplitSpec> = split.map(str::parse).transpose()?;
        let (seq, spec) = load_dataset(data, split)?;
        Splits::new(&seq, spec)
    }

    /// Config file (or defaults) with optional seed and epoch overrides.
    pub fn config(path: Option<&Path>, seed: Option<u64>, epochs: Option<usize>) -> Result<TrainConfig> {
        let mut cfg = match path {
            Some(p) => TrainConfig::load(p)?.0,
            None => TrainConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(e) = epochs {
            cfg.epochs = e;
        }
        Ok(cfg)
    }

    /// Trains and returns the best-validation model.
    pub fn train(algo: &str, data: &Path, split: Option<&str>, cfg: &TrainConfig) -> Result<(TrainedModel, RunRecord)> {
        let algorithm: Algorithm = algo.parse()?;
        let splits = load_splits(data, split)?;
        let run = train_algorithm(algorithm, &splits, cfg, &mut |_| {})?;
        Ok((run.selected().clone(), run.record))
    }

    pub fn to_tensor(rows: &[Vec<f64>]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::Invalid("a domain needs at least one sample".into()));
        }
        Tensor::from_rows(rows)
    }

    /// Predicted classes for consecutive unlabeled domains, the first at
    /// stamp `start` (counted from the first source domain).
    pub fn predict(
        model: &TrainedModel,
        xs: &[Vec<Vec<f64>>],
        start: usize,
        source_len: usize,
        mode: &str,
        seed: u64,
    ) -> Result<Vec<Vec<usize>>> {
        let mode: RolloutMode = mode.parse()?;
        let (dim, _) = model.io_dims();
        let xs = xs.iter().map(|d| to_tensor(d)).collect::<Result<Vec<_>>>()?;
        if let Some(bad) = xs.iter().find(|x| x.cols() != dim) {
            return Err(Error::Shape(format!("model expects {dim} features, got {}", bad.cols())));
        }
        let target = TargetFeatures { start, xs };
        let opts = evodg::evaluation::InferenceOptions {
            source_len,
            mode,
            temperature: 1.0,
        };
        let mut rng = SeedTree::new(seed).child("inference").rng();
        model.predictor().predict(&target, opts, &mut rng)
    }

    /// Per-domain target accuracy (%) on a data file.
    pub fn evaluate(model: &TrainedModel, data: &Path, split: Option<&str>, mode: &str, seed: u64) -> Result<Vec<f64>> {
        let splits = load_splits(data, split)?;
        let (dim, classes) = model.io_dims();
        if dim != splits.target.dim() || classes != splits.target.classes() {
            return Err(Error::Shape(format!(
                "model expects {dim} features and {classes} classes, data has {} and {}",
                splits.target.dim(),
                splits.target.classes()
            )));
        }
        target_accuracies(model, &splits, mode.parse()?, 1.0, seed)
    }

    pub fn save(model: &TrainedModel, cfg: &TrainConfig, epoch: usize, path: &Path) -> Result<()> {
        save_checkpoint(&model.to_checkpoint(cfg, epoch), path)
    }

    pub fn load(path: &Path) -> Result<(TrainedModel, TrainConfig, usize)> {
        let ck = load_checkpoint(path)?;
        Ok((TrainedModel::from_checkpoint(&ck)?, ck.config, ck.epoch))
    }
}

fn to_py(e: evodg::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// A trained LSSAE or ERM model.
#[pyclass(name = "Model", module = "evodg_py")]
pub struct PyModel {
    model: TrainedModel,
    config: TrainConfig,
    epoch: usize,
    record: Option<RunRecord>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (model, config, epoch) = bridge::load(&path).map_err(to_py)?;
        Ok(Self {
            model,
            config,
            epoch,
            record: None,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        bridge::save(&self.model, &self.config, self.epoch, &path).map_err(to_py)
    }

    /// `"lssae"` or `"erm"`.
    #[getter]
    fn algorithm(&self) -> &'static str {
        self.model.algorithm()
    }

    /// `(feature dimension, class count)`.
    #[getter]
    fn io_dims(&self) -> (usize, usize) {
        self.model.io_dims()
    }

    /// Per-epoch validation accuracy of the training run, if this model was
    /// trained in this session.
    #[getter]
    fn val_accuracies(&self) -> Option<Vec<Option<f64>>> {
        self.record
            .as_ref()
            .map(|r| r.epochs.iter().map(|e| e.val_acc).collect())
    }

    #[pyo3(signature = (xs, start, source_len, mode = "mean", seed = 0))]
    fn predict(
        &self,
        xs: Vec<Vec<Vec<f64>>>,
        start: usize,
        source_len: usize,
        mode: &str,
        seed: u64,
    ) -> PyResult<Vec<Vec<usize>>> {
        bridge::predict(&self.model, &xs, start, source_len, mode, seed).map_err(to_py)
    }

    #[pyo3(signature = (data, split = None, mode = "mean", seed = 0))]
    fn evaluate(&self, data: PathBuf, split: Option<&str>, mode: &str, seed: u64) -> PyResult<Vec<f64>> {
        bridge::evaluate(&self.model, &data, split, mode, seed).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let (d, c) = self.model.io_dims();
        format!("Model(algorithm={:?}, features={d}, classes={c})", self.model.algorithm())
    }
}

/// Generates a benchmark; returns a dict with `domain`, `label`, `x` and
/// `split`. With `out`, also writes the CSV and its metadata sidecar.
#[pyfunction]
#[pyo3(signature = (dataset, seed = 0, out = None))]
fn generate(py: Python<'_>, dataset: &str, seed: u64, out: Option<PathBuf>) -> PyResult<Py<pyo3::types::PyDict>> {
    let flat = bridge::generate(dataset, seed, out.as_deref()).map_err(to_py)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("domain", flat.domain)?;
    d.set_item("label", flat.label)?;
    d.set_item("x", flat.x)?;
    d.set_item("split", flat.split)?;
    Ok(d.unbind())
}

/// Trains on a data file and returns the best-validation model.
#[pyfunction]
#[pyo3(signature = (data, config = None, algo = "lssae", split = None, seed = None, epochs = None))]
fn train(
    py: Python<'_>,
    data: PathBuf,
    config: Option<PathBuf>,
    algo: &str,
    split: Option<&str>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> PyResult<PyModel> {
    let cfg = bridge::config(config.as_deref(), seed, epochs).map_err(to_py)?;
    let split = split.map(str::to_string);
    let (model, record) = py
        .detach(|| bridge::train(algo, &data, split.as_deref(), &cfg))
        .map_err(to_py)?;
    let epoch = record.best_epoch.unwrap_or(cfg.epochs);
    Ok(PyModel {
        model,
        config: cfg,
        epoch,
        record: Some(record),
    })
}

#[pymodule]
fn evodg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
