//! Python bindings: synthetic data, model construction and inference,
//! training, metrics, losses and attribute localization.
//!
//! Images cross the boundary as flat `C×H×W` float lists plus a shape, so
//! the module has no array-library dependency.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use wpal::localization::{self, ScoreMatrix};
use wpal::metrics::{self, binarize_rows, EvalReport};
use wpal::model::{ModelConfig, ModelState};
use wpal::synth::{self, AttributeSchema, GenerateOptions};
use wpal::train::{self, LossKind, TrainConfig, WeightVector};
use wpal::{Tensor, WpalError};

fn to_py(e: WpalError) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn image_tensor(data: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<Tensor> {
    Tensor::new(vec![shape.0, shape.1, shape.2], data).map_err(to_py)
}

fn bool_matrix(m: Vec<Vec<f64>>) -> Vec<Vec<bool>> {
    m.into_iter().map(|r| r.into_iter().map(|v| v > 0.5).collect()).collect()
}

/// Architecture and preprocessing settings of a model.
#[pyclass(name = "ModelConfig", from_py_object)]
#[derive(Clone)]
struct PyModelConfig {
    inner: ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    /// Default toy architecture for `num_attributes` outputs.
    #[new]
    #[pyo3(signature = (num_attributes=8, input_size=None, seed=None))]
    fn new(num_attributes: usize, input_size: Option<usize>, seed: Option<u64>) -> PyResult<Self> {
        let mut inner = ModelConfig {
            num_attributes,
            ..ModelConfig::default()
        };
        if let Some(s) = input_size {
            inner.input_size = s;
        }
        if let Some(s) = seed {
            inner.seed = s;
        }
        inner.validate().map_err(to_py)?;
        Ok(PyModelConfig { inner })
    }

    /// Smallest useful network, used for gradient checks.
    #[staticmethod]
    fn tiny(num_attributes: usize) -> Self {
        PyModelConfig {
            inner: ModelConfig::tiny(num_attributes),
        }
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyModelConfig {
            inner: ModelConfig::parse(text).map_err(to_py)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn num_attributes(&self) -> usize {
        self.inner.num_attributes
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.inner.input_size
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Total number of detector bins over the three pyramid layers.
    #[getter]
    fn bin_count(&self) -> usize {
        self.inner.bin_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(num_attributes={}, input_size={}, bins={})",
            self.inner.num_attributes,
            self.inner.input_size,
            self.inner.bin_count()
        )
    }
}

/// Model parameters with inference, checkpointing and training.
#[pyclass(name = "Model")]
struct PyModel {
    inner: ModelState,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<PyModelConfig>) -> PyResult<Self> {
        let cfg = config.map_or_else(ModelConfig::default, |c| c.inner);
        Ok(PyModel {
            inner: ModelState::build(cfg).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: ModelState::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn config(&self) -> PyModelConfig {
        PyModelConfig {
            inner: self.inner.config().clone(),
        }
    }

    /// Attribute probabilities for an already preprocessed `3×H×W` image.
    fn predict(&self, data: Vec<f64>, shape: (usize, usize, usize)) -> PyResult<Vec<f64>> {
        let img = image_tensor(data, shape)?;
        Ok(self.inner.forward(&img).map_err(to_py)?.scores)
    }

    /// Attribute probabilities for a P6 file, rescaled to the model's input size.
    fn predict_file(&self, path: PathBuf) -> PyResult<Vec<f64>> {
        let img = wpal::image::load_image(&path, Some(self.inner.config().input_size)).map_err(to_py)?;
        Ok(self.inner.forward(&img).map_err(to_py)?.scores)
    }

    /// Trains in place; returns `(epoch, mean_loss)` pairs.
    #[pyo3(signature = (dataset, epochs=30, learning_rate=None, loss="weighted", seed=1))]
    fn train(
        &mut self,
        dataset: &PyDataset,
        epochs: usize,
        learning_rate: Option<f64>,
        loss: &str,
        seed: u64,
    ) -> PyResult<Vec<(usize, f64)>> {
        let mut cfg = TrainConfig {
            epochs,
            seed,
            loss: loss.parse().map_err(|e: String| PyValueError::new_err(e))?,
            ..TrainConfig::default()
        };
        if let Some(lr) = learning_rate {
            cfg.learning_rate = lr;
        }
        let examples = dataset.inner.examples(self.inner.config().input_size).map_err(to_py)?;
        let (model, log) = train::train(self.inner.clone(), &examples, &cfg).map_err(to_py)?;
        self.inner = model;
        Ok(log.iter().map(|e| (e.epoch, e.mean_loss)).collect())
    }

    /// mA and example-based criteria on a dataset.
    fn evaluate(&self, dataset: &PyDataset) -> PyResult<Vec<(String, f64)>> {
        let size = self.inner.config().input_size;
        let mut preds = Vec::with_capacity(dataset.inner.len());
        for s in &dataset.inner.samples {
            let (img, _) = s.network_input(size).map_err(to_py)?;
            preds.push(self.inner.forward(&img).map_err(to_py)?.scores);
        }
        let truth = bool_matrix(dataset.inner.labels());
        let r = EvalReport::compute(&binarize_rows(&preds), &truth).map_err(to_py)?;
        Ok(vec![
            ("mA".into(), r.mean_accuracy),
            ("accuracy".into(), r.example.accuracy),
            ("precision".into(), r.example.precision),
            ("recall".into(), r.example.recall),
            ("f1".into(), r.example.f1),
        ])
    }

    fn __repr__(&self) -> String {
        format!("Model(parameters={})", self.inner.params().len())
    }
}

/// Synthetic pedestrians with image-level labels and planted centres.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: synth::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Generates `count` samples from the default schema.
    #[staticmethod]
    #[pyo3(signature = (count, seed=1, min_height=64, max_height=128))]
    fn generate(count: usize, seed: u64, min_height: usize, max_height: usize) -> PyResult<Self> {
        let opts = GenerateOptions {
            count,
            seed,
            min_height,
            max_height,
        };
        Ok(PyDataset {
            inner: synth::generate(&AttributeSchema::default(), &opts).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: synth::read_dataset(&path).map_err(to_py)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        synth::write_dataset(&self.inner, &path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn attribute_names(&self) -> Vec<String> {
        self.inner.schema.names()
    }

    fn labels(&self) -> Vec<Vec<f64>> {
        self.inner.labels()
    }

    /// `(data, (3, H, W))` of sample `index` in `[0, 1]`, original size.
    fn image(&self, index: usize) -> PyResult<(Vec<f64>, (usize, usize, usize))> {
        let s = self
            .inner
            .samples
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("sample {index} out of range")))?;
        let t = s.image.to_tensor();
        Ok((t.data().to_vec(), (3, s.image.height, s.image.width)))
    }

    /// Planted `(attribute, rank, y, x)` centres of sample `index`.
    fn locations(&self, index: usize) -> PyResult<Vec<(usize, usize, f64, f64)>> {
        let s = self
            .inner
            .samples
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("sample {index} out of range")))?;
        Ok(s.locations.iter().map(|p| (p.attribute, p.rank, p.y, p.x)).collect())
    }
}

/// Per-attribute bin statistics (positive/negative averages and their ratio).
#[pyclass(name = "StatsTable")]
struct PyStatsTable {
    inner: localization::StatsTable,
    config: ModelConfig,
}

#[pymethods]
impl PyStatsTable {
    /// Collects bin scores of `model` over `dataset` and averages them per class.
    #[staticmethod]
    fn estimate(model: &PyModel, dataset: &PyDataset) -> PyResult<Self> {
        let examples = dataset.inner.examples(model.inner.config().input_size).map_err(to_py)?;
        let scores = ScoreMatrix::collect(&model.inner, examples.iter().map(|e| &e.image)).map_err(to_py)?;
        Ok(PyStatsTable {
            inner: localization::StatsTable::estimate(&scores, &dataset.inner.labels()).map_err(to_py)?,
            config: model.inner.config().clone(),
        })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv(&self.config)
    }

    /// `(PAve, NAve, RS)` lists for one attribute.
    fn attribute(&self, index: usize) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let s = self
            .inner
            .attributes
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("attribute {index} out of range")))?;
        Ok((s.pave.clone(), s.nave.clone(), s.rs.clone()))
    }

    /// The `k` strongest bins as `(bin, branch, channel, level, rs)`.
    #[allow(clippy::type_complexity)]
    fn rank_bins(&self, attribute: usize, k: usize) -> PyResult<Vec<(usize, usize, usize, usize, f64)>> {
        let s = self
            .inner
            .attributes
            .get(attribute)
            .ok_or_else(|| PyValueError::new_err(format!("attribute {attribute} out of range")))?;
        Ok(localization::rank_bins(s, &self.config, k)
            .iter()
            .map(|r| (r.bin, r.info.branch, r.info.channel, r.info.place.level(), r.rs))
            .collect())
    }
}

/// Localizes one attribute on a preprocessed image.
///
/// Returns `(probability, map, (H, W), centroids)` where `map` is the
/// row-major possibility map and centroids are `(y, x)`, heaviest first.
#[pyfunction]
#[pyo3(signature = (model, stats, data, shape, attribute, k=1))]
#[allow(clippy::type_complexity)]
fn localize(
    model: &PyModel,
    stats: &PyStatsTable,
    data: Vec<f64>,
    shape: (usize, usize, usize),
    attribute: usize,
    k: usize,
) -> PyResult<(f64, Vec<f64>, (usize, usize), Vec<(f64, f64)>)> {
    let img = image_tensor(data, shape)?;
    if attribute >= model.inner.config().num_attributes {
        return Err(PyValueError::new_err(format!("attribute {attribute} out of range")));
    }
    let (_, mut out) =
        localization::localize_image(&model.inner, &stats.inner, &img, &[(attribute, k)]).map_err(to_py)?;
    let r = out.remove(0);
    Ok((
        r.prediction,
        r.map.data().to_vec(),
        (r.map.height(), r.map.width()),
        r.locations.centroids,
    ))
}

/// Label-based mean accuracy of 0/1 matrices.
#[pyfunction]
fn mean_accuracy(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::mean_accuracy(&bool_matrix(pred), &bool_matrix(truth)).map_err(to_py)
}

/// Example-based `(accuracy, precision, recall, f1)` of 0/1 matrices.
#[pyfunction]
fn example_based(pred: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<(f64, f64, f64, f64)> {
    let e = metrics::example_based(&bool_matrix(pred), &bool_matrix(truth)).map_err(to_py)?;
    Ok((e.accuracy, e.precision, e.recall, e.f1))
}

#[pyfunction]
fn cross_entropy(truth: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    train::cross_entropy(&truth, &pred).map_err(to_py)
}

/// Cross-entropy with positive terms scaled by `1/(2w)` and negative terms
/// by `1/(2(1−w))`, `w` being each attribute's positive proportion.
#[pyfunction]
fn weighted_cross_entropy(truth: Vec<f64>, pred: Vec<f64>, weights: Vec<f64>) -> PyResult<f64> {
    train::weighted_cross_entropy(&truth, &pred, &WeightVector(weights)).map_err(to_py)
}

/// `(PAve, NAve, RS)` per bin for an `N×B` score matrix and 0/1 labels.
#[pyfunction]
fn estimate_relationship(scores: Vec<Vec<f64>>, labels: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = ScoreMatrix::from_rows(&scores).map_err(to_py)?;
    let s = localization::estimate_relationship(&m, &labels).map_err(to_py)?;
    Ok((s.pave, s.nave, s.rs))
}

#[pymodule]
fn wpal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyStatsTable>()?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(mean_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(example_based, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_relationship, m)?)?;
    m.add("LOSSES", vec![LossKind::Plain.to_string(), LossKind::Weighted.to_string()])?;
    Ok(())
}
