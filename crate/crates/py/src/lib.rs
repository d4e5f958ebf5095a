//! Python bindings: simulation, TransDOA training/inference, transfer
//! calibration, MUSIC and the evaluation metrics.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use doa_core::array_sim::{self, ArrayGeometry, DoaLabel};
use doa_core::autodiff::AdamConfig;
use doa_core::metrics::{self, ERROR_CAP_DEG, SUCCESS_TOLERANCE_DEG};
use doa_core::model::{self, Checkpoint, ModelConfig, TrainConfig, TransDoaParams};
use doa_core::music::{self as music_mod, MusicConfig};
use doa_core::scenario::{preset, ImperfectionKnobs, RunConfig};
use doa_core::transfer::{self, TransferConfig};
use doa_core::DoaError;

fn err(e: DoaError) -> PyErr {
    match e {
        DoaError::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn label_to_vec(l: &DoaLabel) -> Vec<f64> {
    l.flat()
}

/// A labeled SCM dataset.
#[pyclass(module = "transdoa", skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: array_sim::Dataset,
    config: RunConfig,
}

#[pymethods]
impl Dataset {
    /// Simulate `count` records of a preset scenario.
    #[staticmethod]
    #[pyo3(signature = (count, seed=0, scenario="scen1-desk", rho=0.0, snr=None, snapshots=None))]
    fn generate(
        count: usize,
        seed: u64,
        scenario: &str,
        rho: f64,
        snr: Option<f64>,
        snapshots: Option<usize>,
    ) -> PyResult<Self> {
        let mut config = RunConfig::from_preset(&preset(scenario).map_err(err)?, seed);
        config.imperfections = ImperfectionKnobs::with_rho(rho);
        if let Some(s) = snr {
            config.scenario.snr_db = s;
        }
        if let Some(t) = snapshots {
            config.scenario.snapshots = t;
        }
        let imp = config.imperfections.build(&config.scenario.geometry).map_err(err)?;
        let inner = array_sim::generate_dataset(&config.scenario, &imp, count, seed).map_err(err)?;
        Ok(Dataset { inner, config })
    }

    /// Read a `DOA1` file. `scenario` names the preset used to interpret it
    /// and `seed` is the seed it was generated with.
    #[staticmethod]
    #[pyo3(signature = (path, scenario="scen1-desk", seed=0))]
    fn load(path: &str, scenario: &str, seed: u64) -> PyResult<Self> {
        let inner = array_sim::read_dataset(path).map_err(err)?;
        let config = RunConfig::from_preset(&preset(scenario).map_err(err)?, seed);
        Ok(Dataset { inner, config })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        array_sim::write_dataset(path, &self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// First `n` records.
    fn take(&self, n: usize) -> Self {
        Dataset { inner: self.inner.take(n), config: self.config.clone() }
    }

    /// Labels in degrees: θ values, then φ values for 2D data.
    fn labels(&self) -> Vec<Vec<f64>> {
        self.inner.samples.iter().map(|s| label_to_vec(&s.label)).collect()
    }

    /// SCM of record `i` as nested lists of complex numbers.
    fn scm(&self, i: usize) -> PyResult<Vec<Vec<Complex64>>> {
        let s = self.inner.samples.get(i).ok_or_else(|| PyValueError::new_err("record index out of range"))?;
        let m = s.scm.nrows();
        Ok((0..m).map(|r| (0..m).map(|c| s.scm[(r, c)]).collect()).collect())
    }

    #[getter]
    fn elements(&self) -> usize {
        self.inner.header.elements
    }

    #[getter]
    fn sources(&self) -> usize {
        self.inner.header.sources
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.header.rho
    }
}

/// TransDOA parameters with their model configuration.
#[pyclass(module = "transdoa", skip_from_py_object)]
#[derive(Clone)]
struct Model {
    config: ModelConfig,
    params: TransDoaParams,
    seed: u64,
}

#[pymethods]
impl Model {
    /// Fresh model sized for a preset scenario.
    #[staticmethod]
    #[pyo3(signature = (seed=0, scenario="scen1-desk"))]
    fn init(seed: u64, scenario: &str) -> PyResult<Self> {
        let config = preset(scenario).map_err(err)?.model;
        Ok(Model { config, params: TransDoaParams::init(&config, seed), seed })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let c = model::read_checkpoint(path).map_err(err)?;
        Ok(Model { config: c.model, params: c.params, seed: c.seed })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let ckpt = Checkpoint {
            model: self.config,
            seed: self.seed,
            run: serde_json::json!({ "source": "python" }),
            params: self.params.clone(),
        };
        model::write_checkpoint(path, &ckpt).map_err(err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Train in place; returns `(epoch, train_loss, val_loss)` tuples.
    #[pyo3(signature = (train, val, epochs=50, lr=1e-3, batch=64, patience=30, seed=0))]
    fn train(
        &mut self,
        py: Python<'_>,
        train: &Dataset,
        val: &Dataset,
        epochs: usize,
        lr: f64,
        batch: usize,
        patience: usize,
        seed: u64,
    ) -> PyResult<Vec<(usize, f64, f64)>> {
        let tc = TrainConfig { epochs, batch_size: batch, patience, adam: AdamConfig { lr, ..AdamConfig::default() }, seed };
        let out = py
            .detach(|| model::train(&self.config, &self.params, &train.inner, &val.inner, &tc))
            .map_err(err)?;
        self.params = out.params;
        Ok(out.history.iter().map(|r| (r.epoch, r.train_loss, r.val_loss)).collect())
    }

    /// Estimates per record (θ values, then φ values for 2D models).
    fn predict(&self, py: Python<'_>, data: &Dataset) -> PyResult<Vec<Vec<f64>>> {
        let scms: Vec<_> = data.inner.samples.iter().map(|s| &s.scm).collect();
        let est = py.detach(|| model::predict(&self.config, &self.params, &scms)).map_err(err)?;
        Ok(est.iter().map(label_to_vec).collect())
    }

    /// Backbone feature vector of record `i`.
    fn features(&self, data: &Dataset, i: usize) -> PyResult<Vec<f64>> {
        let s = data.inner.samples.get(i).ok_or_else(|| PyValueError::new_err("record index out of range"))?;
        model::feature_extract(&self.config, &self.params, &s.scm).map_err(err)
    }
}

/// Feature-alignment calibration on the first `samples` target records.
/// `pair_seed` defaults to the seed the target was generated with, so each
/// ideal counterpart shares its record's DOAs, signals and noise.
#[pyfunction]
#[pyo3(signature = (source, target, samples, seed=0, alpha=1.0, beta=1.0, epochs=100, lr=1e-3, batches=8, pair_seed=None))]
fn calibrate(
    py: Python<'_>,
    source: &Model,
    target: &Dataset,
    samples: usize,
    seed: u64,
    alpha: f64,
    beta: f64,
    epochs: usize,
    lr: f64,
    batches: usize,
    pair_seed: Option<u64>,
) -> PyResult<Model> {
    if samples > target.inner.len() {
        return Err(PyValueError::new_err("samples exceeds the target dataset size"));
    }
    let tc = TransferConfig { alpha, beta, epochs, batches, seed, adam: AdamConfig { lr, ..AdamConfig::default() }, ..TransferConfig::default() };
    let out = py
        .detach(|| {
            let pairs = transfer::make_pairs(&target.inner.take(samples), &target.config.scenario, pair_seed.unwrap_or(target.config.seed))?;
            transfer::transfer_train(&source.config, &source.params, &pairs, &tc)
        })
        .map_err(err)?;
    Ok(Model { config: source.config, params: out.params, seed })
}

/// MUSIC estimates for every record, with miss flags.
#[pyfunction]
fn music(py: Python<'_>, data: &Dataset) -> PyResult<(Vec<Vec<f64>>, Vec<bool>)> {
    let sc = &data.config.scenario;
    let cfg = MusicConfig { sources: data.inner.header.sources, ..MusicConfig::for_scenario(sc) };
    let out = py
        .detach(|| {
            data.inner
                .samples
                .iter()
                .map(|s| music_mod::music_estimate(&s.scm, &sc.geometry, &cfg))
                .collect::<doa_core::Result<Vec<_>>>()
        })
        .map_err(err)?;
    Ok(out.into_iter().map(|e| (label_to_vec(&e.label), e.miss)).unzip())
}

fn split_label(v: &[f64], two_d: bool) -> DoaLabel {
    if two_d {
        let k = v.len() / 2;
        DoaLabel { thetas: v[..k].to_vec(), phis: Some(v[k..].to_vec()) }
    } else {
        DoaLabel::one_d(v.to_vec())
    }
}

/// Metrics report for estimates against a dataset's labels.
#[pyfunction]
#[pyo3(signature = (data, estimates, misses=None))]
fn evaluate<'py>(
    py: Python<'py>,
    data: &Dataset,
    estimates: Vec<Vec<f64>>,
    misses: Option<Vec<bool>>,
) -> PyResult<Bound<'py, PyDict>> {
    let truths: Vec<DoaLabel> = data.inner.samples.iter().map(|s| s.label.clone()).collect();
    let dims = data.inner.header.label_dims;
    let est: Vec<DoaLabel> = estimates
        .iter()
        .map(|e| split_label(e, dims == 2))
        .collect();
    let misses = misses.unwrap_or_else(|| vec![false; est.len()]);
    let report = metrics::compute_report(&truths, &est, &misses, ERROR_CAP_DEG, SUCCESS_TOLERANCE_DEG).map_err(err)?;
    let value = serde_json::to_value(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let dict = PyDict::new(py);
    if let serde_json::Value::Object(map) = value {
        for (key, v) in map {
            match v.as_u64() {
                Some(n) if v.is_u64() => dict.set_item(key, n)?,
                _ => dict.set_item(key, v.as_f64().unwrap_or(f64::NAN))?,
            }
        }
    }
    Ok(dict)
}

/// Steering vector of an ideal ULA (`radius_or_spacing` = spacing) or UCA.
#[pyfunction]
#[pyo3(signature = (kind, elements, radius_or_spacing, theta, phi=None))]
fn steering(kind: &str, elements: usize, radius_or_spacing: f64, theta: f64, phi: Option<f64>) -> PyResult<Vec<Complex64>> {
    let g = match kind {
        "ula" => ArrayGeometry::ula(elements, radius_or_spacing),
        "uca" => ArrayGeometry::uca(elements, radius_or_spacing),
        other => return Err(PyValueError::new_err(format!("unknown array kind '{other}'"))),
    }
    .map_err(err)?;
    Ok(array_sim::steering(&g, theta, phi).map_err(err)?.iter().copied().collect())
}

#[pyfunction]
fn pit_loss_1d(theta: Vec<f64>, theta_hat: Vec<f64>) -> PyResult<f64> {
    model::pit_loss_1d(&theta, &theta_hat).map_err(err)
}

/// Optimal assignment: column per row and total cost.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<(Vec<usize>, f64)> {
    let a = metrics::hungarian(&cost).map_err(err)?;
    Ok((a.cols, a.cost))
}

#[pyfunction]
#[pyo3(signature = (truth, estimate, c=30.0, p=1))]
fn ospa(truth: Vec<f64>, estimate: Vec<f64>, c: f64, p: u32) -> PyResult<f64> {
    metrics::ospa(&DoaLabel::one_d(truth), &DoaLabel::one_d(estimate), c, p).map_err(err)
}

#[pymodule]
fn transdoa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(music, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(steering, m)?)?;
    m.add_function(wrap_pyfunction!(pit_loss_1d, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(ospa, m)?)?;
    Ok(())
}
