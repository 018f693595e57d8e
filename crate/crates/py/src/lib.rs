//! Python module `spinkernel`.
//!
//! Build with `maturin develop -m crates/py/Cargo.toml`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spinkernel::config::RunConfig;
use spinkernel::fss::{self, DriftData, DriftSource};
use spinkernel::kernel::FidelityKernel;
use spinkernel::{resources, svm, swaptest, Control, Engine, Error, KernelKind};

fn py_err(e: Error) -> PyErr {
    if e.is_config_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn kind_of(name: &str) -> PyResult<KernelKind> {
    match name {
        "global" => Ok(KernelKind::Global),
        "per-site" | "per_site" => Ok(KernelKind::PerSite),
        _ => Err(PyValueError::new_err(format!("unknown kernel kind {name:?}"))),
    }
}

fn engine_of(name: &str) -> PyResult<Engine> {
    match name {
        "analytic" => Ok(Engine::Analytic),
        "ed" => Ok(Engine::ed()),
        _ => Err(PyValueError::new_err(format!("unknown engine {name:?}"))),
    }
}

fn control_of(name: &str) -> PyResult<Control> {
    match name {
        "h" | "field" => Ok(Control::Field),
        "delta" | "anisotropy" => Ok(Control::Anisotropy),
        _ => Err(PyValueError::new_err(format!("unknown control axis {name:?}"))),
    }
}

/// Couplings (γ, Δ, h) on a ring of `n_sites` spins.
#[pyclass(name = "ModelParams", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyModelParams(spinkernel::ModelParams);

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (gamma, h, n_sites, delta = 0.0))]
    fn new(gamma: f64, h: f64, n_sites: usize, delta: f64) -> PyResult<Self> {
        spinkernel::ModelParams::new(gamma, delta, h, n_sites).map(Self).map_err(py_err)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.0.n_sites
    }

    fn __repr__(&self) -> String {
        let p = self.0;
        format!("ModelParams(gamma={}, h={}, n_sites={}, delta={})", p.gamma, p.h, p.n_sites, p.delta)
    }
}

/// Kernel matrix over a list of points, with the engine that produced it.
#[pyclass(name = "GramMatrix", frozen)]
pub struct PyGram {
    inner: spinkernel::GramMatrix,
    engine: Engine,
}

#[pymethods]
impl PyGram {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.len();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("index ({i}, {j}) out of range for size {n}")));
        }
        Ok(self.inner.get(i, j))
    }

    /// Rows as nested lists.
    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.row(i).to_vec()).collect()
    }

    fn min_eigenvalue(&self) -> f64 {
        self.inner.min_eigenvalue()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn is_exact(&self) -> bool {
        self.inner.provenance.is_exact()
    }

    /// (median, q1, q3, iqr) of the off-diagonal upper triangle.
    #[pyo3(signature = (include_diagonal = false))]
    fn stats(&self, include_diagonal: bool) -> PyResult<(f64, f64, f64, f64)> {
        let s = resources::ensemble_stats(&self.inner, include_diagonal).map_err(py_err)?;
        Ok((s.k_repr, s.q1, s.q3, s.iqr))
    }

    /// (s_spread, s_ca); `None` where a bound diverges.
    #[pyo3(signature = (epsilon = 1e-3, confidence = 0.99))]
    fn shot_bounds(&self, epsilon: f64, confidence: f64) -> PyResult<(Option<f64>, Option<f64>)> {
        let s = resources::ensemble_stats(&self.inner, false).map_err(py_err)?;
        let p = resources::BoundParams {
            epsilon,
            p_spread: confidence,
            epsilon_ca: epsilon,
            p_ca: confidence,
        };
        let b = resources::shot_bounds(&s, &p).map_err(py_err)?;
        Ok((b.s_spread.map(|c| c.value), b.s_ca.map(|c| c.value)))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Fidelity |⟨ψ(a)|ψ(b)⟩|² of two ground states.
#[pyfunction]
#[pyo3(signature = (a, b, engine = "analytic"))]
fn fidelity(a: &PyModelParams, b: &PyModelParams, engine: &str) -> PyResult<f64> {
    let k = FidelityKernel::new(engine_of(engine)?, KernelKind::Global);
    k.evaluate(&a.0, &b.0).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (points, kind = "global", engine = "analytic"))]
fn gram(py: Python<'_>, points: Vec<PyModelParams>, kind: &str, engine: &str) -> PyResult<PyGram> {
    let engine = engine_of(engine)?;
    let kind = kind_of(kind)?;
    let pts: Vec<_> = points.iter().map(|p| p.0).collect();
    let inner = py
        .detach(|| spinkernel::gram(&pts, kind, engine))
        .map_err(py_err)?;
    Ok(PyGram { inner, engine })
}

/// SWAP-test estimate of every entry with `shots` shots.
#[pyfunction]
#[pyo3(signature = (gram, shots, seed = 0))]
fn sample_gram(gram: &PyGram, shots: u64, seed: u64) -> PyResult<PyGram> {
    let cfg = swaptest::ShotConfig::new(shots, seed).map_err(py_err)?;
    let inner = swaptest::sample_gram(&gram.inner, &cfg).map_err(py_err)?;
    Ok(PyGram {
        inner,
        engine: gram.engine,
    })
}

#[pyclass(name = "SvmModel", frozen)]
pub struct PySvm {
    inner: svm::SvmModel,
    kernel: FidelityKernel,
}

#[pymethods]
impl PySvm {
    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.inner.alphas.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    #[getter]
    fn support_vectors(&self) -> Vec<usize> {
        self.inner.sv_index.clone()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    /// d(x) along the control axis.
    fn decision(&self, x: f64) -> PyResult<f64> {
        self.inner
            .decision_function(&self.kernel)
            .and_then(|d| d.at_control(x))
            .map_err(py_err)
    }

    /// Zero crossing of d inside (lo, hi).
    fn boundary(&self, lo: f64, hi: f64) -> PyResult<f64> {
        svm::boundary(&self.inner, &self.kernel, (lo, hi)).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Train on a precomputed Gram matrix; labels are ±1 in point order.
#[pyfunction]
#[pyo3(signature = (gram, labels, control = "h", c = svm::DEFAULT_C))]
fn train(gram: &PyGram, labels: Vec<i8>, control: &str, c: f64) -> PyResult<PySvm> {
    let data = svm::LabeledSet::new(gram.inner.points.clone(), labels, control_of(control)?).map_err(py_err)?;
    let opts = svm::TrainOptions {
        c,
        ..svm::TrainOptions::default()
    };
    let inner = svm::train_with(&gram.inner, &data, &opts).map_err(py_err)?;
    Ok(PySvm {
        inner,
        kernel: FidelityKernel::new(gram.engine, gram.inner.kind),
    })
}

/// Drift fit; `model` is "power" (x_c, a, p) or "bkt" (x_c, A, B).
/// Returns (params, sigmas).
#[pyfunction]
#[pyo3(signature = (sizes, estimates, model = "power"))]
fn fit_drift(sizes: Vec<f64>, estimates: Vec<f64>, model: &str) -> PyResult<([f64; 3], [f64; 3])> {
    let data = DriftData::new(sizes, estimates, DriftSource::Synthetic).map_err(py_err)?;
    let r = match model {
        "power" => fss::fit_power(&data, None),
        "bkt" => fss::fit_bkt(&data, None),
        _ => return Err(PyValueError::new_err(format!("unknown drift model {model:?}"))),
    }
    .map_err(py_err)?;
    Ok((r.params, r.sigmas))
}

/// Run every stage for a JSON configuration; returns the manifest as JSON.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = RunConfig::from_json(config_json).map_err(py_err)?;
    let m = py.detach(|| spinkernel::pipeline::cmd_pipeline(cfg)).map_err(py_err)?;
    serde_json::to_string(&m).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "spinkernel")]
fn spinkernel_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Add the classes and functions to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyGram>()?;
    m.add_class::<PySvm>()?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(gram, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gram, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(fit_drift, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
