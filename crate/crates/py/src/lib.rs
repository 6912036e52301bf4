//! Python bindings: `import pysynergy`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use synergy_tensor::data::{self, ClassContrast, SynthSpec};
use synergy_tensor::error::Error;
use synergy_tensor::experiment::{self, ExperimentConfig};
use synergy_tensor::factorization::{self, FitOptions};
use synergy_tensor::io;
use synergy_tensor::tensor;
use synergy_tensor::tfa::{self, WaveletSpec};
use synergy_tensor::tucker::{self, TuckerRanks};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Dense tensor, first index fastest.
#[pyclass(name = "DenseTensor", module = "pysynergy", from_py_object)]
#[derive(Clone)]
pub struct PyTensor(tensor::DenseTensor);

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        tensor::DenseTensor::new(shape, data)
            .map(PyTensor)
            .map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::load_ntf1(&path).map(PyTensor).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_ntf1(&self.0, &path).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn get(&self, index: Vec<usize>) -> PyResult<f64> {
        if index.len() != self.0.order() || index.iter().zip(self.0.shape()).any(|(i, n)| i >= n) {
            return Err(PyValueError::new_err(format!(
                "index {index:?} out of range"
            )));
        }
        Ok(self.0.get(&index))
    }

    fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    fn unfold(&self, mode: usize) -> PyResult<PyMatrix> {
        tensor::unfold(&self.0, mode).map(PyMatrix).map_err(py_err)
    }

    fn mode_n_product(&self, matrix: &PyMatrix, mode: usize) -> PyResult<PyTensor> {
        tensor::mode_n_product(&self.0, &matrix.0, mode)
            .map(PyTensor)
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("DenseTensor(shape={:?})", self.0.shape())
    }
}

/// Column-major matrix.
#[pyclass(name = "Matrix", module = "pysynergy", from_py_object)]
#[derive(Clone)]
pub struct PyMatrix(tensor::Matrix);

#[pymethods]
impl PyMatrix {
    /// Builds from a list of rows.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        tensor::Matrix::from_rows(&rows)
            .map(PyMatrix)
            .map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.0.rows()).map(|i| self.0.row(i)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Matrix({}x{})", self.0.rows(), self.0.cols())
    }
}

#[pyclass(name = "NmfModel", module = "pysynergy", get_all)]
pub struct PyNmfModel {
    synergy: PyMatrix,
    weights: PyMatrix,
    final_error: f64,
    iterations: usize,
}

#[pyclass(name = "TuckerModel", module = "pysynergy")]
pub struct PyTuckerModel(tucker::TuckerModel);

#[pymethods]
impl PyTuckerModel {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        tucker::TuckerModel::load(&dir)
            .map(PyTuckerModel)
            .map_err(py_err)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.0.save(&dir).map_err(py_err)
    }

    #[getter]
    fn core(&self) -> PyTensor {
        PyTensor(self.0.core.clone())
    }

    #[getter]
    fn factors(&self) -> Vec<PyMatrix> {
        self.0.factors.iter().cloned().map(PyMatrix).collect()
    }

    #[getter]
    fn final_error(&self) -> f64 {
        self.0.final_error
    }

    #[getter]
    fn explained_variance(&self) -> f64 {
        self.0.explained_variance
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    fn reconstruct(&self) -> PyResult<PyTensor> {
        self.0.reconstruct().map(PyTensor).map_err(py_err)
    }

    /// Free-mode factor of `x` with the core and other factors held fixed.
    fn project(&self, x: &PyTensor, free_mode: usize) -> PyResult<PyMatrix> {
        tucker::project(&x.0, &self.0, free_mode)
            .map(PyMatrix)
            .map_err(py_err)
    }
}

fn fit_options(max_iterations: usize, tolerance: f64, seed: u64) -> FitOptions {
    FitOptions {
        max_iterations,
        tolerance,
        seed,
    }
}

#[pyfunction]
#[pyo3(signature = (x, rank, max_iterations=500, tolerance=1e-6, seed=0))]
fn nmf(
    x: &PyMatrix,
    rank: usize,
    max_iterations: usize,
    tolerance: f64,
    seed: u64,
) -> PyResult<PyNmfModel> {
    let m = factorization::nmf(&x.0, rank, &fit_options(max_iterations, tolerance, seed))
        .map_err(py_err)?;
    Ok(PyNmfModel {
        synergy: PyMatrix(m.synergy),
        weights: PyMatrix(m.weights),
        final_error: m.final_error,
        iterations: m.iterations,
    })
}

#[pyfunction]
#[pyo3(signature = (x, ranks, max_iterations=500, tolerance=1e-6, seed=0, starts=1))]
fn ntd(
    x: &PyTensor,
    ranks: Vec<usize>,
    max_iterations: usize,
    tolerance: f64,
    seed: u64,
    starts: usize,
) -> PyResult<PyTuckerModel> {
    let ranks = TuckerRanks::new(ranks).map_err(py_err)?;
    tucker::ntd_multistart(
        &x.0,
        &ranks,
        &fit_options(max_iterations, tolerance, seed),
        starts,
    )
    .map(PyTuckerModel)
    .map_err(py_err)
}

#[pyfunction]
fn reconstruct(core: &PyTensor, factors: Vec<PyMatrix>) -> PyResult<PyTensor> {
    let f: Vec<tensor::Matrix> = factors.into_iter().map(|m| m.0).collect();
    tensor::reconstruct(&core.0, &f)
        .map(PyTensor)
        .map_err(py_err)
}

/// Magnitude scalogram, samples × bins.
#[pyfunction]
#[pyo3(signature = (signal, sample_rate, n_bins=282, f_min=0.5, f_max=50.0))]
fn lognormal_cwt(
    signal: Vec<f64>,
    sample_rate: f64,
    n_bins: usize,
    f_min: f64,
    f_max: f64,
) -> PyResult<PyMatrix> {
    let spec = WaveletSpec {
        n_bins,
        f_min,
        f_max,
        ..Default::default()
    };
    tfa::lognormal_cwt(&signal, sample_rate, &spec)
        .map(PyMatrix)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n_bins=282, f_min=0.5, f_max=50.0))]
fn centre_frequencies(n_bins: usize, f_min: f64, f_max: f64) -> PyResult<Vec<f64>> {
    let spec = WaveletSpec {
        n_bins,
        f_min,
        f_max,
        ..Default::default()
    };
    spec.validate(2.0 * f_max).map_err(py_err)?;
    Ok(spec.centre_frequencies())
}

/// Writes a synthetic dataset; returns the number of epochs.
#[pyfunction]
#[pyo3(signature = (out, subjects=1, seed=0, contrast="full", noise_level=0.05))]
fn synth(
    out: PathBuf,
    subjects: usize,
    seed: u64,
    contrast: &str,
    noise_level: f64,
) -> PyResult<usize> {
    let contrast: ClassContrast = contrast.parse().map_err(py_err)?;
    let spec = SynthSpec {
        subjects,
        seed,
        contrast,
        noise_level,
        ..Default::default()
    };
    let d = data::generate(&spec).map_err(py_err)?;
    std::fs::create_dir_all(&out)
        .map_err(|e| PyIOError::new_err(format!("{}: {e}", out.display())))?;
    data::save_csv(&d, &out).map_err(py_err)?;
    Ok(d.epochs.len())
}

/// Runs both pipelines on a dataset directory; returns (report CSV, summary table).
#[pyfunction]
#[pyo3(signature = (data_dir, seed=0, n_bins=282, k=3))]
fn benchmark(data_dir: PathBuf, seed: u64, n_bins: usize, k: usize) -> PyResult<(String, String)> {
    let d = data::load_csv(&data_dir).map_err(py_err)?;
    let mut cfg = ExperimentConfig {
        seed,
        k,
        ..Default::default()
    };
    cfg.wavelet.n_bins = n_bins;
    let r = experiment::run_comparison(&d, &cfg).map_err(py_err)?;
    Ok((r.to_csv(), r.summary_table()))
}

#[pymodule]
fn pysynergy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyNmfModel>()?;
    m.add_class::<PyTuckerModel>()?;
    m.add_function(wrap_pyfunction!(nmf, m)?)?;
    m.add_function(wrap_pyfunction!(ntd, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(lognormal_cwt, m)?)?;
    m.add_function(wrap_pyfunction!(centre_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    Ok(())
}
