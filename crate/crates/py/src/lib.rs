//! Python bindings. Spectra are passed as plain lists of floats; heavy calls
//! release the GIL.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyLookupError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sffmon::analysis::{self, FeatureOptions, PlateauReference};
use sffmon::noise::{derive_stream, sample_wiener_path, StreamRole, TimeGrid};
use sffmon::runner::{self, RunConfig};
use sffmon::sff::{self, AveragingMode, AveragingSpec, EnsembleSource, NoiseAverage, SffCurve, SffMethod, SffParams, SffVariant};
use sffmon::spectrum::{self, MajoranaNormalization, ParitySector, SpectrumRealization, SykParameters};
use sffmon::trajectory::{self, CoherentGibbsState};
use sffmon::Error;

create_exception!(sffmon, ResourceLimitError, PyRuntimeError);
create_exception!(sffmon, FeatureNotFoundError, PyLookupError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Resource(_) => ResourceLimitError::new_err(e.to_string()),
        Error::FeatureNotFound(_) => FeatureNotFoundError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for sffmon::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, value: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{value}`")))
}

/// One diagonalized spectrum.
#[pyclass(name = "Spectrum", module = "sffmon", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpectrum {
    inner: SpectrumRealization,
}

#[pymethods]
impl PySpectrum {
    #[new]
    fn new(energies: Vec<f64>) -> PyResult<Self> {
        Ok(PySpectrum {
            inner: SpectrumRealization::from_unsorted(energies).py()?,
        })
    }

    /// Realization `index` of the SYK ensemble with Majorana count `n`.
    #[staticmethod]
    #[pyo3(signature = (n_majorana, seed, index=0, coupling_scale=1.0, normalization="unit", sector="full", allow_large=false))]
    #[allow(clippy::too_many_arguments)]
    fn syk(
        py: Python<'_>,
        n_majorana: usize,
        seed: u64,
        index: u64,
        coupling_scale: f64,
        normalization: &str,
        sector: &str,
        allow_large: bool,
    ) -> PyResult<Self> {
        let mut p = SykParameters::new(n_majorana, seed)
            .with_normalization(parse::<MajoranaNormalization>("normalization", normalization)?)
            .with_sector(parse::<ParitySector>("sector", sector)?);
        p.coupling_scale = coupling_scale;
        p.allow_large = allow_large;
        let source = EnsembleSource::Syk(p);
        let inner = py.detach(|| source.realization(seed, index)).py()?;
        Ok(PySpectrum { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (dim, seed, index=0, width=1.0))]
    fn gue(py: Python<'_>, dim: usize, seed: u64, index: u64, width: f64) -> PyResult<Self> {
        let source = EnsembleSource::Gue { dim, width };
        let inner = py.detach(|| source.realization(seed, index)).py()?;
        Ok(PySpectrum { inner })
    }

    /// Binary spectrum file, or CSV when the name ends in `.csv`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            spectrum::import_csv(&path)
        } else {
            spectrum::load_spectrum(&path)
        }
        .py()?;
        Ok(PySpectrum { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        spectrum::save_spectrum(&path, &self.inner).py()
    }

    #[getter]
    fn energies(&self) -> Vec<f64> {
        self.inner.energies().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn symmetry_class(&self) -> String {
        format!("{:?}", self.inner.symmetry_class).to_lowercase()
    }

    /// Consecutive level-spacing ratios `min(s_k, s_{k+1}) / max(...)`.
    #[pyo3(signature = (degeneracy_tol=1e-9))]
    fn spacing_ratios(&self, degeneracy_tol: f64) -> Vec<f64> {
        spectrum::spacing_ratios(self.inner.energies(), degeneracy_tol)
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("Spectrum({})", self.inner)
    }
}

#[pyfunction]
fn sff_unitary(energies: Vec<f64>, beta: f64, t: f64) -> f64 {
    sff::sff_unitary(&energies, beta, t)
}

#[pyfunction]
fn sff_monitored(energies: Vec<f64>, beta: f64, gamma: f64, t: f64, w: f64) -> f64 {
    sff::sff_monitored(&energies, beta, gamma, t, w)
}

#[pyfunction]
fn sff_nojump(energies: Vec<f64>, beta: f64, gamma: f64, t: f64) -> f64 {
    sff::sff_nojump(&energies, beta, gamma, t)
}

#[pyfunction]
#[pyo3(signature = (energies, beta, gamma, eta, t, w, method="direct"))]
fn sff_efficiency(energies: Vec<f64>, beta: f64, gamma: f64, eta: f64, t: f64, w: f64, method: &str) -> PyResult<f64> {
    let method = parse::<SffMethod>("method", method)?;
    let params = SffParams {
        method,
        ..SffParams::new(SffVariant::Efficiency, beta, gamma, eta)
    };
    params.validate().py()?;
    Ok(sff::sff_efficiency(&energies, beta, gamma, eta, t, w, method))
}

#[pyfunction]
#[pyo3(signature = (energies, beta, gamma, t, method="direct"))]
fn sff_dephasing(energies: Vec<f64>, beta: f64, gamma: f64, t: f64, method: &str) -> PyResult<f64> {
    let method = parse::<SffMethod>("method", method)?;
    Ok(sff::sff_dephasing(&energies, beta, gamma, t, method))
}

/// Sorted, strictly increasing evaluation times.
fn grid_from(times: Vec<f64>) -> PyResult<TimeGrid> {
    TimeGrid::explicit(times).py()
}

/// Wiener path `(i, j)` of the trajectory streams under `seed`, sampled at
/// `times`.
#[pyfunction]
#[pyo3(signature = (times, seed, disorder=0, trajectory=0))]
fn wiener_path(times: Vec<f64>, seed: u64, disorder: u64, trajectory: u64) -> PyResult<Vec<f64>> {
    let grid = grid_from(times)?;
    let mut stream = derive_stream(seed, StreamRole::Trajectory, &[disorder, trajectory]);
    Ok(sample_wiener_path(&grid, &mut stream).values().to_vec())
}

/// Ensemble-averaged SFF over SYK (`n_majorana`) or GUE (`dim`) spectra.
/// Returns `(values, stderr)`.
#[pyfunction]
#[pyo3(signature = (
    times, *, n_majorana=None, dim=None, beta=0.0, gamma=0.0, eta=1.0, variant=None,
    n_disorder=1, n_trajectories=1, mode="quenched", noise="analytic", seed=0, workers=None
))]
#[allow(clippy::too_many_arguments)]
fn average_sff(
    py: Python<'_>,
    times: Vec<f64>,
    n_majorana: Option<usize>,
    dim: Option<usize>,
    beta: f64,
    gamma: f64,
    eta: f64,
    variant: Option<&str>,
    n_disorder: u64,
    n_trajectories: u64,
    mode: &str,
    noise: &str,
    seed: u64,
    workers: Option<usize>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let source = match (n_majorana, dim) {
        (Some(n), None) => EnsembleSource::Syk(SykParameters::new(n, seed)),
        (None, Some(d)) => EnsembleSource::Gue { dim: d, width: 1.0 },
        _ => return Err(PyValueError::new_err("give exactly one of n_majorana or dim")),
    };
    let variant = match variant {
        Some(v) => parse::<SffVariant>("variant", v)?,
        None if gamma == 0.0 => SffVariant::Unitary,
        None if eta == 1.0 => SffVariant::Monitored,
        None => SffVariant::Efficiency,
    };
    let params = SffParams::new(variant, beta, gamma, eta);
    let avg = AveragingSpec {
        n_disorder,
        n_trajectories,
        mode: parse::<AveragingMode>("mode", mode)?,
        noise: parse::<NoiseAverage>("noise", noise)?,
    };
    let grid = grid_from(times)?;
    let curve = py
        .detach(|| sff::average_sff(&source, &params, &grid, &avg, seed, workers))
        .py()?;
    Ok((curve.values, curve.stderr))
}

/// Dip and plateau of a curve, as a dict.
#[pyfunction]
#[pyo3(signature = (times, values, window=1, plateau=None, tol=0.2, sustain=10))]
fn extract_features<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    values: Vec<f64>,
    window: usize,
    plateau: Option<f64>,
    tol: f64,
    sustain: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let curve = SffCurve::new(grid_from(times)?, values).py()?;
    let opts = FeatureOptions {
        window,
        plateau: plateau.map_or(PlateauReference::FinalDecade, PlateauReference::Value),
        tol,
        sustain,
    };
    let f = analysis::extract_features(&curve, &opts).py()?;
    let d = PyDict::new(py);
    d.set_item("t_dip", f.t_dip)?;
    d.set_item("dip_value", f.dip_value)?;
    d.set_item("t_plateau", f.t_plateau)?;
    d.set_item("plateau_value", f.plateau_value)?;
    d.set_item("ratio", f.ratio)?;
    Ok(d)
}

#[pyfunction]
fn lambert_w(x: f64) -> PyResult<f64> {
    analysis::lambert_w(x).py()
}

#[pyfunction]
fn dip_time_lambert(gamma: f64, dim: usize, n: f64) -> PyResult<f64> {
    analysis::dip_time_lambert(gamma, dim, n).py()
}

/// Energy populations of the monitored state at `(t, W_t = w)`.
#[pyfunction]
fn populations(energies: Vec<f64>, beta: f64, gamma: f64, eta: f64, t: f64, w: f64) -> PyResult<Vec<f64>> {
    let rho0 = CoherentGibbsState::from_energies(energies.into(), beta).py()?;
    trajectory::closed_form_populations(&rho0, gamma, eta, t, w).py()
}

#[pyfunction]
fn purity(energies: Vec<f64>, beta: f64, gamma: f64, eta: f64, t: f64, w: f64) -> PyResult<f64> {
    let rho0 = CoherentGibbsState::from_energies(energies.into(), beta).py()?;
    trajectory::purity(&rho0, gamma, eta, t, w).py()
}

/// Run an experiment from a JSON config document; returns the run directory.
#[pyfunction]
#[pyo3(signature = (config_json, out=None, seed=None, workers=None))]
fn run(py: Python<'_>, config_json: &str, out: Option<PathBuf>, seed: Option<u64>, workers: Option<usize>) -> PyResult<String> {
    let mut cfg = RunConfig::from_json(config_json).py()?;
    cfg.apply(&runner::Overrides { seed, workers, out });
    let outcome = py.detach(|| runner::run(&cfg)).py()?;
    if let Some(e) = outcome.feature_error() {
        return Err(py_err(e));
    }
    Ok(outcome.run_dir.display().to_string())
}

/// Dry-run report for a JSON config document, as a JSON string.
#[pyfunction]
fn validate(config_json: &str) -> PyResult<String> {
    let cfg = RunConfig::from_json(config_json).py()?;
    let report = runner::validate(&cfg).py()?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "sffmon")]
fn sffmon_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", runner::VERSION)?;
    m.add("ResourceLimitError", m.py().get_type::<ResourceLimitError>())?;
    m.add("FeatureNotFoundError", m.py().get_type::<FeatureNotFoundError>())?;
    m.add_class::<PySpectrum>()?;
    m.add_function(wrap_pyfunction!(sff_unitary, m)?)?;
    m.add_function(wrap_pyfunction!(sff_monitored, m)?)?;
    m.add_function(wrap_pyfunction!(sff_nojump, m)?)?;
    m.add_function(wrap_pyfunction!(sff_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(sff_dephasing, m)?)?;
    m.add_function(wrap_pyfunction!(wiener_path, m)?)?;
    m.add_function(wrap_pyfunction!(average_sff, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(lambert_w, m)?)?;
    m.add_function(wrap_pyfunction!(dip_time_lambert, m)?)?;
    m.add_function(wrap_pyfunction!(populations, m)?)?;
    m.add_function(wrap_pyfunction!(purity, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
