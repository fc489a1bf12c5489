//! Python bindings: the main field type, the linear closed forms, the
//! nonlinear solver and the experiment runner, exposed as `peakon_lab`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use peakon_core::characteristics::{self, Thresholds};
use peakon_core::diagnostics::{riccati_blowup_time, RiccatiComparison};
use peakon_core::experiment;
use peakon_core::field::{make_grid, InitialDatum, PeakedFunction, Side};
use peakon_core::kernel::{self, PeakonParams};
use peakon_core::linear;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// sqrt(c) * exp(-|x - x0|)
#[pyfunction]
#[pyo3(signature = (c, x0, x))]
fn peakon_profile(c: f64, x0: f64, x: f64) -> PyResult<f64> {
    let p = PeakonParams::new(c, x0).map_err(err)?;
    Ok(kernel::peakon_profile(p, x))
}

/// Characteristic position q(t, s) of the linearized flow.
#[pyfunction]
fn char_position(t: f64, s: f64) -> f64 {
    linear::char_position(t, s)
}

/// One-sided peak slope limits (W0+, W0-) of the linearized solution.
#[pyfunction]
fn peak_slope_limits(t: f64, v00: f64, slope_right: f64, slope_left: f64) -> (f64, f64) {
    (
        linear::peak_slope_limit_plus(t, v00, slope_right),
        linear::peak_slope_limit_minus(t, v00, slope_left),
    )
}

/// Blow-up time of the Riccati comparison equation, None when the comparison
/// solution exists globally.
#[pyfunction]
fn riccati_time(eps: f64, y0: f64) -> PyResult<Option<f64>> {
    let r = RiccatiComparison::new(eps, y0).map_err(err)?;
    Ok(riccati_blowup_time(&r))
}

/// Threshold 1 - sqrt((1+40 eps)/(1-12 eps)) below which the comparison
/// guarantees finite-time blow-up.
#[pyfunction]
fn riccati_threshold(eps: f64) -> PyResult<f64> {
    Ok(RiccatiComparison::new(eps, 0.0).map_err(err)?.threshold())
}

fn side_of(name: &str) -> PyResult<Side> {
    match name {
        "plus" | "+" => Ok(Side::Plus),
        "minus" | "-" => Ok(Side::Minus),
        _ => Err(PyValueError::new_err(format!("side must be 'plus' or 'minus', got {name}"))),
    }
}

/// A sampled single-peak perturbation v in H¹ ∩ C¹₀.
#[pyclass(name = "PeakedFunction")]
struct PyPeakedFunction {
    inner: PeakedFunction,
}

#[pymethods]
impl PyPeakedFunction {
    /// Sample a datum family on a clustered grid.
    ///
    /// family: "zero" | "scaled_peakon" | "peaked_exponential" | "gaussian"
    #[staticmethod]
    #[pyo3(signature = (family, amplitude=0.0, beta=1.0, slope_right=0.0, slope_left=0.0,
                        sigma=1.0, center=0.0, l=25.0, n=2000, ratio=1.003))]
    #[allow(clippy::too_many_arguments)]
    fn from_family(
        family: &str,
        amplitude: f64,
        beta: f64,
        slope_right: f64,
        slope_left: f64,
        sigma: f64,
        center: f64,
        l: f64,
        n: usize,
        ratio: f64,
    ) -> PyResult<Self> {
        let datum = match family {
            "zero" => InitialDatum::Zero,
            "scaled_peakon" => InitialDatum::ScaledPeakon { amplitude },
            "peaked_exponential" => {
                InitialDatum::PeakedExponential { amplitude, beta, slope_right, slope_left }
            }
            "gaussian" => InitialDatum::Gaussian { amplitude, sigma, center },
            _ => return Err(PyValueError::new_err(format!("unknown family {family}"))),
        };
        let coords = make_grid(l, n, ratio).map_err(err)?;
        Ok(Self { inner: datum.sample(&coords).map_err(err)? })
    }

    fn energy_e(&self) -> f64 {
        self.inner.energy_e()
    }

    fn energy_f(&self) -> f64 {
        self.inner.energy_f()
    }

    fn h1_norm(&self) -> f64 {
        self.inner.h1_norm()
    }

    fn h1_norm_halfline(&self, side: &str) -> PyResult<f64> {
        Ok(self.inner.h1_norm_halfline(side_of(side)?))
    }

    fn w1inf_norm(&self) -> f64 {
        self.inner.w1inf_norm()
    }

    fn linf_slope(&self, side: &str) -> PyResult<f64> {
        Ok(self.inner.linf_slope(side_of(side)?))
    }

    fn peak_value(&self) -> f64 {
        self.inner.peak_value()
    }

    fn interpolate(&self, x: f64) -> f64 {
        self.inner.interpolate(x)
    }

    fn scaled(&self, lam: f64) -> Self {
        Self { inner: self.inner.scaled(lam) }
    }

    /// Exact linearized evolution to time t (may be negative).
    fn linear_evolution(&self, t: f64) -> Self {
        Self { inner: linear::linear_solution_field(t, &self.inner) }
    }

    /// Nonlinear evolution along characteristics. Returns a summary dict with
    /// the final peak data, conservation drifts and breakdown information.
    #[pyo3(signature = (t_end, dt=1e-3, record_interval=0.05,
                        slope_blowup_threshold=1e6, jacobian_threshold=1e-8))]
    fn evolve_nonlinear<'py>(
        &self,
        py: Python<'py>,
        t_end: f64,
        dt: f64,
        record_interval: f64,
        slope_blowup_threshold: f64,
        jacobian_threshold: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut e = characteristics::init_ensemble(&self.inner);
        let th = Thresholds { slope_blowup: slope_blowup_threshold, jacobian_min: jacobian_threshold };
        let (records, outcome) = characteristics::evolve(&mut e, t_end, dt, &th, record_interval)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let d = PyDict::new(py);
        let first = records.first().unwrap();
        let last = records.last().unwrap();
        d.set_item("t_final", outcome.t_final)?;
        d.set_item("v0", last.v0)?;
        d.set_item("w0_plus", last.w0_plus)?;
        d.set_item("w0_minus", last.w0_minus)?;
        d.set_item("a", last.a)?;
        d.set_item("e_drift", (last.e - first.e).abs() / first.e.abs().max(1e-300))?;
        d.set_item("f_drift", (last.f - first.f).abs() / first.f.abs().max(1e-300))?;
        d.set_item("qs_min", last.qs_min)?;
        match outcome.breakdown {
            Some(b) => {
                d.set_item("breakdown", format!("{:?}", b.kind))?;
                d.set_item("breakdown_t", b.t)?;
            }
            None => d.set_item("breakdown", py.None())?,
        }
        Ok(d)
    }
}

/// Parse a config text, run the scenario and return the report as a dict.
#[pyfunction]
#[pyo3(signature = (config_text, out_dir=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_text: &str,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = experiment::parse_config(config_text).map_err(err)?;
    if let Some(dir) = out_dir {
        cfg.output_dir = dir;
    }
    let outcome = experiment::run(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    for (k, v) in &outcome.report {
        d.set_item(k, v)?;
    }
    d.set_item("passed", outcome.passed)?;
    Ok(d)
}

/// Default config text for a named scenario.
#[pyfunction]
fn scenario_config(scenario: &str) -> PyResult<String> {
    let sc = match scenario {
        "identities" => experiment::Scenario::Identities,
        "linear" => experiment::Scenario::Linear,
        "nonlinear" => experiment::Scenario::Nonlinear,
        "instability" => experiment::Scenario::Instability,
        "blowup" => experiment::Scenario::Blowup,
        "oracle_compare" => experiment::Scenario::OracleCompare,
        _ => return Err(PyValueError::new_err(format!("unknown scenario {scenario}"))),
    };
    Ok(experiment::serialize_config(&experiment::scenario_config(sc)))
}

#[pymodule]
fn peakon_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyPeakedFunction>()?;
    m.add_function(wrap_pyfunction!(peakon_profile, m)?)?;
    m.add_function(wrap_pyfunction!(char_position, m)?)?;
    m.add_function(wrap_pyfunction!(peak_slope_limits, m)?)?;
    m.add_function(wrap_pyfunction!(riccati_time, m)?)?;
    m.add_function(wrap_pyfunction!(riccati_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_config, m)?)?;
    Ok(())
}
