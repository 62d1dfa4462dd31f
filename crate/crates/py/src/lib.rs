//! Python bindings: germs, schedules, divisor tables and the Siegel run.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use kam_core::arnold::bruno_sum as core_bruno_sum;
use kam_core::cli::{parse_sequence, parse_theta};
use kam_core::instances::siegel::{self, SiegelConfig};
use kam_core::schedule::{build_schedule, Exponents, ScheduleParams};
use kam_core::spaces::CoeffSeries;
use kam_core::transcript::{to_csv, TranscriptRow};
use kam_core::{KamError, Scale};

create_exception!(kam_py, KamException, PyException);
create_exception!(kam_py, ResonanceError, KamException);
create_exception!(kam_py, NotTamedError, KamException);

fn to_py(err: KamError) -> PyErr {
    let msg = err.to_string();
    match err {
        KamError::Resonance { .. } => ResonanceError::new_err(msg),
        KamError::NotTamed(_) => NotTamedError::new_err(msg),
        _ => KamException::new_err(msg),
    }
}

/// A truncated power series `sum_j a_j z^j`.
#[pyclass(name = "CoeffSeries", from_py_object)]
#[derive(Clone)]
struct PyCoeffSeries {
    inner: CoeffSeries,
}

#[pymethods]
impl PyCoeffSeries {
    #[new]
    fn new(coeffs: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self {
            inner: CoeffSeries::new(coeffs).map_err(to_py)?,
        })
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree_cap()
    }

    fn coeffs(&self) -> Vec<Complex64> {
        self.inner.coeffs().to_vec()
    }

    /// `sum_j |a_j| s^j`.
    fn norm(&self, s: f64) -> PyResult<f64> {
        if !(s > 0.0) {
            return Err(KamException::new_err(format!("scale {s} must be positive")));
        }
        Ok(self.inner.norm_at(s))
    }

    /// `self(inner(z))`.
    fn compose(&self, inner: &PyCoeffSeries) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.compose(&inner.inner).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("CoeffSeries(degree={})", self.inner.degree_cap())
    }
}

/// Convergence schedule of a tamed sequence, e.g. `Schedule("e^(1.5^n)", 0.5)`.
#[pyclass(name = "Schedule")]
struct PySchedule {
    inner: kam_core::schedule::Schedule,
}

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (model, s0, a = 1.5, c_tame = 1.0, horizon = 40))]
    fn new(model: &str, s0: f64, a: f64, c_tame: f64, horizon: usize) -> PyResult<Self> {
        let exps = Exponents {
            k: 0,
            l: 0,
            m: 0,
            d: 0.0,
            mu: 3.0,
        };
        let params = ScheduleParams::new(exps, a, c_tame, horizon);
        let p = params.prepare(&parse_sequence(model).map_err(to_py)?).map_err(to_py)?;
        let inner = build_schedule(&p, Scale::new(s0), &params).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn ln_s_inf(&self) -> f64 {
        self.inner.ln_s_inf
    }

    #[getter]
    fn cutoff_n(&self) -> Option<usize> {
        self.inner.cutoff_n
    }

    #[getter]
    fn invariants_hold(&self) -> bool {
        self.inner.invariants.all_hold()
    }

    fn ln_eps(&self, n: usize) -> PyResult<f64> {
        self.inner
            .ln_eps
            .get(n)
            .copied()
            .ok_or_else(|| KamException::new_err(format!("index {n} beyond the horizon")))
    }
}

/// Small divisors `|lambda^k - lambda|` of a rotation number.
#[pyclass(name = "DivisorTable")]
struct PyDivisorTable {
    inner: siegel::DivisorTable,
}

#[pymethods]
impl PyDivisorTable {
    #[new]
    #[pyo3(signature = (theta, degree = 64, levels = 12))]
    fn new(theta: &str, degree: usize, levels: u32) -> PyResult<Self> {
        let theta = parse_theta(theta).map_err(to_py)?;
        Ok(Self {
            inner: siegel::divisor_table(theta, degree, levels).map_err(to_py)?,
        })
    }

    fn omega(&self, k: usize) -> PyResult<f64> {
        if !(2..=self.inner.max_degree()).contains(&k) {
            return Err(KamException::new_err(format!("degree {k} outside the table")));
        }
        Ok(self.inner.omega(k))
    }

    #[getter]
    fn bruno(&self) -> f64 {
        self.inner.bruno
    }

    /// `p_n` for the tabulated levels.
    fn p(&self) -> Vec<f64> {
        (0..self.inner.p.prefix_len()).map(|n| self.inner.p.value_at(n)).collect()
    }
}

/// Outcome of a Siegel linearization run.
#[pyclass(name = "SiegelReport")]
struct PySiegelReport {
    inner: siegel::SiegelReport,
}

#[pymethods]
impl PySiegelReport {
    #[getter]
    fn steps(&self) -> usize {
        self.inner.outcome.state.transcript.len()
    }

    #[getter]
    fn bounds_ok(&self) -> bool {
        self.inner.bounds_ok()
    }

    #[getter]
    fn deviation(&self) -> f64 {
        self.inner.deviation
    }

    #[getter]
    fn residual_monotone(&self) -> bool {
        self.inner.residual_monotone
    }

    #[getter]
    fn ln_s0(&self) -> f64 {
        self.inner.init.s0.ln()
    }

    /// `ln |beta_n|_{s_n}` per step.
    fn ln_beta_norms(&self) -> Vec<f64> {
        self.inner.beta_norms.iter().map(|m| m.ln()).collect()
    }

    fn h_engine(&self) -> PyCoeffSeries {
        PyCoeffSeries {
            inner: self.inner.h_engine.clone(),
        }
    }

    fn h_oracle(&self) -> PyCoeffSeries {
        PyCoeffSeries {
            inner: self.inner.h_oracle.clone(),
        }
    }

    fn transcript_csv(&self) -> PyResult<String> {
        let rows: Vec<TranscriptRow> = self.inner.outcome.state.transcript.iter().map(TranscriptRow::from).collect();
        to_csv(&rows).map_err(to_py)
    }
}

/// Linearize `lambda z + coeff z^2`.
#[pyfunction]
#[pyo3(signature = (theta = "golden", coeff = 1e-3, degree = 64, steps = 8))]
fn siegel_run(py: Python<'_>, theta: &str, coeff: f64, degree: usize, steps: usize) -> PyResult<PySiegelReport> {
    let theta = parse_theta(theta).map_err(to_py)?;
    let problem = siegel::SiegelProblem::quadratic(theta, coeff, degree).map_err(to_py)?;
    let config = SiegelConfig {
        steps,
        ..SiegelConfig::default()
    };
    let inner = py.detach(|| siegel::siegel_run(&problem, &config)).map_err(to_py)?;
    Ok(PySiegelReport { inner })
}

/// Formal linearization of `lambda z + coeff z^2` by the degree recursion.
#[pyfunction]
#[pyo3(signature = (theta, coeff, degree))]
fn oracle_linearize(theta: &str, coeff: f64, degree: usize) -> PyResult<PyCoeffSeries> {
    let theta = parse_theta(theta).map_err(to_py)?;
    let problem = siegel::SiegelProblem::quadratic(theta, coeff, degree).map_err(to_py)?;
    Ok(PyCoeffSeries {
        inner: siegel::oracle_linearize(&problem).map_err(to_py)?,
    })
}

/// `(e^{t d/dz} u0, u0(z + t))`.
#[pyfunction]
fn shift_exp_demo(u0: &PyCoeffSeries, t: f64, s: f64) -> PyResult<(PyCoeffSeries, PyCoeffSeries)> {
    let (a, b) = kam_core::instances::shift_exp_demo(&u0.inner, t, s).map_err(to_py)?;
    Ok((PyCoeffSeries { inner: a }, PyCoeffSeries { inner: b }))
}

/// Bruno sum of a sequence given in the CLI syntax.
#[pyfunction]
fn bruno_sum(model: &str) -> PyResult<f64> {
    Ok(core_bruno_sum(&parse_sequence(model).map_err(to_py)?))
}

#[pymodule]
fn kam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCoeffSeries>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyDivisorTable>()?;
    m.add_class::<PySiegelReport>()?;
    m.add_function(wrap_pyfunction!(siegel_run, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_linearize, m)?)?;
    m.add_function(wrap_pyfunction!(shift_exp_demo, m)?)?;
    m.add_function(wrap_pyfunction!(bruno_sum, m)?)?;
    m.add("KamException", m.py().get_type::<KamException>())?;
    m.add("ResonanceError", m.py().get_type::<ResonanceError>())?;
    m.add("NotTamedError", m.py().get_type::<NotTamedError>())?;
    Ok(())
}
