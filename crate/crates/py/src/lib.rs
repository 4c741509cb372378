//! Python bindings: prime fields, shifted power oracles, shift recovery,
//! identity testing and the bounds lab.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use shiftbreak::identity::{test_known_t, test_unknown_t};
use shiftbreak::recovery::{large_e_call_count, randomized_probe_count};
use shiftbreak::roots::all_eth_roots;
use shiftbreak::{
    ExponentParams, HMode, HPolicy, Lemma, PrimeContext, ProbePolicy, ShiftOracle, WitnessSet,
};
use shiftbreak_cli::runner::run_algorithm;
use shiftbreak_cli::{Algorithm, CliError};

fn core_err(err: shiftbreak::Error) -> PyErr {
    match CliError::from_run(err) {
        CliError::Config(msg) => PyValueError::new_err(msg),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Converts a serializable report into plain Python dicts and lists.
fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn exponent(ctx: &PrimeContext, e: u64) -> PyResult<ExponentParams> {
    ExponentParams::new(ctx, e).map_err(core_err)
}

/// The prime field `F_p`.
#[pyclass(frozen, module = "shiftbreak")]
struct Field {
    ctx: PrimeContext,
}

#[pymethods]
impl Field {
    #[new]
    fn new(p: u64) -> PyResult<Self> {
        Ok(Field {
            ctx: PrimeContext::new(p).map_err(core_err)?,
        })
    }

    #[getter]
    fn p(&self) -> u64 {
        self.ctx.p()
    }

    /// Least primitive root.
    #[getter]
    fn generator(&self) -> u64 {
        self.ctx.generator()
    }

    fn add(&self, a: u64, b: u64) -> u64 {
        self.ctx.add(self.ctx.reduce(a), self.ctx.reduce(b))
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        self.ctx.mul(self.ctx.reduce(a), self.ctx.reduce(b))
    }

    fn pow(&self, a: u64, k: u64) -> u64 {
        self.ctx.pow(self.ctx.reduce(a), k)
    }

    fn inv(&self, a: u64) -> PyResult<u64> {
        self.ctx.inv(self.ctx.reduce(a)).map_err(core_err)
    }

    fn __repr__(&self) -> String {
        format!("Field(p={})", self.ctx.p())
    }
}

/// Oracle answering `(x + s)^e mod p`, counting every call.
#[pyclass(frozen, module = "shiftbreak")]
struct Oracle {
    inner: ShiftOracle,
}

#[pymethods]
impl Oracle {
    #[new]
    #[pyo3(signature = (p, e, s, forbidden = None))]
    fn new(p: u64, e: u64, s: u64, forbidden: Option<Vec<u64>>) -> PyResult<Self> {
        let ctx = PrimeContext::new(p).map_err(core_err)?;
        let params = exponent(&ctx, e)?;
        let inner =
            ShiftOracle::new(&ctx, &params, s, forbidden.unwrap_or_default()).map_err(core_err)?;
        Ok(Oracle { inner })
    }

    fn query(&self, x: u64) -> PyResult<u64> {
        self.inner.query(x).map_err(core_err)
    }

    #[getter]
    fn call_count(&self) -> u64 {
        self.inner.call_count()
    }

    #[getter]
    fn p(&self) -> u64 {
        self.inner.context().p()
    }

    #[getter]
    fn e(&self) -> u64 {
        self.inner.params().e()
    }

    fn __repr__(&self) -> String {
        format!(
            "Oracle(p={}, e={}, calls={})",
            self.p(),
            self.e(),
            self.call_count()
        )
    }
}

/// All `x` with `x^e = a` in `F_p`, sorted.
#[pyfunction]
fn eth_roots(p: u64, e: u64, a: u64) -> PyResult<Vec<u64>> {
    let ctx = PrimeContext::new(p).map_err(core_err)?;
    let params = exponent(&ctx, e)?;
    let witnesses = WitnessSet::nonresidues(&ctx, &params).map_err(core_err)?;
    let mut roots = all_eth_roots(&ctx, &params, a, &witnesses).map_err(core_err)?;
    roots.sort_unstable();
    Ok(roots)
}

/// Recovers the hidden shift; returns `{"shift", "phases", "oracle_calls"}`.
#[pyfunction]
#[pyo3(signature = (oracle, algorithm = "zero_call+narrow", epsilon = 0.05, window_cap = None, seed = 0))]
fn recover<'py>(
    py: Python<'py>,
    oracle: &Oracle,
    algorithm: &str,
    epsilon: f64,
    window_cap: Option<u64>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let algorithm = Algorithm::ALL
        .into_iter()
        .find(|a| a.id() == algorithm)
        .ok_or_else(|| PyValueError::new_err(format!("unknown algorithm {algorithm:?}")))?;
    let policy = ProbePolicy {
        epsilon,
        window_cap,
        ..ProbePolicy::default()
    };
    let outcome = py
        .detach(|| run_algorithm(&oracle.inner, algorithm, &policy, seed))
        .map_err(core_err)?;
    let report = to_python(py, &outcome)?;
    report.set_item("oracle_calls", oracle.inner.call_count())?;
    Ok(report)
}

fn h_policy(mode: &str, epsilon: f64, c0: f64) -> PyResult<HPolicy> {
    let mode = match mode {
        "exact" => HMode::Exact,
        "theoretical" => HMode::Theoretical,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    Ok(HPolicy {
        mode,
        epsilon,
        c0,
        ..HPolicy::default()
    })
}

/// Decides `s = t` for a known `t`; returns `{"verdict", "probes", "h", "calls"}`.
#[pyfunction]
#[pyo3(signature = (oracle, t, mode = "exact", epsilon = 0.05, c0 = 1.0))]
fn identity_known_t<'py>(
    py: Python<'py>,
    oracle: &Oracle,
    t: u64,
    mode: &str,
    epsilon: f64,
    c0: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let outcome =
        test_known_t(&oracle.inner, t, &h_policy(mode, epsilon, c0)?).map_err(core_err)?;
    to_python(py, &outcome)
}

/// Decides `s = t` from two oracles.
#[pyfunction]
#[pyo3(signature = (oracle_s, oracle_t, mode = "exact", epsilon = 0.05, c0 = 1.0))]
fn identity_unknown_t<'py>(
    py: Python<'py>,
    oracle_s: &Oracle,
    oracle_t: &Oracle,
    mode: &str,
    epsilon: f64,
    c0: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let policy = h_policy(mode, epsilon, c0)?;
    let outcome = test_unknown_t(&oracle_s.inner, &oracle_t.inner, &policy).map_err(core_err)?;
    to_python(py, &outcome)
}

/// `N(e)`, the longest run of consecutive elements in one coset of `G_e`.
#[pyfunction]
fn longest_coset_run(p: u64, e: u64) -> PyResult<u64> {
    let ctx = PrimeContext::new(p).map_err(core_err)?;
    let params = exponent(&ctx, e)?;
    shiftbreak::lab::longest_coset_run(&ctx, &params).map_err(core_err)
}

/// Probe count `ν` of the randomized algorithm.
#[pyfunction]
fn probe_count(p: u64, e: u64) -> u64 {
    randomized_probe_count(p, e)
}

/// Consecutive calls `m` of the large-`e` algorithm.
#[pyfunction]
fn large_e_calls(p: u64, e: u64) -> u64 {
    large_e_call_count(p, e)
}

/// Evaluates one bounds-lab experiment at a grid point, in parameter order.
#[pyfunction]
fn lab<'py>(py: Python<'py>, lemma: &str, params: Vec<u64>) -> PyResult<Bound<'py, PyAny>> {
    let lemma = Lemma::from_id(lemma)
        .ok_or_else(|| PyValueError::new_err(format!("unknown lemma {lemma:?}")))?;
    let row = py.detach(|| shiftbreak::lab::evaluate(lemma, &params));
    to_python(py, &row)
}

/// Parameter names of a bounds-lab experiment.
#[pyfunction]
fn lab_params(lemma: &str) -> PyResult<Vec<&'static str>> {
    Lemma::from_id(lemma)
        .map(|l| l.param_names().to_vec())
        .ok_or_else(|| PyValueError::new_err(format!("unknown lemma {lemma:?}")))
}

#[pymodule]
#[pyo3(name = "shiftbreak")]
fn shiftbreak_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Field>()?;
    m.add_class::<Oracle>()?;
    m.add_function(wrap_pyfunction!(eth_roots, m)?)?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(identity_known_t, m)?)?;
    m.add_function(wrap_pyfunction!(identity_unknown_t, m)?)?;
    m.add_function(wrap_pyfunction!(longest_coset_run, m)?)?;
    m.add_function(wrap_pyfunction!(probe_count, m)?)?;
    m.add_function(wrap_pyfunction!(large_e_calls, m)?)?;
    m.add_function(wrap_pyfunction!(lab, m)?)?;
    m.add_function(wrap_pyfunction!(lab_params, m)?)?;
    Ok(())
}
