//! Python bindings. Chains are `Kernel` or `Generator` objects; measures and
//! state functions are plain float lists in state order; results come back as
//! dicts built from the same JSON the CLI prints.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyList;

use ergocert_core::certificates::{self, ConditionId, IndexMethod};
use ergocert_core::pipeline::{self, CertifyParams, Config, Inputs};
use ergocert_core::scenario::{self, Scenario};
use ergocert_core::{
    convergence, harnack, semigroup, solver, Generator as CoreGenerator, Kernel as CoreKernel, KernelKind, Matrix, Measure,
    RowSumPolicy, Semigroup, StateFn, StateSet, StateSpace,
};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    if let Ok(s) = obj.extract::<String>() {
        return serde_json::from_str(&s).map_err(err);
    }
    let s: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(err)
}

fn space_of(states: Option<Vec<String>>, n: usize) -> PyResult<StateSpace> {
    match states {
        Some(s) => StateSpace::new(s).map_err(err),
        None => Ok(StateSpace::indexed(n)),
    }
}

/// Transition kernel on a labelled finite state space.
#[pyclass(name = "Kernel", module = "ergocert", skip_from_py_object)]
#[derive(Clone)]
pub struct PyKernel {
    inner: CoreKernel,
}

#[pymethods]
impl PyKernel {
    /// Rows must sum to one unless `sub_markovian` is set.
    #[new]
    #[pyo3(signature = (rows, states=None, sub_markovian=false))]
    fn new(rows: Vec<Vec<f64>>, states: Option<Vec<String>>, sub_markovian: bool) -> PyResult<Self> {
        let space = space_of(states, rows.len())?;
        let kind = if sub_markovian { KernelKind::SubMarkovian } else { KernelKind::Markovian };
        let m = Matrix::from_rows(&rows).map_err(err)?;
        Ok(PyKernel { inner: CoreKernel::new(space, m, kind, RowSumPolicy::Reject).map_err(err)? })
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.space().labels().to_vec()
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.matrix().to_rows()
    }

    #[getter]
    fn sub_markovian(&self) -> bool {
        self.inner.kind() == KernelKind::SubMarkovian
    }

    fn __len__(&self) -> usize {
        self.inner.size()
    }

    fn power(&self, n: u64) -> Self {
        PyKernel { inner: self.inner.power(n) }
    }

    fn __repr__(&self) -> String {
        format!("Kernel(states={}, sub_markovian={})", self.inner.size(), if self.sub_markovian() { "True" } else { "False" })
    }
}

/// Conservative rate matrix of a continuous-time chain.
#[pyclass(name = "Generator", module = "ergocert", skip_from_py_object)]
#[derive(Clone)]
pub struct PyGenerator {
    inner: CoreGenerator,
}

#[pymethods]
impl PyGenerator {
    #[new]
    #[pyo3(signature = (rates, states=None))]
    fn new(rates: Vec<Vec<f64>>, states: Option<Vec<String>>) -> PyResult<Self> {
        let space = space_of(states, rates.len())?;
        let m = Matrix::from_rows(&rates).map_err(err)?;
        Ok(PyGenerator { inner: CoreGenerator::new(space, m, None).map_err(err)? })
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.space().labels().to_vec()
    }

    #[getter]
    fn rates(&self) -> Vec<Vec<f64>> {
        self.inner.rates().to_rows()
    }

    /// `P_t = exp(tQ)`.
    fn transition_at(&self, t: f64) -> PyResult<PyKernel> {
        Ok(PyKernel { inner: self.inner.transition_at(t).map_err(err)? })
    }

    fn uniformized(&self) -> PyKernel {
        PyKernel { inner: self.inner.uniformized() }
    }

    fn __len__(&self) -> usize {
        self.inner.size()
    }
}

fn chain_of(obj: &Bound<'_, PyAny>) -> PyResult<Semigroup> {
    if let Ok(k) = obj.extract::<PyRef<PyKernel>>() {
        return Ok(Semigroup::Discrete(k.inner.clone()));
    }
    if let Ok(g) = obj.extract::<PyRef<PyGenerator>>() {
        return Ok(Semigroup::Continuous(g.inner.clone()));
    }
    Err(PyValueError::new_err("expected a Kernel or a Generator"))
}

fn kernel_of(obj: &Bound<'_, PyAny>) -> PyResult<CoreKernel> {
    match chain_of(obj)? {
        Semigroup::Discrete(k) => Ok(k),
        Semigroup::Continuous(_) => Err(PyValueError::new_err("expected a Kernel")),
    }
}

fn measure(space: &StateSpace, w: Vec<f64>) -> PyResult<Measure> {
    Measure::new(space.clone(), w).map_err(err)
}

/// `float("inf")` entries are allowed.
fn statefn(space: &StateSpace, v: Vec<f64>) -> PyResult<StateFn> {
    StateFn::extended(space.clone(), v).map_err(err)
}

/// Members given as labels or as indices.
fn stateset(space: &StateSpace, members: &Bound<'_, PyAny>) -> PyResult<StateSet> {
    let mut idx = Vec::new();
    for item in members.try_iter()? {
        let item = item?;
        match item.extract::<usize>() {
            Ok(i) => idx.push(i),
            Err(_) => idx.push(space.index_of(&item.extract::<String>()?).map_err(err)?),
        }
    }
    StateSet::new(space.clone(), idx).map_err(err)
}

/// Names accepted by `certify`.
#[pyfunction]
fn condition_ids() -> Vec<&'static str> {
    ConditionId::ALL.iter().map(|c| c.as_str()).collect()
}

/// Runs one checker and returns its certificate as a dict. `params` uses the
/// same keys as the CLI's `--params` file.
#[pyfunction]
#[pyo3(signature = (condition, chain, m=None, v=None, set=None, b=None, rho=None, q=None, params=None, constants=None))]
#[allow(clippy::too_many_arguments)]
fn certify<'py>(
    py: Python<'py>,
    condition: &str,
    chain: &Bound<'py, PyAny>,
    m: Option<Vec<f64>>,
    v: Option<Vec<f64>>,
    set: Option<&Bound<'py, PyAny>>,
    b: Option<Vec<f64>>,
    rho: Option<Vec<f64>>,
    q: Option<&Bound<'py, PyAny>>,
    params: Option<&Bound<'py, PyAny>>,
    constants: Option<BTreeMap<String, f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let id = ConditionId::parse(condition).ok_or_else(|| PyValueError::new_err(format!("unknown condition {condition:?}")))?;
    let mut inp = Inputs::new(chain_of(chain)?);
    let space = inp.chain.space().clone();
    inp.m = m.map(|w| measure(&space, w)).transpose()?;
    inp.v = v.map(|w| statefn(&space, w)).transpose()?;
    inp.set = set.map(|s| stateset(&space, s)).transpose()?;
    inp.b_fn = b.map(|w| statefn(&space, w)).transpose()?;
    inp.rho = rho.map(|w| statefn(&space, w)).transpose()?;
    inp.q = q.map(kernel_of).transpose()?;
    inp.constants = constants.unwrap_or_default();
    let prm: CertifyParams = match params {
        Some(p) => serde_json::from_value(from_py(p)?).map_err(err)?,
        None => CertifyParams::default(),
    };
    let cert = pipeline::certify(id, &inp, &prm).map_err(err)?;
    to_py(py, &cert.to_json())
}

/// Invariant probabilities (`m` omitted) or the Cesaro-adjoint solution with
/// respect to `m`.
#[pyfunction]
#[pyo3(signature = (chain, m=None, tol=1e-12, max_n=65536))]
fn invariant<'py>(py: Python<'py>, chain: &Bound<'py, PyAny>, m: Option<Vec<f64>>, tol: f64, max_n: u64) -> PyResult<Bound<'py, PyAny>> {
    let chain = chain_of(chain)?;
    let res = match (&chain, m) {
        (Semigroup::Continuous(_), _) => solver::solve_continuous(&chain).map_err(err)?,
        (Semigroup::Discrete(p), None) => solver::solve_eigen(p).map_err(err)?,
        (Semigroup::Discrete(p), Some(w)) => {
            vec![solver::solve_cesaro_adjoint(p, &measure(p.space(), w)?, tol, max_n).map_err(err)?]
        }
    };
    to_py(py, &serde_json::Value::Array(res.iter().map(|r| r.to_json()).collect()))
}

#[pyfunction]
#[pyo3(signature = (chain, m, horizon=256))]
fn index_profile<'py>(py: Python<'py>, chain: &Bound<'py, PyAny>, m: Vec<f64>, horizon: usize) -> PyResult<Bound<'py, PyAny>> {
    let chain = chain_of(chain)?;
    let m = measure(chain.space(), m)?;
    let grid = certificates::default_eps_grid(&m).map_err(err)?;
    let prof = certificates::index_profile(&chain, &m, &grid, horizon, IndexMethod::Both).map_err(err)?;
    let v = serde_json::json!({ "profile": prof, "certificate": prof.certificate() });
    to_py(py, &v)
}

/// `mu alpha R_alpha`, normalized when asked.
#[pyfunction]
#[pyo3(signature = (chain, mu, alpha=1.0, normalize=false))]
fn auxiliary_measure(chain: &Bound<'_, PyAny>, mu: Vec<f64>, alpha: f64, normalize: bool) -> PyResult<Vec<f64>> {
    let chain = chain_of(chain)?;
    let mu = measure(chain.space(), mu)?;
    Ok(semigroup::auxiliary_measure(&chain, &mu, alpha, normalize).map_err(err)?.weights().to_vec())
}

/// Scaled resolvent `alpha R_alpha` as a kernel.
#[pyfunction]
fn resolvent(chain: &Bound<'_, PyAny>, alpha: f64) -> PyResult<PyKernel> {
    Ok(PyKernel { inner: chain_of(chain)?.resolvent(alpha).map_err(err)?.scaled })
}

/// Sharp Harnack constant `M_p(x, y)`; `inf` when the supports do not nest.
#[pyfunction]
#[pyo3(signature = (kernel, x, y, p=2.0))]
fn harnack_constant(kernel: &Bound<'_, PyAny>, x: &str, y: &str, p: f64) -> PyResult<f64> {
    let k = kernel_of(kernel)?;
    let (x, y) = (k.space().resolve(x).map_err(err)?, k.space().resolve(y).map_err(err)?);
    Ok(harnack::harnack_constant(&k, x, y, p).map_err(err)?.value)
}

/// `rho P + (1 - rho) Q`, with `Q` the identity when omitted.
#[pyfunction]
#[pyo3(signature = (kernel, rho, q=None))]
fn perturb(kernel: &Bound<'_, PyAny>, rho: Vec<f64>, q: Option<&Bound<'_, PyAny>>) -> PyResult<PyKernel> {
    let k = kernel_of(kernel)?;
    let rho = statefn(k.space(), rho)?;
    let q = q.map(kernel_of).transpose()?;
    Ok(PyKernel { inner: harnack::perturb_with(&k, &rho, q.as_ref()).map_err(err)? })
}

/// Weighted gap norms over `n_grid` and the geometric fit.
#[pyfunction]
#[pyo3(signature = (kernel, m, v=None, n_grid=None))]
fn decay_report<'py>(
    py: Python<'py>,
    kernel: &Bound<'py, PyAny>,
    m: Vec<f64>,
    v: Option<Vec<f64>>,
    n_grid: Option<Vec<u64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let k = kernel_of(kernel)?;
    let m = measure(k.space(), m)?;
    let v = match v {
        Some(v) => statefn(k.space(), v)?,
        None => StateFn::constant(k.space(), 0.0),
    };
    let rep = convergence::decay_report(&k, &m, &v, &n_grid.unwrap_or_else(convergence::default_n_grid)).map_err(err)?;
    to_py(py, &serde_json::to_value(&rep).map_err(err)?)
}

/// Verdicts of the four equivalent tests on one discrete chain.
#[pyfunction]
#[pyo3(signature = (kernel, m, horizon=256))]
fn four_way<'py>(py: Python<'py>, kernel: &Bound<'py, PyAny>, m: Vec<f64>, horizon: usize) -> PyResult<Bound<'py, PyAny>> {
    let k = kernel_of(kernel)?;
    let m = measure(k.space(), m)?;
    let a = pipeline::four_way(&k, &m, horizon).map_err(err)?;
    to_py(py, &serde_json::to_value(&a).map_err(err)?)
}

/// Builds a scenario. Returns `(chain, companions)` where companions holds
/// `m`, `v`, `set`, `b`, `rho`, named measures and constants.
#[pyfunction]
fn generate<'py>(py: Python<'py>, scenario: &Bound<'py, PyAny>) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let s: Scenario = serde_json::from_value(from_py(scenario)?).map_err(err)?;
    let b = scenario::generate(&s).map_err(err)?;
    let chain: Bound<'py, PyAny> = match &b.chain {
        Semigroup::Discrete(k) => Bound::new(py, PyKernel { inner: k.clone() })?.into_any(),
        Semigroup::Continuous(g) => Bound::new(py, PyGenerator { inner: g.clone() })?.into_any(),
    };
    let f = |x: &Option<StateFn>| x.as_ref().map(|f| f.values().iter().map(|&v| if v.is_finite() { Some(v) } else { None }).collect::<Vec<_>>());
    let named: BTreeMap<_, _> = b.measures.iter().map(|(k, m)| (k.clone(), m.weights().to_vec())).collect();
    let comp = serde_json::json!({
        "m": b.m.weights(),
        "v": f(&b.v),
        "set": b.set.as_ref().map(|s| s.labels()),
        "b": f(&b.b_fn),
        "rho": f(&b.rho),
        "measures": named,
        "constants": b.constants,
    });
    let comp = to_py(py, &comp)?;
    // JSON has no infinity; restore it in V
    if let Some(v) = comp.get_item("v").ok().filter(|v| !v.is_none()) {
        let list = v.cast::<PyList>()?;
        for i in 0..list.len() {
            if list.get_item(i)?.is_none() {
                list.set_item(i, f64::INFINITY)?;
            }
        }
    }
    Ok((chain, comp))
}

/// Runs a pipeline config given as a dict or JSON string. The config must use
/// a `scenario`; file inputs resolve against the working directory.
#[pyfunction]
fn run_pipeline<'py>(py: Python<'py>, config: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: Config = serde_json::from_value(from_py(config)?).map_err(err)?;
    let rep = pipeline::run_config(&cfg, std::path::Path::new("")).map_err(err)?;
    to_py(py, &rep.to_json())
}

#[pymodule]
fn ergocert(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyGenerator>()?;
    m.add_function(wrap_pyfunction!(condition_ids, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(invariant, m)?)?;
    m.add_function(wrap_pyfunction!(index_profile, m)?)?;
    m.add_function(wrap_pyfunction!(auxiliary_measure, m)?)?;
    m.add_function(wrap_pyfunction!(resolvent, m)?)?;
    m.add_function(wrap_pyfunction!(harnack_constant, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(decay_report, m)?)?;
    m.add_function(wrap_pyfunction!(four_way, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
