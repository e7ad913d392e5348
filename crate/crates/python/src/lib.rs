//! Python bindings for the `steadytrunc` crate.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};

use steadytrunc::aggregation::{lumped_rate as lumped_rate_impl, MacroState};
use steadytrunc::bounds::statewise_bounds;
use steadytrunc::generator::{apply_uniform_reentry, build_generator, inboundary_states, SparseGenerator, StateIndex};
use steadytrunc::lyapunov::{LyapunovSpec, DEFAULT_HORIZON};
use steadytrunc::model::{parse_model, ReactionNetwork};
use steadytrunc::oracle::{analytic_outside_mass, analytic_pmf, ssa_occupancy};
use steadytrunc::refinement::{refine as refine_impl, RefinementConfig, RefinementResult};
use steadytrunc::solver::{solve_stationary, SolverMethod};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_method(name: &str) -> PyResult<SolverMethod> {
    name.parse().map_err(value_error)
}

/// A parsed reaction network.
#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: ReactionNetwork,
}

#[pymethods]
impl PyNetwork {
    /// Parses model text.
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyNetwork { inner: parse_model(text).map_err(value_error)? })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(value_error)?;
        Self::new(&text)
    }

    #[getter]
    fn species(&self) -> Vec<String> {
        self.inner.species_names()
    }

    #[getter]
    fn num_reactions(&self) -> usize {
        self.inner.reactions().len()
    }

    /// Change vector of reaction `j`.
    fn change(&self, j: usize) -> PyResult<Vec<i64>> {
        let r = self.inner.reactions().get(j).ok_or_else(|| value_error(format!("no reaction {j}")))?;
        Ok(r.change().to_vec())
    }

    fn propensity(&self, j: usize, x: Vec<i64>) -> PyResult<f64> {
        self.check_state(&x)?;
        if j >= self.inner.reactions().len() {
            return Err(value_error(format!("no reaction {j}")));
        }
        Ok(self.inner.propensity(j, &x))
    }

    /// Drift supremum `c` of the model's Lyapunov function.
    fn drift_constant(&self, epsilon_l: f64) -> PyResult<f64> {
        let spec = LyapunovSpec::new(
            &self.inner,
            self.inner
                .lyapunov()
                .cloned()
                .unwrap_or_else(|| steadytrunc::lyapunov::squared_l2(self.inner.num_species())),
            epsilon_l,
            DEFAULT_HORIZON,
        )
        .map_err(value_error)?;
        Ok(spec.c)
    }

    fn __repr__(&self) -> String {
        format!("Network(species={:?}, reactions={})", self.inner.species_names(), self.inner.reactions().len())
    }
}

impl PyNetwork {
    fn check_state(&self, x: &[i64]) -> PyResult<()> {
        if x.len() != self.inner.num_species() {
            return Err(value_error(format!("expected {} counts, got {}", self.inner.num_species(), x.len())));
        }
        Ok(())
    }
}

fn box_states(network: &PyNetwork, lower: &[i64], upper: &[i64]) -> PyResult<StateIndex> {
    network.check_state(lower)?;
    network.check_state(upper)?;
    if lower.iter().zip(upper).any(|(l, u)| l > u || *l < 0) {
        return Err(value_error("box needs 0 <= lower <= upper"));
    }
    Ok(StateIndex::from_box(lower, upper, |x| network.inner.is_feasible(x)))
}

/// Sparse generator with uniform reentry over a box truncation.
#[pyclass(name = "Generator", frozen)]
struct PyGenerator {
    inner: SparseGenerator,
    states: Vec<Vec<i64>>,
}

#[pymethods]
impl PyGenerator {
    /// Builds the generator of `network` on the box `[lower, upper]`.
    #[new]
    fn new(network: &PyNetwork, lower: Vec<i64>, upper: Vec<i64>) -> PyResult<Self> {
        let states = box_states(network, &lower, &upper)?;
        let t = build_generator(&network.inner, &states);
        let inb = inboundary_states(&network.inner, &states);
        let q = apply_uniform_reentry(&t.generator, &t.outflow, &inb).map_err(value_error)?;
        Ok(PyGenerator { inner: q, states: states.states().to_vec() })
    }

    /// Builds a generator from `(row, col, rate)` off-diagonal triples.
    #[staticmethod]
    fn from_triplets(n: usize, entries: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        if entries.iter().any(|&(r, c, v)| r >= n || c >= n || !(v >= 0.0) || !v.is_finite()) {
            return Err(value_error("entries need indices below n and finite non-negative rates"));
        }
        let q = SparseGenerator::from_triplets(n, entries.into_iter().filter(|(r, c, _)| r != c));
        Ok(PyGenerator { inner: q, states: (0..n as i64).map(|i| vec![i]).collect() })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn states(&self) -> Vec<Vec<i64>> {
        self.states.clone()
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        if row >= self.inner.dim() || col >= self.inner.dim() {
            return Err(value_error("index out of range"));
        }
        Ok(self.inner.get(row, col))
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        self.inner.to_dense()
    }

    /// Stationary distribution; `method` is "auto", "dense" or "iterative".
    #[pyo3(signature = (method = "auto"))]
    fn solve(&self, method: &str) -> PyResult<Vec<f64>> {
        let d = solve_stationary(&self.inner, parse_method(method)?).map_err(runtime_error)?;
        Ok(d.values)
    }
}

/// Result of an adaptive refinement run.
#[pyclass(name = "Refinement", frozen)]
struct PyRefinement {
    inner: RefinementResult,
    network: ReactionNetwork,
}

#[pymethods]
impl PyRefinement {
    #[getter]
    fn complete(&self) -> bool {
        self.inner.complete
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.final_size()
    }

    #[getter]
    fn initial_cells(&self) -> usize {
        self.inner.initial_cells
    }

    /// Lower corners of the final cells (the states themselves once complete).
    #[getter]
    fn states(&self) -> Vec<Vec<i64>> {
        self.inner.partition.cells().iter().map(|c| c.lower().to_vec()).collect()
    }

    /// `(lower, upper)` corners of the final cells.
    #[getter]
    fn cells(&self) -> Vec<(Vec<i64>, Vec<i64>)> {
        self.inner.partition.cells().iter().map(|c| (c.lower().to_vec(), c.upper().to_vec())).collect()
    }

    #[getter]
    fn probabilities(&self) -> Vec<f64> {
        self.inner.distribution.values.clone()
    }

    /// One dict per solve: level, cell_width, states, kept, kept_mass, residual.
    fn reports(&self) -> Vec<HashMap<&'static str, f64>> {
        self.inner
            .reports
            .iter()
            .map(|r| {
                HashMap::from([
                    ("level", r.level as f64),
                    ("cell_width", r.cell_width as f64),
                    ("states", r.states as f64),
                    ("kept", r.kept as f64),
                    ("kept_mass", r.kept_mass),
                    ("residual", r.residual),
                ])
            })
            .collect()
    }

    /// State-wise lower and upper bounds over the final truncation.
    #[pyo3(signature = (method = "auto"))]
    fn bounds(&self, py: Python<'_>, method: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let states = self.truncation()?;
        let m = parse_method(method)?;
        let (r, _) = py.detach(|| statewise_bounds(&self.network, &states, m)).map_err(runtime_error)?;
        Ok((r.lower, r.upper))
    }

    /// Exact probabilities of the final states and the mass outside them,
    /// for networks with a product-Poisson stationary law.
    fn analytic(&self) -> PyResult<(Vec<f64>, f64)> {
        let states = self.truncation()?;
        let pmf = analytic_pmf(&self.network, &states).map_err(value_error)?;
        let outside = analytic_outside_mass(&self.network, &states).map_err(value_error)?;
        Ok((pmf, outside))
    }
}

impl PyRefinement {
    fn truncation(&self) -> PyResult<StateIndex> {
        self.inner.truncation().ok_or_else(|| value_error("the run stopped before reaching unit cells"))
    }
}

/// Runs the adaptive aggregation and truncation pipeline.
#[pyfunction]
#[pyo3(signature = (
    network, epsilon = 1e-2, init_exponent = 7, epsilon_l = 1e-4, method = "auto",
    grid_cells = None, initial_box = None, max_levels = None,
))]
#[allow(clippy::too_many_arguments)]
fn refine(
    py: Python<'_>,
    network: &PyNetwork,
    epsilon: f64,
    init_exponent: u32,
    epsilon_l: f64,
    method: &str,
    grid_cells: Option<Vec<i64>>,
    initial_box: Option<Vec<i64>>,
    max_levels: Option<u32>,
) -> PyResult<PyRefinement> {
    let config = RefinementConfig {
        epsilon,
        init_exponent,
        epsilon_l,
        solver: parse_method(method)?,
        grid_cells,
        initial_box,
        max_levels,
        ..Default::default()
    };
    let net = network.inner.clone();
    let result = py.detach(|| refine_impl(&net, &config)).map_err(|e| {
        if e.is_input_error() {
            value_error(e)
        } else {
            runtime_error(e)
        }
    })?;
    Ok(PyRefinement { inner: result, network: net })
}

/// Time-averaged state occupancy of one seeded SSA trajectory, keyed by
/// state tuples.
#[pyfunction]
#[pyo3(signature = (network, x0, horizon, burn_in = 0.0, seed = 0, max_jumps = u64::MAX))]
fn ssa<'py>(
    py: Python<'py>,
    network: &PyNetwork,
    x0: Vec<i64>,
    horizon: f64,
    burn_in: f64,
    seed: u64,
    max_jumps: u64,
) -> PyResult<Bound<'py, PyDict>> {
    network.check_state(&x0)?;
    let est =
        py.detach(|| ssa_occupancy(&network.inner, &x0, horizon, burn_in, seed, max_jumps)).map_err(value_error)?;
    let out = PyDict::new(py);
    for (x, p) in est.occupancy {
        out.set_item(PyTuple::new(py, x)?, p)?;
    }
    Ok(out)
}

/// Lumped rate of reaction `j` over the box `[lower, upper]`.
#[pyfunction]
fn lumped_rate(network: &PyNetwork, j: usize, lower: Vec<i64>, upper: Vec<i64>) -> PyResult<f64> {
    network.check_state(&lower)?;
    network.check_state(&upper)?;
    if j >= network.inner.reactions().len() || lower.iter().zip(&upper).any(|(l, u)| l > u) {
        return Err(value_error("bad reaction index or box"));
    }
    Ok(lumped_rate_impl(&network.inner, j, &MacroState::new(lower, upper)))
}

#[pymodule]
#[pyo3(name = "steadytrunc")]
fn steadytrunc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyGenerator>()?;
    m.add_class::<PyRefinement>()?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(ssa, m)?)?;
    m.add_function(wrap_pyfunction!(lumped_rate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
