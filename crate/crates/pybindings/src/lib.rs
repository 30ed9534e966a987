//! Python bindings for the binmargin toolkit: margin construction, the
//! typical-table solvers, exact oracles, and samplers. Tables cross the
//! boundary as plain nested lists of 0/1 integers.

use binmargin::analysis::{self, SamplerKind};
use binmargin::entropy;
use binmargin::margins;
use binmargin::mcmc;
use binmargin::oracle;
use num_bigint::{BigInt, BigUint};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn tables_to_lists(tables: Vec<oracle::BinaryTable>) -> Vec<Vec<Vec<u8>>> {
    tables.into_iter().map(|t| t.entries().to_vec()).collect()
}

/// Block-margin family parameters (n, delta, b, c).
#[pyclass(name = "BlockParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBlockParams(margins::BlockParams);

#[pymethods]
impl PyBlockParams {
    #[new]
    fn new(n: usize, delta: f64, b: f64, c: f64) -> PyResult<Self> {
        Ok(Self(margins::BlockParams::new(n, delta, b, c).map_err(value_err)?))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    #[getter]
    fn c(&self) -> f64 {
        self.0.c
    }

    /// Number of heavy rows/columns, floor(n^delta).
    fn heavy_count(&self) -> usize {
        self.0.heavy_count()
    }

    /// The induced margin pair.
    fn margins(&self) -> PyResult<PyMarginPair> {
        Ok(PyMarginPair(margins::build_block_margins(&self.0).map_err(value_err)?))
    }

    /// Regime labels whose hypotheses hold, plus the global (B, C) bound.
    fn classify(&self) -> (Vec<String>, bool) {
        let cl = margins::classify_regime(&self.0);
        let labels = cl
            .regimes
            .iter()
            .map(|r| {
                match r {
                    margins::Regime::BottomRight => "BOTTOM_RIGHT",
                    margins::Regime::TopLeft => "TOP_LEFT",
                    margins::Regime::Side => "SIDE",
                }
                .to_string()
            })
            .collect();
        (labels, cl.global_bound_ok)
    }

    /// Closed-form limits of the block means.
    fn limit_law(&self) -> PyResult<PyLimitLaw> {
        Ok(PyLimitLaw(entropy::limit_law(&self.0).map_err(runtime_err)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "BlockParams(n={}, delta={}, b={}, c={})",
            self.0.n, self.0.delta, self.0.b, self.0.c
        )
    }
}

/// Row and column margin vectors with equal totals.
#[pyclass(name = "MarginPair", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMarginPair(margins::MarginPair);

#[pymethods]
impl PyMarginPair {
    #[new]
    fn new(r: Vec<usize>, c: Vec<usize>) -> PyResult<Self> {
        Ok(Self(margins::MarginPair::new(r, c).map_err(value_err)?))
    }

    #[getter]
    fn r(&self) -> Vec<usize> {
        self.0.rows().to_vec()
    }

    #[getter]
    fn c(&self) -> Vec<usize> {
        self.0.cols().to_vec()
    }

    #[getter]
    fn total(&self) -> usize {
        self.0.total()
    }

    /// Gale-Ryser feasibility: does any 0/1 table have these margins?
    fn is_feasible(&self) -> bool {
        margins::check_feasible(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("MarginPair(r={:?}, c={:?})", self.0.rows(), self.0.cols())
    }
}

/// A solved maximum-entropy typical table.
#[pyclass(name = "TypicalTable", frozen)]
struct PyTypicalTable(entropy::TypicalTable);

#[pymethods]
impl PyTypicalTable {
    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        self.0.z.clone()
    }

    #[getter]
    fn row_duals(&self) -> Vec<f64> {
        self.0.row_duals.clone()
    }

    #[getter]
    fn col_duals(&self) -> Vec<f64> {
        self.0.col_duals.clone()
    }

    #[getter]
    fn entropy(&self) -> f64 {
        self.0.entropy
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    /// g(Z): the log of the upper bound on the number of tables.
    fn log_upper_bound(&self) -> f64 {
        entropy::barvinok_upper_bound(&self.0)
    }
}

/// Two-variable block reduction of the typical table.
#[pyclass(name = "BlockSolution", frozen)]
struct PyBlockSolution(entropy::BlockSolution);

#[pymethods]
impl PyBlockSolution {
    #[getter]
    fn p_var(&self) -> f64 {
        self.0.p_var
    }

    #[getter]
    fn q_var(&self) -> f64 {
        self.0.q_var
    }

    #[getter]
    fn z_tl(&self) -> f64 {
        self.0.z_tl
    }

    #[getter]
    fn z_side(&self) -> f64 {
        self.0.z_side
    }

    #[getter]
    fn z_br(&self) -> f64 {
        self.0.z_br
    }
}

/// Closed-form limits of the block means.
#[pyclass(name = "LimitLaw", frozen)]
struct PyLimitLaw(entropy::LimitLaw);

#[pymethods]
impl PyLimitLaw {
    #[getter]
    fn p_star(&self) -> f64 {
        self.0.p_star
    }

    #[getter]
    fn q_star(&self) -> f64 {
        self.0.q_star
    }

    #[getter]
    fn mean_tl(&self) -> f64 {
        self.0.mean_tl
    }

    #[getter]
    fn mean_side(&self) -> f64 {
        self.0.mean_side
    }

    #[getter]
    fn mean_br(&self) -> f64 {
        self.0.mean_br
    }
}

/// Maximize the Bernoulli entropy over the margins' transportation polytope.
#[pyfunction]
#[pyo3(signature = (margins, tol=1e-10, max_iter=100_000))]
fn solve_typical(margins: &PyMarginPair, tol: f64, max_iter: usize) -> PyResult<PyTypicalTable> {
    Ok(PyTypicalTable(entropy::solve_typical(&margins.0, tol, max_iter).map_err(runtime_err)?))
}

/// Solve the two-equation block system for (P, Q) and the block values.
#[pyfunction]
#[pyo3(signature = (params, tol=1e-10))]
fn solve_block(params: &PyBlockParams, tol: f64) -> PyResult<PyBlockSolution> {
    Ok(PyBlockSolution(entropy::solve_block(&params.0, tol).map_err(runtime_err)?))
}

/// Sum of per-entry Bernoulli entropies (entries strictly inside (0,1)).
#[pyfunction]
fn entropy_g(x: Vec<Vec<f64>>) -> PyResult<f64> {
    entropy::entropy_g(&x).map_err(value_err)
}

/// Exact number of 0/1 tables with the margins, as a Python int.
#[pyfunction]
fn count_tables(margins: &PyMarginPair) -> PyResult<BigUint> {
    Ok(oracle::count_tables(&margins.0).map_err(runtime_err)?.count)
}

/// Every table with the margins, in descending row-major bit order.
#[pyfunction]
#[pyo3(signature = (margins, cap=100_000))]
fn enumerate_tables(margins: &PyMarginPair, cap: usize) -> PyResult<Vec<Vec<Vec<u8>>>> {
    Ok(tables_to_lists(oracle::enumerate_tables(&margins.0, cap).map_err(runtime_err)?))
}

/// k exactly-uniform samples, reproducible from the seed.
#[pyfunction]
fn exact_sample(margins: &PyMarginPair, k: usize, seed: u64) -> PyResult<Vec<Vec<Vec<u8>>>> {
    Ok(tables_to_lists(oracle::exact_sample(&margins.0, seed, k).map_err(runtime_err)?))
}

/// Exact P(X_ij = 1) under the uniform law.
#[pyfunction]
fn exact_marginal(margins: &PyMarginPair, i: usize, j: usize) -> PyResult<f64> {
    oracle::exact_marginal_f64(&margins.0, (i, j)).map_err(runtime_err)
}

/// Exact P(X_ij = 1) as an integer fraction (numerator, denominator).
#[pyfunction]
fn exact_marginal_fraction(
    margins: &PyMarginPair,
    i: usize,
    j: usize,
) -> PyResult<(BigInt, BigInt)> {
    let r = oracle::exact_marginal(&margins.0, (i, j)).map_err(runtime_err)?;
    Ok((r.numer().clone(), r.denom().clone()))
}

/// Exact joint law of cells (row, cols[t]); entry p of the result is the
/// probability of the bit pattern whose bit t is (p >> t) & 1.
#[pyfunction]
fn exact_joint_law(margins: &PyMarginPair, row: usize, cols: Vec<usize>) -> PyResult<Vec<f64>> {
    let law = oracle::exact_joint_law(&margins.0, row, &cols).map_err(runtime_err)?;
    Ok(law.iter().map(oracle::ratio_to_f64).collect())
}

/// k swap-chain samples after burn-in, spaced thin apart.
#[pyfunction]
#[pyo3(signature = (margins, k, seed, burn_in=None, thin=None))]
fn run_chain(
    margins: &PyMarginPair,
    k: usize,
    seed: u64,
    burn_in: Option<u64>,
    thin: Option<u64>,
) -> PyResult<Vec<Vec<Vec<u8>>>> {
    let rec = mcmc::ChainConfig::recommended(&margins.0, seed);
    let cfg = mcmc::ChainConfig {
        burn_in: burn_in.unwrap_or(rec.burn_in),
        thin: thin.unwrap_or(rec.thin),
        seed,
    };
    Ok(tables_to_lists(mcmc::run_chain(&margins.0, &cfg, k).map_err(runtime_err)?))
}

/// k rejection samples off the typical table; returns (tables, total_tries).
#[pyfunction]
#[pyo3(signature = (margins, k, seed, max_tries=10_000_000))]
fn rejection_sample(
    margins: &PyMarginPair,
    k: usize,
    seed: u64,
    max_tries: u64,
) -> PyResult<(Vec<Vec<Vec<u8>>>, u64)> {
    let t = entropy::solve_typical(&margins.0, 1e-10, 100_000).map_err(runtime_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables = Vec::with_capacity(k);
    let mut total_tries = 0u64;
    for _ in 0..k {
        let out = mcmc::bernoulli_rejection_sample(&t, &margins.0, &mut rng, max_tries)
            .map_err(runtime_err)?;
        total_tries += out.tries;
        tables.push(out.table);
    }
    Ok((tables_to_lists(tables), total_tries))
}

/// Check the equal-log-density law of the conditioned Bernoulli matrix on
/// every table with the margins.
#[pyfunction]
#[pyo3(signature = (margins, tol=1e-8))]
fn verify_uniformity<'py>(
    py: Python<'py>,
    margins: &PyMarginPair,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let t = entropy::solve_typical(&margins.0, 1e-12, 100_000).map_err(runtime_err)?;
    let report = oracle::verify_barvinok_uniformity(&margins.0, &t, tol).map_err(runtime_err)?;
    let out = PyDict::new(py);
    out.set_item("table_count", report.table_count)?;
    out.set_item("max_log_density_deviation", report.max_log_density_deviation)?;
    out.set_item("entropy", report.entropy)?;
    out.set_item("log_count", report.log_count)?;
    out.set_item("log_acceptance", report.log_acceptance)?;
    Ok(out)
}

/// TV between an empirical Bernoulli law and Ber(lam), L1 convention.
#[pyfunction]
fn tv_distance_bernoulli(ones: u64, total: u64, lam: f64) -> f64 {
    analysis::tv_distance_bernoulli((ones, total), lam)
}

/// Per-block marginal experiment; sampler is "exact", "mcmc" or "rejection".
#[pyfunction]
fn marginal_experiment<'py>(
    py: Python<'py>,
    params: &PyBlockParams,
    sampler: &str,
    k: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let kind = match sampler {
        "exact" => SamplerKind::Exact,
        "mcmc" => SamplerKind::Mcmc,
        "rejection" => SamplerKind::Rejection,
        other => return Err(value_err(format!("unknown sampler '{other}'"))),
    };
    let reports = analysis::marginal_experiment(&params.0, kind, k, seed).map_err(runtime_err)?;
    reports
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("block", r.block.label())?;
            d.set_item("n", r.n)?;
            d.set_item("k", r.k)?;
            d.set_item("cell", r.cell)?;
            d.set_item("empirical", r.empirical)?;
            d.set_item("cell_empirical", r.cell_empirical)?;
            d.set_item("target", r.target)?;
            d.set_item("tv", r.tv)?;
            d.set_item("stderr", r.stderr)?;
            Ok(d)
        })
        .collect()
}

/// Gelman-Rubin potential scale reduction factor across chains.
#[pyfunction]
fn gelman_rubin(chains: Vec<Vec<f64>>) -> f64 {
    mcmc::gelman_rubin(&chains)
}

#[pymodule]
fn binmargin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBlockParams>()?;
    m.add_class::<PyMarginPair>()?;
    m.add_class::<PyTypicalTable>()?;
    m.add_class::<PyBlockSolution>()?;
    m.add_class::<PyLimitLaw>()?;
    m.add_function(wrap_pyfunction!(solve_typical, m)?)?;
    m.add_function(wrap_pyfunction!(solve_block, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_g, m)?)?;
    m.add_function(wrap_pyfunction!(count_tables, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_tables, m)?)?;
    m.add_function(wrap_pyfunction!(exact_sample, m)?)?;
    m.add_function(wrap_pyfunction!(exact_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(exact_marginal_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(exact_joint_law, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(rejection_sample, m)?)?;
    m.add_function(wrap_pyfunction!(verify_uniformity, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance_bernoulli, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(gelman_rubin, m)?)?;
    Ok(())
}
