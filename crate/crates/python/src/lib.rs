//! Python bindings. Indices are 0-based, matrices are lists of row lists.

use cfaid_core::counterexample::{self, AlternativeFactorization};
use cfaid_core::generator;
use cfaid_core::io::ModelBundle;
use cfaid_core::model::AssumptionReport;
use cfaid_core::{oracle, recovery, DEFAULT_TOL};
use cfaid_core::{GeneratorSpec, PatternPolicy, Verdict};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(PyValueError::new_err(format!("{what}: empty matrix")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!(
            "{what}: row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn verdict(v: Verdict) -> Option<bool> {
    v.as_bool()
}

#[pyclass(name = "DesignMatrix", module = "cfaid", frozen)]
struct PyDesign {
    inner: cfaid_core::DesignMatrix,
}

#[pymethods]
impl PyDesign {
    /// Build from a list of 0/1 rows, one per item.
    #[new]
    fn new(rows: Vec<Vec<i64>>) -> PyResult<Self> {
        let inner = cfaid_core::DesignMatrix::new(&rows).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity(k: usize) -> PyResult<Self> {
        let inner = cfaid_core::DesignMatrix::identity(k).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn n_factors(&self) -> usize {
        self.inner.n_factors()
    }

    fn rows(&self) -> Vec<Vec<i64>> {
        self.inner
            .to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(i64::from).collect())
            .collect()
    }

    fn support(&self, factor: usize) -> PyResult<Vec<usize>> {
        self.check_factor(factor)?;
        Ok(self.inner.support(factor))
    }

    /// True iff `masker` masks `masked`: supp(Q_masker) is contained in supp(Q_masked).
    fn masks(&self, masker: usize, masked: usize) -> PyResult<bool> {
        self.inner.masks(masker, masked).map_err(value_error)
    }

    fn realized_patterns(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        self.inner
            .realized_patterns()
            .into_iter()
            .map(|p| (p.factors.into_iter().collect(), p.items))
            .collect()
    }

    fn intersection_set(&self, factor: usize) -> PyResult<Vec<usize>> {
        Ok(self.inner.intersection_set(factor).map_err(value_error)?.into_iter().collect())
    }

    fn theta_identifiable(&self, factor: usize) -> PyResult<bool> {
        self.inner.theta_identifiable(factor).map_err(value_error)
    }

    /// True, False, or None when some column of Q has empty support.
    fn a_identifiable(&self, factor: usize) -> PyResult<Option<bool>> {
        self.inner.a_identifiable(factor).map(verdict).map_err(value_error)
    }

    fn analyze<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.analyze();
        let d = PyDict::new(py);
        d.set_item("j", r.j)?;
        d.set_item("k", r.k)?;
        d.set_item("masking", r.masking)?;
        d.set_item("theta_identifiable", r.theta_identifiable)?;
        d.set_item("a_identifiable", r.a_identifiable.into_iter().map(verdict).collect::<Vec<_>>())?;
        let sets: Vec<Vec<usize>> = r.intersection_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        d.set_item("intersection_sets", sets)?;
        d.set_item("warnings", r.warnings)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("DesignMatrix(J={}, K={})", self.inner.n_items(), self.inner.n_factors())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

impl PyDesign {
    fn check_factor(&self, factor: usize) -> PyResult<()> {
        if factor < self.inner.n_factors() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!(
                "factor {factor} out of range for K = {}",
                self.inner.n_factors()
            )))
        }
    }
}

#[pyclass(name = "FactorModel", module = "cfaid", frozen)]
struct PyModel {
    inner: cfaid_core::FactorModel,
}

fn assumptions_dict<'py>(py: Python<'py>, r: &AssumptionReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("overall", r.overall)?;
    d.set_item("a1_theta_rank_ok", r.a1_theta_rank_ok)?;
    d.set_item("theta_rank", r.theta_rank)?;
    d.set_item("theta_min_singular", r.theta_min_singular)?;
    let failures: Vec<(Vec<usize>, usize, usize)> = r
        .a2_failures
        .iter()
        .map(|f| (f.pattern.iter().copied().collect(), f.rank, f.required))
        .collect();
    d.set_item("a2_failures", failures)?;
    d.set_item("a3_violations", r.a3_violations.clone())?;
    d.set_item("a4_ok", r.a4_ok)?;
    d.set_item("a4_max_entry", r.a4_max_entry)?;
    d.set_item("bound_c", r.bound_c)?;
    Ok(d)
}

#[pymethods]
impl PyModel {
    /// `theta` is N x K, `a` is J x K, `q` a DesignMatrix or 0/1 rows.
    #[new]
    #[pyo3(signature = (theta, a, q, bound_c=None))]
    fn new(theta: Vec<Vec<f64>>, a: Vec<Vec<f64>>, q: &Bound<'_, PyAny>, bound_c: Option<f64>) -> PyResult<Self> {
        let design = match q.cast::<PyDesign>() {
            Ok(d) => d.get().inner.clone(),
            Err(_) => PyDesign::new(q.extract()?)?.inner,
        };
        let inner = cfaid_core::FactorModel::new(to_matrix(theta, "theta")?, to_matrix(a, "a")?, design, bound_c)
            .map_err(value_error)?;
        Ok(Self { inner })
    }

    /// Read a JSON bundle; a counterexample document is accepted too.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = ModelBundle::from_json(text)
            .and_then(|b| b.to_model())
            .map_err(value_error)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        ModelBundle::from_model(&self.inner).to_json()
    }

    #[getter]
    fn theta(&self) -> Vec<Vec<f64>> {
        from_matrix(self.inner.theta())
    }

    #[getter]
    fn loadings(&self) -> Vec<Vec<f64>> {
        from_matrix(self.inner.loadings())
    }

    #[getter]
    fn design(&self) -> PyDesign {
        PyDesign {
            inner: self.inner.design().clone(),
        }
    }

    #[getter]
    fn bound_c(&self) -> f64 {
        self.inner.bound_c()
    }

    /// M = theta @ a.T
    fn compose(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.compose())
    }

    #[pyo3(signature = (tol=DEFAULT_TOL))]
    fn check_assumptions<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        assumptions_dict(py, &self.inner.check_assumptions(tol))
    }

    fn __repr__(&self) -> String {
        format!(
            "FactorModel(N={}, J={}, K={})",
            self.inner.n_rows(),
            self.inner.n_items(),
            self.inner.n_factors()
        )
    }
}

/// Identifiability report of `q` as a dict.
#[pyfunction]
fn analyze<'py>(py: Python<'py>, q: &PyDesign) -> PyResult<Bound<'py, PyDict>> {
    q.analyze(py)
}

/// Recover identifiable factor directions (and loadings when all are identifiable).
#[pyfunction]
#[pyo3(signature = (m, q, tol=DEFAULT_TOL))]
fn recover<'py>(py: Python<'py>, m: Vec<Vec<f64>>, q: &PyDesign, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = recovery::recover(&to_matrix(m, "m")?, &q.inner, tol).map_err(value_error)?;
    let d = PyDict::new(py);
    let directions = PyDict::new(py);
    for (f, v) in &r.directions {
        directions.set_item(*f, v.iter().copied().collect::<Vec<f64>>())?;
    }
    d.set_item("directions", directions)?;
    d.set_item("skipped", r.skipped.clone())?;
    d.set_item("intersection_dims", r.intersection_dims.clone())?;
    match &r.loadings {
        Some(l) => {
            d.set_item("loadings", from_matrix(&l.loadings))?;
            d.set_item("residuals", l.residuals.clone())?;
        }
        None => {
            d.set_item("loadings", py.None())?;
            d.set_item("residuals", py.None())?;
        }
    }
    Ok(d)
}

fn counterexample_dict<'py>(
    py: Python<'py>,
    base: &cfaid_core::FactorModel,
    alt: &AlternativeFactorization,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let v = alt.verify(base, tol);
    let d = PyDict::new(py);
    d.set_item("kind", alt.kind.tag())?;
    d.set_item("k", alt.perturbation.k)?;
    d.set_item("k_prime", alt.perturbation.k_prime)?;
    d.set_item("epsilon", alt.perturbation.epsilon)?;
    d.set_item("model", PyModel { inner: alt.to_model(base) })?;
    d.set_item("recomposition_error", v.recomposition_error)?;
    d.set_item("perturbed_angle", alt.perturbed_angle(base))?;
    d.set_item("assumptions", assumptions_dict(py, &v.assumptions)?)?;
    Ok(d)
}

/// Alternative factorization in which factor `k` (which masks `k_prime`) changes direction.
#[pyfunction]
#[pyo3(signature = (model, k, k_prime, eps=None, tol=DEFAULT_TOL))]
fn theta_counterexample<'py>(
    py: Python<'py>,
    model: &PyModel,
    k: usize,
    k_prime: usize,
    eps: Option<f64>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let alt = counterexample::theta_counterexample(&model.inner, k, k_prime, eps).map_err(value_error)?;
    counterexample_dict(py, &model.inner, &alt, tol)
}

/// Alternative factorization in which loading `k` (masked by `k_prime`) changes direction.
#[pyfunction]
#[pyo3(signature = (model, k, k_prime, eps=None, tol=DEFAULT_TOL))]
fn a_counterexample<'py>(
    py: Python<'py>,
    model: &PyModel,
    k: usize,
    k_prime: usize,
    eps: Option<f64>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let alt = counterexample::a_counterexample(&model.inner, k, k_prime, eps).map_err(value_error)?;
    counterexample_dict(py, &model.inner, &alt, tol)
}

/// Random valid model. `plant` lists (masker, masked) pairs; `identity` anchors Q.
#[pyfunction]
#[pyo3(signature = (n, j, k, seed=0, plant=None, identity=false, scale=1.0))]
fn generate(
    n: usize,
    j: usize,
    k: usize,
    seed: u64,
    plant: Option<Vec<(usize, usize)>>,
    identity: bool,
    scale: f64,
) -> PyResult<PyModel> {
    let policy = match (plant, identity) {
        (Some(_), true) => return Err(PyValueError::new_err("plant and identity are exclusive")),
        (Some(p), false) => PatternPolicy::PlantedMasking(p),
        (None, true) => PatternPolicy::IdentityAnchored,
        (None, false) => PatternPolicy::UniformRandom,
    };
    let mut spec = GeneratorSpec::new(n, j, k, seed, policy);
    spec.entry_scale = scale;
    let q = generator::random_design(&spec).map_err(value_error)?;
    let inner = generator::random_model(&spec, &q).map_err(value_error)?;
    Ok(PyModel { inner })
}

/// The unscaled n x 2 decay example.
#[pyfunction]
fn decay_example(n: usize) -> Vec<Vec<f64>> {
    from_matrix(&generator::decay_example(n))
}

/// sigma_min, squared Frobenius norm and bound for the scaled decay example.
#[pyfunction]
#[pyo3(signature = (n, m=None))]
fn decay_stats<'py>(py: Python<'py>, n: usize, m: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let s = generator::decay_stats(n, m).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("n", s.n)?;
    d.set_item("m", s.m)?;
    d.set_item("sigma_min", s.sigma_min)?;
    d.set_item("frobenius_sq", s.frobenius_sq)?;
    d.set_item("bound", s.bound)?;
    d.set_item("bound_holds", s.bound_holds())?;
    Ok(d)
}

/// Intersection set by enumerating all factor subsets.
#[pyfunction]
fn intersection_set_bruteforce(q: &PyDesign, factor: usize) -> PyResult<Vec<usize>> {
    Ok(oracle::intersection_set_bruteforce(&q.inner, factor)
        .map_err(value_error)?
        .into_iter()
        .collect())
}

/// Coefficients c with A[roots, others] c = 0, or None when none exist.
#[pyfunction]
#[pyo3(signature = (model, factor, tol=DEFAULT_TOL))]
fn a_nonidentifiability_witness(model: &PyModel, factor: usize, tol: f64) -> PyResult<Option<Vec<f64>>> {
    if factor >= model.inner.n_factors() {
        return Err(PyValueError::new_err(format!("factor {factor} out of range")));
    }
    Ok(oracle::a_nonidentifiability_witness(&model.inner, factor, tol).map(|v| v.iter().copied().collect()))
}

#[pymodule]
fn cfaid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DEFAULT_TOL", DEFAULT_TOL)?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(recover, m)?)?;
    m.add_function(wrap_pyfunction!(theta_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(a_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(decay_example, m)?)?;
    m.add_function(wrap_pyfunction!(decay_stats, m)?)?;
    m.add_function(wrap_pyfunction!(intersection_set_bruteforce, m)?)?;
    m.add_function(wrap_pyfunction!(a_nonidentifiability_witness, m)?)?;
    Ok(())
}
