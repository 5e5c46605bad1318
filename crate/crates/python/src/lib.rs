//! Python bindings. Reports come back as plain dicts and lists.

use std::collections::BTreeMap;

use geoflow::criteria::{criterion_determinants, DEFAULT_THRESHOLD};
use geoflow::flows::{self, build_v, build_w, commutator_residual, symmetry_pde_residual};
use geoflow::geodesic::{integrate, time_reversal_error, IntegrateOptions, SymbolicModel};
use geoflow::geometry::{self, bracket_residual, gauss_curvature, hamiltonian, Metric2D, MomentumPoly, PhasePoint};
use geoflow::hodograph::{convergence_study, solve_on_grid, GridSpec, NewtonOptions};
use geoflow::registry::{get_example_with, list_examples, ExampleSpec, ExplicitProblem, ImplicitProblem, Problem};
use geoflow::sampling::{seeded_rng, Region};
use geoflow::{Error, Expr};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::UnknownExample { .. }
        | Error::Parse(_)
        | Error::Json(_)
        | Error::Normalization(_)
        | Error::Dimension(_)
        | Error::DegenerateMetric
        | Error::UnsupportedSize { .. }
        | Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any(),
            _ => py.None().into_bound(py),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn report<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| err(e.into()))?;
    to_py(py, &v)
}

fn parse(text: &str) -> PyResult<Expr> {
    Expr::parse(text).map_err(|e| err(e.into()))
}

fn parse_all(texts: &[String]) -> PyResult<Vec<Expr>> {
    texts.iter().map(|s| parse(s)).collect()
}

/// A symbolic scalar expression.
#[pyclass(name = "Expr", module = "geoflow", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyExpr(Expr);

#[pymethods]
impl PyExpr {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        parse(text).map(PyExpr)
    }

    fn differentiate(&self, var: &str) -> Self {
        PyExpr(self.0.differentiate(var))
    }

    fn substitute(&self, var: &str, with: &PyExpr) -> Self {
        PyExpr(self.0.substitute(var, &with.0))
    }

    fn evaluate(&self, values: BTreeMap<String, f64>) -> PyResult<f64> {
        self.0.evaluate(&values).map_err(|e| err(e.into()))
    }

    fn variables(&self) -> Vec<String> {
        self.0.variables().into_iter().collect()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}')", self.0)
    }

    fn __eq__(&self, other: &PyExpr) -> bool {
        self.0 == other.0
    }
}

fn exprs(v: Vec<Expr>) -> Vec<PyExpr> {
    v.into_iter().map(PyExpr).collect()
}

/// A 2-D metric `g11 du1^2 + 2 g12 du1 du2 + g22 du2^2`.
#[pyclass(name = "Metric2D", module = "geoflow", frozen)]
struct PyMetric(Metric2D);

impl PyMetric {
    fn integral(&self, coefficients: &[String]) -> PyResult<MomentumPoly> {
        MomentumPoly::new(self.0.coords(), parse_all(coefficients)?).map_err(err)
    }
}

#[pymethods]
impl PyMetric {
    #[new]
    #[pyo3(signature = (g11, g12, g22, coords = ("x".to_string(), "y".to_string())))]
    fn new(g11: &str, g12: &str, g22: &str, coords: (String, String)) -> PyResult<Self> {
        Ok(PyMetric(Metric2D::new(
            parse(g11)?,
            parse(g12)?,
            parse(g22)?,
            [&coords.0, &coords.1],
        )))
    }

    /// `lam (du1^2 + du2^2)`.
    #[staticmethod]
    #[pyo3(signature = (lam, coords = ("x".to_string(), "y".to_string())))]
    fn conformal(lam: &str, coords: (String, String)) -> PyResult<Self> {
        Ok(PyMetric(Metric2D::conformal(parse(lam)?, [&coords.0, &coords.1])))
    }

    #[getter]
    fn coords(&self) -> (String, String) {
        let [a, b] = self.0.coords();
        (a.to_string(), b.to_string())
    }

    fn components(&self, u1: f64, u2: f64) -> PyResult<(f64, f64, f64)> {
        let [a, b, c] = self.0.components_at(u1, u2).map_err(err)?;
        Ok((a, b, c))
    }

    fn det(&self) -> PyExpr {
        PyExpr(self.0.det())
    }

    fn gauss_curvature(&self) -> PyExpr {
        PyExpr(gauss_curvature(&self.0))
    }

    /// Coefficients of `H` in the slots `p1^2, p1 p2, p2^2`.
    fn hamiltonian(&self) -> PyResult<Vec<PyExpr>> {
        Ok(exprs(hamiltonian(&self.0).map_err(err)?.coeffs().to_vec()))
    }

    /// Coefficients of `{F, H}` for `F = sum c_k p1^(n-k) p2^k`.
    fn bracket(&self, coefficients: Vec<String>) -> PyResult<Vec<PyExpr>> {
        let h = hamiltonian(&self.0).map_err(err)?;
        let b = geometry::poisson_bracket(&self.integral(&coefficients)?, &h).map_err(err)?;
        Ok(exprs(b.coeffs().to_vec()))
    }

    fn bracket_residual<'py>(
        &self,
        py: Python<'py>,
        coefficients: Vec<String>,
        points: Vec<(f64, f64)>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let h = hamiltonian(&self.0).map_err(err)?;
        report(
            py,
            &bracket_residual(&self.integral(&coefficients)?, &h, &points).map_err(err)?,
        )
    }

    #[pyo3(signature = (points, threshold = DEFAULT_THRESHOLD))]
    fn criterion<'py>(&self, py: Python<'py>, points: Vec<(f64, f64)>, threshold: f64) -> PyResult<Bound<'py, PyAny>> {
        report(py, &criterion_determinants(&self.0, &points, threshold).map_err(err)?)
    }

    /// Integrates the geodesic flow from `(u1, u2, p1, p2)`.
    #[pyo3(signature = (state, t_end = 1.0, tol = 1e-10, samples = 101, integrals = Vec::new()))]
    fn geodesic<'py>(
        &self,
        py: Python<'py>,
        state: [f64; 4],
        t_end: f64,
        tol: f64,
        samples: usize,
        integrals: Vec<Vec<String>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let named = integrals
            .iter()
            .enumerate()
            .map(|(k, c)| Ok((format!("F{k}"), self.integral(c)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let model = SymbolicModel::new(&self.0, named, None).map_err(err)?;
        let opts = IntegrateOptions {
            tol,
            samples,
            ..Default::default()
        };
        report(
            py,
            &integrate(&model, &PhasePoint::from_array(state), t_end, &opts).map_err(err)?,
        )
    }
}

/// A catalogue entry or a problem loaded from JSON.
#[pyclass(name = "Example", module = "geoflow", frozen)]
struct PyExample(ExampleSpec);

impl PyExample {
    fn problem(&self, overrides: &BTreeMap<String, f64>) -> PyResult<Problem> {
        self.0.hydrate(overrides).map_err(err)
    }

    fn explicit(&self, overrides: &BTreeMap<String, f64>) -> PyResult<ExplicitProblem> {
        match self.problem(overrides)? {
            Problem::Explicit(p) => Ok(p),
            Problem::Implicit(_) => Err(PyValueError::new_err(format!("`{}` is implicit", self.0.id))),
        }
    }

    fn implicit(&self, overrides: &BTreeMap<String, f64>) -> PyResult<ImplicitProblem> {
        match self.problem(overrides)? {
            Problem::Implicit(p) => Ok(p),
            Problem::Explicit(_) => Err(PyValueError::new_err(format!("`{}` is explicit", self.0.id))),
        }
    }
}

#[pymethods]
impl PyExample {
    #[staticmethod]
    #[pyo3(signature = (id, params = BTreeMap::new()))]
    fn get(id: &str, params: BTreeMap<String, f64>) -> PyResult<Self> {
        Ok(PyExample(get_example_with(id, &params).map_err(err)?.spec))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ExampleSpec::from_json(text).map(PyExample).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.0).map_err(|e| err(e.into()))
    }

    #[getter]
    fn id(&self) -> String {
        self.0.id.clone()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree
    }

    #[getter]
    fn constants(&self) -> BTreeMap<String, f64> {
        self.0.constants.clone()
    }

    fn presets(&self) -> Vec<String> {
        self.0.preset_names()
    }

    fn with_preset(&self, name: &str) -> PyResult<Self> {
        self.0.clone().with_preset(name).map(PyExample).map_err(err)
    }

    #[pyo3(signature = (overrides = BTreeMap::new()))]
    fn metric(&self, overrides: BTreeMap<String, f64>) -> PyResult<PyMetric> {
        Ok(PyMetric(self.explicit(&overrides)?.metric))
    }

    /// Relative `{F, H}` residual of every integral at seeded admissible points.
    #[pyo3(signature = (samples = 1000, seed = 0, overrides = BTreeMap::new()))]
    fn verify_brackets<'py>(
        &self,
        py: Python<'py>,
        samples: usize,
        seed: u64,
        overrides: BTreeMap<String, f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = self.explicit(&overrides)?;
        let h = hamiltonian(&p.metric).map_err(err)?;
        let pts = p.region.sample(samples, &mut seeded_rng(seed)).map_err(err)?;
        let out = PyDict::new(py);
        for (name, f) in &p.integrals {
            out.set_item(name, report(py, &bracket_residual(f, &h, &pts).map_err(err)?)?)?;
        }
        Ok(out.into_any())
    }

    #[pyo3(signature = (samples = 200, seed = 0, threshold = DEFAULT_THRESHOLD, overrides = BTreeMap::new()))]
    fn criterion<'py>(
        &self,
        py: Python<'py>,
        samples: usize,
        seed: u64,
        threshold: f64,
        overrides: BTreeMap<String, f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = self.explicit(&overrides)?;
        let pts = p.region.sample(samples, &mut seeded_rng(seed)).map_err(err)?;
        report(py, &criterion_determinants(&p.metric, &pts, threshold).map_err(err)?)
    }

    /// Geodesic from `(u1, u2, p1, p2)` with the entry's integrals monitored.
    #[pyo3(signature = (state, t_end = 1.0, tol = 1e-10, samples = 101, overrides = BTreeMap::new()))]
    fn geodesic<'py>(
        &self,
        py: Python<'py>,
        state: [f64; 4],
        t_end: f64,
        tol: f64,
        samples: usize,
        overrides: BTreeMap<String, f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = self.explicit(&overrides)?;
        let model = SymbolicModel::new(&p.metric, p.integrals, Some(p.region)).map_err(err)?;
        let opts = IntegrateOptions {
            tol,
            samples,
            ..Default::default()
        };
        let s0 = PhasePoint::from_array(state);
        let traj = integrate(&model, &s0, t_end, &opts).map_err(err)?;
        let out = report(py, &traj)?;
        if let Ok(rev) = time_reversal_error(&model, &s0, t_end, &opts) {
            out.set_item("reversal_error", rev)?;
        }
        Ok(out)
    }

    /// Continuation solve on `grid = "t0,t1,x0,x1,nt,nx"` (default: the entry's patch).
    #[pyo3(signature = (grid = None, tol = 1e-11, overrides = BTreeMap::new()))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        grid: Option<&str>,
        tol: f64,
        overrides: BTreeMap<String, f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = self.implicit(&overrides)?;
        let grid = match grid {
            Some(g) => g.parse::<GridSpec>().map_err(err)?,
            None => p.grid,
        };
        let opts = NewtonOptions {
            tol,
            ..Default::default()
        };
        report(py, &solve_on_grid(&p.system, &grid, &p.anchor, &opts).map_err(err)?)
    }

    #[pyo3(signature = (levels = 3, overrides = BTreeMap::new()))]
    fn convergence_study<'py>(
        &self,
        py: Python<'py>,
        levels: u32,
        overrides: BTreeMap<String, f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = self.implicit(&overrides)?;
        let study = convergence_study(
            &p.system,
            &p.quasi_linear,
            &p.grid,
            &p.anchor,
            levels,
            &NewtonOptions::default(),
        )
        .map_err(err)?;
        report(py, &study)
    }

    /// Symmetry-equation residuals of the entry's generators.
    #[pyo3(signature = (samples = 500, seed = 0, overrides = BTreeMap::new()))]
    fn symmetry_residual<'py>(
        &self,
        py: Python<'py>,
        samples: usize,
        seed: u64,
        overrides: BTreeMap<String, f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = self.implicit(&overrides)?;
        let gens = p
            .generators
            .ok_or_else(|| PyValueError::new_err(format!("`{}` carries no generators", self.0.id)))?;
        let pts = geoflow::sampling::sample_a_points_positive(p.n, samples, &mut seeded_rng(seed));
        report(py, &symmetry_pde_residual(p.n, &gens, &pts).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Example('{}')", self.0.id)
    }
}

/// Ids, kinds and summaries of the built-in examples.
#[pyfunction]
fn examples<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    report(py, &list_examples())
}

/// Entries of the matrix `V` for size `n`, in the variables `a0 .. a{n-1}`.
#[pyfunction]
fn quasi_linear_matrix(n: usize) -> PyResult<Vec<Vec<PyExpr>>> {
    let v = build_v(n).map_err(err)?.v;
    Ok((0..n)
        .map(|i| (0..n).map(|j| PyExpr(v.get(i, j).clone())).collect())
        .collect())
}

/// The commuting-flow matrix `W` assembled from the generators.
#[pyfunction]
fn symmetry_matrix(n: usize, generators: Vec<String>) -> PyResult<Vec<Vec<PyExpr>>> {
    let w = build_w(n, &parse_all(&generators)?).map_err(err)?.w;
    Ok((0..n)
        .map(|i| (0..n).map(|j| PyExpr(w.get(i, j).clone())).collect())
        .collect())
}

/// Max-norm of `[V, W]` at an a-point; `values` binds any extra symbols.
#[pyfunction]
#[pyo3(signature = (n, generators, point, values = BTreeMap::new()))]
fn commutator(n: usize, generators: Vec<String>, point: Vec<f64>, mut values: BTreeMap<String, f64>) -> PyResult<f64> {
    if point.len() != n {
        return Err(PyValueError::new_err(format!(
            "point has {} entries, expected {n}",
            point.len()
        )));
    }
    let v = build_v(n).map_err(err)?.v;
    let w = build_w(n, &parse_all(&generators)?).map_err(err)?.w;
    for (k, a) in point.into_iter().enumerate() {
        values.insert(format!("a{k}"), a);
    }
    commutator_residual(&v, &w, &values).map_err(err)
}

#[pyfunction]
fn symmetry_equations<'py>(
    py: Python<'py>,
    n: usize,
    generators: Vec<String>,
    points: Vec<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    report(
        py,
        &symmetry_pde_residual(n, &parse_all(&generators)?, &points).map_err(err)?,
    )
}

#[pyfunction]
fn eigenvalues(n: usize, point: Vec<f64>) -> PyResult<(Vec<(f64, f64)>, bool)> {
    let s = flows::eigenvalues_v(&build_v(n).map_err(err)?, &point).map_err(err)?;
    Ok((s.eigenvalues, s.hyperbolic))
}

#[pyfunction]
fn riemann_invariants_n2(a0: f64, a1: f64) -> PyResult<(f64, f64)> {
    flows::riemann_invariants_n2(a0, a1).map_err(err)
}

/// Seeded admissible points of a coordinate box, avoiding `loci` by `margin`.
#[pyfunction]
#[pyo3(signature = (count, u1, u2, loci = Vec::new(), margin = 0.1, seed = 0, coords = ("x".to_string(), "y".to_string())))]
fn sample_points(
    count: usize,
    u1: (f64, f64),
    u2: (f64, f64),
    loci: Vec<String>,
    margin: f64,
    seed: u64,
    coords: (String, String),
) -> PyResult<Vec<(f64, f64)>> {
    let region = Region::new([&coords.0, &coords.1], u1, u2, parse_all(&loci)?, margin).map_err(err)?;
    region.sample(count, &mut seeded_rng(seed)).map_err(err)
}

#[pymodule]
fn _geoflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExpr>()?;
    m.add_class::<PyMetric>()?;
    m.add_class::<PyExample>()?;
    m.add_function(wrap_pyfunction!(examples, m)?)?;
    m.add_function(wrap_pyfunction!(quasi_linear_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(symmetry_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(commutator, m)?)?;
    m.add_function(wrap_pyfunction!(symmetry_equations, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(riemann_invariants_n2, m)?)?;
    m.add_function(wrap_pyfunction!(sample_points, m)?)?;
    Ok(())
}
