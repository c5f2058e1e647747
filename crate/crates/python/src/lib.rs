//! Python bindings for the DPG elasticity solver.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dpg_elast::assembly::{energy_indicators, SolverKind};
use dpg_elast::study::{self, Method};
use dpg_elast::{DegreeMap, Domain, Error, ExactSolution, LShapeParams, PlaneModel};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::InvalidMaterial(_) | Error::InvalidMesh(_) | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Material {
    inner: dpg_elast::Material,
}

#[pymethods]
impl Material {
    #[new]
    #[pyo3(signature = (lambda_, mu, plane = "strain"))]
    fn new(lambda_: f64, mu: f64, plane: &str) -> PyResult<Self> {
        let model = match plane {
            "strain" => PlaneModel::Strain,
            "stress" => PlaneModel::Stress,
            other => return Err(PyValueError::new_err(format!("unknown plane model '{other}'"))),
        };
        let inner = dpg_elast::Material::with_model(lambda_, mu, model).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_poisson(nu: f64, mu: f64) -> PyResult<Self> {
        Ok(Self { inner: dpg_elast::Material::from_poisson(nu, mu).map_err(to_py)? })
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }

    #[getter]
    fn q0(&self) -> f64 {
        self.inner.q0
    }

    /// Compliance applied to a 2x2 stress given as nested lists.
    fn compliance(&self, tau: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        self.inner.apply_compliance(&tau)
    }

    /// Corner singularity exponent of the clamped L-shape.
    fn lshape_exponent(&self) -> PyResult<f64> {
        dpg_elast::exact::lshape_exponent(&self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Material(lambda_={}, mu={}, plane={:?})", self.inner.lambda, self.inner.mu, self.inner.model)
    }
}

#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Mesh {
    inner: dpg_elast::Mesh,
}

#[pymethods]
impl Mesh {
    /// Uniform initial mesh of `"square"` or `"lshape"`.
    #[new]
    #[pyo3(signature = (domain = "square", divisions = 2))]
    fn new(domain: &str, divisions: usize) -> PyResult<Self> {
        let d = match domain {
            "square" => Domain::UnitSquare,
            "lshape" => Domain::LShape,
            other => return Err(PyValueError::new_err(format!("unknown domain '{other}'"))),
        };
        Ok(Self { inner: dpg_elast::Mesh::build_initial(d, divisions).map_err(to_py)? })
    }

    #[getter]
    fn n_active(&self) -> usize {
        self.inner.n_active()
    }

    fn active_elements(&self) -> Vec<usize> {
        self.inner.active_elements()
    }

    fn element_area(&self, element: usize) -> f64 {
        self.inner.element_area(element)
    }

    fn refine_uniform(&self) -> Self {
        Self { inner: self.inner.refine_uniform() }
    }

    fn refine(&self, marked: Vec<usize>) -> Self {
        Self { inner: self.inner.refine_marked(&marked.into_iter().collect()) }
    }

    fn hanging_vertices(&self) -> usize {
        self.inner.hanging_vertices().len()
    }
}

/// Result of one solve on a fixed mesh.
#[pyclass(frozen, get_all)]
struct Solution {
    n_dofs: usize,
    e_sigma: f64,
    e_u: f64,
    e_rel: f64,
    eta: f64,
    alpha: Option<f64>,
    indicators: Vec<f64>,
}

/// Solve the benchmark whose exact solution matches the mesh domain.
#[pyfunction]
#[pyo3(signature = (mesh, material, p = 1, delta_p = 2, method = 1, condense = false))]
fn solve(
    py: Python<'_>,
    mesh: &Mesh,
    material: &Material,
    p: usize,
    delta_p: usize,
    method: u8,
    condense: bool,
) -> PyResult<Solution> {
    let method: Method = parse(&method.to_string())?;
    let mesh = &mesh.inner;
    let mat = material.inner;
    py.detach(|| {
        let exact = match mesh.domain {
            Domain::UnitSquare => ExactSolution::Smooth(mat),
            Domain::LShape => ExactSolution::LShape(LShapeParams::new(&mat)?),
        };
        let degrees = DegreeMap::uniform(mesh, p, delta_p)?;
        let s = study::solve_discretization(mesh, &degrees, &mat, &exact, method, condense, SolverKind::default())?;
        let (e_sigma, e_u) = study::l2_errors(mesh, &degrees, &s.layout, &s.x, &exact);
        let e_rel = study::relative_l2_error(mesh, &degrees, &s.layout, &s.x, &exact);
        let indicators =
            energy_indicators(mesh, &degrees, &mat, |x, y| exact.body_force(x, y), &s.layout, &s.x)?;
        let eta = indicators.iter().map(|e| e * e).sum::<f64>().sqrt();
        Ok(Solution { n_dofs: s.layout.n_free, e_sigma, e_u, e_rel, eta, alpha: s.alpha, indicators })
    })
    .map_err(to_py)
}

#[pyclass(frozen, get_all)]
struct ReportRow {
    step: usize,
    n_dofs: usize,
    h_min: f64,
    p_max: usize,
    e_sigma: f64,
    e_u: f64,
    e_rel: f64,
    eta: f64,
    best_sigma: Option<f64>,
    best_u: Option<f64>,
    wall_time: f64,
}

impl From<study::ReportRow> for ReportRow {
    fn from(r: study::ReportRow) -> Self {
        Self {
            step: r.step,
            n_dofs: r.n_dofs,
            h_min: r.h_min,
            p_max: r.p_max,
            e_sigma: r.e_sigma,
            e_u: r.e_u,
            e_rel: r.e_rel,
            eta: r.eta,
            best_sigma: r.best_sigma,
            best_u: r.best_u,
            wall_time: r.wall_time,
        }
    }
}

/// Run a convergence study. Keyword arguments use the configuration file keys.
#[pyfunction]
#[pyo3(signature = (benchmark = "smooth", **options))]
fn run_study(
    py: Python<'_>,
    benchmark: &str,
    options: Option<&Bound<'_, pyo3::types::PyDict>>,
) -> PyResult<Vec<ReportRow>> {
    let mut config = study::StudyConfig::new(parse(benchmark)?);
    if let Some(opts) = options {
        for (k, v) in opts.iter() {
            let key: String = k.extract()?;
            let value = v.str()?.to_string();
            let value = match value.as_str() {
                "True" => "true".to_string(),
                "False" => "false".to_string(),
                _ => value,
            };
            config.set(&key, &value).map_err(to_py)?;
        }
    }
    let rows = py.detach(|| study::run_convergence_study(&config)).map_err(to_py)?;
    Ok(rows.into_iter().map(ReportRow::from).collect())
}

/// Least-squares slope of `log y` against `log x` over the last three points.
#[pyfunction]
fn observed_rate(x: Vec<f64>, y: Vec<f64>) -> f64 {
    study::observed_rate(&x, &y)
}

#[pymodule]
fn pydpg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Material>()?;
    m.add_class::<Mesh>()?;
    m.add_class::<Solution>()?;
    m.add_class::<ReportRow>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(observed_rate, m)?)?;
    m.add("CSV_HEADER", study::ReportRow::HEADER)?;
    Ok(())
}
