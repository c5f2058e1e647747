//! Error measurement, adaptivity and convergence-study drivers.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{
    apply_dirichlet, assemble, build_dof_layout, energy_indicators, evaluate_fields, solve_spd, AssemblyOptions,
    DofLayout, SolverKind,
};
use crate::basis::{gauss_rule, q_basis_eval, QuadratureRule};
use crate::exact::{ExactSolution, LShapeParams};
use crate::material::{Material, PlaneModel};
use crate::mesh::{DegreeMap, Domain, Mesh};
use crate::second_method::{build_bordered, solve_second_method};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Smooth,
    LShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    UniformH,
    UniformP,
    AdaptiveH,
    AdaptiveHp,
}

impl FromStr for Benchmark {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Benchmark::Smooth),
            "lshape" => Ok(Benchmark::LShape),
            _ => Err(Error::Config(format!("unknown benchmark '{s}'"))),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Method::First),
            "2" => Ok(Method::Second),
            _ => Err(Error::Config(format!("method must be 1 or 2, got '{s}'"))),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_h" => Ok(Mode::UniformH),
            "uniform_p" => Ok(Mode::UniformP),
            "adaptive_h" => Ok(Mode::AdaptiveH),
            "adaptive_hp" => Ok(Mode::AdaptiveHp),
            _ => Err(Error::Config(format!("unknown mode '{s}'"))),
        }
    }
}

/// Settings of one convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub benchmark: Benchmark,
    pub method: Method,
    pub mode: Mode,
    pub p: usize,
    pub delta_p: usize,
    pub steps: usize,
    pub lambda: f64,
    pub mu: f64,
    pub plane: PlaneModel,
    pub marking_fraction: f64,
    /// Elements per unit length of the initial mesh.
    pub initial_divisions: usize,
    pub condense: bool,
    pub best_approximation: bool,
    pub timing: bool,
    pub solver: SolverKind,
    pub output: Option<PathBuf>,
}

impl StudyConfig {
    /// Defaults: smooth problem with `lambda = mu = 1` in plane strain on the
    /// 2x2 mesh; L-shape with steel in plane stress on the 12-element mesh.
    pub fn new(benchmark: Benchmark) -> Self {
        let (lambda, mu, plane) = match benchmark {
            Benchmark::Smooth => (1.0, 1.0, PlaneModel::Strain),
            Benchmark::LShape => (123.0, 79.3, PlaneModel::Stress),
        };
        StudyConfig {
            benchmark,
            method: Method::First,
            mode: Mode::UniformH,
            p: 1,
            delta_p: 2,
            steps: 4,
            lambda,
            mu,
            plane,
            marking_fraction: 0.5,
            initial_divisions: 2,
            condense: false,
            best_approximation: false,
            timing: true,
            solver: SolverKind::Cholesky,
            output: None,
        }
    }

    /// Parse `key = value` lines (`#` starts a comment). The benchmark key,
    /// when present, selects the defaults the other keys override.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let benchmark = match pairs.iter().rev().find(|(k, _)| k == "benchmark") {
            Some((_, v)) => v.parse()?,
            None => Benchmark::Smooth,
        };
        let mut cfg = StudyConfig::new(benchmark);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for {key}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("bad boolean '{v}' for {key}"))),
            }
        }
        match key {
            "benchmark" => {
                let b: Benchmark = value.parse()?;
                if b != self.benchmark {
                    *self = StudyConfig { output: self.output.clone(), ..StudyConfig::new(b) };
                }
            }
            "method" => self.method = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "p" => self.p = num(key, value)?,
            "delta_p" => self.delta_p = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "mu" => self.mu = num(key, value)?,
            "plane" => {
                self.plane = match value {
                    "strain" => PlaneModel::Strain,
                    "stress" => PlaneModel::Stress,
                    _ => return Err(Error::Config(format!("plane must be strain or stress, got '{value}'"))),
                }
            }
            "marking_fraction" => self.marking_fraction = num(key, value)?,
            "initial_divisions" => self.initial_divisions = num(key, value)?,
            "condense" => self.condense = flag(key, value)?,
            "best_approximation" => self.best_approximation = flag(key, value)?,
            "timing" => self.timing = flag(key, value)?,
            "solver" => {
                self.solver = match value {
                    "cholesky" => SolverKind::Cholesky,
                    "cg" => SolverKind::ConjugateGradient,
                    _ => return Err(Error::Config(format!("solver must be cholesky or cg, got '{value}'"))),
                }
            }
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.p < 1 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if self.delta_p < 1 {
            return Err(Error::Config("delta_p must be at least 1".into()));
        }
        if !(self.marking_fraction > 0.0 && self.marking_fraction <= 1.0) {
            return Err(Error::Config("marking_fraction must lie in (0, 1]".into()));
        }
        if self.initial_divisions < 1 {
            return Err(Error::Config("initial_divisions must be at least 1".into()));
        }
        self.material().map(|_| ()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn material(&self) -> Result<Material> {
        Material::with_model(self.lambda, self.mu, self.plane)
    }

    pub fn exact(&self) -> Result<ExactSolution> {
        let m = self.material()?;
        Ok(match self.benchmark {
            Benchmark::Smooth => ExactSolution::Smooth(m),
            Benchmark::LShape => ExactSolution::LShape(LShapeParams::new(&m)?),
        })
    }

    pub fn domain(&self) -> Domain {
        match self.benchmark {
            Benchmark::Smooth => Domain::UnitSquare,
            Benchmark::LShape => Domain::LShape,
        }
    }
}

/// One line of a convergence report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub step: usize,
    pub n_dofs: usize,
    pub h_min: f64,
    pub p_max: usize,
    pub e_sigma: f64,
    pub e_u: f64,
    pub e_rel: f64,
    pub eta: f64,
    pub best_sigma: Option<f64>,
    pub best_u: Option<f64>,
    /// Wall time of the step in seconds.
    pub wall_time: f64,
}

impl ReportRow {
    pub const HEADER: &'static str = "step,n_dofs,h_min,p_max,e_sigma,e_u,e_rel,eta,best_sigma,best_u,wall_time";

    pub fn to_csv(&self) -> String {
        let g = |v: f64| format!("{v:.11e}");
        let opt = |v: Option<f64>| v.map(g).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.n_dofs,
            g(self.h_min),
            self.p_max,
            g(self.e_sigma),
            g(self.e_u),
            g(self.e_rel),
            g(self.eta),
            opt(self.best_sigma),
            opt(self.best_u),
            g(self.wall_time)
        )
    }
}

pub fn rows_to_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from(ReportRow::HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.to_csv());
    }
    s
}

/// Reference quadrature points and weights for one element. Elements with a
/// vertex at `singular` get a composite rule graded geometrically towards
/// that corner.
pub fn element_quadrature(mesh: &Mesh, element: usize, n: usize, singular: Option<[f64; 2]>) -> Vec<([f64; 2], f64)> {
    let corner = singular.and_then(|pt| {
        mesh.elements[element].vertices.iter().position(|&v| {
            let x = mesh.vertices[v];
            (x[0] - pt[0]).abs() < 1e-12 && (x[1] - pt[1]).abs() < 1e-12
        })
    });
    let rule = gauss_rule(n);
    let Some(c) = corner else { return rule.tensor() };
    let sub = gauss_rule(n.max(8));
    graded_rule(&sub, c, 40)
}

/// Layers `[0, 2^-j] \ [0, 2^-(j+1)]` (three squares each) in coordinates
/// measured from reference corner `c`, plus the innermost square.
fn graded_rule(rule: &QuadratureRule, c: usize, levels: usize) -> Vec<([f64; 2], f64)> {
    let (sx, sy) = match c {
        0 => (1.0, 1.0),
        1 => (-1.0, 1.0),
        2 => (-1.0, -1.0),
        _ => (1.0, -1.0),
    };
    let (ox, oy) = (-sx, -sy);
    let mut out = Vec::new();
    let mut push_square = |a0: f64, b0: f64, h: f64| {
        for ([r, s], w) in rule.tensor() {
            let a = a0 + 0.5 * h * (r + 1.0);
            let b = b0 + 0.5 * h * (s + 1.0);
            out.push(([ox + sx * a, oy + sy * b], w * 0.25 * h * h));
        }
    };
    let mut size = 2.0;
    for _ in 0..levels {
        let half = 0.5 * size;
        push_square(half, 0.0, half);
        push_square(0.0, half, half);
        push_square(half, half, half);
        size = half;
    }
    push_square(0.0, 0.0, size);
    out
}

struct ErrorSums {
    e_sigma: f64,
    e_u: f64,
    n_sigma: f64,
    n_u: f64,
}

fn frob2(s: [[f64; 2]; 2]) -> f64 {
    s[0][0] * s[0][0] + 2.0 * s[0][1] * s[0][1] + s[1][1] * s[1][1]
}

fn error_sums(mesh: &Mesh, degrees: &DegreeMap, layout: &DofLayout, x: &[f64], exact: &ExactSolution) -> ErrorSums {
    let singular = exact.singular_point();
    let parts: Vec<[f64; 4]> = layout
        .maps
        .par_iter()
        .map(|map| {
            let k = map.element;
            let mut acc = [0.0; 4];
            for ([xi, eta], w) in element_quadrature(mesh, k, degrees.test_degree(k) + 2, singular) {
                let (pt, j) = mesh.map_point(k, xi, eta);
                let wt = w * (j[0][0] * j[1][1] - j[0][1] * j[1][0]);
                let (s, u) = evaluate_fields(map, x, xi, eta);
                let ex = exact.eval(pt[0], pt[1]);
                let ds = [[s[0][0] - ex.sigma[0][0], s[0][1] - ex.sigma[0][1]], [s[1][0] - ex.sigma[1][0], s[1][1] - ex.sigma[1][1]]];
                acc[0] += wt * frob2(ds);
                acc[1] += wt * ((u[0] - ex.u[0]).powi(2) + (u[1] - ex.u[1]).powi(2));
                acc[2] += wt * frob2(ex.sigma);
                acc[3] += wt * (ex.u[0].powi(2) + ex.u[1].powi(2));
            }
            acc
        })
        .collect();
    let mut t = [0.0; 4];
    for p in parts {
        for i in 0..4 {
            t[i] += p[i];
        }
    }
    ErrorSums { e_sigma: t[0].sqrt(), e_u: t[1].sqrt(), n_sigma: t[2].sqrt(), n_u: t[3].sqrt() }
}

/// L2 errors `(||sigma_h - sigma||, ||u_h - u||)` with the Frobenius norm for stresses.
pub fn l2_errors(mesh: &Mesh, degrees: &DegreeMap, layout: &DofLayout, x: &[f64], exact: &ExactSolution) -> (f64, f64) {
    let s = error_sums(mesh, degrees, layout, x, exact);
    (s.e_sigma, s.e_u)
}

/// `sqrt((e_sigma^2 + e_u^2) / (||sigma||^2 + ||u||^2))`.
pub fn relative_l2_error(mesh: &Mesh, degrees: &DegreeMap, layout: &DofLayout, x: &[f64], exact: &ExactSolution) -> f64 {
    let s = error_sums(mesh, degrees, layout, x, exact);
    ((s.e_sigma.powi(2) + s.e_u.powi(2)) / (s.n_sigma.powi(2) + s.n_u.powi(2))).sqrt()
}

/// Errors of the elementwise L2 projections of the exact stress and
/// displacement onto the trial spaces.
pub fn best_approximation_errors(mesh: &Mesh, degrees: &DegreeMap, exact: &ExactSolution) -> (f64, f64) {
    let singular = exact.singular_point();
    let active = mesh.active_elements();
    let parts: Vec<(f64, f64)> = active
        .par_iter()
        .map(|&k| {
            let p = degrees.element[k];
            let m = (p + 1) * (p + 1);
            let pts = element_quadrature(mesh, k, degrees.test_degree(k) + 2, singular);
            let mut mass = DMatrix::zeros(m, m);
            let mut rhs = DMatrix::zeros(m, 5);
            let mut cache = Vec::with_capacity(pts.len());
            for &([xi, eta], w) in &pts {
                let (pt, j) = mesh.map_point(k, xi, eta);
                let wt = w * (j[0][0] * j[1][1] - j[0][1] * j[1][0]);
                let q = q_basis_eval(p, xi, eta);
                let ex = exact.eval(pt[0], pt[1]);
                let f = [ex.sigma[0][0], ex.sigma[0][1], ex.sigma[1][1], ex.u[0], ex.u[1]];
                for a in 0..m {
                    for b in 0..m {
                        mass[(a, b)] += wt * q.values[a] * q.values[b];
                    }
                    for c in 0..5 {
                        rhs[(a, c)] += wt * f[c] * q.values[a];
                    }
                }
                cache.push((wt, q.values, f));
            }
            let coef = mass.cholesky().expect("element mass matrix is SPD").solve(&rhs);
            let (mut es, mut eu) = (0.0, 0.0);
            for (wt, vals, f) in cache {
                let v = DVector::from_vec(vals);
                let mut d = [0.0; 5];
                for c in 0..5 {
                    d[c] = f[c] - coef.column(c).dot(&v);
                }
                es += wt * (d[0] * d[0] + 2.0 * d[1] * d[1] + d[2] * d[2]);
                eu += wt * (d[3] * d[3] + d[4] * d[4]);
            }
            (es, eu)
        })
        .collect();
    let (mut es, mut eu) = (0.0, 0.0);
    for (a, b) in parts {
        es += a;
        eu += b;
    }
    (es.sqrt(), eu.sqrt())
}

/// Indices `K` with `eta_K >= fraction * max eta`; empty when all vanish.
pub fn greedy_mark(indicators: &[f64], fraction: f64) -> BTreeSet<usize> {
    let max = indicators.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return BTreeSet::new();
    }
    indicators.iter().enumerate().filter(|&(_, &e)| e >= fraction * max).map(|(i, _)| i).collect()
}

/// Split marked elements into h-refinement (those touching the singular
/// point) and p-refinement sets.
pub fn hp_decide(marked: &BTreeSet<usize>, mesh: &Mesh, singular: Option<[f64; 2]>) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let touching: BTreeSet<usize> = singular.map(|pt| mesh.elements_touching(pt).into_iter().collect()).unwrap_or_default();
    marked.iter().partition(|k| touching.contains(k))
}

/// Least-squares slope of `log y` against `log x` over the last three points.
pub fn observed_rate(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let k = n.min(3);
    let lx: Vec<f64> = x[n - k..n].iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y[n - k..n].iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k as f64;
    let my = ly.iter().sum::<f64>() / k as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Slope between the last two points in log-log scale.
pub fn last_interval_rate(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    (y[n - 1] / y[n - 2]).ln() / (x[n - 1] / x[n - 2]).ln()
}

/// Discrete solution of one mesh/degree configuration.
pub struct Solved {
    pub layout: DofLayout,
    pub x: Vec<f64>,
    pub alpha: Option<f64>,
}

/// Assemble and solve one discretization with Dirichlet data from `exact`.
pub fn solve_discretization(
    mesh: &Mesh,
    degrees: &DegreeMap,
    material: &Material,
    exact: &ExactSolution,
    method: Method,
    condense: bool,
    solver: SolverKind,
) -> Result<Solved> {
    let layout = build_dof_layout(mesh, degrees)?;
    let f = |x: f64, y: f64| exact.body_force(x, y);
    let condense = condense && method == Method::First;
    let sys = assemble(mesh, degrees, material, f, &layout, AssemblyOptions { condense })?;
    let sys = apply_dirichlet(sys, mesh, degrees, &layout, |x, y| exact.displacement(x, y));
    match method {
        Method::First => {
            let x = solve_spd(&sys, &layout, solver)?;
            Ok(Solved { layout, x, alpha: None })
        }
        Method::Second => {
            let bordered = build_bordered(sys, mesh, degrees, material, f, &layout)?;
            let (x, alpha) = solve_second_method(&bordered, &layout)?;
            Ok(Solved { layout, x, alpha: Some(alpha) })
        }
    }
}

/// Run the configured study, writing the CSV when an output path is set.
/// On a solver failure the rows computed so far are written followed by a
/// diagnostic comment line, and the error is returned.
pub fn run_convergence_study(config: &StudyConfig) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let material = config.material()?;
    let exact = config.exact()?;
    let mut mesh = Mesh::build_initial(config.domain(), config.initial_divisions)?;
    let mut degrees = DegreeMap::uniform(&mesh, config.p, config.delta_p)?;
    let mut rows = Vec::new();
    for step in 0..config.steps {
        let start = Instant::now();
        let solved = match solve_discretization(&mesh, &degrees, &material, &exact, config.method, config.condense, config.solver) {
            Ok(s) => s,
            Err(e) => {
                write_output(config, &rows, Some(&format!("# solver failure at step {step}: {e}")))?;
                return Err(e);
            }
        };
        let f = |x: f64, y: f64| exact.body_force(x, y);
        let eta_k = energy_indicators(&mesh, &degrees, &material, f, &solved.layout, &solved.x)?;
        let eta = eta_k.iter().map(|e| e * e).sum::<f64>().sqrt();
        let sums = error_sums(&mesh, &degrees, &solved.layout, &solved.x, &exact);
        let e_rel = ((sums.e_sigma.powi(2) + sums.e_u.powi(2)) / (sums.n_sigma.powi(2) + sums.n_u.powi(2))).sqrt();
        let best = config.best_approximation.then(|| best_approximation_errors(&mesh, &degrees, &exact));
        let active = mesh.active_elements();
        rows.push(ReportRow {
            step,
            n_dofs: solved.layout.n_free,
            h_min: active.iter().map(|&k| mesh.element_diameter(k)).fold(f64::INFINITY, f64::min),
            p_max: degrees.max_active(&mesh),
            e_sigma: sums.e_sigma,
            e_u: sums.e_u,
            e_rel,
            eta,
            best_sigma: best.map(|b| b.0),
            best_u: best.map(|b| b.1),
            wall_time: if config.timing { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        if step + 1 == config.steps {
            break;
        }
        (mesh, degrees) = refine_step(config, &mesh, &degrees, &solved.layout, &eta_k, &exact);
    }
    write_output(config, &rows, None)?;
    Ok(rows)
}

fn refine_step(
    config: &StudyConfig,
    mesh: &Mesh,
    degrees: &DegreeMap,
    layout: &DofLayout,
    eta_k: &[f64],
    exact: &ExactSolution,
) -> (Mesh, DegreeMap) {
    match config.mode {
        Mode::UniformH => {
            let m = mesh.refine_uniform();
            let d = degrees.inherit(&m);
            (m, d)
        }
        Mode::UniformP => {
            let mut d = degrees.clone();
            for k in mesh.active_elements() {
                d.element[k] += 1;
            }
            d.update_edges(mesh);
            (mesh.clone(), d)
        }
        Mode::AdaptiveH | Mode::AdaptiveHp => {
            let marked: BTreeSet<usize> =
                greedy_mark(eta_k, config.marking_fraction).into_iter().map(|i| layout.maps[i].element).collect();
            let (h_set, p_set) = if config.mode == Mode::AdaptiveH {
                (marked, BTreeSet::new())
            } else {
                hp_decide(&marked, mesh, exact.singular_point())
            };
            let mut d = degrees.clone();
            for &k in &p_set {
                d.element[k] += 1;
            }
            let m = mesh.refine_marked(&h_set);
            let d = d.inherit(&m);
            (m, d)
        }
    }
}

fn write_output(config: &StudyConfig, rows: &[ReportRow], trailer: Option<&str>) -> Result<()> {
    let Some(path) = &config.output else { return Ok(()) };
    let mut text = rows_to_csv(rows);
    if let Some(t) = trailer {
        text.push_str(t);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
