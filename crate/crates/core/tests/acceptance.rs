//! Acceptance suite: one PASS/FAIL line per criterion.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpg_elast::assembly::{apply_dirichlet, assemble, build_dof_layout, AssemblyOptions, DofLayout, GlobalSystem};
use dpg_elast::exact::{lshape_equation, lshape_exponent, lshape_solution};
use dpg_elast::local::{identity_stress_trial, local_gram, LocalSystem};
use dpg_elast::second_method::{build_bordered, element_border, ell_vector, solve_second_method};
use dpg_elast::sparse::SpdFactor;
use dpg_elast::study::{
    best_approximation_errors, l2_errors, last_interval_rate, observed_rate, run_convergence_study, solve_discretization,
    Benchmark, Method, Mode, ReportRow, StudyConfig,
};
use dpg_elast::{DegreeMap, Domain, ExactSolution, LShapeParams, Material, Mesh, PlaneModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn smooth_config(p: usize, steps: usize, mode: Mode) -> StudyConfig {
    let mut c = StudyConfig::new(Benchmark::Smooth);
    c.p = p;
    c.steps = steps;
    c.mode = mode;
    c.timing = false;
    c
}

fn lshape_config(p: usize, steps: usize, mode: Mode, delta_p: usize) -> StudyConfig {
    let mut c = StudyConfig::new(Benchmark::LShape);
    c.p = p;
    c.steps = steps;
    c.mode = mode;
    c.delta_p = delta_p;
    c.timing = false;
    c
}

fn column(rows: &[ReportRow], f: impl Fn(&ReportRow) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

/// Meshes visited by uniform refinement from the initial mesh.
fn uniform_meshes(domain: Domain, levels: usize) -> Vec<Mesh> {
    let mut out = vec![Mesh::build_initial(domain, 2).unwrap()];
    for _ in 1..levels {
        let next = out.last().unwrap().refine_uniform();
        out.push(next);
    }
    out
}

fn criterion_1() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in 1..=3 {
        let rows = run_convergence_study(&smooth_config(p, 5, Mode::UniformH)).unwrap();
        let h = column(&rows, |r| r.h_min);
        let e = column(&rows, |r| r.e_rel);
        let rate = last_interval_rate(&h, &e);
        pass &= rate >= p as f64 + 1.0 - 0.2;
        parts.push(format!("p={p}: last-interval rate {rate:.3} (lsq {:.3})", observed_rate(&h, &e)));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_2() -> Outcome {
    let mut c = smooth_config(1, 6, Mode::UniformP);
    c.steps = 6;
    let rows = run_convergence_study(&c).unwrap();
    let e = column(&rows, |r| r.e_rel);
    let factors: Vec<f64> = e.windows(2).map(|w| w[0] / w[1]).collect();
    // reductions p -> p+1 for p >= 2
    let pass = factors[1..].iter().all(|&f| f >= 3.0);
    let list: Vec<String> = factors.iter().enumerate().map(|(i, f)| format!("{}->{}: {f:.2}", i + 1, i + 2)).collect();
    outcome(pass, format!("error reduction factors {}", list.join(", ")))
}

fn criterion_3() -> Outcome {
    let rows = run_convergence_study(&lshape_config(1, 4, Mode::UniformH, 2)).unwrap();
    let n = column(&rows, |r| r.n_dofs as f64);
    let e = column(&rows, |r| r.e_sigma);
    let lsq = observed_rate(&n, &e);
    let last = last_interval_rate(&n, &e);
    let ok = |r: f64| (-0.42..=-0.20).contains(&r);
    outcome(ok(lsq) && ok(last), format!("e_sigma rate vs N: lsq {lsq:.4}, last interval {last:.4} (target -0.3019)"))
}

fn locking_materials() -> Vec<(f64, Material)> {
    [0.3, 0.49, 0.499, 0.4999].iter().map(|&nu| (nu, Material::from_poisson(nu, 0.5).unwrap())).collect()
}

fn criterion_4() -> Outcome {
    let mesh = Mesh::build_initial(Domain::UnitSquare, 4).unwrap();
    let d = DegreeMap::uniform(&mesh, 1, 2).unwrap();
    let mut ratios = Vec::new();
    for (nu, mat) in locking_materials() {
        let exact = ExactSolution::Smooth(mat);
        let s = solve_discretization(&mesh, &d, &mat, &exact, Method::First, false, Default::default()).unwrap();
        let (es, eu) = l2_errors(&mesh, &d, &s.layout, &s.x, &exact);
        let (bs, bu) = best_approximation_errors(&mesh, &d, &exact);
        ratios.push((nu, es.hypot(eu) / bs.hypot(bu)));
    }
    let max = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let min = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let spread = max / min - 1.0;
    let list: Vec<String> = ratios.iter().map(|(nu, r)| format!("nu={nu}: {r:.4}")).collect();
    outcome(max <= 1.5 && spread <= 0.15, format!("{}; spread {:.2}%", list.join(", "), 100.0 * spread))
}

fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, p) in [(2, 2), (4, 1), (4, 2)] {
        let mesh = Mesh::build_initial(Domain::UnitSquare, n).unwrap();
        let d = DegreeMap::uniform(&mesh, p, 2).unwrap();
        let mat = Material::isotropic(1.0, 1.0).unwrap();
        let exact = ExactSolution::Smooth(mat);
        let s1 = solve_discretization(&mesh, &d, &mat, &exact, Method::First, false, Default::default()).unwrap();
        let s2 = solve_discretization(&mesh, &d, &mat, &exact, Method::Second, false, Default::default()).unwrap();
        let alpha = s2.alpha.unwrap();
        let x1 = DVector::from_column_slice(&s1.x);
        let x2 = DVector::from_column_slice(&s2.x);
        let rel = (&x2 - &x1).norm() / x1.norm();
        let a_rel = alpha.abs() / x2.norm();
        pass &= a_rel <= 1e-10 && rel <= 1e-8;
        parts.push(format!("{}el p={p}: |alpha|/|x| {a_rel:.1e}, rel diff {rel:.1e}", n * n));
    }
    outcome(pass, parts.join("; "))
}

/// Dense `C_K` (local trial -> free extended dofs).
fn dense_expansion(layout: &DofLayout, k: usize) -> DMatrix<f64> {
    let map = &layout.maps[k];
    let mut c = DMatrix::zeros(map.expansion.len(), layout.n_free);
    for (i, exp) in map.expansion.iter().enumerate() {
        for &(g, w) in exp {
            let gi = map.globals[g];
            if gi < layout.n_free {
                c[(i, gi)] += w;
            }
        }
    }
    c
}

fn criterion_6() -> Outcome {
    let mesh = Mesh::build_initial(Domain::UnitSquare, 2).unwrap();
    let d = DegreeMap::uniform(&mesh, 1, 2).unwrap();
    let mat = Material::isotropic(1.0, 1.0).unwrap();
    let exact = ExactSolution::Smooth(mat);
    let f = |x: f64, y: f64| exact.body_force(x, y);
    let layout = build_dof_layout(&mesh, &d).unwrap();
    let m = layout.n_free;
    let sys = assemble(&mesh, &d, &mat, f, &layout, AssemblyOptions::default()).unwrap();
    let sys = apply_dirichlet(sys, &mesh, &d, &layout, |x, y| exact.displacement(x, y));
    let e = sys.matrix.to_dense();
    let ell = DVector::from_column_slice(&ell_vector(&mesh, &d, &mat, &layout)[..m]);
    let tilde = &e + &ell * ell.transpose();

    // direct: global B2 (all element test rows plus the beta row), block Gram [G_K..., 1]
    let systems: Vec<LocalSystem> =
        layout.maps.iter().map(|map| LocalSystem::build(&mesh, &d, map.element, &mat, f).unwrap()).collect();
    let n_test: usize = systems.iter().map(|s| s.test.dim()).sum();
    let mut b2 = DMatrix::zeros(n_test + 1, m);
    let mut g2 = DMatrix::zeros(n_test + 1, n_test + 1);
    let mut row = 0;
    for (k, s) in systems.iter().enumerate() {
        let c = dense_expansion(&layout, k);
        let nt = s.test.dim();
        b2.view_mut((row, 0), (nt, m)).copy_from(&(&s.bmat * &c));
        g2.view_mut((row, row), (nt, nt)).copy_from(&s.gram);
        // beta row: Q0^{-1} (A sigma_j, I) is the (tau = I) row of B on the stress columns
        let probe = s.test.identity_tau(1.0 / mat.q0);
        let mut beta_local = s.bmat.tr_mul(&probe);
        for i in s.layout.n_interior()..beta_local.len() {
            beta_local[i] = 0.0;
        }
        for i in 3 * s.layout.n_scalar()..s.layout.n_interior() {
            beta_local[i] = 0.0;
        }
        let contrib = c.tr_mul(&beta_local);
        for j in 0..m {
            b2[(n_test, j)] += contrib[j];
        }
        row += nt;
    }
    g2[(n_test, n_test)] = 1.0;
    let chol = g2.cholesky().unwrap();
    let direct = b2.transpose() * chol.solve(&b2);
    let diff = (&direct - &tilde).amax();
    let rank_one_ok = diff <= 1e-11;

    // Sherman-Morrison vs dense bordered solve
    let bordered = build_bordered(sys.clone(), &mesh, &d, &mat, f, &layout).unwrap();
    let (x_sm, alpha_sm) = solve_second_method(&bordered, &layout).unwrap();
    let mut big = DMatrix::zeros(m + 1, m + 1);
    big.view_mut((0, 0), (m, m)).copy_from(&tilde);
    for i in 0..m {
        big[(i, m)] = bordered.c[i];
        big[(m, i)] = bordered.c[i];
    }
    big[(m, m)] = bordered.d;
    let g = sys.effective_rhs();
    let h: f64 = -bordered.c_pinned.iter().zip(&sys.pinned_values).map(|(a, b)| a * b).sum::<f64>();
    let mut rhs = DVector::zeros(m + 1);
    rhs.rows_mut(0, m).copy_from_slice(&g);
    rhs[m] = h;
    let dense = big.lu().solve(&rhs).unwrap();
    let mut sm_diff: f64 = (dense[m] - alpha_sm).abs();
    for i in 0..m {
        sm_diff = sm_diff.max((dense[i] - x_sm[i]).abs());
    }
    let sm_ok = sm_diff <= 1e-10 && m <= 400;
    outcome(
        rank_one_ok && sm_ok,
        format!(
            "m={m}: max|direct - (E + l l^T)| = {diff:.2e} (max entry {:.2e}); bordered solve vs dense {sm_diff:.2e}",
            tilde.amax()
        ),
    )
}

fn check_system(sys: &GlobalSystem) -> (bool, f64) {
    (SpdFactor::new(&sys.matrix).is_ok() && sys.asymmetry <= 1e-12, sys.asymmetry)
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut pass = true;
    let mut gram_checks = 0;
    let mut check = |mesh: &Mesh, p: usize, mat: &Material, exact: &ExactSolution| {
        let d = DegreeMap::uniform(mesh, p, 2).unwrap();
        let layout = build_dof_layout(mesh, &d).unwrap();
        let sys = assemble(mesh, &d, mat, |x, y| exact.body_force(x, y), &layout, AssemblyOptions::default()).unwrap();
        let (ok, asym) = check_system(&sys);
        worst = worst.max(asym);
        count += 1;
        ok
    };
    let smooth = Material::isotropic(1.0, 1.0).unwrap();
    let steel = Material::with_model(123.0, 79.3, PlaneModel::Stress).unwrap();
    let smooth_meshes = uniform_meshes(Domain::UnitSquare, 5);
    let lshape_meshes = uniform_meshes(Domain::LShape, 4);
    for p in 1..=3 {
        for mesh in &smooth_meshes {
            pass &= check(mesh, p, &smooth, &ExactSolution::Smooth(smooth));
        }
    }
    let lexact = ExactSolution::LShape(LShapeParams::new(&steel).unwrap());
    for mesh in &lshape_meshes {
        pass &= check(mesh, 1, &steel, &lexact);
    }
    let locking = Mesh::build_initial(Domain::UnitSquare, 4).unwrap();
    for (_, mat) in locking_materials() {
        pass &= check(&locking, 1, &mat, &ExactSolution::Smooth(mat));
    }
    for mesh in smooth_meshes.iter().chain(&lshape_meshes) {
        for k in mesh.active_elements() {
            for pt in 1..=8 {
                let g = local_gram(mesh, k, pt).unwrap();
                pass &= g.cholesky().is_some();
                gram_checks += 1;
            }
        }
    }
    outcome(
        pass,
        format!("{count} global systems, worst asymmetry {worst:.2e}, all factorized; {gram_checks} local Gram factorizations (p~ <= 8)"),
    )
}

fn criterion_8() -> Outcome {
    let mesh = Mesh::build_initial(Domain::UnitSquare, 1).unwrap();
    let mut worst42: f64 = 0.0;
    let mut worst43: f64 = 0.0;
    let materials = [
        Material::isotropic(1.0, 1.0).unwrap(),
        Material::isotropic(0.0, 0.5).unwrap(),
        Material::with_model(123.0, 79.3, PlaneModel::Stress).unwrap(),
        Material::from_poisson(0.499, 0.5).unwrap(),
    ];
    for mat in &materials {
        for p in 1..=3 {
            let d = DegreeMap::uniform(&mesh, p, 2).unwrap();
            let sys = LocalSystem::build(&mesh, &d, 0, mat, |_, _| [0.0; 2]).unwrap();
            let trial = identity_stress_trial(&mesh, &sys.layout);
            let t = sys.optimal_test(&DMatrix::from_column_slice(trial.len(), 1, trial.as_slice()));
            let want = sys.test.identity_tau(mat.q0);
            worst42 = worst42.max((t.column(0) - &want).amax());
            let (t_alpha, _) = element_border(&sys, mat);
            worst43 = worst43.max((t_alpha - sys.test.identity_tau(1.0)).amax());
        }
    }
    outcome(
        worst42 <= 1e-11 && worst43 <= 1e-11,
        format!("T(I,0,0,I n) - (Q0 I,0): {worst42:.2e}; alpha test function - (I,0): {worst43:.2e}"),
    )
}

fn criterion_9() -> Outcome {
    let r2 = run_convergence_study(&lshape_config(1, 6, Mode::AdaptiveH, 2)).unwrap();
    let r4 = run_convergence_study(&lshape_config(1, 6, Mode::AdaptiveH, 4)).unwrap();
    let same_meshes = r2.iter().zip(&r4).all(|(a, b)| a.n_dofs == b.n_dofs);
    let worst = r2.iter().zip(&r4).map(|(a, b)| (b.eta / a.eta - 1.0).abs()).fold(0.0, f64::max);
    outcome(
        worst <= 0.05,
        format!("max pointwise relative difference of eta {:.2}% (identical meshes: {same_meshes})", 100.0 * worst),
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let rh = run_convergence_study(&lshape_config(2, 14, Mode::AdaptiveH, 2)).unwrap();
    let rhp = run_convergence_study(&lshape_config(2, 12, Mode::AdaptiveHp, 2)).unwrap();
    let slope = |rows: &[ReportRow]| observed_rate(&column(rows, |r| r.n_dofs as f64), &column(rows, |r| r.e_rel));
    let (sh, shp) = (slope(&rh), slope(&rhp));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        sh <= -0.9 && shp <= -1.2 && secs <= 600.0,
        format!(
            "p=2: adaptive_h slope {sh:.3} ({} steps, N={}), adaptive_hp slope {shp:.3} ({} steps, N={}); {secs:.1}s",
            rh.len(),
            rh.last().unwrap().n_dofs,
            rhp.len(),
            rhp.last().unwrap().n_dofs
        ),
    )
}

fn criterion_11() -> Outcome {
    let steel = Material::with_model(123.0, 79.3, PlaneModel::Stress).unwrap();
    let a = lshape_exponent(&steel).unwrap();
    let params = LShapeParams::new(&steel).unwrap();
    let residual = lshape_equation(a, params.factor).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_div, mut worst_compat): (f64, f64) = (0.0, 0.0);
    let mut n = 0;
    while n < 20 {
        let (x, y): (f64, f64) = (rng.gen_range(-0.95..0.95), rng.gen_range(-0.95..0.95));
        if (x > -0.05 && y < 0.05) || x.hypot(y) < 0.1 {
            continue;
        }
        n += 1;
        let h = 1e-5 * x.hypot(y);
        let s = |a: f64, b: f64| lshape_solution(&params, a, b).unwrap();
        let (px, mx, py, my) = (s(x + h, y), s(x - h, y), s(x, y + h), s(x, y - h));
        let div = [
            (px.sigma[0][0] - mx.sigma[0][0] + py.sigma[0][1] - my.sigma[0][1]) / (2.0 * h),
            (px.sigma[1][0] - mx.sigma[1][0] + py.sigma[1][1] - my.sigma[1][1]) / (2.0 * h),
        ];
        worst_div = worst_div.max(div[0].abs()).max(div[1].abs());
        let e11 = (px.u[0] - mx.u[0]) / (2.0 * h);
        let e22 = (py.u[1] - my.u[1]) / (2.0 * h);
        let e12 = 0.5 * ((py.u[0] - my.u[0]) + (px.u[1] - mx.u[1])) / (2.0 * h);
        let au = steel.apply_compliance(&s(x, y).sigma);
        for (fd, an) in [(e11, au[0][0]), (e12, au[0][1]), (e22, au[1][1])] {
            worst_compat = worst_compat.max((fd - an).abs());
        }
    }
    outcome(
        (a - 0.6038).abs() <= 5e-4 && residual <= 1e-12 && worst_div <= 1e-6 && worst_compat <= 1e-6,
        format!("a = {a:.7}, residual {residual:.1e}, max |div sigma| {worst_div:.1e}, max |eps(u) - A sigma| {worst_compat:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("smooth h-rates", criterion_1),
        ("smooth p-exponential", criterion_2),
        ("L-shape stress rate", criterion_3),
        ("locking-free", criterion_4),
        ("method equivalence", criterion_5),
        ("rank-one structure", criterion_6),
        ("SPD property suite", criterion_7),
        ("lemma identities", criterion_8),
        ("delta p robustness", criterion_9),
        ("adaptivity rates", criterion_10),
        ("singularity exponent", criterion_11),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} [{tag}] {name}: {} ({:.1}s)", i + 1, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
