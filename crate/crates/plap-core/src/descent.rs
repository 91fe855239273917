//! Regularized steepest descent for the p-Laplace energy: direction from a
//! weighted Poisson solve with weight `(delta + |grad u|)^(p-2)`, step width
//! from a bracketing + golden-section line search. Serves as the comparison
//! baseline for the Kacanov runs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, assemble_weighted_stiffness, gradient, solve_spd, P1Function, SourceTerm,
};
use crate::mesh::{element_geometry, Mesh};
use crate::relax::{energy_primal, Exponents};

/// Parameters of the baseline scheme.
#[derive(Debug, Clone, Copy)]
pub struct BaselineConfig {
    pub delta: f64,
    pub line_search_tol: f64,
    pub max_iterations: usize,
}

impl Default for BaselineConfig {
    fn default() -> BaselineConfig {
        BaselineConfig {
            delta: 1e-6,
            line_search_tol: 1e-10,
            max_iterations: 500,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "regularization delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.line_search_tol > 0.0) {
            return Err(Error::Config("line_search_tol must be positive".into()));
        }
        Ok(())
    }
}

/// `x^e` through the log domain, clamped to a finite, positive range so that
/// p = 100 weights cannot overflow the assembly.
fn stable_pow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        return 1.0;
    }
    if x <= 0.0 {
        return 0.0;
    }
    (e * x.ln()).clamp(-690.0, 690.0).exp()
}

/// Solves for the descent direction `d`: weighted stiffness with weight
/// `(delta + |grad u|_T)^(p-2)`, right-hand side
/// `-int |grad u|^(p-2) grad u . grad v + int f v`.
pub fn descent_direction(
    u: &P1Function,
    f: &SourceTerm,
    exps: Exponents,
    delta: f64,
) -> Result<P1Function> {
    let mesh = u.mesh().clone();
    let p = exps.p();
    let grads = gradient(u);
    let w: Vec<f64> = (0..mesh.n_triangles())
        .map(|t| stable_pow(delta + grads.magnitude(t), p - 2.0).max(1e-300))
        .collect();
    let mut load = assemble_load(&mesh, f);
    for t in 0..mesh.n_triangles() {
        let g = element_geometry(&mesh, t)?;
        let coef = stable_pow(grads.magnitude(t), p - 2.0);
        let tri = &mesh.triangles[t];
        for i in 0..3 {
            load[tri.v[i]] -= g.area
                * coef
                * (grads.values[t][0] * g.grad[i][0] + grads.values[t][1] * g.grad[i][1]);
        }
    }
    let system = assemble_weighted_stiffness(&mesh, &w)?.with_load(&load);
    solve_spd(&system)
}

/// Exact restriction of the energy to the line `u + alpha d`: per element the
/// gradient is affine in `alpha`, the load term linear.
struct LineEnergy {
    // (area, grad u, grad d) per triangle
    elements: Vec<(f64, [f64; 2], [f64; 2])>,
    load_u: f64,
    load_d: f64,
    p: f64,
}

impl LineEnergy {
    fn new(u: &P1Function, d: &P1Function, f: &SourceTerm, exps: Exponents) -> LineEnergy {
        let mesh = u.mesh();
        let gu = gradient(u);
        let gd = gradient(d);
        let load = assemble_load(mesh, f);
        let dot = |c: &[f64]| load.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        let elements = (0..mesh.n_triangles())
            .map(|t| (mesh.triangle_area(t), gu.values[t], gd.values[t]))
            .collect();
        LineEnergy {
            elements,
            load_u: dot(&u.coeffs),
            load_d: dot(&d.coeffs),
            p: exps.p(),
        }
    }

    fn eval(&self, alpha: f64) -> f64 {
        let mut bulk = 0.0;
        for &(area, gu, gd) in &self.elements {
            let gx = gu[0] + alpha * gd[0];
            let gy = gu[1] + alpha * gd[1];
            let norm = (gx * gx + gy * gy).sqrt();
            bulk += area * stable_pow(norm, self.p) / self.p;
        }
        bulk - self.load_u - alpha * self.load_d
    }
}

/// Minimizes `J(u + alpha d)` over `alpha >= 0`. Returns `(alpha, descent)`;
/// `descent = false` (with `alpha = 0`) means no probe produced a decrease,
/// i.e. `d` is not a descent direction at the search resolution.
pub fn line_search(
    u: &P1Function,
    d: &P1Function,
    f: &SourceTerm,
    exps: Exponents,
    tol: f64,
) -> (f64, bool) {
    let energy = LineEnergy::new(u, d, f, exps);
    let j0 = energy.eval(0.0);
    // find a probe with decrease, halving from alpha = 1
    let mut a = 1.0;
    let mut ja = energy.eval(a);
    while !(ja < j0) {
        a *= 0.5;
        if a < 1e-300 {
            return (0.0, false);
        }
        ja = energy.eval(a);
    }
    // double until the energy turns back up; convexity along the line makes
    // it unimodal, so [0, hi] brackets the minimizer
    let mut hi = 2.0 * a;
    let mut jhi = energy.eval(hi);
    while jhi < ja && hi < 1e300 {
        ja = jhi;
        hi *= 2.0;
        jhi = energy.eval(hi);
    }
    // golden-section on [lo, hi]
    let inv_phi = 0.618_033_988_749_894_9;
    let mut lo = 0.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut j1 = energy.eval(x1);
    let mut j2 = energy.eval(x2);
    while hi - lo > tol * hi.max(1.0) {
        if j1 <= j2 {
            hi = x2;
            x2 = x1;
            j2 = j1;
            x1 = hi - inv_phi * (hi - lo);
            j1 = energy.eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            j1 = j2;
            x2 = lo + inv_phi * (hi - lo);
            j2 = energy.eval(x2);
        }
    }
    let alpha = 0.5 * (lo + hi);
    (alpha, energy.eval(alpha) < j0)
}

/// Outcome of a steepest-descent run.
#[derive(Debug)]
pub struct DescentRun {
    pub u: P1Function,
    /// unrelaxed energy after each accepted iteration
    pub energies: Vec<f64>,
    pub iterations: usize,
    /// true when the search direction stopped producing descent
    pub no_descent: bool,
    pub converged: bool,
}

/// Steepest descent from the Poisson initializer. Stops at the iteration
/// budget, at a vanishing direction, on the no-descent flag, or as soon as
/// the energy reaches `energy_target` (when given).
pub fn run_steepest_descent(
    mesh: Arc<Mesh>,
    f: &SourceTerm,
    exps: Exponents,
    cfg: &BaselineConfig,
    energy_target: Option<f64>,
) -> Result<DescentRun> {
    cfg.validate()?;
    // Poisson initializer: unit-weight solve
    let load = assemble_load(&mesh, f);
    let system = assemble_weighted_stiffness(&mesh, &vec![1.0; mesh.n_triangles()])?
        .with_load(&load);
    let mut u = solve_spd(&system)?;
    let mut energies = vec![energy_primal(&u, f, None, &exps)?];
    let mut no_descent = false;
    let mut converged = false;
    let mut iterations = 0;
    let scale = u.norm_inf().max(1.0);
    for _ in 0..cfg.max_iterations {
        if let Some(target) = energy_target {
            if *energies.last().unwrap() <= target {
                converged = true;
                break;
            }
        }
        let d = descent_direction(&u, f, exps, cfg.delta)?;
        if d.norm_inf() <= 1e-14 * scale {
            converged = true;
            break;
        }
        let (alpha, descent) = line_search(&u, &d, f, exps, cfg.line_search_tol);
        if !descent {
            no_descent = true;
            break;
        }
        u.axpy(alpha, &d);
        iterations += 1;
        energies.push(energy_primal(&u, f, None, &exps)?);
    }
    if let (Some(target), false) = (energy_target, converged) {
        converged = *energies.last().unwrap() <= target;
    }
    Ok(DescentRun { u, energies, iterations, no_descent, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{bisect, make_lshape_mesh, make_unit_disk_mesh};

    fn refined_disk(rounds: usize) -> Arc<Mesh> {
        let mut mesh = make_unit_disk_mesh(12).unwrap();
        for _ in 0..rounds {
            let all: Vec<usize> = (0..mesh.n_triangles()).collect();
            mesh = bisect(&mesh, &all).unwrap();
        }
        Arc::new(mesh)
    }

    #[test]
    fn p2_direction_from_zero_is_poisson_and_alpha_is_one() {
        let mesh = refined_disk(1);
        let f = SourceTerm::constant(&mesh, 1.0);
        let exps = Exponents::new(2.0).unwrap();
        let u0 = P1Function::zeros(mesh.clone());
        let d = descent_direction(&u0, &f, exps, 1e-6).unwrap();
        // d solves the Poisson problem directly
        let load = assemble_load(&mesh, &f);
        let sys = assemble_weighted_stiffness(&mesh, &vec![1.0; mesh.n_triangles()])
            .unwrap()
            .with_load(&load);
        let poisson = solve_spd(&sys).unwrap();
        for (a, b) in d.coeffs.iter().zip(&poisson.coeffs) {
            assert!((a - b).abs() < 1e-11);
        }
        // the energy is quadratic along d with its vertex at alpha = 1
        let (alpha, descent) = line_search(&u0, &d, &f, exps, 1e-10);
        assert!(descent);
        assert!((alpha - 1.0).abs() < 1e-6, "alpha = {alpha}");
    }

    #[test]
    fn direction_at_discrete_minimizer_vanishes() {
        // p = 2: the Poisson solution is the exact discrete minimizer
        let mesh = refined_disk(1);
        let f = SourceTerm::constant(&mesh, 1.0);
        let exps = Exponents::new(2.0).unwrap();
        let load = assemble_load(&mesh, &f);
        let sys = assemble_weighted_stiffness(&mesh, &vec![1.0; mesh.n_triangles()])
            .unwrap()
            .with_load(&load);
        let u = solve_spd(&sys).unwrap();
        let d = descent_direction(&u, &f, exps, 1e-6).unwrap();
        assert!(d.norm_inf() <= 1e-10 * u.norm_inf());
    }

    #[test]
    fn line_search_scales_inversely_with_direction() {
        let mesh = refined_disk(1);
        let f = SourceTerm::constant(&mesh, 1.0);
        let exps = Exponents::new(10.0).unwrap();
        let load = assemble_load(&mesh, &f);
        let sys = assemble_weighted_stiffness(&mesh, &vec![1.0; mesh.n_triangles()])
            .unwrap()
            .with_load(&load);
        let u = solve_spd(&sys).unwrap();
        let d = descent_direction(&u, &f, exps, 1e-6).unwrap();
        let (a1, ok1) = line_search(&u, &d, &f, exps, 1e-12);
        let mut d3 = d.clone();
        for c in d3.coeffs.iter_mut() {
            *c *= 3.0;
        }
        let (a3, ok3) = line_search(&u, &d3, &f, exps, 1e-12);
        assert!(ok1 && ok3);
        assert!((a1 / a3 - 3.0).abs() < 1e-4, "a1 = {a1}, a3 = {a3}");
    }

    #[test]
    fn first_step_descends_for_p10() {
        let mesh = refined_disk(1);
        let f = SourceTerm::constant(&mesh, 1.0);
        let exps = Exponents::new(10.0).unwrap();
        let load = assemble_load(&mesh, &f);
        let sys = assemble_weighted_stiffness(&mesh, &vec![1.0; mesh.n_triangles()])
            .unwrap()
            .with_load(&load);
        let u = solve_spd(&sys).unwrap();
        let j0 = energy_primal(&u, &f, None, &exps).unwrap();
        let d = descent_direction(&u, &f, exps, 1e-6).unwrap();
        for &v in &mesh.dirichlet_vertices {
            assert_eq!(d.coeffs[v], 0.0);
        }
        let (alpha, descent) = line_search(&u, &d, &f, exps, 1e-10);
        assert!(descent && alpha > 0.0);
        let mut u1 = u.clone();
        u1.axpy(alpha, &d);
        assert!(energy_primal(&u1, &f, None, &exps).unwrap() < j0);
    }

    #[test]
    fn run_p2_converges_immediately() {
        let mesh = refined_disk(1);
        let f = SourceTerm::constant(&mesh, 1.0);
        let exps = Exponents::new(2.0).unwrap();
        let run = run_steepest_descent(mesh, &f, exps, &BaselineConfig::default(), None).unwrap();
        assert!(run.converged && !run.no_descent);
        assert!(run.iterations <= 1);
    }

    #[test]
    fn run_p5_energy_history_is_monotone() {
        let mut mesh = make_lshape_mesh().unwrap();
        for _ in 0..3 {
            let all: Vec<usize> = (0..mesh.n_triangles()).collect();
            mesh = bisect(&mesh, &all).unwrap();
        }
        let mesh = Arc::new(mesh);
        let f = SourceTerm::constant(&mesh, 1.0);
        let exps = Exponents::new(5.0).unwrap();
        let cfg = BaselineConfig { max_iterations: 40, ..BaselineConfig::default() };
        let run = run_steepest_descent(mesh, &f, exps, &cfg, None).unwrap();
        assert!(run.energies.len() >= 2);
        for w in run.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-13, "energy increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn config_validation() {
        BaselineConfig::default().validate().unwrap();
        assert!(BaselineConfig { delta: 0.0, ..Default::default() }.validate().is_err());
        assert!(
            BaselineConfig { line_search_tol: -1.0, ..Default::default() }.validate().is_err()
        );
    }
}
