//! Relaxed Kacanov iteration: each step solves a linear weighted Poisson
//! problem with weights clamped to the current relaxation interval, then
//! drives the duality gap between the relaxed primal and dual energies to
//! zero. Includes the fixed-interval solver and the algebraic epsilon
//! schedule `eps_n = ((n+1)^-alpha, (n+1)^beta)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, assemble_weighted_stiffness, gradient, solve_spd, P0VectorField, P1Function,
    SourceTerm,
};
use crate::mesh::Mesh;
use crate::relax::{energy_dual, energy_primal, Exponents, RelaxInterval};

/// Current iterate of the relaxed Kacanov scheme. `sigma` is the dual
/// variable `phi_eps'(|grad u|)/|grad u| grad u`; it starts at zero so the
/// first step is a plain Poisson solve.
#[derive(Debug, Clone)]
pub struct KacanovState {
    pub u: P1Function,
    pub sigma: P0VectorField,
    pub eps: RelaxInterval,
    pub iteration: usize,
    pub primal_energy: f64,
    pub dual_energy: f64,
}

impl KacanovState {
    pub fn initial(mesh: Arc<Mesh>, eps: RelaxInterval) -> KacanovState {
        KacanovState {
            u: P1Function::zeros(mesh.clone()),
            sigma: P0VectorField::zeros(mesh),
            eps,
            iteration: 0,
            primal_energy: f64::INFINITY,
            dual_energy: f64::INFINITY,
        }
    }

    pub fn gap(&self) -> f64 {
        self.primal_energy + self.dual_energy
    }
}

/// One relaxed Kacanov step: weights `clamp(|sigma_T|)^(2-q)` from the dual
/// iterate, one weighted Poisson solve, then `sigma <- w grad u`. Updates
/// the relaxed energies of the new iterate in place.
pub fn kacanov_step(state: &mut KacanovState, f: &SourceTerm, exps: Exponents) -> Result<()> {
    let mesh = state.u.mesh().clone();
    let q = exps.q();
    let w: Vec<f64> = (0..mesh.n_triangles())
        .map(|t| state.eps.clamp(state.sigma.magnitude(t)).powf(2.0 - q))
        .collect();
    let load = assemble_load(&mesh, f);
    let system = assemble_weighted_stiffness(&mesh, &w)?.with_load(&load);
    let u = solve_spd(&system)?;
    let grad = gradient(&u);
    let sigma_values: Vec<[f64; 2]> = grad
        .values
        .iter()
        .zip(&w)
        .map(|(g, wt)| [wt * g[0], wt * g[1]])
        .collect();
    state.sigma = P0VectorField::from_values(mesh, sigma_values);
    state.u = u;
    state.iteration += 1;
    state.primal_energy = energy_primal(&state.u, f, Some(&state.eps), &exps)?;
    state.dual_energy = energy_dual(&state.sigma, Some(&state.eps), &exps)?;
    Ok(())
}

/// Outcome of a Kacanov run. `converged` is false when the iteration budget
/// ran out before the gap tolerance was met; the final state is still valid.
#[derive(Debug)]
pub struct KacanovRun {
    pub state: KacanovState,
    pub converged: bool,
    pub gap_history: Vec<f64>,
}

/// Iterates on a fixed relaxation interval until the duality gap
/// `J_eps(u) + J*_eps(sigma)` drops below `gap_tol`.
pub fn run_fixed_interval(
    mesh: Arc<Mesh>,
    f: &SourceTerm,
    exps: Exponents,
    eps: RelaxInterval,
    gap_tol: f64,
    max_iterations: usize,
) -> Result<KacanovRun> {
    let mut state = KacanovState::initial(mesh, eps);
    let mut gap_history = Vec::new();
    for _ in 0..max_iterations {
        kacanov_step(&mut state, f, exps)?;
        let gap = state.gap();
        gap_history.push(gap);
        if gap <= gap_tol {
            return Ok(KacanovRun { state, converged: true, gap_history });
        }
    }
    Ok(KacanovRun { state, converged: false, gap_history })
}

/// Parameters of the algebraic relaxation schedule. The exponent sum must
/// respect `alpha + beta <= 1/(2-q)`; for q = 2 any nonnegative pair works.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_iterations: usize,
}

impl ScheduleConfig {
    /// Splits the admissible exponent budget evenly: `alpha = beta = 1/(2(2-q))`,
    /// capped at 1 when q = 2.
    pub fn balanced(exps: Exponents, max_iterations: usize) -> ScheduleConfig {
        let q = exps.q();
        let half = if q >= 2.0 { 1.0 } else { 0.5 / (2.0 - q) };
        ScheduleConfig { alpha: half, beta: half, max_iterations }
    }

    pub fn validate(&self, exps: Exponents) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("schedule exponents must be nonnegative".into()));
        }
        let q = exps.q();
        if q < 2.0 && self.alpha + self.beta > 1.0 / (2.0 - q) + 1e-12 {
            return Err(Error::Config(format!(
                "schedule exponents alpha + beta = {} exceed 1/(2-q) = {}",
                self.alpha + self.beta,
                1.0 / (2.0 - q)
            )));
        }
        Ok(())
    }

    pub fn eps_at(&self, n: usize) -> RelaxInterval {
        let m = (n + 1) as f64;
        RelaxInterval::new(m.powf(-self.alpha), m.powf(self.beta)).expect("valid schedule interval")
    }
}

/// Kacanov iteration with the widening schedule `eps_n = ((n+1)^-alpha,
/// (n+1)^beta)`. The gap is always evaluated on the interval the iterate was
/// produced with.
pub fn run_fixed_schedule(
    mesh: Arc<Mesh>,
    f: &SourceTerm,
    exps: Exponents,
    schedule: ScheduleConfig,
    gap_tol: f64,
) -> Result<KacanovRun> {
    schedule.validate(exps)?;
    let mut state = KacanovState::initial(mesh, schedule.eps_at(0));
    let mut gap_history = Vec::new();
    for n in 0..schedule.max_iterations {
        state.eps = schedule.eps_at(n);
        kacanov_step(&mut state, f, exps)?;
        let gap = state.gap();
        gap_history.push(gap);
        // the initial interval [1,1] makes the relaxed problem linear, so the
        // first gap is spuriously zero; never stop on it
        if n > 0 && gap <= gap_tol {
            return Ok(KacanovRun { state, converged: true, gap_history });
        }
    }
    Ok(KacanovRun { state, converged: false, gap_history })
}
