//! The four a posteriori error indicators and the fully adaptive loop:
//! interval adaptation (grow `eps_plus`, shrink `eps_minus`), Doerfler-marked
//! mesh bisection, or another Kacanov step — whichever indicator is largest.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{P0VectorField, P1Function, SourceTerm};
use crate::kacanov::{kacanov_step, KacanovState};
use crate::mesh::{bisect, element_geometry, Mesh};
use crate::record::{Action, ConvergenceRecord, RunHistory};
use crate::relax::{
    energy_dual, energy_dual_clamped, energy_primal, shifted_conjugate, v_primal, Exponents,
    RelaxInterval,
};

/// Squared error indicators of one adaptive round. `eta_h_sq` already carries
/// the weight `rho`; the per-element values do not.
#[derive(Debug, Clone)]
pub struct IndicatorReport {
    pub eta_eps_plus_sq: f64,
    pub eta_eps_minus_sq: f64,
    pub eta_kacanov_sq: f64,
    pub eta_h_sq: f64,
    pub per_element_eta_h_sq: Vec<f64>,
    pub rho: f64,
}

impl IndicatorReport {
    pub fn compute(
        u: &P1Function,
        sigma: &P0VectorField,
        f: &SourceTerm,
        eps: &RelaxInterval,
        exps: &Exponents,
        rho: f64,
    ) -> Result<IndicatorReport> {
        let (eta_h_sq, per_element_eta_h_sq) =
            indicator_discretization(u, f, eps, exps, u.mesh(), rho)?;
        Ok(IndicatorReport {
            eta_eps_plus_sq: indicator_eps_plus(sigma, eps, exps)?,
            eta_eps_minus_sq: indicator_eps_minus(sigma, eps, exps)?,
            eta_kacanov_sq: indicator_kacanov(u, sigma, f, eps, exps)?,
            eta_h_sq,
            per_element_eta_h_sq,
            rho,
        })
    }
}

/// Error attributed to the upper interval bound: the dual-energy excess of
/// the clamp at `eps_plus` over the one-sided relaxation `(eps_minus, inf)`.
pub fn indicator_eps_plus(
    sigma: &P0VectorField,
    eps: &RelaxInterval,
    exps: &Exponents,
) -> Result<f64> {
    let relaxed = energy_dual(sigma, Some(eps), exps)?;
    let released = energy_dual_clamped(sigma, eps.eps_minus(), f64::INFINITY, exps)?;
    Ok(relaxed - released)
}

/// Error attributed to the lower interval bound, releasing the clamp at
/// `eps_minus`.
pub fn indicator_eps_minus(
    sigma: &P0VectorField,
    eps: &RelaxInterval,
    exps: &Exponents,
) -> Result<f64> {
    let relaxed = energy_dual(sigma, Some(eps), exps)?;
    let released = energy_dual_clamped(sigma, 0.0, eps.eps_plus(), exps)?;
    Ok(relaxed - released)
}

/// Fixed-point (Kacanov) error: the relaxed duality gap.
pub fn indicator_kacanov(
    u: &P1Function,
    sigma: &P0VectorField,
    f: &SourceTerm,
    eps: &RelaxInterval,
    exps: &Exponents,
) -> Result<f64> {
    Ok(energy_primal(u, f, Some(eps), exps)? + energy_dual(sigma, Some(eps), exps)?)
}

/// Residual-type discretization indicator. Per element:
/// `area_T * (phi_{eps,|grad u|})*(h_T |f_T|)` plus, for each interior edge,
/// `h_e^2 |[[V_eps(grad u)]]|^2` (the jump is constant along the edge, so the
/// edge integral is exact). Returns `(rho * sum, per-element values)`.
pub fn indicator_discretization(
    u: &P1Function,
    f: &SourceTerm,
    eps: &RelaxInterval,
    exps: &Exponents,
    mesh: &Mesh,
    rho: f64,
) -> Result<(f64, Vec<f64>)> {
    let grads = crate::fem::gradient(u);
    let v: Vec<[f64; 2]> = grads
        .values
        .iter()
        .map(|&g| v_primal(g, eps, exps))
        .collect();
    let mut per_element = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let g = element_geometry(mesh, t)?;
        let gnorm = (grads.values[t][0].powi(2) + grads.values[t][1].powi(2)).sqrt();
        let mut eta = g.area * shifted_conjugate(gnorm, g.diameter * f.values[t].abs(), eps, exps)?;
        let tri = &mesh.triangles[t];
        for e in 0..3 {
            let (a, b) = tri.edge(e);
            let edge = mesh
                .edge_lookup(a, b)
                .ok_or_else(|| Error::Assembly(format!("edge ({a},{b}) missing")))?;
            let Some(other) = edge.other_triangle(t) else {
                continue; // boundary edge: no jump
            };
            let jump = [v[t][0] - v[other][0], v[t][1] - v[other][1]];
            eta += edge.length * edge.length * (jump[0] * jump[0] + jump[1] * jump[1]);
        }
        per_element.push(eta);
    }
    let total: f64 = per_element.iter().sum();
    Ok((rho * total, per_element))
}

/// Greedy Doerfler marking: smallest set (under descending-value order, ties
/// by lower index) whose indicator mass reaches `theta` times the total.
/// All-zero input marks nothing.
pub fn doerfler_mark(per_element: &[f64], theta: f64) -> Vec<usize> {
    assert!(theta > 0.0 && theta < 1.0, "theta must be in (0,1)");
    let total: f64 = per_element.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..per_element.len()).collect();
    order.sort_by(|&i, &j| {
        per_element[j]
            .partial_cmp(&per_element[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut marked = Vec::new();
    let mut mass = 0.0;
    for i in order {
        marked.push(i);
        mass += per_element[i];
        if mass >= theta * total {
            break;
        }
    }
    marked.sort_unstable();
    marked
}

/// Moves a P0 stress field onto a mesh produced from `old_mesh` by a single
/// [`bisect`] call: each child inherits its parent's constant vector.
pub fn transfer_sigma(
    old_mesh: &Mesh,
    new_mesh: &Arc<Mesh>,
    sigma: &P0VectorField,
) -> Result<P0VectorField> {
    if sigma.values.len() != old_mesh.n_triangles() {
        return Err(Error::Transfer(format!(
            "stress field has {} values but the old mesh has {} triangles",
            sigma.values.len(),
            old_mesh.n_triangles()
        )));
    }
    if new_mesh.n_vertices() < old_mesh.n_vertices() {
        return Err(Error::Transfer("new mesh has fewer vertices than the old one".into()));
    }
    let mut values = Vec::with_capacity(new_mesh.n_triangles());
    for (t, tri) in new_mesh.triangles.iter().enumerate() {
        let Some(p) = tri.parent else {
            return Err(Error::Transfer(format!(
                "triangle {t} of the refined mesh has no parent; meshes are unrelated"
            )));
        };
        if p >= old_mesh.n_triangles() {
            return Err(Error::Transfer(format!(
                "triangle {t} points at parent {p} outside the old mesh"
            )));
        }
        values.push(sigma.values[p]);
    }
    Ok(P0VectorField::from_values(new_mesh.clone(), values))
}

fn transfer_source(old_mesh: &Mesh, new_mesh: &Mesh, f: &SourceTerm) -> Result<SourceTerm> {
    let mut values = Vec::with_capacity(new_mesh.n_triangles());
    for tri in &new_mesh.triangles {
        let p = tri
            .parent
            .filter(|&p| p < old_mesh.n_triangles())
            .ok_or_else(|| Error::Transfer("source transfer across unrelated meshes".into()))?;
        values.push(f.values[p]);
    }
    Ok(SourceTerm { values })
}

/// Parameters of the adaptive loop. The factor defaults 1.25 / 0.8 and the
/// initial interval [1, 1] are part of the algorithm; `refine_mesh = false`
/// freezes the mesh and restricts the loop to interval/Kacanov moves.
#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    pub rho: f64,
    pub doerfler_theta: f64,
    pub eps_plus_factor: f64,
    pub eps_minus_factor: f64,
    pub stop_tolerance: f64,
    pub max_rounds: usize,
    pub refine_mesh: bool,
    pub eps_initial: RelaxInterval,
    /// measure per-round wall time; off by default so reruns are byte-identical
    pub timing: bool,
    /// optional work budget: stop once the running dof sum reaches this
    pub max_accumulated_ndof: Option<usize>,
}

impl AdaptiveConfig {
    pub fn new(stop_tolerance: f64, max_rounds: usize) -> AdaptiveConfig {
        AdaptiveConfig {
            rho: 1e-3,
            doerfler_theta: 0.3,
            eps_plus_factor: 1.25,
            eps_minus_factor: 0.8,
            stop_tolerance,
            max_rounds,
            refine_mesh: true,
            eps_initial: RelaxInterval::new(1.0, 1.0).expect("unit interval"),
            timing: false,
            max_accumulated_ndof: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.doerfler_theta > 0.0 && self.doerfler_theta < 1.0) {
            return Err(Error::Config(format!(
                "doerfler_theta must be in (0,1), got {}",
                self.doerfler_theta
            )));
        }
        if !(self.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.eps_plus_factor > 1.0) {
            return Err(Error::Config("eps_plus_factor must exceed 1".into()));
        }
        if !(self.eps_minus_factor > 0.0 && self.eps_minus_factor < 1.0) {
            return Err(Error::Config("eps_minus_factor must lie in (0,1)".into()));
        }
        if !(self.stop_tolerance > 0.0) {
            return Err(Error::Config("stop_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Picks the branch of the largest squared indicator; exact ties resolve in
/// the fixed order eps_plus, eps_minus, refine, kacanov.
pub fn decide_action(report: &IndicatorReport, refine_mesh: bool) -> Action {
    let mut candidates = vec![
        (report.eta_eps_plus_sq, Action::EpsPlus),
        (report.eta_eps_minus_sq, Action::EpsMinus),
    ];
    if refine_mesh {
        candidates.push((report.eta_h_sq, Action::Refine));
    }
    candidates.push((report.eta_kacanov_sq, Action::Kacanov));
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if c.0 > best.0 {
            best = c;
        }
    }
    best.1
}

/// The adaptive relaxed Kacanov algorithm. Each round runs one Kacanov step,
/// evaluates the four indicators, appends a record, and executes the branch
/// of the largest indicator. Stops when the summed squared indicators drop
/// below `stop_tolerance`; hitting `max_rounds` leaves `converged = false`.
pub fn adaptive_loop(
    mesh: Arc<Mesh>,
    f: &SourceTerm,
    exps: Exponents,
    cfg: &AdaptiveConfig,
) -> Result<RunHistory> {
    cfg.validate()?;
    let mut f_cur = f.clone();
    let mut state = KacanovState::initial(mesh, cfg.eps_initial);
    let mut records: Vec<ConvergenceRecord> = Vec::new();
    let mut converged = false;
    let mut ndof_accumulated = 0usize;
    for _ in 0..cfg.max_rounds {
        let start = std::time::Instant::now();
        kacanov_step(&mut state, &f_cur, exps)?;
        let mesh = state.u.mesh().clone();
        let report =
            IndicatorReport::compute(&state.u, &state.sigma, &f_cur, &state.eps, &exps, cfg.rho)?;
        let action = decide_action(&report, cfg.refine_mesh);
        let mut total = report.eta_eps_plus_sq
            + report.eta_eps_minus_sq
            + report.eta_kacanov_sq;
        if cfg.refine_mesh {
            total += report.eta_h_sq;
        }
        let ndof = mesh.free_vertices().len();
        ndof_accumulated += ndof;
        records.push(ConvergenceRecord {
            iteration: state.iteration,
            ndof,
            ndof_accumulated,
            eps_minus: state.eps.eps_minus(),
            eps_plus: state.eps.eps_plus(),
            primal_energy_relaxed: state.primal_energy,
            dual_energy_relaxed: state.dual_energy,
            primal_energy_unrelaxed: energy_primal(&state.u, &f_cur, None, &exps)?,
            dual_energy_unrelaxed: energy_dual(&state.sigma, None, &exps)?,
            gap: report.eta_kacanov_sq,
            eta_eps_plus_sq: report.eta_eps_plus_sq,
            eta_eps_minus_sq: report.eta_eps_minus_sq,
            eta_h_sq: report.eta_h_sq,
            action,
            wall_time: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        if total <= cfg.stop_tolerance {
            converged = true;
            break;
        }
        if cfg.max_accumulated_ndof.is_some_and(|cap| ndof_accumulated >= cap) {
            break;
        }
        match action {
            Action::EpsPlus => {
                state.eps = RelaxInterval::new(
                    state.eps.eps_minus(),
                    state.eps.eps_plus() * cfg.eps_plus_factor,
                )?;
            }
            Action::EpsMinus => {
                state.eps = RelaxInterval::new(
                    state.eps.eps_minus() * cfg.eps_minus_factor,
                    state.eps.eps_plus(),
                )?;
            }
            Action::Refine => {
                let marked = doerfler_mark(&report.per_element_eta_h_sq, cfg.doerfler_theta);
                if !marked.is_empty() {
                    let refined = Arc::new(bisect(&mesh, &marked)?);
                    state.sigma = transfer_sigma(&mesh, &refined, &state.sigma)?;
                    f_cur = transfer_source(&mesh, &refined, &f_cur)?;
                    state.u = P1Function::zeros(refined);
                }
            }
            Action::Kacanov | Action::Descent => {}
        }
    }
    let mesh = state.u.mesh().clone();
    Ok(RunHistory {
        records,
        converged,
        mesh,
        u: state.u,
        sigma: state.sigma,
    })
}
