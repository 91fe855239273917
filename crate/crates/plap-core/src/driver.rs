//! Experiment drivers: mesh construction, per-mode run loops, reference
//! energies, and the file outputs (history.csv, final.vtk, manifest.txt).
//! All files are written to a temporary name and renamed into place.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::adaptive::{adaptive_loop, IndicatorReport};
use crate::config::{manifest, Domain, Mode, RunConfig};
use crate::descent::run_steepest_descent;
use crate::error::Result;
use crate::fem::SourceTerm;
use crate::kacanov::{kacanov_step, run_fixed_interval, KacanovState};
use crate::mesh::{bisect, make_lshape_mesh, make_unit_disk_mesh, Mesh};
use crate::record::{Action, ConvergenceRecord, RunHistory, CSV_HEADER};
use crate::relax::{energy_dual, energy_primal, Exponents, RelaxInterval};

/// Initial coarse mesh of a domain, uniformly bisected until the vertex
/// count reaches `resolution`.
pub fn build_mesh(domain: Domain, resolution: usize) -> Result<Arc<Mesh>> {
    let mut mesh = match domain {
        Domain::Disk => make_unit_disk_mesh(16)?,
        Domain::Lshape => make_lshape_mesh()?,
    };
    while mesh.n_vertices() < resolution {
        let all: Vec<usize> = (0..mesh.n_triangles()).collect();
        mesh = bisect(&mesh, &all)?;
    }
    Ok(Arc::new(mesh))
}

/// High-accuracy reference for the discrete minimum: runs the fixed-interval
/// scheme to duality gap <= `gap_tol` and returns `-J*(sigma)` evaluated
/// without relaxation.
pub fn reference_energy(
    mesh: Arc<Mesh>,
    f: &SourceTerm,
    exps: Exponents,
    eps: RelaxInterval,
    gap_tol: f64,
    max_iterations: usize,
) -> Result<f64> {
    let run = run_fixed_interval(mesh, f, exps, eps, gap_tol, max_iterations)?;
    if !run.converged {
        return Err(crate::error::Error::Solver {
            achieved: run.state.gap(),
            required: gap_tol,
        });
    }
    Ok(-energy_dual(&run.state.sigma, None, &exps)?)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_records_csv(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{CSV_HEADER}")?;
    for r in records {
        writeln!(buf, "{}", r.csv_row())?;
    }
    atomic_write(path, &buf)
}

fn record_from_state(
    state: &KacanovState,
    f: &SourceTerm,
    exps: Exponents,
    rho: f64,
    ndof_accumulated: usize,
    wall_time: f64,
) -> Result<ConvergenceRecord> {
    let report = IndicatorReport::compute(&state.u, &state.sigma, f, &state.eps, &exps, rho)?;
    Ok(ConvergenceRecord {
        iteration: state.iteration,
        ndof: state.u.mesh().free_vertices().len(),
        ndof_accumulated,
        eps_minus: state.eps.eps_minus(),
        eps_plus: state.eps.eps_plus(),
        primal_energy_relaxed: state.primal_energy,
        dual_energy_relaxed: state.dual_energy,
        primal_energy_unrelaxed: energy_primal(&state.u, f, None, &exps)?,
        dual_energy_unrelaxed: energy_dual(&state.sigma, None, &exps)?,
        gap: report.eta_kacanov_sq,
        eta_eps_plus_sq: report.eta_eps_plus_sq,
        eta_eps_minus_sq: report.eta_eps_minus_sq,
        eta_h_sq: report.eta_h_sq,
        action: Action::Kacanov,
        wall_time,
    })
}

/// Kacanov iteration with per-iteration records; `schedule = true` drives
/// the relaxation interval through the algebraic schedule, otherwise the
/// configured fixed interval is used throughout.
fn run_kacanov_recorded(
    cfg: &RunConfig,
    mesh: Arc<Mesh>,
    f: &SourceTerm,
    schedule: bool,
) -> Result<RunHistory> {
    let exps = cfg.exponents()?;
    let sched = if schedule { Some(cfg.schedule_config()?) } else { None };
    let eps0 = match &sched {
        Some(s) => s.eps_at(0),
        None => cfg.interval()?,
    };
    let mut state = KacanovState::initial(mesh, eps0);
    let mut records = Vec::new();
    let mut converged = false;
    let mut ndof_accumulated = 0;
    for n in 0..cfg.max_iterations {
        if let Some(s) = &sched {
            state.eps = s.eps_at(n);
        }
        let start = Instant::now();
        kacanov_step(&mut state, f, exps)?;
        let wall = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
        ndof_accumulated += state.u.mesh().free_vertices().len();
        records.push(record_from_state(&state, f, exps, cfg.rho, ndof_accumulated, wall)?);
        // the schedule's first interval [1,1] is linear and its gap is
        // spuriously zero; never stop on it
        if (n > 0 || sched.is_none()) && state.gap() <= cfg.gap_tolerance {
            converged = true;
            break;
        }
    }
    let mesh = state.u.mesh().clone();
    Ok(RunHistory { records, converged, mesh, u: state.u, sigma: state.sigma })
}

/// Steepest-descent record rows: the relaxation and indicator columns do not
/// apply and are written as zero; the primal energy carries the comparison.
fn descent_records(
    mesh: &Mesh,
    energies: &[f64],
) -> Vec<ConvergenceRecord> {
    let ndof = mesh.free_vertices().len();
    energies
        .iter()
        .enumerate()
        .map(|(i, &j)| ConvergenceRecord {
            iteration: i + 1,
            ndof,
            ndof_accumulated: (i + 1) * ndof,
            eps_minus: 0.0,
            eps_plus: 0.0,
            primal_energy_relaxed: j,
            dual_energy_relaxed: 0.0,
            primal_energy_unrelaxed: j,
            dual_energy_unrelaxed: 0.0,
            gap: 0.0,
            eta_eps_plus_sq: 0.0,
            eta_eps_minus_sq: 0.0,
            eta_h_sq: 0.0,
            action: Action::Descent,
            wall_time: 0.0,
        })
        .collect()
}

/// Outcome of [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub history: RunHistory,
    /// energy history of the baseline in `steepest_compare` mode
    pub descent_energies: Option<Vec<f64>>,
}

/// Runs the configured experiment and writes `history.csv`, `final.vtk` and
/// `manifest.txt` into `out_dir` (plus `history_steepest.csv` in
/// `steepest_compare` mode). A failing solve still flushes the partial
/// history before the error propagates.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    std::fs::create_dir_all(out_dir)?;
    atomic_write(&out_dir.join("manifest.txt"), manifest(cfg).as_bytes())?;
    let mesh = build_mesh(cfg.domain, cfg.mesh_resolution)?;
    let f = SourceTerm::constant(&mesh, cfg.f);
    let exps = cfg.exponents()?;
    let history_path = out_dir.join("history.csv");

    let result = match cfg.mode {
        Mode::Schedule => run_kacanov_recorded(cfg, mesh.clone(), &f, true),
        Mode::FixedInterval | Mode::SteepestCompare => {
            run_kacanov_recorded(cfg, mesh.clone(), &f, false)
        }
        Mode::Adaptive => adaptive_loop(mesh.clone(), &f, exps, &cfg.adaptive_config()?),
    };
    let history = match result {
        Ok(h) => h,
        Err(e) => {
            // flush whatever was recorded before the failure
            let _ = write_records_csv(&history_path, &[]);
            return Err(e);
        }
    };
    write_records_csv(&history_path, &history.records)?;

    let mut descent_energies = None;
    if cfg.mode == Mode::SteepestCompare {
        let run = run_steepest_descent(mesh.clone(), &f, exps, &cfg.baseline_config()?, None)?;
        write_records_csv(
            &out_dir.join("history_steepest.csv"),
            &descent_records(&mesh, &run.energies),
        )?;
        descent_energies = Some(run.energies);
    }

    let mut vtk = Vec::new();
    crate::vtk::write_vtk(&mut vtk, &history.mesh, &history.u, &history.sigma)?;
    atomic_write(&out_dir.join("final.vtk"), &vtk)?;
    Ok(ExperimentOutcome { history, descent_energies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    #[test]
    fn build_mesh_reaches_resolution() {
        for domain in [Domain::Disk, Domain::Lshape] {
            let mesh = build_mesh(domain, 500).unwrap();
            assert!(mesh.n_vertices() >= 500);
            assert!(mesh.n_vertices() < 500 * 8, "overshoot: {}", mesh.n_vertices());
        }
    }

    #[test]
    fn reference_energy_for_p2_disk_is_near_the_poisson_value() {
        // -J*(sigma) with q = 2 equals the (negative) Dirichlet energy of the
        // Poisson solution; on the unit disk with f = 1 the continuous value
        // is -pi/16 ~ -0.19635
        let mesh = build_mesh(Domain::Disk, 2000).unwrap();
        let f = SourceTerm::constant(&mesh, 1.0);
        let exps = Exponents::new(2.0).unwrap();
        let eps = RelaxInterval::new(1e-6, 1e6).unwrap();
        let j = reference_energy(mesh, &f, exps, eps, 1e-9, 50).unwrap();
        assert!((j - (-std::f64::consts::PI / 16.0)).abs() < 2e-3, "got {j}");
    }

    #[test]
    fn fixed_interval_p2_experiment_files() {
        let dir = std::env::temp_dir().join(format!("plap-drv-{}", std::process::id()));
        let cfg = parse_config_str(
            "mode = fixed_interval\np = 2\nmesh_resolution = 200\ngap_tolerance = 1e-12\n",
        )
        .unwrap();
        let outcome = run_experiment(&cfg, &dir).unwrap();
        assert!(outcome.history.converged);
        assert!(outcome.history.records.len() <= 2);
        assert!(outcome.history.records.last().unwrap().gap <= 1e-12);
        for file in ["history.csv", "final.vtk", "manifest.txt"] {
            assert!(dir.join(file).exists(), "{file} missing");
        }
        let csv = std::fs::read_to_string(dir.join("history.csv")).unwrap();
        assert!(csv.starts_with("iteration,"));
        // byte-identical rerun (timing disabled by default)
        let again = std::fs::read(dir.join("history.csv")).unwrap();
        run_experiment(&cfg, &dir).unwrap();
        assert_eq!(std::fs::read(dir.join("history.csv")).unwrap(), again);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn steepest_compare_writes_both_histories() {
        let dir = std::env::temp_dir().join(format!("plap-drv-sc-{}", std::process::id()));
        let cfg = parse_config_str(
            "mode = steepest_compare\np = 5\nmesh_resolution = 100\nmax_iterations = 30\n\
             gap_tolerance = 1e-6\n",
        )
        .unwrap();
        let outcome = run_experiment(&cfg, &dir).unwrap();
        assert!(dir.join("history_steepest.csv").exists());
        let energies = outcome.descent_energies.unwrap();
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-13);
        }
        let steepest = std::fs::read_to_string(dir.join("history_steepest.csv")).unwrap();
        assert!(steepest.lines().nth(1).unwrap().contains(",descent,"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
