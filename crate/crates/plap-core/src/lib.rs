//! Discrete minimization of the p-Laplace problem for large exponents
//! (2 <= p < infinity) via a relaxed dual Kacanov iteration.
//!
//! Each Kacanov step solves a single weighted linear Poisson problem with
//! lowest-order Lagrange elements; the nonlinear weight is clamped to a
//! relaxation interval `[eps_minus, eps_plus]` which keeps every linear
//! problem uniformly elliptic. On top of the plain fixed-point iteration the
//! crate provides
//!
//! * a fixed polynomial schedule that grows the relaxation interval,
//! * a fully adaptive loop driven by four a posteriori error indicators
//!   (interval bounds, duality gap, mesh discretization) with Doerfler
//!   marking and newest-vertex bisection,
//! * a regularized steepest-descent baseline with exact-ish line search
//!   for comparison runs,
//! * experiment drivers with CSV/VTK output behind the `plap` CLI.

pub mod adaptive;
pub mod config;
pub mod descent;
pub mod driver;
pub mod error;
pub mod fem;
pub mod kacanov;
pub mod linalg;
pub mod mesh;
pub mod record;
pub mod relax;
pub mod vtk;

pub use adaptive::{adaptive_loop, doerfler_mark, transfer_sigma, AdaptiveConfig, IndicatorReport};
pub use config::{parse_config, Domain, Mode, RunConfig};
pub use descent::{descent_direction, line_search, run_steepest_descent, BaselineConfig};
pub use error::Error;
pub use fem::{
    assemble_load, assemble_weighted_stiffness, divergence_residual, gradient, solve_spd,
    P0VectorField, P1Function, SourceTerm, SpdSystem,
};
pub use kacanov::{
    kacanov_step, run_fixed_interval, run_fixed_schedule, KacanovState, ScheduleConfig,
};
pub use mesh::{bisect, element_geometry, make_lshape_mesh, make_unit_disk_mesh, Mesh, Triangle, Vertex};
pub use record::{ConvergenceRecord, RunHistory};
pub use relax::{
    energy_dual, energy_primal, kappa, kappa_star, phi_eps_prime, phi_eps_star_prime,
    shifted_conjugate, Exponents, RelaxInterval,
};
