//! Per-iteration convergence records and the CSV history writer.

use std::io::Write;
use std::sync::Arc;

use crate::error::Result;
use crate::fem::{P0VectorField, P1Function};
use crate::mesh::Mesh;

/// Action taken after an iteration; the strings are part of the CSV contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    EpsPlus,
    EpsMinus,
    Refine,
    Kacanov,
    Descent,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::EpsPlus => "eps_plus",
            Action::EpsMinus => "eps_minus",
            Action::Refine => "refine",
            Action::Kacanov => "kacanov",
            Action::Descent => "descent",
        }
    }
}

/// One row of history.csv. Field order matches the serialized column order.
#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub iteration: usize,
    pub ndof: usize,
    pub ndof_accumulated: usize,
    pub eps_minus: f64,
    pub eps_plus: f64,
    pub primal_energy_relaxed: f64,
    pub dual_energy_relaxed: f64,
    pub primal_energy_unrelaxed: f64,
    pub dual_energy_unrelaxed: f64,
    pub gap: f64,
    pub eta_eps_plus_sq: f64,
    pub eta_eps_minus_sq: f64,
    pub eta_h_sq: f64,
    pub action: Action,
    pub wall_time: f64,
}

pub const CSV_HEADER: &str = "iteration,ndof,ndof_accumulated,eps_minus,eps_plus,\
primal_energy_relaxed,dual_energy_relaxed,primal_energy_unrelaxed,dual_energy_unrelaxed,\
gap,eta_eps_plus_sq,eta_eps_minus_sq,eta_h_sq,action,wall_time";

/// 17 significant digits: round-trip exact for f64, locale-free.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

impl ConvergenceRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.ndof,
            self.ndof_accumulated,
            fmt(self.eps_minus),
            fmt(self.eps_plus),
            fmt(self.primal_energy_relaxed),
            fmt(self.dual_energy_relaxed),
            fmt(self.primal_energy_unrelaxed),
            fmt(self.dual_energy_unrelaxed),
            fmt(self.gap),
            fmt(self.eta_eps_plus_sq),
            fmt(self.eta_eps_minus_sq),
            fmt(self.eta_h_sq),
            self.action.label(),
            fmt(self.wall_time),
        )
    }
}

/// Full outcome of a driver run: the row history plus the final discrete state.
#[derive(Debug)]
pub struct RunHistory {
    pub records: Vec<ConvergenceRecord>,
    pub converged: bool,
    pub mesh: Arc<Mesh>,
    pub u: P1Function,
    pub sigma: P0VectorField,
}

impl RunHistory {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}
