//! Numerical solvers: a log-barrier interior-point method for smooth convex
//! programs with linear objective, and a dense two-phase simplex for LPs.

mod barrier;
mod lp;

pub use barrier::{
    solve_convex, BarrierOptions, Constraint, ConvexProgram, QuadBlock, QuadForm,
};
pub use lp::{solve_lp, LinearProgram};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    MaxIter,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolverStatus,
    /// Newton steps (barrier) or pivots (simplex).
    pub iterations: usize,
    /// Duality-gap bound for the barrier method, primal infeasibility for the LP.
    pub kkt_residual: f64,
    pub objective: f64,
    /// Largest constraint value at the returned point (`<= 0` means feasible).
    pub max_violation: f64,
}

impl SolverReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolverStatus::Optimal
    }
}
