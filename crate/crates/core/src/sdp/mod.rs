//! Semidefinite programs in standard form and an embedded interior-point solver.
//!
//! The primal problem is
//!
//! ```text
//! maximize    <C, X> + d'u
//! subject to  A(X) + B u = b,   X = diag(X_1, ..., X_k) PSD,   u free
//! ```
//!
//! Linear functionals are stored as lists of upper-triangle entries: an entry
//! `(block, i, j, v)` with `i <= j` contributes `v * X_block[i, j]`. For
//! `i < j` the equivalent symmetric matrix therefore carries `v / 2` at both
//! `(i, j)` and `(j, i)`.

mod dump;
mod solver;

use alloc::string::String;
use alloc::vec::Vec;

use faer::{Mat, Side};

pub use solver::solve;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("eigenvalue computation failed")]
    Eigen,
    #[error("dump line {line}: {msg}")]
    Dump { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvecEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearFunctional {
    pub entries: Vec<SvecEntry>,
    pub free: Vec<(usize, f64)>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value * X_block[row, col]`; the indices may come in either order.
    pub fn add_entry(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push(SvecEntry { block, row, col, value });
    }

    pub fn add_free(&mut self, var: usize, value: f64) {
        self.free.push((var, value));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.free.is_empty()
    }

    /// Evaluates the functional at block values `x` and free values `u`.
    pub fn eval(&self, x: &[Mat<f64>], u: &[f64]) -> f64 {
        let mut s = 0.0;
        for e in &self.entries {
            s += e.value * x[e.block][(e.row, e.col)];
        }
        for &(k, v) in &self.free {
            s += v * u[k];
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpConstraint {
    pub functional: LinearFunctional,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub free_vars: usize,
    pub constraints: Vec<SdpConstraint>,
    /// Maximized.
    pub objective: LinearFunctional,
}

impl SdpProblem {
    pub fn new(blocks: Vec<usize>, free_vars: usize) -> Self {
        SdpProblem { blocks, free_vars, constraints: Vec::new(), objective: LinearFunctional::new() }
    }

    /// Appends `functional = rhs` and returns its index.
    pub fn add_constraint(&mut self, functional: LinearFunctional, rhs: f64) -> usize {
        self.constraints.push(SdpConstraint { functional, rhs });
        self.constraints.len() - 1
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        use alloc::format;
        if let Some(b) = self.blocks.iter().position(|&n| n == 0) {
            return Err(SdpError::InvalidProblem(format!("block {b} has dimension 0")));
        }
        let check = |f: &LinearFunctional, what: &dyn Fn() -> String| -> Result<(), SdpError> {
            for e in &f.entries {
                let Some(&n) = self.blocks.get(e.block) else {
                    return Err(SdpError::InvalidProblem(format!("{}: unknown block {}", what(), e.block)));
                };
                if e.row > e.col || e.col >= n {
                    return Err(SdpError::InvalidProblem(format!(
                        "{}: entry ({}, {}) outside block {} of size {n}",
                        what(),
                        e.row,
                        e.col,
                        e.block
                    )));
                }
                if !e.value.is_finite() {
                    return Err(SdpError::InvalidProblem(format!("{}: non-finite coefficient", what())));
                }
            }
            for &(k, v) in &f.free {
                if k >= self.free_vars {
                    return Err(SdpError::InvalidProblem(format!("{}: unknown free variable {k}", what())));
                }
                if !v.is_finite() {
                    return Err(SdpError::InvalidProblem(format!("{}: non-finite coefficient", what())));
                }
            }
            Ok(())
        };
        check(&self.objective, &|| String::from("objective"))?;
        for (i, c) in self.constraints.iter().enumerate() {
            check(&c.functional, &|| format!("constraint {i}"))?;
            if !c.rhs.is_finite() {
                return Err(SdpError::InvalidProblem(format!("constraint {i}: non-finite right-hand side")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl SdpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::MaxIterations => "max_iterations",
            SdpStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl core::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Feasibility and relative-gap tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Bound on `|<X_b, Z_b>|` for every block at an optimal exit.
    pub complementarity: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-7, max_iterations: 200, complementarity: 1e-6, step_fraction: 0.98 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rel_gap: f64,
    pub mu: f64,
    pub primal_step: f64,
    pub dual_step: f64,
}

/// Solver output.
///
/// For `Infeasible`, `dual` and `slack` hold the improving ray normalized to
/// `b'y = -1`. For `Unbounded`, `blocks` and `free` hold the primal ray
/// normalized to unit objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub blocks: Vec<Mat<f64>>,
    pub free: Vec<f64>,
    pub dual: Vec<f64>,
    pub slack: Vec<Mat<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rel_gap: f64,
    pub iterations: usize,
    pub history: Vec<IterationStats>,
}

/// Largest entrywise asymmetry tolerated by [`min_eigenvalue`], relative to
/// the largest entry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

pub(crate) fn max_asymmetry(m: &Mat<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn min_eigenvalue(m: &Mat<f64>) -> Result<f64, SdpError> {
    if m.nrows() != m.ncols() {
        return Err(SdpError::NotSquare(m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let scale = m.col_iter().flat_map(|c| c.iter().copied()).fold(1.0f64, |a, v| a.max(v.abs()));
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(SdpError::NotSymmetric(asym));
    }
    let ev = m.self_adjoint_eigenvalues(Side::Lower).map_err(|_| SdpError::Eigen)?;
    Ok(ev[0])
}
