//! Dense conic optimization.
//!
//! Programs have the form
//!
//! ```text
//! minimize    cᵀx + c₀
//! subject to  Fₖ x + gₖ ∈ Kₖ   for every constraint k
//! ```
//!
//! with each `Kₖ` one of the cones in [`Cone`]. They are solved with a
//! homogeneous self-dual embedding, Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector, using dense factorizations throughout. The solver
//! is single-threaded and deterministic.
//!
//! Conventions:
//! * `RotatedSoc`: `(u, v, w)` with `2uv ≥ ‖w‖²`, `u, v ≥ 0`.
//! * `Psd(p)`: rows list the lower triangle of a symmetric `p×p` matrix,
//!   column by column: `(0,0), (1,0), …, (p-1,0), (1,1), …`. Entries are
//!   not scaled. Duals of PSD constraints are returned in the same layout
//!   as entries of the dual matrix.
//! * The dual of `min cᵀx + c₀, Fₖx + gₖ ∈ Kₖ` is
//!   `max c₀ - Σ⟨zₖ, gₖ⟩` subject to `Σ Fₖᵀzₖ = c`, `zₖ ∈ Kₖ*`.

mod cones;
mod ipm;

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{bail, Result};

pub use ipm::estimate_memory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Equality: every row equals zero.
    Zero(usize),
    Nonneg(usize),
    /// `(t, x)` with `t ≥ ‖x‖`; the dimension counts `t`.
    Soc(usize),
    /// `(u, v, w)` with `2uv ≥ ‖w‖²`; the dimension counts `u` and `v`.
    RotatedSoc(usize),
    /// Positive semidefinite matrices of the given side length.
    Psd(usize),
}

impl Cone {
    /// Number of scalar rows.
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonneg(d) | Cone::Soc(d) | Cone::RotatedSoc(d) => d,
            Cone::Psd(p) => p * (p + 1) / 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::Nonneg(_) => "nonneg",
            Cone::Soc(_) => "soc",
            Cone::RotatedSoc(_) => "rsoc",
            Cone::Psd(_) => "psd",
        }
    }

    /// The size parameter: dimension, or side length for PSD.
    pub fn size(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonneg(d) | Cone::Soc(d) | Cone::RotatedSoc(d) | Cone::Psd(d) => d,
        }
    }
}

/// `Σ coef·x[var] + constant`
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, coef: f64) -> Self {
        AffineExpr { terms: alloc::vec![(i, coef)], constant: 0.0 }
    }

    pub fn plus(mut self, i: usize, coef: f64) -> Self {
        self.terms.push((i, coef));
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.1 *= s);
        self.constant *= s;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(i, c)| c * x[*i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub cone: Cone,
    pub rows: Vec<AffineExpr>,
}

/// A named contiguous range of variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl VarBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    objective: Vec<f64>,
    objective_constant: f64,
    constraints: Vec<Constraint>,
    blocks: Vec<VarBlock>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `len` variables under `name` and returns their indices.
    pub fn add_variables(&mut self, name: &str, len: usize) -> Range<usize> {
        let start = self.objective.len();
        self.objective.resize(start + len, 0.0);
        self.blocks.push(VarBlock { name: name.into(), start, len });
        start..start + len
    }

    pub fn set_cost(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.objective_constant += c;
    }

    pub fn add_constraint(&mut self, cone: Cone, rows: Vec<AffineExpr>) -> Result<usize> {
        self.check_constraint(cone, &rows)?;
        self.constraints.push(Constraint { cone, rows });
        Ok(self.constraints.len() - 1)
    }

    fn check_constraint(&self, cone: Cone, rows: &[AffineExpr]) -> Result<()> {
        let min = match cone {
            Cone::RotatedSoc(_) => 2,
            _ => 1,
        };
        if cone.size() < min {
            bail!(InvalidParameter, "{} cone needs size at least {min}", cone.name());
        }
        if rows.len() != cone.rows() {
            bail!(Shape, "{} cone of size {} needs {} rows, got {}", cone.name(), cone.size(), cone.rows(), rows.len());
        }
        let n = self.num_vars();
        for r in rows {
            if !r.constant.is_finite() {
                bail!(NonFinite, "constraint constant is not finite");
            }
            for &(i, c) in &r.terms {
                if i >= n {
                    bail!(Shape, "constraint references variable {i}, program has {n}");
                }
                if !c.is_finite() {
                    bail!(NonFinite, "constraint coefficient for variable {i} is not finite");
                }
            }
        }
        Ok(())
    }

    /// Assembles a program from raw parts, validating every constraint.
    pub fn from_parts(
        objective: Vec<f64>,
        objective_constant: f64,
        blocks: Vec<VarBlock>,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let mut p = ConicProgram { objective, objective_constant, constraints: Vec::new(), blocks };
        if p.objective.iter().any(|v| !v.is_finite()) || !objective_constant.is_finite() {
            bail!(NonFinite, "objective is not finite");
        }
        let mut covered = 0;
        for b in &p.blocks {
            if b.start != covered {
                bail!(Shape, "variable blocks must be contiguous");
            }
            covered += b.len;
        }
        if covered != p.objective.len() {
            bail!(Shape, "variable blocks cover {covered} of {} variables", p.objective.len());
        }
        for c in constraints {
            p.add_constraint(c.cone, c.rows)?;
        }
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn evaluate_objective(&self, x: &[f64]) -> f64 {
        self.objective_constant + crate::linalg::dot(&self.objective, x)
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.iter().map(|c| c.rows.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit or numerical breakdown; the last iterate is returned.
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Refuse programs whose working set is estimated above this many bytes.
    pub memory_budget: usize,
    /// Fraction of the distance to the boundary taken each step.
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feas_tol: 1e-7,
            gap_tol: 1e-7,
            max_iter: 100,
            memory_budget: 2 << 30,
            step_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// One dual vector per constraint, in row order.
    pub duals: Vec<Vec<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    /// Relative primal infeasibility.
    pub primal_residual: f64,
    /// Relative dual infeasibility.
    pub dual_residual: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn values<'a>(&'a self, block: &VarBlock) -> &'a [f64] {
        &self.x[block.range()]
    }

    /// `|primal_obj - dual_obj|`
    pub fn gap(&self) -> f64 {
        (self.primal_obj - self.dual_obj).abs()
    }
}

/// Solves `prog`. Errors only for malformed input or an exceeded budget;
/// solver outcomes are reported through [`SolveStatus`].
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
    if !(settings.feas_tol > 0.0) || !(settings.gap_tol > 0.0) {
        bail!(InvalidParameter, "tolerances must be positive");
    }
    if !(settings.step_fraction > 0.0 && settings.step_fraction < 1.0) {
        bail!(InvalidParameter, "step fraction must lie in (0, 1)");
    }
    let need = estimate_memory(prog);
    if need > settings.memory_budget {
        bail!(Capacity, "program needs about {need} bytes, budget is {}", settings.memory_budget);
    }
    Ok(ipm::solve(prog, settings))
}
