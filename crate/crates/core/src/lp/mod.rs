//! Linear programming: problem container and a bounded-variable revised
//! simplex solver.
//!
//! Problems are built incrementally with [`LinearProgram::add_var`] and
//! [`LinearProgram::add_constraint`], then handed to [`solve_lp`]. Variable
//! bounds are handled natively by the simplex (no bound rows), and bounds may
//! be infinite on either side.

mod scaling;
mod simplex;
mod text;

use std::fmt;

use thiserror::Error;

pub use simplex::SolverOptions;
pub use text::write_lp_text;

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Relation between a constraint's linear expression and its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint `{constraint}` references undeclared variable index {index}")]
    UnknownVariable { constraint: String, index: usize },
    #[error("variable `{name}` has lower bound {lower} above upper bound {upper}")]
    BoundOrder { name: String, lower: f64, upper: f64 },
    #[error("non-finite coefficient in `{location}`")]
    NonFinite { location: String },
    #[error("simplex iteration limit of {limit} reached")]
    IterationLimit { limit: usize },
    #[error("basis matrix became singular and could not be recovered")]
    SingularBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values in declaration order; a best-effort point when not optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Dual value of each constraint, in the problem's own sense: the rate of
    /// change of the optimal objective per unit increase of the right-hand side.
    /// Empty unless the status is `Optimal`.
    pub duals: Vec<f64>,
    /// Constraints carrying a nonzero Farkas multiplier when infeasible.
    pub infeasible_constraints: Vec<ConstraintId>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram { sense, variables: Vec::new(), constraints: Vec::new() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, objective: f64) -> VarId {
        self.variables.push(Variable { name: name.into(), lower, upper, objective });
        VarId(self.variables.len() - 1)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> ConstraintId {
        self.constraints.push(Constraint { name: name.into(), terms, relation, rhs });
        ConstraintId(self.constraints.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Checks the structural invariants: declared variables only, ordered
    /// bounds, finite data (bounds may be infinite).
    pub fn validate(&self) -> Result<(), LpError> {
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || !v.objective.is_finite() {
                return Err(LpError::NonFinite { location: v.name.clone() });
            }
            if v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::BoundOrder { name: v.name.clone(), lower: v.lower, upper: v.upper });
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(LpError::NonFinite { location: c.name.clone() });
            }
            for &(VarId(j), a) in &c.terms {
                if j >= self.variables.len() {
                    return Err(LpError::UnknownVariable { constraint: c.name.clone(), index: j });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite { location: c.name.clone() });
                }
            }
        }
        Ok(())
    }

    /// Evaluates the objective at `x`.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.variables.iter().zip(x).map(|(v, xi)| v.objective * xi).sum()
    }

    /// Largest constraint or bound violation at `x`, each row measured
    /// relative to `max(1, |rhs|, max |a_ij x_j|)`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let mut lhs = 0.0;
            let mut scale = c.rhs.abs().max(1.0);
            for &(VarId(j), a) in &c.terms {
                lhs += a * x[j];
                scale = scale.max((a * x[j]).abs());
            }
            let v = match c.relation {
                Relation::Le => (lhs - c.rhs).max(0.0),
                Relation::Ge => (c.rhs - lhs).max(0.0),
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v / scale);
        }
        for (v, &xi) in self.variables.iter().zip(x) {
            let scale = xi.abs().max(1.0);
            worst = worst.max((v.lower - xi).max(0.0) / scale);
            worst = worst.max((xi - v.upper).max(0.0) / scale);
        }
        worst
    }
}

/// Solves `lp` with default options.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &SolverOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    simplex::solve(lp, opts)
}
