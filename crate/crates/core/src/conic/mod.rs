//! Standard-form convex programs with linear rows, variable bounds and
//! second-order cones, plus the solver front-end.
//!
//! Programs are assembled with [`ProgramBuilder`] and are immutable once
//! built. Every row and cone carries a tag naming the constraint family it
//! came from so results and dumps can be traced back to the formulation.

mod dump;
mod residuals;
mod solve;

use std::fmt;

pub use dump::dump_program;
pub use residuals::{residuals, ConstraintClass, Residuals, WorstConstraint};
pub use solve::{solve, Solution, SolveSettings, Status};

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("row or cone `{tag}` references variable {var} but the program has {count}")]
    UnknownVariable { tag: String, var: usize, count: usize },
    #[error("variable `{0}` has unordered or NaN bounds")]
    BadBounds(String),
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
    #[error("cone `{0}` has no members")]
    EmptyCone(String),
    #[error("candidate is missing a value for variable `{0}`")]
    MissingVariable(String),
    #[error("solver setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Affine expression `Σ coef·x + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        LinExpr { terms: vec![(v, coef)], constant: 0.0 }
    }

    /// Adds `coef·v` (chainable).
    pub fn with(mut self, v: VarId, coef: f64) -> Self {
        self.add(v, coef);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add(&mut self, v: VarId, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.add(v, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, s: f64) -> LinExpr {
        let mut e = LinExpr::new();
        e.add_expr(self, s);
        e
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::term(v, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `expr = 0`
    Eq,
    /// `expr ≤ 0`
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub expr: LinExpr,
    pub sense: Sense,
    pub tag: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cone {
    /// `u·w ≥ ‖z‖²` with `u, w ≥ 0`.
    Rotated { u: LinExpr, w: LinExpr, z: Vec<LinExpr> },
    /// `t ≥ ‖z‖`.
    Norm { t: LinExpr, z: Vec<LinExpr> },
}

impl Cone {
    fn exprs(&self) -> Vec<&LinExpr> {
        match self {
            Cone::Rotated { u, w, z } => [u, w].into_iter().chain(z.iter()).collect(),
            Cone::Norm { t, z } => std::iter::once(t).chain(z.iter()).collect(),
        }
    }

    /// Amount by which `x` violates the cone, measured in the equivalent
    /// norm form (`‖(2z, u − w)‖ − (u + w)` for the rotated cone).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Cone::Norm { t, z } => {
                let n = z.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                (n - t.eval(x)).max(0.0)
            }
            Cone::Rotated { u, w, z } => {
                let (uv, wv) = (u.eval(x), w.eval(x));
                let n = (z.iter().map(|e| 4.0 * e.eval(x).powi(2)).sum::<f64>() + (uv - wv).powi(2)).sqrt();
                (n - (uv + wv)).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub cone: Cone,
    pub tag: &'static str,
}

/// An immutable convex program: minimise `objective` over the variables
/// subject to bounds, rows and cones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub vars: Vec<Variable>,
    pub objective: LinExpr,
    pub rows: Vec<Row>,
    pub cones: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn rows_tagged(&self, tag: &str) -> usize {
        self.rows.iter().filter(|r| r.tag == tag).count()
    }

    pub fn cones_tagged(&self, tag: &str) -> usize {
        self.cones.iter().filter(|c| c.tag == tag).count()
    }

    pub fn vars_named(&self, prefix: &str) -> usize {
        self.vars.iter().filter(|v| v.name.starts_with(prefix)).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }
}

#[derive(Debug, Default)]
pub struct ProgramBuilder {
    vars: Vec<Variable>,
    objective: LinExpr,
    rows: Vec<Row>,
    cones: Vec<ConeConstraint>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        ProgramBuilder::default()
    }

    pub fn var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.vars.push(Variable { name: name.into(), lower, upper });
        VarId(self.vars.len() - 1)
    }

    pub fn free(&mut self, name: impl Into<String>) -> VarId {
        self.var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `expr = 0`
    pub fn eq(&mut self, expr: LinExpr, tag: &'static str) {
        self.rows.push(Row { expr, sense: Sense::Eq, tag });
    }

    /// `expr ≤ 0`
    pub fn le(&mut self, expr: LinExpr, tag: &'static str) {
        self.rows.push(Row { expr, sense: Sense::Le, tag });
    }

    /// `expr ≥ 0`
    pub fn ge(&mut self, expr: LinExpr, tag: &'static str) {
        self.le(expr.scaled(-1.0), tag);
    }

    pub fn cone(&mut self, cone: Cone, tag: &'static str) {
        self.cones.push(ConeConstraint { cone, tag });
    }

    pub fn minimize(&mut self, expr: &LinExpr) {
        self.objective.add_expr(expr, 1.0);
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn build(self) -> Result<ConicProgram, ConicError> {
        let n = self.vars.len();
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(ConicError::BadBounds(v.name.clone()));
            }
        }
        let check = |e: &LinExpr, tag: &str| -> Result<(), ConicError> {
            if !e.constant.is_finite() {
                return Err(ConicError::NonFinite(tag.to_string()));
            }
            for &(v, c) in &e.terms {
                if v.0 >= n {
                    return Err(ConicError::UnknownVariable { tag: tag.to_string(), var: v.0, count: n });
                }
                if !c.is_finite() {
                    return Err(ConicError::NonFinite(tag.to_string()));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for r in &self.rows {
            check(&r.expr, r.tag)?;
        }
        for c in &self.cones {
            let empty = match &c.cone {
                Cone::Rotated { z, .. } | Cone::Norm { z, .. } => z.is_empty(),
            };
            if empty {
                return Err(ConicError::EmptyCone(c.tag.to_string()));
            }
            for e in c.cone.exprs() {
                check(e, c.tag)?;
            }
        }
        Ok(ConicProgram { vars: self.vars, objective: self.objective, rows: self.rows, cones: self.cones })
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "Optimal",
            Status::Infeasible => "Infeasible",
            Status::Unbounded => "Unbounded",
            Status::NumericalFailure => "NumericalFailure",
        };
        f.write_str(s)
    }
}
