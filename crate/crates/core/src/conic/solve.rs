//! Interior-point backend. Programs are lowered to the `Ax + s = b,
//! s ∈ K` form and handed to clarabel; statuses are mapped back and the
//! returned point is checked against the program with [`residuals`].

#[cfg(not(target_family = "wasm"))]
use std::time::Instant;

#[cfg(target_family = "wasm")]
use web_time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::residuals::{residuals, Residuals};
use super::{Cone, ConicProgram, LinExpr, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSettings {
    /// Feasibility tolerance passed to the interior-point iterations.
    pub tol_feas: f64,
    /// Relative and absolute gap tolerance passed to the iterations.
    pub tol_gap: f64,
    /// Contract tolerance: a returned point is only labelled `Optimal` if
    /// its residuals, relative to `1 + ‖b‖∞`, are below this.
    pub accept_feas: f64,
    pub accept_gap: f64,
    pub max_iter: u32,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { tol_feas: 1e-8, tol_gap: 1e-8, accept_feas: 1e-6, accept_gap: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Relative duality gap.
    pub gap: f64,
    pub iterations: u32,
    pub solve_seconds: f64,
    /// Own evaluation of the returned point (absent for infeasible and
    /// unbounded outcomes).
    pub residuals: Option<Residuals>,
    /// Certificate summary or failure diagnostics.
    pub diagnostics: Option<String>,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

struct Lowered {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    /// Tag of each lowered row, for certificate summaries.
    tags: Vec<String>,
    b_scale: f64,
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    tags: Vec<String>,
}

impl Triplets {
    /// Appends `s = b − A·x` where `s` must equal `sign · expr`.
    fn push(&mut self, e: &LinExpr, sign: f64, tag: &str) {
        let r = self.b.len();
        for &(v, c) in &e.terms {
            self.rows.push(r);
            self.cols.push(v.0);
            self.vals.push(-sign * c);
        }
        self.b.push(sign * e.constant);
        self.tags.push(tag.to_string());
    }
}

fn lower(prog: &ConicProgram) -> Lowered {
    let mut t = Triplets { rows: Vec::new(), cols: Vec::new(), vals: Vec::new(), b: Vec::new(), tags: Vec::new() };
    let mut cones = Vec::new();

    // zero cone: equalities and fixed variables
    let start = t.b.len();
    for r in prog.rows.iter().filter(|r| r.sense == Sense::Eq) {
        t.push(&r.expr, 1.0, r.tag);
    }
    for (i, v) in prog.vars.iter().enumerate() {
        if v.lower == v.upper {
            t.push(&LinExpr::term(super::VarId(i), 1.0).plus(-v.lower), 1.0, &v.name);
        }
    }
    if t.b.len() > start {
        cones.push(SupportedConeT::ZeroConeT(t.b.len() - start));
    }

    // nonnegative cone: -expr ≥ 0 for ≤ rows, then finite bounds
    let start = t.b.len();
    for r in prog.rows.iter().filter(|r| r.sense == Sense::Le) {
        t.push(&r.expr, -1.0, r.tag);
    }
    for (i, v) in prog.vars.iter().enumerate() {
        if v.lower == v.upper {
            continue;
        }
        let x = LinExpr::term(super::VarId(i), 1.0);
        if v.lower.is_finite() {
            t.push(&x.clone().plus(-v.lower), 1.0, &v.name);
        }
        if v.upper.is_finite() {
            t.push(&x.plus(-v.upper), -1.0, &v.name);
        }
    }
    if t.b.len() > start {
        cones.push(SupportedConeT::NonnegativeConeT(t.b.len() - start));
    }

    for c in &prog.cones {
        match &c.cone {
            Cone::Norm { t: head, z } => {
                t.push(head, 1.0, c.tag);
                for e in z {
                    t.push(e, 1.0, c.tag);
                }
                cones.push(SupportedConeT::SecondOrderConeT(1 + z.len()));
            }
            Cone::Rotated { u, w, z } => {
                // u·w ≥ ‖z‖²  ⇔  ‖(u − w, 2z)‖ ≤ u + w
                let mut sum = u.clone();
                sum.add_expr(w, 1.0);
                let mut diff = u.clone();
                diff.add_expr(w, -1.0);
                t.push(&sum, 1.0, c.tag);
                t.push(&diff, 1.0, c.tag);
                for e in z {
                    t.push(e, 2.0, c.tag);
                }
                cones.push(SupportedConeT::SecondOrderConeT(2 + z.len()));
            }
        }
    }

    let m = t.b.len();
    let b_scale = t.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let a = CscMatrix::new_from_triplets(m, prog.vars.len(), t.rows, t.cols, t.vals);
    Lowered { a, b: t.b, cones, tags: t.tags, b_scale }
}

fn failure(prog: &ConicProgram, status: Status, started: Instant, msg: String) -> Solution {
    Solution {
        status,
        x: vec![f64::NAN; prog.vars.len()],
        objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        gap: f64::NAN,
        iterations: 0,
        solve_seconds: started.elapsed().as_secs_f64(),
        residuals: None,
        diagnostics: Some(msg),
    }
}

/// Largest-weight rows of a dual ray, by tag.
fn certificate_summary(kind: &str, z: &[f64], tags: &[String]) -> String {
    let mut idx: Vec<usize> = (0..z.len()).filter(|&i| z[i].abs() > 1e-9).collect();
    idx.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    let mut seen = Vec::new();
    for i in idx {
        if !seen.contains(&tags[i]) {
            seen.push(tags[i].clone());
        }
        if seen.len() == 5 {
            break;
        }
    }
    format!("{kind} certificate; dominant constraints: {}", seen.join(", "))
}

pub fn solve(prog: &ConicProgram, settings: &SolveSettings) -> Solution {
    let started = Instant::now();
    let n = prog.vars.len();
    if n == 0 {
        let x = Vec::new();
        let obj = prog.objective.constant;
        let res = residuals(prog, &x).ok();
        let feasible = res.as_ref().map_or(false, |r| r.max() <= settings.accept_feas);
        return Solution {
            status: if feasible { Status::Optimal } else { Status::Infeasible },
            x,
            objective: obj,
            dual_objective: obj,
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
            iterations: 0,
            solve_seconds: started.elapsed().as_secs_f64(),
            residuals: res,
            diagnostics: None,
        };
    }

    let lowered = lower(prog);
    let p = CscMatrix::<f64>::zeros((n, n));
    let mut q = vec![0.0; n];
    for &(v, c) in &prog.objective.terms {
        q[v.0] += c;
    }
    let cs = DefaultSettings::<f64> {
        verbose: false,
        tol_feas: settings.tol_feas,
        tol_gap_abs: settings.tol_gap,
        tol_gap_rel: settings.tol_gap,
        max_iter: settings.max_iter,
        presolve_enable: false,
        ..DefaultSettings::default()
    };
    let mut solver = match DefaultSolver::new(&p, &q, &lowered.a, &lowered.b, &lowered.cones, cs) {
        Ok(s) => s,
        Err(e) => return failure(prog, Status::NumericalFailure, started, format!("setup: {e:?}")),
    };
    solver.solve();
    let sol = &solver.solution;
    let info = &solver.info;
    let constant = prog.objective.constant;

    let (status, keep_point) = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => (Status::Optimal, true),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => (Status::Infeasible, false),
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => (Status::Unbounded, false),
        _ => (Status::NumericalFailure, true),
    };

    let mut out = Solution {
        status,
        x: sol.x.clone(),
        objective: sol.obj_val + constant,
        dual_objective: sol.obj_val_dual + constant,
        primal_residual: info.res_primal,
        dual_residual: info.res_dual,
        gap: info.gap_rel,
        iterations: sol.iterations,
        solve_seconds: started.elapsed().as_secs_f64(),
        residuals: None,
        diagnostics: None,
    };

    match status {
        Status::Infeasible => {
            out.diagnostics = Some(certificate_summary("primal infeasibility", &sol.z, &lowered.tags));
        }
        Status::Unbounded => {
            out.diagnostics = Some(format!(
                "dual infeasibility certificate (improving ray with {} nonzeros)",
                sol.x.iter().filter(|v| v.abs() > 1e-9).count()
            ));
        }
        _ => {}
    }

    if keep_point {
        let res = residuals(prog, &sol.x).expect("solver returns a full point");
        let scale = 1.0 + lowered.b_scale;
        let feasible = res.max() <= settings.accept_feas * scale;
        let gap_ok = info.gap_rel <= settings.accept_gap || info.gap_abs <= settings.accept_gap;
        if status == Status::Optimal && !(feasible && gap_ok) {
            out.status = Status::NumericalFailure;
        }
        if out.status == Status::NumericalFailure {
            out.diagnostics = Some(match &res.worst {
                Some(w) => format!(
                    "solver status {:?}; worst constraint `{}` ({:?} #{}) violated by {:.3e}, gap {:.3e}",
                    sol.status, w.tag, w.class, w.index, w.violation, info.gap_rel
                ),
                None => format!("solver status {:?}; gap {:.3e}", sol.status, info.gap_rel),
            });
        }
        out.residuals = Some(res);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::ProgramBuilder;

    #[test]
    fn bound_active_lp() {
        let mut b = ProgramBuilder::new();
        let x = b.var("x", 3.0, f64::INFINITY);
        b.minimize(&LinExpr::term(x, 1.0));
        let s = solve(&b.build().unwrap(), &SolveSettings::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn euclidean_norm() {
        let mut b = ProgramBuilder::new();
        let t = b.free("t");
        b.minimize(&LinExpr::term(t, 1.0));
        b.cone(Cone::Norm { t: t.into(), z: vec![LinExpr::constant(3.0), LinExpr::constant(4.0)] }, "norm");
        let s = solve(&b.build().unwrap(), &SolveSettings::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 5.0).abs() < 1e-7);
    }

    #[test]
    fn empty_feasible_set() {
        let mut b = ProgramBuilder::new();
        let x = b.free("x");
        b.ge(LinExpr::term(x, 1.0).plus(-2.0), "lo");
        b.le(LinExpr::term(x, 1.0).plus(-1.0), "hi");
        let s = solve(&b.build().unwrap(), &SolveSettings::default());
        assert_eq!(s.status, Status::Infeasible);
        assert!(s.diagnostics.unwrap().contains("lo"));
    }

    #[test]
    fn unbounded_below() {
        let mut b = ProgramBuilder::new();
        let x = b.var("x", f64::NEG_INFINITY, 1.0);
        b.minimize(&LinExpr::term(x, 1.0));
        let s = solve(&b.build().unwrap(), &SolveSettings::default());
        assert_eq!(s.status, Status::Unbounded);
    }

    #[test]
    fn rotated_cone_minimum() {
        // min w s.t. 2·w ≥ 3², u fixed at 2  →  w = 4.5
        let mut b = ProgramBuilder::new();
        let u = b.var("u", 2.0, 2.0);
        let w = b.var("w", 0.0, f64::INFINITY);
        b.minimize(&LinExpr::term(w, 1.0));
        b.cone(Cone::Rotated { u: u.into(), w: w.into(), z: vec![LinExpr::constant(3.0)] }, "rot");
        let s = solve(&b.build().unwrap(), &SolveSettings::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.x[1] - 4.5).abs() < 1e-6);
    }

    #[test]
    fn weak_duality_and_determinism() {
        let mut b = ProgramBuilder::new();
        let x = b.var("x", -1.0, 4.0);
        let y = b.var("y", 0.0, 3.0);
        let t = b.free("t");
        b.minimize(&LinExpr::term(t, 1.0).with(x, -1.0).with(y, -0.5));
        b.cone(Cone::Norm { t: t.into(), z: vec![LinExpr::term(x, 1.0).plus(-1.0), y.into()] }, "norm");
        let prog = b.build().unwrap();
        let s1 = solve(&prog, &SolveSettings::default());
        let s2 = solve(&prog, &SolveSettings::default());
        assert_eq!(s1.status, Status::Optimal);
        assert!(s1.objective >= s1.dual_objective - 1e-6);
        assert_eq!(s1.status, s2.status);
        assert!((s1.objective - s2.objective).abs() <= 1e-12);
        assert_eq!(s1.x, s2.x);
    }
}
