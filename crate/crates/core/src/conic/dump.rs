//! Plain-text listing of a program for debugging.
//!
//! ```text
//! program vars=<n> rows=<m> cones=<k>
//! var <idx> <name> <lower> <upper>
//! objective <constant> <idx>:<coef> ...
//! row <idx> <tag> eq|le <constant> <idx>:<coef> ...
//! cone <idx> <tag> norm|rotated
//!   member <constant> <idx>:<coef> ...
//! ```
//! Rows read `Σ coef·x + constant (= | ≤) 0`. Norm cone members are listed
//! as `t, z₁, z₂, …`; rotated cone members as `u, w, z₁, …`.

use std::fmt::Write;

use super::{Cone, ConicProgram, LinExpr, Sense};

fn expr(out: &mut String, e: &LinExpr) {
    let _ = write!(out, "{:e}", e.constant);
    for (v, c) in &e.terms {
        let _ = write!(out, " {}:{:e}", v.0, c);
    }
}

pub fn dump_program(prog: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "program vars={} rows={} cones={}", prog.vars.len(), prog.rows.len(), prog.cones.len());
    for (i, v) in prog.vars.iter().enumerate() {
        let _ = writeln!(out, "var {i} {} {:e} {:e}", v.name, v.lower, v.upper);
    }
    out.push_str("objective ");
    expr(&mut out, &prog.objective);
    out.push('\n');
    for (i, r) in prog.rows.iter().enumerate() {
        let sense = match r.sense {
            Sense::Eq => "eq",
            Sense::Le => "le",
        };
        let _ = write!(out, "row {i} {} {sense} ", r.tag);
        expr(&mut out, &r.expr);
        out.push('\n');
    }
    for (i, c) in prog.cones.iter().enumerate() {
        let (kind, members): (&str, Vec<&LinExpr>) = match &c.cone {
            Cone::Norm { t, z } => ("norm", std::iter::once(t).chain(z).collect()),
            Cone::Rotated { u, w, z } => ("rotated", [u, w].into_iter().chain(z).collect()),
        };
        let _ = writeln!(out, "cone {i} {} {kind}", c.tag);
        for m in members {
            out.push_str("  member ");
            expr(&mut out, m);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::ProgramBuilder;

    #[test]
    fn listing_has_every_item() {
        let mut b = ProgramBuilder::new();
        let t = b.var("t", 0.0, f64::INFINITY);
        let x = b.var("x", -1.0, 1.0);
        b.minimize(&LinExpr::term(t, 1.0));
        b.eq(LinExpr::term(x, 1.0).plus(-0.5), "fix");
        b.cone(Cone::Norm { t: t.into(), z: vec![x.into()] }, "norm");
        let text = dump_program(&b.build().unwrap());
        assert!(text.starts_with("program vars=2 rows=1 cones=1\n"));
        assert!(text.contains("var 1 x -1e0 1e0"));
        assert!(text.contains("row 0 fix eq -5e-1 1:1e0"));
        assert_eq!(text.matches("  member").count(), 2);
    }
}
