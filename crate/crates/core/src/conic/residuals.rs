use super::{ConicError, ConicProgram, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintClass {
    Bound,
    Equality,
    Inequality,
    Cone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstConstraint {
    pub class: ConstraintClass,
    pub index: usize,
    pub tag: String,
    pub violation: f64,
}

/// Maximum absolute violation per constraint class.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub bounds: f64,
    pub equalities: f64,
    pub inequalities: f64,
    pub cones: f64,
    pub worst: Option<WorstConstraint>,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.bounds.max(self.equalities).max(self.inequalities).max(self.cones)
    }
}

/// Evaluates a candidate point against every constraint of the program.
/// Independent of the solver: only the program data is used.
pub fn residuals(prog: &ConicProgram, x: &[f64]) -> Result<Residuals, ConicError> {
    if x.len() < prog.vars.len() {
        return Err(ConicError::MissingVariable(prog.vars[x.len()].name.clone()));
    }
    let mut res = Residuals { bounds: 0.0, equalities: 0.0, inequalities: 0.0, cones: 0.0, worst: None };
    let note = |res: &mut Residuals, class, index, tag: &str, v: f64| {
        let slot = match class {
            ConstraintClass::Bound => &mut res.bounds,
            ConstraintClass::Equality => &mut res.equalities,
            ConstraintClass::Inequality => &mut res.inequalities,
            ConstraintClass::Cone => &mut res.cones,
        };
        *slot = slot.max(v);
        if v > 0.0 && res.worst.as_ref().map_or(true, |w| v > w.violation) {
            res.worst = Some(WorstConstraint { class, index, tag: tag.to_string(), violation: v });
        }
    };

    for (i, (var, &val)) in prog.vars.iter().zip(x).enumerate() {
        let v = (var.lower - val).max(val - var.upper).max(0.0);
        note(&mut res, ConstraintClass::Bound, i, &var.name, v);
    }
    for (i, row) in prog.rows.iter().enumerate() {
        let e = row.expr.eval(x);
        match row.sense {
            Sense::Eq => note(&mut res, ConstraintClass::Equality, i, row.tag, e.abs()),
            Sense::Le => note(&mut res, ConstraintClass::Inequality, i, row.tag, e.max(0.0)),
        }
    }
    for (i, c) in prog.cones.iter().enumerate() {
        note(&mut res, ConstraintClass::Cone, i, c.tag, c.cone.violation(x));
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{Cone, LinExpr, ProgramBuilder};

    fn sample() -> ConicProgram {
        let mut b = ProgramBuilder::new();
        let t = b.var("t", 0.0, 10.0);
        let x = b.var("x", -5.0, 5.0);
        let y = b.var("y", -5.0, 5.0);
        b.eq(LinExpr::term(x, 1.0).plus(-3.0), "fix_x");
        b.le(LinExpr::term(y, 1.0).plus(-4.0), "cap_y");
        b.cone(Cone::Norm { t: t.into(), z: vec![x.into(), y.into()] }, "norm");
        b.build().unwrap()
    }

    #[test]
    fn interior_point_has_zero_residuals() {
        let r = residuals(&sample(), &[6.0, 3.0, 2.0]).unwrap();
        assert!(r.max() <= 1e-12);
        assert!(r.worst.is_none());
    }

    #[test]
    fn single_cone_violation_isolated() {
        let r = residuals(&sample(), &[4.9, 3.0, 4.0]).unwrap();
        assert!((r.cones - 0.1).abs() < 1e-12);
        assert_eq!((r.bounds, r.equalities, r.inequalities), (0.0, 0.0, 0.0));
        assert_eq!(r.worst.unwrap().tag, "norm");
    }

    #[test]
    fn short_candidate_is_an_error() {
        let err = residuals(&sample(), &[1.0]).unwrap_err();
        assert!(matches!(err, ConicError::MissingVariable(ref v) if v == "x"));
    }
}
