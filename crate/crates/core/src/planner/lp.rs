//! Sparse linear programs over nonnegative variables, solved with the
//! revised simplex method of `microlp`.

use std::fmt::Write as _;

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

/// Solver round-off below which negative values are clipped to zero.
const NEGATIVE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub name: String,
}

/// `maximize c'x  s.t.  rows (<=, =, >=) rhs,  x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub var_names: Vec<String>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            var_names: (0..num_vars).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, name: impl Into<String>, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
            name: name.into(),
        });
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|(j, a)| a * x[*j]).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Plain-text dump in CPLEX LP format.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::from("\\ generated by qucrl\nMaximize\n obj:");
        let term = |out: &mut String, coef: f64, name: &str| {
            let sign = if coef < 0.0 { '-' } else { '+' };
            let _ = write!(out, " {sign} {:.16e} {name}", coef.abs());
        };
        let mut any = false;
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                term(&mut out, *c, &self.var_names[j]);
                any = true;
            }
        }
        if !any {
            let _ = write!(out, " 0 {}", self.var_names.first().map_or("x0", String::as_str));
        }
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(out, " {}:", c.name);
            if c.coeffs.is_empty() {
                let _ = write!(out, " 0 {}", self.var_names[0]);
            }
            for (j, a) in &c.coeffs {
                term(&mut out, *a, &self.var_names[*j]);
            }
            let op = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {op} {:.16e}", c.rhs);
        }
        out.push_str("Bounds\n");
        for name in &self.var_names {
            let _ = writeln!(out, " {name} >= 0");
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Largest constraint violation of `x`.
    pub residual: f64,
}

/// Solves `lp` to optimality.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars();
    for c in &lp.constraints {
        if c.coeffs.iter().any(|(j, a)| *j >= n || !a.is_finite()) || !c.rhs.is_finite() {
            return Err(Error::NumericalFailure(format!("malformed constraint {}", c.name)));
        }
    }
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = lp
        .objective
        .iter()
        .map(|c| problem.add_var(*c, (0.0, f64::INFINITY)))
        .collect();
    for c in &lp.constraints {
        let op = match c.relation {
            Relation::Le => ComparisonOp::Le,
            Relation::Eq => ComparisonOp::Eq,
            Relation::Ge => ComparisonOp::Ge,
        };
        let expr: Vec<_> = c.coeffs.iter().map(|(j, a)| (vars[*j], *a)).collect();
        problem.add_constraint(expr.as_slice(), op, c.rhs);
    }
    let outcome = problem.solve().map_err(|e| match e {
        microlp::Error::Infeasible => Error::Infeasible,
        microlp::Error::Unbounded => Error::Unbounded,
        other => Error::NumericalFailure(other.to_string()),
    })?;
    let iterations = outcome.stats().lp_iterations as usize;
    let sol = outcome
        .into_solution()
        .map_err(|_| Error::NumericalFailure("solve interrupted".into()))?;
    let mut x: Vec<f64> = vars.iter().map(|v| sol.var_value_raw(*v)).collect();
    for v in &mut x {
        if *v < 0.0 {
            if *v < -NEGATIVE_TOL {
                return Err(Error::NumericalFailure(format!("variable at {v:e}")));
            }
            *v = 0.0;
        }
    }
    let residual = lp.max_violation(&x);
    Ok(LpSolution {
        value: lp.value_at(&x),
        x,
        iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_equality() {
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = 1.0;
        lp.add("one", vec![(0, 1.0)], Relation::Eq, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bandit_argmax() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![0.3, 0.9];
        lp.add("simplex", vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value - 0.9).abs() < 1e-12);
        assert_eq!(sol.x, vec![0.0, 1.0]);
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![3.0, 5.0];
        lp.add("a", vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add("b", vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add("c", vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value - 36.0).abs() < 1e-10);
        assert!((sol.x[0] - 2.0).abs() < 1e-10 && (sol.x[1] - 6.0).abs() < 1e-10);
    }

    #[test]
    fn ge_rows_and_negative_rhs() {
        // max -x - y  s.t. x + y >= 2, -x <= -0.5  -> value -2.
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.add("a", vec![(0, 1.0), (1, 1.0)], Relation::Ge, 2.0);
        lp.add("b", vec![(0, -1.0)], Relation::Le, -0.5);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value + 2.0).abs() < 1e-10);
        assert!(sol.x[0] >= 0.5 - 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.add("a", vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add("b", vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add("a", vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add("b", vec![(0, 1.0)], Relation::Ge, 2.0);
        assert!(matches!(solve_lp(&lp), Err(Error::Infeasible)));

        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add("a", vec![(0, 1.0), (1, -1.0)], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&lp), Err(Error::Unbounded)));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under naive largest-coefficient pricing.
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![0.75, -150.0, 0.02, -6.0];
        lp.add("a", vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
        lp.add("b", vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
        lp.add("c", vec![(2, 1.0)], Relation::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value - 0.05).abs() < 1e-10, "{}", sol.value);
    }

    #[test]
    fn lp_format_dump() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![0.3, 0.9];
        lp.var_names = vec!["a".into(), "b".into()];
        lp.add("simplex", vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        let text = lp.to_lp_format();
        assert!(text.starts_with("\\ generated by qucrl\nMaximize\n obj: + 2.9999999999999999e-1 a"));
        assert!(text.contains(" simplex: + 1.0000000000000000e0 a + 1.0000000000000000e0 b = 1.0000000000000000e0\n"));
        assert!(text.ends_with("Bounds\n a >= 0\n b >= 0\nEnd\n"));
    }
}
