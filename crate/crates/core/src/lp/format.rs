//! CPLEX LP text export, for cross-checking against external solvers.
//!
//! Variables are named `x0, x1, …`, equality rows `e0, …` and inequality
//! rows `c0, …`. Coefficients are printed in shortest round-trip form.

use std::io::Write;

use super::LinearProgram;
use crate::{Error, Result};

fn term(out: &mut String, first: bool, coef: f64, var: usize) {
    if coef < 0.0 {
        out.push_str(if first { "- " } else { " - " });
    } else if !first {
        out.push_str(" + ");
    }
    out.push_str(&format!("{:?} x{var}", coef.abs()));
}

fn row_text(cols: &[usize], vals: &[f64]) -> String {
    let mut s = String::new();
    for (i, (&j, &v)) in cols.iter().zip(vals).enumerate() {
        term(&mut s, i == 0, v, j);
    }
    if s.is_empty() {
        s.push_str("0 x0");
    }
    s
}

pub fn write_lp_format<W: Write>(lp: &LinearProgram, mut out: W) -> Result<()> {
    let mut s = String::from("\\ exported by leadsteer\nMinimize\n obj: ");
    let cols: Vec<usize> = (0..lp.variable_count()).filter(|&j| lp.objective()[j] != 0.0).collect();
    let vals: Vec<f64> = cols.iter().map(|&j| lp.objective()[j]).collect();
    s.push_str(&row_text(&cols, &vals));
    s.push_str("\nSubject To\n");
    for i in 0..lp.eq_matrix().nrows() {
        let (c, v) = lp.eq_matrix().row(i);
        s.push_str(&format!(" e{i}: {} = {:?}\n", row_text(c, v), lp.eq_rhs()[i]));
    }
    for i in 0..lp.ineq_matrix().nrows() {
        let (c, v) = lp.ineq_matrix().row(i);
        s.push_str(&format!(" c{i}: {} <= {:?}\n", row_text(c, v), lp.ineq_rhs()[i]));
    }
    s.push_str("Bounds\n");
    for j in 0..lp.variable_count() {
        let (l, u) = (lp.lower()[j], lp.upper()[j]);
        match (l.is_finite(), u.is_finite()) {
            (false, false) => s.push_str(&format!(" x{j} free\n")),
            (true, false) => s.push_str(&format!(" x{j} >= {l:?}\n")),
            (false, true) => s.push_str(&format!(" -inf <= x{j} <= {u:?}\n")),
            (true, true) => s.push_str(&format!(" {l:?} <= x{j} <= {u:?}\n")),
        }
    }
    s.push_str("End\n");
    out.write_all(s.as_bytes()).map_err(|e| Error::io("<stream>", e))
}
