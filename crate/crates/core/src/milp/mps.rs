//! Fixed-format MPS writer.
//!
//! Rows are named `R0000000..`, columns `C0000000..` so every name fits the
//! eight-character name fields. The original model names are listed in a
//! comment block at the top. Coefficients are printed with the shortest
//! representation that round-trips exactly, which can exceed the nominal
//! twelve-character numeric field; such readers must split on whitespace.

use std::fmt::Write;

use super::{MilpModel, Sense};

fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() > 24 {
        format!("{v:e}")
    } else {
        s
    }
}

fn row_name(i: usize) -> String {
    format!("R{i:07}")
}

fn col_name(j: usize) -> String {
    format!("C{j:07}")
}

fn entry(out: &mut String, col: &str, row: &str, value: f64) {
    let _ = writeln!(out, "    {col:<8}  {row:<8}  {:>12}", num(value));
}

pub fn export_mps(model: &MilpModel) -> String {
    let mut out = String::new();
    out.push_str("* generated by scuc-core\n");
    for (j, v) in model.vars.iter().enumerate() {
        let _ = writeln!(out, "* {} {}", col_name(j), v.name);
    }
    for (i, c) in model.cons.iter().enumerate() {
        let _ = writeln!(out, "* {} {}", row_name(i), c.name);
    }
    out.push_str("NAME          SCUC\nROWS\n N  OBJ\n");
    for (i, c) in model.cons.iter().enumerate() {
        let tag = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {tag}  {}", row_name(i));
    }

    // column-major coefficient lists
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.vars.len()];
    for (i, c) in model.cons.iter().enumerate() {
        for &(v, a) in &c.terms {
            match by_col[v.0].iter_mut().find(|(r, _)| *r == i) {
                Some(slot) => slot.1 += a,
                None => by_col[v.0].push((i, a)),
            }
        }
    }
    let mut obj = vec![0.0; model.vars.len()];
    for &(v, c) in &model.objective {
        obj[v.0] += c;
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0usize;
    for (j, var) in model.vars.iter().enumerate() {
        if var.integer != in_int {
            let tag = if var.integer { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, "    M{marker:07}  'MARKER'                 '{tag}'");
            marker += 1;
            in_int = var.integer;
        }
        let name = col_name(j);
        let coefs: Vec<&(usize, f64)> = by_col[j].iter().filter(|(_, a)| *a != 0.0).collect();
        if obj[j] != 0.0 || coefs.is_empty() {
            entry(&mut out, &name, "OBJ", obj[j]);
        }
        for &&(i, a) in &coefs {
            entry(&mut out, &name, &row_name(i), a);
        }
    }
    if in_int {
        let _ = writeln!(out, "    M{marker:07}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    if model.obj_constant != 0.0 {
        // objective-row RHS carries the negated constant by convention
        entry(&mut out, "RHS", "OBJ", -model.obj_constant);
    }
    for (i, c) in model.cons.iter().enumerate() {
        if c.rhs != 0.0 {
            entry(&mut out, "RHS", &row_name(i), c.rhs);
        }
    }

    out.push_str("BOUNDS\n");
    for (j, var) in model.vars.iter().enumerate() {
        let name = col_name(j);
        let bound = |out: &mut String, tag: &str, value: Option<f64>| {
            let _ = match value {
                Some(v) => writeln!(out, " {tag:<2} BND       {name:<8}  {:>12}", num(v)),
                None => writeln!(out, " {tag:<2} BND       {name:<8}"),
            };
        };
        let (lb, ub) = (var.lb, var.ub);
        if var.integer && lb == 0.0 && ub == 1.0 {
            bound(&mut out, "BV", None);
        } else if lb == ub {
            bound(&mut out, "FX", Some(lb));
        } else if lb == f64::NEG_INFINITY && ub == f64::INFINITY {
            bound(&mut out, "FR", None);
        } else {
            if lb == f64::NEG_INFINITY {
                bound(&mut out, "MI", None);
            } else if lb != 0.0 || var.integer {
                bound(&mut out, "LO", Some(lb));
            }
            if ub.is_finite() {
                bound(&mut out, "UP", Some(ub));
            } else if var.integer {
                bound(&mut out, "PL", None);
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}
