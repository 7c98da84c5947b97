//! Reduction of a [`MilpModel`] to the bounded LP form used by the simplex:
//! `min c·x  s.t.  row_lo <= A x <= row_hi,  col_lo <= x <= col_hi`.
//!
//! Fixed columns are substituted out and single-variable rows become bounds,
//! repeated until nothing changes.

use super::{MilpModel, Sense};

const FIX_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub(crate) struct Lp {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub col_lo: Vec<f64>,
    pub col_hi: Vec<f64>,
    pub row_lo: Vec<f64>,
    pub row_hi: Vec<f64>,
    pub integer: Vec<bool>,
}

impl Lp {
    pub fn m(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ColMap {
    Column(usize),
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct Presolved {
    pub lp: Lp,
    pub col_of: Vec<ColMap>,
    pub obj_constant: f64,
}

impl Presolved {
    pub fn expand(&self, lp_values: &[f64]) -> Vec<f64> {
        self.col_of
            .iter()
            .map(|c| match *c {
                ColMap::Column(j) => lp_values[j],
                ColMap::Fixed(v) => v,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PresolveInfeasible;

fn round_integer_bounds(lo: &mut f64, hi: &mut f64) {
    *lo = (*lo - FIX_TOL).ceil();
    *hi = (*hi + FIX_TOL).floor();
}

/// `overrides` replaces the model bounds of selected variables (used by the
/// enumeration oracle and warm-start checks).
pub(crate) fn presolve(
    model: &MilpModel,
    overrides: &[(usize, f64, f64)],
) -> Result<Presolved, PresolveInfeasible> {
    let nv = model.vars.len();
    let mut lo: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let mut hi: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    for &(j, l, h) in overrides {
        lo[j] = l;
        hi[j] = h;
    }
    for j in 0..nv {
        if model.vars[j].integer {
            round_integer_bounds(&mut lo[j], &mut hi[j]);
        }
        if lo[j] > hi[j] + FEAS_TOL {
            return Err(PresolveInfeasible);
        }
    }
    let mut fixed: Vec<Option<f64>> = (0..nv)
        .map(|j| ((hi[j] - lo[j]).abs() <= FIX_TOL).then_some(lo[j]))
        .collect();

    // merge duplicate terms per row
    let mut rows: Vec<(Vec<(usize, f64)>, f64, f64)> = model
        .cons
        .iter()
        .map(|c| {
            let mut terms: Vec<(usize, f64)> = c.terms.iter().map(|(v, a)| (v.0, *a)).collect();
            terms.sort_by_key(|t| t.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
            for (j, a) in terms {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += a,
                    _ => merged.push((j, a)),
                }
            }
            merged.retain(|t| t.1 != 0.0);
            let (rl, rh) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            (merged, rl, rh)
        })
        .collect();
    let mut active = vec![true; rows.len()];

    loop {
        let mut changed = false;
        for (r, (terms, rl, rh)) in rows.iter_mut().enumerate() {
            if !active[r] {
                continue;
            }
            let mut shift = 0.0;
            let mut free = Vec::new();
            for &(j, a) in terms.iter() {
                match fixed[j] {
                    Some(v) => shift += a * v,
                    None => free.push((j, a)),
                }
            }
            match free.len() {
                0 => {
                    if shift < *rl - FEAS_TOL || shift > *rh + FEAS_TOL {
                        return Err(PresolveInfeasible);
                    }
                    active[r] = false;
                }
                1 => {
                    let (j, a) = free[0];
                    let (mut l, mut h) = ((*rl - shift) / a, (*rh - shift) / a);
                    if a < 0.0 {
                        std::mem::swap(&mut l, &mut h);
                    }
                    let mut nl = lo[j].max(l);
                    let mut nh = hi[j].min(h);
                    if model.vars[j].integer {
                        round_integer_bounds(&mut nl, &mut nh);
                    }
                    if nl > nh + FEAS_TOL {
                        return Err(PresolveInfeasible);
                    }
                    if nl > nh {
                        nh = nl;
                    }
                    lo[j] = nl;
                    hi[j] = nh;
                    if nh - nl <= FIX_TOL {
                        fixed[j] = Some(nl);
                        changed = true;
                    }
                    active[r] = false;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }

    let mut col_of = Vec::with_capacity(nv);
    let mut var_of = Vec::new();
    for j in 0..nv {
        match fixed[j] {
            Some(v) => col_of.push(ColMap::Fixed(v)),
            None => {
                col_of.push(ColMap::Column(var_of.len()));
                var_of.push(j);
            }
        }
    }
    let n = var_of.len();
    let mut cost = vec![0.0; n];
    let mut obj_constant = model.obj_constant;
    for &(v, c) in &model.objective {
        match col_of[v.0] {
            ColMap::Column(j) => cost[j] += c,
            ColMap::Fixed(x) => obj_constant += c * x,
        }
    }
    let mut lp_rows = Vec::new();
    let mut row_lo = Vec::new();
    let mut row_hi = Vec::new();
    for (r, (terms, rl, rh)) in rows.into_iter().enumerate() {
        if !active[r] {
            continue;
        }
        let mut shift = 0.0;
        let mut row = Vec::with_capacity(terms.len());
        for (j, a) in terms {
            match col_of[j] {
                ColMap::Column(c) => row.push((c, a)),
                ColMap::Fixed(v) => shift += a * v,
            }
        }
        lp_rows.push(row);
        row_lo.push(rl - shift);
        row_hi.push(rh - shift);
    }
    Ok(Presolved {
        lp: Lp {
            n,
            rows: lp_rows,
            cost,
            col_lo: var_of.iter().map(|&j| lo[j]).collect(),
            col_hi: var_of.iter().map(|&j| hi[j]).collect(),
            row_lo,
            row_hi,
            integer: var_of.iter().map(|&j| model.vars[j].integer).collect(),
        },
        col_of,
        obj_constant,
    })
}
