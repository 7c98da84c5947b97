//! Dense bounded simplex on a condensed tableau.
//!
//! Every row `i` of the LP carries a logical variable `s_i = a_i·x` bounded by
//! `[row_lo, row_hi]`, so the equality system is homogeneous and the tableau
//! expresses each basic variable as a linear combination of the nonbasic
//! ones: `x_B[i] = Σ_j T[i][j] · x_N[j]`. The extra last row carries the
//! objective in the same form, which makes it the reduced-cost row.
//!
//! Variables `0..n` are structural, `n..n+m` logical.

use std::sync::Arc;

use super::presolve::Lp;

pub(crate) const PIVOT_TOL: f64 = 1e-9;
pub(crate) const FEAS_TOL: f64 = 1e-7;
const OPT_TOL: f64 = 1e-9;
const DRIFT_TOL: f64 = 1e-6;
const BLAND_AFTER: usize = 50;
const REFRESH_EVERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Basic(usize),
    Nonbasic(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct LpState {
    lp: Arc<Lp>,
    n: usize,
    m: usize,
    tab: Vec<f64>,
    basis: Vec<usize>,
    nonbasic: Vec<usize>,
    slot: Vec<Slot>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    pub iterations: usize,
    since_refresh: usize,
}

impl LpState {
    pub fn new(lp: Arc<Lp>) -> Self {
        let (n, m) = (lp.n, lp.m());
        let mut lo = lp.col_lo.clone();
        lo.extend_from_slice(&lp.row_lo);
        let mut hi = lp.col_hi.clone();
        hi.extend_from_slice(&lp.row_hi);
        let mut state = LpState {
            n,
            m,
            tab: Vec::new(),
            basis: (n..n + m).collect(),
            nonbasic: (0..n).collect(),
            slot: (0..n).map(Slot::Nonbasic).chain((0..m).map(Slot::Basic)).collect(),
            x: vec![0.0; n + m],
            lo,
            hi,
            iterations: 0,
            since_refresh: 0,
            lp,
        };
        state.load_slack_tableau();
        for j in 0..n {
            state.x[j] = state.dual_friendly_start(j);
        }
        state.refresh_basics();
        state
    }

    fn width(&self) -> usize {
        self.n
    }

    fn load_slack_tableau(&mut self) {
        let w = self.width();
        self.tab = vec![0.0; (self.m + 1) * w];
        for (i, row) in self.lp.rows.iter().enumerate() {
            for &(j, a) in row {
                self.tab[i * w + j] += a;
            }
        }
        self.tab[self.m * w..].copy_from_slice(&self.lp.cost);
        self.basis = (self.n..self.n + self.m).collect();
        self.nonbasic = (0..self.n).collect();
        for j in 0..self.n {
            self.slot[j] = Slot::Nonbasic(j);
        }
        for i in 0..self.m {
            self.slot[self.n + i] = Slot::Basic(i);
        }
    }

    /// Starting value for a structural column that keeps the slack basis dual
    /// feasible whenever the needed bound is finite.
    fn dual_friendly_start(&self, j: usize) -> f64 {
        let (l, h, c) = (self.lo[j], self.hi[j], self.lp.cost[j]);
        let pick = if c > 0.0 {
            l
        } else if c < 0.0 {
            h
        } else if l.is_finite() {
            l
        } else {
            h
        };
        if pick.is_finite() {
            pick
        } else if l.is_finite() {
            l
        } else if h.is_finite() {
            h
        } else {
            0.0
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.tab[i * w..(i + 1) * w]
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.tab[i * self.width() + j]
    }

    fn reduced_cost(&self, col: usize) -> f64 {
        self.at(self.m, col)
    }

    /// Recomputes basic values from the nonbasic ones.
    fn refresh_basics(&mut self) {
        let w = self.width();
        for i in 0..self.m {
            let row = &self.tab[i * w..(i + 1) * w];
            let v: f64 = row
                .iter()
                .zip(&self.nonbasic)
                .map(|(a, &q)| a * self.x[q])
                .sum();
            self.x[self.basis[i]] = v;
        }
        self.since_refresh = 0;
    }

    pub fn objective(&self) -> f64 {
        self.x[..self.n]
            .iter()
            .zip(&self.lp.cost)
            .map(|(x, c)| x * c)
            .sum()
    }

    pub fn structural_values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.hi[j])
    }

    /// Changes the bounds of a structural column. A nonbasic column is moved
    /// into the new range; a basic one may become primal infeasible, which
    /// the dual simplex repairs.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if let Slot::Nonbasic(col) = self.slot[j] {
            let old = self.x[j];
            let new = if old < lo {
                lo
            } else if old > hi {
                hi
            } else if lo == hi {
                lo
            } else {
                old
            };
            if new != old {
                self.x[j] = new;
                let delta = new - old;
                for i in 0..self.m {
                    let a = self.at(i, col);
                    if a != 0.0 {
                        self.x[self.basis[i]] += a * delta;
                    }
                }
            }
        }
    }

    /// Jordan exchange of basic row `r` with nonbasic column `s`.
    fn exchange(&mut self, r: usize, s: usize) {
        let w = self.width();
        let p = self.tab[r * w + s];
        let inv = 1.0 / p;
        {
            let prow = &mut self.tab[r * w..(r + 1) * w];
            for v in prow.iter_mut() {
                *v *= -inv;
            }
            prow[s] = inv;
        }
        let (before, rest) = self.tab.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let update = |row: &mut [f64]| {
            let f = row[s];
            if f == 0.0 {
                return;
            }
            row[s] = 0.0;
            for (v, &pr) in row.iter_mut().zip(prow.iter()) {
                *v += f * pr;
            }
        };
        before.chunks_exact_mut(w).for_each(update);
        after.chunks_exact_mut(w).for_each(update);

        let leaving = self.basis[r];
        let entering = self.nonbasic[s];
        self.basis[r] = entering;
        self.nonbasic[s] = leaving;
        self.slot[entering] = Slot::Basic(r);
        self.slot[leaving] = Slot::Nonbasic(s);
        self.iterations += 1;
        self.since_refresh += 1;
    }

    fn move_nonbasic(&mut self, s: usize, delta: f64) {
        let q = self.nonbasic[s];
        self.x[q] += delta;
        let w = self.width();
        for i in 0..self.m {
            let a = self.tab[i * w + s];
            if a != 0.0 {
                self.x[self.basis[i]] += a * delta;
            }
        }
    }

    fn infeasibility(&self, var: usize) -> f64 {
        let v = self.x[var];
        if v < self.lo[var] - FEAS_TOL {
            self.lo[var] - v
        } else if v > self.hi[var] + FEAS_TOL {
            v - self.hi[var]
        } else {
            0.0
        }
    }

    fn is_dual_feasible(&self) -> bool {
        (0..self.width()).all(|s| {
            let q = self.nonbasic[s];
            let d = self.reduced_cost(s);
            let can_up = self.x[q] < self.hi[q] - FEAS_TOL;
            let can_down = self.x[q] > self.lo[q] + FEAS_TOL;
            !(can_up && d < -OPT_TOL) && !(can_down && d > OPT_TOL)
        })
    }

    fn iteration_cap(&self) -> usize {
        50 * (self.n + self.m) + 1000
    }

    /// Solves from the current basis: dual simplex when the basis is dual
    /// feasible, then primal simplex to finish or to run phase 1.
    pub fn solve(&mut self) -> LpStatus {
        for attempt in 0..3 {
            let mut status = None;
            if self.is_dual_feasible() {
                if let Some(s) = self.dual_simplex() {
                    status = Some(s);
                }
            }
            let status = match status {
                Some(LpStatus::Infeasible) => {
                    // confirm with primal phase 1, which does not depend on
                    // dual feasibility tolerances
                    self.primal_simplex()
                }
                Some(other) if other != LpStatus::Optimal => other,
                _ => self.primal_simplex(),
            };
            self.refresh_basics();
            if status != LpStatus::Optimal || self.max_drift() <= DRIFT_TOL || attempt == 2 {
                return status;
            }
            self.reinvert();
        }
        unreachable!()
    }

    /// Residual between tableau-maintained logicals and the original rows.
    fn max_drift(&self) -> f64 {
        self.lp
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let act: f64 = row.iter().map(|&(j, a)| a * self.x[j]).sum();
                (act - self.x[self.n + i]).abs() / (1.0 + act.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Rebuilds the tableau for the current basis from the original rows.
    fn reinvert(&mut self) {
        let target: Vec<usize> = self.basis.iter().copied().filter(|&v| v < self.n).collect();
        let saved_x = self.x.clone();
        let mut previously_basic = vec![false; self.n + self.m];
        for &v in &self.basis {
            previously_basic[v] = true;
        }
        self.load_slack_tableau();
        for &q in &target {
            let Slot::Nonbasic(s) = self.slot[q] else {
                continue;
            };
            // prefer displacing logicals that were nonbasic in the old basis
            let pick = |keep_old: bool| {
                let mut best: Option<(usize, f64)> = None;
                for i in 0..self.m {
                    let b = self.basis[i];
                    if b < self.n || (keep_old && previously_basic[b]) {
                        continue;
                    }
                    let a = self.at(i, s).abs();
                    if a > PIVOT_TOL && best.map_or(true, |(_, ba)| a > ba) {
                        best = Some((i, a));
                    }
                }
                best
            };
            if let Some((r, _)) = pick(true).or_else(|| pick(false)) {
                self.exchange(r, s);
            }
        }
        self.x = saved_x;
        for s in 0..self.width() {
            let q = self.nonbasic[s];
            if previously_basic[q] || self.x[q] < self.lo[q] || self.x[q] > self.hi[q] {
                self.x[q] = self.clamp_to_bound(q);
            }
        }
        self.refresh_basics();
    }

    fn clamp_to_bound(&self, q: usize) -> f64 {
        let v = self.x[q];
        if self.lo[q].is_finite() && (v <= self.lo[q] || !self.hi[q].is_finite()) {
            self.lo[q]
        } else if self.hi[q].is_finite() && v >= self.hi[q] {
            self.hi[q]
        } else if self.lo[q].is_finite() && self.hi[q].is_finite() {
            if v - self.lo[q] <= self.hi[q] - v {
                self.lo[q]
            } else {
                self.hi[q]
            }
        } else {
            v.clamp(self.lo[q], self.hi[q])
        }
    }

    /// Dual simplex; returns `None` if the iteration cap is reached.
    fn dual_simplex(&mut self) -> Option<LpStatus> {
        let cap = self.iteration_cap();
        let mut stalled = 0usize;
        let mut steps = 0usize;
        loop {
            if self.since_refresh >= REFRESH_EVERY {
                self.refresh_basics();
            }
            steps += 1;
            if steps > cap {
                return None;
            }
            let bland = stalled > BLAND_AFTER;
            // leaving row: largest infeasibility (smallest index under Bland)
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let inf = self.infeasibility(self.basis[i]);
                if inf > 0.0 {
                    let better = match leave {
                        None => true,
                        Some((r, v)) => {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                inf > v
                            }
                        }
                    };
                    if better {
                        leave = Some((i, inf));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Some(LpStatus::Optimal);
            };
            let b = self.basis[r];
            let (target, up) = if self.x[b] < self.lo[b] {
                (self.lo[b], true)
            } else {
                (self.hi[b], false)
            };
            let delta = target - self.x[b];

            let mut enter: Option<(usize, f64, f64)> = None;
            for s in 0..self.width() {
                let q = self.nonbasic[s];
                let alpha = self.at(r, s);
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                // direction the entering variable must move
                let inc = (alpha > 0.0) == up;
                let movable = if inc {
                    self.x[q] < self.hi[q] - FEAS_TOL
                } else {
                    self.x[q] > self.lo[q] + FEAS_TOL
                };
                if !movable {
                    continue;
                }
                let ratio = self.reduced_cost(s).abs() / alpha.abs();
                let better = match enter {
                    None => true,
                    Some((bs, br, ba)) => {
                        if ratio < br - 1e-12 {
                            true
                        } else if ratio <= br + 1e-12 {
                            if bland {
                                q < self.nonbasic[bs]
                            } else {
                                alpha.abs() > ba
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    enter = Some((s, ratio, alpha.abs()));
                }
            }
            let Some((s, ratio, _)) = enter else {
                return Some(LpStatus::Infeasible);
            };
            if ratio <= 1e-12 {
                stalled += 1;
            } else {
                stalled = 0;
            }
            let step = delta / self.at(r, s);
            self.move_nonbasic(s, step);
            self.x[b] = target;
            self.exchange(r, s);
        }
    }

    /// Composite primal simplex: phase 1 minimises the sum of bound
    /// violations of basic variables, phase 2 the true objective.
    fn primal_simplex(&mut self) -> LpStatus {
        let cap = self.iteration_cap();
        let mut degenerate = 0usize;
        let mut phase1_cost = vec![0.0; self.width()];
        for _ in 0..cap {
            if self.since_refresh >= REFRESH_EVERY {
                self.refresh_basics();
            }
            let bland = degenerate > BLAND_AFTER;
            let weights: Vec<(usize, f64)> = (0..self.m)
                .filter_map(|i| {
                    let b = self.basis[i];
                    if self.x[b] < self.lo[b] - FEAS_TOL {
                        Some((i, -1.0))
                    } else if self.x[b] > self.hi[b] + FEAS_TOL {
                        Some((i, 1.0))
                    } else {
                        None
                    }
                })
                .collect();
            let phase1 = !weights.is_empty();
            let d: &[f64] = if phase1 {
                phase1_cost.iter_mut().for_each(|v| *v = 0.0);
                for &(i, wgt) in &weights {
                    for (acc, a) in phase1_cost.iter_mut().zip(self.row(i)) {
                        *acc += wgt * a;
                    }
                }
                &phase1_cost
            } else {
                self.row(self.m)
            };

            // pricing
            let mut enter: Option<(usize, f64, f64)> = None; // (col, dir, score)
            for s in 0..self.width() {
                let q = self.nonbasic[s];
                let dj = d[s];
                let dir = if dj < -OPT_TOL && self.x[q] < self.hi[q] - FEAS_TOL {
                    1.0
                } else if dj > OPT_TOL && self.x[q] > self.lo[q] + FEAS_TOL {
                    -1.0
                } else {
                    continue;
                };
                let score = dj.abs();
                let better = match enter {
                    None => true,
                    Some((bs, _, bsc)) => {
                        if bland {
                            q < self.nonbasic[bs]
                        } else {
                            score > bsc
                        }
                    }
                };
                if better {
                    enter = Some((s, dir, score));
                }
            }
            let Some((s, dir, _)) = enter else {
                return if phase1 {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                };
            };
            let q = self.nonbasic[s];

            // ratio test
            let mut step = if dir > 0.0 {
                self.hi[q] - self.x[q]
            } else {
                self.x[q] - self.lo[q]
            };
            let mut leave: Option<(usize, f64, f64)> = None; // (row, bound, |pivot|)
            for i in 0..self.m {
                let a = self.at(i, s) * dir;
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let xb = self.x[b];
                let (limit, bound) = if a > 0.0 {
                    if xb < self.lo[b] - FEAS_TOL {
                        ((self.lo[b] - xb) / a, self.lo[b])
                    } else if xb > self.hi[b] + FEAS_TOL || !self.hi[b].is_finite() {
                        continue;
                    } else {
                        (((self.hi[b] - xb) / a).max(0.0), self.hi[b])
                    }
                } else if xb > self.hi[b] + FEAS_TOL {
                    ((xb - self.hi[b]) / -a, self.hi[b])
                } else if xb < self.lo[b] - FEAS_TOL || !self.lo[b].is_finite() {
                    continue;
                } else {
                    (((xb - self.lo[b]) / -a).max(0.0), self.lo[b])
                };
                let better = if limit < step - 1e-12 {
                    true
                } else if limit <= step + 1e-12 {
                    match leave {
                        None => limit <= step,
                        Some((lr, _, la)) => {
                            if bland {
                                b < self.basis[lr]
                            } else {
                                a.abs() > la
                            }
                        }
                    }
                } else {
                    false
                };
                if better {
                    step = step.min(limit);
                    leave = Some((i, bound, a.abs()));
                }
            }
            if !step.is_finite() {
                return if phase1 {
                    // cannot happen: an infeasible basic always blocks
                    LpStatus::Infeasible
                } else {
                    LpStatus::Unbounded
                };
            }
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.move_nonbasic(s, dir * step);
            match leave {
                Some((r, bound, _)) => {
                    let b = self.basis[r];
                    self.x[b] = bound;
                    self.exchange(r, s);
                }
                None => {
                    // bound flip
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    self.iterations += 1;
                }
            }
        }
        LpStatus::IterationLimit
    }
}

/// Solves a presolved LP from the slack basis.
pub(crate) fn solve_lp(lp: Arc<Lp>) -> (LpStatus, LpState) {
    let mut state = LpState::new(lp);
    let status = state.solve();
    (status, state)
}
