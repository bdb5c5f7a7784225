//! Two-phase bounded-variable revised simplex with an explicit dense basis
//! inverse.
//!
//! Every row gets a slack (`a x + s = b`) whose bounds encode the relation, so
//! the working form is `[A I] z = b` with `l <= z <= u`. Phase one adds an
//! artificial column only for rows the starting slack basis cannot satisfy.
//! Pricing is Dantzig's rule with a Harris ratio test; after a run of
//! non-improving iterations the solver falls back to Bland's rule until the
//! objective moves again. All ties resolve to the lowest index.

use super::scaling::Scaling;
use super::{ConstraintId, LinearProgram, LpError, LpSolution, LpStatus, Relation, Sense};
use crate::linalg::DenseLu;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Hard cap on simplex iterations over both phases; `None` derives a cap
    /// from the problem size.
    pub max_iterations: Option<usize>,
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    pub pivot_tolerance: f64,
    /// Iterations between basis reinversions.
    pub refactor_interval: usize,
    /// Non-improving iterations tolerated before switching to Bland's rule.
    pub stall_threshold: usize,
    pub scale: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: None,
            primal_tolerance: 1e-9,
            dual_tolerance: 1e-9,
            pivot_tolerance: 1e-9,
            refactor_interval: 64,
            stall_threshold: 60,
            scale: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    FreeZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

struct Tableau<'a> {
    opts: &'a SolverOptions,
    m: usize,
    n_struct: usize,
    // structural columns, compressed by column
    col_start: Vec<usize>,
    row_index: Vec<usize>,
    value: Vec<f64>,
    // artificial sign per row (0.0 when the row has no artificial)
    art_sign: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
    bland: bool,
}

impl<'a> Tableau<'a> {
    fn n_total(&self) -> usize {
        self.n_struct + 2 * self.m
    }

    fn artificial(&self, i: usize) -> usize {
        self.n_struct + self.m + i
    }

    /// Calls `f(row, coefficient)` for each nonzero of column `j`.
    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n_struct {
            for k in self.col_start[j]..self.col_start[j + 1] {
                f(self.row_index[k], self.value[k]);
            }
        } else if j < self.n_struct + self.m {
            f(j - self.n_struct, 1.0);
        } else {
            let i = j - self.n_struct - self.m;
            if self.art_sign[i] != 0.0 {
                f(i, self.art_sign[i]);
            }
        }
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_column(j, |i, a| s += a * y[i]);
        s
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_column(j, |k, a| {
            for (i, out) in alpha.iter_mut().enumerate() {
                *out += self.binv[i * m + k] * a;
            }
        });
        alpha
    }

    fn btran_costs(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let c = self.cost[bj];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, r) in y.iter_mut().zip(row) {
                    *yk += c * r;
                }
            }
        }
        y
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values.
    fn reinvert(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut dense = vec![0.0; m * m];
        for (pos, &j) in self.basis.iter().enumerate() {
            self.for_column(j, |i, a| dense[i * m + pos] = a);
        }
        let lu = DenseLu::factorize(m, dense, 1e-13).map_err(|_| LpError::SingularBasis)?;
        self.binv = lu.inverse();
        self.since_refactor = 0;
        self.recompute_basic_values();
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut r = self.rhs.clone();
        for j in 0..self.n_total() {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_column(j, |i, a| r[i] -= a * xj);
            }
        }
        for pos in 0..m {
            let row = &self.binv[pos * m..(pos + 1) * m];
            let v: f64 = row.iter().zip(&r).map(|(a, b)| a * b).sum();
            let j = self.basis[pos];
            self.x[j] = v;
        }
    }

    /// Picks the entering column and its direction (+1 increase, -1 decrease).
    fn price(&self, y: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.dual_tolerance;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n_total() {
            let s = self.state[j];
            if s == VarState::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.cost[j] - self.column_dot(j, y);
            let dir = match s {
                VarState::AtLower if d < -tol => 1.0,
                VarState::AtUpper if d > tol => -1.0,
                VarState::FreeZero if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Returns the step length and the leaving basis position (None for a
    /// bound flip of the entering variable). An infinite step means unbounded.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64]) -> (f64, Option<usize>) {
        let ptol = self.opts.pivot_tolerance;
        let delta_tol = self.opts.primal_tolerance;
        let range = self.upper[q] - self.lower[q];

        // pass 1: relaxed bound
        let mut t_max = f64::INFINITY;
        for (pos, &a) in alpha.iter().enumerate() {
            if a.abs() <= ptol {
                continue;
            }
            let j = self.basis[pos];
            let rate = -dir * a;
            let relaxed = if rate < 0.0 {
                if self.lower[j].is_finite() {
                    (self.x[j] - self.lower[j] + delta_tol) / -rate
                } else {
                    continue;
                }
            } else if self.upper[j].is_finite() {
                (self.upper[j] - self.x[j] + delta_tol) / rate
            } else {
                continue;
            };
            if self.bland {
                t_max = t_max.min(relaxed.max(0.0));
            } else {
                t_max = t_max.min(relaxed);
            }
        }
        if range.is_finite() && range <= t_max {
            return (range, None);
        }
        if t_max == f64::INFINITY {
            return (f64::INFINITY, None);
        }

        // pass 2: among rows within the relaxed bound, largest pivot (Bland: lowest index)
        let mut chosen: Option<usize> = None;
        let mut chosen_key = 0.0;
        let mut chosen_t = 0.0;
        for (pos, &a) in alpha.iter().enumerate() {
            if a.abs() <= ptol {
                continue;
            }
            let j = self.basis[pos];
            let rate = -dir * a;
            let exact = if rate < 0.0 {
                if !self.lower[j].is_finite() {
                    continue;
                }
                (self.x[j] - self.lower[j]) / -rate
            } else {
                if !self.upper[j].is_finite() {
                    continue;
                }
                (self.upper[j] - self.x[j]) / rate
            };
            if exact > t_max {
                continue;
            }
            let better = match chosen {
                None => true,
                Some(c) => {
                    if self.bland {
                        j < self.basis[c]
                    } else {
                        a.abs() > chosen_key || (a.abs() == chosen_key && j < self.basis[c])
                    }
                }
            };
            if better {
                chosen = Some(pos);
                chosen_key = a.abs();
                chosen_t = exact.max(0.0);
            }
        }
        (chosen_t, chosen)
    }

    fn pivot(&mut self, q: usize, dir: f64, alpha: &[f64], t: f64, leave: Option<usize>) {
        let m = self.m;
        for (pos, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let j = self.basis[pos];
                self.x[j] -= dir * a * t;
            }
        }
        self.x[q] += dir * t;
        match leave {
            None => {
                // bound flip
                if dir > 0.0 {
                    self.x[q] = self.upper[q];
                    self.state[q] = VarState::AtUpper;
                } else {
                    self.x[q] = self.lower[q];
                    self.state[q] = VarState::AtLower;
                }
            }
            Some(r) => {
                let leaving = self.basis[r];
                let rate = -dir * alpha[r];
                if rate < 0.0 {
                    self.x[leaving] = self.lower[leaving];
                    self.state[leaving] = VarState::AtLower;
                } else {
                    self.x[leaving] = self.upper[leaving];
                    self.state[leaving] = VarState::AtUpper;
                }
                self.state[q] = VarState::Basic;
                self.basis[r] = q;

                let piv = alpha[r];
                let (head, rest) = self.binv.split_at_mut(r * m);
                let (prow, tail) = rest.split_at_mut(m);
                prow.iter_mut().for_each(|v| *v /= piv);
                for (i, &a) in alpha.iter().enumerate() {
                    if i == r || a == 0.0 {
                        continue;
                    }
                    let row = if i < r {
                        &mut head[i * m..(i + 1) * m]
                    } else {
                        let off = (i - r - 1) * m;
                        &mut tail[off..off + m]
                    };
                    for (v, p) in row.iter_mut().zip(prow.iter()) {
                        *v -= a * p;
                    }
                }
                self.since_refactor += 1;
            }
        }
    }

    fn run_phase(&mut self, phase: Phase) -> Result<PhaseOutcome, LpError> {
        let mut best_obj = self.objective();
        let mut stalled = 0usize;
        self.bland = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit { limit: self.max_iterations });
            }
            if self.since_refactor >= self.opts.refactor_interval {
                self.reinvert()?;
            }
            let y = self.btran_costs();
            let Some((q, dir)) = self.price(&y) else {
                return Ok(PhaseOutcome::Optimal);
            };
            let alpha = self.ftran(q);
            let (t, leave) = self.ratio_test(q, dir, &alpha);
            if t == f64::INFINITY {
                if phase == Phase::One {
                    // phase one is bounded below by zero; treat as numerical trouble
                    return Err(LpError::SingularBasis);
                }
                return Ok(PhaseOutcome::Unbounded);
            }
            self.pivot(q, dir, &alpha, t, leave);
            self.iterations += 1;

            let obj = self.objective();
            if obj < best_obj - 1e-12 * best_obj.abs().max(1.0) {
                best_obj = obj;
                stalled = 0;
                self.bland = false;
            } else {
                stalled += 1;
                if stalled >= self.opts.stall_threshold {
                    self.bland = true;
                }
            }
        }
    }
}

pub(super) fn solve(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    let m = lp.constraints.len();
    let n = lp.variables.len();

    let mut entries = Vec::new();
    for (i, c) in lp.constraints.iter().enumerate() {
        for &(v, a) in &c.terms {
            if a != 0.0 {
                entries.push((i, v.0, a));
            }
        }
    }
    let scaling = if opts.scale {
        Scaling::compute(m, n, &entries)
    } else {
        Scaling { row: vec![1.0; m], col: vec![1.0; n] }
    };

    // compressed columns; duplicate (row, col) pairs are summed
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, a) in &entries {
        by_col[j].push((i, a * scaling.row[i] * scaling.col[j]));
    }
    let mut col_start = Vec::with_capacity(n + 1);
    let mut row_index = Vec::new();
    let mut value = Vec::new();
    col_start.push(0);
    for col in &mut by_col {
        col.sort_by_key(|&(i, _)| i);
        let mut k = 0;
        while k < col.len() {
            let i = col[k].0;
            let mut s = 0.0;
            while k < col.len() && col[k].0 == i {
                s += col[k].1;
                k += 1;
            }
            if s != 0.0 {
                row_index.push(i);
                value.push(s);
            }
        }
        col_start.push(row_index.len());
    }

    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let total = n + 2 * m;
    let mut lower = vec![0.0; total];
    let mut upper = vec![0.0; total];
    let mut true_cost = vec![0.0; total];
    for (j, v) in lp.variables.iter().enumerate() {
        lower[j] = v.lower / scaling.col[j];
        upper[j] = v.upper / scaling.col[j];
        true_cost[j] = sign * v.objective * scaling.col[j];
    }
    let rhs: Vec<f64> = lp.constraints.iter().enumerate().map(|(i, c)| c.rhs * scaling.row[i]).collect();
    for (i, c) in lp.constraints.iter().enumerate() {
        let s = n + i;
        let (lo, hi) = match c.relation {
            Relation::Le => (0.0, f64::INFINITY),
            Relation::Ge => (f64::NEG_INFINITY, 0.0),
            Relation::Eq => (0.0, 0.0),
        };
        lower[s] = lo;
        upper[s] = hi;
    }

    // starting point: structurals at a finite bound (or zero when free)
    let mut x = vec![0.0; total];
    let mut state = vec![VarState::AtLower; total];
    for j in 0..n {
        if lower[j].is_finite() {
            x[j] = lower[j];
            state[j] = VarState::AtLower;
        } else if upper[j].is_finite() {
            x[j] = upper[j];
            state[j] = VarState::AtUpper;
        } else {
            x[j] = 0.0;
            state[j] = VarState::FreeZero;
        }
    }
    let mut residual = rhs.clone();
    for j in 0..n {
        if x[j] != 0.0 {
            for k in col_start[j]..col_start[j + 1] {
                residual[row_index[k]] -= value[k] * x[j];
            }
        }
    }

    let mut art_sign = vec![0.0; m];
    let mut basis = Vec::with_capacity(m);
    let mut phase1_cost = vec![0.0; total];
    for i in 0..m {
        let s = n + i;
        let a = n + m + i;
        let r = residual[i];
        if r >= lower[s] && r <= upper[s] {
            x[s] = r;
            state[s] = VarState::Basic;
            basis.push(s);
            // unused artificial stays fixed at zero
            lower[a] = 0.0;
            upper[a] = 0.0;
            state[a] = VarState::AtLower;
        } else {
            x[s] = 0.0;
            state[s] = if lower[s] == 0.0 { VarState::AtLower } else { VarState::AtUpper };
            art_sign[i] = if r >= 0.0 { 1.0 } else { -1.0 };
            x[a] = r.abs();
            lower[a] = 0.0;
            upper[a] = f64::INFINITY;
            state[a] = VarState::Basic;
            phase1_cost[a] = 1.0;
            basis.push(a);
        }
    }
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = if art_sign[i] != 0.0 { art_sign[i] } else { 1.0 };
    }

    let max_iterations = opts.max_iterations.unwrap_or(20_000 + 50 * (n + m));
    let mut tab = Tableau {
        opts,
        m,
        n_struct: n,
        col_start,
        row_index,
        value,
        art_sign,
        rhs,
        lower,
        upper,
        cost: phase1_cost,
        x,
        state,
        basis,
        binv,
        since_refactor: 0,
        iterations: 0,
        max_iterations,
        bland: false,
    };

    let needs_phase_one = tab.art_sign.iter().any(|&s| s != 0.0);
    if needs_phase_one {
        tab.run_phase(Phase::One)?;
        tab.reinvert()?;
        let infeasibility: f64 = (0..m).map(|i| tab.x[tab.artificial(i)].max(0.0)).sum();
        let scale = 1.0 + tab.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeasibility > 1e-7 * scale {
            let y = tab.btran_costs();
            let mut implicated: Vec<ConstraintId> = (0..m)
                .filter(|&i| y[i].abs() > 1e-9)
                .map(ConstraintId)
                .collect();
            if implicated.is_empty() {
                implicated = (0..m).filter(|&i| tab.x[tab.artificial(i)] > 1e-9).map(ConstraintId).collect();
            }
            let values = (0..n).map(|j| tab.x[j] * scaling.col[j]).collect::<Vec<_>>();
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: lp.objective_at(&values),
                values,
                duals: Vec::new(),
                infeasible_constraints: implicated,
                iterations: tab.iterations,
            });
        }
        for i in 0..m {
            let a = tab.artificial(i);
            tab.lower[a] = 0.0;
            tab.upper[a] = 0.0;
            if tab.state[a] != VarState::Basic {
                tab.x[a] = 0.0;
                tab.state[a] = VarState::AtLower;
            }
        }
    }
    tab.cost = true_cost;
    let outcome = tab.run_phase(Phase::Two)?;
    tab.reinvert()?;

    let values: Vec<f64> = (0..n).map(|j| tab.x[j] * scaling.col[j]).collect();
    let objective = lp.objective_at(&values);
    match outcome {
        PhaseOutcome::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            values,
            objective: -sign * f64::INFINITY,
            duals: Vec::new(),
            infeasible_constraints: Vec::new(),
            iterations: tab.iterations,
        }),
        PhaseOutcome::Optimal => {
            let y = tab.btran_costs();
            let duals = (0..m).map(|i| sign * y[i] * scaling.row[i]).collect();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                values,
                objective,
                duals,
                infeasible_constraints: Vec::new(),
                iterations: tab.iterations,
            })
        }
    }
}
