//! Mixed-integer linear programming over box-bounded continuous variables
//! and binary variables.
//!
//! LP relaxations are solved with a dense bounded-variable primal simplex
//! (two phases, artificial variables only on rows the starting point
//! violates). Branch-and-bound plunges depth first until it holds an
//! incumbent, then switches to best-bound node selection, always branching
//! on the most fractional binary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coefficients: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self {
            coefficients,
            relation,
            rhs,
        }
    }

    fn activity(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Variables are ordered continuous first, then binaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub continuous_bounds: Vec<(f64, f64)>,
    pub n_binary: usize,
    pub constraints: Vec<LinearConstraint>,
}

impl MilpProblem {
    pub fn n_continuous(&self) -> usize {
        self.continuous_bounds.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_continuous() + self.n_binary
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.n_vars();
        if self.objective.len() != nv {
            return Err(Error::DimensionMismatch {
                expected: nv,
                found: self.objective.len(),
            });
        }
        for &(lo, hi) in &self.continuous_bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "continuous bounds [{lo}, {hi}] must be finite and ordered"
                )));
            }
        }
        for c in &self.constraints {
            if c.coefficients.len() != nv {
                return Err(Error::DimensionMismatch {
                    expected: nv,
                    found: c.coefficients.len(),
                });
            }
            if !c.rhs.is_finite() || c.coefficients.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite constraint data".into()));
            }
        }
        Ok(())
    }

    fn root_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo: Vec<f64> = self.continuous_bounds.iter().map(|b| b.0).collect();
        let mut hi: Vec<f64> = self.continuous_bounds.iter().map(|b| b.1).collect();
        lo.extend(std::iter::repeat_n(0.0, self.n_binary));
        hi.extend(std::iter::repeat_n(1.0, self.n_binary));
        (lo, hi)
    }

    /// Objective in minimization form.
    fn min_cost(&self) -> Vec<f64> {
        match self.sense {
            Sense::Minimize => self.objective.clone(),
            Sense::Maximize => self.objective.iter().map(|c| -c).collect(),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest scaled constraint violation of `x` (bounds included).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.root_bounds();
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(lo[j] - v).max(v - hi[j]);
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(x) / (1.0 + c.rhs.abs()));
        }
        worst
    }
}

/// Centralized solver tolerances and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub prune_tol: f64,
    pub node_limit: usize,
    /// Re-solve child nodes from the parent tableau with the dual simplex.
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            integrality_tol: 1e-7,
            prune_tol: 1e-9,
            node_limit: 1_000_000,
            warm_start: true,
        }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective in the problem's own sense.
    pub value: f64,
    pub assignment: Vec<f64>,
    pub iterations: usize,
}

/// Dense tableau `B⁻¹A` over structural, slack and artificial columns.
#[derive(Debug, Clone)]
struct Tableau {
    m: usize,
    ns: usize,
    ncol: usize,
    tab: Vec<f64>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    dj: Vec<f64>,
    cost: Vec<f64>,
    bland: bool,
    degenerate: usize,
    iterations: usize,
}

const NOT_BASIC: usize = usize::MAX;

enum Step {
    Optimal,
    Moved,
    Unbounded,
}

impl Tableau {
    fn new(rows: &[LinearConstraint], lo: &[f64], hi: &[f64]) -> Self {
        let m = rows.len();
        let ns = lo.len();
        let ncol = ns + 2 * m;
        let mut t = Tableau {
            m,
            ns,
            ncol,
            tab: vec![0.0; m * ncol],
            x: vec![0.0; ncol],
            lo: vec![0.0; ncol],
            hi: vec![0.0; ncol],
            at_upper: vec![false; ncol],
            basis: vec![0; m],
            row_of: vec![NOT_BASIC; ncol],
            dj: vec![0.0; ncol],
            cost: vec![0.0; ncol],
            bland: false,
            degenerate: 0,
            iterations: 0,
        };
        t.lo[..ns].copy_from_slice(lo);
        t.hi[..ns].copy_from_slice(hi);
        t.x[..ns].copy_from_slice(lo);
        for (i, row) in rows.iter().enumerate() {
            let s = ns + i;
            let a = ns + m + i;
            let (slo, shi) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            t.lo[s] = slo;
            t.hi[s] = shi;
            let r = row.rhs - row.activity(&t.x[..ns]);
            let base = i * ncol;
            if r >= slo && r <= shi {
                t.tab[base..base + ns].copy_from_slice(&row.coefficients);
                t.tab[base + s] = 1.0;
                t.x[s] = r;
                t.basis[i] = s;
                t.row_of[s] = i;
                // Artificial stays nonbasic and fixed at zero.
            } else {
                let clip = r.clamp(slo, shi);
                let sigma = if r > clip { 1.0 } else { -1.0 };
                for (dst, &c) in t.tab[base..base + ns].iter_mut().zip(&row.coefficients) {
                    *dst = sigma * c;
                }
                t.tab[base + s] = sigma;
                t.tab[base + a] = 1.0;
                t.x[s] = clip;
                t.at_upper[s] = clip == shi && shi > slo;
                t.x[a] = (r - clip).abs();
                t.hi[a] = f64::INFINITY;
                t.basis[i] = a;
                t.row_of[a] = i;
            }
        }
        t
    }

    fn has_artificials(&self) -> bool {
        self.basis.iter().any(|&v| v >= self.ns + self.m)
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.recompute_reduced_costs();
    }

    fn recompute_reduced_costs(&mut self) {
        let ncol = self.ncol;
        self.dj.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.tab[i * ncol..(i + 1) * ncol];
                for (d, &a) in self.dj.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            self.dj[b] = 0.0;
        }
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, v)| c * v).sum()
    }

    /// Entering column and direction (+1 increase, −1 decrease).
    fn price(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncol {
            if self.row_of[j] != NOT_BASIC || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.dj[j];
            let dir = if !self.at_upper[j] && d < -COST_TOL && self.hi[j] > self.x[j] {
                1.0
            } else if d > COST_TOL && (self.at_upper[j] || self.lo[j] == f64::NEG_INFINITY) {
                -1.0
            } else {
                continue;
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, s)| d.abs() > s) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn step(&mut self) -> Step {
        let Some((q, dir)) = self.price() else {
            return Step::Optimal;
        };
        let ncol = self.ncol;
        // Bound flip of the entering variable.
        let mut t_max = self.hi[q] - self.lo[q];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_mag = 0.0;
        for i in 0..self.m {
            let alpha = dir * self.tab[i * ncol + q];
            if alpha.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let (limit, to_upper) = if alpha > 0.0 {
                if self.lo[b] == f64::NEG_INFINITY {
                    continue;
                }
                (((self.x[b] - self.lo[b]) / alpha).max(0.0), false)
            } else {
                if self.hi[b] == f64::INFINITY {
                    continue;
                }
                (((self.hi[b] - self.x[b]) / -alpha).max(0.0), true)
            };
            // Ties prefer the larger pivot, or the lowest index under Bland.
            let better = match leave {
                _ if limit < t_max - 1e-14 => true,
                Some((r, _)) if limit <= t_max + 1e-14 => {
                    if self.bland {
                        b < self.basis[r]
                    } else {
                        alpha.abs() > leave_mag
                    }
                }
                _ => false,
            };
            if better {
                t_max = limit;
                leave = Some((i, to_upper));
                leave_mag = alpha.abs();
            }
        }
        if !t_max.is_finite() {
            return Step::Unbounded;
        }
        if t_max <= DEGENERATE_STEP {
            self.degenerate += 1;
            if self.degenerate > 10 * (self.ncol + self.m) {
                self.bland = true;
            }
        }
        self.iterations += 1;
        let t = t_max;
        if t != 0.0 {
            for i in 0..self.m {
                let a = self.tab[i * ncol + q];
                if a != 0.0 {
                    self.x[self.basis[i]] -= dir * t * a;
                }
            }
            self.x[q] += dir * t;
        }
        match leave {
            None => {
                // Entering variable ran to its opposite bound.
                self.at_upper[q] = dir > 0.0;
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            }
            Some((r, to_upper)) => {
                let b = self.basis[r];
                self.x[b] = if to_upper { self.hi[b] } else { self.lo[b] };
                self.at_upper[b] = to_upper;
                self.pivot(r, q);
            }
        }
        Step::Moved
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let ncol = self.ncol;
        let piv = self.tab[r * ncol + q];
        let (before, rest) = self.tab.split_at_mut(r * ncol);
        let (prow, after) = rest.split_at_mut(ncol);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        prow[q] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for (a, &p) in row.iter_mut().zip(prow.iter()) {
                    *a -= f * p;
                }
                row[q] = 0.0;
            }
        };
        before.chunks_exact_mut(ncol).for_each(eliminate);
        after.chunks_exact_mut(ncol).for_each(eliminate);
        let f = self.dj[q];
        if f != 0.0 {
            for (d, &p) in self.dj.iter_mut().zip(prow.iter()) {
                *d -= f * p;
            }
            self.dj[q] = 0.0;
        }
        let old = self.basis[r];
        self.row_of[old] = NOT_BASIC;
        self.basis[r] = q;
        self.row_of[q] = r;
    }

    fn run(&mut self, max_iter: usize) -> LpStatus {
        loop {
            if self.iterations >= max_iter {
                return LpStatus::IterationLimit;
            }
            match self.step() {
                Step::Optimal => return LpStatus::Optimal,
                Step::Moved => {}
                // Structural variables are boxed, so this only signals numerical trouble.
                Step::Unbounded => return LpStatus::IterationLimit,
            }
        }
    }

    /// Fixes column `j` at `v` and restores primal feasibility with the
    /// bounded dual simplex, starting from an optimal basis. `None` asks the
    /// caller for a cold solve.
    fn fix_and_reoptimize(&mut self, j: usize, v: f64, max_iter: usize) -> Option<LpStatus> {
        let (m, ncol) = (self.m, self.ncol);
        self.lo[j] = v;
        self.hi[j] = v;
        if self.row_of[j] == NOT_BASIC {
            let delta = v - self.x[j];
            if delta != 0.0 {
                for i in 0..m {
                    let a = self.tab[i * ncol + j];
                    if a != 0.0 {
                        self.x[self.basis[i]] -= a * delta;
                    }
                }
            }
            self.x[j] = v;
            self.at_upper[j] = false;
        }
        self.iterations = 0;
        self.degenerate = 0;
        self.bland = false;
        loop {
            if self.iterations >= max_iter {
                return None;
            }
            let mut leave = None;
            let mut worst = 0.0;
            for i in 0..m {
                let b = self.basis[i];
                let (xb, lo, hi) = (self.x[b], self.lo[b], self.hi[b]);
                let below = lo - xb - 1e-9 * (1.0 + lo.abs());
                let above = xb - hi - 1e-9 * (1.0 + hi.abs());
                let inf = below.max(above);
                if inf > worst {
                    worst = inf;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else {
                break;
            };
            let b = self.basis[r];
            let to_upper = self.x[b] > self.hi[b];
            let target = if to_upper { self.hi[b] } else { self.lo[b] };
            // x_b moves by −a·Δ_q; `need` is the sign x_b must move in.
            let need = if to_upper { -1.0 } else { 1.0 };
            let mut enter: Option<(usize, f64, f64)> = None;
            for q in 0..ncol {
                if self.row_of[q] != NOT_BASIC || self.lo[q] == self.hi[q] {
                    continue;
                }
                let a = self.tab[r * ncol + q];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let step_sign = -need * a.signum();
                let movable = if step_sign > 0.0 {
                    !self.at_upper[q]
                } else {
                    self.at_upper[q]
                };
                if !movable {
                    continue;
                }
                let ratio = self.dj[q].abs() / a.abs();
                let better = enter.is_none_or(|(_, best, mag)| {
                    ratio < best - 1e-12 || (ratio <= best + 1e-12 && a.abs() > mag)
                });
                if better {
                    enter = Some((q, ratio, a.abs()));
                }
            }
            let Some((q, _, _)) = enter else {
                return Some(LpStatus::Infeasible);
            };
            let a = self.tab[r * ncol + q];
            let step = (self.x[b] - target) / a;
            for i in 0..m {
                let t = self.tab[i * ncol + q];
                if t != 0.0 {
                    self.x[self.basis[i]] -= t * step;
                }
            }
            self.x[q] += step;
            self.x[b] = target;
            self.at_upper[b] = to_upper;
            self.pivot(r, q);
            self.iterations += 1;
        }
        // Clean up residual dual infeasibilities.
        match self.run(max_iter) {
            LpStatus::Optimal => Some(LpStatus::Optimal),
            _ => None,
        }
    }

    /// Retire artificials after phase 1: fix them at zero.
    fn drop_artificials(&mut self) {
        for a in self.ns + self.m..self.ncol {
            self.hi[a] = 0.0;
            self.lo[a] = 0.0;
            if self.row_of[a] != NOT_BASIC {
                self.x[a] = self.x[a].clamp(0.0, 0.0);
            } else {
                self.x[a] = 0.0;
                self.at_upper[a] = false;
            }
        }
    }

    /// Recomputes basic values from the original rows by Gaussian elimination.
    fn refresh_basic_values(&mut self, rows: &[LinearConstraint]) {
        let m = self.m;
        if m == 0 {
            return;
        }
        let ns = self.ns;
        let col = |j: usize, i: usize| -> f64 {
            if j < ns {
                rows[i].coefficients[j]
            } else if j < ns + m {
                f64::from(u8::from(j - ns == i))
            } else {
                // Artificials are ±e_i and sit at zero, so the sign is irrelevant.
                f64::from(u8::from(j - ns - m == i))
            }
        };
        let mut a = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let mut r = rows[i].rhs;
            for j in 0..self.ncol {
                if self.row_of[j] == NOT_BASIC {
                    let v = self.x[j];
                    if v != 0.0 {
                        r -= col(j, i) * v;
                    }
                }
            }
            rhs[i] = r;
            for (k, &b) in self.basis.iter().enumerate() {
                a[i * m + k] = col(b, i);
            }
        }
        if let Some(sol) = solve_dense(&mut a, &mut rhs, m) {
            for (k, &b) in self.basis.iter().enumerate() {
                if b < ns + m {
                    self.x[b] = sol[k];
                }
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))?;
        if a[p * n + c].abs() < 1e-14 {
            return None;
        }
        if p != c {
            for k in 0..n {
                a.swap(p * n + k, c * n + k);
            }
            b.swap(p, c);
        }
        let piv = a[c * n + c];
        for i in c + 1..n {
            let f = a[i * n + c] / piv;
            if f != 0.0 {
                for k in c..n {
                    a[i * n + k] -= f * a[c * n + k];
                }
                b[i] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[i * n + k] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    Some(x)
}

/// Solves `min costᵀx` over `rows` and `lo ≤ x ≤ hi`, returning the final tableau.
fn simplex(
    rows: &[LinearConstraint],
    cost: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &SolverConfig,
    refresh: bool,
) -> (LpStatus, Tableau) {
    let mut t = Tableau::new(rows, lo, hi);
    let max_iter = 50 * (t.ncol + t.m) + 1000;
    if t.has_artificials() {
        let mut c1 = vec![0.0; t.ncol];
        for &b in &t.basis {
            if b >= t.ns + t.m {
                c1[b] = 1.0;
            }
        }
        t.set_cost(c1);
        match t.run(max_iter) {
            LpStatus::Optimal => {}
            other => return (other, t),
        }
        let scale = 1.0 + rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if t.objective() > cfg.feasibility_tol * scale {
            return (LpStatus::Infeasible, t);
        }
        t.drop_artificials();
    }
    let mut c2 = vec![0.0; t.ncol];
    c2[..t.ns].copy_from_slice(cost);
    t.set_cost(c2);
    let status = t.run(max_iter + t.iterations);
    if status == LpStatus::Optimal && refresh {
        t.refresh_basic_values(rows);
    }
    (status, t)
}

fn finish_lp(problem: &MilpProblem, status: LpStatus, t: &Tableau) -> LpSolution {
    let assignment = t.x[..t.ns].to_vec();
    let value = if status == LpStatus::Optimal {
        problem.objective_value(&assignment)
    } else {
        f64::NAN
    };
    LpSolution {
        status,
        value,
        assignment,
        iterations: t.iterations,
    }
}

/// LP relaxation (binaries relaxed to `[0, 1]`).
pub fn solve_lp(problem: &MilpProblem) -> Result<LpSolution> {
    problem.validate()?;
    let (lo, hi) = problem.root_bounds();
    let cfg = SolverConfig::default();
    let (status, t) = simplex(
        &problem.constraints,
        &problem.min_cost(),
        &lo,
        &hi,
        &cfg,
        true,
    );
    Ok(finish_lp(problem, status, &t))
}

fn solve_lp_with_bounds(
    problem: &MilpProblem,
    lo: &[f64],
    hi: &[f64],
    cfg: &SolverConfig,
) -> LpSolution {
    let (status, t) = simplex(&problem.constraints, &problem.min_cost(), lo, hi, cfg, true);
    finish_lp(problem, status, &t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent objective in the problem's sense.
    pub value: Option<f64>,
    pub assignment: Option<Vec<f64>>,
    pub node_count: usize,
    /// |incumbent − best open bound| when stopped early, otherwise 0.
    pub bound_gap: f64,
    /// Objective of the root LP relaxation.
    pub root_bound: Option<f64>,
    /// True when the search stopped because the incumbent reached the target.
    pub target_reached: bool,
}

/// Extra stopping rules for [`solve_milp_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop as soon as an incumbent is at least this good, and prune
    /// nodes whose bound cannot reach it.
    pub target: Option<f64>,
}

/// Parent tableaux kept alive for warm starts, counted per child reference.
const WARM_CAP: usize = 1024;

#[derive(Debug, Clone)]
struct Node {
    fix: Vec<i8>,
    /// Parent LP value, minimization form.
    bound: f64,
    seq: usize,
    /// Parent's optimal tableau and the binary fixed on this branch.
    warm: Option<(Rc<Tableau>, usize)>,
}

struct HeapNode(Node);

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapNode {}
impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: smaller bound first, then older node first.
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

pub fn solve_milp(problem: &MilpProblem, node_limit: usize) -> Result<MilpSolution> {
    let cfg = SolverConfig {
        node_limit,
        ..SolverConfig::default()
    };
    solve_milp_with(problem, &cfg, SolveOptions::default())
}

/// Branch-and-bound over the binary variables.
pub fn solve_milp_with(
    problem: &MilpProblem,
    cfg: &SolverConfig,
    opts: SolveOptions,
) -> Result<MilpSolution> {
    problem.validate()?;
    let nc = problem.n_continuous();
    let nb = problem.n_binary;
    let cost = problem.min_cost();
    let flip = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    // Target in minimization form.
    let target = opts.target.map(|t| flip * t);
    let (root_lo, root_hi) = problem.root_bounds();

    let mut stack: Vec<Node> = vec![Node {
        fix: vec![-1; nb],
        bound: f64::NEG_INFINITY,
        seq: 0,
        warm: None,
    }];
    let mut warm_refs = 0usize;
    let mut heap: BinaryHeap<HeapNode> = BinaryHeap::new();
    let mut seq = 1usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut root_bound = None;

    let bounds_for = |fix: &[i8]| {
        let mut lo = root_lo.clone();
        let mut hi = root_hi.clone();
        for (i, &f) in fix.iter().enumerate() {
            if f >= 0 {
                lo[nc + i] = f64::from(f);
                hi[nc + i] = f64::from(f);
            }
        }
        (lo, hi)
    };

    loop {
        let mut node = if incumbent.is_none() {
            match stack.pop() {
                Some(n) => n,
                None => break,
            }
        } else {
            if !stack.is_empty() {
                heap.extend(stack.drain(..).map(HeapNode));
            }
            match heap.pop() {
                Some(h) => h.0,
                None => break,
            }
        };
        let warm = node.warm.take();
        if warm.is_some() {
            warm_refs -= 1;
        }
        // Nodes must beat the incumbent, or at least reach the target.
        let prune = |bound: f64| match (&incumbent, target) {
            (Some((v, _)), _) => bound >= v - cfg.prune_tol,
            (None, Some(t)) => bound > t + cfg.prune_tol,
            (None, None) => false,
        };
        if prune(node.bound) {
            continue;
        }
        if nodes >= cfg.node_limit {
            let open_best = std::iter::once(node.bound)
                .chain(stack.iter().map(|n| n.bound))
                .chain(heap.iter().map(|h| h.0.bound))
                .fold(f64::INFINITY, f64::min);
            let gap = incumbent
                .as_ref()
                .map_or(f64::INFINITY, |(v, _)| (v - open_best).abs());
            return Ok(MilpSolution {
                status: MilpStatus::NodeLimit,
                value: incumbent.as_ref().map(|(v, _)| flip * v),
                assignment: incumbent.map(|(_, x)| x),
                node_count: nodes,
                bound_gap: gap,
                root_bound: root_bound.map(|b: f64| flip * b),
                target_reached: false,
            });
        }
        nodes += 1;
        let (lo, hi) = bounds_for(&node.fix);
        let warm_solve = warm.and_then(|(parent, i)| {
            let mut t = Rc::unwrap_or_clone(parent);
            let max_iter = 50 * (t.ncol + t.m) + 1000;
            let status = t.fix_and_reoptimize(nc + i, f64::from(node.fix[i]), max_iter)?;
            Some((status, t))
        });
        let (status, tab) = warm_solve
            .unwrap_or_else(|| simplex(&problem.constraints, &cost, &lo, &hi, cfg, false));
        if status == LpStatus::IterationLimit {
            return Err(Error::Indeterminate { nodes });
        }
        if status == LpStatus::Infeasible {
            continue;
        }
        let x = &tab.x[..nc + nb].to_vec();
        let lp_val: f64 = cost.iter().zip(x).map(|(c, v)| c * v).sum();
        if root_bound.is_none() {
            root_bound = Some(lp_val);
        }
        if prune(lp_val) {
            continue;
        }
        // Most fractional binary, lowest index on ties.
        let mut branch: Option<(usize, f64)> = None;
        for i in 0..nb {
            let v = x[nc + i];
            let frac = (v - v.round()).abs();
            if frac > cfg.integrality_tol && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                branch = Some((i, frac));
            }
        }
        match branch {
            None => {
                if let Some((val, sol)) = polish_incumbent(problem, x, &lo, &hi, cfg) {
                    let better = incumbent
                        .as_ref()
                        .is_none_or(|(v, _)| flip * val < *v - cfg.prune_tol);
                    if better {
                        incumbent = Some((flip * val, sol));
                        if let (Some(t), Some((v, _))) = (target, &incumbent) {
                            if *v <= t + cfg.prune_tol {
                                return Ok(MilpSolution {
                                    status: MilpStatus::Optimal,
                                    value: Some(flip * v),
                                    assignment: incumbent.map(|(_, x)| x),
                                    node_count: nodes,
                                    bound_gap: 0.0,
                                    root_bound: root_bound.map(|b| flip * b),
                                    target_reached: true,
                                });
                            }
                        }
                    }
                }
            }
            Some((i, _)) => {
                let v = x[nc + i];
                let first: i8 = if v >= 0.5 { 1 } else { 0 };
                let parent = (cfg.warm_start && warm_refs + 2 <= WARM_CAP).then(|| Rc::new(tab));
                // Pushed second, popped first during the plunge.
                for f in [1 - first, first] {
                    let mut fix = node.fix.clone();
                    fix[i] = f;
                    let warm = parent.as_ref().map(|p| (Rc::clone(p), i));
                    warm_refs += usize::from(warm.is_some());
                    stack.push(Node {
                        fix,
                        bound: lp_val,
                        seq,
                        warm,
                    });
                    seq += 1;
                }
            }
        }
    }

    let status = if incumbent.is_some() {
        MilpStatus::Optimal
    } else {
        MilpStatus::Infeasible
    };
    Ok(MilpSolution {
        status,
        value: incumbent.as_ref().map(|(v, _)| flip * v),
        assignment: incumbent.map(|(_, x)| x),
        node_count: nodes,
        bound_gap: 0.0,
        root_bound: root_bound.map(|b| flip * b),
        target_reached: false,
    })
}

/// Rounds binaries exactly, re-solves for the continuous part and checks
/// every constraint. Returns the objective in the problem's sense.
fn polish_incumbent(
    problem: &MilpProblem,
    x: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &SolverConfig,
) -> Option<(f64, Vec<f64>)> {
    let nc = problem.n_continuous();
    let mut lo = lo.to_vec();
    let mut hi = hi.to_vec();
    for j in nc..problem.n_vars() {
        let r = x[j].round();
        lo[j] = r;
        hi[j] = r;
    }
    let sol = solve_lp_with_bounds(problem, &lo, &hi, cfg);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let mut a = sol.assignment;
    a[nc..].copy_from_slice(&lo[nc..problem.n_vars()]);
    (problem.max_violation(&a) <= cfg.feasibility_tol).then(|| (problem.objective_value(&a), a))
}

fn var_name(problem: &MilpProblem, j: usize) -> String {
    let nc = problem.n_continuous();
    if j < nc {
        format!("x{j}")
    } else {
        format!("a{}", j - nc)
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn write_terms(out: &mut String, problem: &MilpProblem, coefs: &[f64]) {
    let mut any = false;
    for (j, &c) in coefs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let sign = if c.is_sign_negative() { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", fmt_num(c.abs()), var_name(problem, j));
        any = true;
    }
    if !any {
        let _ = write!(out, " + 0.0 {}", var_name(problem, 0));
    }
}

/// Fixed-format LP text. Numbers use shortest round-trip notation, so the
/// constraint matrix survives [`read_lp`] bit for bit.
pub fn write_lp(problem: &MilpProblem) -> String {
    let mut out = String::new();
    out.push_str(match problem.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    write_terms(&mut out, problem, &problem.objective);
    out.push_str("\nSubject To\n");
    for (i, c) in problem.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}:");
        write_terms(&mut out, problem, &c.coefficients);
        let _ = writeln!(out, " {} {}", c.relation.symbol(), fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (j, &(lo, hi)) in problem.continuous_bounds.iter().enumerate() {
        let _ = writeln!(out, " {} <= x{j} <= {}", fmt_num(lo), fmt_num(hi));
    }
    out.push_str("Binary\n");
    for i in 0..problem.n_binary {
        let _ = writeln!(out, " a{i}");
    }
    out.push_str("End\n");
    out
}

#[derive(PartialEq)]
enum Section {
    Head,
    Objective,
    Constraints,
    Bounds,
    Binary,
    Done,
}

/// Parses text produced by [`write_lp`].
pub fn read_lp(text: &str) -> Result<MilpProblem> {
    let err = |line: usize, msg: &str| Error::LpParse {
        line: line + 1,
        msg: msg.to_string(),
    };
    let mut sense = None;
    let mut obj_terms: Vec<(String, f64)> = Vec::new();
    let mut rows: Vec<(Vec<(String, f64)>, Relation, f64)> = Vec::new();
    let mut bounds: Vec<(usize, f64, f64)> = Vec::new();
    let mut binaries: Vec<usize> = Vec::new();
    let mut section = Section::Head;

    let parse_num = |s: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|_| err(line, &format!("bad number {s:?}")))
    };
    let parse_terms = |toks: &[&str], line: usize| -> Result<Vec<(String, f64)>> {
        if !toks.len().is_multiple_of(3) {
            return Err(err(line, "terms must be `sign value name` triples"));
        }
        toks.chunks(3)
            .map(|t| {
                let v = parse_num(t[1], line)?;
                let v = match t[0] {
                    "+" => v,
                    "-" => -v,
                    _ => return Err(err(line, "expected + or -")),
                };
                Ok((t[2].to_string(), v))
            })
            .collect()
    };

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        match line {
            "Minimize" => {
                sense = Some(Sense::Minimize);
                section = Section::Objective;
                continue;
            }
            "Maximize" => {
                sense = Some(Sense::Maximize);
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Constraints;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "Binary" => {
                section = Section::Binary;
                continue;
            }
            "End" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Objective => {
                if toks.first() != Some(&"obj:") {
                    return Err(err(ln, "expected `obj:`"));
                }
                obj_terms = parse_terms(&toks[1..], ln)?;
            }
            Section::Constraints => {
                if toks.len() < 3 || !toks[0].ends_with(':') {
                    return Err(err(ln, "expected a labelled constraint"));
                }
                let rel = match toks[toks.len() - 2] {
                    "<=" => Relation::Le,
                    ">=" => Relation::Ge,
                    "=" => Relation::Eq,
                    _ => return Err(err(ln, "expected a relation")),
                };
                let rhs = parse_num(toks[toks.len() - 1], ln)?;
                rows.push((parse_terms(&toks[1..toks.len() - 2], ln)?, rel, rhs));
            }
            Section::Bounds => {
                if toks.len() != 5 || toks[1] != "<=" || toks[3] != "<=" {
                    return Err(err(ln, "expected `lo <= xJ <= hi`"));
                }
                let j = toks[2]
                    .strip_prefix('x')
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| err(ln, "bad continuous variable name"))?;
                bounds.push((j, parse_num(toks[0], ln)?, parse_num(toks[4], ln)?));
            }
            Section::Binary => {
                for t in toks {
                    let i = t
                        .strip_prefix('a')
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| err(ln, "bad binary variable name"))?;
                    binaries.push(i);
                }
            }
            Section::Head | Section::Done => return Err(err(ln, "text outside a section")),
        }
    }
    let sense = sense.ok_or_else(|| err(0, "missing objective sense"))?;
    let nc = bounds.len();
    let nb = binaries.len();
    let mut continuous_bounds = vec![(0.0, 0.0); nc];
    for (j, lo, hi) in bounds {
        *continuous_bounds
            .get_mut(j)
            .ok_or_else(|| err(0, "continuous variables must be numbered densely"))? = (lo, hi);
    }
    let index = |name: &str| -> Result<usize> {
        let parsed = if let Some(s) = name.strip_prefix('x') {
            s.parse::<usize>().ok().filter(|&j| j < nc)
        } else if let Some(s) = name.strip_prefix('a') {
            s.parse::<usize>().ok().filter(|&i| i < nb).map(|i| nc + i)
        } else {
            None
        };
        parsed.ok_or_else(|| err(0, &format!("unknown variable {name:?}")))
    };
    let dense = |terms: &[(String, f64)]| -> Result<Vec<f64>> {
        let mut v = vec![0.0; nc + nb];
        for (name, c) in terms {
            v[index(name)?] += c;
        }
        Ok(v)
    };
    let objective = dense(&obj_terms)?;
    let constraints = rows
        .iter()
        .map(|(t, rel, rhs)| Ok(LinearConstraint::new(dense(t)?, *rel, *rhs)))
        .collect::<Result<Vec<_>>>()?;
    let problem = MilpProblem {
        objective,
        sense,
        continuous_bounds,
        n_binary: nb,
        constraints,
    };
    problem.validate()?;
    Ok(problem)
}
