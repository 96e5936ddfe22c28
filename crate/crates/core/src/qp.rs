//! Dual solver for the bag-level transfer problem.
//!
//! The dual is written in the signed coefficients `beta = alpha* - alpha`:
//!
//! ```text
//!     minimize   1/2 beta' Q beta - y' beta + sum_i eps_i |beta_i|
//!     subject to -C_i <= beta_i <= C_i
//!                sum_{i in task t} beta_i = 0      for each task t
//! ```
//!
//! It is solved by sequential minimal optimisation: each step moves a
//! maximally violating pair of same-task coordinates in opposite directions,
//! which keeps both equality constraints satisfied, and minimises the convex
//! piecewise quadratic along that direction exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Task;
use crate::linalg::{axpy, dot, SymMatrix};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: u64 = 10_000_000;

/// Curvature below `-NEG_CURVATURE_TOL * scale` along a pair direction is
/// treated as a non-PSD matrix.
const NEG_CURVATURE_TOL: f64 = 1e-9;

/// Pair updates that leave the free set unchanged before a face step is tried.
const FACE_STALL: u64 = 64;
const FACE_CG_ITERS: usize = 64;

#[derive(Clone, Debug)]
pub struct QpProblem<'a> {
    pub q: &'a SymMatrix,
    pub targets: Vec<f64>,
    pub eps: Vec<f64>,
    pub upper: Vec<f64>,
    pub groups: Vec<Task>,
}

impl QpProblem<'_> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.q.dim();
        if [self.targets.len(), self.eps.len(), self.upper.len(), self.groups.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::domain("QP vectors must all match the matrix dimension"));
        }
        if self.eps.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::domain("tube widths must be non-negative"));
        }
        if self.upper.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::domain("box bounds must be finite and non-negative"));
        }
        if self.targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::domain("targets must be finite"));
        }
        Ok(())
    }

    fn members(&self, task: Task) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == task).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: u64,
    pub converged: bool,
}

impl DualSolution {
    /// Recovers `(alpha, alpha*)` as `(max(0, -beta), max(0, beta))`.
    pub fn alpha_pairs(&self) -> Vec<(f64, f64)> {
        self.beta.iter().map(|&b| ((-b).max(0.0), b.max(0.0))).collect()
    }
}

pub fn dual_objective(p: &QpProblem<'_>, beta: &[f64]) -> f64 {
    let quad = 0.5 * p.q.quad_form(beta);
    let lin: f64 = beta
        .iter()
        .zip(&p.targets)
        .zip(&p.eps)
        .map(|((b, y), e)| -y * b + e * b.abs())
        .sum();
    quad + lin
}

/// Right derivative of the objective in coordinate `i` (moving `beta_i` up).
#[inline]
fn slope_up(g: f64, beta: f64, eps: f64) -> f64 {
    if beta >= 0.0 {
        g + eps
    } else {
        g - eps
    }
}

/// Left derivative in coordinate `i` (the rate that moving `beta_i` down saves).
#[inline]
fn slope_down(g: f64, beta: f64, eps: f64) -> f64 {
    if beta > 0.0 {
        g + eps
    } else {
        g - eps
    }
}

/// Incremental SMO state. [`solve_beta_qp`] drives it to convergence; it is
/// public so that callers can observe individual updates.
pub struct SmoSolver<'p, 'a> {
    p: &'p QpProblem<'a>,
    beta: Vec<f64>,
    /// `Q beta - y`
    grad: Vec<f64>,
    groups: [Vec<usize>; 2],
    next_task: usize,
    iterations: u64,
    /// Pair updates that moved a bag onto or off a bound or the kink.
    face_changes: u64,
}

/// A maximally violating pair within one task.
#[derive(Clone, Copy, Debug)]
struct Pair {
    up: usize,
    down: usize,
    violation: f64,
}

impl<'p, 'a> SmoSolver<'p, 'a> {
    /// Starts from zero.
    pub fn new(p: &'p QpProblem<'a>) -> Result<Self> {
        Self::warm(p, vec![0.0; p.len()])
    }

    /// Starts from a feasible point (box and per-task sums).
    pub fn warm(p: &'p QpProblem<'a>, beta: Vec<f64>) -> Result<Self> {
        p.validate()?;
        if beta.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: beta.len(),
            });
        }
        let mut beta = beta;
        for (b, c) in beta.iter_mut().zip(&p.upper) {
            *b = b.clamp(-c, *c);
        }
        let groups = [p.members(Task::Source), p.members(Task::Target)];
        for g in &groups {
            let s: f64 = g.iter().map(|&i| beta[i]).sum();
            let scale = g.iter().map(|&i| p.upper[i]).fold(1.0, f64::max);
            if s.abs() > 1e-8 * scale {
                return Err(Error::domain("warm start violates an equality constraint"));
            }
        }
        let mut grad = p.q.mul_vec(&beta);
        for (g, y) in grad.iter_mut().zip(&p.targets) {
            *g -= y;
        }
        Ok(Self {
            p,
            beta,
            grad,
            groups,
            next_task: 0,
            iterations: 0,
            face_changes: 0,
        })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn objective(&self) -> f64 {
        // 1/2 b'Qb - y'b = 1/2 b'(g - y)  with g = Qb - y
        let p = self.p;
        self.beta
            .iter()
            .enumerate()
            .map(|(i, b)| 0.5 * b * (self.grad[i] - p.targets[i]) + p.eps[i] * b.abs())
            .sum()
    }

    fn best_pair(&self, task: usize) -> Option<Pair> {
        let p = self.p;
        let mut up: Option<(usize, f64)> = None;
        let mut down: Option<(usize, f64)> = None;
        for &i in &self.groups[task] {
            let (b, c) = (self.beta[i], p.upper[i]);
            if b < c {
                let s = slope_up(self.grad[i], b, p.eps[i]);
                if up.is_none_or(|(_, best)| s < best) {
                    up = Some((i, s));
                }
            }
            if b > -c {
                let s = slope_down(self.grad[i], b, p.eps[i]);
                if down.is_none_or(|(_, best)| s > best) {
                    down = Some((i, s));
                }
            }
        }
        match (up, down) {
            (Some((u, su)), Some((d, sd))) => Some(Pair {
                up: u,
                down: d,
                violation: sd - su,
            }),
            _ => None,
        }
    }

    /// Largest same-task KKT violation.
    pub fn max_violation(&self) -> f64 {
        (0..2)
            .filter_map(|t| self.best_pair(t))
            .map(|pr| pr.violation.max(0.0))
            .fold(0.0, f64::max)
    }

    /// Performs one pair update unless every task is within `tol`.
    /// Returns the step length, or `None` when converged.
    pub fn step(&mut self, tol: f64) -> Result<Option<f64>> {
        let first = self.next_task;
        let mut chosen = None;
        for k in 0..2 {
            let t = (first + k) % 2;
            if let Some(pr) = self.best_pair(t) {
                if pr.violation > tol {
                    chosen = Some((t, pr));
                    break;
                }
            }
        }
        let Some((task, pair)) = chosen else {
            return Ok(None);
        };
        self.next_task = (task + 1) % 2;
        let t = self.line_search(pair)?;
        self.apply(pair, t);
        self.iterations += 1;
        Ok(Some(t))
    }

    /// Exact minimiser of the objective along `beta_up += t, beta_down -= t`.
    fn line_search(&self, pair: Pair) -> Result<f64> {
        let p = self.p;
        let (i, j) = (pair.up, pair.down);
        let (bi, bj) = (self.beta[i], self.beta[j]);
        let mut curv = p.q.get(i, i) + p.q.get(j, j) - 2.0 * p.q.get(i, j);
        let scale = p.q.get(i, i).abs() + p.q.get(j, j).abs() + 1.0;
        if curv < -NEG_CURVATURE_TOL * scale {
            return Err(Error::Numerical(format!(
                "matrix is not positive semidefinite: curvature {curv:e} along pair ({i}, {j})"
            )));
        }
        curv = curv.max(0.0);
        let t_max = (p.upper[i] - bi).min(bj + p.upper[j]);
        if t_max <= 0.0 {
            return Ok(0.0);
        }
        let mut knots = vec![t_max];
        for k in [-bi, bj] {
            if k > 0.0 && k < t_max {
                knots.push(k);
            }
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let dg = self.grad[i] - self.grad[j];
        let mut lo = 0.0;
        for hi in knots {
            let mid = 0.5 * (lo + hi);
            let sign = |v: f64| if v > 0.0 { 1.0 } else { -1.0 };
            let slope = dg + p.eps[i] * sign(bi + mid) - p.eps[j] * sign(bj - mid);
            // derivative of the segment's quadratic at its right end
            if curv * hi + slope > 0.0 {
                return Ok(if curv > 0.0 { (-slope / curv).max(lo) } else { lo });
            }
            lo = hi;
        }
        Ok(t_max)
    }

    fn apply(&mut self, pair: Pair, t: f64) {
        if t == 0.0 {
            return;
        }
        let p = self.p;
        let (i, j) = (pair.up, pair.down);
        let (old_i, old_j) = (self.beta[i], self.beta[j]);
        let mut new_i = old_i + t;
        let mut new_j = old_j - t;
        // snap exactly onto kinks and bounds the step was aimed at
        if t == -old_i {
            new_i = 0.0;
        }
        if t == old_j {
            new_j = 0.0;
        }
        if t == p.upper[i] - old_i {
            new_i = p.upper[i];
        }
        if t == old_j + p.upper[j] {
            new_j = -p.upper[j];
        }
        new_i = new_i.clamp(-p.upper[i], p.upper[i]);
        new_j = new_j.clamp(-p.upper[j], p.upper[j]);
        let di = new_i - old_i;
        let dj = new_j - old_j;
        let on_face = |b: f64, c: f64| b != 0.0 && b.abs() < c;
        if on_face(old_i, p.upper[i]) != on_face(new_i, p.upper[i])
            || on_face(old_j, p.upper[j]) != on_face(new_j, p.upper[j])
        {
            self.face_changes += 1;
        }
        self.beta[i] = new_i;
        self.beta[j] = new_j;
        let (ri, rj) = (p.q.row(i), p.q.row(j));
        for (k, g) in self.grad.iter_mut().enumerate() {
            *g += di * ri[k] + dj * rj[k];
        }
    }

    /// Subspace step on the current face: the bags strictly inside their box
    /// and off the kink keep their signs, so the objective restricted to them
    /// is a plain quadratic. A few projected conjugate-gradient iterations give
    /// a direction; the step is the exact minimiser along it, cut at the first
    /// bound or kink. Returns whether `beta` moved.
    ///
    /// Pair updates alone converge very slowly when the free bags outnumber
    /// the rank of `Q`, which is common with many small bags.
    pub fn face_step(&mut self) -> bool {
        let p = self.p;
        let free: Vec<usize> = (0..p.len())
            .filter(|&i| self.beta[i] != 0.0 && self.beta[i].abs() < p.upper[i])
            .collect();
        if free.len() < 3 {
            return false;
        }
        let sign: Vec<f64> = free.iter().map(|&i| self.beta[i].signum()).collect();
        let task_of: Vec<usize> = free.iter().map(|&i| p.groups[i].index()).collect();
        let project = |v: &mut [f64]| {
            let mut sum = [0.0; 2];
            let mut count = [0.0; 2];
            for (k, x) in v.iter().enumerate() {
                sum[task_of[k]] += x;
                count[task_of[k]] += 1.0;
            }
            for (k, x) in v.iter_mut().enumerate() {
                *x -= sum[task_of[k]] / count[task_of[k]];
            }
        };
        let apply_q = |v: &[f64]| -> Vec<f64> {
            free.iter()
                .map(|&i| {
                    let row = p.q.row(i);
                    free.iter().zip(v).map(|(&j, x)| row[j] * x).sum()
                })
                .collect()
        };
        // face gradient and the CG system  P Q P d = -P g
        let g: Vec<f64> = free
            .iter()
            .zip(&sign)
            .map(|(&i, s)| self.grad[i] + p.eps[i] * s)
            .collect();
        let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
        project(&mut r);
        let r0 = dot(&r, &r);
        if r0 == 0.0 {
            return false;
        }
        let mut d = vec![0.0; free.len()];
        let mut dir = r.clone();
        let mut rr = r0;
        for _ in 0..free.len().min(FACE_CG_ITERS) {
            let mut qd = apply_q(&dir);
            project(&mut qd);
            let curv = dot(&dir, &qd);
            if !(curv > 1e-14 * dot(&dir, &dir)) {
                // flat direction: follow it to the boundary
                if d.iter().all(|v| *v == 0.0) {
                    d.clone_from(&dir);
                }
                break;
            }
            let a = rr / curv;
            axpy(a, &dir, &mut d);
            axpy(-a, &qd, &mut r);
            let next = dot(&r, &r);
            if next <= 1e-28 * r0 {
                break;
            }
            for (x, ri) in dir.iter_mut().zip(&r) {
                *x = ri + (next / rr) * *x;
            }
            rr = next;
        }
        project(&mut d);
        let slope = dot(&g, &d);
        if !(slope < 0.0) {
            return false;
        }
        // largest step keeping every bag on its face
        let mut t_max = f64::INFINITY;
        let mut hit = None;
        for (k, &i) in free.iter().enumerate() {
            let (b, c) = (self.beta[i], p.upper[i]);
            let room = match (d[k] > 0.0, b > 0.0) {
                (true, true) => (c - b) / d[k],
                (true, false) => -b / d[k],
                (false, true) if d[k] < 0.0 => b / -d[k],
                (false, false) if d[k] < 0.0 => (b + c) / -d[k],
                _ => continue,
            };
            if room < t_max {
                t_max = room;
                hit = Some(k);
            }
        }
        let qd = apply_q(&d);
        let curv = dot(&d, &qd);
        let t = if curv > 0.0 { (-slope / curv).min(t_max) } else { t_max };
        if !(t > 0.0 && t.is_finite()) {
            return false;
        }
        let mut delta = vec![0.0; free.len()];
        for (k, &i) in free.iter().enumerate() {
            let old = self.beta[i];
            let mut new = (old + t * d[k]).clamp(-p.upper[i], p.upper[i]);
            if t == t_max && hit == Some(k) {
                // land exactly on the bound or kink that limited the step
                new = if (new - old) * old > 0.0 { old.signum() * p.upper[i] } else { 0.0 };
            } else if new != 0.0 && new.signum() != old.signum() {
                new = 0.0;
            }
            delta[k] = new - old;
            self.beta[i] = new;
        }
        // restore the equality sums exactly where snapping perturbed them
        for task in 0..2 {
            let drift: f64 = free
                .iter()
                .enumerate()
                .filter(|(k, _)| task_of[*k] == task)
                .map(|(k, _)| delta[k])
                .sum();
            if drift == 0.0 {
                continue;
            }
            let fix = free
                .iter()
                .enumerate()
                .filter(|(k, &i)| {
                    task_of[*k] == task && self.beta[i] != 0.0 && self.beta[i].abs() < p.upper[i]
                })
                .max_by(|a, b| {
                    let room = |i: usize| p.upper[i] - self.beta[i].abs();
                    room(*a.1).total_cmp(&room(*b.1))
                });
            match fix {
                Some((k, &i)) => {
                    let new = self.beta[i] - drift;
                    if new.abs() >= p.upper[i] || new * self.beta[i] <= 0.0 {
                        // give up on this face step entirely
                        for (k, &i) in free.iter().enumerate() {
                            self.beta[i] -= delta[k];
                        }
                        return false;
                    }
                    delta[k] -= drift;
                    self.beta[i] = new;
                }
                None => {
                    for (k, &i) in free.iter().enumerate() {
                        self.beta[i] -= delta[k];
                    }
                    return false;
                }
            }
        }
        for (k, &i) in free.iter().enumerate() {
            if delta[k] != 0.0 {
                let row = p.q.row(i);
                for (gj, qj) in self.grad.iter_mut().zip(row) {
                    *gj += delta[k] * qj;
                }
            }
        }
        true
    }

    pub fn finish(self, max_iter_hit: bool) -> DualSolution {
        let objective = dual_objective(self.p, &self.beta);
        let kkt = kkt_residual(self.p, &self.beta);
        DualSolution {
            beta: self.beta,
            objective,
            kkt_residual: kkt,
            iterations: self.iterations,
            converged: !max_iter_hit,
        }
    }
}

/// Solves the dual from zero.
pub fn solve_beta_qp(p: &QpProblem<'_>, tol: f64, max_iter: u64) -> Result<DualSolution> {
    solve_beta_qp_from(p, vec![0.0; p.len()], tol, max_iter)
}

/// Solves the dual from a feasible warm start.
pub fn solve_beta_qp_from(
    p: &QpProblem<'_>,
    init: Vec<f64>,
    tol: f64,
    max_iter: u64,
) -> Result<DualSolution> {
    if !(tol > 0.0) {
        return Err(Error::config("solver tolerance must be positive"));
    }
    let mut smo = SmoSolver::warm(p, init)?;
    // once pair updates stop changing the free set they only zigzag inside it
    let (mut seen, mut quiet) = (0, 0);
    while smo.iterations() < max_iter {
        if smo.step(tol)?.is_none() {
            return Ok(smo.finish(false));
        }
        if smo.face_changes != seen {
            seen = smo.face_changes;
            quiet = 0;
        } else {
            quiet += 1;
        }
        if quiet >= FACE_STALL {
            smo.face_step();
            quiet = 0;
        }
    }
    let hit = smo.max_violation() > tol;
    if hit {
        log::warn!("dual solver stopped at the iteration cap ({max_iter})");
    }
    Ok(smo.finish(hit))
}

/// Interval of task multipliers `b` for which bag `i` satisfies stationarity.
fn feasible_multiplier(p: &QpProblem<'_>, g: f64, beta: f64, i: usize) -> (f64, f64) {
    let c = p.upper[i];
    let e = p.eps[i];
    let slack = 1e-12 * c.max(1.0);
    if c <= 0.0 {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    if beta >= c - slack {
        (f64::NEG_INFINITY, -g - e)
    } else if beta <= -c + slack {
        (-g + e, f64::INFINITY)
    } else if beta > 0.0 {
        (-g - e, -g - e)
    } else if beta < 0.0 {
        (-g + e, -g + e)
    } else {
        (-g - e, -g + e)
    }
}

fn interval_distance(b: f64, (lo, hi): (f64, f64)) -> f64 {
    (lo - b).max(b - hi).max(0.0)
}

/// Minimises `sum_i dist(b, [lo_i, hi_i])^2` over `b`.
fn least_squares_multiplier(intervals: &[(f64, f64)]) -> f64 {
    let mut knots: Vec<f64> = intervals
        .iter()
        .flat_map(|&(lo, hi)| [lo, hi])
        .filter(|v| v.is_finite())
        .collect();
    if knots.is_empty() {
        return 0.0;
    }
    knots.sort_by(f64::total_cmp);
    // derivative / 2 of the objective; piecewise linear and non-decreasing
    let deriv = |b: f64| -> f64 {
        intervals
            .iter()
            .map(|&(lo, hi)| {
                if b < lo {
                    b - lo
                } else if b > hi {
                    b - hi
                } else {
                    0.0
                }
            })
            .sum()
    };
    let mut prev = knots[0];
    let d_prev = deriv(prev);
    if d_prev >= 0.0 {
        return prev;
    }
    let mut d_prev = d_prev;
    for &k in &knots[1..] {
        let d = deriv(k);
        if d >= 0.0 {
            if d == d_prev {
                return k;
            }
            return prev + (k - prev) * (-d_prev) / (d - d_prev);
        }
        prev = k;
        d_prev = d;
    }
    prev
}

/// Per-task multipliers fitted by least squares to the stationarity intervals.
pub fn fitted_multipliers(p: &QpProblem<'_>, beta: &[f64]) -> [f64; 2] {
    let grad = gradient(p, beta);
    let mut out = [0.0; 2];
    for task in [Task::Source, Task::Target] {
        let intervals: Vec<_> = p
            .members(task)
            .into_iter()
            .map(|i| feasible_multiplier(p, grad[i], beta[i], i))
            .collect();
        out[task.index()] = least_squares_multiplier(&intervals);
    }
    out
}

fn gradient(p: &QpProblem<'_>, beta: &[f64]) -> Vec<f64> {
    let mut g = p.q.mul_vec(beta);
    for (gi, y) in g.iter_mut().zip(&p.targets) {
        *gi -= y;
    }
    g
}

/// Largest distance of a bag's stationarity interval from its task's fitted
/// multiplier. Zero at an exact optimum.
pub fn kkt_residual(p: &QpProblem<'_>, beta: &[f64]) -> f64 {
    let grad = gradient(p, beta);
    let mult = fitted_multipliers(p, beta);
    (0..p.len())
        .map(|i| {
            let iv = feasible_multiplier(p, grad[i], beta[i], i);
            interval_distance(mult[p.groups[i].index()], iv)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem<'a>(q: &'a SymMatrix, y: &[f64], eps: f64, c: f64, groups: &[Task]) -> QpProblem<'a> {
        QpProblem {
            q,
            targets: y.to_vec(),
            eps: vec![eps; y.len()],
            upper: vec![c; y.len()],
            groups: groups.to_vec(),
        }
    }

    #[test]
    fn zero_is_optimal_inside_tube() {
        let q = SymMatrix::from_row_major(2, vec![2.0, 0.5, 0.5, 1.0]);
        let p = problem(&q, &[0.0, 0.0], 0.1, 1.0, &[Task::Source, Task::Source]);
        let s = solve_beta_qp(&p, 1e-10, 1000).unwrap();
        assert_eq!(s.beta, vec![0.0, 0.0]);
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn two_variable_substitution() {
        // beta_2 = -beta_1: objective 1/2 (2b^2 + 2b^2) - 2b, minimised at b = 1/2
        let q = SymMatrix::from_row_major(2, vec![2.0, 0.0, 0.0, 2.0]);
        let p = problem(&q, &[1.0, -1.0], 0.0, 10.0, &[Task::Source, Task::Source]);
        let s = solve_beta_qp(&p, 1e-12, 1000).unwrap();
        assert!((s.beta[0] - 0.5).abs() < 1e-12);
        assert!((s.beta[1] + 0.5).abs() < 1e-12);
        assert!((s.objective + 0.5).abs() < 1e-12);
        assert!(s.kkt_residual <= 1e-8);
        assert!((dual_objective(&p, &s.beta) + 0.5).abs() < 1e-12);
        assert!(s.converged);
    }

    #[test]
    fn residual_detects_suboptimal_points() {
        let q = SymMatrix::from_row_major(2, vec![2.0, 0.0, 0.0, 2.0]);
        let p = problem(&q, &[1.0, -1.0], 0.0, 10.0, &[Task::Source, Task::Source]);
        assert!(kkt_residual(&p, &[0.0, 0.0]) > 0.0);
        let at_opt = kkt_residual(&p, &[0.5, -0.5]);
        let off = kkt_residual(&p, &[0.6, -0.5]);
        assert!(at_opt <= 1e-12);
        assert!(off > at_opt);
    }

    #[test]
    fn dual_objective_at_zero() {
        let q = SymMatrix::from_row_major(1, vec![1.0]);
        let p = problem(&q, &[3.0], 0.2, 1.0, &[Task::Target]);
        assert_eq!(dual_objective(&p, &[0.0]), 0.0);
    }

    #[test]
    fn box_bound_is_hit_exactly() {
        let q = SymMatrix::from_row_major(2, vec![1e-3, 0.0, 0.0, 1e-3]);
        let p = problem(&q, &[5.0, -5.0], 0.0, 0.5, &[Task::Target, Task::Target]);
        let s = solve_beta_qp(&p, 1e-12, 1000).unwrap();
        assert_eq!(s.beta, vec![0.5, -0.5]);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn tasks_keep_separate_sums() {
        let q = SymMatrix::from_row_major(
            4,
            vec![
                2.0, 0.3, 0.1, 0.0, //
                0.3, 2.0, 0.0, 0.2, //
                0.1, 0.0, 3.0, 0.4, //
                0.0, 0.2, 0.4, 3.0,
            ],
        );
        let groups = [Task::Source, Task::Source, Task::Target, Task::Target];
        let p = problem(&q, &[1.0, -2.0, 0.5, 1.5], 0.1, 2.0, &groups);
        let s = solve_beta_qp(&p, 1e-12, 10_000).unwrap();
        assert!((s.beta[0] + s.beta[1]).abs() < 1e-12);
        assert!((s.beta[2] + s.beta[3]).abs() < 1e-12);
        assert!(s.kkt_residual < 1e-10);
        let pairs = s.alpha_pairs();
        assert!(pairs.iter().all(|(a, b)| a * b == 0.0));
    }

    #[test]
    fn negative_curvature_is_reported() {
        let q = SymMatrix::from_row_major(2, vec![-1.0, 0.0, 0.0, -1.0]);
        let p = problem(&q, &[1.0, -1.0], 0.0, 1.0, &[Task::Source, Task::Source]);
        assert!(matches!(solve_beta_qp(&p, 1e-8, 100), Err(Error::Numerical(_))));
    }

    #[test]
    fn iteration_cap_is_flagged_not_raised() {
        let q = SymMatrix::from_row_major(
            3,
            vec![2.0, 1.0, 0.5, 1.0, 2.0, 1.0, 0.5, 1.0, 2.0],
        );
        let p = problem(&q, &[1.0, -0.4, -2.0], 0.0, 10.0, &[Task::Source; 3]);
        let s = solve_beta_qp(&p, 1e-14, 1).unwrap();
        assert_eq!(s.iterations, 1);
        assert!(!s.converged);
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = SymMatrix::from_row_major(1, vec![1.0]);
        let mut p = problem(&q, &[1.0], 0.0, 1.0, &[Task::Source]);
        assert!(solve_beta_qp(&p, 0.0, 10).is_err());
        p.eps = vec![-1.0];
        assert!(solve_beta_qp(&p, 1e-6, 10).is_err());
        let p = problem(&q, &[1.0], 0.0, 1.0, &[Task::Source]);
        assert!(solve_beta_qp_from(&p, vec![0.5], 1e-6, 10).is_err());
    }

    #[test]
    fn least_squares_multiplier_cases() {
        assert_eq!(least_squares_multiplier(&[(1.0, 1.0), (3.0, 3.0)]), 2.0);
        assert_eq!(least_squares_multiplier(&[(0.0, 5.0), (1.0, 2.0)]), 1.0);
        let b = least_squares_multiplier(&[(f64::NEG_INFINITY, -1.0), (1.0, f64::INFINITY)]);
        assert_eq!(b, 0.0);
        assert_eq!(least_squares_multiplier(&[]), 0.0);
    }
}
