//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's solver, Gram assembly or perturbation update.
#![allow(dead_code)]

use llpx_core::dataset::{Bag, Instance, Label, ScalingConfig, TaskDataset};
use llpx_core::kernel::Task;
use llpx_core::linalg::SymMatrix;
use llpx_core::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random bagged task with `n_bags` bags of random size in `1..=max_bag`.
pub fn random_task(r: &mut ChaCha8Rng, n_bags: usize, max_bag: usize, dims: usize) -> TaskDataset {
    let cfg = ScalingConfig::default();
    let mut instances = Vec::new();
    let mut bags = Vec::new();
    for _ in 0..n_bags {
        let size = r.random_range(1..=max_bag);
        let mut members = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..size {
            let label = if r.random_bool(0.5) { Label::Pos } else { Label::Neg };
            let features = (0..dims)
                .map(|_| r.random_range(-1.0..1.0) + 0.5 * label.as_f64())
                .collect();
            members.push(instances.len());
            labels.push(label);
            instances.push(Instance::new(features, Some(label)));
        }
        let p = llpx_core::bag_proportion(&labels).unwrap();
        bags.push(Bag::new(members, p, &cfg).unwrap());
    }
    TaskDataset::new(instances, bags, dims).unwrap()
}

pub fn dense(m: &SymMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    if m.dim() == 0 {
        return 0.0;
    }
    dense(m).symmetric_eigen().eigenvalues.min()
}

pub fn objective(p: &QpProblem<'_>, beta: &[f64]) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * p.q.get(i, j) * beta[j];
        }
    }
    let lin: f64 = (0..n)
        .map(|i| -p.targets[i] * beta[i] + p.eps[i] * beta[i].abs())
        .sum();
    0.5 * quad + lin
}

/// Projects `(a_star, a)` onto `0 <= . <= C`, `sum(a_star - a) = 0` over `idx`.
fn project_group(a_star: &mut [f64], a: &mut [f64], upper: &[f64], idx: &[usize]) {
    let h = |tau: f64, a_star: &[f64], a: &[f64]| -> f64 {
        idx.iter()
            .map(|&i| (a_star[i] - tau).clamp(0.0, upper[i]) - (a[i] + tau).clamp(0.0, upper[i]))
            .sum()
    };
    let span = idx
        .iter()
        .map(|&i| a_star[i].abs() + a[i].abs() + upper[i])
        .fold(1.0, f64::max);
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid, a_star, a) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    for &i in idx {
        a_star[i] = (a_star[i] - tau).clamp(0.0, upper[i]);
        a[i] = (a[i] + tau).clamp(0.0, upper[i]);
    }
}

/// Accelerated projected gradient on the split `(alpha*, alpha)` form.
pub fn projected_gradient(p: &QpProblem<'_>, steps: usize) -> Vec<f64> {
    let n = p.targets.len();
    let groups: Vec<Vec<usize>> = [Task::Source, Task::Target]
        .iter()
        .map(|t| (0..n).filter(|&i| p.groups[i] == *t).collect())
        .collect();
    // Lipschitz constant of the split gradient: 2 * lambda_max(Q)
    let lmax = if n == 0 {
        1.0
    } else {
        dense(p.q).symmetric_eigen().eigenvalues.max().max(1e-12)
    };
    let step = 1.0 / (2.0 * lmax);
    let (mut xs, mut xa) = (vec![0.0; n], vec![0.0; n]);
    let (mut ys, mut ya) = (xs.clone(), xa.clone());
    let mut t = 1.0f64;
    let mut prev_obj = f64::INFINITY;
    for _ in 0..steps {
        let beta: Vec<f64> = (0..n).map(|i| ys[i] - ya[i]).collect();
        let qb = p.q.mul_vec(&beta);
        let mut ns: Vec<f64> = (0..n).map(|i| ys[i] - step * (qb[i] - p.targets[i] + p.eps[i])).collect();
        let mut na: Vec<f64> = (0..n).map(|i| ya[i] - step * (-qb[i] + p.targets[i] + p.eps[i])).collect();
        for g in &groups {
            project_group(&mut ns, &mut na, &p.upper, g);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / t_next;
        let obj = objective(p, &(0..n).map(|i| ns[i] - na[i]).collect::<Vec<_>>());
        // adaptive restart keeps the iteration monotone
        let restart = obj > prev_obj;
        for i in 0..n {
            if restart {
                ys[i] = ns[i];
                ya[i] = na[i];
            } else {
                ys[i] = ns[i] + w * (ns[i] - xs[i]);
                ya[i] = na[i] + w * (na[i] - xa[i]);
            }
        }
        xs = ns;
        xa = na;
        t = if restart { 1.0 } else { t_next };
        prev_obj = obj;
    }
    (0..n).map(|i| xs[i] - xa[i]).collect()
}

/// Minimum over a grid of resolution `h` on the feasible set; at most three
/// bags in total.
pub fn grid_minimum(p: &QpProblem<'_>, h: f64) -> f64 {
    let n = p.targets.len();
    assert!(n <= 3);
    let groups: Vec<Vec<usize>> = [Task::Source, Task::Target]
        .iter()
        .map(|t| (0..n).filter(|&i| p.groups[i] == *t).collect())
        .collect();
    // candidate assignments for each group
    let cands: Vec<Vec<Vec<(usize, f64)>>> = groups
        .iter()
        .map(|g| grid_group(g, &p.upper, h))
        .collect();
    let mut best = f64::INFINITY;
    for a in &cands[0] {
        for b in &cands[1] {
            let mut beta = vec![0.0; n];
            for &(i, v) in a.iter().chain(b) {
                beta[i] = v;
            }
            best = best.min(objective(p, &beta));
        }
    }
    best
}

fn grid_group(g: &[usize], upper: &[f64], h: f64) -> Vec<Vec<(usize, f64)>> {
    let axis = |c: f64| -> Vec<f64> {
        let k = (c / h).floor() as i64;
        (-k..=k).map(|s| s as f64 * h).chain([-c, c]).collect()
    };
    match g.len() {
        0 => vec![vec![]],
        1 => vec![vec![(g[0], 0.0)]],
        2 => axis(upper[g[0]].min(upper[g[1]]))
            .into_iter()
            .map(|b| vec![(g[0], b), (g[1], -b)])
            .collect(),
        3 => {
            let mut out = Vec::new();
            for b0 in axis(upper[g[0]]) {
                for b1 in axis(upper[g[1]]) {
                    let b2 = -b0 - b1;
                    if b2.abs() <= upper[g[2]] {
                        out.push(vec![(g[0], b0), (g[1], b1), (g[2], b2)]);
                    }
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

/// Refines an approximate solution by solving the equality-constrained KKT
/// system on its free set; returns `(beta, per-task multipliers)`.
pub fn polish(p: &QpProblem<'_>, approx: &[f64]) -> (Vec<f64>, [f64; 2]) {
    let n = approx.len();
    let edge = 1e-7;
    let mut beta: Vec<f64> = approx
        .iter()
        .zip(&p.upper)
        .map(|(&b, &c)| {
            if b.abs() <= edge {
                0.0
            } else if b >= c - edge {
                c
            } else if b <= -c + edge {
                -c
            } else {
                b
            }
        })
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| beta[i] != 0.0 && beta[i].abs() < p.upper[i]).collect();
    let tasks = [Task::Source, Task::Target];
    let m = free.len() + 2;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            a[(r, c)] = p.q.get(i, j);
        }
        let t = tasks.iter().position(|t| *t == p.groups[i]).unwrap();
        a[(r, free.len() + t)] = 1.0;
        let fixed: f64 = (0..n)
            .filter(|j| !free.contains(j))
            .map(|j| p.q.get(i, j) * beta[j])
            .sum();
        rhs[r] = p.targets[i] - p.eps[i] * beta[i].signum() - fixed;
    }
    for (t, task) in tasks.iter().enumerate() {
        let row = free.len() + t;
        let members: Vec<usize> = free.iter().copied().filter(|&i| p.groups[i] == *task).collect();
        if members.is_empty() {
            // no free bag: pin the multiplier row to identity so the system stays regular
            a[(row, row)] = 1.0;
            rhs[row] = 0.0;
            continue;
        }
        for (c, &i) in free.iter().enumerate() {
            if p.groups[i] == *task {
                a[(row, c)] = 1.0;
            }
        }
        rhs[row] = -(0..n)
            .filter(|j| !free.contains(j) && p.groups[*j] == *task)
            .map(|j| beta[j])
            .sum::<f64>();
    }
    let sol = a.lu().solve(&rhs).expect("KKT system is regular");
    for (r, &i) in free.iter().enumerate() {
        beta[i] = sol[r];
    }
    let mut nu = [sol[free.len()], sol[free.len() + 1]];
    // a task without free bags only bounds its multiplier; take the midpoint
    let g = p.q.mul_vec(&beta);
    for (t, task) in tasks.iter().enumerate() {
        if free.iter().any(|&i| p.groups[i] == *task) {
            continue;
        }
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in (0..n).filter(|&i| p.groups[i] == *task) {
            let (a, b) = (p.targets[i] - p.eps[i] - g[i], p.targets[i] + p.eps[i] - g[i]);
            if beta[i] >= p.upper[i] {
                hi = hi.min(a);
            } else if beta[i] <= -p.upper[i] {
                lo = lo.max(b);
            } else {
                lo = lo.max(a);
                hi = hi.min(b);
            }
        }
        nu[t] = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            _ => 0.0,
        };
    }
    (beta, nu)
}

/// Squared-distance and dot-product helpers for kernels in test code.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn centroid_accuracy(xs: &[Instance]) -> f64 {
    let d = xs[0].features.len();
    let mut mp = vec![0.0; d];
    let mut mn = vec![0.0; d];
    let (mut np, mut nn) = (0.0, 0.0);
    for x in xs {
        let (m, c) = if x.label == Some(Label::Pos) { (&mut mp, &mut np) } else { (&mut mn, &mut nn) };
        for (mi, xi) in m.iter_mut().zip(&x.features) {
            *mi += xi;
        }
        *c += 1.0;
    }
    mp.iter_mut().for_each(|v| *v /= np);
    mn.iter_mut().for_each(|v| *v /= nn);
    let hits = xs
        .iter()
        .filter(|x| {
            let dp: f64 = x.features.iter().zip(&mp).map(|(a, b)| (a - b) * (a - b)).sum();
            let dn: f64 = x.features.iter().zip(&mn).map(|(a, b)| (a - b) * (a - b)).sum();
            (dp < dn) == (x.label == Some(Label::Pos))
        })
        .count();
    hits as f64 / xs.len() as f64
}

/// Owned pieces of a bag-level dual problem built without the library's
/// Gram assembly.
pub struct OwnedProblem {
    pub q: SymMatrix,
    pub targets: Vec<f64>,
    pub eps: Vec<f64>,
    pub upper: Vec<f64>,
    pub groups: Vec<Task>,
}

impl OwnedProblem {
    pub fn as_problem(&self) -> QpProblem<'_> {
        QpProblem {
            q: &self.q,
            targets: self.targets.clone(),
            eps: self.eps.clone(),
            upper: self.upper.clone(),
            groups: self.groups.clone(),
        }
    }
}

pub fn mean_of(task: &TaskDataset, bag: usize) -> Vec<f64> {
    let b = &task.bags()[bag];
    let mut m = vec![0.0; task.dimension()];
    for &i in &b.members {
        for (mj, xj) in m.iter_mut().zip(&task.instances()[i].features) {
            *mj += xj;
        }
    }
    m.iter_mut().for_each(|v| *v /= b.members.len() as f64);
    m
}

/// Linear-kernel bag-mean problem with block weights `(1+l)/l` on each
/// task's own block and 1 across tasks.
pub fn linear_problem(
    source: &TaskDataset,
    target: &TaskDataset,
    lambdas: [f64; 2],
    eps: f64,
    upper: [f64; 2],
) -> OwnedProblem {
    let mut means = Vec::new();
    let mut groups = Vec::new();
    let mut targets = Vec::new();
    for (task, data) in [(Task::Source, source), (Task::Target, target)] {
        for b in 0..data.n_bags() {
            means.push(mean_of(data, b));
            groups.push(task);
            targets.push(data.bags()[b].target);
        }
    }
    let n = means.len();
    let coef = |a: Task, b: Task| -> f64 {
        if a != b {
            1.0
        } else {
            let l = lambdas[a.index()];
            (1.0 + l) / l
        }
    };
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = coef(groups[i], groups[j]) * dot(&means[i], &means[j]);
        }
    }
    OwnedProblem {
        q: SymMatrix::from_row_major(n, data),
        targets,
        eps: vec![eps; n],
        upper: groups.iter().map(|t| upper[t.index()]).collect(),
        groups,
    }
}

/// Largest violation of the KKT conditions of a candidate `beta` with the
/// given per-task multipliers (stationarity `Q b - y + eps s + nu = 0`).
pub fn kkt_violation(p: &QpProblem<'_>, beta: &[f64], nu: [f64; 2]) -> f64 {
    let g = p.q.mul_vec(beta);
    let mut worst: f64 = 0.0;
    for i in 0..beta.len() {
        let base = g[i] - p.targets[i] + nu[p.groups[i].index()];
        let (lo, hi) = (base - p.eps[i], base + p.eps[i]);
        let v = if beta[i] >= p.upper[i] {
            hi.max(0.0)
        } else if beta[i] <= -p.upper[i] {
            (-lo).max(0.0)
        } else if beta[i] > 0.0 {
            hi.abs()
        } else if beta[i] < 0.0 {
            lo.abs()
        } else {
            lo.max(0.0).max((-hi).max(0.0))
        };
        worst = worst.max(v);
    }
    worst
}
