//! Alternating optimisation of the transfer problem.
//!
//! Each round fixes the input perturbations, solves the bag-level dual for
//! the two hyperplanes, then fixes the hyperplanes and moves every member of
//! a bag that lies outside its tube by the full bound `delta` along the
//! direction that shrinks the bag's residual. Rounds stop when the dual
//! objective stabilises in relative terms, when the perturbations stop
//! changing, or at `max_rounds`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, ScalingConfig, TaskDataset};
use crate::error::{Error, Result};
use crate::kernel::{assemble_bag_gram, BagRef, BlockCoefficients, GramStrategy, KernelSpec, PerturbedView, Task};
use crate::linalg::{axpy, dot, norm};
use crate::qp::{self, solve_beta_qp_from, DualSolution, QpProblem};

/// Bound on the input perturbation of each instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Delta {
    Scalar(f64),
    PerInstance { source: Vec<f64>, target: Vec<f64> },
}

impl Default for Delta {
    fn default() -> Self {
        Delta::Scalar(0.01)
    }
}

impl Delta {
    fn bounds(&self, source: &TaskDataset, target: &TaskDataset) -> Result<[Vec<f64>; 2]> {
        match self {
            Delta::Scalar(d) => Ok([
                vec![*d; source.instances().len()],
                vec![*d; target.instances().len()],
            ]),
            Delta::PerInstance { source: s, target: t } => {
                if s.len() != source.instances().len() || t.len() != target.instances().len() {
                    return Err(Error::config("per-instance delta length does not match the data"));
                }
                Ok([s.clone(), t.clone()])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |d: &f64| *d >= 0.0 && d.is_finite();
        let valid = match self {
            Delta::Scalar(d) => ok(d),
            Delta::PerInstance { source, target } => source.iter().chain(target).all(ok),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::config("delta must be finite and non-negative"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub c_source: f64,
    pub c_target: f64,
    pub lambda_source: f64,
    pub lambda_target: f64,
    /// Shared tube half-width; bags may override it.
    pub eps: f64,
    pub delta: Delta,
    pub stop_epsilon: f64,
    pub max_rounds: usize,
    pub qp_tol: f64,
    pub qp_max_iter: u64,
    pub scaling: ScalingConfig,
    pub kernel: KernelSpec,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            c_source: 1.0,
            c_target: 1.0,
            lambda_source: 1.0,
            lambda_target: 0.5,
            eps: 0.1,
            delta: Delta::default(),
            stop_epsilon: 1e-4,
            max_rounds: 50,
            qp_tol: qp::DEFAULT_TOL,
            qp_max_iter: qp::DEFAULT_MAX_ITER,
            scaling: ScalingConfig::default(),
            kernel: KernelSpec::Linear,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_source", self.c_source),
            ("c_target", self.c_target),
            ("lambda_source", self.lambda_source),
            ("lambda_target", self.lambda_target),
            ("stop_epsilon", self.stop_epsilon),
            ("qp_tol", self.qp_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::config(format!("eps must be non-negative, got {}", self.eps)));
        }
        if self.max_rounds == 0 {
            return Err(Error::config("max_rounds must be at least 1"));
        }
        if self.qp_max_iter == 0 {
            return Err(Error::config("qp_max_iter must be at least 1"));
        }
        self.delta.validate()?;
        self.scaling.validate()?;
        self.kernel.validate()?;
        if self.lambda_source <= self.lambda_target {
            log::debug!("lambda_source <= lambda_target: the source task gets the looser coupling");
        }
        Ok(())
    }

    fn upper(&self, task: Task) -> f64 {
        match task {
            Task::Source => self.c_source,
            Task::Target => self.c_target,
        }
    }
}

/// Per-instance perturbation vectors of both tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub source: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

impl PerturbationSet {
    pub fn zeros(source: &TaskDataset, target: &TaskDataset) -> Self {
        Self {
            source: vec![vec![0.0; source.dimension()]; source.instances().len()],
            target: vec![vec![0.0; target.dimension()]; target.instances().len()],
        }
    }

    pub fn task(&self, t: Task) -> &[Vec<f64>] {
        match t {
            Task::Source => &self.source,
            Task::Target => &self.target,
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.source
            .iter()
            .chain(&self.target)
            .filter(|d| d.iter().any(|v| *v != 0.0))
            .count()
    }

    pub fn view<'a>(&'a self, source: &'a TaskDataset, target: &'a TaskDataset) -> PerturbedView<'a> {
        PerturbedView {
            source,
            target,
            source_delta: &self.source,
            target_delta: &self.target,
        }
    }
}

/// Explicit primal weights, available for the linear kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearWeights {
    pub w0: Vec<f64>,
    pub v_source: Vec<f64>,
    pub v_target: Vec<f64>,
}

impl LinearWeights {
    pub fn task_weights(&self, task: Task) -> Vec<f64> {
        let v = match task {
            Task::Source => &self.v_source,
            Task::Target => &self.v_target,
        };
        self.w0.iter().zip(v).map(|(a, b)| a + b).collect()
    }
}

/// `w0 = sum_all beta m`, `v_t = (1/lambda_t) sum_{bags of t} beta m` with `m`
/// the perturbed bag means.
pub fn expand_weights_linear(
    beta: &[f64],
    view: &PerturbedView<'_>,
    kernel: &KernelSpec,
    lambda_source: f64,
    lambda_target: f64,
) -> Result<LinearWeights> {
    if !kernel.is_linear() {
        return Err(Error::Unsupported(
            "explicit weights exist only for the linear kernel".into(),
        ));
    }
    let index = view.bag_index();
    if beta.len() != index.len() {
        return Err(Error::DimensionMismatch {
            expected: index.len(),
            got: beta.len(),
        });
    }
    let d = view.source.dimension();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    for (r, (&b, mean)) in index.iter().zip(beta.iter().zip(view.bag_means())) {
        if b != 0.0 {
            axpy(b, &mean, &mut sums[r.task.index()]);
        }
    }
    let w0: Vec<f64> = sums[0].iter().zip(&sums[1]).map(|(a, b)| a + b).collect();
    let v_source = sums[0].iter().map(|v| v / lambda_source).collect();
    let v_target = sums[1].iter().map(|v| v / lambda_target).collect();
    Ok(LinearWeights { w0, v_source, v_target })
}

/// The two fixed hyperplanes of one round, expressed over the perturbed bags
/// they were trained on.
pub struct Planes<'a> {
    view: PerturbedView<'a>,
    index: Vec<BagRef>,
    beta: &'a [f64],
    biases: [f64; 2],
    kernel: KernelSpec,
    coefficients: BlockCoefficients,
    weights: Option<LinearWeights>,
}

impl<'a> Planes<'a> {
    pub fn new(
        view: PerturbedView<'a>,
        beta: &'a [f64],
        biases: [f64; 2],
        hp: &HyperParams,
    ) -> Result<Self> {
        let weights = if hp.kernel.is_linear() {
            Some(expand_weights_linear(beta, &view, &hp.kernel, hp.lambda_source, hp.lambda_target)?)
        } else {
            None
        };
        let index = view.bag_index();
        Ok(Self {
            view,
            index,
            beta,
            biases,
            kernel: hp.kernel,
            coefficients: BlockCoefficients::new(hp.lambda_source, hp.lambda_target),
            weights,
        })
    }

    pub fn weights(&self) -> Option<&LinearWeights> {
        self.weights.as_ref()
    }

    pub fn bias(&self, task: Task) -> f64 {
        self.biases[task.index()]
    }

    fn for_each_point(&self, task: Task, mut f: impl FnMut(f64, &[f64])) {
        let mut point = vec![0.0; self.view.source.dimension()];
        for (r, &b) in self.index.iter().zip(self.beta) {
            if b == 0.0 {
                continue;
            }
            let (data, delta) = self.view.task(r.task);
            let bag = &data.bags()[r.bag];
            let w = self.coefficients.between(task, r.task) * b / bag.len() as f64;
            for &m in &bag.members {
                for ((p, x), d) in point.iter_mut().zip(&data.instances()[m].features).zip(&delta[m]) {
                    *p = x + d;
                }
                f(w, &point);
            }
        }
    }

    /// Decision value through the kernel expansion, whatever the kernel.
    pub fn decision_by_expansion(&self, task: Task, x: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_point(task, |w, p| s += w * self.kernel.eval_unchecked(p, x));
        s + self.bias(task)
    }

    pub fn decision(&self, task: Task, x: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => dot(&w.task_weights(task), x) + self.bias(task),
            None => self.decision_by_expansion(task, x),
        }
    }

    /// Gradient of the bias-free decision function of `task` at `x`.
    pub fn direction(&self, task: Task, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; x.len()];
        self.for_each_point(task, |w, p| self.kernel.add_grad(w, p, x, &mut u));
        u
    }

    /// Mean decision value over a bag's members displaced by `delta`.
    fn bag_decision(&self, task: Task, bag: usize, delta: Option<&[Vec<f64>]>) -> f64 {
        let (data, _) = self.view.task(task);
        let bag = &data.bags()[bag];
        if let Some(w) = &self.weights {
            let mean = data.bag_mean_unchecked(bag, delta);
            return dot(&w.task_weights(task), &mean) + self.bias(task);
        }
        let mut point = vec![0.0; data.dimension()];
        let mut s = 0.0;
        for &m in &bag.members {
            point.copy_from_slice(&data.instances()[m].features);
            if let Some(d) = delta {
                axpy(1.0, &d[m], &mut point);
            }
            s += self.decision_by_expansion(task, &point);
        }
        s / bag.len() as f64
    }
}

/// Bias of each task from the KKT conditions: averaged over free bags,
/// otherwise the midpoint of the feasible interval.
pub fn recover_biases(p: &QpProblem<'_>, dual: &DualSolution) -> Result<[f64; 2]> {
    if dual.beta.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: dual.beta.len(),
        });
    }
    let g = p.q.mul_vec(&dual.beta);
    let mut out = [0.0; 2];
    for task in [Task::Source, Task::Target] {
        let mut free = Vec::new();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in (0..p.len()).filter(|&i| p.groups[i] == task) {
            let (beta, c, y, e) = (dual.beta[i], p.upper[i], p.targets[i], p.eps[i]);
            if c <= 0.0 {
                continue;
            }
            let edge = 1e-10 * c;
            if beta > 0.0 && beta < c - edge {
                free.push(y - e - g[i]);
            } else if beta < 0.0 && beta > -c + edge {
                free.push(y + e - g[i]);
            }
            if beta >= c - edge {
                hi = hi.min(y - e - g[i]);
            } else if beta <= -c + edge {
                lo = lo.max(y + e - g[i]);
            } else if beta == 0.0 {
                lo = lo.max(y - e - g[i]);
                hi = hi.min(y + e - g[i]);
            }
        }
        out[task.index()] = if !free.is_empty() {
            free.iter().sum::<f64>() / free.len() as f64
        } else {
            if lo > hi {
                log::warn!(
                    "{} bias interval is empty ([{lo}, {hi}]); using its midpoint",
                    task.name()
                );
            }
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => 0.0,
            }
        };
    }
    Ok(out)
}

/// Closed-form update: every member of a bag outside its tube moves by its
/// full bound along the direction that shrinks the residual. The residual is
/// measured at the unperturbed members; the direction is evaluated at the
/// point the hyperplanes were trained on.
pub fn update_perturbations(planes: &Planes<'_>, hp: &HyperParams) -> Result<PerturbationSet> {
    let (source, target) = (planes.view.source, planes.view.target);
    let bounds = hp.delta.bounds(source, target)?;
    let mut out = PerturbationSet::zeros(source, target);
    for task in [Task::Source, Task::Target] {
        let (data, current) = planes.view.task(task);
        let bound = &bounds[task.index()];
        let slot = match task {
            Task::Source => &mut out.source,
            Task::Target => &mut out.target,
        };
        // for the linear kernel the direction is the same everywhere
        let constant_dir = if planes.kernel.is_linear() {
            Some(planes.direction(task, &vec![0.0; data.dimension()]))
        } else {
            None
        };
        for (b, bag) in data.bags().iter().enumerate() {
            let eps = bag.eps.unwrap_or(hp.eps);
            let r = planes.bag_decision(task, b, None) - bag.target;
            // free support bags sit on the tube edge only up to the solver
            // tolerance; treat that band as a tie so rounding cannot decide
            let edge = eps + hp.qp_tol;
            let sign = if r > edge {
                -1.0
            } else if -r > edge {
                1.0
            } else {
                continue;
            };
            for &m in &bag.members {
                if bound[m] == 0.0 {
                    continue;
                }
                let u = match &constant_dir {
                    Some(u) => u.clone(),
                    None => {
                        let at: Vec<f64> = data.instances()[m]
                            .features
                            .iter()
                            .zip(&current[m])
                            .map(|(x, d)| x + d)
                            .collect();
                        planes.direction(task, &at)
                    }
                };
                let len = norm(&u);
                if len == 0.0 {
                    continue;
                }
                let s = sign * bound[m] / len;
                slot[m] = u.iter().map(|v| s * v).collect();
            }
        }
    }
    Ok(out)
}

/// Terms of the primal objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub regularizer: f64,
    pub slack_source: f64,
    pub slack_target: f64,
    pub total: f64,
}

/// Primal value of `planes` with the inputs displaced by `delta`.
pub fn primal_breakdown(planes: &Planes<'_>, delta: &PerturbationSet, hp: &HyperParams) -> ObjectiveBreakdown {
    let regularizer = match &planes.weights {
        Some(w) => {
            0.5 * dot(&w.w0, &w.w0)
                + 0.5 * hp.lambda_source * dot(&w.v_source, &w.v_source)
                + 0.5 * hp.lambda_target * dot(&w.v_target, &w.v_target)
        }
        None => {
            // 1/2 beta'Q beta, with (Q beta)_i the bias-free mean decision on bag i
            let mut s = 0.0;
            for (r, &b) in planes.index.iter().zip(planes.beta) {
                if b != 0.0 {
                    let tube = planes.bag_decision(r.task, r.bag, Some(planes.view.task(r.task).1));
                    s += b * (tube - planes.bias(r.task));
                }
            }
            0.5 * s
        }
    };
    let mut slack = [0.0; 2];
    for task in [Task::Source, Task::Target] {
        let (data, _) = planes.view.task(task);
        let c = hp.upper(task);
        for (b, bag) in data.bags().iter().enumerate() {
            let eps = bag.eps.unwrap_or(hp.eps);
            let r = planes.bag_decision(task, b, Some(delta.task(task))) - bag.target;
            slack[task.index()] += c * ((r - eps).max(0.0) + (-r - eps).max(0.0));
        }
    }
    ObjectiveBreakdown {
        regularizer,
        slack_source: slack[0],
        slack_target: slack[1],
        total: regularizer + slack[0] + slack[1],
    }
}

/// Diagnostics of one alternating round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub dual_objective: f64,
    /// Primal value right after the dual solve (old perturbations).
    pub primal_after_solve: f64,
    /// Primal value after the perturbation update.
    pub primal_after_update: f64,
    pub qp_iterations: u64,
    pub kkt_residual: f64,
    pub perturbed_instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub hp: HyperParams,
    pub dual: DualSolution,
    pub biases: [f64; 2],
    /// Perturbations the final hyperplanes were trained on.
    pub training_perturbations: PerturbationSet,
    /// Perturbations after the final closed-form update.
    pub perturbations: PerturbationSet,
    pub linear_weights: Option<LinearWeights>,
    pub rounds: usize,
    pub converged: bool,
    pub history: Vec<RoundRecord>,
    pub source: TaskDataset,
    pub target: TaskDataset,
}

fn build_problem<'a>(
    q: &'a crate::linalg::SymMatrix,
    index: &[BagRef],
    source: &TaskDataset,
    target: &TaskDataset,
    hp: &HyperParams,
) -> QpProblem<'a> {
    let mut targets = Vec::with_capacity(index.len());
    let mut eps = Vec::with_capacity(index.len());
    let mut upper = Vec::with_capacity(index.len());
    let mut groups = Vec::with_capacity(index.len());
    for r in index {
        let data = match r.task {
            Task::Source => source,
            Task::Target => target,
        };
        let bag = &data.bags()[r.bag];
        targets.push(bag.target);
        eps.push(bag.eps.unwrap_or(hp.eps));
        upper.push(hp.upper(r.task));
        groups.push(r.task);
    }
    QpProblem {
        q,
        targets,
        eps,
        upper,
        groups,
    }
}

/// Runs the alternating optimisation. Either task may have no bags (the
/// single-task configuration), but not both.
pub fn fit(source: &TaskDataset, target: &TaskDataset, hp: &HyperParams) -> Result<TrainedModel> {
    hp.validate()?;
    if source.dimension() != target.dimension() {
        return Err(Error::DimensionMismatch {
            expected: source.dimension(),
            got: target.dimension(),
        });
    }
    if source.n_bags() + target.n_bags() == 0 {
        return Err(Error::domain("no bags to train on"));
    }
    hp.delta.bounds(source, target)?;

    let mut pert = PerturbationSet::zeros(source, target);
    let mut beta = vec![0.0; source.n_bags() + target.n_bags()];
    let mut history: Vec<RoundRecord> = Vec::new();
    let mut prev_f = f64::INFINITY;
    let mut converged = false;
    let mut last = None;

    for round in 1..=hp.max_rounds {
        let view = pert.view(source, target);
        let gram = assemble_bag_gram(&view, &hp.kernel, hp.lambda_source, hp.lambda_target, GramStrategy::Auto)?;
        let problem = build_problem(&gram.matrix, &gram.index, source, target, hp);
        let dual = solve_beta_qp_from(&problem, beta, hp.qp_tol, hp.qp_max_iter)?;
        let biases = recover_biases(&problem, &dual)?;
        let planes = Planes::new(view, &dual.beta, biases, hp)?;
        let before = primal_breakdown(&planes, &pert, hp).total;
        let next = update_perturbations(&planes, hp)?;
        let after = primal_breakdown(&planes, &next, hp).total;
        let weights = planes.weights.clone();

        let f = dual.objective;
        let f_max = prev_f.abs().max(f.abs());
        let unchanged = next == pert;
        let settled = prev_f.is_finite() && ((f - prev_f).abs() < hp.stop_epsilon * f_max || f == prev_f);
        log::debug!("round {round}: dual {f:.9e}, primal {before:.9e} -> {after:.9e}");
        history.push(RoundRecord {
            round,
            dual_objective: f,
            primal_after_solve: before,
            primal_after_update: after,
            qp_iterations: dual.iterations,
            kkt_residual: dual.kkt_residual,
            perturbed_instances: next.count_nonzero(),
        });
        beta = dual.beta.clone();
        prev_f = f;
        let trained_on = std::mem::replace(&mut pert, next);
        last = Some((dual, biases, weights, trained_on));
        if unchanged || settled {
            converged = true;
            break;
        }
    }

    let (dual, biases, linear_weights, training_perturbations) =
        last.expect("max_rounds >= 1 guarantees one round");
    if !converged {
        log::warn!("alternating optimisation hit max_rounds ({})", hp.max_rounds);
    }
    Ok(TrainedModel {
        hp: hp.clone(),
        dual,
        biases,
        training_perturbations,
        perturbations: pert,
        linear_weights,
        rounds: history.len(),
        converged,
        history,
        source: source.clone(),
        target: target.clone(),
    })
}

impl TrainedModel {
    pub fn planes(&self) -> Result<Planes<'_>> {
        let view = self.training_perturbations.view(&self.source, &self.target);
        Planes::new(view, &self.dual.beta, self.biases, &self.hp)
    }

    pub fn dimension(&self) -> usize {
        self.source.dimension()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn decision_value(&self, x: &[f64], task: Task) -> Result<f64> {
        self.check_dim(x)?;
        if let Some(w) = &self.linear_weights {
            return Ok(dot(&w.task_weights(task), x) + self.biases[task.index()]);
        }
        Ok(self.planes()?.decision_by_expansion(task, x))
    }

    /// Target-task label; ties go to the negative class.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let f = self.decision_value(x, Task::Target)?;
        Ok(if f > 0.0 { Label::Pos } else { Label::Neg })
    }

    pub fn predict_many<'x>(&self, xs: impl IntoIterator<Item = &'x [f64]>) -> Result<Vec<Label>> {
        let planes = self.planes()?;
        xs.into_iter()
            .map(|x| {
                self.check_dim(x)?;
                let f = planes.decision(Task::Target, x);
                Ok(if f > 0.0 { Label::Pos } else { Label::Neg })
            })
            .collect()
    }

    /// Primal objective at the model's hyperplanes and latest perturbations.
    pub fn primal_objective(&self) -> Result<ObjectiveBreakdown> {
        Ok(primal_breakdown(&self.planes()?, &self.perturbations, &self.hp))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.hp.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
