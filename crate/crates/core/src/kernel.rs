//! Kernel evaluation and the bag-level Gram matrix of the dual problem.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TaskDataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, sq_dist, SymMatrix};

/// Which task a bag or instance belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Source,
    Target,
}

impl Task {
    pub fn index(self) -> usize {
        match self {
            Task::Source => 0,
            Task::Target => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Source => "source",
            Task::Target => "target",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Linear,
    Gaussian { gamma: f64 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Linear
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Gaussian { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Gaussian { gamma } => Err(Error::config(format!(
                "gaussian kernel needs gamma > 0, got {gamma}"
            ))),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dims(a, b)?;
        Ok(self.eval_unchecked(a, b))
    }

    /// Gradient with respect to the second argument.
    pub fn grad(&self, a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dims(a, x)?;
        let mut g = vec![0.0; a.len()];
        self.add_grad(1.0, a, x, &mut g);
        Ok(g)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Gaussian { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }

    /// `out += scale * dK(a, x)/dx`
    pub(crate) fn add_grad(&self, scale: f64, a: &[f64], x: &[f64], out: &mut [f64]) {
        match *self {
            KernelSpec::Linear => {
                for (o, ai) in out.iter_mut().zip(a) {
                    *o += scale * ai;
                }
            }
            KernelSpec::Gaussian { gamma } => {
                let k = (-gamma * sq_dist(a, x)).exp();
                let c = scale * 2.0 * gamma * k;
                for ((o, ai), xi) in out.iter_mut().zip(a).zip(x) {
                    *o += c * (ai - xi);
                }
            }
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Position of a bag in the flat dual ordering: all source bags, then all target bags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagRef {
    pub task: Task,
    pub bag: usize,
}

/// Block coefficients of the dual quadratic form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCoefficients {
    pub source: f64,
    pub target: f64,
    pub cross: f64,
}

impl BlockCoefficients {
    pub fn new(lambda_source: f64, lambda_target: f64) -> Self {
        Self {
            source: (1.0 + lambda_source) / lambda_source,
            target: (1.0 + lambda_target) / lambda_target,
            cross: 1.0,
        }
    }

    pub fn between(&self, a: Task, b: Task) -> f64 {
        match (a, b) {
            (Task::Source, Task::Source) => self.source,
            (Task::Target, Task::Target) => self.target,
            _ => self.cross,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BagGram {
    pub matrix: SymMatrix,
    pub coefficients: BlockCoefficients,
    pub index: Vec<BagRef>,
}

/// How bag-pair entries are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GramStrategy {
    /// Bag-mean fast path for the linear kernel, double sum otherwise.
    #[default]
    Auto,
    /// Always average the kernel over all member pairs.
    DoubleSum,
}

/// Per-instance perturbation vectors for both tasks.
pub struct PerturbedView<'a> {
    pub source: &'a TaskDataset,
    pub target: &'a TaskDataset,
    pub source_delta: &'a [Vec<f64>],
    pub target_delta: &'a [Vec<f64>],
}

impl<'a> PerturbedView<'a> {
    pub fn task(&self, t: Task) -> (&'a TaskDataset, &'a [Vec<f64>]) {
        match t {
            Task::Source => (self.source, self.source_delta),
            Task::Target => (self.target, self.target_delta),
        }
    }

    pub fn bag_index(&self) -> Vec<BagRef> {
        let src = (0..self.source.n_bags()).map(|bag| BagRef {
            task: Task::Source,
            bag,
        });
        let tgt = (0..self.target.n_bags()).map(|bag| BagRef {
            task: Task::Target,
            bag,
        });
        src.chain(tgt).collect()
    }

    /// Perturbed member points of every bag, in flat bag order.
    pub fn bag_points(&self) -> Vec<Vec<Vec<f64>>> {
        self.bag_index()
            .iter()
            .map(|r| {
                let (data, delta) = self.task(r.task);
                data.bags()[r.bag]
                    .members
                    .iter()
                    .map(|&m| {
                        data.instances()[m]
                            .features
                            .iter()
                            .zip(&delta[m])
                            .map(|(x, d)| x + d)
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Perturbed bag means, in flat bag order.
    pub fn bag_means(&self) -> Vec<Vec<f64>> {
        self.bag_index()
            .iter()
            .map(|r| {
                let (data, delta) = self.task(r.task);
                data.bag_mean_unchecked(&data.bags()[r.bag], Some(delta))
            })
            .collect()
    }
}

/// Assembles `Q[(t,i),(s,j)] = c_ts * mean_{i' in B_i, j' in B_j} K(x_i', x_j')`
/// over perturbed points.
pub fn assemble_bag_gram(
    view: &PerturbedView<'_>,
    kernel: &KernelSpec,
    lambda_source: f64,
    lambda_target: f64,
    strategy: GramStrategy,
) -> Result<BagGram> {
    kernel.validate()?;
    if !(lambda_source > 0.0 && lambda_target > 0.0) {
        return Err(Error::config("lambda values must be positive"));
    }
    if view.source.dimension() != view.target.dimension() {
        return Err(Error::DimensionMismatch {
            expected: view.source.dimension(),
            got: view.target.dimension(),
        });
    }
    for t in [Task::Source, Task::Target] {
        let (data, delta) = view.task(t);
        if delta.len() != data.instances().len() {
            return Err(Error::domain(format!(
                "{} perturbations: expected {} vectors, got {}",
                t.name(),
                data.instances().len(),
                delta.len()
            )));
        }
        if let Some(bad) = delta.iter().find(|d| d.len() != data.dimension()) {
            return Err(Error::DimensionMismatch {
                expected: data.dimension(),
                got: bad.len(),
            });
        }
    }
    let coefficients = BlockCoefficients::new(lambda_source, lambda_target);
    let index = view.bag_index();
    let n = index.len();

    let mean_kernel: Box<dyn Fn(usize, usize) -> f64 + Sync> = match (kernel, strategy) {
        (KernelSpec::Linear, GramStrategy::Auto) => {
            let means = view.bag_means();
            Box::new(move |i, j| dot(&means[i], &means[j]))
        }
        _ => {
            let points = view.bag_points();
            let k = *kernel;
            Box::new(move |i, j| {
                let (a, b) = (&points[i], &points[j]);
                let mut s = 0.0;
                for p in a {
                    for q in b {
                        s += k.eval_unchecked(p, q);
                    }
                }
                s / (a.len() * b.len()) as f64
            })
        }
    };

    // each row computes its upper-triangle entries independently; order of
    // accumulation inside an entry never depends on the thread count
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| coefficients.between(index[i].task, index[j].task) * mean_kernel(i, j))
                .collect()
        })
        .collect();
    let mut matrix = SymMatrix::zeros(n);
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            matrix.set(i, j, v);
            matrix.set(j, i, v);
        }
    }
    Ok(BagGram {
        matrix,
        coefficients,
        index,
    })
}
