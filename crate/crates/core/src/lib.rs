//! Transfer learning from label proportions with bounded input uncertainty.
//!
//! Two related binary tasks are observed only through bags of instances and
//! the fraction of positives in each bag. A shared weight vector plus a
//! per-task offset is fitted by an ε-insensitive regression of bag-mean
//! decisions onto the logit of each bag's proportion, while every input may
//! move inside a ball of radius `delta`. Training alternates between the
//! bag-level dual QP ([`qp`]) and a closed-form perturbation update
//! ([`trainer`]).
//!
//! ```
//! use llpx_core::{fit, gen_related_tasks, synth_bags, HyperParams, RelatedTaskSpec};
//!
//! let spec = RelatedTaskSpec { n_source: 64, n_target: 64, dims: 4, mean_shift: 0.5, class_sep: 4.0 };
//! let (s, t) = gen_related_tasks(1, &spec).unwrap();
//! let hp = HyperParams::default();
//! let source = synth_bags(s, 4, 2, &hp.scaling).unwrap();
//! let target = synth_bags(t, 4, 3, &hp.scaling).unwrap();
//! let model = fit(&source, &target, &hp).unwrap();
//! let label = model.predict(&[2.0, 0.5, 0.0, 0.0]).unwrap();
//! # let _ = label;
//! ```

pub mod dataset;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod linalg;
pub mod noise;
pub mod qp;
pub mod trainer;

pub use dataset::{
    bag_proportion, gen_related_tasks, invert_proportion, parse_sparse, parse_sparse_file, sigmoid, synth_bags,
    Bag, Instance, Label, RelatedTaskSpec, ScalingConfig, TaskDataset,
};
pub use error::{Error, Result};
pub use eval::{accuracy, cross_validate, noise_sweep, CvReport, CvSettings, Method, SweepReport, SweepSettings};
pub use kernel::{assemble_bag_gram, BagGram, GramStrategy, KernelSpec, PerturbedView, Task};
pub use noise::{column_stds, corrupt_fraction, NoiseModel};
pub use qp::{dual_objective, kkt_residual, solve_beta_qp, DualSolution, QpProblem};
pub use trainer::{
    expand_weights_linear, fit, recover_biases, update_perturbations, Delta, HyperParams, LinearWeights,
    ObjectiveBreakdown, PerturbationSet, Planes, TrainedModel,
};
