//! Instances, bags and task datasets.
//!
//! A task is a set of instances partitioned (possibly partially) into disjoint
//! bags. Each bag carries only the fraction of positive members; the solver
//! regresses the bag-mean prediction onto the logit of that fraction.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::axpy;

/// Binary class label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+1")]
    Pos,
    #[serde(rename = "-1")]
    Neg,
}

impl Label {
    pub fn from_sign(v: f64) -> Self {
        if v > 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Pos => "+1",
            Label::Neg => "-1",
        })
    }
}

/// One example with dense features. The label is ground truth and is only
/// consulted for bag synthesis and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl Instance {
    pub fn new(features: Vec<f64>, label: Option<Label>) -> Self {
        Self { features, label }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Proportion scaling settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub clip_epsilon: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { clip_epsilon: 1e-3 }
    }
}

impl ScalingConfig {
    pub fn new(clip_epsilon: f64) -> Result<Self> {
        let cfg = Self { clip_epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.5) {
            return Err(Error::config(format!(
                "clip_epsilon must lie in (0, 0.5), got {}",
                self.clip_epsilon
            )));
        }
        Ok(())
    }

    pub fn clip(&self, p: f64) -> f64 {
        p.clamp(self.clip_epsilon, 1.0 - self.clip_epsilon)
    }
}

/// A group of instances sharing one label proportion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub members: Vec<usize>,
    pub proportion: f64,
    pub target: f64,
    /// Per-bag tube half-width; falls back to the shared value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl Bag {
    pub fn new(members: Vec<usize>, proportion: f64, cfg: &ScalingConfig) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::domain("bag has no members"));
        }
        let target = invert_proportion(proportion, cfg)?;
        Ok(Self {
            members,
            proportion,
            target,
            eps: None,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Instances of one task together with their bag partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    instances: Vec<Instance>,
    bags: Vec<Bag>,
    dimension: usize,
}

impl TaskDataset {
    /// Validates dimensions and bag disjointness.
    pub fn new(instances: Vec<Instance>, bags: Vec<Bag>, dimension: usize) -> Result<Self> {
        for inst in &instances {
            if inst.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: inst.dim(),
                });
            }
        }
        let mut seen = HashSet::new();
        for (b, bag) in bags.iter().enumerate() {
            if bag.is_empty() {
                return Err(Error::domain(format!("bag {b} is empty")));
            }
            for &m in &bag.members {
                if m >= instances.len() {
                    return Err(Error::domain(format!(
                        "bag {b} references instance {m} but only {} exist",
                        instances.len()
                    )));
                }
                if !seen.insert(m) {
                    return Err(Error::domain(format!(
                        "instance {m} belongs to more than one bag"
                    )));
                }
            }
        }
        Ok(Self {
            instances,
            bags,
            dimension,
        })
    }

    /// A task with no instances and no bags.
    pub fn empty(dimension: usize) -> Self {
        Self {
            instances: Vec::new(),
            bags: Vec::new(),
            dimension,
        }
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn bags_mut(&mut self) -> &mut [Bag] {
        &mut self.bags
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_bags(&self) -> usize {
        self.bags.len()
    }

    /// Same bags, replaced instance features (labels and count must match).
    pub fn with_instances(&self, instances: Vec<Instance>) -> Result<Self> {
        if instances.len() != self.instances.len() {
            return Err(Error::domain("replacement instance count differs"));
        }
        Self::new(instances, self.bags.clone(), self.dimension)
    }

    /// Mean of the (optionally perturbed) member vectors of one bag.
    pub fn bag_mean(&self, bag_index: usize, perturbations: Option<&[Vec<f64>]>) -> Result<Vec<f64>> {
        let bag = self
            .bags
            .get(bag_index)
            .ok_or_else(|| Error::domain(format!("bag index {bag_index} out of range")))?;
        if let Some(p) = perturbations {
            if p.len() != self.instances.len() {
                return Err(Error::domain("perturbation count does not match instance count"));
            }
            if let Some(bad) = p.iter().find(|d| d.len() != self.dimension) {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    got: bad.len(),
                });
            }
        }
        Ok(self.bag_mean_unchecked(bag, perturbations))
    }

    pub(crate) fn bag_mean_unchecked(&self, bag: &Bag, perturbations: Option<&[Vec<f64>]>) -> Vec<f64> {
        let mut mean = vec![0.0; self.dimension];
        for &m in &bag.members {
            axpy(1.0, &self.instances[m].features, &mut mean);
            if let Some(p) = perturbations {
                axpy(1.0, &p[m], &mut mean);
            }
        }
        let scale = 1.0 / bag.len() as f64;
        mean.iter_mut().for_each(|v| *v *= scale);
        mean
    }

    /// Writes `(instance_id, bag_id, task)` rows.
    pub fn write_bag_assignments<W: Write>(&self, task: &str, out: &mut csv::Writer<W>) -> Result<()> {
        for (b, bag) in self.bags.iter().enumerate() {
            for &m in &bag.members {
                out.serialize(BagAssignment {
                    instance_id: m,
                    bag_id: b,
                    task: task.to_string(),
                })?;
            }
        }
        Ok(())
    }
}

/// One row of the bag assignment CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagAssignment {
    pub instance_id: usize,
    pub bag_id: usize,
    pub task: String,
}

pub fn read_bag_assignments<R: Read>(rdr: R) -> Result<Vec<BagAssignment>> {
    let mut reader = csv::Reader::from_reader(rdr);
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Rebuilds a task from exported assignments, recomputing proportions from labels.
pub fn bags_from_assignments(
    instances: Vec<Instance>,
    dimension: usize,
    assignments: &[BagAssignment],
    task: &str,
    cfg: &ScalingConfig,
) -> Result<TaskDataset> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for a in assignments.iter().filter(|a| a.task == task) {
        if a.bag_id >= groups.len() {
            groups.resize_with(a.bag_id + 1, Vec::new);
        }
        groups[a.bag_id].push(a.instance_id);
    }
    let mut bags = Vec::with_capacity(groups.len());
    for (b, members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            return Err(Error::domain(format!("bag id {b} has no members")));
        }
        let labels = member_labels(&instances, &members)?;
        let p = bag_proportion(&labels)?;
        bags.push(Bag::new(members, p, cfg)?);
    }
    TaskDataset::new(instances, bags, dimension)
}

fn member_labels(instances: &[Instance], members: &[usize]) -> Result<Vec<Label>> {
    members
        .iter()
        .map(|&m| {
            let inst = instances
                .get(m)
                .ok_or_else(|| Error::domain(format!("instance {m} out of range")))?;
            inst.label
                .ok_or_else(|| Error::domain(format!("instance {m} has no label")))
        })
        .collect()
}

/// A parsed sparse file before densification.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseCorpus {
    pub rows: Vec<SparseRow>,
    /// Largest 1-based feature index seen.
    pub dimension: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow {
    pub label: Option<Label>,
    /// `(1-based index, value)` with strictly increasing indices.
    pub entries: Vec<(usize, f64)>,
}

/// Parses `<label> <idx>:<val> ...` lines. Blank lines are skipped; a line
/// whose first token already contains `:` has no label.
pub fn parse_sparse(text: &str) -> Result<SparseCorpus> {
    let mut corpus = SparseCorpus::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let mut tokens = line.split_whitespace().peekable();
        let label = match tokens.peek() {
            Some(tok) if !tok.contains(':') => {
                let tok = tokens.next().unwrap();
                Some(match tok {
                    "+1" | "1" => Label::Pos,
                    "-1" => Label::Neg,
                    other => return Err(err(format!("invalid label {other:?}"))),
                })
            }
            _ => None,
        };
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected <idx>:<val>, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("invalid index {idx:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".to_string()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("invalid value {val:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite value at index {idx}")));
            }
            if idx == last {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate index {idx}"),
                });
            }
            if idx < last {
                return Err(err(format!("index {idx} not increasing (after {last})")));
            }
            last = idx;
            entries.push((idx, val));
        }
        corpus.dimension = corpus.dimension.max(last);
        corpus.rows.push(SparseRow { label, entries });
    }
    Ok(corpus)
}

impl SparseCorpus {
    /// Densifies every row to `dimension` (defaults to the largest index seen).
    pub fn densify(&self, dimension: Option<usize>) -> Result<Vec<Instance>> {
        let dim = dimension.unwrap_or(self.dimension);
        if self.dimension > dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dimension,
            });
        }
        Ok(self
            .rows
            .iter()
            .map(|row| {
                let mut features = vec![0.0; dim];
                for &(i, v) in &row.entries {
                    features[i - 1] = v;
                }
                Instance::new(features, row.label)
            })
            .collect())
    }
}

/// Parses and densifies at the file's own dimension.
pub fn parse_sparse_file(text: &str) -> Result<(Vec<Instance>, usize)> {
    let corpus = parse_sparse(text)?;
    let instances = corpus.densify(None)?;
    Ok((instances, corpus.dimension))
}

/// Inverse of [`parse_sparse`]; zero entries are omitted.
pub fn write_sparse(instances: &[Instance]) -> String {
    let mut out = String::new();
    for inst in instances {
        let mut parts: Vec<String> = Vec::new();
        if let Some(l) = inst.label {
            parts.push(l.to_string());
        }
        for (i, v) in inst.features.iter().enumerate() {
            if *v != 0.0 {
                parts.push(format!("{}:{}", i + 1, v));
            }
        }
        out.push_str(&parts.join(" "));
        out.push('\n');
    }
    out
}

/// Fraction of positive labels.
pub fn bag_proportion(labels: &[Label]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::domain("cannot compute the proportion of an empty bag"));
    }
    let pos = labels.iter().filter(|l| **l == Label::Pos).count();
    Ok(pos as f64 / labels.len() as f64)
}

/// Logit of the clipped proportion: `-ln(1/p' - 1)`.
pub fn invert_proportion(p: f64, cfg: &ScalingConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("proportion {p} outside [0, 1]")));
    }
    let p = cfg.clip(p);
    Ok(-(1.0 / p - 1.0).ln())
}

pub fn sigmoid(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

/// Shuffles instances with a seeded RNG and cuts them into bags of exactly
/// `bag_size`; the remainder is dropped.
pub fn synth_bags(
    instances: Vec<Instance>,
    bag_size: usize,
    seed: u64,
    cfg: &ScalingConfig,
) -> Result<TaskDataset> {
    if bag_size == 0 {
        return Err(Error::domain("bag size must be at least 1"));
    }
    if bag_size > instances.len() {
        return Err(Error::domain(format!(
            "no complete bag: bag size {bag_size} exceeds {} instances",
            instances.len()
        )));
    }
    let dimension = instances[0].dim();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut bags = Vec::with_capacity(instances.len() / bag_size);
    for chunk in order.chunks_exact(bag_size) {
        let members = chunk.to_vec();
        let labels = member_labels(&instances, &members)?;
        let p = bag_proportion(&labels)?;
        bags.push(Bag::new(members, p, cfg)?);
    }
    TaskDataset::new(instances, bags, dimension)
}

/// Settings for [`gen_related_tasks`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelatedTaskSpec {
    pub n_source: usize,
    pub n_target: usize,
    pub dims: usize,
    pub mean_shift: f64,
    pub class_sep: f64,
}

/// Two balanced Gaussian two-class samples with unit covariance. Class means
/// are `±class_sep/2` along the first axis; the target sample is translated by
/// `mean_shift` along the second axis.
pub fn gen_related_tasks(seed: u64, spec: &RelatedTaskSpec) -> Result<(Vec<Instance>, Vec<Instance>)> {
    if spec.dims < 2 {
        return Err(Error::domain("related tasks need at least 2 dimensions"));
    }
    if spec.n_source < 2 || spec.n_target < 2 {
        return Err(Error::domain("each task needs at least 2 instances"));
    }
    if !(spec.class_sep > 0.0) {
        return Err(Error::domain("class separation must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = gaussian_two_class(&mut rng, spec.n_source, spec.dims, spec.class_sep, 0.0);
    rng.set_stream(1);
    let target = gaussian_two_class(&mut rng, spec.n_target, spec.dims, spec.class_sep, spec.mean_shift);
    Ok((source, target))
}

fn gaussian_two_class(rng: &mut ChaCha8Rng, n: usize, dims: usize, sep: f64, shift: f64) -> Vec<Instance> {
    let n_pos = n.div_ceil(2);
    (0..n)
        .map(|i| {
            let label = if i < n_pos { Label::Pos } else { Label::Neg };
            let mut features: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(rng)).collect();
            features[0] += label.as_f64() * sep / 2.0;
            features[1] += shift;
            Instance::new(features, Some(label))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(f: &[f64], l: Label) -> Instance {
        Instance::new(f.to_vec(), Some(l))
    }

    #[test]
    fn parses_single_line() {
        let (xs, dim) = parse_sparse_file("+1 1:0.5 3:2.0").unwrap();
        assert_eq!(dim, 3);
        assert_eq!(xs, vec![inst(&[0.5, 0.0, 2.0], Label::Pos)]);
    }

    #[test]
    fn empty_file_is_empty() {
        let (xs, dim) = parse_sparse_file("").unwrap();
        assert!(xs.is_empty());
        assert_eq!(dim, 0);
    }

    #[test]
    fn duplicate_index_is_rejected() {
        let err = parse_sparse_file("-1 2:1.0 2:3.0").unwrap_err();
        assert_eq!(err.to_string(), "parse error at line 1: duplicate index 2");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_sparse("+1 1:1\n\n-1 3:1 2:1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(matches!(parse_sparse("2 1:1").unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(matches!(parse_sparse("1 0:1").unwrap_err(), Error::Parse { .. }));
        assert!(matches!(parse_sparse("1 a:1").unwrap_err(), Error::Parse { .. }));
        assert!(matches!(parse_sparse("1 1:x").unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn unlabeled_rows_and_dimension_cap() {
        let corpus = parse_sparse("1:1 4:2\n-1 2:3").unwrap();
        assert_eq!(corpus.rows[0].label, None);
        assert_eq!(corpus.densify(Some(5)).unwrap()[0].features, vec![1.0, 0.0, 0.0, 2.0, 0.0]);
        assert!(corpus.densify(Some(3)).is_err());
    }

    #[test]
    fn sparse_text_round_trips() {
        let xs = vec![inst(&[0.25, 0.0, -3.5], Label::Neg), inst(&[0.0, 1e-7, 0.0], Label::Pos)];
        let text = write_sparse(&xs);
        let back = parse_sparse(&text).unwrap().densify(Some(3)).unwrap();
        assert_eq!(back, xs);
    }

    #[test]
    fn proportions() {
        use Label::*;
        assert_eq!(bag_proportion(&[Pos, Pos, Neg, Neg]).unwrap(), 0.5);
        assert_eq!(bag_proportion(&[Neg, Neg]).unwrap(), 0.0);
        assert_eq!(bag_proportion(&[Pos, Neg, Neg, Neg]).unwrap(), 0.25);
        assert!(bag_proportion(&[]).is_err());
    }

    #[test]
    fn inverse_platt_values() {
        let cfg = ScalingConfig::default();
        assert_eq!(invert_proportion(0.5, &cfg).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((invert_proportion(e / (1.0 + e), &cfg).unwrap() - 1.0).abs() < 1e-12);
        // -ln(999) evaluated independently
        let expected = -6.906_754_778_648_554;
        assert!((invert_proportion(0.0, &cfg).unwrap() - expected).abs() < 1e-9);
        assert!(invert_proportion(1.5, &cfg).is_err());
        assert!(invert_proportion(-0.1, &cfg).is_err());
        assert!(ScalingConfig::new(0.5).is_err());
        assert!(ScalingConfig::new(0.0).is_err());
    }

    fn labeled(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| inst(&[i as f64, 0.0], if i % 3 == 0 { Label::Pos } else { Label::Neg }))
            .collect()
    }

    #[test]
    fn synth_bags_partition_and_remainder() {
        let cfg = ScalingConfig::default();
        let t = synth_bags(labeled(8), 4, 1, &cfg).unwrap();
        assert_eq!(t.n_bags(), 2);
        let mut all: Vec<usize> = t.bags().iter().flat_map(|b| b.members.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());

        let t = synth_bags(labeled(10), 4, 1, &cfg).unwrap();
        assert_eq!(t.n_bags(), 2);
        assert_eq!(t.bags().iter().map(Bag::len).sum::<usize>(), 8);

        let a = synth_bags(labeled(10), 4, 7, &cfg).unwrap();
        let b = synth_bags(labeled(10), 4, 7, &cfg).unwrap();
        assert_eq!(a, b);

        let err = synth_bags(labeled(3), 4, 7, &cfg).unwrap_err();
        assert!(err.to_string().contains("no complete bag"));
    }

    #[test]
    fn synth_bags_requires_labels() {
        let xs = vec![Instance::new(vec![1.0], None); 4];
        assert!(synth_bags(xs, 2, 0, &ScalingConfig::default()).is_err());
    }

    #[test]
    fn overlapping_bags_are_rejected() {
        let cfg = ScalingConfig::default();
        let xs = labeled(4);
        let bags = vec![
            Bag::new(vec![0, 1], 0.5, &cfg).unwrap(),
            Bag::new(vec![1, 2], 0.5, &cfg).unwrap(),
        ];
        assert!(TaskDataset::new(xs.clone(), bags, 2).is_err());
        let bags = vec![Bag::new(vec![0, 9], 0.5, &cfg).unwrap()];
        assert!(TaskDataset::new(xs, bags, 2).is_err());
    }

    #[test]
    fn bag_means() {
        let cfg = ScalingConfig::default();
        let xs = vec![inst(&[1.0, 0.0], Label::Pos), inst(&[0.0, 1.0], Label::Neg)];
        let t = TaskDataset::new(xs, vec![Bag::new(vec![0, 1], 0.5, &cfg).unwrap()], 2).unwrap();
        assert_eq!(t.bag_mean(0, None).unwrap(), vec![0.5, 0.5]);
        let p = vec![vec![0.01, 0.0], vec![0.0, 0.0]];
        let m = t.bag_mean(0, Some(&p)).unwrap();
        assert!((m[0] - 0.505).abs() < 1e-15 && m[1] == 0.5);
        assert!(t.bag_mean(1, None).is_err());
        assert!(t.bag_mean(0, Some(&p[..1])).is_err());

        let single = TaskDataset::new(
            vec![inst(&[3.0, -2.0], Label::Pos)],
            vec![Bag::new(vec![0], 1.0, &cfg).unwrap()],
            2,
        )
        .unwrap();
        assert_eq!(single.bag_mean(0, Some(&[vec![0.0, 0.0]])).unwrap(), vec![3.0, -2.0]);
    }

    #[test]
    fn assignment_csv_round_trip() {
        let cfg = ScalingConfig::default();
        let t = synth_bags(labeled(9), 3, 4, &cfg).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        t.write_bag_assignments("source", &mut w).unwrap();
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("instance_id,bag_id,task\n"));
        let rows = read_bag_assignments(&bytes[..]).unwrap();
        let back = bags_from_assignments(labeled(9), 2, &rows, "source", &cfg).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn related_tasks_layout() {
        let spec = RelatedTaskSpec {
            n_source: 4,
            n_target: 4,
            dims: 2,
            mean_shift: 0.0,
            class_sep: 4.0,
        };
        let (s, t) = gen_related_tasks(3, &spec).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(t.len(), 4);
        assert_eq!(s.iter().filter(|x| x.label == Some(Label::Pos)).count(), 2);
        for x in &s {
            // jitter is unit-variance; ±2 centres stay on their side with overwhelming probability
            assert_eq!(Label::from_sign(x.features[0]), x.label.unwrap());
        }
        assert_eq!(gen_related_tasks(3, &spec).unwrap(), (s, t));
        assert!(gen_related_tasks(3, &RelatedTaskSpec { dims: 1, ..spec }).is_err());
        assert!(gen_related_tasks(3, &RelatedTaskSpec { class_sep: 0.0, ..spec }).is_err());
        assert!(gen_related_tasks(3, &RelatedTaskSpec { n_target: 1, ..spec }).is_err());
    }

    #[test]
    fn related_tasks_shift_moves_target_only() {
        let spec = RelatedTaskSpec {
            n_source: 2000,
            n_target: 2000,
            dims: 3,
            mean_shift: 5.0,
            class_sep: 2.0,
        };
        let (s, t) = gen_related_tasks(11, &spec).unwrap();
        let mean = |xs: &[Instance], d: usize| xs.iter().map(|x| x.features[d]).sum::<f64>() / xs.len() as f64;
        assert!(mean(&s, 1).abs() < 0.1);
        assert!((mean(&t, 1) - 5.0).abs() < 0.1);
        assert!(mean(&t, 0).abs() < 0.1);
    }
}
