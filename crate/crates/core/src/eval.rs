//! Accuracy, k-fold cross-validation, noise sweeps and runtime benchmarks.
//!
//! Only target instances are cross-validated; the bagged source task is held
//! fixed across folds. Training folds are re-bagged with a fold-derived seed.
//! Every job derives its randomness from `(seed, job coordinates)`, so results
//! do not depend on scheduling.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{gen_related_tasks, synth_bags, Instance, Label, RelatedTaskSpec, TaskDataset};
use crate::error::{Error, Result};
use crate::noise::{corrupt_fraction, corrupt_task, NoiseModel};
use crate::trainer::{fit, Delta, HyperParams};

/// Noise fractions swept by default.
pub const DEFAULT_FRACTIONS: [f64; 6] = [0.0, 0.02, 0.04, 0.08, 0.16, 0.32];
/// Bag sizes of the evaluation protocol.
pub const PROTOCOL_BAG_SIZES: [usize; 6] = [2, 4, 8, 16, 32, 64];

pub fn accuracy(predictions: &[Label], truth: &[Label]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::domain("accuracy of an empty sequence"));
    }
    let hits = predictions.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// SplitMix64 over the seed and coordinates.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    coords.iter().fold(mix(seed), |acc, &c| mix(acc ^ mix(c)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TlLlp,
    TlLlpDelta0,
    SingleTask,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::TlLlp, Method::TlLlpDelta0, Method::SingleTask];

    pub fn tag(self) -> &'static str {
        match self {
            Method::TlLlp => "tl-llp",
            Method::TlLlpDelta0 => "tl-llp-delta0",
            Method::SingleTask => "single-task",
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.tag() == tag)
            .ok_or_else(|| Error::config(format!("unknown method {tag:?}")))
    }

    fn configure(self, source: &TaskDataset, hp: &HyperParams) -> (TaskDataset, HyperParams) {
        match self {
            Method::TlLlp => (source.clone(), hp.clone()),
            Method::TlLlpDelta0 => (
                source.clone(),
                HyperParams {
                    delta: Delta::Scalar(0.0),
                    ..hp.clone()
                },
            ),
            Method::SingleTask => (TaskDataset::empty(source.dimension()), hp.clone()),
        }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub bag_size: usize,
    pub k: usize,
    pub seed: u64,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub hp: HyperParams,
    /// Wall-clock seconds per fold; `None` unless timing was requested.
    pub fold_seconds: Option<Vec<f64>>,
}

/// One row of the long-format CSV report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub dataset: String,
    pub bag_size: usize,
    pub method: Method,
    pub noise_fraction: f64,
    pub fold: usize,
    pub accuracy: f64,
    pub seconds: Option<f64>,
    pub seed: u64,
}

impl CvReport {
    pub fn records(&self, dataset: &str, noise_fraction: f64) -> Vec<FoldRecord> {
        self.fold_accuracies
            .iter()
            .enumerate()
            .map(|(fold, &accuracy)| FoldRecord {
                dataset: dataset.to_string(),
                bag_size: self.bag_size,
                method: self.method,
                noise_fraction,
                fold,
                accuracy,
                seconds: self.fold_seconds.as_ref().map(|s| s[fold]),
                seed: self.seed,
            })
            .collect()
    }
}

pub fn write_records_csv<W: Write>(records: &[FoldRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(rdr: R) -> Result<Vec<FoldRecord>> {
    let mut r = csv::Reader::from_reader(rdr);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Held-out index ranges of a k-fold split; depends only on `(seed, k, n)`.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config("cross-validation needs k >= 2"));
    }
    if n < k {
        return Err(Error::domain(format!("{n} instances cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvSettings {
    pub bag_size: usize,
    pub k: usize,
    pub seed: u64,
    pub method: Method,
    pub record_timing: bool,
}

pub fn cross_validate(
    source: &TaskDataset,
    target: &[Instance],
    hp: &HyperParams,
    settings: &CvSettings,
) -> Result<CvReport> {
    let folds = fold_partition(target.len(), settings.k, settings.seed)?;
    let largest = folds.iter().map(Vec::len).max().unwrap_or(0);
    if target.len() - largest < settings.bag_size {
        return Err(Error::domain(format!(
            "training folds of {} instances cannot hold a bag of size {}",
            target.len() - largest,
            settings.bag_size
        )));
    }
    if target.iter().any(|x| x.label.is_none()) {
        return Err(Error::domain("cross-validation needs labeled target instances"));
    }
    let (src, hp) = settings.method.configure(source, hp);
    let results: Vec<Result<(f64, f64)>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            let started = Instant::now();
            let mut is_held = vec![false; target.len()];
            held.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<Instance> = target
                .iter()
                .zip(&is_held)
                .filter(|(_, h)| !**h)
                .map(|(x, _)| x.clone())
                .collect();
            let bag_seed = derive_seed(settings.seed, &[f as u64]);
            let tgt = synth_bags(train, settings.bag_size, bag_seed, &hp.scaling)?;
            let model = fit(&src, &tgt, &hp)?;
            let preds = model.predict_many(held.iter().map(|&i| target[i].features.as_slice()))?;
            let truth: Vec<Label> = held.iter().map(|&i| target[i].label.unwrap()).collect();
            Ok((accuracy(&preds, &truth)?, started.elapsed().as_secs_f64()))
        })
        .collect();
    let mut fold_accuracies = Vec::with_capacity(results.len());
    let mut seconds = Vec::with_capacity(results.len());
    for r in results {
        let (a, s) = r?;
        fold_accuracies.push(a);
        seconds.push(s);
    }
    let (mean, std) = mean_std(&fold_accuracies);
    Ok(CvReport {
        method: settings.method,
        bag_size: settings.bag_size,
        k: settings.k,
        seed: settings.seed,
        fold_accuracies,
        mean,
        std,
        hp,
        fold_seconds: settings.record_timing.then_some(seconds),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub noise_fraction: f64,
    pub method: Method,
    pub mean_accuracy: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub dataset: String,
    pub bag_size: usize,
    pub k: usize,
    pub rows: Vec<SweepRow>,
    pub records: Vec<FoldRecord>,
}

impl SweepReport {
    pub fn row(&self, fraction: f64, method: Method) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.noise_fraction == fraction && r.method == method)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    pub dataset: String,
    pub bag_size: usize,
    pub k: usize,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub record_timing: bool,
}

/// Corrupts both tasks at each fraction and cross-validates every method.
/// Row statistics pool the fold accuracies of all seeds.
pub fn noise_sweep(
    source: &TaskDataset,
    target: &[Instance],
    hp: &HyperParams,
    settings: &SweepSettings,
) -> Result<SweepReport> {
    if settings.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::config("noise fractions must lie in [0, 1]"));
    }
    if settings.fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("noise fractions must be strictly increasing"));
    }
    if settings.seeds.is_empty() || settings.methods.is_empty() {
        return Err(Error::config("a sweep needs at least one seed and one method"));
    }
    let mut cells = Vec::new();
    for &fraction in &settings.fractions {
        for &seed in &settings.seeds {
            for &method in &settings.methods {
                cells.push((fraction, seed, method));
            }
        }
    }
    let reports: Vec<Result<CvReport>> = cells
        .par_iter()
        .map(|&(fraction, seed, method)| {
            let bits = fraction.to_bits();
            let src = corrupt_task(source, fraction, derive_seed(seed, &[1, bits]))?;
            let tgt = if target.len() >= 2 {
                let model = NoiseModel::fit(target, derive_seed(seed, &[2, bits]))?;
                corrupt_fraction(target, fraction, &model)?
            } else {
                target.to_vec()
            };
            cross_validate(
                &src,
                &tgt,
                hp,
                &CvSettings {
                    bag_size: settings.bag_size,
                    k: settings.k,
                    seed,
                    method,
                    record_timing: settings.record_timing,
                },
            )
        })
        .collect();
    let mut records = Vec::new();
    let mut per_cell = Vec::with_capacity(cells.len());
    for (cell, rep) in cells.iter().zip(reports) {
        let rep = rep?;
        records.extend(rep.records(&settings.dataset, cell.0));
        per_cell.push((*cell, rep));
    }
    let mut rows = Vec::new();
    for &fraction in &settings.fractions {
        for &method in &settings.methods {
            let pooled: Vec<f64> = per_cell
                .iter()
                .filter(|((f, _, m), _)| *f == fraction && *m == method)
                .flat_map(|(_, r)| r.fold_accuracies.iter().copied())
                .collect();
            let (mean_accuracy, std) = mean_std(&pooled);
            rows.push(SweepRow {
                noise_fraction: fraction,
                method,
                mean_accuracy,
                std,
            });
        }
    }
    Ok(SweepReport {
        dataset: settings.dataset.clone(),
        bag_size: settings.bag_size,
        k: settings.k,
        rows,
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    /// Instances per task.
    pub sizes: Vec<usize>,
    pub bag_size: usize,
    pub dims: usize,
    pub repetitions: usize,
    pub class_sep: f64,
    pub mean_shift: f64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            sizes: vec![250, 500, 1000],
            bag_size: 2,
            dims: 20,
            repetitions: 3,
            class_sep: 2.0,
            mean_shift: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub bags: usize,
    pub rounds: usize,
    pub seconds_per_round: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median wall time per alternating round on synthetic tasks of each size.
/// Runs sequentially so that timings are not disturbed by other jobs.
pub fn bench_runtime(settings: &BenchSettings, hp: &HyperParams, seed: u64) -> Result<Vec<BenchRow>> {
    if settings.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("benchmark sizes must be increasing"));
    }
    if settings.repetitions == 0 {
        return Err(Error::config("benchmark needs at least one repetition"));
    }
    let mut rows = Vec::with_capacity(settings.sizes.len());
    for &n in &settings.sizes {
        let spec = RelatedTaskSpec {
            n_source: n,
            n_target: n,
            dims: settings.dims,
            mean_shift: settings.mean_shift,
            class_sep: settings.class_sep,
        };
        let task_seed = derive_seed(seed, &[n as u64]);
        let (s, t) = gen_related_tasks(task_seed, &spec)?;
        let src = synth_bags(s, settings.bag_size, derive_seed(task_seed, &[1]), &hp.scaling)?;
        let tgt = synth_bags(t, settings.bag_size, derive_seed(task_seed, &[2]), &hp.scaling)?;
        let mut times = Vec::with_capacity(settings.repetitions);
        let mut rounds = 0;
        for _ in 0..settings.repetitions {
            let started = Instant::now();
            let model = fit(&src, &tgt, hp)?;
            let elapsed = started.elapsed().as_secs_f64();
            rounds = model.rounds;
            times.push(elapsed / model.rounds as f64);
        }
        rows.push(BenchRow {
            n,
            bags: src.n_bags() + tgt.n_bags(),
            rounds,
            seconds_per_round: median(times),
        });
    }
    Ok(rows)
}
