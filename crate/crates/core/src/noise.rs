//! Gaussian input corruption with data-driven per-dimension scales.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Instance, TaskDataset};
use crate::error::{Error, Result};

/// Per-instance noise scales are drawn from `[0, MAX_MULTIPLIER * sigma0]`.
pub const MAX_MULTIPLIER: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub base_stds: Vec<f64>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn fit(instances: &[Instance], seed: u64) -> Result<Self> {
        Ok(Self {
            base_stds: column_stds(instances)?,
            seed,
        })
    }
}

/// Population standard deviation of each dimension.
pub fn column_stds(instances: &[Instance]) -> Result<Vec<f64>> {
    if instances.len() < 2 {
        return Err(Error::domain("column standard deviations need at least 2 instances"));
    }
    let d = instances[0].dim();
    if let Some(bad) = instances.iter().find(|x| x.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.dim(),
        });
    }
    let n = instances.len() as f64;
    // Welford
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    for (k, x) in instances.iter().enumerate() {
        let count = (k + 1) as f64;
        for j in 0..d {
            let delta = x.features[j] - mean[j];
            mean[j] += delta / count;
            m2[j] += delta * (x.features[j] - mean[j]);
        }
    }
    Ok(m2.into_iter().map(|s| (s / n).max(0.0).sqrt()).collect())
}

fn instance_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64 + 1);
    rng
}

/// Adds zero-mean Gaussian noise to `floor(fraction * N)` instances chosen
/// uniformly without replacement. Each chosen instance draws its own scale
/// `sigma_j ~ U[0, 2 sigma0_j]` per dimension.
pub fn corrupt_fraction(instances: &[Instance], fraction: f64, model: &NoiseModel) -> Result<Vec<Instance>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::domain(format!("noise fraction {fraction} outside [0, 1]")));
    }
    let mut out = instances.to_vec();
    let k = (fraction * instances.len() as f64).floor() as usize;
    if k == 0 {
        return Ok(out);
    }
    if let Some(bad) = instances.iter().find(|x| x.dim() != model.base_stds.len()) {
        return Err(Error::DimensionMismatch {
            expected: model.base_stds.len(),
            got: bad.dim(),
        });
    }
    let mut chooser = ChaCha8Rng::seed_from_u64(model.seed);
    let mut chosen = sample(&mut chooser, instances.len(), k).into_vec();
    chosen.sort_unstable();
    for id in chosen {
        let mut rng = instance_rng(model.seed, id);
        for (x, &s0) in out[id].features.iter_mut().zip(&model.base_stds) {
            if s0 <= 0.0 {
                continue;
            }
            let sigma = rng.random_range(0.0..=MAX_MULTIPLIER * s0);
            if sigma > 0.0 {
                *x += Normal::new(0.0, sigma).expect("finite scale").sample(&mut rng);
            }
        }
    }
    Ok(out)
}

/// Corrupts a bagged task in place of its features; bags are kept.
pub fn corrupt_task(task: &TaskDataset, fraction: f64, seed: u64) -> Result<TaskDataset> {
    if task.instances().len() < 2 {
        return Ok(task.clone());
    }
    let model = NoiseModel::fit(task.instances(), seed)?;
    task.with_instances(corrupt_fraction(task.instances(), fraction, &model)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;

    fn xs(rows: &[&[f64]]) -> Vec<Instance> {
        rows.iter()
            .map(|r| Instance::new(r.to_vec(), Some(Label::Pos)))
            .collect()
    }

    #[test]
    fn stds_of_simple_columns() {
        let s = column_stds(&xs(&[&[3.0, -1.0], &[3.0, 1.0]])).unwrap();
        assert_eq!(s, vec![0.0, 1.0]);
        assert!(column_stds(&xs(&[&[1.0]])).is_err());
    }

    #[test]
    fn zero_fraction_is_identity() {
        let data = xs(&[&[1.0, 2.0], &[3.0, 5.0], &[0.0, 1.0]]);
        let m = NoiseModel::fit(&data, 3).unwrap();
        assert_eq!(corrupt_fraction(&data, 0.0, &m).unwrap(), data);
        assert!(corrupt_fraction(&data, 1.5, &m).is_err());
    }

    #[test]
    fn constant_dimension_never_moves() {
        let data: Vec<Instance> = (0..50)
            .map(|i| Instance::new(vec![7.0, i as f64], Some(Label::Neg)))
            .collect();
        let m = NoiseModel::fit(&data, 9).unwrap();
        let out = corrupt_fraction(&data, 1.0, &m).unwrap();
        assert!(out.iter().all(|x| x.features[0] == 7.0));
        assert!(out.iter().zip(&data).all(|(a, b)| a.label == b.label));
    }

    #[test]
    fn exact_count_and_determinism() {
        let data: Vec<Instance> = (0..40)
            .map(|i| Instance::new(vec![i as f64, (i * i) as f64 % 7.0], Some(Label::Pos)))
            .collect();
        let m = NoiseModel::fit(&data, 21).unwrap();
        let a = corrupt_fraction(&data, 0.32, &m).unwrap();
        let b = corrupt_fraction(&data, 0.32, &m).unwrap();
        assert_eq!(a, b);
        let changed = a.iter().zip(&data).filter(|(x, y)| x != y).count();
        assert_eq!(changed, 12);
    }
}
