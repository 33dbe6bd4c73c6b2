//! Embedding functions that map images to fixed-dimensional feature vectors.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Raw pixels; `output_dim` is ignored.
    Flatten,
    /// `tanh(R x)` with `R` a seeded Gaussian matrix scaled by `1/sqrt(input_dim)`.
    RandomProjection,
    /// Random projection followed by per-dimension standardization over the subsample.
    StandardizedProjection,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub output_dim: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            kind: EmbeddingKind::RandomProjection,
            output_dim: 32,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output_dim < 2 {
            return Err(Error::Config(format!(
                "embedding output_dim must be at least 2, got {}",
                self.output_dim
            )));
        }
        Ok(())
    }
}

/// Embedded subsample of a dataset: `n` points of dimension `dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedDataset {
    pub points: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub source_name: String,
    /// Number of samples asked for.
    pub requested: usize,
    /// True when `requested` exceeded the train split and was clamped.
    pub clamped: bool,
}

impl EmbeddedDataset {
    pub fn new(points: Vec<f64>, dim: usize, labels: Vec<usize>, source_name: impl Into<String>) -> Result<Self> {
        if dim == 0 || points.len() != dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} coordinates cannot hold {} points of dimension {dim}",
                points.len(),
                labels.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("embedding contains NaN or Inf".into()));
        }
        let n = labels.len();
        Ok(EmbeddedDataset {
            points,
            dim,
            labels,
            source_name: source_name.into(),
            requested: n,
            clamped: false,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..][..self.dim]
    }

    /// Copy with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        EmbeddedDataset {
            points: self.points.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}

/// Seeded class-stratified subsample of the train split: classes are visited
/// round-robin in label order, each contributing its next shuffled member.
pub fn stratified_subsample(dataset: &LabeledDataset, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed::derive(seed, "subsample"));
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for &i in dataset.split(Split::Train) {
        by_class[dataset.labels()[i]].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let total: usize = by_class.iter().map(Vec::len).sum();
    let count = count.min(total);
    let mut picked = Vec::with_capacity(count);
    let mut round = 0;
    while picked.len() < count {
        for members in &by_class {
            if picked.len() == count {
                break;
            }
            if let Some(&i) = members.get(round) {
                picked.push(i);
            }
        }
        round += 1;
    }
    picked
}

fn projection_matrix(config: &EmbeddingConfig, input_dim: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(config.seed, "projection"));
    let scale = 1.0 / (input_dim as f64).sqrt();
    (0..config.output_dim * input_dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect()
}

/// Embed a stratified subsample of the train split.
///
/// `sample_count` larger than the train split is clamped; the clamp is
/// recorded in [`EmbeddedDataset::clamped`].
pub fn embed(
    dataset: &LabeledDataset,
    config: &EmbeddingConfig,
    sample_count: usize,
    seed: u64,
) -> Result<EmbeddedDataset> {
    config.validate()?;
    let k = dataset.num_classes();
    if sample_count < 2 * k {
        return Err(Error::Precondition(format!(
            "sample_count {sample_count} is below 2 x {k} classes"
        )));
    }
    let train_size = dataset.split(Split::Train).len();
    let indices = stratified_subsample(dataset, sample_count, seed);
    let input_dim = dataset.sample(0).len();

    let (dim, mut points) = match config.kind {
        EmbeddingKind::Flatten => {
            let pts = indices
                .iter()
                .flat_map(|&i| dataset.sample(i).iter().map(|&v| f64::from(v)))
                .collect();
            (input_dim, pts)
        }
        EmbeddingKind::RandomProjection | EmbeddingKind::StandardizedProjection => {
            let r = projection_matrix(config, input_dim);
            let d = config.output_dim;
            let mut pts = Vec::with_capacity(indices.len() * d);
            for &i in &indices {
                let x = dataset.sample(i);
                for row in r.chunks_exact(input_dim) {
                    let z: f64 = row.iter().zip(x).map(|(a, &b)| a * f64::from(b)).sum();
                    pts.push(z.tanh());
                }
            }
            (d, pts)
        }
    };

    if config.kind == EmbeddingKind::StandardizedProjection {
        let n = indices.len() as f64;
        for j in 0..dim {
            let mean = points.iter().skip(j).step_by(dim).sum::<f64>() / n;
            let var = points
                .iter()
                .skip(j)
                .step_by(dim)
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            for v in points.iter_mut().skip(j).step_by(dim) {
                *v -= mean;
                if sd > 1e-12 {
                    *v /= sd;
                }
            }
        }
    }

    let labels = indices.iter().map(|&i| dataset.labels()[i]).collect();
    let mut out = EmbeddedDataset::new(points, dim, labels, dataset.name())?;
    out.requested = sample_count;
    out.clamped = sample_count > train_size;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::dataset::Splits;
    use crate::dataio::synthetic::{generate_synthetic, SyntheticFamily, SyntheticTaskSpec};

    fn dataset() -> LabeledDataset {
        let mut s = SyntheticTaskSpec::new(SyntheticFamily::Shapes, 3, 3);
        s.image_size = [1, 8, 8];
        generate_synthetic(&s).unwrap()
    }

    #[test]
    fn flatten_is_raw_pixels() {
        let ds = LabeledDataset::new(
            "px",
            [4, 1, 2, 2],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            vec![0, 0, 1, 1],
            2,
            Splits { train: vec![0, 1, 2, 3], val: vec![], test: vec![] },
        )
        .unwrap();
        let cfg = EmbeddingConfig { kind: EmbeddingKind::Flatten, output_dim: 2, seed: 0 };
        let e = embed(&ds, &cfg, 4, 0).unwrap();
        assert_eq!(e.dim, 4);
        // locate the point that came from sample 0
        let found = (0..e.len()).any(|p| {
            e.point(p) == [0.1f32, 0.2, 0.3, 0.4].map(f64::from).as_slice()
        });
        assert!(found);
    }

    #[test]
    fn embedding_is_deterministic() {
        let ds = dataset();
        let cfg = EmbeddingConfig::default();
        assert_eq!(embed(&ds, &cfg, 60, 5).unwrap(), embed(&ds, &cfg, 60, 5).unwrap());
    }

    #[test]
    fn stratified_projection_covers_every_class() {
        let ds = dataset();
        let cfg = EmbeddingConfig { kind: EmbeddingKind::RandomProjection, output_dim: 16, seed: 1 };
        let e = embed(&ds, &cfg, 60, 2).unwrap();
        assert_eq!(e.len(), 60);
        assert_eq!(e.dim, 16);
        for class in 0..3 {
            assert!(e.labels.iter().filter(|&&l| l == class).count() >= 2);
        }
        assert!(e.points.iter().all(|v| v.abs() < 1.0));
        assert!(!e.clamped);
    }

    #[test]
    fn oversized_request_is_clamped_and_recorded() {
        let ds = dataset();
        let e = embed(&ds, &EmbeddingConfig::default(), 1000, 0).unwrap();
        assert_eq!(e.len(), ds.split(Split::Train).len());
        assert!(e.clamped);
        assert_eq!(e.requested, 1000);
    }

    #[test]
    fn standardized_projection_has_unit_scale() {
        let ds = dataset();
        let cfg = EmbeddingConfig { kind: EmbeddingKind::StandardizedProjection, output_dim: 8, seed: 4 };
        let e = embed(&ds, &cfg, 1000, 0).unwrap();
        let n = e.len() as f64;
        for j in 0..e.dim {
            let col: Vec<f64> = (0..e.len()).map(|i| e.point(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_samples_is_a_precondition_error() {
        let ds = dataset();
        assert!(matches!(
            embed(&ds, &EmbeddingConfig::default(), 5, 0),
            Err(Error::Precondition(_))
        ));
    }
}
