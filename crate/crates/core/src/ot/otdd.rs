//! Label-aware dataset distance: OT over (feature, label) pairs where the
//! label part of the ground cost is the Gaussian W2 between class
//! conditionals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::gaussian::{class_stats, gaussian_w2_squared, DEFAULT_RIDGE};
use super::sinkhorn::{sinkhorn, uniform, TransportResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::dataio::{EmbeddedDataset, EmbeddingConfig};
use crate::error::{Error, Result};

/// Parameters of the dataset distance, including how datasets are embedded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtSettings {
    pub epsilon: f64,
    pub label_weight: f64,
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub sample_count: usize,
    pub embedding: EmbeddingConfig,
    /// Seed of the stratified subsample drawn before embedding.
    pub subsample_seed: u64,
}

impl Default for OtSettings {
    fn default() -> Self {
        OtSettings {
            epsilon: 0.1,
            label_weight: 1.0,
            ridge: DEFAULT_RIDGE,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            sample_count: 1000,
            embedding: EmbeddingConfig::default(),
            subsample_seed: 0,
        }
    }
}

impl OtSettings {
    pub fn validate(&self) -> Result<()> {
        self.embedding.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.label_weight >= 0.0 && self.label_weight.is_finite()) {
            return Err(Error::Config(format!(
                "label_weight must be nonnegative, got {}",
                self.label_weight
            )));
        }
        if !(self.ridge > 0.0) || self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("ridge, max_iter and tol must be positive".into()));
        }
        Ok(())
    }
}

/// Squared W2 between every class of `e1` and every class of `e2`, indexed by
/// raw label. Each entry averages both argument orders so that swapping the
/// datasets yields exactly the transposed table.
fn label_costs(e1: &EmbeddedDataset, e2: &EmbeddedDataset, ridge: f64) -> Result<DMatrix<f64>> {
    let s1 = class_stats(e1, ridge)?;
    let s2 = class_stats(e2, ridge)?;
    let k1 = e1.labels.iter().max().map_or(0, |m| m + 1);
    let k2 = e2.labels.iter().max().map_or(0, |m| m + 1);
    let mut table = DMatrix::zeros(k1, k2);
    for g1 in &s1 {
        for g2 in &s2 {
            let forward = gaussian_w2_squared(g1, g2)?;
            let backward = gaussian_w2_squared(g2, g1)?;
            table[(g1.class_id, g2.class_id)] = 0.5 * (forward + backward);
        }
    }
    Ok(table)
}

/// Composite ground cost `|x_i - y_j|^2 + label_weight * W2^2(class_i, class_j)`.
pub fn otdd_cost(
    e1: &EmbeddedDataset,
    e2: &EmbeddedDataset,
    label_weight: f64,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    if e1.dim != e2.dim {
        return Err(Error::Shape(format!(
            "embedding dimensions differ: {} ({}) vs {} ({})",
            e1.dim, e1.source_name, e2.dim, e2.source_name
        )));
    }
    if e1.is_empty() || e2.is_empty() {
        return Err(Error::Precondition("cannot compare an empty embedding".into()));
    }
    let labels = label_costs(e1, e2, ridge)?;
    Ok(DMatrix::from_fn(e1.len(), e2.len(), |i, j| {
        let feature: f64 = e1
            .point(i)
            .iter()
            .zip(e2.point(j))
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        feature + label_weight * labels[(e1.labels[i], e2.labels[j])]
    }))
}

/// Full OTDD solve with explicit settings; returns the transport diagnostics.
pub fn otdd_transport(
    e1: &EmbeddedDataset,
    e2: &EmbeddedDataset,
    settings: &OtSettings,
) -> Result<TransportResult> {
    let c = otdd_cost(e1, e2, settings.label_weight, settings.ridge)?;
    sinkhorn(
        &c,
        &uniform(e1.len()),
        &uniform(e2.len()),
        settings.epsilon,
        settings.max_iter,
        settings.tol,
    )
}

/// Dataset distance `<Z, P>` with default ridge and solver limits.
pub fn otdd_distance(
    e1: &EmbeddedDataset,
    e2: &EmbeddedDataset,
    epsilon: f64,
    label_weight: f64,
) -> Result<f64> {
    let settings = OtSettings {
        epsilon,
        label_weight,
        ..OtSettings::default()
    };
    Ok(otdd_transport(e1, e2, &settings)?.transport_cost)
}
