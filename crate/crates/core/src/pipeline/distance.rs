use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{embed, EmbeddedDataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::ot::{otdd_transport, OtSettings};
use crate::zoo::ZooIndex;

/// Pairwise dataset distances in input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub names: Vec<String>,
    /// `matrix[i][j]` is the distance from dataset `i` to dataset `j`.
    pub matrix: Vec<Vec<f64>>,
    pub settings: OtSettings,
}

impl DistanceReport {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.matrix[i][j])
    }

    /// Heatmap CSV: a header of dataset names, then one row per dataset.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.matrix) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn embed_with(dataset: &LabeledDataset, settings: &OtSettings) -> Result<EmbeddedDataset> {
    embed(dataset, &settings.embedding, settings.sample_count, settings.subsample_seed)
}

fn pair_distance(a: &EmbeddedDataset, b: &EmbeddedDataset, settings: &OtSettings) -> Result<f64> {
    otdd_transport(a, b, settings)
        .map(|r| r.transport_cost)
        .map_err(|e| annotate(e, &a.source_name, &b.source_name))
}

fn annotate(e: Error, a: &str, b: &str) -> Error {
    let ctx = |m: String| format!("distance {a} -> {b}: {m}");
    match e {
        Error::Precondition(m) => Error::Precondition(ctx(m)),
        Error::Shape(m) => Error::Shape(ctx(m)),
        Error::Numerical(m) => Error::Numerical(ctx(m)),
        Error::Config(m) => Error::Config(ctx(m)),
        other => other,
    }
}

/// All `n^2` dataset distances, including the diagonal.
pub fn distance_matrix(datasets: &[LabeledDataset], settings: &OtSettings) -> Result<DistanceReport> {
    settings.validate()?;
    if datasets.len() < 2 {
        return Err(Error::Precondition(format!(
            "distance matrix needs at least 2 datasets, got {}",
            datasets.len()
        )));
    }
    let embedded = datasets
        .par_iter()
        .map(|d| embed_with(d, settings))
        .collect::<Result<Vec<_>>>()?;
    let n = datasets.len();
    let flat = (0..n * n)
        .into_par_iter()
        .map(|k| pair_distance(&embedded[k / n], &embedded[k % n], settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceReport {
        names: datasets.iter().map(|d| d.name().to_string()).collect(),
        matrix: flat.chunks(n).map(<[f64]>::to_vec).collect(),
        settings: settings.clone(),
    })
}

/// Smallest distance; exact ties go to the lexicographically smaller name.
pub fn argmin_by_name(distances: &[(String, f64)]) -> Option<&str> {
    distances
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
        .map(|(n, _)| n.as_str())
}

/// Outcome of source selection: the chosen name and every candidate distance,
/// sorted by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub source: String,
    pub distances: Vec<(String, f64)>,
}

/// Zoo entries usable as sources for `target`: neither the same name nor
/// the same dataset fingerprint.
pub fn eligible_sources<'a>(target: &LabeledDataset, zoo: &'a ZooIndex) -> Vec<&'a str> {
    let fp = target.fingerprint();
    let mut names: Vec<&str> = zoo
        .list_excluding(target.name())
        .into_iter()
        .filter(|e| e.dataset_fingerprint != fp)
        .map(|e| e.dataset_name.as_str())
        .collect();
    names.sort_unstable();
    names
}

/// Pick the zoo entry whose dataset is closest to `target`. Source datasets
/// are looked up by name in `pool`.
pub fn select_source(
    target: &LabeledDataset,
    zoo: &ZooIndex,
    pool: &[LabeledDataset],
    settings: &OtSettings,
) -> Result<Selection> {
    settings.validate()?;
    let candidates = eligible_sources(target, zoo);
    if candidates.is_empty() {
        return Err(Error::Precondition(format!(
            "zoo at {} has no source other than {}",
            zoo.root().display(),
            target.name()
        )));
    }
    let sources = candidates
        .iter()
        .map(|name| {
            pool.iter()
                .find(|d| d.name() == *name)
                .ok_or_else(|| Error::NotFound(format!("dataset {name} for zoo entry not found")))
        })
        .collect::<Result<Vec<_>>>()?;
    let t = embed_with(target, settings)?;
    let distances = sources
        .par_iter()
        .map(|s| {
            let e = embed_with(s, settings)?;
            Ok((s.name().to_string(), pair_distance(&t, &e, settings)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let source = argmin_by_name(&distances).expect("non-empty").to_string();
    Ok(Selection { source, distances })
}
