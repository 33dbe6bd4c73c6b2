use serde::{Deserialize, Serialize};

use super::config::{SearchSpaceConfig, TrainConfig};
use super::state::{init_supernet, SupernetState};
use super::train::{accuracy_with, run_training, Mixing, TrainingCurve};
use crate::dataio::{LabeledDataset, Split};
use crate::diffcore::OpKind;
use crate::error::{Error, Result};

/// Discrete cell: for every intermediate node, two `(predecessor, op)` inputs
/// sorted by predecessor. Nodes 0 and 1 are the cell inputs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellGenotype {
    pub nodes: Vec<[(usize, OpKind); 2]>,
}

impl CellGenotype {
    pub fn validate(&self, config: &SearchSpaceConfig) -> Result<()> {
        if self.nodes.len() != config.nodes_per_cell {
            return Err(Error::Config(format!(
                "genotype has {} nodes, search space has {}",
                self.nodes.len(),
                config.nodes_per_cell
            )));
        }
        for (i, inputs) in self.nodes.iter().enumerate() {
            let node = i + 2;
            for &(pred, op) in inputs {
                if pred >= node {
                    return Err(Error::Config(format!(
                        "node {node} takes input from later node {pred}"
                    )));
                }
                if op == OpKind::Zero || !config.op_corpus.contains(&op) {
                    return Err(Error::Config(format!("node {node} uses invalid op {op}")));
                }
            }
            if inputs[0].0 == inputs[1].0 {
                return Err(Error::Config(format!("node {node} uses predecessor {} twice", inputs[0].0)));
            }
        }
        Ok(())
    }

    /// One-hot mixing weights selecting exactly the genotype's edges and ops.
    pub fn mixing_weights(&self, config: &SearchSpaceConfig) -> Result<Vec<f64>> {
        self.validate(config)?;
        let n_ops = config.num_ops();
        let mut w = vec![0.0; config.num_edges() * n_ops];
        for (i, inputs) in self.nodes.iter().enumerate() {
            for &(pred, op) in inputs {
                let e = config.edge_index(pred, i + 2);
                let o = config.op_corpus.iter().position(|&k| k == op).expect("validated");
                w[e * n_ops + o] = 1.0;
            }
        }
        Ok(w)
    }
}

/// Per edge pick the strongest non-zero op; per node keep the two incoming
/// edges whose picks are strongest. Ties go to the lower edge, then lower op.
pub fn discretize(state: &SupernetState) -> CellGenotype {
    let cfg = &state.config;
    let n_ops = cfg.num_ops();
    let weights = state.arch.mixing_weights(None);
    let best: Vec<(usize, f64)> = (0..cfg.num_edges())
        .map(|e| {
            let row = &weights[e * n_ops..][..n_ops];
            let mut pick: Option<(usize, f64)> = None;
            for (o, &w) in row.iter().enumerate() {
                if cfg.op_corpus[o] == OpKind::Zero {
                    continue;
                }
                if pick.map_or(true, |(_, bw)| w > bw) {
                    pick = Some((o, w));
                }
            }
            pick.expect("corpus has a non-zero op")
        })
        .collect();
    let nodes = (2..cfg.nodes_per_cell + 2)
        .map(|to| {
            let mut incoming: Vec<usize> = (0..to).collect();
            incoming.sort_by(|&a, &b| {
                let (wa, wb) = (best[cfg.edge_index(a, to)].1, best[cfg.edge_index(b, to)].1);
                wb.total_cmp(&wa).then(a.cmp(&b))
            });
            let mut chosen = [incoming[0], incoming[1]];
            chosen.sort_unstable();
            chosen.map(|from| (from, cfg.op_corpus[best[cfg.edge_index(from, to)].0]))
        })
        .collect();
    CellGenotype { nodes }
}

/// A fixed network built from a genotype: the supernet's layout with only
/// the chosen edge ops active.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteModel {
    pub genotype: CellGenotype,
    pub state: SupernetState,
}

impl DiscreteModel {
    pub fn new(genotype: CellGenotype, config: &SearchSpaceConfig, num_classes: usize, seed: u64) -> Result<Self> {
        genotype.validate(config)?;
        Ok(DiscreteModel {
            genotype,
            state: init_supernet(config, num_classes, seed)?,
        })
    }

    pub fn evaluate(&self, dataset: &LabeledDataset, split: Split) -> Result<f64> {
        let mix = self.genotype.mixing_weights(&self.state.config)?;
        accuracy_with(&self.state, dataset, split, &mix)
    }

    /// Train weights only; the architecture is fixed.
    pub fn train(&mut self, dataset: &LabeledDataset, config: &TrainConfig) -> Result<TrainingCurve> {
        let mix = self.genotype.mixing_weights(&self.state.config)?;
        run_training(&mut self.state, dataset, config, &Mixing::Fixed(mix))
    }
}

/// Build a fresh network from `genotype`, train it on `dataset` and report
/// test accuracy.
pub fn retrain_genotype(
    genotype: &CellGenotype,
    dataset: &LabeledDataset,
    search_space: &SearchSpaceConfig,
    config: &TrainConfig,
) -> Result<(DiscreteModel, f64)> {
    let mut model = DiscreteModel::new(genotype.clone(), search_space, dataset.num_classes(), config.seed)?;
    model.train(dataset, config)?;
    let acc = model.evaluate(dataset, Split::Test)?;
    Ok((model, acc))
}
