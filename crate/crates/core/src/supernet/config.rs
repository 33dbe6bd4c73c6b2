use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::OpKind;
use crate::error::{Error, Result};

/// Shape of the cell supernet.
///
/// Each cell has two input nodes and `nodes_per_cell` intermediate nodes;
/// intermediate node `j` receives one edge from every earlier node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpaceConfig {
    pub cells: usize,
    pub nodes_per_cell: usize,
    pub channels: usize,
    pub op_corpus: Vec<OpKind>,
    /// `[channels, height, width]` of input images.
    pub image_shape: [usize; 3],
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        SearchSpaceConfig {
            cells: 2,
            nodes_per_cell: 4,
            channels: 8,
            op_corpus: OpKind::ALL.to_vec(),
            image_shape: [1, 12, 12],
        }
    }
}

impl SearchSpaceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::Config("cells must be at least 1".into()));
        }
        if self.nodes_per_cell < 2 {
            return Err(Error::Config(format!(
                "nodes_per_cell must be at least 2, got {}",
                self.nodes_per_cell
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        if self.image_shape.contains(&0) {
            return Err(Error::Config(format!(
                "image_shape {:?} has a zero dimension",
                self.image_shape
            )));
        }
        for required in [OpKind::Zero, OpKind::SkipConnect] {
            if !self.op_corpus.contains(&required) {
                return Err(Error::Config(format!("op_corpus must include {required}")));
            }
        }
        for (i, op) in self.op_corpus.iter().enumerate() {
            if self.op_corpus[..i].contains(op) {
                return Err(Error::Config(format!("op_corpus lists {op} twice")));
            }
        }
        Ok(())
    }

    /// Number of DAG edges per cell: `N (N + 3) / 2`.
    pub fn num_edges(&self) -> usize {
        self.nodes_per_cell * (self.nodes_per_cell + 3) / 2
    }

    pub fn num_ops(&self) -> usize {
        self.op_corpus.len()
    }

    /// Index of edge `from -> to`; edges are ordered by target node, then source.
    pub fn edge_index(&self, from: usize, to: usize) -> usize {
        debug_assert!(from < to && to >= 2);
        (to - 2) * (to + 1) / 2 + from
    }

    /// `(from, to)` for every edge in index order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (2..self.nodes_per_cell + 2)
            .flat_map(|to| (0..to).map(move |from| (from, to)))
            .collect()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Optimizer and schedule settings for supernet training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub w_lr: f64,
    pub w_momentum: f64,
    pub w_weight_decay: f64,
    /// Adam learning rate for the architecture logits; 0 freezes them.
    pub alpha_lr: f64,
    pub alpha_beta1: f64,
    pub alpha_beta2: f64,
    /// Half-width of the uniform perturbation added to the logits during the
    /// weight step; 0 disables smoothing.
    pub perturb_radius: f64,
    pub seed: u64,
    pub curve_log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            w_lr: 0.05,
            w_momentum: 0.9,
            w_weight_decay: 3e-4,
            alpha_lr: 3e-3,
            alpha_beta1: 0.5,
            alpha_beta2: 0.999,
            perturb_radius: 0.1,
            seed: 0,
            curve_log_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")))
            }
        };
        if !(self.w_lr > 0.0 && self.w_lr.is_finite()) {
            return Err(Error::Config(format!("w_lr must be positive, got {}", self.w_lr)));
        }
        finite_nonneg("alpha_lr", self.alpha_lr)?;
        finite_nonneg("w_weight_decay", self.w_weight_decay)?;
        finite_nonneg("perturb_radius", self.perturb_radius)?;
        for (name, v) in [
            ("w_momentum", self.w_momentum),
            ("alpha_beta1", self.alpha_beta1),
            ("alpha_beta2", self.alpha_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.batch_size == 0 || self.curve_log_every == 0 {
            return Err(Error::Config(
                "batch_size and curve_log_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_indexing() {
        let c = SearchSpaceConfig::default();
        assert_eq!(c.num_edges(), 14);
        let edges = c.edges();
        assert_eq!(edges.len(), 14);
        for (e, &(from, to)) in edges.iter().enumerate() {
            assert_eq!(c.edge_index(from, to), e);
        }
        let small = SearchSpaceConfig { nodes_per_cell: 2, ..c };
        assert_eq!(small.num_edges(), 5);
    }

    #[test]
    fn corpus_must_contain_zero_and_skip() {
        let mut c = SearchSpaceConfig::default();
        c.op_corpus = vec![OpKind::Zero, OpKind::Conv3x3];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.op_corpus = vec![OpKind::Zero, OpKind::SkipConnect, OpKind::Zero];
        assert!(c.validate().is_err());
        assert!(SearchSpaceConfig::default().validate().is_ok());
    }

    #[test]
    fn fingerprint_tracks_the_corpus() {
        let a = SearchSpaceConfig::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.op_corpus.pop();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { w_lr: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { perturb_radius: -0.1, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let frozen = TrainConfig { alpha_lr: 0.0, perturb_radius: 0.0, ..TrainConfig::default() };
        assert!(frozen.validate().is_ok());
    }
}
