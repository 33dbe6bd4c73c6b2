use rand_distr::{Distribution, Normal};

use super::config::SearchSpaceConfig;
use crate::diffcore::{softmax, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::seed;

/// Architecture logits, one row per edge and one column per corpus op.
/// Shared by every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchParams {
    pub alpha: Parameter,
}

impl ArchParams {
    pub fn zeros(edges: usize, ops: usize) -> Self {
        ArchParams {
            alpha: Parameter::new(Tensor::zeros(&[edges, ops])),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.alpha.value.shape()[0]
    }

    pub fn num_ops(&self) -> usize {
        self.alpha.value.shape()[1]
    }

    pub fn row(&self, edge: usize) -> &[f64] {
        let o = self.num_ops();
        &self.alpha.value.data()[edge * o..][..o]
    }

    /// Row-wise softmax of `alpha + offset`, flattened like `alpha`.
    pub fn mixing_weights(&self, offset: Option<&[f64]>) -> Vec<f64> {
        let o = self.num_ops();
        let mut out = Vec::with_capacity(self.alpha.value.len());
        for (e, row) in self.alpha.value.data().chunks_exact(o).enumerate() {
            match offset {
                Some(d) => {
                    let shifted: Vec<f64> =
                        row.iter().zip(&d[e * o..][..o]).map(|(a, b)| a + b).collect();
                    out.extend(softmax(&shifted));
                }
                None => out.extend(softmax(row)),
            }
        }
        out
    }
}

/// Weights `w`, logits `alpha` and bookkeeping of one supernet.
#[derive(Clone, Debug, PartialEq)]
pub struct SupernetState {
    pub config: SearchSpaceConfig,
    pub num_classes: usize,
    /// Plain 3x3 conv from image channels to `channels`.
    pub stem: Parameter,
    /// `cells[c][edge][op]`; `Some` exactly for parameterized ops.
    pub cells: Vec<Vec<Vec<Option<Parameter>>>>,
    pub head_w: Parameter,
    pub head_b: Parameter,
    pub arch: ArchParams,
    pub step_count: u64,
    /// Seed of the random logit perturbations drawn during training.
    pub rng_seed: u64,
}

fn he_normal(shape: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    let data = (0..shape.iter().product::<usize>())
        .map(|_| normal.sample(rng))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

fn head_params(channels: usize, num_classes: usize, seed: u64) -> (Parameter, Parameter) {
    let mut rng = seed::rng(seed::derive(seed, "head"));
    let w = he_normal(&[num_classes, channels], &mut rng);
    (Parameter::new(w), Parameter::new(Tensor::zeros(&[num_classes])))
}

/// Fresh supernet: He-normal convolutions and head weight, zero head bias,
/// zero logits. Trunk weights depend only on `seed`, not on `num_classes`.
pub fn init_supernet(config: &SearchSpaceConfig, num_classes: usize, seed: u64) -> Result<SupernetState> {
    config.validate()?;
    if num_classes == 0 {
        return Err(Error::Config("num_classes must be positive".into()));
    }
    let c = config.channels;
    let mut rng = seed::rng(seed::derive(seed, "trunk"));
    let stem = Parameter::new(he_normal(&[c, config.image_shape[0], 3, 3], &mut rng));
    let cells = (0..config.cells)
        .map(|_| {
            (0..config.num_edges())
                .map(|_| {
                    config
                        .op_corpus
                        .iter()
                        .map(|op| op.param_shape(c).map(|s| Parameter::new(he_normal(&s, &mut rng))))
                        .collect()
                })
                .collect()
        })
        .collect();
    let (head_w, head_b) = head_params(c, num_classes, seed);
    Ok(SupernetState {
        config: config.clone(),
        num_classes,
        stem,
        cells,
        head_w,
        head_b,
        arch: ArchParams::zeros(config.num_edges(), config.num_ops()),
        step_count: 0,
        rng_seed: seed,
    })
}

impl SupernetState {
    /// Replace the classifier with a freshly seeded `num_classes`-way head.
    pub fn reset_head(&mut self, num_classes: usize, seed: u64) {
        let (w, b) = head_params(self.config.channels, num_classes, seed);
        self.head_w = w;
        self.head_b = b;
        self.num_classes = num_classes;
    }

    /// Every weight parameter (everything except `alpha`) in storage order.
    pub fn weight_params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.params_mut();
        out.pop();
        out
    }

    /// All parameters in storage order: stem, cells, head weight, head bias, alpha.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.stem];
        for cell in &self.cells {
            for edge in cell {
                out.extend(edge.iter().flatten());
            }
        }
        out.extend([&self.head_w, &self.head_b, &self.arch.alpha]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.stem];
        for cell in &mut self.cells {
            for edge in cell {
                out.extend(edge.iter_mut().flatten());
            }
        }
        out.extend([&mut self.head_w, &mut self.head_b, &mut self.arch.alpha]);
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn reset_optimizer(&mut self) {
        for p in self.params_mut() {
            p.reset_optimizer();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.is_finite())
    }

    /// Equality of configuration, bookkeeping and every parameter value bit
    /// pattern. Gradients and optimizer slots are ignored.
    pub fn bitwise_eq(&self, other: &SupernetState) -> bool {
        self.config == other.config
            && self.num_classes == other.num_classes
            && self.step_count == other.step_count
            && self.rng_seed == other.rng_seed
            && self.params().len() == other.params().len()
            && self
                .params()
                .iter()
                .zip(other.params())
                .all(|(a, b)| a.value.bits_eq(&b.value))
    }

    /// Trunk (stem and cells) and alpha bitwise equal; head ignored.
    pub fn trunk_bitwise_eq(&self, other: &SupernetState) -> bool {
        let trunk = |s: &SupernetState| {
            let mut p = s.params();
            let alpha = p.pop().expect("alpha");
            p.truncate(p.len() - 2);
            p.push(alpha);
            p.into_iter().map(|p| p.value.clone()).collect::<Vec<_>>()
        };
        self.config == other.config
            && trunk(self)
                .iter()
                .zip(trunk(other))
                .all(|(a, b)| a.bits_eq(&b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SearchSpaceConfig {
        SearchSpaceConfig {
            cells: 1,
            nodes_per_cell: 2,
            channels: 4,
            image_shape: [1, 8, 8],
            ..SearchSpaceConfig::default()
        }
    }

    #[test]
    fn init_gives_uniform_mixing() {
        let s = init_supernet(&small(), 3, 1).unwrap();
        let w = s.arch.mixing_weights(None);
        let o = s.config.num_ops() as f64;
        assert!(w.iter().all(|v| (v - 1.0 / o).abs() < 1e-15));
        assert_eq!(s.step_count, 0);
        assert!(s.head_b.value.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_supernet(&small(), 3, 7).unwrap();
        let b = init_supernet(&small(), 3, 7).unwrap();
        assert!(a.bitwise_eq(&b));
        let c = init_supernet(&small(), 3, 8).unwrap();
        assert!(!a.bitwise_eq(&c));
    }

    #[test]
    fn trunk_does_not_depend_on_class_count() {
        let a = init_supernet(&small(), 3, 7).unwrap();
        let b = init_supernet(&small(), 5, 7).unwrap();
        assert!(a.trunk_bitwise_eq(&b));
        assert_eq!(b.head_w.value.shape(), &[5, 4]);
        assert_eq!(a.head_w.value.shape(), &[3, 4]);
    }

    #[test]
    fn only_convolutions_carry_weights() {
        let s = init_supernet(&small(), 2, 0).unwrap();
        for edge in &s.cells[0] {
            for (op, p) in s.config.op_corpus.iter().zip(edge) {
                assert_eq!(op.has_params(), p.is_some());
            }
        }
    }
}
