//! Fixtures shared by the benchmarks.

use otnas_core::dataio::{generate_synthetic, SyntheticFamily, SyntheticTaskSpec};
use otnas_core::diffcore::{OpKind, Tensor};
use otnas_core::supernet::SearchSpaceConfig;
use otnas_core::{seed, LabeledDataset};
use rand::Rng;

pub fn random_tensor(shape: &[usize], s: u64) -> Tensor {
    let mut rng = seed::rng(s);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches")
}

pub fn small_space(channels: usize) -> SearchSpaceConfig {
    SearchSpaceConfig {
        cells: 1,
        nodes_per_cell: 2,
        channels,
        op_corpus: OpKind::ALL.to_vec(),
        image_shape: [1, 8, 8],
    }
}

pub fn toy_dataset(family: SyntheticFamily, s: u64) -> LabeledDataset {
    let mut spec = SyntheticTaskSpec::new(family, s, 3);
    spec.image_size = [1, 8, 8];
    spec.samples_per_class = 48;
    generate_synthetic(&spec).expect("valid spec")
}
