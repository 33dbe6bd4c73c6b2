//! Synthetic image task families with a controllable similarity structure.
//!
//! A [`SyntheticTaskSpec`] fully determines its dataset. The seed picks the
//! per-class prototypes of a family and the per-sample jitter; transforms are
//! applied afterwards, so two specs that differ only in their transform share
//! the same underlying images.

use std::f64::consts::PI;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Splits};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticFamily {
    /// Small geometric primitives at random positions.
    Shapes,
    /// Oriented sinusoidal gratings.
    Stripes,
    /// Sums of Gaussian bumps.
    Blobs,
}

impl SyntheticFamily {
    /// Number of distinct class prototypes the family can express.
    pub fn max_classes(self) -> usize {
        match self {
            SyntheticFamily::Shapes => SHAPE_KINDS.len(),
            SyntheticFamily::Stripes => 12,
            SyntheticFamily::Blobs => 9,
        }
    }
}

impl fmt::Display for SyntheticFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticFamily::Shapes => "shapes",
            SyntheticFamily::Stripes => "stripes",
            SyntheticFamily::Blobs => "blobs",
        })
    }
}

/// Post-generation transform of a task.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskTransform {
    /// Counter-clockwise quarter turns, 0..=3.
    pub rotation_quarter_turns: u8,
    /// Added to every pixel before clamping to `[0, 1]`.
    pub intensity_shift: f64,
    /// When set, labels are relabelled by a seeded permutation.
    pub label_permutation_seed: Option<u64>,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_sigma: f64,
}

fn default_spc() -> usize {
    40
}

fn default_image_size() -> [usize; 3] {
    [1, 12, 12]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub family: SyntheticFamily,
    pub seed: u64,
    pub num_classes: usize,
    #[serde(default = "default_spc")]
    pub samples_per_class: usize,
    /// `(channels, height, width)`
    #[serde(default = "default_image_size")]
    pub image_size: [usize; 3],
    #[serde(default)]
    pub transform: TaskTransform,
}

impl SyntheticTaskSpec {
    pub fn new(family: SyntheticFamily, seed: u64, num_classes: usize) -> Self {
        SyntheticTaskSpec {
            family,
            seed,
            num_classes,
            samples_per_class: default_spc(),
            image_size: default_image_size(),
            transform: TaskTransform::default(),
        }
    }

    /// A readable name such as `shapes-s1-k3-r1`.
    pub fn default_name(&self) -> String {
        let t = &self.transform;
        let mut name = format!("{}-s{}-k{}", self.family, self.seed, self.num_classes);
        if t.rotation_quarter_turns != 0 {
            name.push_str(&format!("-r{}", t.rotation_quarter_turns));
        }
        if t.intensity_shift != 0.0 {
            name.push_str(&format!("-i{}", t.intensity_shift));
        }
        if let Some(p) = t.label_permutation_seed {
            name.push_str(&format!("-p{p}"));
        }
        if t.noise_sigma != 0.0 {
            name.push_str(&format!("-n{}", t.noise_sigma));
        }
        name
    }

    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.image_size;
        if c == 0 {
            return Err(Error::Config("image needs at least one channel".into()));
        }
        if h < 8 || w < 8 {
            return Err(Error::Config(format!(
                "image size {h}x{w} is too small for {} primitives (minimum 8x8)",
                self.family
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("a task needs at least 2 classes".into()));
        }
        if self.num_classes > self.family.max_classes() {
            return Err(Error::Config(format!(
                "{} supports at most {} classes, {} requested",
                self.family,
                self.family.max_classes(),
                self.num_classes
            )));
        }
        if self.samples_per_class < 4 {
            return Err(Error::Config(format!(
                "samples_per_class must be at least 4, got {}",
                self.samples_per_class
            )));
        }
        let t = &self.transform;
        if t.rotation_quarter_turns > 3 {
            return Err(Error::Config("rotation_quarter_turns must be in 0..=3".into()));
        }
        if t.rotation_quarter_turns % 2 == 1 && h != w {
            return Err(Error::Config(
                "odd quarter-turn rotations need square images".into(),
            ));
        }
        if !t.intensity_shift.is_finite() || !t.noise_sigma.is_finite() || t.noise_sigma < 0.0 {
            return Err(Error::Config(
                "intensity_shift and noise_sigma must be finite, noise_sigma >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum ShapeKind {
    FilledSquare,
    HollowSquare,
    Plus,
    Cross,
    HBar,
    VBar,
    Diagonal,
    AntiDiagonal,
    Ring,
    Checker,
}

const SHAPE_KINDS: [ShapeKind; 10] = [
    ShapeKind::FilledSquare,
    ShapeKind::HollowSquare,
    ShapeKind::Plus,
    ShapeKind::Cross,
    ShapeKind::HBar,
    ShapeKind::VBar,
    ShapeKind::Diagonal,
    ShapeKind::AntiDiagonal,
    ShapeKind::Ring,
    ShapeKind::Checker,
];

impl ShapeKind {
    /// Whether local cell `(y, x)` of an `s x s` box is ink.
    fn covers(self, s: usize, y: usize, x: usize) -> bool {
        let mid = s / 2;
        match self {
            ShapeKind::FilledSquare => true,
            ShapeKind::HollowSquare => y == 0 || x == 0 || y + 1 == s || x + 1 == s,
            ShapeKind::Plus => y == mid || x == mid,
            ShapeKind::Cross => y == x || y + x + 1 == s,
            ShapeKind::HBar => y == mid || (s >= 5 && y + 1 == mid),
            ShapeKind::VBar => x == mid || (s >= 5 && x + 1 == mid),
            ShapeKind::Diagonal => y == x,
            ShapeKind::AntiDiagonal => y + x + 1 == s,
            ShapeKind::Ring => {
                let c = (s as f64 - 1.0) / 2.0;
                let d = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
                (d - c).abs() < 0.6
            }
            ShapeKind::Checker => (y + x) % 2 == 0,
        }
    }
}

/// Per-class parameters drawn once from the task seed.
enum Prototypes {
    Shapes(Vec<(ShapeKind, usize)>),
    Stripes(Vec<(usize, f64)>),
    Blobs(Vec<(usize, f64)>),
}

fn prototypes(spec: &SyntheticTaskSpec, rng: &mut ChaCha8Rng) -> Prototypes {
    let k = spec.num_classes;
    let side = spec.image_size[1].min(spec.image_size[2]);
    match spec.family {
        SyntheticFamily::Shapes => {
            let mut kinds = SHAPE_KINDS.to_vec();
            kinds.shuffle(rng);
            let max_size = (side / 2 + 1).max(3);
            Prototypes::Shapes(
                kinds[..k]
                    .iter()
                    .map(|&kind| (kind, rng.random_range(3..=max_size)))
                    .collect(),
            )
        }
        SyntheticFamily::Stripes => {
            let mut combos: Vec<(usize, f64)> = (0..4)
                .flat_map(|o| [2.0, 3.0, 4.0].map(|p| (o, p)))
                .collect();
            combos.shuffle(rng);
            combos.truncate(k);
            Prototypes::Stripes(combos)
        }
        SyntheticFamily::Blobs => {
            let mut combos: Vec<(usize, f64)> = (1..=3)
                .flat_map(|n| [0.7, 1.3, 2.2].map(|s| (n, s)))
                .collect();
            combos.shuffle(rng);
            combos.truncate(k);
            Prototypes::Blobs(combos)
        }
    }
}

/// Draw one single-channel image of the given class into `img` (row-major `h x w`).
fn draw(proto: &Prototypes, class: usize, h: usize, w: usize, rng: &mut ChaCha8Rng, img: &mut [f64]) {
    for v in img.iter_mut() {
        *v = rng.random_range(0.0..0.1);
    }
    match proto {
        Prototypes::Shapes(list) => {
            let (kind, base) = list[class];
            let jitter = rng.random_range(-1i64..=1) as isize;
            let s = (base as isize + jitter).clamp(3, h.min(w) as isize - 1) as usize;
            let top = rng.random_range(0..=h - s);
            let left = rng.random_range(0..=w - s);
            let ink = rng.random_range(0.6..1.0);
            for y in 0..s {
                for x in 0..s {
                    if kind.covers(s, y, x) {
                        let p = &mut img[(top + y) * w + left + x];
                        *p = p.max(ink);
                    }
                }
            }
        }
        Prototypes::Stripes(list) => {
            let (orientation, period) = list[class];
            let phase = rng.random_range(0.0..period);
            let contrast = rng.random_range(0.5..1.0);
            for y in 0..h {
                for x in 0..w {
                    let coord = match orientation {
                        0 => y as f64,
                        1 => x as f64,
                        2 => (x + y) as f64,
                        _ => x as f64 - y as f64,
                    };
                    let v = contrast * (0.5 + 0.5 * (2.0 * PI * (coord + phase) / period).cos());
                    img[y * w + x] += v;
                }
            }
        }
        Prototypes::Blobs(list) => {
            let (count, sigma) = list[class];
            let amp = rng.random_range(0.6..1.0);
            let centers: Vec<(f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.random_range(1.0..(h as f64 - 2.0)),
                        rng.random_range(1.0..(w as f64 - 2.0)),
                    )
                })
                .collect();
            for y in 0..h {
                for x in 0..w {
                    let bump = centers
                        .iter()
                        .map(|&(cy, cx)| {
                            let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                            amp * (-d2 / (2.0 * sigma * sigma)).exp()
                        })
                        .fold(0.0, f64::max);
                    img[y * w + x] += bump;
                }
            }
        }
    }
}

/// Rotate a square plane counter-clockwise by one quarter turn.
fn rotate_quarter(plane: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            out[y * n + x] = plane[x * n + (n - 1 - y)];
        }
    }
    out
}

fn split_sizes(spc: usize) -> (usize, usize) {
    let train = ((spc as f64 * 0.70).floor() as usize).max(2);
    let val = ((spc as f64 * 0.15).floor() as usize).max(1);
    (train, val)
}

/// Generate the dataset described by `spec`, named by
/// [`SyntheticTaskSpec::default_name`].
pub fn generate_synthetic(spec: &SyntheticTaskSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let k = spec.num_classes;
    let spc = spec.samples_per_class;
    let [c, h, w] = spec.image_size;
    let n = k * spc;
    let plane = h * w;

    let mut proto_rng = seed::rng(seed::derive(spec.seed, "prototypes"));
    let proto = prototypes(spec, &mut proto_rng);
    let mut sample_rng = seed::rng(seed::derive(spec.seed, "samples"));
    let mut noise_rng = seed::rng(seed::derive(spec.seed, "noise"));

    let t = &spec.transform;
    let mut samples = Vec::with_capacity(n * c * plane);
    let mut base_labels = Vec::with_capacity(n);
    let mut img = vec![0.0; plane];
    for i in 0..n {
        let class = i % k;
        base_labels.push(class);
        for ch in 0..c {
            draw(&proto, class, h, w, &mut sample_rng, &mut img);
            // extra channels get a dimmer copy so colour carries a little signal
            let gain = 1.0 / (1.0 + ch as f64 * 0.5);
            let mut p: Vec<f64> = img.iter().map(|v| (v * gain).clamp(0.0, 1.0)).collect();
            for _ in 0..t.rotation_quarter_turns {
                p = rotate_quarter(&p, h);
            }
            for v in p.iter_mut() {
                let noise = if t.noise_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    t.noise_sigma * z
                } else {
                    0.0
                };
                *v = (*v + t.intensity_shift + noise).clamp(0.0, 1.0);
            }
            samples.extend(p.into_iter().map(|v| v as f32));
        }
    }

    let labels = match t.label_permutation_seed {
        Some(perm_seed) => {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(&mut seed::rng(seed::derive(perm_seed, "labels")));
            base_labels.iter().map(|&l| perm[l]).collect()
        }
        None => base_labels.clone(),
    };

    let (n_train, n_val) = split_sizes(spc);
    let mut split_rng = seed::rng(seed::derive(spec.seed, "splits"));
    let mut splits = Splits::default();
    for class in 0..k {
        let mut members: Vec<usize> = (0..spc).map(|j| class + j * k).collect();
        members.shuffle(&mut split_rng);
        splits.train.extend_from_slice(&members[..n_train]);
        splits.val.extend_from_slice(&members[n_train..n_train + n_val]);
        splits.test.extend_from_slice(&members[n_train + n_val..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();

    LabeledDataset::new(spec.default_name(), [n, c, h, w], samples, labels, k, splits)
}
