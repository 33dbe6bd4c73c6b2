use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Index lists of the three disjoint splits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Images in `[0, 1]` with integer labels and fixed train/val/test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    name: String,
    shape: [usize; 4],
    samples: Vec<f32>,
    labels: Vec<usize>,
    num_classes: usize,
    splits: Splits,
}

impl LabeledDataset {
    /// Validates every invariant; violations are reported as
    /// [`Error::Precondition`].
    pub fn new(
        name: impl Into<String>,
        shape: [usize; 4],
        samples: Vec<f32>,
        labels: Vec<usize>,
        num_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        let ds = LabeledDataset {
            name: name.into(),
            shape,
            samples,
            labels,
            num_classes,
            splits,
        };
        ds.validate().map_err(Error::Precondition)?;
        Ok(ds)
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        let [n, c, h, w] = self.shape;
        if self.num_classes == 0 {
            return Err("num_classes must be positive".into());
        }
        if c == 0 || h == 0 || w == 0 {
            return Err(format!("degenerate image shape {:?}", self.shape));
        }
        if self.samples.len() != n * c * h * w {
            return Err(format!(
                "sample tensor has {} values, shape {:?} needs {}",
                self.samples.len(),
                self.shape,
                n * c * h * w
            ));
        }
        if self.labels.len() != n {
            return Err(format!("{} labels for {n} samples", self.labels.len()));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(format!(
                "label {bad} out of range for {} classes",
                self.num_classes
            ));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err("sample tensor contains NaN or Inf".into());
        }
        let mut seen = vec![false; n];
        for split in [Split::Train, Split::Val, Split::Test] {
            for &i in self.splits.get(split) {
                if i >= n {
                    return Err(format!("{split} index {i} out of range for {n} samples"));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(format!("index {i} appears in more than one split"));
                }
            }
        }
        let mut per_class = vec![0usize; self.num_classes];
        for &i in &self.splits.train {
            per_class[self.labels[i]] += 1;
        }
        if let Some((class, count)) = per_class.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(format!(
                "class {class} has {count} train samples, at least 2 are required"
            ));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Same data under a different name.
    pub fn renamed(&self, name: impl Into<String>) -> Self {
        LabeledDataset {
            name: name.into(),
            ..self.clone()
        }
    }

    /// `[N, C, H, W]`
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn len(&self) -> usize {
        self.shape[0]
    }

    pub fn is_empty(&self) -> bool {
        self.shape[0] == 0
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let d = self.shape[1] * self.shape[2] * self.shape[3];
        &self.samples[i * d..][..d]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn split(&self, split: Split) -> &[usize] {
        self.splits.get(split)
    }

    /// Gather the given samples as a `[B, C, H, W]` tensor plus labels.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let [_, c, h, w] = self.shape;
        let d = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend(self.sample(i).iter().map(|&v| f64::from(v)));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let tensor = Tensor::from_vec(&[indices.len(), c, h, w], data).expect("sized above");
        (tensor, labels)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.num_classes];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            name: self.name.clone(),
            num_classes: self.num_classes,
            shape: self.shape,
            dtype: DTYPE.to_string(),
            splits: self.splits.clone(),
        }
    }

    /// Hex SHA-256 over the manifest and the label histogram.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.manifest()).expect("manifest serializes"));
        hasher.update(serde_json::to_vec(&self.class_histogram()).expect("histogram serializes"));
        hex::encode(hasher.finalize())
    }
}

pub(crate) const DTYPE: &str = "f32le";

/// `manifest.json` of the on-disk dataset layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub num_classes: usize,
    pub shape: [usize; 4],
    pub dtype: String,
    pub splits: Splits,
}
