//! Datasets and deterministic minibatch scheduling: a CIFAR-10 binary-format
//! reader and a synthetic interpolation-regime generator backed by a frozen
//! random teacher network.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::model::{logits, init_params, Batch, LossKind, ModelSpec};

/// One CIFAR-10 record: 1 label byte + 3072 pixel bytes (channel-planar
/// R, G, B; each plane 32x32 row-major).
pub const CIFAR_RECORD_BYTES: usize = 3073;
pub const CIFAR_INPUT_DIM: usize = 3072;
pub const CIFAR_NUM_CLASSES: usize = 10;
/// A standard training batch file holds 10000 records.
pub const CIFAR_FILE_BYTES: u64 = 30_730_000;
/// Training batch files, read in this order.
pub const CIFAR_BATCH_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing CIFAR-10 batch file {path} (a standard batch is {CIFAR_FILE_BYTES} bytes)")]
    MissingFile { path: PathBuf },
    #[error(
        "truncated CIFAR-10 file {path}: {len} bytes is not a whole number of \
         {CIFAR_RECORD_BYTES}-byte records (a standard batch is {CIFAR_FILE_BYTES} bytes)"
    )]
    Truncated { path: PathBuf, len: u64 },
    #[error("label byte {label} > 9 in {path} (record {record})")]
    BadLabel {
        path: PathBuf,
        record: usize,
        label: u8,
    },
    #[error("requested the first {want} records but {dir} holds only {have}")]
    SubsetTooLarge {
        dir: PathBuf,
        want: usize,
        have: usize,
    },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid dataset request: {0}")]
    Invalid(String),
}

/// An immutable dataset: row-major `n x dim` inputs and one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    name: String,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, dim: usize, name: String) -> Self {
        assert_eq!(inputs.len(), labels.len() * dim, "dataset shape mismatch");
        assert!(!labels.is_empty(), "dataset must be nonempty");
        Self {
            inputs,
            labels,
            dim,
            name,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// All samples as one batch, in dataset order.
    pub fn full_batch(&self) -> Batch {
        Batch::new(self.inputs.clone(), self.labels.clone(), self.dim)
            .expect("dataset is nonempty and consistent")
    }

    /// The rows named by `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.label(i));
        }
        Batch::new(inputs, labels, self.dim).expect("indices are nonempty and in range")
    }
}

/// Reads CIFAR-10 training batches from `dir` (or `dir/cifar-10-batches-bin`),
/// taking the first `subset` records in canonical file order; `None` loads
/// everything present. Pixel bytes are scaled to `[0, 1]`.
pub fn load_cifar10(dir: &Path, subset: Option<usize>) -> Result<Dataset, DataError> {
    if subset == Some(0) {
        return Err(DataError::Invalid("subset must be at least 1".into()));
    }
    let dir = if dir.join(CIFAR_BATCH_FILES[0]).exists() {
        dir.to_path_buf()
    } else {
        let nested = dir.join("cifar-10-batches-bin");
        if nested.join(CIFAR_BATCH_FILES[0]).exists() {
            nested
        } else {
            return Err(DataError::MissingFile {
                path: dir.join(CIFAR_BATCH_FILES[0]),
            });
        }
    };

    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut remaining = subset;
    for file in CIFAR_BATCH_FILES {
        if remaining == Some(0) {
            break;
        }
        let path = dir.join(file);
        if !path.exists() {
            match subset {
                // Loading "all" uses whatever contiguous prefix of batch
                // files exists; batch 1 was already required above.
                None => break,
                Some(want) => {
                    return Err(DataError::SubsetTooLarge {
                        dir,
                        want,
                        have: labels.len(),
                    })
                }
            }
        }
        let bytes = fs::read(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 || bytes.is_empty() {
            return Err(DataError::Truncated {
                path,
                len: bytes.len() as u64,
            });
        }
        let records = bytes.len() / CIFAR_RECORD_BYTES;
        let take = match remaining {
            None => records,
            Some(r) => records.min(r),
        };
        for rec in 0..take {
            let record = &bytes[rec * CIFAR_RECORD_BYTES..(rec + 1) * CIFAR_RECORD_BYTES];
            let label = record[0];
            if label > 9 {
                return Err(DataError::BadLabel {
                    path,
                    record: rec,
                    label,
                });
            }
            labels.push(label as usize);
            inputs.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
        }
        remaining = remaining.map(|r| r - take);
    }
    if let Some(r) = remaining {
        if r > 0 {
            let want = subset.unwrap();
            return Err(DataError::SubsetTooLarge {
                dir,
                want,
                have: labels.len(),
            });
        }
    }
    let name = format!("cifar10-n{}", labels.len());
    Ok(Dataset::new(inputs, labels, CIFAR_INPUT_DIM, name))
}

/// Writes samples in the CIFAR-10 binary record layout, quantizing features
/// to bytes via `round(x * 255)` clamped to `[0, 255]`.
pub fn write_cifar10_batch(
    inputs: &[f64],
    labels: &[usize],
    path: &Path,
) -> Result<(), DataError> {
    assert_eq!(
        inputs.len(),
        labels.len() * CIFAR_INPUT_DIM,
        "inputs must be n x 3072"
    );
    let mut bytes = Vec::with_capacity(labels.len() * CIFAR_RECORD_BYTES);
    for (i, &label) in labels.iter().enumerate() {
        assert!(label <= 9, "CIFAR-10 labels lie in 0..=9");
        bytes.push(label as u8);
        for &x in &inputs[i * CIFAR_INPUT_DIM..(i + 1) * CIFAR_INPUT_DIM] {
            bytes.push((x * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Hidden width of the frozen teacher network behind the synthetic generator.
const TEACHER_WIDTH: usize = 16;
/// Teacher reseeding attempts before accepting partial class coverage.
const TEACHER_ATTEMPTS: u64 = 100;

/// Synthetic classification data in the interpolation regime: standard
/// Gaussian inputs labeled by a frozen random teacher MLP's argmax, so a
/// consistent labeling is achievable by construction.
///
/// If some class never appears (and `n >= num_classes`), the teacher is
/// deterministically reseeded; the attempt index is recorded in the dataset
/// name.
pub fn synthetic_classification(n: usize, d: usize, num_classes: usize, seed: u64) -> Dataset {
    assert!(n >= 1 && d >= 1 && num_classes >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x64617461));
    let normal = StandardNormal;
    let inputs: Vec<f64> = (0..n * d).map(|_| normal.sample(&mut rng)).collect();

    let teacher_spec = ModelSpec {
        layer_widths: vec![TEACHER_WIDTH],
        input_dim: d,
        num_classes,
        loss_kind: LossKind::Squared,
        weight_decay: 0.0,
    };
    let mut labels = Vec::new();
    let mut attempt = 0;
    for try_idx in 0..TEACHER_ATTEMPTS {
        let teacher = init_params(&teacher_spec, mix(seed, 0x74656163 + try_idx));
        labels = (0..n)
            .map(|i| {
                let out = logits(&teacher, &inputs[i * d..(i + 1) * d], &teacher_spec)
                    .expect("teacher forward pass is finite");
                argmax(&out)
            })
            .collect();
        attempt = try_idx;
        if n < num_classes || covers_all_classes(&labels, num_classes) {
            break;
        }
    }
    let name = format!("synthetic-n{n}-d{d}-k{num_classes}-seed{seed}-t{attempt}");
    Dataset::new(inputs, labels, d, name)
}

fn covers_all_classes(labels: &[usize], num_classes: usize) -> bool {
    let mut seen = vec![false; num_classes];
    for &l in labels {
        seen[l] = true;
    }
    seen.iter().all(|&s| s)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Deterministic without-replacement minibatch schedule. `batch_size = 0`
/// denotes a single full batch in dataset order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSchedule {
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchSchedule {
    /// Index lists for one epoch: a seeded permutation of `0..n`, chunked.
    /// The last batch may be smaller; every sample appears exactly once.
    pub fn batches(&self, n: usize, epoch: u64) -> Vec<Vec<usize>> {
        assert!(self.batch_size <= n, "batch_size must not exceed n");
        if self.batch_size == 0 {
            return vec![(0..n).collect()];
        }
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, epoch));
        indices.shuffle(&mut rng);
        indices
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// SplitMix64-style mixer for deriving independent seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b)
}
