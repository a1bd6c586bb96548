//! Multi-label datasets and the seeded stream transformations applied before
//! a run: feature normalization, permutation, sub-sampling and label noise.

mod arff;
mod sparse;

pub use arff::{parse_arff, parse_label_list};
pub use sparse::{parse_sparse, write_sparse};

use crate::rng::{substream, Purpose};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Schema {
        line: Option<usize>,
        message: String,
    },
    #[error("invalid stream configuration: {0}")]
    Config(String),
}

impl StreamError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        StreamError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn schema(line: Option<usize>, message: impl Into<String>) -> Self {
        StreamError::Schema {
            line,
            message: message.into(),
        }
    }
}

/// One stream element: a dense feature vector and a label vector whose
/// entries are exactly -1 or +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub labels: Vec<i8>,
}

impl Instance {
    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(l)).collect()
    }

    pub fn positive_labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_features: usize,
    pub num_labels: usize,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Checks the dimension and label-domain invariants.
    pub fn validate(&self) -> Result<(), StreamError> {
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.features.len() != self.num_features || inst.labels.len() != self.num_labels {
                return Err(StreamError::schema(
                    None,
                    format!("instance {i} has inconsistent dimensions"),
                ));
            }
            if inst.labels.iter().any(|&l| l != 1 && l != -1) {
                return Err(StreamError::schema(
                    None,
                    format!("instance {i} has a label outside {{-1,+1}}"),
                ));
            }
            if inst.features.iter().any(|v| !v.is_finite()) {
                return Err(StreamError::schema(
                    None,
                    format!("instance {i} has a non-finite feature"),
                ));
            }
        }
        Ok(())
    }

    /// Rescales every feature to [0, 1] by its observed range, then divides
    /// each vector by sqrt(d) so that every feature vector has norm <= 1.
    /// Constant features map to 0.
    pub fn normalize_features(&mut self) {
        let d = self.num_features;
        if d == 0 || self.instances.is_empty() {
            return;
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for inst in &self.instances {
            for (j, &v) in inst.features.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();
        for inst in &mut self.instances {
            for (j, v) in inst.features.iter_mut().enumerate() {
                let range = hi[j] - lo[j];
                *v = if range > 0.0 {
                    (*v - lo[j]) / range * inv_sqrt_d
                } else {
                    0.0
                };
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    SparseLabels,
    Arff,
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparse" | "sparse-labels" => Ok(DataFormat::SparseLabels),
            "arff" => Ok(DataFormat::Arff),
            other => Err(format!("unknown data format '{other}'")),
        }
    }
}

/// Parses `text` in the given format. ARFF needs the label attribute names.
pub fn parse_dataset(
    text: &str,
    format: DataFormat,
    label_names: Option<&[String]>,
) -> Result<Dataset, StreamError> {
    match format {
        DataFormat::SparseLabels => parse_sparse(text),
        DataFormat::Arff => {
            let names = label_names.ok_or_else(|| {
                StreamError::Config("ARFF input requires a label-list file".into())
            })?;
            parse_arff(text, names)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub seed: u64,
    pub noise_p: f64,
    pub limit: Option<usize>,
    pub normalize_features: bool,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            seed: 0,
            noise_p: 0.0,
            limit: None,
            normalize_features: false,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), StreamError> {
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(StreamError::Config(format!(
                "noise probability {} outside [0, 1]",
                self.noise_p
            )));
        }
        Ok(())
    }
}

/// Seeded shuffle of the instance order.
pub fn permute_stream(mut instances: Vec<Instance>, seed: u64) -> Vec<Instance> {
    let mut rng = substream(seed, Purpose::Permutation);
    instances.shuffle(&mut rng);
    instances
}

/// Flips each positive label to -1 independently with probability `p`.
/// Negative labels are never touched.
pub fn inject_noise(
    mut instances: Vec<Instance>,
    p: f64,
    seed: u64,
) -> Result<Vec<Instance>, StreamError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StreamError::Config(format!(
            "noise probability {p} outside [0, 1]"
        )));
    }
    if p == 0.0 {
        return Ok(instances);
    }
    let mut rng = substream(seed, Purpose::Noise);
    for inst in &mut instances {
        for l in inst.labels.iter_mut().filter(|l| **l > 0) {
            if rng.random::<f64>() < p {
                *l = -1;
            }
        }
    }
    Ok(instances)
}

/// Normalize (optional), permute, sub-sample, then inject noise.
/// Sub-sampling happens after the permutation so every seed sees a
/// different subset.
pub fn prepare_stream(
    dataset: &Dataset,
    config: &StreamConfig,
) -> Result<Vec<Instance>, StreamError> {
    config.validate()?;
    let instances = if config.normalize_features {
        let mut normalized = dataset.clone();
        normalized.normalize_features();
        normalized.instances
    } else {
        dataset.instances.clone()
    };
    let mut stream = permute_stream(instances, config.seed);
    if let Some(limit) = config.limit {
        stream.truncate(limit);
    }
    inject_noise(stream, config.noise_p, config.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, k: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                features: vec![i as f64],
                labels: (0..k)
                    .map(|j| if (i + j) % 2 == 0 { 1 } else { -1 })
                    .collect(),
            })
            .collect()
    }

    fn key(inst: &Instance) -> u64 {
        inst.features[0] as u64
    }

    #[test]
    fn permutation_is_a_permutation() {
        let input = toy(100, 3);
        let mut out = permute_stream(input.clone(), 3);
        out.sort_by_key(key);
        assert_eq!(out, input);
    }

    #[test]
    fn permutation_is_deterministic_and_seed_dependent() {
        let a = permute_stream(toy(100, 1), 11);
        let b = permute_stream(toy(100, 1), 11);
        let c = permute_stream(toy(100, 1), 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_edge_probabilities() {
        let input = toy(50, 4);
        assert_eq!(inject_noise(input.clone(), 0.0, 1).unwrap(), input);
        let all = inject_noise(input, 1.0, 1).unwrap();
        assert!(all.iter().all(|i| i.labels.iter().all(|&l| l == -1)));
        assert!(inject_noise(toy(1, 1), 1.5, 1).is_err());
    }

    #[test]
    fn noise_flip_rate_concentrates() {
        let input: Vec<Instance> = (0..1000)
            .map(|_| Instance {
                features: vec![],
                labels: vec![1; 10],
            })
            .collect();
        let out = inject_noise(input, 0.5, 99).unwrap();
        let flipped = out
            .iter()
            .flat_map(|i| &i.labels)
            .filter(|&&l| l == -1)
            .count();
        let frac = flipped as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&frac), "{frac}");
    }

    #[test]
    fn noise_never_creates_positives() {
        let input = toy(200, 6);
        let out = inject_noise(input.clone(), 0.4, 5).unwrap();
        for (a, b) in input.iter().zip(&out) {
            for (&before, &after) in a.labels.iter().zip(&b.labels) {
                assert!(!(before == -1 && after == 1));
            }
        }
    }

    #[test]
    fn normalization_bounds_norm() {
        let mut ds = Dataset {
            num_features: 3,
            num_labels: 1,
            instances: vec![
                Instance {
                    features: vec![10.0, -2.0, 5.0],
                    labels: vec![1],
                },
                Instance {
                    features: vec![20.0, 4.0, 5.0],
                    labels: vec![-1],
                },
            ],
        };
        ds.normalize_features();
        for inst in &ds.instances {
            assert!(crate::linalg::norm(&inst.features) <= 1.0 + 1e-12);
            assert_eq!(inst.features[2], 0.0);
        }
    }

    #[test]
    fn prepare_applies_limit_after_permutation() {
        let ds = Dataset {
            num_features: 1,
            num_labels: 2,
            instances: toy(40, 2),
        };
        let cfg = StreamConfig {
            seed: 4,
            limit: Some(10),
            ..Default::default()
        };
        let out = prepare_stream(&ds, &cfg).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out, permute_stream(toy(40, 2), 4)[..10].to_vec());
    }
}
