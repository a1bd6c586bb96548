//! Seeded synthetic multi-label streams.

use crate::rng::{substream, Purpose};
use crate::stream::{Dataset, Instance};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Labels copied from `latent_dim` linear classifiers, so every label vector
/// lies in a `latent_dim`-dimensional subspace when `label_noise` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub num_features: usize,
    pub num_labels: usize,
    pub latent_dim: usize,
    pub num_instances: usize,
    /// Standard deviation of Gaussian noise added to each label's score.
    pub label_noise: f64,
    pub seed: u64,
}

/// Topic-structured labels: each instance draws a topic that sets both its
/// feature centroid and which labels are likely. Label `k` belongs to topic
/// `k % num_topics`; such core labels are positive with `core_probability`
/// and all others with the background rate that makes the overall positive
/// rate equal `positive_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalancedConfig {
    pub num_features: usize,
    pub num_labels: usize,
    pub num_topics: usize,
    pub num_instances: usize,
    pub positive_rate: f64,
    pub core_probability: f64,
    /// Spread of the features around their topic centroid.
    pub feature_noise: f64,
    /// Value of an extra constant feature; the remaining features are
    /// scaled so that `||x|| = 1`. Without it no linear model through the
    /// origin can express the label imbalance.
    pub intercept: f64,
    pub seed: u64,
}

impl ImbalancedConfig {
    /// Positive probability of labels outside the instance's topic.
    pub fn background_probability(&self) -> f64 {
        let t = self.num_topics as f64;
        (self.positive_rate - self.core_probability / t) / (1.0 - 1.0 / t)
    }
}

fn gaussian_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g = gaussian_vec(n, rng);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn project(directions: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    directions
        .iter()
        .map(|a| a.iter().zip(x).map(|(u, v)| u * v).sum())
        .collect()
}

/// Features are uniform on the unit sphere.
pub fn planted_subspace(cfg: &PlantedConfig) -> Dataset {
    assert!(cfg.latent_dim >= 1 && cfg.num_labels >= 1);
    let mut rng = substream(cfg.seed, Purpose::Synthetic);
    let directions: Vec<Vec<f64>> = (0..cfg.latent_dim)
        .map(|_| gaussian_vec(cfg.num_features, &mut rng))
        .collect();
    let instances = (0..cfg.num_instances)
        .map(|_| {
            let x = unit_gaussian(cfg.num_features, &mut rng);
            let s = project(&directions, &x);
            let labels = (0..cfg.num_labels)
                .map(|k| {
                    let noise: f64 = rng.sample(StandardNormal);
                    if s[k % cfg.latent_dim] + cfg.label_noise * noise >= 0.0 {
                        1
                    } else {
                        -1
                    }
                })
                .collect();
            Instance {
                features: x,
                labels,
            }
        })
        .collect();
    Dataset {
        num_features: cfg.num_features,
        num_labels: cfg.num_labels,
        instances,
    }
}

/// `num_features` counts the intercept.
pub fn imbalanced(cfg: &ImbalancedConfig) -> Dataset {
    assert!(cfg.num_topics >= 2 && cfg.num_features >= 2);
    assert!((0.0..1.0).contains(&cfg.intercept));
    let background = cfg.background_probability();
    assert!(
        (0.0..=1.0).contains(&background) && (0.0..=1.0).contains(&cfg.core_probability),
        "positive rate unreachable with these topic probabilities"
    );
    let free = cfg.num_features - 1;
    let shrink = (1.0 - cfg.intercept * cfg.intercept).sqrt();
    let mut rng = substream(cfg.seed, Purpose::Synthetic);
    let centroids: Vec<Vec<f64>> = (0..cfg.num_topics)
        .map(|_| unit_gaussian(free, &mut rng))
        .collect();
    let spread = cfg.feature_noise / (free as f64).sqrt();

    let instances = (0..cfg.num_instances)
        .map(|_| {
            let topic = rng.random_range(0..cfg.num_topics);
            let raw: Vec<f64> = centroids[topic]
                .iter()
                .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let norm = raw
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            let mut features: Vec<f64> = raw.iter().map(|v| v / norm * shrink).collect();
            features.push(cfg.intercept);
            let labels = (0..cfg.num_labels)
                .map(|k| {
                    let p = if k % cfg.num_topics == topic {
                        cfg.core_probability
                    } else {
                        background
                    };
                    if rng.random::<f64>() < p {
                        1
                    } else {
                        -1
                    }
                })
                .collect();
            Instance { features, labels }
        })
        .collect();
    Dataset {
        num_features: cfg.num_features,
        num_labels: cfg.num_labels,
        instances,
    }
}
