//! Example-based multi-label costs and their decomposition into per-label
//! weights.
//!
//! For a label order, position `k` gets the weight
//! `delta[k] = |c(y, pred_k) - c(y, real_k)|`, where both pseudo predictions
//! copy `y` on every label before `k` and `y_hat` on every label after it;
//! `real_k` is correct on label `k` and `pred_k` is wrong on it. When
//! correcting a single label never raises the cost, the weights reproduce
//! the cost exactly as a weighted Hamming loss over the mistaken labels.

use crate::online_pca::ProjectionMatrix;
use crate::rng::{substream, Purpose};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label order is not a permutation of 0..{0}")]
    InvalidOrder(usize),
    #[error("unknown cost '{0}' (expected hamming, rank, f1 or accuracy)")]
    UnknownCost(String),
}

/// A cost `c(y, y_hat)` on `{-1,+1}^K` with `c(y, y) = 0` and values in `[0, 1]`.
pub trait CostFunction: Send + Sync {
    fn name(&self) -> &str;

    /// Callers guarantee equal lengths and entries in `{-1, +1}`.
    fn evaluate(&self, y: &[i8], y_hat: &[i8]) -> f64;

    /// Weights known in closed form, bypassing the generic decomposition.
    fn closed_form_weights(&self, _k: usize) -> Option<WeightDiagonal> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Hamming,
    Rank,
    F1,
    Accuracy,
}

impl CostKind {
    pub const ALL: [CostKind; 4] = [
        CostKind::Hamming,
        CostKind::Rank,
        CostKind::F1,
        CostKind::Accuracy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::Hamming => "hamming",
            CostKind::Rank => "rank",
            CostKind::F1 => "f1",
            CostKind::Accuracy => "accuracy",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostKind {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hamming" => Ok(CostKind::Hamming),
            "rank" => Ok(CostKind::Rank),
            "f1" => Ok(CostKind::F1),
            "accuracy" => Ok(CostKind::Accuracy),
            other => Err(CostError::UnknownCost(other.to_string())),
        }
    }
}

impl CostFunction for CostKind {
    fn name(&self) -> &str {
        self.as_str()
    }

    fn evaluate(&self, y: &[i8], y_hat: &[i8]) -> f64 {
        match self {
            CostKind::Hamming => hamming(y, y_hat),
            CostKind::Rank => normalized_rank(y, y_hat),
            CostKind::F1 => f1(y, y_hat),
            CostKind::Accuracy => accuracy(y, y_hat),
        }
    }

    fn closed_form_weights(&self, k: usize) -> Option<WeightDiagonal> {
        // a single flipped bit always moves the Hamming loss by 1/K
        match self {
            CostKind::Hamming => Some(WeightDiagonal {
                deltas: vec![1.0 / k as f64; k],
                sqrt_deltas: vec![1.0 / (k as f64).sqrt(); k],
            }),
            _ => None,
        }
    }
}

fn hamming(y: &[i8], y_hat: &[i8]) -> f64 {
    let wrong = y.iter().zip(y_hat).filter(|(a, b)| a != b).count();
    wrong as f64 / y.len() as f64
}

fn normalized_rank(y: &[i8], y_hat: &[i8]) -> f64 {
    let mut pairs = 0usize;
    let mut loss = 0.0;
    for (i, (&yi, &pi)) in y.iter().zip(y_hat).enumerate() {
        if yi <= 0 {
            continue;
        }
        for (j, (&yj, &pj)) in y.iter().zip(y_hat).enumerate() {
            if i == j || yj >= 0 {
                continue;
            }
            pairs += 1;
            if pi < pj {
                loss += 1.0;
            } else if pi == pj {
                loss += 0.5;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        loss / pairs as f64
    }
}

fn positives(y: &[i8], y_hat: &[i8]) -> (usize, usize, usize) {
    let mut both = 0;
    let mut truth = 0;
    let mut predicted = 0;
    for (&a, &b) in y.iter().zip(y_hat) {
        truth += usize::from(a > 0);
        predicted += usize::from(b > 0);
        both += usize::from(a > 0 && b > 0);
    }
    (both, truth, predicted)
}

fn f1(y: &[i8], y_hat: &[i8]) -> f64 {
    let (both, truth, predicted) = positives(y, y_hat);
    let denom = truth + predicted;
    if denom == 0 {
        0.0
    } else {
        1.0 - 2.0 * both as f64 / denom as f64
    }
}

fn accuracy(y: &[i8], y_hat: &[i8]) -> f64 {
    let (both, truth, predicted) = positives(y, y_hat);
    let union = truth + predicted - both;
    if union == 0 {
        0.0
    } else {
        1.0 - both as f64 / union as f64
    }
}

/// Evaluates `cost` after checking that the vectors line up.
pub fn checked_cost(cost: &dyn CostFunction, y: &[i8], y_hat: &[i8]) -> Result<f64, CostError> {
    if y.len() != y_hat.len() {
        return Err(CostError::LengthMismatch(y.len(), y_hat.len()));
    }
    Ok(cost.evaluate(y, y_hat))
}

pub fn cost_hamming(y: &[i8], y_hat: &[i8]) -> Result<f64, CostError> {
    checked_cost(&CostKind::Hamming, y, y_hat)
}

pub fn cost_rank(y: &[i8], y_hat: &[i8]) -> Result<f64, CostError> {
    checked_cost(&CostKind::Rank, y, y_hat)
}

pub fn cost_f1(y: &[i8], y_hat: &[i8]) -> Result<f64, CostError> {
    checked_cost(&CostKind::F1, y, y_hat)
}

pub fn cost_accuracy(y: &[i8], y_hat: &[i8]) -> Result<f64, CostError> {
    checked_cost(&CostKind::Accuracy, y, y_hat)
}

/// A permutation of the label indices; position `j` in the order is label
/// `order[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOrder(Vec<usize>);

impl LabelOrder {
    pub fn new(order: Vec<usize>) -> Result<Self, CostError> {
        let k = order.len();
        let mut seen = vec![false; k];
        for &i in &order {
            if i >= k || seen[i] {
                return Err(CostError::InvalidOrder(k));
            }
            seen[i] = true;
        }
        Ok(LabelOrder(order))
    }

    /// The dataset's own label order.
    pub fn native(k: usize) -> Self {
        LabelOrder((0..k).collect())
    }

    pub fn random(k: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut substream(seed, Purpose::LabelOrder));
        LabelOrder(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The per-label weights `delta` and `C = diag(sqrt(delta))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiagonal {
    pub deltas: Vec<f64>,
    pub sqrt_deltas: Vec<f64>,
}

impl WeightDiagonal {
    pub fn from_deltas(deltas: Vec<f64>) -> Self {
        let sqrt_deltas = deltas.iter().map(|d| d.sqrt()).collect();
        WeightDiagonal {
            deltas,
            sqrt_deltas,
        }
    }

    /// `C y`
    pub fn apply(&self, y: &[i8]) -> Vec<f64> {
        self.sqrt_deltas
            .iter()
            .zip(y)
            .map(|(c, &l)| c * f64::from(l))
            .collect()
    }

    /// `sum_k delta[k] [y[k] != y_hat[k]]`
    pub fn weighted_hamming(&self, y: &[i8], y_hat: &[i8]) -> f64 {
        self.deltas
            .iter()
            .zip(y.iter().zip(y_hat))
            .filter(|(_, (a, b))| a != b)
            .map(|(d, _)| d)
            .sum()
    }
}

/// `C` as the diagonal of a `K x K` matrix, stored as a vector.
pub fn weight_matrix(w: &WeightDiagonal) -> Vec<f64> {
    w.sqrt_deltas.clone()
}

/// The generic decomposition; evaluates `cost` exactly `2K` times.
pub fn label_weights_generic(
    cost: &dyn CostFunction,
    y: &[i8],
    y_hat: &[i8],
    order: &LabelOrder,
) -> Result<WeightDiagonal, CostError> {
    let k = y.len();
    if y_hat.len() != k {
        return Err(CostError::LengthMismatch(k, y_hat.len()));
    }
    if order.len() != k {
        return Err(CostError::InvalidOrder(k));
    }
    let mut deltas = vec![0.0; k];
    // `real` holds the pseudo prediction correct up to and including the
    // current position; it becomes the prefix for the next one
    let mut real = y_hat.to_vec();
    for &label in order.as_slice() {
        real[label] = y[label];
        let c_real = cost.evaluate(y, &real);
        real[label] = -y[label];
        let c_pred = cost.evaluate(y, &real);
        real[label] = y[label];
        deltas[label] = (c_pred - c_real).abs();
    }
    Ok(WeightDiagonal::from_deltas(deltas))
}

/// Label weights for `(y, y_hat)`, using the closed form when the cost has one.
pub fn label_weights(
    cost: &dyn CostFunction,
    y: &[i8],
    y_hat: &[i8],
    order: &LabelOrder,
) -> Result<WeightDiagonal, CostError> {
    if y.len() != y_hat.len() {
        return Err(CostError::LengthMismatch(y.len(), y_hat.len()));
    }
    if order.len() != y.len() {
        return Err(CostError::InvalidOrder(y.len()));
    }
    match cost.closed_form_weights(y.len()) {
        Some(w) => Ok(w),
        None => label_weights_generic(cost, y, y_hat, order),
    }
}

/// `|sum_k delta[k] [y[k] != y_hat[k]] - c(y, y_hat)|` for the generic weights.
pub fn decomposition_gap(
    cost: &dyn CostFunction,
    y: &[i8],
    y_hat: &[i8],
    order: &LabelOrder,
) -> Result<f64, CostError> {
    let w = label_weights_generic(cost, y, y_hat, order)?;
    Ok((w.weighted_hamming(y, y_hat) - cost.evaluate(y, y_hat)).abs())
}

/// A failure of `c(y, pred_k) - c(y, real_k) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionViolation {
    pub y: Vec<i8>,
    pub y_hat: Vec<i8>,
    pub order: Vec<usize>,
    /// Position within the order.
    pub position: usize,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub cost: String,
    pub trials: usize,
    pub violation_count: usize,
    /// At most [`MAX_WITNESSES`] examples.
    pub witnesses: Vec<ConditionViolation>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

pub const MAX_WITNESSES: usize = 16;
pub const CONDITION_SLACK: f64 = 1e-12;

fn condition_at(
    cost: &dyn CostFunction,
    y: &[i8],
    y_hat: &[i8],
    order: &LabelOrder,
    position: usize,
) -> f64 {
    let mut v = y_hat.to_vec();
    for &label in &order.as_slice()[..position] {
        v[label] = y[label];
    }
    let label = order.as_slice()[position];
    v[label] = y[label];
    let c_real = cost.evaluate(y, &v);
    v[label] = -y[label];
    let c_pred = cost.evaluate(y, &v);
    c_pred - c_real
}

fn random_labels<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<i8> {
    // vary the density so sparse and dense vectors are both covered
    let rate: f64 = rng.random();
    (0..k)
        .map(|_| if rng.random::<f64>() < rate { 1 } else { -1 })
        .collect()
}

struct ReportBuilder {
    report: ConditionReport,
}

impl ReportBuilder {
    fn new(cost: &dyn CostFunction) -> Self {
        ReportBuilder {
            report: ConditionReport {
                cost: cost.name().to_string(),
                trials: 0,
                violation_count: 0,
                witnesses: Vec::new(),
            },
        }
    }

    fn record(&mut self, y: &[i8], y_hat: &[i8], order: &LabelOrder, position: usize, diff: f64) {
        self.report.trials += 1;
        if diff < -CONDITION_SLACK {
            self.report.violation_count += 1;
            if self.report.witnesses.len() < MAX_WITNESSES {
                self.report.witnesses.push(ConditionViolation {
                    y: y.to_vec(),
                    y_hat: y_hat.to_vec(),
                    order: order.as_slice().to_vec(),
                    position,
                    difference: diff,
                });
            }
        }
    }
}

/// Samples random `(y, y_hat, order, position)` and checks that making the
/// label at `position` wrong never lowers the cost.
pub fn check_condition<R: Rng + ?Sized>(
    cost: &dyn CostFunction,
    trials: usize,
    k: usize,
    rng: &mut R,
) -> ConditionReport {
    let mut builder = ReportBuilder::new(cost);
    if k == 0 {
        return builder.report;
    }
    let mut order: Vec<usize> = (0..k).collect();
    for _ in 0..trials {
        let y = random_labels(k, rng);
        let y_hat = random_labels(k, rng);
        order.shuffle(rng);
        let order = LabelOrder(order.clone());
        let position = rng.random_range(0..k);
        let diff = condition_at(cost, &y, &y_hat, &order, position);
        builder.record(&y, &y_hat, &order, position, diff);
    }
    builder.report
}

/// All `(y, y_hat)` pairs in `{-1,+1}^K`, every position, for each order.
pub fn check_condition_exhaustive(
    cost: &dyn CostFunction,
    k: usize,
    orders: &[LabelOrder],
) -> ConditionReport {
    let mut builder = ReportBuilder::new(cost);
    for order in orders {
        for_each_pair(k, |y, y_hat| {
            for position in 0..k {
                let diff = condition_at(cost, y, y_hat, order, position);
                builder.record(y, y_hat, order, position, diff);
            }
        });
    }
    builder.report
}

/// Calls `f` on every pair of vectors in `{-1,+1}^K` (K <= 16).
pub fn for_each_pair(k: usize, mut f: impl FnMut(&[i8], &[i8])) {
    assert!(k <= 16, "exhaustive enumeration limited to K <= 16");
    let to_vec = |bits: u32| -> Vec<i8> {
        (0..k)
            .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
            .collect()
    };
    for a in 0..(1u32 << k) {
        let y = to_vec(a);
        for b in 0..(1u32 << k) {
            f(&y, &to_vec(b));
        }
    }
}

/// `||r - P y_c||^2 + ||(I - P^T P) y_c||^2`, the cost bound for predictions
/// `sign(P^T r)` against weighted targets `y_c = C y`.
pub fn cost_bound(p: &ProjectionMatrix, r: &[f64], y_c: &[f64]) -> f64 {
    let z = p.encode(y_c);
    let prediction: f64 = r.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
    prediction + p.reconstruction_error(y_c)
}

/// The Hamming special case with raw `{-1,+1}` targets:
/// `(1/K) (||r - P y||^2 + ||(I - P^T P) y||^2)`.
pub fn hamming_bound(p: &ProjectionMatrix, r: &[f64], y: &[f64]) -> f64 {
    cost_bound(p, r, y) / y.len() as f64
}
