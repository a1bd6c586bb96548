//! The online multi-label loop: predict, pay the cost, update encoder and
//! regressor.
//!
//! Label vectors enter the encoder and regressors as `y / sqrt(K)` (or as
//! `C y` for the cost-sensitive variants) so that they have unit norm.
//! Predictions are decoded with `sign`, which is unaffected by the scaling.

use crate::costs::{check_condition, label_weights, CostError, CostFunction, CostKind, LabelOrder};
use crate::linalg::{dot, norm, spd_inverse, tol, DenseMatrix, LinalgError};
use crate::online_pca::{CappedMsg, LearningRate, PcaError, ProjectionMatrix};
use crate::regressor::{Engine, NaiveState, PbcState, PbtState, RegressorError, RidgeCore};
use crate::rng::{substream, Purpose, StreamRng};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Random trials used to probe a cost before a cost-sensitive run.
pub const CONDITION_PROBE_TRIALS: usize = 500;
/// Largest label count the probe draws vectors for.
pub const CONDITION_PROBE_MAX_K: usize = 12;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error("cost '{cost}' violates the label-weight condition, e.g. {witness}")]
    Condition { cost: String, witness: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label entries must be -1 or +1")]
    InvalidLabel,
    #[error("snapshot could not be decoded: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Regressor(#[from] RegressorError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DppPbc,
    DppPbt,
    DppNaive,
    CsDppPbc,
    CsDppPbt,
    OBr,
    ORand,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::DppPbc,
        Algorithm::DppPbt,
        Algorithm::DppNaive,
        Algorithm::CsDppPbc,
        Algorithm::CsDppPbt,
        Algorithm::OBr,
        Algorithm::ORand,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::DppPbc => "dpp-pbc",
            Algorithm::DppPbt => "dpp-pbt",
            Algorithm::DppNaive => "dpp-naive",
            Algorithm::CsDppPbc => "cs-dpp-pbc",
            Algorithm::CsDppPbt => "cs-dpp-pbt",
            Algorithm::OBr => "o-br",
            Algorithm::ORand => "o-rand",
        }
    }

    pub fn is_cost_sensitive(self) -> bool {
        matches!(self, Algorithm::CsDppPbc | Algorithm::CsDppPbt)
    }

    /// Whether `M` is meaningful for this algorithm.
    pub fn uses_code_dim(self) -> bool {
        self != Algorithm::OBr
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| LearnerError::Config(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LabelOrderChoice {
    Native,
    Random { seed: u64 },
}

impl LabelOrderChoice {
    pub fn resolve(self, k: usize) -> LabelOrder {
        match self {
            LabelOrderChoice::Native => LabelOrder::native(k),
            LabelOrderChoice::Random { seed } => LabelOrder::random(k, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// `M`; ignored by O-BR.
    pub code_dim: usize,
    pub engine: Engine,
    pub eta: LearningRate,
    /// The cost every prediction is charged with, and the cost the
    /// cost-sensitive variants optimize.
    pub cost: CostKind,
    pub label_order: LabelOrderChoice,
    pub seed: u64,
    /// Run cost-sensitive variants even if the cost fails the weight probe.
    pub skip_condition_check: bool,
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, code_dim: usize, seed: u64) -> Self {
        LearnerConfig {
            algorithm,
            code_dim,
            engine: Engine::default(),
            eta: LearningRate::Default,
            cost: CostKind::Hamming,
            label_order: LabelOrderChoice::Native,
            seed,
            skip_condition_check: false,
        }
    }

    pub fn with_cost(mut self, cost: CostKind) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }
}

/// The terms of the per-step cost bound
/// `cost <= ||r - P t||^2 + ||(I - P^T P) t||^2` for the step's target `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundAudit {
    pub cost: f64,
    pub prediction_error: f64,
    pub reconstruction_error: f64,
}

impl BoundAudit {
    pub fn bound(&self) -> f64 {
        self.prediction_error + self.reconstruction_error
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.cost <= self.bound() + slack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    /// 1-based iteration.
    pub t: u64,
    pub y_hat: Vec<i8>,
    pub incurred_cost: f64,
    #[serde(skip)]
    pub elapsed: Duration,
    /// Absent for O-RAND, whose decoder is not an orthonormal transpose.
    pub audit: Option<BoundAudit>,
}

/// State of a PBC learner just before it sees `(x_t, y_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSnapshot {
    pub t: u64,
    pub q: DenseMatrix,
    pub sigma: Vec<f64>,
    pub h: DenseMatrix,
    pub x: Vec<f64>,
    /// The scaled label vector the learner trained on.
    pub y: Vec<f64>,
}

/// `sign` with `sign(0) = +1`.
pub fn sign_labels(v: &[f64]) -> Vec<i8> {
    v.iter().map(|&s| if s >= 0.0 { 1 } else { -1 }).collect()
}

/// `sign(P^T code + o)`.
pub fn decode_with_offset(
    p: &ProjectionMatrix,
    code: &[f64],
    offset: &[f64],
) -> Result<Vec<i8>, LearnerError> {
    if code.len() != p.code_dim() {
        return Err(LearnerError::DimensionMismatch {
            expected: p.code_dim(),
            got: code.len(),
        });
    }
    if offset.len() != p.label_dim() {
        return Err(LearnerError::DimensionMismatch {
            expected: p.label_dim(),
            got: offset.len(),
        });
    }
    let mut scores = p.decode(code);
    scores.iter_mut().zip(offset).for_each(|(s, o)| *s += o);
    Ok(sign_labels(&scores))
}

/// `sign(P^T code)`, the reference point fixed at the origin.
pub fn decode(p: &ProjectionMatrix, code: &[f64]) -> Result<Vec<i8>, LearnerError> {
    if code.len() != p.code_dim() {
        return Err(LearnerError::DimensionMismatch {
            expected: p.code_dim(),
            got: code.len(),
        });
    }
    Ok(sign_labels(&p.decode(code)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Encoder {
    Msg {
        msg: CappedMsg,
    },
    /// `M = K`: the only feasible `U` is `I`, so the encoder never moves.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum CodeRegressor {
    Pbc { state: PbcState },
    Pbt { state: PbtState },
    Naive { state: NaiveState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Model {
    Lsdr {
        encoder: Encoder,
        p: ProjectionMatrix,
        regressor: CodeRegressor,
    },
    BinaryRelevance {
        state: PbcState,
    },
    RandomProjection {
        /// `P_R^+ = P_R^T (P_R P_R^T)^{-1}`, `K x M`.
        pinv: DenseMatrix,
        p_r: DenseMatrix,
        state: NaiveState,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    config: LearnerConfig,
    d: usize,
    k: usize,
    model: Model,
    sampler: StreamRng,
    order: LabelOrder,
    inv_sqrt_k: f64,
    t: u64,
    #[serde(skip)]
    regret_stride: Option<u64>,
    #[serde(skip)]
    regret_log: Vec<RegretSnapshot>,
}

impl Learner {
    pub fn new(config: LearnerConfig, d: usize, k: usize) -> Result<Self, LearnerError> {
        if k == 0 {
            return Err(LearnerError::Config(
                "label dimension must be positive".into(),
            ));
        }
        let m = config.code_dim;
        if config.algorithm.uses_code_dim() && !(1..=k).contains(&m) {
            return Err(LearnerError::Config(format!(
                "code dimension {m} outside 1..={k}"
            )));
        }
        if config.algorithm.is_cost_sensitive() && !config.skip_condition_check {
            let mut rng = substream(config.seed, Purpose::Verify);
            let report = check_condition(
                &config.cost,
                CONDITION_PROBE_TRIALS,
                k.min(CONDITION_PROBE_MAX_K),
                &mut rng,
            );
            if let Some(w) = report.witnesses.first() {
                return Err(LearnerError::Condition {
                    cost: config.cost.to_string(),
                    witness: format!(
                        "y={:?} y_hat={:?} position={} difference={:e}",
                        w.y, w.y_hat, w.position, w.difference
                    ),
                });
            }
        }

        let mut sampler = substream(config.seed, Purpose::Sampler);
        let model = match config.algorithm {
            Algorithm::OBr => Model::BinaryRelevance {
                state: PbcState::new(d, k, config.engine)?,
            },
            Algorithm::ORand => {
                let mut rng = substream(config.seed, Purpose::RandomEncoder);
                let p_r = loop {
                    let data = (0..m * k).map(|_| rng.sample(StandardNormal)).collect();
                    let p_r = DenseMatrix::from_vec(m, k, data)?;
                    if let Ok(inv) = spd_inverse(&p_r.matmul_transpose(&p_r)) {
                        break (p_r, inv);
                    }
                };
                let (p_r, gram_inv) = p_r;
                let pinv = p_r.transpose().matmul(&gram_inv);
                Model::RandomProjection {
                    pinv,
                    p_r,
                    state: NaiveState::new(d, m, config.engine)?,
                }
            }
            _ => {
                let (encoder, p) = if m == k {
                    (Encoder::Fixed, ProjectionMatrix::leading_identity(k, k))
                } else {
                    let msg = CappedMsg::new(k, m, config.seed, config.eta)?;
                    let p = msg.sample_projection(&mut sampler);
                    (Encoder::Msg { msg }, p)
                };
                let regressor = match config.algorithm {
                    Algorithm::DppPbc | Algorithm::CsDppPbc => CodeRegressor::Pbc {
                        state: PbcState::new(d, k, config.engine)?,
                    },
                    Algorithm::DppPbt | Algorithm::CsDppPbt => CodeRegressor::Pbt {
                        state: PbtState::new(d, p.clone(), config.engine)?,
                    },
                    _ => CodeRegressor::Naive {
                        state: NaiveState::new(d, m, config.engine)?,
                    },
                };
                Model::Lsdr {
                    encoder,
                    p,
                    regressor,
                }
            }
        };

        Ok(Learner {
            order: config.label_order.resolve(k),
            config,
            d,
            k,
            model,
            sampler,
            inv_sqrt_k: 1.0 / (k as f64).sqrt(),
            t: 0,
            regret_stride: None,
            regret_log: Vec::new(),
        })
    }

    /// Records a [`RegretSnapshot`] every `stride` steps (PBC learners with a
    /// moving encoder only).
    pub fn with_regret_log(mut self, stride: u64) -> Self {
        self.regret_stride = Some(stride.max(1));
        self
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn label_dim(&self) -> usize {
        self.k
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn label_order(&self) -> &LabelOrder {
        &self.order
    }

    /// The encoder the next prediction will use, if the model has one.
    pub fn current_projection(&self) -> Option<&ProjectionMatrix> {
        match &self.model {
            Model::Lsdr { p, .. } => Some(p),
            _ => None,
        }
    }

    pub fn online_pca(&self) -> Option<&CappedMsg> {
        match &self.model {
            Model::Lsdr {
                encoder: Encoder::Msg { msg },
                ..
            } => Some(msg),
            _ => None,
        }
    }

    /// The full `d x K` ridge solution, for PBC and O-BR.
    pub fn h(&self) -> Option<&DenseMatrix> {
        match &self.model {
            Model::Lsdr {
                regressor: CodeRegressor::Pbc { state },
                ..
            }
            | Model::BinaryRelevance { state } => Some(state.h()),
            _ => None,
        }
    }

    pub fn regret_log(&self) -> &[RegretSnapshot] {
        &self.regret_log
    }

    pub fn take_regret_log(&mut self) -> Vec<RegretSnapshot> {
        std::mem::take(&mut self.regret_log)
    }

    /// The code-space prediction and its decoded label vector.
    fn predict_code(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<i8>), LearnerError> {
        match &self.model {
            Model::Lsdr { p, regressor, .. } => {
                let r = match regressor {
                    CodeRegressor::Pbc { state } => state.predict(x, p)?,
                    CodeRegressor::Pbt { state } => state.predict(x)?,
                    CodeRegressor::Naive { state } => state.predict(x)?,
                };
                let y_hat = decode(p, &r)?;
                Ok((r, y_hat))
            }
            Model::BinaryRelevance { state } => {
                let r = state.predict_full(x)?;
                let y_hat = sign_labels(&r);
                Ok((r, y_hat))
            }
            Model::RandomProjection { pinv, state, .. } => {
                let r = state.predict(x)?;
                let y_hat = sign_labels(&pinv.mul_vec(&r));
                Ok((r, y_hat))
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<i8>, LearnerError> {
        self.check_features(x)?;
        Ok(self.predict_code(x)?.1)
    }

    fn check_features(&self, x: &[f64]) -> Result<(), LearnerError> {
        if x.len() != self.d {
            return Err(LearnerError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Predicts for `x`, reveals `y`, and updates every component.
    pub fn step(&mut self, x: &[f64], y: &[i8]) -> Result<PredictionRecord, LearnerError> {
        let start = Instant::now();
        self.check_features(x)?;
        if y.len() != self.k {
            return Err(LearnerError::DimensionMismatch {
                expected: self.k,
                got: y.len(),
            });
        }
        if y.iter().any(|&l| l != 1 && l != -1) {
            return Err(LearnerError::InvalidLabel);
        }

        let (r, y_hat) = self.predict_code(x)?;
        let incurred_cost = self.config.cost.evaluate(y, &y_hat);
        let target: Vec<f64> = if self.config.algorithm.is_cost_sensitive() {
            label_weights(&self.config.cost, y, &y_hat, &self.order)?.apply(y)
        } else {
            y.iter().map(|&l| f64::from(l) * self.inv_sqrt_k).collect()
        };
        let t = self.t + 1;

        let audit = match &self.model {
            Model::Lsdr { p, .. } => {
                let z = p.encode(&target);
                Some(BoundAudit {
                    cost: incurred_cost,
                    prediction_error: squared_distance(&r, &z),
                    reconstruction_error: p.reconstruction_error(&target),
                })
            }
            Model::BinaryRelevance { .. } => Some(BoundAudit {
                cost: incurred_cost,
                prediction_error: squared_distance(&r, &target),
                reconstruction_error: 0.0,
            }),
            Model::RandomProjection { .. } => None,
        };

        if let (
            Some(stride),
            Model::Lsdr {
                encoder: Encoder::Msg { msg },
                regressor: CodeRegressor::Pbc { state },
                ..
            },
        ) = (self.regret_stride, &self.model)
        {
            if (t - 1).is_multiple_of(stride) {
                self.regret_log.push(RegretSnapshot {
                    t,
                    q: msg.q().clone(),
                    sigma: msg.sigma().to_vec(),
                    h: state.h().clone(),
                    x: x.to_vec(),
                    y: target.clone(),
                });
            }
        }

        match &mut self.model {
            Model::Lsdr {
                encoder,
                p,
                regressor,
            } => {
                let p_next = match encoder {
                    Encoder::Msg { msg } => {
                        msg.update(&unit_clipped(&target))?;
                        msg.sample_projection(&mut self.sampler)
                    }
                    Encoder::Fixed => p.clone(),
                };
                match regressor {
                    CodeRegressor::Pbc { state } => state.update(x, &target)?,
                    CodeRegressor::Pbt { state } => state.update(x, &target, p_next.clone())?,
                    CodeRegressor::Naive { state } => state.update(x, &p.encode(&target))?,
                }
                *p = p_next;
            }
            Model::BinaryRelevance { state } => state.update(x, &target)?,
            Model::RandomProjection { p_r, state, .. } => {
                state.update(x, &p_r.mul_vec(&target))?;
            }
        }
        self.t = t;

        Ok(PredictionRecord {
            t,
            y_hat,
            incurred_cost,
            elapsed: start.elapsed(),
            audit,
        })
    }

    /// Serializes the complete state, including the sampler's generator.
    /// The regret log is not part of a snapshot.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("learner state serializes")
    }

    pub fn restore(snapshot: &str) -> Result<Self, LearnerError> {
        let mut learner: Learner =
            serde_json::from_str(snapshot).map_err(|e| LearnerError::Snapshot(e.to_string()))?;
        learner.check_shapes()?;
        learner.inv_sqrt_k = 1.0 / (learner.k as f64).sqrt();
        Ok(learner)
    }

    // A snapshot is untrusted input: every stored matrix must agree with
    // the declared dimensions before any arithmetic touches it.
    fn check_shapes(&self) -> Result<(), LearnerError> {
        let (d, k) = (self.d, self.k);
        let m = self.config.code_dim;
        let bad = |what: &str| Err(LearnerError::Snapshot(format!("inconsistent {what}")));
        if k == 0 || self.order.len() != k {
            return bad("label order");
        }
        if self.config.algorithm.uses_code_dim() && !(1..=k).contains(&m) {
            return bad("code dimension");
        }
        let ridge_ok = |r: Option<&RidgeCore>| r.is_none_or(|r| r.is_consistent(d));
        let ok = match &self.model {
            Model::BinaryRelevance { state } => {
                self.config.algorithm == Algorithm::OBr
                    && state.h().shape() == (d, k)
                    && ridge_ok(state.ridge())
            }
            Model::RandomProjection { pinv, p_r, state } => {
                self.config.algorithm == Algorithm::ORand
                    && pinv.shape() == (k, m)
                    && p_r.shape() == (m, k)
                    && state.w().shape() == (d, m)
                    && ridge_ok(state.ridge())
            }
            Model::Lsdr {
                encoder,
                p,
                regressor,
            } => {
                let encoder_ok = match encoder {
                    Encoder::Msg { msg } => msg.label_dim() == k && msg.target_dim() == m,
                    Encoder::Fixed => m == k,
                };
                let regressor_ok = match (self.config.algorithm, regressor) {
                    (Algorithm::DppPbc | Algorithm::CsDppPbc, CodeRegressor::Pbc { state }) => {
                        state.h().shape() == (d, k) && ridge_ok(state.ridge())
                    }
                    (Algorithm::DppPbt | Algorithm::CsDppPbt, CodeRegressor::Pbt { state }) => {
                        state.w().shape() == (d, m)
                            && state.basis().matrix().shape() == (m, k)
                            && ridge_ok(state.ridge())
                    }
                    (Algorithm::DppNaive, CodeRegressor::Naive { state }) => {
                        state.w().shape() == (d, m) && ridge_ok(state.ridge())
                    }
                    _ => false,
                };
                encoder_ok && regressor_ok && p.matrix().shape() == (m, k)
            }
        };
        if ok {
            Ok(())
        } else {
            bad("model state")
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Weighted label vectors can be longer than 1; the online PCA step
/// requires `||y|| <= 1`, so those are rescaled onto the unit sphere.
fn unit_clipped(target: &[f64]) -> Vec<f64> {
    let n = norm(target);
    if n > 1.0 + tol::UNIT_NORM {
        target.iter().map(|v| v / n).collect()
    } else {
        target.to_vec()
    }
}

/// `||H^T x - y||^2` for one snapshot.
pub fn residual_norm_sq(snapshot: &RegretSnapshot) -> f64 {
    let pred = snapshot.h.transpose_mul_vec(&snapshot.x);
    squared_distance(&pred, &snapshot.y)
}

/// `x^T x` without allocation, for assumption checks.
pub fn squared_norm(v: &[f64]) -> f64 {
    dot(v, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_stream(n: usize, d: usize, k: usize, seed: u64) -> Vec<(Vec<f64>, Vec<i8>)> {
        let mut rng = StreamRng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.3..0.3)).collect();
                let y: Vec<i8> = (0..k)
                    .map(|j| {
                        if x[j % d] + rng.random_range(-0.1..0.1) > 0.0 {
                            1
                        } else {
                            -1
                        }
                    })
                    .collect();
                (x, y)
            })
            .collect()
    }

    #[test]
    fn decode_examples() {
        let p = ProjectionMatrix::leading_identity(2, 3);
        assert_eq!(decode(&p, &[0.0, 0.0]).unwrap(), vec![1, 1, 1]);
        assert_eq!(decode(&p, &[-2.0, 3.0]).unwrap(), vec![-1, 1, 1]);
        assert_eq!(
            decode(&p, &[-2.0 * 7.5, 3.0 * 7.5]).unwrap(),
            vec![-1, 1, 1]
        );
        assert_eq!(
            decode_with_offset(&p, &[-2.0, 3.0], &[0.0, -4.0, -1.0]).unwrap(),
            vec![-1, -1, -1]
        );
        assert!(decode(&p, &[1.0]).is_err());
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("dpp".parse::<Algorithm>().is_err());
    }

    #[test]
    fn rejects_bad_code_dim_and_inputs() {
        assert!(Learner::new(LearnerConfig::new(Algorithm::DppPbt, 0, 1), 3, 4).is_err());
        assert!(Learner::new(LearnerConfig::new(Algorithm::DppPbt, 5, 1), 3, 4).is_err());
        assert!(Learner::new(LearnerConfig::new(Algorithm::OBr, 0, 1), 3, 4).is_ok());
        let mut l = Learner::new(LearnerConfig::new(Algorithm::DppPbc, 2, 1), 3, 4).unwrap();
        assert!(matches!(
            l.step(&[0.0; 2], &[1; 4]),
            Err(LearnerError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            l.step(&[0.0; 3], &[1, 0, 1, 1]),
            Err(LearnerError::InvalidLabel)
        ));
    }

    #[test]
    fn cold_start_predicts_all_positive() {
        for a in Algorithm::ALL {
            let mut l = Learner::new(LearnerConfig::new(a, 2, 3), 4, 5).unwrap();
            let rec = l.step(&[0.1, 0.2, 0.0, -0.1], &[1, -1, 1, -1, -1]).unwrap();
            assert_eq!(rec.y_hat, vec![1; 5], "{a}");
            assert_eq!(rec.t, 1);
        }
    }

    #[test]
    fn full_dimension_has_no_reconstruction_error() {
        let mut l = Learner::new(LearnerConfig::new(Algorithm::DppPbt, 4, 2), 3, 4).unwrap();
        for (x, y) in random_stream(50, 3, 4, 9) {
            let audit = l.step(&x, &y).unwrap().audit.unwrap();
            assert!(audit.reconstruction_error < 1e-24);
        }
    }

    #[test]
    fn replay_is_deterministic() {
        for a in Algorithm::ALL {
            let cfg = LearnerConfig::new(a, 3, 42).with_cost(CostKind::F1);
            let run = || {
                let mut l = Learner::new(cfg.clone(), 6, 8).unwrap();
                random_stream(200, 6, 8, 4)
                    .iter()
                    .map(|(x, y)| l.step(x, y).unwrap())
                    .map(|r| (r.y_hat, r.incurred_cost.to_bits()))
                    .collect::<Vec<_>>()
            };
            assert_eq!(run(), run(), "{a}");
        }
    }

    #[test]
    fn per_step_bound_holds() {
        for a in Algorithm::ALL {
            for cost in CostKind::ALL {
                let cfg = LearnerConfig::new(a, 3, 5).with_cost(cost);
                let mut l = Learner::new(cfg, 6, 8).unwrap();
                for (x, y) in random_stream(150, 6, 8, 12) {
                    let rec = l.step(&x, &y).unwrap();
                    assert!((0.0..=1.0).contains(&rec.incurred_cost));
                    if let Some(audit) = rec.audit {
                        // the bound is for Hamming unless the learner is cost-sensitive
                        if a.is_cost_sensitive() || cost == CostKind::Hamming {
                            assert!(audit.holds(1e-9), "{a} {cost} {audit:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn hamming_cs_dpp_matches_dpp_exactly() {
        for (cs, plain) in [
            (Algorithm::CsDppPbt, Algorithm::DppPbt),
            (Algorithm::CsDppPbc, Algorithm::DppPbc),
        ] {
            let mut a = Learner::new(LearnerConfig::new(cs, 3, 8), 6, 8).unwrap();
            let mut b = Learner::new(LearnerConfig::new(plain, 3, 8), 6, 8).unwrap();
            for (x, y) in random_stream(300, 6, 8, 2) {
                assert_eq!(a.step(&x, &y).unwrap().y_hat, b.step(&x, &y).unwrap().y_hat);
            }
        }
    }

    #[test]
    fn binary_relevance_equals_full_dimension_pbc() {
        let mut br = Learner::new(LearnerConfig::new(Algorithm::OBr, 0, 1), 5, 4).unwrap();
        let mut pbc = Learner::new(LearnerConfig::new(Algorithm::DppPbc, 4, 1), 5, 4).unwrap();
        for (x, y) in random_stream(200, 5, 4, 6) {
            assert_eq!(
                br.step(&x, &y).unwrap().y_hat,
                pbc.step(&x, &y).unwrap().y_hat
            );
        }
    }

    #[test]
    fn snapshot_restore_continues_identically() {
        let cfg = LearnerConfig::new(Algorithm::CsDppPbt, 3, 17).with_cost(CostKind::Accuracy);
        let stream = random_stream(120, 6, 8, 3);
        let mut a = Learner::new(cfg, 6, 8).unwrap();
        for (x, y) in &stream[..60] {
            a.step(x, y).unwrap();
        }
        let mut b = Learner::restore(&a.snapshot()).unwrap();
        for (x, y) in &stream[60..] {
            assert_eq!(a.step(x, y).unwrap().y_hat, b.step(x, y).unwrap().y_hat);
        }
        assert!(Learner::restore("{}").is_err());
    }

    #[test]
    fn restore_rejects_mismatched_dimensions() {
        for a in Algorithm::ALL {
            let l = Learner::new(LearnerConfig::new(a, 2, 5), 3, 4).unwrap();
            let mut v: serde_json::Value = serde_json::from_str(&l.snapshot()).unwrap();
            assert!(Learner::restore(&v.to_string()).is_ok(), "{a}");
            v["d"] = 4.into();
            assert!(
                matches!(
                    Learner::restore(&v.to_string()),
                    Err(LearnerError::Snapshot(_))
                ),
                "{a}"
            );
        }
    }

    #[test]
    fn regret_log_stride() {
        let mut l = Learner::new(LearnerConfig::new(Algorithm::DppPbc, 2, 1), 3, 5)
            .unwrap()
            .with_regret_log(10);
        for (x, y) in random_stream(35, 3, 5, 1) {
            l.step(&x, &y).unwrap();
        }
        let ts: Vec<u64> = l.regret_log().iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![1, 11, 21, 31]);
        assert!(residual_norm_sq(&l.regret_log()[0]) > 0.0);
    }

    #[test]
    fn random_projection_pseudo_inverse() {
        let l = Learner::new(LearnerConfig::new(Algorithm::ORand, 3, 2), 4, 6).unwrap();
        let Model::RandomProjection { pinv, p_r, .. } = &l.model else {
            unreachable!()
        };
        let prod = p_r.matmul(pinv);
        assert!(prod.max_abs_diff(&DenseMatrix::identity(3)) < 1e-10);
    }
}
