//! Capped matrix stochastic gradient (Capped MSG) online PCA, plus the
//! stochastic encoder that draws an `M x K` left-orthogonal projection from
//! the maintained `(Q, sigma)` factorization.
//!
//! The state represents `U = Q^T diag(sigma) Q` with `Q` holding `M + 1`
//! orthonormal rows of length `K`, `0 <= sigma <= 1` and `sum(sigma) = M`.
//! Each update takes a projected gradient step `U + eta * y y^T` back onto
//! that set while keeping `rank(U) <= M + 1`.

use crate::linalg::{
    self, axpy, dot, norm, orthonormalize_rows, project_capped_simplex, symmetric_eigen, tol,
    DenseMatrix, LinalgError,
};
use crate::rng::{substream, Purpose};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("code dimension M = {m} must satisfy 1 <= M < K = {k}")]
    InvalidDimension { k: usize, m: usize },
    #[error("label vector norm {norm} exceeds 1")]
    NormTooLarge { norm: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state invariant violated: {0}")]
    Invariant(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint decode failed: {0}")]
    Decode(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Learning-rate rule `t -> eta_t` (t starts at 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearningRate {
    /// `(2 / sqrt(t)) * (M / K)`.
    #[default]
    Default,
    /// `scale / sqrt(t)`.
    InvSqrt {
        scale: f64,
    },
    Constant {
        eta: f64,
    },
}

impl LearningRate {
    pub fn at(&self, t: u64, m: usize, k: usize) -> f64 {
        let t = t.max(1) as f64;
        match *self {
            LearningRate::Default => 2.0 / t.sqrt() * (m as f64 / k as f64),
            LearningRate::InvSqrt { scale } => scale / t.sqrt(),
            LearningRate::Constant { eta } => eta,
        }
    }
}

/// Left-orthogonal encoder `P` (`M x K`, `P P^T = I`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix(DenseMatrix);

impl ProjectionMatrix {
    pub fn new(p: DenseMatrix) -> Result<Self, PcaError> {
        let err = p.row_orthonormality_error();
        if err > tol::ORTHONORMAL {
            return Err(PcaError::Invariant(format!(
                "projection rows not orthonormal (deviation {err:e})"
            )));
        }
        Ok(ProjectionMatrix(p))
    }

    /// Wraps without checking orthonormality.
    pub fn new_unchecked(p: DenseMatrix) -> Self {
        ProjectionMatrix(p)
    }

    /// The first `m` rows of `I_k`.
    pub fn leading_identity(m: usize, k: usize) -> Self {
        let mut p = DenseMatrix::zeros(m, k);
        for i in 0..m {
            p[(i, i)] = 1.0;
        }
        ProjectionMatrix(p)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }

    pub fn code_dim(&self) -> usize {
        self.0.rows()
    }

    pub fn label_dim(&self) -> usize {
        self.0.cols()
    }

    /// `P y`
    pub fn encode(&self, y: &[f64]) -> Vec<f64> {
        self.0.mul_vec(y)
    }

    /// `P^T z`
    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.0.transpose_mul_vec(z)
    }

    /// `||(I - P^T P) y||^2`
    pub fn reconstruction_error(&self, y: &[f64]) -> f64 {
        let back = self.decode(&self.encode(y));
        y.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `P^T P` as a dense `K x K` matrix.
    pub fn outer(&self) -> DenseMatrix {
        self.0.transpose().matmul(&self.0)
    }

    pub fn negated(&self) -> Self {
        let mut m = self.0.clone();
        m.scale(-1.0);
        ProjectionMatrix(m)
    }
}

/// Distribution over which row of `Q` to drop: row `i` with probability
/// `1 - sigma[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerDistribution {
    pub removal_probabilities: Vec<f64>,
}

impl SamplerDistribution {
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.removal_probabilities.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left the cumulative sum a hair below 1
        last_positive
    }
}

/// `(Q, sigma)` factorization of the Capped MSG iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PcaCheckpoint", try_from = "PcaCheckpoint")]
pub struct CappedMsg {
    q: DenseMatrix,
    sigma: Vec<f64>,
    target_dim: usize,
    schedule: LearningRate,
    t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaCheckpoint {
    pub version: u32,
    pub q: DenseMatrix,
    pub sigma: Vec<f64>,
    pub target_dim: usize,
    pub schedule: LearningRate,
    pub t: u64,
}

impl CappedMsg {
    /// Seeded random orthonormal rows and the uniform feasible spectrum
    /// `sigma[i] = M / (M + 1)`.
    pub fn new(k: usize, m: usize, seed: u64, schedule: LearningRate) -> Result<Self, PcaError> {
        if m == 0 || m >= k {
            return Err(PcaError::InvalidDimension { k, m });
        }
        let mut rng = substream(seed, Purpose::Init);
        let q = loop {
            let data: Vec<f64> = (0..(m + 1) * k)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let mut q = DenseMatrix::from_vec(m + 1, k, data)?;
            if orthonormalize_rows(&mut q) == 0 {
                break q;
            }
        };
        let sigma = vec![m as f64 / (m + 1) as f64; m + 1];
        Ok(CappedMsg {
            q,
            sigma,
            target_dim: m,
            schedule,
            t: 0,
        })
    }

    /// Builds a state from explicit parts, checking every invariant.
    pub fn from_parts(
        q: DenseMatrix,
        sigma: Vec<f64>,
        schedule: LearningRate,
    ) -> Result<Self, PcaError> {
        let m = sigma.len().saturating_sub(1);
        if m == 0 || q.rows() != m + 1 || m >= q.cols() {
            return Err(PcaError::InvalidDimension { k: q.cols(), m });
        }
        let state = CappedMsg {
            q,
            sigma,
            target_dim: m,
            schedule,
            t: 0,
        };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn label_dim(&self) -> usize {
        self.q.cols()
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn schedule(&self) -> LearningRate {
        self.schedule
    }

    /// `U = Q^T diag(sigma) Q`.
    pub fn u_matrix(&self) -> DenseMatrix {
        let mut scaled = self.q.clone();
        for (i, s) in self.sigma.iter().enumerate() {
            scaled.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        self.q.transpose().matmul(&scaled)
    }

    pub fn check_invariants(&self) -> Result<(), PcaError> {
        let m = self.target_dim;
        if self.sigma.len() != m + 1 || self.q.rows() != m + 1 {
            return Err(PcaError::Invariant("shape".into()));
        }
        if let Some(s) = self.sigma.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(PcaError::Invariant(format!(
                "sigma entry {s} outside [0, 1]"
            )));
        }
        let trace: f64 = self.sigma.iter().sum();
        if (trace - m as f64).abs() > tol::TRACE {
            return Err(PcaError::Invariant(format!("trace {trace} != {m}")));
        }
        let err = self.q.row_orthonormality_error();
        if err > tol::ORTHONORMAL {
            return Err(PcaError::Invariant(format!(
                "Q rows not orthonormal (deviation {err:e})"
            )));
        }
        Ok(())
    }

    /// Advances the iteration counter and applies the scheduled step.
    pub fn update(&mut self, y: &[f64]) -> Result<(), PcaError> {
        let eta = self
            .schedule
            .at(self.t + 1, self.target_dim, self.label_dim());
        self.update_with_rate(y, eta)?;
        self.t += 1;
        Ok(())
    }

    /// One projected gradient step with an explicit learning rate.
    pub fn update_with_rate(&mut self, y: &[f64], eta: f64) -> Result<(), PcaError> {
        let k = self.label_dim();
        if y.len() != k {
            return Err(PcaError::DimensionMismatch {
                expected: k,
                got: y.len(),
            });
        }
        let y_norm = norm(y);
        if !y_norm.is_finite() || y_norm > 1.0 + tol::UNIT_NORM {
            return Err(PcaError::NormTooLarge { norm: y_norm });
        }
        if eta == 0.0 || y_norm == 0.0 {
            return Ok(());
        }

        let n = self.target_dim + 1;
        // split y into its coordinates in span(Q) and an orthogonal residual
        let mut coords = self.q.mul_vec(y);
        let mut residual = y.to_vec();
        for (i, c) in coords.iter().enumerate() {
            axpy(-c, self.q.row(i), &mut residual);
        }
        if norm(&residual) < tol::REORTHOGONALIZE * y_norm {
            let extra = self.q.mul_vec(&residual);
            for (i, c) in extra.iter().enumerate() {
                axpy(-c, self.q.row(i), &mut residual);
                coords[i] += c;
            }
        }
        let residual_norm = norm(&residual);
        let has_residual = residual_norm > tol::IN_SPAN * y_norm && n < k;

        let size = if has_residual { n + 1 } else { n };
        let mut b = coords;
        if has_residual {
            b.push(residual_norm);
        }
        let mut small = DenseMatrix::zeros(size, size);
        for i in 0..n {
            small[(i, i)] = self.sigma[i];
        }
        small.rank_one_update(eta, &b, &b);

        let eig = symmetric_eigen(&small)?;
        // the rank cap keeps only the top M + 1 eigenpairs
        let kept = &eig.eigenvalues[..n];
        let sigma = project_capped_simplex(kept, self.target_dim as f64)?;

        let mut q_new = DenseMatrix::zeros(n, k);
        for j in 0..n {
            let row = q_new.row_mut(j);
            for i in 0..n {
                let w = eig.eigenvectors[(i, j)];
                if w != 0.0 {
                    axpy(w, self.q.row(i), row);
                }
            }
            if has_residual {
                let w = eig.eigenvectors[(n, j)] / residual_norm;
                axpy(w, &residual, row);
            }
        }
        self.q = q_new;
        self.sigma = sigma;
        Ok(())
    }

    pub fn sampler(&self) -> SamplerDistribution {
        SamplerDistribution {
            removal_probabilities: self.sigma.iter().map(|s| 1.0 - s).collect(),
        }
    }

    /// `Q` with row `i` removed.
    pub fn projection_without(&self, i: usize) -> ProjectionMatrix {
        ProjectionMatrix(self.q.without_row(i))
    }

    /// Draws `P ~ Gamma`: drop row `i` of `Q` with probability `1 - sigma[i]`.
    pub fn sample_projection<R: Rng + ?Sized>(&self, rng: &mut R) -> ProjectionMatrix {
        let i = self.sampler().sample_index(rng);
        self.projection_without(i)
    }

    /// Every outcome of the sampler with its probability.
    pub fn enumerate_projections(&self) -> impl Iterator<Item = (f64, ProjectionMatrix)> + '_ {
        self.sigma
            .iter()
            .enumerate()
            .map(move |(i, s)| (1.0 - s, self.projection_without(i)))
    }

    /// `y^T (I - U) y`, the expected reconstruction error under the sampler.
    pub fn expected_reconstruction_error(&self, y: &[f64]) -> f64 {
        let coords = self.q.mul_vec(y);
        let captured: f64 = coords.iter().zip(&self.sigma).map(|(c, s)| s * c * c).sum();
        dot(y, y) - captured
    }

    pub fn checkpoint(&self) -> PcaCheckpoint {
        PcaCheckpoint {
            version: CHECKPOINT_VERSION,
            q: self.q.clone(),
            sigma: self.sigma.clone(),
            target_dim: self.target_dim,
            schedule: self.schedule,
            t: self.t,
        }
    }

    pub fn restore(cp: PcaCheckpoint) -> Result<Self, PcaError> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(PcaError::Version(cp.version));
        }
        if cp.sigma.len() != cp.target_dim + 1 {
            return Err(PcaError::Invariant("sigma length".into()));
        }
        let mut state = CappedMsg::from_parts(cp.q, cp.sigma, cp.schedule)?;
        state.t = cp.t;
        Ok(state)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PcaError> {
        let cp: PcaCheckpoint =
            serde_json::from_str(text).map_err(|e| PcaError::Decode(e.to_string()))?;
        Self::restore(cp)
    }
}

impl From<CappedMsg> for PcaCheckpoint {
    fn from(state: CappedMsg) -> Self {
        state.checkpoint()
    }
}

impl TryFrom<PcaCheckpoint> for CappedMsg {
    type Error = PcaError;

    fn try_from(cp: PcaCheckpoint) -> Result<Self, Self::Error> {
        CappedMsg::restore(cp)
    }
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn symmetric_spectral_norm(m: &DenseMatrix) -> Result<f64, LinalgError> {
    let e = linalg::symmetric_eigen(m)?;
    Ok(e.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}
