//! Running costs, the offline PLST reference and the empirical regret of a
//! PBC learner against it.

use crate::learners::{residual_norm_sq, RegretSnapshot};
use crate::linalg::{dot, spd_inverse, symmetric_eigen, DenseMatrix, LinalgError};
use crate::online_pca::{symmetric_spectral_norm, ProjectionMatrix};
use crate::stream::Instance;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Ridge used for the otherwise unregularized offline regression.
pub const OFFLINE_RIDGE: f64 = 1e-9;
/// Slack on the norm assumptions.
pub const ASSUMPTION_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cost {0} outside [0, 1]")]
    CostOutOfRange(f64),
    #[error("empty stream")]
    EmptyStream,
    #[error("no regret snapshots were recorded")]
    MissingSnapshots,
    #[error("code dimension {m} outside 1..={k}")]
    InvalidCodeDim { m: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Per-iteration costs and their running average.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTrace {
    costs: Vec<f64>,
    averages: Vec<f64>,
    sum: f64,
}

impl CostTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn track(&mut self, cost: f64) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&cost) {
            return Err(EvalError::CostOutOfRange(cost));
        }
        self.costs.push(cost);
        self.sum += cost;
        self.averages.push(self.sum / self.costs.len() as f64);
        Ok(())
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn averages(&self) -> &[f64] {
        &self.averages
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn final_average(&self) -> Option<f64> {
        self.averages.last().copied()
    }
}

/// Mean and standard error across repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStdErr {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanStdErr {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return MeanStdErr {
                mean: f64::NAN,
                std_err: f64::NAN,
                n,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_err = if n < 2 {
            0.0
        } else {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        MeanStdErr { mean, std_err, n }
    }
}

/// The batch solution `(P*, H*)` on a whole stream, with `W# = H* P*^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineReference {
    pub p_star: ProjectionMatrix,
    pub h_star: DenseMatrix,
    pub w_sharp: DenseMatrix,
    /// Eigenvalues of `sum_t y y^T`, descending.
    pub eigenvalues: Vec<f64>,
}

impl OfflineReference {
    /// `P*^T P*`
    pub fn projector(&self) -> DenseMatrix {
        self.p_star.outer()
    }

    /// `||W#^T x - P* y||^2 + ||(I - P*^T P*) y||^2`
    pub fn loss(&self, x: &[f64], y: &[f64]) -> f64 {
        let pred = self.w_sharp.transpose_mul_vec(x);
        let z = self.p_star.encode(y);
        let prediction: f64 = pred.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
        prediction + self.p_star.reconstruction_error(y)
    }
}

/// Batch PLST on pre-scaled targets.
pub fn offline_reference(
    xs: &[&[f64]],
    ys: &[&[f64]],
    m: usize,
    lambda: f64,
) -> Result<OfflineReference, EvalError> {
    let (Some(x0), Some(y0)) = (xs.first(), ys.first()) else {
        return Err(EvalError::EmptyStream);
    };
    if xs.len() != ys.len() {
        return Err(EvalError::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let (d, k) = (x0.len(), y0.len());
    if !(1..=k).contains(&m) {
        return Err(EvalError::InvalidCodeDim { m, k });
    }

    let mut scatter = DenseMatrix::zeros(k, k);
    let mut gram = DenseMatrix::identity(d);
    gram.scale(lambda);
    let mut cross = DenseMatrix::zeros(d, k);
    for (x, y) in xs.iter().zip(ys) {
        if x.len() != d || y.len() != k {
            return Err(EvalError::DimensionMismatch {
                expected: d + k,
                got: x.len() + y.len(),
            });
        }
        scatter.rank_one_update(1.0, y, y);
        gram.rank_one_update(1.0, x, x);
        cross.rank_one_update(1.0, x, y);
    }

    let eig = symmetric_eigen(&scatter)?;
    let rows: Vec<Vec<f64>> = (0..m).map(|j| eig.eigenvectors.column(j)).collect();
    let p_star = ProjectionMatrix::new_unchecked(DenseMatrix::from_rows(&rows));
    let h_star = spd_inverse(&gram)?.matmul(&cross);
    let w_sharp = h_star.matmul_transpose(p_star.matrix());
    Ok(OfflineReference {
        p_star,
        h_star,
        w_sharp,
        eigenvalues: eig.eigenvalues,
    })
}

/// Batch PLST on a labelled stream, scaling labels by `1 / sqrt(K)` as the
/// learners do.
pub fn offline_plst(stream: &[Instance], m: usize) -> Result<OfflineReference, EvalError> {
    let first = stream.first().ok_or(EvalError::EmptyStream)?;
    let scale = 1.0 / (first.labels.len() as f64).sqrt();
    let ys: Vec<Vec<f64>> = stream
        .iter()
        .map(|i| i.labels.iter().map(|&l| f64::from(l) * scale).collect())
        .collect();
    let xs: Vec<&[f64]> = stream.iter().map(|i| i.features.as_slice()).collect();
    let ys: Vec<&[f64]> = ys.iter().map(Vec::as_slice).collect();
    offline_reference(&xs, &ys, m, OFFLINE_RIDGE)
}

/// The reference on exactly the data a regret log saw.
pub fn reference_from_log(log: &[RegretSnapshot], m: usize) -> Result<OfflineReference, EvalError> {
    let xs: Vec<&[f64]> = log.iter().map(|s| s.x.as_slice()).collect();
    let ys: Vec<&[f64]> = log.iter().map(|s| s.y.as_slice()).collect();
    offline_reference(&xs, &ys, m, OFFLINE_RIDGE)
}

/// Whether the norm assumptions of the regret bound held on the logged data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub max_x_norm: f64,
    pub max_y_norm: f64,
    pub x_bounded: bool,
    pub y_bounded: bool,
    /// The residual bound is met by construction of `epsilon_hat`.
    pub residual_bounded: bool,
}

impl AssumptionCheck {
    pub fn passed(&self) -> bool {
        self.x_bounded && self.y_bounded && self.residual_bounded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    /// Iterations of the logged snapshots.
    pub t: Vec<u64>,
    /// Sum of per-step expected regret over the logged steps.
    pub cumulative: f64,
    /// Running mean of the per-step regret over the logged steps.
    pub average_series: Vec<f64>,
    /// `||U_t - P*^T P*||_2`
    pub delta_series: Vec<f64>,
    /// Reconstruction part of the cumulative regret.
    pub msg_part: f64,
    /// Prediction part of the cumulative regret.
    pub ridge_part: f64,
    /// The cumulative regret summed over every sampler outcome.
    pub cumulative_enumerated: f64,
    /// `max_t ||H_t^T x_t - y_t||^2`
    pub epsilon_hat: f64,
    pub assumptions: AssumptionCheck,
}

impl RegretReport {
    pub fn average(&self) -> f64 {
        self.average_series.last().copied().unwrap_or(0.0)
    }

    pub fn delta_sum(&self) -> f64 {
        self.delta_series.iter().sum()
    }

    pub fn route_gap(&self) -> f64 {
        (self.cumulative - self.cumulative_enumerated).abs()
    }
}

fn u_matrix(s: &RegretSnapshot) -> DenseMatrix {
    let mut scaled = s.q.clone();
    for (i, sig) in s.sigma.iter().enumerate() {
        scaled.row_mut(i).iter_mut().for_each(|v| *v *= sig);
    }
    s.q.transpose().matmul(&scaled)
}

fn quad(a: &DenseMatrix, v: &[f64]) -> f64 {
    dot(v, &a.mul_vec(v))
}

/// Expected regret of the logged learner against `reference`.
///
/// With `e = H^T x - y` the learner's expected online error is
/// `e^T U e + y^T (I - U) y`; it is computed both from `U` directly and by
/// summing over the sampler's outcomes.
pub fn expected_regret(
    log: &[RegretSnapshot],
    reference: &OfflineReference,
) -> Result<RegretReport, EvalError> {
    if log.is_empty() {
        return Err(EvalError::MissingSnapshots);
    }
    let pi_star = reference.projector();
    let mut report = RegretReport {
        t: Vec::with_capacity(log.len()),
        cumulative: 0.0,
        average_series: Vec::with_capacity(log.len()),
        delta_series: Vec::with_capacity(log.len()),
        msg_part: 0.0,
        ridge_part: 0.0,
        cumulative_enumerated: 0.0,
        epsilon_hat: 0.0,
        assumptions: AssumptionCheck {
            max_x_norm: 0.0,
            max_y_norm: 0.0,
            x_bounded: true,
            y_bounded: true,
            residual_bounded: true,
        },
    };

    for (i, s) in log.iter().enumerate() {
        let k = s.y.len();
        if s.q.cols() != k || pi_star.rows() != k {
            return Err(EvalError::DimensionMismatch {
                expected: k,
                got: s.q.cols(),
            });
        }
        let u = u_matrix(s);
        let e = s.h.transpose_mul_vec(&s.x);
        let e: Vec<f64> = e.iter().zip(&s.y).map(|(a, b)| a - b).collect();
        let e_star = reference.h_star.transpose_mul_vec(&s.x);
        let e_star: Vec<f64> = e_star.iter().zip(&s.y).map(|(a, b)| a - b).collect();
        let yy = dot(&s.y, &s.y);

        let ridge = quad(&u, &e) - quad(&pi_star, &e_star);
        let msg = (yy - quad(&u, &s.y)) - (yy - quad(&pi_star, &s.y));
        report.ridge_part += ridge;
        report.msg_part += msg;
        report.cumulative += ridge + msg;

        let reference_loss = reference.loss(&s.x, &s.y);
        let mut learner_loss = 0.0;
        for (j, sig) in s.sigma.iter().enumerate() {
            let prob = 1.0 - sig;
            if prob == 0.0 {
                continue;
            }
            let p = ProjectionMatrix::new_unchecked(s.q.without_row(j));
            let pe = p.encode(&e);
            learner_loss += prob * (dot(&pe, &pe) + p.reconstruction_error(&s.y));
        }
        report.cumulative_enumerated += learner_loss - reference_loss;

        report.t.push(s.t);
        report
            .average_series
            .push(report.cumulative / (i + 1) as f64);
        report
            .delta_series
            .push(symmetric_spectral_norm(&u.sub(&pi_star))?);
        report.epsilon_hat = report.epsilon_hat.max(residual_norm_sq(s));

        let xn = dot(&s.x, &s.x).sqrt();
        let yn = yy.sqrt();
        let a = &mut report.assumptions;
        a.max_x_norm = a.max_x_norm.max(xn);
        a.max_y_norm = a.max_y_norm.max(yn);
        a.x_bounded &= xn <= 1.0 + ASSUMPTION_SLACK;
        a.y_bounded &= yn <= 1.0 + ASSUMPTION_SLACK;
    }
    Ok(report)
}

/// `(1 + eps) sum_t Delta_t + (M / 2) ||H*||_F^2 + 2 eps M d log(1 + T / d)`
pub fn regret_bound(
    delta_sum: f64,
    epsilon_hat: f64,
    h_star: &DenseMatrix,
    m: usize,
    d: usize,
    t: usize,
) -> f64 {
    let m = m as f64;
    let d = d as f64;
    let h = h_star.frobenius_norm();
    (1.0 + epsilon_hat) * delta_sum
        + 0.5 * m * h * h
        + 2.0 * epsilon_hat * m * d * (1.0 + t as f64 / d).ln()
}

/// `# key: value` lines followed by `t,avg_cost` rows.
pub fn trace_csv(header: &[(String, String)], trace: &CostTrace) -> String {
    let mut out = header_block(header);
    out.push_str("t,avg_cost\n");
    for (i, a) in trace.averages().iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, a);
    }
    out
}

/// `# key: value` lines followed by `t,delta,avg_regret` rows.
pub fn regret_csv(header: &[(String, String)], report: &RegretReport) -> String {
    let mut out = header_block(header);
    out.push_str("t,delta,avg_regret\n");
    for ((t, d), a) in report
        .t
        .iter()
        .zip(&report.delta_series)
        .zip(&report.average_series)
    {
        let _ = writeln!(out, "{t},{d},{a}");
    }
    out
}

fn header_block(header: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in header {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}
