//! Online linear regressors from features to label codes.
//!
//! Three ways of coping with an encoder that changes every round:
//!
//! * [`PbcState`] keeps the full `d x K` ridge solution `H` from features to
//!   labels, so the code-space regressor for any encoder `P` is `H P^T`.
//! * [`PbtState`] keeps a `d x M` regressor and rotates it onto each new
//!   encoder with `W P_old P_new^T` before the ridge step.
//! * [`NaiveState`] ignores the drift and regresses on whatever code the
//!   encoder of the moment produced.
//!
//! All three share [`RidgeCore`], which stores `A^{-1}` for
//! `A = lambda I + sum x x^T` and updates it by Sherman-Morrison, or run as
//! plain online gradient descent for large `d * K`.

use crate::linalg::{dot, spd_inverse, DenseMatrix, LinalgError};
use crate::online_pca::ProjectionMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sherman-Morrison steps between recomputations of `A^{-1}` from `A`.
pub const REFRESH_INTERVAL: u64 = 10_000;

/// Suggest gradient descent once `d * K` exceeds this many entries.
pub const SGD_SUGGESTION_THRESHOLD: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("regularization must be positive, got {0}")]
    InvalidLambda(f64),
    #[error("step size must be non-negative, got {0}")]
    InvalidStep(f64),
    #[error("encoder shape {got:?} differs from current basis {expected:?}")]
    BasisShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_len(expected: usize, got: usize) -> Result<(), RegressorError> {
    if expected != got {
        return Err(RegressorError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Whether the exact ridge solution or gradient descent drives the updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Engine {
    Ridge {
        lambda: f64,
    },
    /// Step size `scale / sqrt(t)`.
    Sgd {
        scale: f64,
    },
}

impl Default for Engine {
    fn default() -> Self {
        Engine::Ridge { lambda: 1.0 }
    }
}

impl Engine {
    /// Gradient descent for large problems, ridge otherwise.
    pub fn suggested(d: usize, k: usize, lambda: f64) -> Engine {
        if d.saturating_mul(k) > SGD_SUGGESTION_THRESHOLD {
            Engine::Sgd { scale: 1.0 }
        } else {
            Engine::Ridge { lambda }
        }
    }
}

/// `A^{-1}` for `A = lambda I + sum_i x_i x_i^T`, kept alongside `A` so it
/// can be periodically recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeCore {
    a_inv: DenseMatrix,
    gram: DenseMatrix,
    lambda: f64,
    steps_since_refresh: u64,
}

/// Quantities of one Sherman-Morrison step, taken before `A^{-1}` moves.
#[derive(Debug, Clone)]
pub struct RankOneStep {
    /// `A^{-1} x`
    pub direction: Vec<f64>,
    /// `1 + x^T A^{-1} x`
    pub denominator: f64,
}

impl RidgeCore {
    pub fn new(d: usize, lambda: f64) -> Result<Self, RegressorError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(RegressorError::InvalidLambda(lambda));
        }
        let mut a_inv = DenseMatrix::identity(d);
        a_inv.scale(1.0 / lambda);
        let mut gram = DenseMatrix::identity(d);
        gram.scale(lambda);
        Ok(RidgeCore {
            a_inv,
            gram,
            lambda,
            steps_since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.a_inv.rows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a_inv(&self) -> &DenseMatrix {
        &self.a_inv
    }

    /// Whether both `A` and `A^{-1}` are `d x d` with a valid `lambda`.
    pub fn is_consistent(&self, d: usize) -> bool {
        self.a_inv.shape() == (d, d)
            && self.gram.shape() == (d, d)
            && self.lambda > 0.0
            && self.lambda.is_finite()
    }

    /// Absorbs `x` into `A` and returns the step quantities computed from
    /// the previous `A^{-1}`.
    pub fn absorb(&mut self, x: &[f64]) -> Result<RankOneStep, RegressorError> {
        check_len(self.dim(), x.len())?;
        let direction = self.a_inv.mul_vec(x);
        let denominator = 1.0 + dot(x, &direction);
        self.a_inv
            .rank_one_update(-1.0 / denominator, &direction, &direction);
        self.gram.rank_one_update(1.0, x, x);
        self.steps_since_refresh += 1;
        if self.steps_since_refresh >= REFRESH_INTERVAL {
            self.refresh()?;
        }
        Ok(RankOneStep {
            direction,
            denominator,
        })
    }

    /// Recomputes `A^{-1}` from `A`.
    pub fn refresh(&mut self) -> Result<(), RegressorError> {
        self.a_inv = spd_inverse(&self.gram)?;
        self.steps_since_refresh = 0;
        Ok(())
    }
}

/// `W -= step * x (W^T x - target)^T`, one gradient step on
/// `0.5 * ||W^T x - target||^2`.
pub fn sgd_step(
    w: &mut DenseMatrix,
    x: &[f64],
    target: &[f64],
    step: f64,
) -> Result<(), RegressorError> {
    check_len(w.rows(), x.len())?;
    check_len(w.cols(), target.len())?;
    if step.is_nan() || step < 0.0 {
        return Err(RegressorError::InvalidStep(step));
    }
    if step == 0.0 {
        return Ok(());
    }
    let mut residual = w.transpose_mul_vec(x);
    for (r, t) in residual.iter_mut().zip(target) {
        *r -= t;
    }
    w.rank_one_update(-step, x, &residual);
    Ok(())
}

// `W -= dir (W^T x - target)^T / denom`
/// One exact ridge step on `w`:
/// `w -= A^{-1} x (w^T x - target)^T / (1 + x^T A^{-1} x)`, with `A^{-1}`
/// advanced past `x`.
pub fn sherman_morrison_update(
    w: &mut DenseMatrix,
    core: &mut RidgeCore,
    x: &[f64],
    target: &[f64],
) -> Result<(), RegressorError> {
    check_len(w.rows(), x.len())?;
    check_len(w.cols(), target.len())?;
    let step = core.absorb(x)?;
    ridge_correction(w, x, target, &step);
    Ok(())
}

fn ridge_correction(w: &mut DenseMatrix, x: &[f64], target: &[f64], step: &RankOneStep) {
    let mut residual = w.transpose_mul_vec(x);
    for (r, t) in residual.iter_mut().zip(target) {
        *r -= t;
    }
    w.rank_one_update(-1.0 / step.denominator, &step.direction, &residual);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Solver {
    Ridge(RidgeCore),
    Sgd { scale: f64, t: u64 },
}

impl Solver {
    fn new(d: usize, engine: Engine) -> Result<Self, RegressorError> {
        Ok(match engine {
            Engine::Ridge { lambda } => Solver::Ridge(RidgeCore::new(d, lambda)?),
            Engine::Sgd { scale } => {
                if scale.is_nan() || scale < 0.0 {
                    return Err(RegressorError::InvalidStep(scale));
                }
                Solver::Sgd { scale, t: 0 }
            }
        })
    }

    // Applies one update of `w` toward `target` at feature vector `x`.
    fn apply(
        &mut self,
        w: &mut DenseMatrix,
        x: &[f64],
        target: &[f64],
    ) -> Result<(), RegressorError> {
        match self {
            Solver::Ridge(core) => sherman_morrison_update(w, core, x, target),
            Solver::Sgd { scale, t } => {
                *t += 1;
                let step = *scale / (*t as f64).sqrt();
                sgd_step(w, x, target, step)
            }
        }
    }

    fn ridge(&self) -> Option<&RidgeCore> {
        match self {
            Solver::Ridge(core) => Some(core),
            Solver::Sgd { .. } => None,
        }
    }
}

/// Principal basis correction: the `d x K` solution `H = A^{-1} B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbcState {
    solver: Solver,
    h: DenseMatrix,
}

impl PbcState {
    pub fn new(d: usize, k: usize, engine: Engine) -> Result<Self, RegressorError> {
        Ok(PbcState {
            solver: Solver::new(d, engine)?,
            h: DenseMatrix::zeros(d, k),
        })
    }

    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn ridge(&self) -> Option<&RidgeCore> {
        self.solver.ridge()
    }

    /// `H^T x`
    pub fn predict_full(&self, x: &[f64]) -> Result<Vec<f64>, RegressorError> {
        check_len(self.h.rows(), x.len())?;
        Ok(self.h.transpose_mul_vec(x))
    }

    /// `P (H^T x)`, i.e. `(H P^T)^T x`.
    pub fn predict(&self, x: &[f64], p: &ProjectionMatrix) -> Result<Vec<f64>, RegressorError> {
        check_len(self.h.cols(), p.label_dim())?;
        Ok(p.encode(&self.predict_full(x)?))
    }

    /// Absorbs `(x, y)`; with the ridge engine this is the Sherman-Morrison
    /// update `H -= A^{-1} x (H^T x - y)^T / (1 + x^T A^{-1} x)`.
    pub fn update(&mut self, x: &[f64], y: &[f64]) -> Result<(), RegressorError> {
        check_len(self.h.rows(), x.len())?;
        check_len(self.h.cols(), y.len())?;
        self.solver.apply(&mut self.h, x, y)
    }

    pub fn sgd_update(&mut self, x: &[f64], y: &[f64], step: f64) -> Result<(), RegressorError> {
        sgd_step(&mut self.h, x, y, step)
    }
}

/// Principal basis transform: a `d x M` regressor tied to the encoder it was
/// trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbtState {
    solver: Solver,
    w: DenseMatrix,
    basis: ProjectionMatrix,
}

impl PbtState {
    pub fn new(d: usize, basis: ProjectionMatrix, engine: Engine) -> Result<Self, RegressorError> {
        Ok(PbtState {
            solver: Solver::new(d, engine)?,
            w: DenseMatrix::zeros(d, basis.code_dim()),
            basis,
        })
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn basis(&self) -> &ProjectionMatrix {
        &self.basis
    }

    pub fn ridge(&self) -> Option<&RidgeCore> {
        self.solver.ridge()
    }

    /// `W^T x` in the coordinates of the current basis.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, RegressorError> {
        check_len(self.w.rows(), x.len())?;
        Ok(self.w.transpose_mul_vec(x))
    }

    /// Re-expresses `W` in `p_new`: `W <- W P_old P_new^T`.
    pub fn transform(&mut self, p_new: ProjectionMatrix) -> Result<(), RegressorError> {
        let old = self.basis.matrix().shape();
        let new = p_new.matrix().shape();
        if old != new {
            return Err(RegressorError::BasisShape {
                expected: old,
                got: new,
            });
        }
        let change = self.basis.matrix().matmul_transpose(p_new.matrix());
        self.w = self.w.matmul(&change);
        self.basis = p_new;
        Ok(())
    }

    /// Transforms onto `p_new`, then regresses toward `P_new y`.
    pub fn update(
        &mut self,
        x: &[f64],
        y: &[f64],
        p_new: ProjectionMatrix,
    ) -> Result<(), RegressorError> {
        check_len(self.w.rows(), x.len())?;
        check_len(self.basis.label_dim(), y.len())?;
        self.transform(p_new)?;
        let target = self.basis.encode(y);
        self.solver.apply(&mut self.w, x, &target)
    }

    pub fn sgd_update(
        &mut self,
        x: &[f64],
        y: &[f64],
        p_new: ProjectionMatrix,
        step: f64,
    ) -> Result<(), RegressorError> {
        check_len(self.basis.label_dim(), y.len())?;
        self.transform(p_new)?;
        let target = self.basis.encode(y);
        sgd_step(&mut self.w, x, &target, step)
    }
}

/// Online ridge regression on codes produced by a drifting encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveState {
    solver: Solver,
    w: DenseMatrix,
}

impl NaiveState {
    pub fn new(d: usize, m: usize, engine: Engine) -> Result<Self, RegressorError> {
        Ok(NaiveState {
            solver: Solver::new(d, engine)?,
            w: DenseMatrix::zeros(d, m),
        })
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn ridge(&self) -> Option<&RidgeCore> {
        self.solver.ridge()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, RegressorError> {
        check_len(self.w.rows(), x.len())?;
        Ok(self.w.transpose_mul_vec(x))
    }

    pub fn update(&mut self, x: &[f64], z: &[f64]) -> Result<(), RegressorError> {
        check_len(self.w.rows(), x.len())?;
        check_len(self.w.cols(), z.len())?;
        self.solver.apply(&mut self.w, x, z)
    }

    pub fn sgd_update(&mut self, x: &[f64], z: &[f64], step: f64) -> Result<(), RegressorError> {
        sgd_step(&mut self.w, x, z, step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_pbc_by_hand() {
        // gamma = 1, H = 1 / (1 + 1) * 1
        let mut s = PbcState::new(1, 1, Engine::Ridge { lambda: 1.0 }).unwrap();
        s.update(&[1.0], &[1.0]).unwrap();
        assert!((s.h()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((s.ridge().unwrap().a_inv()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pbc_cold_start_predicts_zero() {
        let s = PbcState::new(3, 4, Engine::default()).unwrap();
        let p = ProjectionMatrix::leading_identity(2, 4);
        assert_eq!(s.predict(&[1.0, 2.0, 3.0], &p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_residual_leaves_h_unchanged() {
        let mut s = PbcState::new(2, 2, Engine::default()).unwrap();
        s.update(&[1.0, 0.5], &[0.3, -0.2]).unwrap();
        let h = s.h().clone();
        let x = [0.2, -0.7];
        let y = s.predict_full(&x).unwrap();
        s.update(&x, &y).unwrap();
        assert!(s.h().max_abs_diff(&h) < 1e-15);
    }

    #[test]
    fn coordinate_projection_selects_leading_outputs() {
        let mut s = PbcState::new(2, 3, Engine::default()).unwrap();
        s.update(&[1.0, 0.0], &[1.0, -1.0, 0.5]).unwrap();
        let x = [0.3, 0.9];
        let full = s.predict_full(&x).unwrap();
        let code = s
            .predict(&x, &ProjectionMatrix::leading_identity(2, 3))
            .unwrap();
        assert_eq!(code, full[..2].to_vec());
    }

    #[test]
    fn dimension_errors() {
        let mut s = PbcState::new(2, 2, Engine::default()).unwrap();
        assert!(matches!(
            s.update(&[1.0], &[1.0, 1.0]),
            Err(RegressorError::DimensionMismatch { .. })
        ));
        assert!(PbcState::new(2, 2, Engine::Ridge { lambda: 0.0 }).is_err());
        let mut t = PbtState::new(
            2,
            ProjectionMatrix::leading_identity(1, 3),
            Engine::default(),
        )
        .unwrap();
        assert!(matches!(
            t.transform(ProjectionMatrix::leading_identity(2, 3)),
            Err(RegressorError::BasisShape { .. })
        ));
    }

    #[test]
    fn pbt_identity_and_sign_flip_transforms() {
        let p = ProjectionMatrix::new(DenseMatrix::from_rows(&[
            vec![0.6, 0.8, 0.0],
            vec![0.0, 0.0, 1.0],
        ]))
        .unwrap();
        let mut s = PbtState::new(2, p.clone(), Engine::default()).unwrap();
        s.update(&[1.0, -0.5], &[1.0, -1.0, 1.0], p.clone())
            .unwrap();
        let w = s.w().clone();
        s.transform(p.clone()).unwrap();
        assert!(s.w().max_abs_diff(&w) < 1e-15);
        s.transform(p.negated()).unwrap();
        let mut neg = w.clone();
        neg.scale(-1.0);
        assert!(s.w().max_abs_diff(&neg) < 1e-15);
    }

    #[test]
    fn pbt_zero_residual_keeps_transformed_w() {
        let p = ProjectionMatrix::leading_identity(2, 3);
        let mut s = PbtState::new(2, p.clone(), Engine::default()).unwrap();
        s.update(&[0.4, 0.1], &[1.0, 1.0, -1.0], p.clone()).unwrap();
        let x = [0.2, 0.3];
        // choose y so that P y equals the current code prediction
        let z = s.predict(&x).unwrap();
        let y = [z[0], z[1], 7.0];
        let w = s.w().clone();
        s.update(&x, &y, p).unwrap();
        assert!(s.w().max_abs_diff(&w) < 1e-15);
    }

    #[test]
    fn naive_cold_start() {
        let s = NaiveState::new(3, 2, Engine::default()).unwrap();
        assert_eq!(s.predict(&[1.0, 1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn sgd_first_step() {
        let mut w = DenseMatrix::zeros(3, 2);
        sgd_step(&mut w, &[1.0, 0.0, 0.0], &[0.5, -2.0], 0.1).unwrap();
        assert_eq!(w.row(0), &[0.05, -0.2]);
        assert_eq!(w.row(1), &[0.0, 0.0]);
        let before = w.clone();
        sgd_step(&mut w, &[0.3, 1.0, 0.0], &[1.0, 1.0], 0.0).unwrap();
        assert_eq!(w, before);
        assert!(sgd_step(&mut w, &[0.0; 3], &[0.0; 2], -1.0).is_err());
    }

    #[test]
    fn sgd_engine_uses_inverse_sqrt_schedule() {
        let mut s = NaiveState::new(1, 1, Engine::Sgd { scale: 1.0 }).unwrap();
        s.update(&[1.0], &[1.0]).unwrap();
        assert_eq!(s.w()[(0, 0)], 1.0);
        s.update(&[1.0], &[0.0]).unwrap();
        assert!((s.w()[(0, 0)] - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!(s.ridge().is_none());
    }

    #[test]
    fn engine_suggestion() {
        assert_eq!(
            Engine::suggested(10, 10, 1.0),
            Engine::Ridge { lambda: 1.0 }
        );
        assert_eq!(
            Engine::suggested(5000, 4000, 1.0),
            Engine::Sgd { scale: 1.0 }
        );
    }
}
