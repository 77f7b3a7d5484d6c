//! Regularized maximum-likelihood estimation and design-matrix bookkeeping.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::mnl::{fisher_info, nll_loss_grad_hess, Assortment, Instance, Observation};

/// Gradient-norm convergence threshold for the Newton solver.
pub const MLE_GRAD_TOL: f64 = 1e-8;
const MLE_MAX_ITERS: usize = 200;
const ARMIJO_C: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct MleResult {
    pub theta_hat: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton on the strictly convex ridge-regularized negative
/// log-likelihood. Backtracking halves the step until the Armijo condition
/// holds; the objective therefore decreases monotonically.
pub fn fit_mle(
    inst: &Instance,
    dataset: &[Observation],
    lambda: f64,
    theta_init: &DVector<f64>,
) -> Result<MleResult> {
    assert!(lambda > 0.0, "ridge weight must be positive");
    let mut theta = theta_init.clone();
    let (mut loss, mut grad, mut hess) = nll_loss_grad_hess(inst, dataset, &theta, lambda)?;
    for iter in 0..MLE_MAX_ITERS {
        let grad_norm = grad.norm();
        if grad_norm <= MLE_GRAD_TOL {
            return Ok(MleResult { theta_hat: theta, grad_norm, iterations: iter, converged: true });
        }
        let chol = Cholesky::new(hess.clone()).ok_or_else(|| {
            Error::Numerical("regularized Hessian lost positive definiteness".into())
        })?;
        let step = -chol.solve(&grad);
        let slope = grad.dot(&step);
        debug_assert!(slope < 0.0, "Newton direction must descend");
        let mut t = 1.0;
        let mut accepted = false;
        // Near the optimum the prescribed decrease sits below the rounding
        // noise of the summed loss (roughly ulp(loss) per term); the
        // allowance keeps Armijo meaningful at large sample counts.
        let noise = 1e-12 * loss.abs().max(1.0);
        for _ in 0..60 {
            let candidate = &theta + &step * t;
            if candidate == theta {
                break; // step underflowed; no progress is possible
            }
            let (cand_loss, cand_grad, cand_hess) =
                nll_loss_grad_hess(inst, dataset, &candidate, lambda)?;
            if cand_loss <= loss + ARMIJO_C * t * slope + noise {
                debug_assert!(cand_loss <= loss + 2e-12 * loss.abs().max(1.0));
                theta = candidate;
                loss = cand_loss;
                grad = cand_grad;
                hess = cand_hess;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Step underflow: the iterate is numerically stationary.
            let grad_norm = grad.norm();
            return Ok(MleResult {
                theta_hat: theta,
                grad_norm,
                iterations: iter + 1,
                converged: grad_norm <= MLE_GRAD_TOL,
            });
        }
    }
    let grad_norm = grad.norm();
    Ok(MleResult {
        theta_hat: theta,
        grad_norm,
        iterations: MLE_MAX_ITERS,
        converged: grad_norm <= MLE_GRAD_TOL,
    })
}

/// Confidence-radius multiplier: `scale * (36 sqrt(log(N/delta)) + 64 sqrt(lambda) B)`.
///
/// `scale` defaults to 1; the desk-scale experiments use 0.1.
pub fn beta(delta: f64, lambda: f64, b: f64, n_arms: usize, scale: f64) -> f64 {
    assert!(delta > 0.0 && delta <= 1.0, "delta in (0, 1]");
    assert!(lambda > 0.0, "lambda > 0");
    assert!(scale > 0.0, "scale > 0");
    let log_term = (n_arms as f64 / delta).ln().max(0.0);
    scale * (36.0 * log_term.sqrt() + 64.0 * lambda.sqrt() * b)
}

/// The running `H` (Hessian at a reference parameter) and `V` (raw feature
/// Gram) matrices with cached Cholesky factors, refactored on every update.
#[derive(Clone, Debug)]
pub struct DesignMatrices {
    h: DMatrix<f64>,
    v: DMatrix<f64>,
    chol_h: Cholesky<f64, Dyn>,
    chol_v: Cholesky<f64, Dyn>,
    pub lambda: f64,
}

impl DesignMatrices {
    pub fn new(dim: usize, lambda: f64) -> Self {
        assert!(lambda > 0.0);
        let eye = DMatrix::identity(dim, dim) * lambda;
        let chol = Cholesky::new(eye.clone()).expect("lambda I is PD");
        Self { h: eye.clone(), v: eye, chol_h: chol.clone(), chol_v: chol, lambda }
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    fn refactor(&mut self) {
        self.chol_h = Cholesky::new(self.h.clone()).expect("H = sum of PSD + lambda I is PD");
        self.chol_v = Cholesky::new(self.v.clone()).expect("V = sum of PSD + lambda I is PD");
    }

    /// Adds one offer: `H += I(S, theta_ref)`, `V += sum_{i in S} a_i a_i^T`.
    pub fn rank_update(&mut self, inst: &Instance, s: &Assortment, theta_ref: &DVector<f64>) -> Result<()> {
        let info = fisher_info(inst, s, theta_ref)?;
        self.h += info;
        self.add_gram_only(inst, s)?;
        Ok(())
    }

    /// Adds only the Gram part (used during warm-up, before a reference
    /// parameter exists).
    pub fn add_gram_only(&mut self, inst: &Instance, s: &Assortment) -> Result<()> {
        inst.validate_assortment(s)?;
        for &i in s.items() {
            let a = inst.arm(i);
            self.v.syger(1.0, &a, &a, 1.0);
        }
        self.v.fill_upper_triangle_with_lower_triangle();
        self.refactor();
        Ok(())
    }

    /// Rebuilds `H = lambda I + sum_s I(S_s, theta_ref)` from a dataset in
    /// one pass (warm-up exit, or batch verification).
    pub fn set_hessian_from(
        &mut self,
        inst: &Instance,
        offers: impl IntoIterator<Item = Assortment>,
        theta_ref: &DVector<f64>,
    ) -> Result<()> {
        let d = self.h.nrows();
        let mut h = DMatrix::identity(d, d) * self.lambda;
        for s in offers {
            h += fisher_info(inst, &s, theta_ref)?;
        }
        self.h = h;
        self.refactor();
        Ok(())
    }

    /// `||a||_{H^{-1}}` via triangular solves against the cached factor.
    pub fn uncertainty_width(&self, a: &DVector<f64>) -> f64 {
        self.chol_h.solve(a).dot(a).max(0.0).sqrt()
    }

    /// `||a||_{V^{-1}}`, the warm-up coverage width.
    pub fn exploration_width(&self, a: &DVector<f64>) -> f64 {
        self.chol_v.solve(a).dot(a).max(0.0).sqrt()
    }
}
