//! Local optimization of the node-machine surrogate
//!
//! ```text
//! Q(θ) = f_k(θ) + g(θ) − ⟨s, θ⟩ + (α/2)‖θ − θ_t‖²
//! ```
//!
//! Smooth penalties go through a damped Newton method with Armijo
//! backtracking; the ℓ1 penalty goes through FISTA with backtracking on the
//! Lipschitz estimate and gradient-based momentum restart.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dist2, dot, norm2, Cholesky, Matrix};
use crate::model::{GlmFamily, Penalty, Shard};

/// Inner-solver tolerances and budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Newton stops once `‖∇Q‖₂ ≤ newton_tol · (1 + ‖∇Q(init)‖₂)`.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// FISTA stops once the proximal-gradient fixed-point residual is below this.
    pub fista_tol: f64,
    pub fista_max_iters: usize,
    /// Backtracking shrink factor in (0, 1).
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            newton_tol: 1e-10,
            newton_max_iters: 200,
            fista_tol: 1e-8,
            fista_max_iters: 5000,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.newton_tol, self.fista_tol, self.sufficient_decrease]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.newton_max_iters == 0 || self.fista_max_iters == 0 {
            return Err(Error::invalid("solver tolerances and budgets must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::invalid("backtracking shrink must lie in (0, 1)"));
        }
        Ok(())
    }

    /// The tolerance that applies to a problem with this penalty.
    pub fn tolerance_for(&self, penalty: &Penalty) -> f64 {
        if penalty.is_smooth() {
            self.newton_tol
        } else {
            self.fista_tol
        }
    }
}

/// The gradient-enhanced surrogate with proximal term, on one shard.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateProblem<'a> {
    pub shard: &'a Shard,
    pub family: GlmFamily,
    pub penalty: Penalty,
    /// `s = ∇f_k(θ_t) − ∇f(θ_t)`
    pub gradient_shift: &'a [f64],
    /// `θ_t`
    pub anchor: &'a [f64],
    pub alpha: f64,
}

/// A local solution with the residual that certified it.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: Vec<f64>,
    /// `‖∇Q‖₂` for Newton, fixed-point residual for FISTA.
    pub residual: f64,
    pub iterations: usize,
}

impl<'a> SurrogateProblem<'a> {
    /// Plain penalized local risk `f_k + g` (no shift, no proximal term).
    pub fn local(shard: &'a Shard, family: GlmFamily, penalty: Penalty, zeros: &'a [f64]) -> Self {
        SurrogateProblem {
            shard,
            family,
            penalty,
            gradient_shift: zeros,
            anchor: zeros,
            alpha: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.shard.dim();
        for len in [self.gradient_shift.len(), self.anchor.len()] {
            if len != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: len,
                });
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("proximal weight alpha must be finite and nonnegative"));
        }
        self.penalty.validate()
    }

    /// `Q(θ)` including the penalty.
    pub fn objective(&self, theta: &[f64]) -> Result<f64> {
        let eta = self.shard.x().matvec(theta);
        Ok(self.smooth_value(theta, &eta, !self.penalty.is_smooth())
            + if self.penalty.is_smooth() {
                0.0
            } else {
                self.penalty.value(theta)
            })
    }

    /// `∇Q(θ)` for smooth penalties; for ℓ1 the gradient of the smooth part.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.shard.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.shard.dim(),
                found: theta.len(),
            });
        }
        let eta = self.shard.x().matvec(theta);
        let mut g = vec![0.0; theta.len()];
        self.smooth_gradient(theta, &eta, !self.penalty.is_smooth(), &mut g);
        Ok(g)
    }

    /// Smooth part: `f_k − ⟨s,θ⟩ + (α/2)‖θ−θ_t‖²`, plus an ℓ2 penalty unless
    /// `skip_penalty`.
    fn smooth_value(&self, theta: &[f64], eta: &[f64], skip_penalty: bool) -> f64 {
        let mut v = self.shard.loss_from_predictor(self.family, eta) - dot(self.gradient_shift, theta);
        if self.alpha > 0.0 {
            let d2: f64 = theta
                .iter()
                .zip(self.anchor)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            v += 0.5 * self.alpha * d2;
        }
        if !skip_penalty {
            v += self.penalty.value(theta);
        }
        v
    }

    fn smooth_gradient(&self, theta: &[f64], eta: &[f64], skip_penalty: bool, out: &mut [f64]) {
        self.shard.gradient_from_predictor(self.family, eta, out);
        for j in 0..out.len() {
            out[j] += self.alpha * (theta[j] - self.anchor[j]) - self.gradient_shift[j];
        }
        if !skip_penalty {
            self.penalty.add_smooth_gradient(theta, out);
        }
    }
}

/// Damped Newton with Armijo backtracking for `None`/`L2` penalties.
pub fn solve_smooth(prob: &SurrogateProblem<'_>, init: &[f64], settings: &SolverSettings) -> Result<Solution> {
    prob.validate()?;
    settings.validate()?;
    if !prob.penalty.is_smooth() {
        return Err(Error::invalid("solve_smooth needs a smooth penalty"));
    }
    let d = prob.shard.dim();
    if init.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: init.len(),
        });
    }
    let x = prob.shard.x();
    let mut theta = init.to_vec();
    let mut eta = x.matvec(&theta);
    let mut value = prob.smooth_value(&theta, &eta, false);
    let mut grad = vec![0.0; d];
    prob.smooth_gradient(&theta, &eta, false, &mut grad);
    let threshold = settings.newton_tol * (1.0 + norm2(&grad));

    let mut iterations = 0;
    loop {
        let gnorm = norm2(&grad);
        if gnorm <= threshold {
            return Ok(Solution {
                theta,
                residual: gnorm,
                iterations,
            });
        }
        if iterations == settings.newton_max_iters || !gnorm.is_finite() {
            return Err(Error::ConvergenceFailure {
                iterations,
                residual: gnorm,
                last: theta,
            });
        }
        iterations += 1;

        let mut h = prob.shard.hessian_from_predictor(prob.family, &eta);
        for j in 0..d {
            h[(j, j)] += prob.alpha + prob.penalty.curvature(j);
        }
        let chol = factor_with_damping(&h)?;
        let mut dir = chol.solve(&grad);
        dir.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }

        let x_dir = x.matvec(&dir);
        let slack = 8.0 * f64::EPSILON * (1.0 + libm::fabs(value));
        let mut step = 1.0;
        let mut trial = vec![0.0; d];
        let mut trial_eta = vec![0.0; eta.len()];
        let accepted = loop {
            for j in 0..d {
                trial[j] = theta[j] + step * dir[j];
            }
            for (i, te) in trial_eta.iter_mut().enumerate() {
                *te = eta[i] + step * x_dir[i];
            }
            let v = prob.smooth_value(&trial, &trial_eta, false);
            if v <= value + settings.sufficient_decrease * step * slope + slack {
                break Some(v);
            }
            step *= settings.shrink;
            if step < 1e-20 {
                break None;
            }
        };
        let Some(new_value) = accepted else {
            return Err(Error::ConvergenceFailure {
                iterations,
                residual: gnorm,
                last: theta,
            });
        };
        core::mem::swap(&mut theta, &mut trial);
        // Recompute the predictor exactly so rounding does not accumulate.
        eta = x.matvec(&theta);
        value = new_value.min(prob.smooth_value(&theta, &eta, false));
        prob.smooth_gradient(&theta, &eta, false, &mut grad);
    }
}

/// Cholesky with a Levenberg shift `1e-10·trace/dim`, grown tenfold until
/// the factorization succeeds.
fn factor_with_damping(h: &Matrix) -> Result<Cholesky> {
    match Cholesky::factor(h) {
        Ok(c) => Ok(c),
        Err(first) => {
            let d = h.rows().max(1) as f64;
            let mut shift = 1e-10 * f64::max(libm::fabs(h.trace()) / d, f64::MIN_POSITIVE);
            for _ in 0..40 {
                let mut damped = h.clone();
                damped.add_diag(shift);
                if let Ok(c) = Cholesky::factor(&damped) {
                    return Ok(c);
                }
                shift *= 10.0;
            }
            Err(first)
        }
    }
}

/// FISTA with backtracking for the ℓ1 penalty.
pub fn solve_nonsmooth(prob: &SurrogateProblem<'_>, init: &[f64], settings: &SolverSettings) -> Result<Solution> {
    prob.validate()?;
    settings.validate()?;
    let d = prob.shard.dim();
    if init.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: init.len(),
        });
    }
    let x = prob.shard.x();
    let pen = prob.penalty;
    let tol = settings.fista_tol;

    let mut xk = init.to_vec();
    let mut eta_x = x.matvec(&xk);
    let mut gx = vec![0.0; d];
    prob.smooth_gradient(&xk, &eta_x, true, &mut gx);

    let mut lip = initial_lipschitz(prob, &xk, &gx);
    if prox_residual(&pen, &xk, &gx, lip) <= tol {
        return Ok(Solution {
            residual: prox_residual(&pen, &xk, &gx, lip),
            theta: xk,
            iterations: 0,
        });
    }

    let mut y = xk.clone();
    let mut eta_y = eta_x.clone();
    let mut gy = gx.clone();
    let mut hy = prob.smooth_value(&y, &eta_y, true);
    let mut momentum = 1.0;

    let mut x_new = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut residual = f64::INFINITY;
    for iteration in 1..=settings.fista_max_iters {
        let mut eta_new;
        loop {
            for j in 0..d {
                x_new[j] = y[j] - gy[j] / lip;
            }
            pen.prox_in_place(&mut x_new, 1.0 / lip);
            eta_new = x.matvec(&x_new);
            let h_new = prob.smooth_value(&x_new, &eta_new, true);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..d {
                let diff = x_new[j] - y[j];
                lin += gy[j] * diff;
                sq += diff * diff;
            }
            let slack = 8.0 * f64::EPSILON * (1.0 + libm::fabs(hy)) + 1e-9 * lip * sq;
            if h_new <= hy + lin + 0.5 * lip * sq + slack || !h_new.is_finite() && lip > 1e300 {
                break;
            }
            lip *= 2.0;
        }
        prob.smooth_gradient(&x_new, &eta_new, true, &mut g_new);
        residual = prox_residual(&pen, &x_new, &g_new, lip);
        if residual <= tol {
            return Ok(Solution {
                theta: x_new,
                residual,
                iterations: iteration,
            });
        }
        if !residual.is_finite() {
            break;
        }

        // Restart when the momentum direction opposes the gradient mapping.
        let restart_score: f64 = (0..d).map(|j| (y[j] - x_new[j]) * (x_new[j] - xk[j])).sum();
        if restart_score > 0.0 {
            momentum = 1.0;
        }
        let next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * momentum * momentum));
        let beta = (momentum - 1.0) / next;
        momentum = next;

        if beta == 0.0 {
            y.copy_from_slice(&x_new);
            eta_y.copy_from_slice(&eta_new);
            gy.copy_from_slice(&g_new);
        } else {
            for j in 0..d {
                y[j] = x_new[j] + beta * (x_new[j] - xk[j]);
            }
            for i in 0..eta_y.len() {
                eta_y[i] = eta_new[i] + beta * (eta_new[i] - eta_x[i]);
            }
            prob.smooth_gradient(&y, &eta_y, true, &mut gy);
        }
        hy = prob.smooth_value(&y, &eta_y, true);
        core::mem::swap(&mut xk, &mut x_new);
        eta_x = eta_new;
    }
    Err(Error::ConvergenceFailure {
        iterations: settings.fista_max_iters,
        residual,
        last: xk,
    })
}

/// Secant estimate of the local curvature along the gradient; backtracking
/// only ever increases it.
fn initial_lipschitz(prob: &SurrogateProblem<'_>, theta: &[f64], grad: &[f64]) -> f64 {
    let floor = f64::max(prob.alpha, 1e-8);
    let gn = norm2(grad);
    if gn == 0.0 {
        return f64::max(floor, 1.0);
    }
    let eps = 1e-4 * (1.0 + norm2(theta)) / gn;
    let probe: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - eps * g).collect();
    let eta = prob.shard.x().matvec(&probe);
    let mut g2 = vec![0.0; theta.len()];
    prob.smooth_gradient(&probe, &eta, true, &mut g2);
    let est = dist2(&g2, grad) / (eps * gn);
    if est.is_finite() {
        f64::max(est, floor)
    } else {
        f64::max(floor, 1.0)
    }
}

/// `‖θ − prox_{g/L}(θ − ∇h(θ)/L)‖₂`
fn prox_residual(pen: &Penalty, theta: &[f64], grad: &[f64], lip: f64) -> f64 {
    let mut z: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - g / lip).collect();
    pen.prox_in_place(&mut z, 1.0 / lip);
    dist2(theta, &z)
}

/// Dispatches on the penalty: Newton for smooth, FISTA for ℓ1.
pub fn solve(prob: &SurrogateProblem<'_>, init: &[f64], settings: &SolverSettings) -> Result<Solution> {
    if prob.penalty.is_smooth() {
        solve_smooth(prob, init, settings)
    } else {
        solve_nonsmooth(prob, init, settings)
    }
}

/// Exact minimizer of the quadratic surrogate: solves `(Σ̂_k + αI) θ = rhs`.
pub fn solve_quadratic_exact(sigma_k: &Matrix, rhs: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !sigma_k.is_square() || sigma_k.rows() != rhs.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma_k.rows(),
            found: rhs.len(),
        });
    }
    let mut a = sigma_k.clone();
    a.add_diag(alpha);
    let chol = Cholesky::factor(&a)?;
    let mut sol = chol.solve(rhs);
    // One step of iterative refinement.
    let mut r = a.matvec(&sol);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    axpy(1.0, &chol.solve(&r), &mut sol);
    Ok(sol)
}
