//! Saddle point of the unconstrained-support, order-2 problem in closed form.
//!
//! The worst-case variance at `x` is `(sqrt(x^T V x) + rho ||x||_*)^2` with
//! `V` the nominal covariance, so the outer problem is the convex program
//! `min_x (sqrt(a(x)) + rho ||x||_*)^2 + (alpha/2) ||x||^2`. On the simplex
//! its stationarity condition is that of a Markowitz problem with an extra
//! ridge `lambda ||x||^2`, where `lambda` solves a scalar fixed point
//! `lambda = T(lambda)`; we bisect on that.

use serde::{Deserialize, Serialize};

use super::unconstrained::check_unconstrained;
use super::{inner_markowitz, MinVarInstance};
use crate::ambiguity::{moments_of, DiscreteDistribution, NormTag};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, sub};

const DEGENERATE_VARIANCE: f64 = 1e-14;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedFormSaddle {
    pub x_star: Vec<f64>,
    pub p_star: DiscreteDistribution,
    /// `min_x max_P` of the instance objective.
    pub value: f64,
    /// Fixed-point residual of the ridge parameter.
    pub residual: f64,
}

/// `sqrt(x^T V x) + rho ||x||_*`.
pub fn surrogate_value(x: &[f64], instance: &MinVarInstance) -> Result<f64> {
    let p = moments_of(&instance.ambiguity.nominal);
    let a = super::variance_risk(x, &p)?.max(0.0);
    Ok(a.sqrt() + instance.rho() * instance.norm().dual_norm(x))
}

/// `T(lambda)` given the ridge minimizer's `a = x^T V x` and `b = ||x||^2`.
fn ridge_target(a: f64, b: f64, rho: f64, reg_alpha: f64, norm: NormTag, dual: f64) -> f64 {
    let sa = a.max(0.0).sqrt();
    match norm {
        NormTag::L2 => {
            let sb = b.sqrt();
            if sa <= DEGENERATE_VARIANCE.sqrt() {
                // a = 0: the surrogate's variance part is nonsmooth; the ridge
                // degenerates to the explicit regularizer alone.
                return 0.5 * reg_alpha;
            }
            rho * sa / sb + reg_alpha / (2.0 * (1.0 + rho * sb / sa))
        }
        NormTag::Linf => {
            // ||x||_1 is constant on the simplex; only the regularizer
            // couples through the factor 2 (1 + rho ||x||_1 / sqrt(a)).
            if reg_alpha == 0.0 {
                return 0.0;
            }
            if sa <= DEGENERATE_VARIANCE.sqrt() {
                return 0.0;
            }
            reg_alpha / (2.0 * (1.0 + rho * dual / sa))
        }
    }
}

pub fn closed_form_saddle(instance: &MinVarInstance) -> Result<ClosedFormSaddle> {
    check_unconstrained(instance)?;
    let nominal = &instance.ambiguity.nominal;
    let p_hat = moments_of(nominal);
    let mu_hat: Vec<f64> = p_hat.mu.iter().cloned().collect();
    let rho = instance.rho();
    let norm = instance.norm();
    let alpha = instance.reg_alpha;

    let solve = |lambda: f64| -> Result<(Vec<f64>, f64, f64)> {
        let (x, _) = inner_markowitz(&p_hat, 2.0 * lambda, &instance.feasible_x, &mu_hat)?;
        let a = super::variance_risk(&x, &p_hat)?.max(0.0);
        let b = dot(&x, &x);
        let t = ridge_target(a, b, rho, alpha, norm, norm.dual_norm(&x));
        Ok((x, lambda - t, a))
    };

    let (x_star, residual) = if rho == 0.0 && alpha == 0.0 {
        inner_markowitz(&p_hat, 0.0, &instance.feasible_x, &mu_hat).map(|(x, _)| (x, 0.0))?
    } else {
        let cov = p_hat.covariance();
        let upper = rho * linalg::max_eigenvalue(&cov).max(0.0).sqrt() + alpha + 1.0;
        let (mut lo, mut hi) = (0.0f64, upper);
        let (x_hi, h_hi, a_hi) = solve(hi)?;
        if h_hi < 0.0 {
            return Err(Error::NonConvergence {
                what: "closed-form saddle ridge bracket".into(),
                residual: -h_hi,
            });
        }
        // Zero-variance minimizers at a positive ridge are exact min-norm
        // solutions; the largest such ridge gives the best-conditioned solve.
        let mut degenerate = (a_hi < DEGENERATE_VARIANCE).then(|| x_hi.clone());
        let mut best = (x_hi, h_hi);
        for _ in 0..200 {
            if hi - lo <= 1e-13 * hi.max(1e-300) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (x, h, a) = solve(mid)?;
            if h.abs() <= best.1.abs() {
                best = (x.clone(), h);
            }
            if h < 0.0 {
                lo = mid;
            } else {
                if a < DEGENERATE_VARIANCE && degenerate.is_none() {
                    degenerate = Some(x);
                }
                hi = mid;
            }
        }
        match degenerate {
            Some(x) if lo == 0.0 => (x, 0.0),
            _ => best,
        }
    };

    let a = super::variance_risk(&x_star, &p_hat)?.max(0.0);
    let qbar = norm.argmax_unit(&x_star);
    let points = nominal
        .points
        .iter()
        .map(|xi| {
            if a < DEGENERATE_VARIANCE {
                return xi.clone();
            }
            let s = rho * dot(&x_star, &sub(xi, &mu_hat)) / a.sqrt();
            xi.iter().zip(&qbar).map(|(z, u)| z + s * u).collect()
        })
        .collect();
    let p_star = DiscreteDistribution::new(points, nominal.weights.clone())?;
    let sur = a.sqrt() + rho * norm.dual_norm(&x_star);
    let value = sur * sur + 0.5 * alpha * dot(&x_star, &x_star);
    Ok(ClosedFormSaddle {
        x_star,
        p_star,
        value,
        residual: residual.abs(),
    })
}
