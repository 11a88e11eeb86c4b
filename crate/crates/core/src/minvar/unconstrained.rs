//! Closed-form worst-case perturbations for unconstrained support and
//! order-2 Wasserstein balls.

use super::{MinVarInstance, OracleOutput};
use crate::ambiguity::{moments_of, DiscreteDistribution, MomentState, NormTag, Support};
use crate::error::{Error, Result};
use crate::linalg::{dot, sub};

fn mean_square_projection(x: &[f64], samples: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for xi in samples {
        let a = dot(x, &sub(xi, v));
        acc += a * a;
    }
    acc / samples.len() as f64
}

/// `eta_x = ||x||_*^2 + (||x||_* / rho) sqrt((1/N) sum_i (x^T (xi_i - v))^2)`.
pub fn eta_star_unconstrained(x: &[f64], samples: &[Vec<f64>], v: &[f64], rho: f64, norm: NormTag) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Validation(format!(
            "rho = {rho}: the multiplier is only defined for a nondegenerate ball"
        )));
    }
    if samples.is_empty() {
        return Err(Error::Validation("no samples".into()));
    }
    let xd = norm.dual_norm(x);
    let s = mean_square_projection(x, samples, v);
    Ok(xd * xd + xd / rho * s.sqrt())
}

/// Maximizer of `(x^T (q + xi - v))^2 - eta ||q||^2`.
pub fn perturbation_unconstrained(eta: f64, xi: &[f64], v: &[f64], x: &[f64], norm: NormTag) -> Result<Vec<f64>> {
    let xd = norm.dual_norm(x);
    let a = dot(x, &sub(xi, v));
    let denom = eta - xd * xd;
    if denom < 0.0 || (denom == 0.0 && a != 0.0) {
        return Err(Error::Unbounded(format!(
            "eta = {eta} below ||x||_*^2 = {}: the perturbation problem has no maximizer",
            xd * xd
        )));
    }
    if denom == 0.0 || a == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    let scale = xd * a / denom;
    Ok(norm.argmax_unit(x).into_iter().map(|u| scale * u).collect())
}

/// `eta rho^2 + (eta / (eta - ||x||_*^2)) (1/N) sum_i (x^T (xi_i - v))^2`,
/// the one-dimensional dual of the linearized worst-case problem.
pub fn dual_objective_unconstrained(
    eta: f64,
    x: &[f64],
    samples: &[Vec<f64>],
    v: &[f64],
    rho: f64,
    norm: NormTag,
) -> f64 {
    let xd2 = norm.dual_norm(x).powi(2);
    let s = mean_square_projection(x, samples, v);
    if eta < xd2 || (eta == xd2 && s > 0.0) {
        return f64::INFINITY;
    }
    if s == 0.0 {
        return eta * rho * rho;
    }
    eta * rho * rho + eta / (eta - xd2) * s
}

pub(crate) fn check_unconstrained(instance: &MinVarInstance) -> Result<()> {
    if !matches!(instance.ambiguity.support, Support::Unconstrained) {
        return Err(Error::Validation(
            "closed-form oracle needs unconstrained support".into(),
        ));
    }
    match instance.ambiguity.order_m {
        2 => Ok(()),
        m if m < 2 => Err(Error::Unbounded(format!(
            "order m = {m} < 2: the worst-case variance over unconstrained support is infinite"
        ))),
        m => Err(Error::Validation(format!(
            "no oracle for Wasserstein order m = {m} > 2"
        ))),
    }
}

/// Exact FW oracle at `x` for the current state `p` (so `v = mu_P`).
pub fn oracle_unconstrained(x: &[f64], instance: &MinVarInstance, p: &MomentState) -> Result<OracleOutput> {
    check_unconstrained(instance)?;
    let samples = instance.samples();
    let n_samples = samples.len();
    let v: Vec<f64> = p.mu.iter().cloned().collect();
    if x.len() != instance.n() || v.len() != instance.n() {
        return Err(Error::shape(instance.n(), x.len(), "portfolio"));
    }
    let rho = instance.rho();
    let norm = instance.norm();
    let s = mean_square_projection(x, samples, &v);
    let (eta, displacements) = if rho == 0.0 {
        (f64::INFINITY, vec![vec![0.0; x.len()]; n_samples])
    } else {
        let eta = eta_star_unconstrained(x, samples, &v, rho, norm)?;
        let mut d = Vec::with_capacity(n_samples);
        for xi in samples {
            d.push(perturbation_unconstrained(eta, xi, &v, x, norm)?);
        }
        (eta, d)
    };
    let points: Vec<Vec<f64>> = samples
        .iter()
        .zip(&displacements)
        .map(|(xi, q)| xi.iter().zip(q).map(|(a, b)| a + b).collect())
        .collect();
    let weights = vec![1.0 / n_samples as f64; n_samples];
    let primal_value = {
        let mut acc = 0.0;
        for z in &points {
            let a = dot(x, &sub(z, &v));
            acc += a * a;
        }
        acc / n_samples as f64
    };
    let dual_value = if rho == 0.0 {
        s
    } else if s == 0.0 {
        0.0
    } else {
        // Closed form of the dual at its minimizer.
        let xd = norm.dual_norm(x);
        (s.sqrt() + rho * xd).powi(2)
    };
    let new_moments = moments_of(&DiscreteDistribution {
        points,
        weights: weights.clone(),
    });
    let gap = super::variance_risk_g_derivative(x, p, &new_moments)?;
    Ok(OracleOutput {
        eta_star: eta,
        displacements,
        weights,
        source: (0..n_samples).collect(),
        new_moments: Some(new_moments),
        gap,
        primal_value,
        dual_value,
    })
}
