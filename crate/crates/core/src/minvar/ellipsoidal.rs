//! FW oracle for ellipsoidal support `{xi : xi^T M xi <= 1}` and the order-2
//! Euclidean Wasserstein ball.
//!
//! The linearized worst case `sup_Q E_Q[(x^T (xi - v))^2]` has the dual
//! `min_{eta >= 0} eta rho^2 + (1/N) sum_i g_i(eta)` where `g_i` is the value of
//! a per-sample GTRS. Since `phi'(eta) = rho^2 - t(eta)` with `t` the mean
//! squared transport of the maximizers, the search brackets the root of
//! `t(eta) = rho^2` and mixes the two endpoint solutions so that the primal
//! distribution spends exactly the full budget.

use super::gtrs::{EllipsoidGeometry, GtrsBatch, LocalSolution};
use super::{MinVarInstance, OracleOutput};
use crate::ambiguity::{moments_of, DiscreteDistribution, MomentState, NormTag, Support};
use crate::error::{Error, Result};
use crate::linalg::{dot, sub};

const MAX_BRACKET_STEPS: usize = 400;
const MAX_REFINE_STEPS: usize = 200;

struct Eval {
    eta: f64,
    sols: Vec<LocalSolution>,
    /// Mean squared transport.
    t: f64,
    /// Mean GTRS value.
    g: f64,
}

impl Eval {
    fn phi(&self, rho2: f64) -> f64 {
        self.eta * rho2 + self.g
    }
}

fn evaluate(geom: &EllipsoidGeometry, x: &[f64], v: &[f64], rotated: &[Vec<f64>], eta: f64) -> Result<Eval> {
    let batch = GtrsBatch::new(geom, x, v, eta)?;
    let sols: Vec<LocalSolution> = rotated.iter().map(|xi| batch.solve(xi)).collect();
    let n = sols.len() as f64;
    let t = sols.iter().map(|s| s.transport).sum::<f64>() / n;
    let g = sols.iter().map(|s| s.value).sum::<f64>() / n;
    if !t.is_finite() || !g.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite subproblem values at eta = {eta:e}"
        )));
    }
    Ok(Eval { eta, sols, t, g })
}

fn check_instance(instance: &MinVarInstance) -> Result<()> {
    if !matches!(instance.ambiguity.support, Support::Ellipsoid { .. }) {
        return Err(Error::Validation("ellipsoidal oracle needs ellipsoid support".into()));
    }
    if instance.ambiguity.order_m != 2 {
        return Err(Error::Validation(format!(
            "ellipsoidal oracle supports order m = 2 only, got {}",
            instance.ambiguity.order_m
        )));
    }
    if instance.norm() != NormTag::L2 {
        return Err(Error::Validation(
            "ellipsoidal oracle needs the L2 transportation norm".into(),
        ));
    }
    Ok(())
}

/// Oracle at `x` for the current state `p` (so `v = mu_P`).
pub fn oracle_ellipsoidal(x: &[f64], instance: &MinVarInstance, p: &MomentState) -> Result<OracleOutput> {
    check_instance(instance)?;
    let m = instance
        .ambiguity
        .support
        .ellipsoid_matrix()
        .expect("checked ellipsoid support")?;
    let geom = EllipsoidGeometry::new(&m)?;
    let rotated: Vec<Vec<f64>> = instance.samples().iter().map(|xi| geom.to_basis(xi)).collect();
    oracle_with_geometry(x, instance, p, &geom, &rotated)
}

/// Same as [`oracle_ellipsoidal`] with the eigenbasis of `M` and the rotated
/// samples precomputed.
pub(crate) fn oracle_with_geometry(
    x: &[f64],
    instance: &MinVarInstance,
    p: &MomentState,
    geom: &EllipsoidGeometry,
    rotated: &[Vec<f64>],
) -> Result<OracleOutput> {
    let n = instance.n();
    if x.len() != n || p.dim() != n {
        return Err(Error::shape(n, x.len(), "portfolio"));
    }
    let samples = instance.samples();
    let n_samples = samples.len();
    let v: Vec<f64> = p.mu.iter().cloned().collect();
    let rho = instance.rho();
    let rho2 = rho * rho;

    let primal_of = |points: &[Vec<f64>], weights: &[f64]| -> f64 {
        points
            .iter()
            .zip(weights)
            .map(|(z, w)| {
                let a = dot(x, &sub(z, &v));
                w * a * a
            })
            .sum()
    };

    if rho == 0.0 {
        let weights = vec![1.0 / n_samples as f64; n_samples];
        let points = samples.to_vec();
        let value = primal_of(&points, &weights);
        let new_moments = moments_of(&DiscreteDistribution {
            points,
            weights: weights.clone(),
        });
        let gap = super::variance_risk_g_derivative(x, p, &new_moments)?;
        return Ok(OracleOutput {
            eta_star: f64::INFINITY,
            displacements: vec![vec![0.0; n]; n_samples],
            weights,
            source: (0..n_samples).collect(),
            new_moments: Some(new_moments),
            gap,
            primal_value: value,
            dual_value: value,
        });
    }

    let s_u = {
        let xt = geom.to_basis(x);
        xt.iter().zip(&geom.eigenvalues).map(|(a, l)| a * a / l).sum::<f64>()
    };
    let eta_floor = 1e-12 * s_u.max(1e-12);
    let floor = evaluate(geom, x, &v, rotated, eta_floor)?;

    // (lo, hi) with t(lo) > rho^2 >= t(hi); `lo = None` means the floor
    // already meets the budget.
    let (lo, hi) = if floor.t <= rho2 {
        (None, floor)
    } else {
        let mut eta = s_u.max(4.0 * eta_floor);
        let first = evaluate(geom, x, &v, rotated, eta)?;
        if first.t > rho2 {
            let mut lo = first;
            let mut steps = 0;
            loop {
                eta *= 4.0;
                let e = evaluate(geom, x, &v, rotated, eta)?;
                if e.t <= rho2 {
                    break (Some(lo), e);
                }
                lo = e;
                steps += 1;
                if steps > MAX_BRACKET_STEPS {
                    return Err(Error::Numerical(format!(
                        "dual search did not bracket the budget (eta = {eta:e}, transport {:e} > {rho2:e})",
                        lo.t
                    )));
                }
            }
        } else {
            let mut hi = first;
            let mut lo = floor;
            while hi.eta / 4.0 > lo.eta {
                let e = evaluate(geom, x, &v, rotated, hi.eta / 4.0)?;
                if e.t > rho2 {
                    lo = e;
                    break;
                }
                hi = e;
            }
            (Some(lo), hi)
        }
    };

    let (lo, hi) = match lo {
        None => (None, hi),
        Some(lo) => {
            let (lo, hi) = refine(geom, x, &v, rotated, lo, hi, rho2)?;
            (Some(lo), hi)
        }
    };

    // Mixing weight on `hi` so that total transport equals rho^2.
    let theta = match &lo {
        None => 1.0,
        Some(lo) => {
            let th = (lo.t - rho2) / (lo.t - hi.t);
            if hi.t >= rho2 * (1.0 - 1e-13) || th >= 1.0 - 1e-15 {
                1.0
            } else {
                th.clamp(0.0, 1.0)
            }
        }
    };

    let mut displacements = Vec::new();
    let mut weights = Vec::new();
    let mut source = Vec::new();
    let mut push = |e: &Eval, w: f64| {
        if w <= 0.0 {
            return;
        }
        for (i, s) in e.sols.iter().enumerate() {
            let q = geom.from_basis(&s.q_basis);
            displacements.push(sub(&q, &samples[i]));
            weights.push(w / n_samples as f64);
            source.push(i);
        }
    };
    if let Some(lo) = &lo {
        push(lo, 1.0 - theta);
    }
    push(&hi, theta);

    let points: Vec<Vec<f64>> = source
        .iter()
        .zip(&displacements)
        .map(|(&i, q)| samples[i].iter().zip(q).map(|(a, b)| a + b).collect())
        .collect();
    let primal_value = primal_of(&points, &weights);
    let dual_value = match &lo {
        None => hi.phi(rho2),
        Some(lo) => lo.phi(rho2).min(hi.phi(rho2)),
    };
    let new_moments = moments_of(&DiscreteDistribution {
        points,
        weights: weights.clone(),
    });
    let gap = super::variance_risk_g_derivative(x, p, &new_moments)?;
    Ok(OracleOutput {
        eta_star: hi.eta,
        displacements,
        weights,
        source,
        new_moments: Some(new_moments),
        gap,
        primal_value,
        dual_value,
    })
}

/// Illinois regula falsi on `t(eta) - rho^2`, with periodic bisection.
fn refine(
    geom: &EllipsoidGeometry,
    x: &[f64],
    v: &[f64],
    rotated: &[Vec<f64>],
    mut lo: Eval,
    mut hi: Eval,
    rho2: f64,
) -> Result<(Eval, Eval)> {
    let mut flo = lo.t - rho2;
    let mut fhi = hi.t - rho2;
    let mut side = 0i8;
    for iter in 0..MAX_REFINE_STEPS {
        if hi.eta - lo.eta <= 1e-13 * hi.eta || (hi.t - rho2).abs() <= 1e-12 * rho2 {
            break;
        }
        let mut eta = (lo.eta * fhi - hi.eta * flo) / (fhi - flo);
        if iter % 4 == 3 || !(eta > lo.eta && eta < hi.eta) {
            eta = 0.5 * (lo.eta + hi.eta);
        }
        let e = evaluate(geom, x, v, rotated, eta)?;
        let f = e.t - rho2;
        if f > 0.0 {
            lo = e;
            flo = f;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = e;
            fhi = f;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok((lo, hi))
}
