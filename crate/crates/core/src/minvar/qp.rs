//! The inner Markowitz problem
//! `min x^T (Sigma - mu mu^T) x + (a/2)||x||^2` over the simplex, optionally
//! intersected with a nominal return floor.

use nalgebra::{DMatrix, DVector};

use super::FeasibleSet;
use crate::ambiguity::MomentState;
use crate::error::{Error, Result};
use crate::linalg::{self, dot, max_eigenvalue, project_simplex};

pub const KKT_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 200_000;
const POLISH_EVERY: usize = 25;

/// Affine floor `a^T x >= b`.
type Floor<'a> = Option<(&'a [f64], f64)>;

fn floor_of<'a>(feasible: &FeasibleSet, mu_hat: &'a [f64]) -> Floor<'a> {
    match *feasible {
        FeasibleSet::Simplex => None,
        FeasibleSet::ReturnFloor { alpha_bar } => Some((mu_hat, alpha_bar)),
    }
}

/// Euclidean projection onto the feasible portfolio set.
pub fn project_feasible(y: &[f64], feasible: &FeasibleSet, mu_hat: &[f64]) -> Result<Vec<f64>> {
    project(y, floor_of(feasible, mu_hat))
}

fn project(y: &[f64], floor: Floor<'_>) -> Result<Vec<f64>> {
    let Some((a, b)) = floor else {
        return Ok(project_simplex(y));
    };
    let amax = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if amax < b {
        return Err(Error::Infeasible(format!(
            "return floor {b} exceeds the largest nominal mean return {amax}"
        )));
    }
    let x0 = project_simplex(y);
    if dot(a, &x0) >= b {
        return Ok(x0);
    }
    if amax - b <= 1e-12 * (1.0 + b.abs()) {
        // Only the face spanned by the best assets is feasible.
        let face: Vec<usize> = (0..a.len()).filter(|&i| a[i] >= b).collect();
        let sub: Vec<f64> = face.iter().map(|&i| y[i]).collect();
        let p = project_simplex(&sub);
        let mut x = vec![0.0; y.len()];
        for (k, &i) in face.iter().enumerate() {
            x[i] = p[k];
        }
        return Ok(x);
    }
    let shifted = |tau: f64| -> Vec<f64> {
        let z: Vec<f64> = y.iter().zip(a).map(|(yi, ai)| yi + tau * ai).collect();
        project_simplex(&z)
    };
    let mut hi = 1.0;
    let mut guard = 0;
    while dot(a, &shifted(hi)) < b {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Numerical("return-floor projection failed to bracket".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dot(a, &shifted(mid)) >= b {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(shifted(hi))
}

/// `||x - Proj(x - grad)||_inf`, zero exactly at KKT points.
pub fn natural_residual(x: &[f64], grad: &[f64], feasible: &FeasibleSet, mu_hat: &[f64]) -> Result<f64> {
    residual(x, grad, floor_of(feasible, mu_hat))
}

fn residual(x: &[f64], grad: &[f64], floor: Floor<'_>) -> Result<f64> {
    let y: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
    let p = project(&y, floor)?;
    Ok(x.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

fn gradient(h: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    linalg::mat_vec(h, x).into_iter().map(|v| 2.0 * v).collect()
}

/// Solves the equality-constrained problem on the support of `x`.
fn polish(h: &DMatrix<f64>, x: &[f64], floor: Floor<'_>) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 1e-10).collect();
    if support.is_empty() {
        return None;
    }
    let floor_active = floor.filter(|(a, b)| (dot(a, x) - b).abs() <= 1e-8 * (1.0 + b.abs()));
    let s = support.len();
    let extra = 1 + floor_active.is_some() as usize;
    let dim = s + extra;
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            kkt[(r, c)] = 2.0 * h[(i, j)];
        }
        kkt[(r, s)] = 1.0;
        kkt[(s, r)] = 1.0;
        if let Some((a, _)) = floor_active {
            kkt[(r, s + 1)] = a[i];
            kkt[(s + 1, r)] = a[i];
        }
    }
    rhs[s] = 1.0;
    if let Some((_, b)) = floor_active {
        rhs[s + 1] = b;
    }
    let sol = linalg::solve_min_norm(&kkt, &rhs)?;
    let mut out = vec![0.0; x.len()];
    for (r, &i) in support.iter().enumerate() {
        let v = sol[r];
        if !v.is_finite() || v < -1e-14 {
            return None;
        }
        out[i] = v.max(0.0);
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    for v in &mut out {
        *v /= total;
    }
    if let Some((a, b)) = floor {
        if dot(a, &out) < b - 1e-12 * (1.0 + b.abs()) {
            return None;
        }
    }
    Some(out)
}

/// Minimizes `x^T h x` over the feasible set by restarted FISTA with periodic
/// support polishing.
fn solve_qp(h: &DMatrix<f64>, floor: Floor<'_>) -> Result<(Vec<f64>, f64)> {
    let n = h.nrows();
    let lip = (2.0 * max_eigenvalue(h)).max(1e-300);
    let mut x = project(&vec![1.0 / n as f64; n], floor)?;
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best_res = f64::INFINITY;
    for it in 1..=MAX_ITERS {
        let gz = gradient(h, &z);
        let y: Vec<f64> = z.iter().zip(&gz).map(|(a, g)| a - g / lip).collect();
        let x_new = project(&y, floor)?;
        let diff: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        if dot(&gz, &diff) > 0.0 {
            t = 1.0;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        z = x_new.iter().zip(&diff).map(|(a, d)| a + beta * d).collect();
        x = x_new;
        t = t_new;
        if it % POLISH_EVERY == 0 {
            let gx = gradient(h, &x);
            let res = residual(&x, &gx, floor)?;
            best_res = best_res.min(res);
            if let Some(p) = polish(h, &x, floor) {
                let gp = gradient(h, &p);
                let rp = residual(&p, &gp, floor)?;
                if rp <= KKT_TOL && rp <= res {
                    let v = dot(&p, &linalg::mat_vec(h, &p));
                    return Ok((p, v));
                }
            }
            if res <= KKT_TOL * 1e-3 {
                let v = dot(&x, &linalg::mat_vec(h, &x));
                return Ok((x, v));
            }
        }
    }
    let gx = gradient(h, &x);
    let res = residual(&x, &gx, floor)?;
    if res <= KKT_TOL {
        let v = dot(&x, &linalg::mat_vec(h, &x));
        return Ok((x, v));
    }
    Err(Error::NonConvergence {
        what: "inner Markowitz solver".into(),
        residual: best_res.min(res),
    })
}

/// `argmin_x x^T (Sigma - mu mu^T) x + (reg_alpha/2) ||x||^2` over the
/// feasible set, with its objective value. `mu_hat` is the nominal mean used
/// by the return floor.
pub fn inner_markowitz(
    p: &MomentState,
    reg_alpha: f64,
    feasible_x: &FeasibleSet,
    mu_hat: &[f64],
) -> Result<(Vec<f64>, f64)> {
    if !(reg_alpha >= 0.0) {
        return Err(Error::Validation(format!("reg_alpha = {reg_alpha} must be >= 0")));
    }
    if mu_hat.len() != p.dim() {
        return Err(Error::shape(p.dim(), mu_hat.len(), "nominal mean"));
    }
    let mut h = linalg::symmetrize(&p.covariance());
    for i in 0..p.dim() {
        h[(i, i)] += 0.5 * reg_alpha;
    }
    solve_qp(&h, floor_of(feasible_x, mu_hat))
}
