//! Quadratic maximization over an ellipsoid (generalized trust-region
//! subproblem):
//!
//! `max q^T (x x^T - eta I) q + 2 q^T (eta xi - x x^T v) + (x^T v)^2 - eta ||xi||^2`
//! subject to `q^T M q <= 1`.
//!
//! Substituting `y = M^{1/2} q` gives a standard trust-region problem on the
//! unit ball, solved by eigendecomposition and a safeguarded Newton iteration
//! on the secular equation `1/||y(mu)|| = 1`. The multiplier `mu` is the
//! S-lemma multiplier of the ellipsoid constraint, so the maximizer satisfies
//! `(eta I - x x^T + mu M) q = eta xi - x x^T v`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, asymmetry, dot};

/// Eigenbasis of a positive definite ellipsoid matrix `M = V diag(l) V^T`.
#[derive(Debug, Clone)]
pub struct EllipsoidGeometry {
    pub m: DMatrix<f64>,
    /// Eigenvalues of `M`, ascending.
    pub eigenvalues: Vec<f64>,
    pub basis: DMatrix<f64>,
    basis_t: DMatrix<f64>,
    /// `1 / sqrt(l_j)`.
    inv_sqrt: Vec<f64>,
}

impl EllipsoidGeometry {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Shape("ellipsoid matrix must be square and nonempty".into()));
        }
        if asymmetry(m) > 1e-10 {
            return Err(Error::Validation("ellipsoid matrix is not symmetric".into()));
        }
        let (vals, vecs) = linalg::sorted_eigen(m);
        if !(vals[0] > 0.0) {
            return Err(Error::Validation(format!(
                "ellipsoid matrix must be positive definite (min eigenvalue {:e})",
                vals[0]
            )));
        }
        let inv_sqrt = vals.iter().map(|l| 1.0 / l.sqrt()).collect();
        Ok(Self {
            m: m.clone(),
            basis_t: vecs.transpose(),
            basis: vecs,
            eigenvalues: vals,
            inv_sqrt,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Radius `1 / sqrt(lambda_min(M))` of the smallest centred ball
    /// containing the ellipsoid.
    pub fn radius(&self) -> f64 {
        1.0 / self.eigenvalues[0].sqrt()
    }

    pub fn to_basis(&self, v: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.basis_t, v)
    }

    pub fn from_basis(&self, z: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.basis, z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtrsSolution {
    pub q_prime: Vec<f64>,
    pub lambda: f64,
    pub value: f64,
    /// `||q' - xi||^2`.
    pub transport: f64,
    /// The linear term had no component on the bottom eigenspace and the
    /// boundary was reached along that eigenvector.
    pub hard_case: bool,
    /// The shifted matrix is singular at the solution; a pseudo-inverse
    /// branch was used.
    pub singular: bool,
}

/// Solution in the rotated coordinates before mapping back.
#[derive(Debug, Clone)]
pub(crate) struct LocalSolution {
    /// `V^T q'`.
    pub q_basis: Vec<f64>,
    pub lambda: f64,
    pub value: f64,
    pub transport: f64,
    pub hard_case: bool,
    pub singular: bool,
}

/// Shared data for all samples at fixed `(x, v, eta)`: the eigensystem of
/// `B = eta D - u u^T` with `D = diag(1/l)` and `u = D^{1/2} V^T x`.
pub(crate) struct GtrsBatch<'g> {
    geom: &'g EllipsoidGeometry,
    eta: f64,
    xv: f64,
    u: Vec<f64>,
    lam: Vec<f64>,
    q: DMatrix<f64>,
    q_t: DMatrix<f64>,
}

impl<'g> GtrsBatch<'g> {
    pub fn new(geom: &'g EllipsoidGeometry, x: &[f64], v: &[f64], eta: f64) -> Result<Self> {
        let n = geom.dim();
        if x.len() != n || v.len() != n {
            return Err(Error::shape(n, x.len(), "portfolio"));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::Validation(format!("eta = {eta} must be finite and >= 0")));
        }
        let xt = geom.to_basis(x);
        let u: Vec<f64> = xt.iter().zip(&geom.inv_sqrt).map(|(a, s)| a * s).collect();
        let b = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j {
                eta * geom.inv_sqrt[i] * geom.inv_sqrt[i]
            } else {
                0.0
            };
            diag - u[i] * u[j]
        });
        let (lam, q) = linalg::sorted_eigen(&b);
        Ok(Self {
            geom,
            eta,
            xv: dot(x, v),
            u,
            lam,
            q_t: q.transpose(),
            q,
        })
    }

    /// Solves for one sample given in rotated coordinates `xi_basis = V^T xi`.
    pub fn solve(&self, xi_basis: &[f64]) -> LocalSolution {
        let n = self.lam.len();
        let eta = self.eta;
        let c: Vec<f64> = (0..n)
            .map(|j| eta * self.geom.inv_sqrt[j] * xi_basis[j] - self.xv * self.u[j])
            .collect();
        let c_hat = linalg::mat_vec(&self.q_t, &c);
        let trs = trust_region(&self.lam, &c_hat);
        let y = linalg::mat_vec(&self.q, &trs.y);
        let q_basis: Vec<f64> = y.iter().zip(&self.geom.inv_sqrt).map(|(a, s)| a * s).collect();
        let mut lin = 0.0;
        for j in 0..n {
            lin += 2.0 * c_hat[j] * trs.y[j] - self.lam[j] * trs.y[j] * trs.y[j];
        }
        let xi2 = dot(xi_basis, xi_basis);
        let value = lin + self.xv * self.xv - eta * xi2;
        let mut transport = 0.0;
        for j in 0..n {
            let d = q_basis[j] - xi_basis[j];
            transport += d * d;
        }
        LocalSolution {
            q_basis,
            lambda: trs.mu,
            value,
            transport,
            hard_case: trs.hard_case,
            singular: trs.singular,
        }
    }
}

struct Trs {
    y: Vec<f64>,
    mu: f64,
    hard_case: bool,
    singular: bool,
}

/// `min y^T diag(lam) y - 2 c^T y` subject to `||y|| <= 1`, with `lam`
/// ascending. Returns the minimizer and its multiplier.
fn trust_region(lam: &[f64], c: &[f64]) -> Trs {
    let n = lam.len();
    let lam_scale = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = lam_scale.max(c_norm).max(1e-300);
    let tol_eig = 1e-12 * lam_scale.max(1e-300);
    let l1 = lam[0];

    let norm2 = |mu: f64| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            let d = lam[j] + mu;
            s += c[j] * c[j] / (d * d);
        }
        s
    };

    if l1 > tol_eig && norm2(0.0) <= 1.0 {
        return Trs {
            y: (0..n).map(|j| c[j] / lam[j]).collect(),
            mu: 0.0,
            hard_case: false,
            singular: false,
        };
    }

    let lo = (-l1).max(0.0);
    let bottom: Vec<usize> = (0..n).filter(|&j| lam[j] - l1 <= tol_eig).collect();
    let c_bottom = bottom.iter().map(|&j| c[j] * c[j]).sum::<f64>().sqrt();

    if l1 <= tol_eig && c_bottom <= 1e-13 * scale {
        let mut rest = 0.0;
        for j in 0..n {
            if !bottom.contains(&j) {
                let d = lam[j] + lo;
                rest += c[j] * c[j] / (d * d);
            }
        }
        if rest <= 1.0 {
            let mut y = vec![0.0; n];
            for j in 0..n {
                if !bottom.contains(&j) {
                    y[j] = c[j] / (lam[j] + lo);
                }
            }
            // A strictly negative bottom eigenvalue forces the boundary; a
            // zero one leaves the objective flat, so stay at the minimum-norm
            // point.
            let j1 = bottom[0];
            let hard = l1 < -tol_eig;
            if hard {
                let sign = if c[j1] < 0.0 { -1.0 } else { 1.0 };
                y[j1] = sign * (1.0 - rest).max(0.0).sqrt();
            }
            return Trs {
                y,
                mu: lo,
                hard_case: hard,
                singular: true,
            };
        }
    }

    // Secular equation psi(mu) = 1/||y(mu)|| - 1 on (lo, lo + ||c||].
    let psi = |mu: f64| -> (f64, f64) {
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        for j in 0..n {
            let d = lam[j] + mu;
            if d <= 0.0 {
                return (-1.0, f64::INFINITY);
            }
            let cj2 = c[j] * c[j];
            s2 += cj2 / (d * d);
            s3 += cj2 / (d * d * d);
        }
        if s2 == 0.0 {
            return (f64::INFINITY, 0.0);
        }
        let nrm = s2.sqrt();
        (1.0 / nrm - 1.0, s3 / (s2 * nrm))
    };
    let mut a = lo;
    let mut b = lo + c_norm;
    let mut mu = if l1 > tol_eig { 0.0 } else { lo + c_bottom };
    if !(mu > a && mu < b) {
        mu = 0.5 * (a + b);
    }
    for _ in 0..300 {
        let (f, df) = psi(mu);
        if f.abs() <= 1e-15 {
            break;
        }
        if f < 0.0 {
            a = mu;
        } else {
            b = mu;
        }
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(1e-300) {
            break;
        }
        let mut next = mu - f / df;
        if !(next > a && next < b) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        mu = next;
    }
    let y: Vec<f64> = (0..n).map(|j| c[j] / (lam[j] + mu)).collect();
    Trs {
        y,
        mu,
        hard_case: false,
        singular: false,
    }
}

/// Solves a single subproblem in the original coordinates.
pub fn gtrs_subproblem(x: &[f64], eta: f64, xi: &[f64], v: &[f64], m: &DMatrix<f64>) -> Result<GtrsSolution> {
    let geom = EllipsoidGeometry::new(m)?;
    if xi.len() != geom.dim() {
        return Err(Error::shape(geom.dim(), xi.len(), "sample"));
    }
    let batch = GtrsBatch::new(&geom, x, v, eta)?;
    let local = batch.solve(&geom.to_basis(xi));
    Ok(GtrsSolution {
        q_prime: geom.from_basis(&local.q_basis),
        lambda: local.lambda,
        value: local.value,
        transport: local.transport,
        hard_case: local.hard_case,
        singular: local.singular,
    })
}

/// The block matrix certifying `sup <= -theta` via the S-lemma.
pub fn lmi_matrix(
    x: &[f64],
    eta: f64,
    xi: &[f64],
    v: &[f64],
    m: &DMatrix<f64>,
    lambda: f64,
    theta: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let xv = dot(x, v);
    let mut out = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { eta } else { 0.0 };
            out[(i, j)] = id - x[i] * x[j] + lambda * m[(i, j)];
        }
        let off = x[i] * xv - eta * xi[i];
        out[(i, n)] = off;
        out[(n, i)] = off;
    }
    out[(n, n)] = eta * dot(xi, xi) - xv * xv - lambda - theta;
    out
}
