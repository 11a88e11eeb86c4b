//! Finitely supported distributions, moment states and Wasserstein-ball
//! descriptions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, asymmetry, min_eigenvalue};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let d = Self { points, weights };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let k = points.len();
        if k == 0 {
            return Err(Error::Validation("distribution has no atoms".into()));
        }
        Self::new(points, vec![1.0 / k as f64; k])
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Validation("distribution has no atoms".into()));
        }
        if self.points.len() != self.weights.len() {
            return Err(Error::shape(self.points.len(), self.weights.len(), "weights"));
        }
        let n = self.points[0].len();
        if let Some(i) = self.points.iter().position(|p| p.len() != n) {
            return Err(Error::shape(n, self.points[i].len(), &format!("atom {i}")));
        }
        if let Some(i) = self.weights.iter().position(|w| !(*w >= 0.0)) {
            return Err(Error::Validation(format!(
                "weight {i} = {} is negative",
                self.weights[i]
            )));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("weights sum to {s}, not 1")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(1 - gamma) self + gamma other`, represented by concatenating atoms.
    pub fn mixture(&self, other: &Self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if self.dim() != other.dim() {
            return Err(Error::shape(self.dim(), other.dim(), "mixture components"));
        }
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        let mut weights: Vec<f64> = self.weights.iter().map(|w| (1.0 - gamma) * w).collect();
        weights.extend(other.weights.iter().map(|w| gamma * w));
        Ok(Self { points, weights })
    }
}

/// Second and first moments `(E[xi xi^T], E[xi])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMoments", into = "RawMoments")]
pub struct MomentState {
    pub sigma: DMatrix<f64>,
    pub mu: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMoments {
    sigma: Vec<Vec<f64>>,
    mu: Vec<f64>,
}

impl TryFrom<RawMoments> for MomentState {
    type Error = Error;
    fn try_from(r: RawMoments) -> Result<Self> {
        MomentState::new(linalg::rows_to_matrix(&r.sigma)?, DVector::from_vec(r.mu))
    }
}

impl From<MomentState> for RawMoments {
    fn from(m: MomentState) -> Self {
        RawMoments {
            sigma: linalg::matrix_to_rows(&m.sigma),
            mu: m.mu.iter().cloned().collect(),
        }
    }
}

pub const MOMENT_EIGEN_FLOOR: f64 = -1e-8;

impl MomentState {
    /// Builds a state, checking shapes and symmetry only. Use
    /// [`MomentState::validate`] to also check the covariance is PSD.
    pub fn new(sigma: DMatrix<f64>, mu: DVector<f64>) -> Result<Self> {
        let n = mu.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::Shape(format!(
                "sigma is {}x{}, mu has length {n}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let asym = asymmetry(&sigma);
        if asym > 1e-10 {
            return Err(Error::Validation(format!("sigma asymmetric by {asym:e}")));
        }
        Ok(Self { sigma, mu })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `Sigma - mu mu^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.sigma - &self.mu * self.mu.transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let lmin = min_eigenvalue(&self.covariance());
        if lmin < MOMENT_EIGEN_FLOOR {
            return Err(Error::Validation(format!(
                "covariance has eigenvalue {lmin:e} below {MOMENT_EIGEN_FLOOR:e}"
            )));
        }
        Ok(())
    }
}

/// Exact moments, accumulated atom by atom in index order.
pub fn moments_of(dist: &DiscreteDistribution) -> MomentState {
    let n = dist.dim();
    let mut sigma = DMatrix::zeros(n, n);
    let mut mu = DVector::zeros(n);
    for (xi, &w) in dist.points.iter().zip(&dist.weights) {
        for i in 0..n {
            mu[i] += w * xi[i];
            for j in 0..n {
                sigma[(i, j)] += w * xi[i] * xi[j];
            }
        }
    }
    MomentState { sigma, mu }
}

pub fn mix_moments(p: &MomentState, q: &MomentState, gamma: f64) -> Result<MomentState> {
    check_gamma(gamma)?;
    if p.dim() != q.dim() {
        return Err(Error::shape(p.dim(), q.dim(), "moment states"));
    }
    Ok(MomentState {
        sigma: &p.sigma + (&q.sigma - &p.sigma) * gamma,
        mu: &p.mu + (&q.mu - &p.mu) * gamma,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Validation(format!("step size {gamma} outside [0, 1]")));
    }
    Ok(())
}

/// Transportation norm. The dual norms are L2 and L1 respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormTag {
    #[default]
    L2,
    Linf,
}

impl NormTag {
    pub fn norm(self, q: &[f64]) -> f64 {
        match self {
            NormTag::L2 => linalg::norm2(q),
            NormTag::Linf => q.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        }
    }

    pub fn dual_norm(self, x: &[f64]) -> f64 {
        match self {
            NormTag::L2 => linalg::norm2(x),
            NormTag::Linf => x.iter().map(|v| v.abs()).sum(),
        }
    }

    /// A maximizer of `x^T q` over the unit ball. Zero coordinates of `x` get
    /// `+1` under L-infinity; `x = 0` under L2 yields the zero vector.
    pub fn argmax_unit(self, x: &[f64]) -> Vec<f64> {
        match self {
            NormTag::L2 => {
                let nx = linalg::norm2(x);
                if nx == 0.0 {
                    vec![0.0; x.len()]
                } else {
                    x.iter().map(|v| v / nx).collect()
                }
            }
            NormTag::Linf => x.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Support {
    #[default]
    Unconstrained,
    Ellipsoid {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
    },
    Finite {
        points: Vec<Vec<f64>>,
    },
}

impl Support {
    pub fn ellipsoid(m: &DMatrix<f64>) -> Self {
        Support::Ellipsoid {
            m: linalg::matrix_to_rows(m),
        }
    }

    pub fn ellipsoid_matrix(&self) -> Option<Result<DMatrix<f64>>> {
        match self {
            Support::Ellipsoid { m } => Some(linalg::rows_to_matrix(m)),
            _ => None,
        }
    }

    pub fn contains(&self, xi: &[f64], tol: f64) -> Result<bool> {
        Ok(match self {
            Support::Unconstrained => true,
            Support::Ellipsoid { m } => {
                let m = linalg::rows_to_matrix(m)?;
                linalg::quad_form(&m, xi) <= 1.0 + tol
            }
            Support::Finite { points } => points
                .iter()
                .any(|p| p.len() == xi.len() && linalg::norm2(&linalg::sub(p, xi)) <= tol),
        })
    }
}

/// A Wasserstein ball `{Q : W_m(nominal, Q) <= rho}` intersected with a
/// support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    #[serde(rename = "m")]
    pub order_m: u32,
    #[serde(rename = "rho")]
    pub radius_rho: f64,
    #[serde(rename = "norm", default)]
    pub norm_tag: NormTag,
    #[serde(default)]
    pub support: Support,
    #[serde(default)]
    pub nominal: DiscreteDistribution,
}

impl AmbiguitySpec {
    pub fn validate(&self) -> Result<()> {
        if self.order_m == 0 {
            return Err(Error::Validation("Wasserstein order m must be positive".into()));
        }
        if !(self.radius_rho >= 0.0) || !self.radius_rho.is_finite() {
            return Err(Error::Validation(format!(
                "radius rho = {} must be >= 0",
                self.radius_rho
            )));
        }
        self.nominal.validate()?;
        let n = self.nominal.dim();
        match &self.support {
            Support::Ellipsoid { .. } => {
                if self.norm_tag != NormTag::L2 {
                    return Err(Error::Validation(
                        "ellipsoidal support requires the l2 transportation norm".into(),
                    ));
                }
                let m = self.support.ellipsoid_matrix().unwrap()?;
                if m.nrows() != n {
                    return Err(Error::shape(n, m.nrows(), "ellipsoid matrix"));
                }
                let asym = asymmetry(&m);
                if asym > 1e-10 {
                    return Err(Error::Validation(format!("ellipsoid matrix asymmetric by {asym:e}")));
                }
                let lmin = min_eigenvalue(&m);
                if !(lmin > 0.0) {
                    return Err(Error::Validation(format!(
                        "ellipsoid matrix must be positive definite (min eigenvalue {lmin:e})"
                    )));
                }
            }
            Support::Finite { points } => {
                if let Some(i) = points.iter().position(|p| p.len() != n) {
                    return Err(Error::shape(n, points[i].len(), &format!("support point {i}")));
                }
            }
            Support::Unconstrained => {}
        }
        for (i, xi) in self.nominal.points.iter().enumerate() {
            if !self.support.contains(xi, 1e-8)? {
                return Err(Error::Validation(format!("nominal atom {i} lies outside the support")));
            }
        }
        Ok(())
    }
}

/// `((1/N) sum_i ||q_i||^m)^(1/m)`: the cost of the identity coupling between
/// a uniform nominal and its displaced copy.
pub fn perturbation_radius(displacements: &[Vec<f64>], order_m: u32, norm_tag: NormTag) -> f64 {
    let n = displacements.len();
    if n == 0 {
        return 0.0;
    }
    let w = vec![1.0 / n as f64; n];
    perturbation_radius_weighted(displacements, &w, order_m, norm_tag)
}

/// Weighted form: each displacement carries its own coupling mass.
pub fn perturbation_radius_weighted(
    displacements: &[Vec<f64>],
    weights: &[f64],
    order_m: u32,
    norm_tag: NormTag,
) -> f64 {
    let mut acc = 0.0;
    for (q, w) in displacements.iter().zip(weights) {
        acc += w * norm_tag.norm(q).powi(order_m as i32);
    }
    acc.powf(1.0 / order_m as f64)
}

/// Exact `W_m(p, q)` by solving the transportation LP with a dense simplex
/// method. Intended for small verification instances.
pub fn exact_wasserstein(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    order_m: u32,
    norm_tag: NormTag,
) -> Result<f64> {
    p.validate()?;
    q.validate()?;
    if order_m == 0 {
        return Err(Error::Validation("Wasserstein order m must be positive".into()));
    }
    if p.dim() != q.dim() {
        return Err(Error::shape(p.dim(), q.dim(), "distributions"));
    }
    if p.len() + q.len() > 64 {
        return Err(Error::Validation(format!(
            "exact transport limited to 64 atoms, got {}",
            p.len() + q.len()
        )));
    }
    let (a, b) = (p.len(), q.len());
    let nv = a * b;
    let mut cost = vec![0.0; nv];
    for i in 0..a {
        for j in 0..b {
            let d = linalg::sub(&p.points[i], &q.points[j]);
            cost[i * b + j] = norm_tag.norm(&d).powi(order_m as i32);
        }
    }
    // Row sums for all of p, column sums for q except the last (implied).
    let rows = a + b - 1;
    let mut mat = vec![vec![0.0; nv]; rows];
    let mut rhs = vec![0.0; rows];
    for i in 0..a {
        for j in 0..b {
            mat[i][i * b + j] = 1.0;
        }
        rhs[i] = p.weights[i];
    }
    for j in 0..(b - 1) {
        for i in 0..a {
            mat[a + j][i * b + j] = 1.0;
        }
        rhs[a + j] = q.weights[j];
    }
    let value = simplex_min(&mat, &rhs, &cost)?;
    Ok(value.max(0.0).powf(1.0 / order_m as f64))
}

/// Minimizes `c^T x` subject to `A x = b, x >= 0` (with `b >= 0`) by the
/// two-phase tableau simplex method using Bland's rule.
fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<f64> {
    const TOL: f64 = 1e-12;
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let pivot = |t: &mut Vec<Vec<f64>>, r: usize, col: usize| {
        let pv = t[r][col];
        for v in t[r].iter_mut() {
            *v /= pv;
        }
        let prow = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[col] != 0.0 {
                let f = row[col];
                for (v, pr) in row.iter_mut().zip(&prow) {
                    *v -= f * pr;
                }
            }
        }
    };

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| -> Result<()> {
        for _ in 0..50_000 {
            // Reduced costs d_j = c_j - c_B^T column_j.
            let mut enter = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, &bi) in basis.iter().enumerate() {
                    d -= cost[bi] * t[i][j];
                }
                if d < -TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if t[i][col] > TOL {
                    let ratio = t[i][width - 1] / t[i][col];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - TOL || (ratio <= lr + TOL && basis[i] < basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Unbounded("transportation LP".into()));
            };
            pivot(t, r, col);
            basis[r] = col;
        }
        Err(Error::NonConvergence {
            what: "transportation simplex".into(),
            residual: f64::NAN,
        })
    };

    // Phase one: minimise the artificial sum.
    let mut phase1 = vec![0.0; n + m];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    run(&mut t, &mut basis, &phase1, n + m)?;
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &bi)| bi >= n)
        .map(|(i, _)| t[i][width - 1])
        .sum();
    if infeas > 1e-9 {
        return Err(Error::Validation(format!("marginals infeasible (residual {infeas:e})")));
    }
    // Drive remaining (zero-level) artificials out of the basis.
    for r in 0..m {
        if basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| !basis.contains(&j) && t[r][j].abs() > 1e-9) {
                pivot(&mut t, r, col);
                basis[r] = col;
            }
        }
    }
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat(1e6).take(m));
    run(&mut t, &mut basis, &phase2, n)?;
    let mut value = 0.0;
    for (i, &bi) in basis.iter().enumerate() {
        if bi < n {
            value += c[bi] * t[i][width - 1];
        }
    }
    Ok(value)
}
