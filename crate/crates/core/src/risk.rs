//! Regular risk measures `R(P) = r(E_P[L(xi)])` with concave, differentiable
//! `r`, their directional derivatives and smoothness constants.

use std::fmt;
use std::sync::Arc;

use crate::ambiguity::{DiscreteDistribution, MomentState};
use crate::error::{Error, Result};
use crate::linalg::dot;

type StatFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type ValueFn = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A regular risk measure: statistic `L`, outer function `r` with its
/// gradient, the curvature constant `beta` of `r` and the diameter `d` of the
/// set of expectations `E_P[L]` over the distributions of interest.
#[derive(Clone)]
pub struct RegularRiskSpec {
    pub name: String,
    l_map: StatFn,
    r_value: ValueFn,
    r_grad: GradFn,
    pub beta: f64,
    pub diameter_d: f64,
}

impl fmt::Debug for RegularRiskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegularRiskSpec")
            .field("name", &self.name)
            .field("beta", &self.beta)
            .field("diameter_d", &self.diameter_d)
            .finish()
    }
}

impl RegularRiskSpec {
    pub fn new(
        name: impl Into<String>,
        l_map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        r_value: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
        r_grad: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        beta: f64,
        diameter_d: f64,
    ) -> Self {
        Self {
            name: name.into(),
            l_map: Arc::new(l_map),
            r_value: Arc::new(r_value),
            r_grad: Arc::new(r_grad),
            beta,
            diameter_d,
        }
    }

    /// Variance of `xi` in `R^n`. The statistic is `(vec(xi xi^T), xi)`,
    /// flattened row-major with the mean block last.
    pub fn variance(n: usize, diameter_d: f64) -> Self {
        let value = move |m: &[f64]| -> Result<f64> {
            check_len(m, n * n + n, "variance moments")?;
            let trace: f64 = (0..n).map(|i| m[i * n + i]).sum();
            let mu = &m[n * n..];
            Ok(trace - dot(mu, mu))
        };
        let grad = move |m: &[f64]| -> Result<Vec<f64>> {
            check_len(m, n * n + n, "variance moments")?;
            let mut g = vec![0.0; n * n + n];
            for i in 0..n {
                g[i * n + i] = 1.0;
                g[n * n + i] = -2.0 * m[n * n + i];
            }
            Ok(g)
        };
        let stat = move |xi: &[f64]| -> Vec<f64> {
            let mut out = Vec::with_capacity(n * n + n);
            for a in xi {
                for b in xi {
                    out.push(a * b);
                }
            }
            out.extend_from_slice(xi);
            out
        };
        Self::new("variance", stat, value, grad, 2.0, diameter_d)
    }

    /// Entropic risk `sum_j (1/theta_j) log E[exp(-theta_j xi_j)]`.
    pub fn entropic(params: &EntropicParams, diameter_d: f64) -> Self {
        let p1 = params.clone();
        let p2 = params.clone();
        let p3 = params.clone();
        Self::new(
            "entropic",
            move |xi: &[f64]| entropic_statistic(&p1, xi),
            move |z: &[f64]| entropic_value(&p2, z),
            move |z: &[f64]| {
                check_len(z, p3.theta.len(), "entropic moments")?;
                check_positive(z)?;
                Ok(z.iter().zip(&p3.theta).map(|(zj, th)| 1.0 / (th * zj)).collect())
            },
            params.beta(),
            diameter_d,
        )
    }

    pub fn statistic(&self, xi: &[f64]) -> Vec<f64> {
        (self.l_map)(xi)
    }

    /// `E_P[L(xi)]`, summed over atoms in index order.
    pub fn expectation(&self, dist: &DiscreteDistribution) -> Vec<f64> {
        let mut acc: Vec<f64> = Vec::new();
        for (xi, &w) in dist.points.iter().zip(&dist.weights) {
            let l = self.statistic(xi);
            if acc.is_empty() {
                acc = vec![0.0; l.len()];
            }
            for (a, v) in acc.iter_mut().zip(&l) {
                *a += w * v;
            }
        }
        acc
    }

    pub fn value_of(&self, dist: &DiscreteDistribution) -> Result<f64> {
        rr_value(self, &self.expectation(dist))
    }
}

pub fn rr_value(spec: &RegularRiskSpec, moments: &[f64]) -> Result<f64> {
    (spec.r_value)(moments)
}

/// Directional derivative `<grad r(m_p), m_q - m_p>`.
pub fn rr_g_derivative(spec: &RegularRiskSpec, moments_p: &[f64], moments_q: &[f64]) -> Result<f64> {
    if moments_p.len() != moments_q.len() {
        return Err(Error::shape(moments_p.len(), moments_q.len(), "moment vectors"));
    }
    // Validate both points lie in the domain of r.
    (spec.r_value)(moments_q)?;
    let g = (spec.r_grad)(moments_p)?;
    let mut acc = 0.0;
    for i in 0..g.len() {
        acc += g[i] * (moments_q[i] - moments_p[i]);
    }
    Ok(acc)
}

/// `C = beta * d^2`.
pub fn smoothness_constant(spec: &RegularRiskSpec) -> f64 {
    spec.beta * spec.diameter_d * spec.diameter_d
}

/// Heuristic diameter: largest pairwise distance between visited expectation
/// vectors. It only lower-bounds the true diameter, so it is never certified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiameterEstimate {
    pub value: f64,
    pub certified: bool,
}

pub fn estimate_diameter(visited: &[Vec<f64>]) -> DiameterEstimate {
    let mut best = 0.0f64;
    for i in 0..visited.len() {
        for j in (i + 1)..visited.len() {
            let d: f64 = visited[i]
                .iter()
                .zip(&visited[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.max(d);
        }
    }
    DiameterEstimate {
        value: best,
        certified: false,
    }
}

// ---------------------------------------------------------------- variance

pub fn variance_value(p: &MomentState) -> f64 {
    p.sigma.trace() - p.mu.dot(&p.mu)
}

/// `tr(Sigma_Q - Sigma_P) - 2 mu_P^T (mu_Q - mu_P)`.
pub fn variance_g_derivative(p: &MomentState, q: &MomentState) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::shape(p.dim(), q.dim(), "moment states"));
    }
    let n = p.dim();
    let mut tr = 0.0;
    let mut lin = 0.0;
    for i in 0..n {
        tr += q.sigma[(i, i)] - p.sigma[(i, i)];
        lin += p.mu[i] * (q.mu[i] - p.mu[i]);
    }
    Ok(tr - 2.0 * lin)
}

// ---------------------------------------------------------------- entropic

/// Limit on `|theta_j xi_j|` keeping `exp` comfortably inside f64 range.
pub const ENTROPIC_EXPONENT_LIMIT: f64 = 500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EntropicParams {
    pub theta: Vec<f64>,
    pub b_lower: f64,
}

impl EntropicParams {
    pub fn new(theta: Vec<f64>, b_lower: f64) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Validation("entropic: theta is empty".into()));
        }
        if let Some(j) = theta.iter().position(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Validation(format!(
                "entropic: theta[{j}] = {} must be positive",
                theta[j]
            )));
        }
        if !(b_lower > 0.0) || !b_lower.is_finite() {
            return Err(Error::Validation(format!(
                "entropic: b_lower = {b_lower} must be positive"
            )));
        }
        Ok(Self { theta, b_lower })
    }

    /// Lower bound from a support box with coordinate maxima `xi_max`:
    /// `b = min_j exp(-theta_j xi_max_j)`.
    pub fn from_support_box(theta: Vec<f64>, xi_max: &[f64]) -> Result<Self> {
        if theta.len() != xi_max.len() {
            return Err(Error::shape(theta.len(), xi_max.len(), "support box"));
        }
        let mut b = f64::INFINITY;
        for (j, (t, x)) in theta.iter().zip(xi_max).enumerate() {
            let e = t * x;
            if e.abs() > ENTROPIC_EXPONENT_LIMIT {
                return Err(Error::Domain(format!(
                    "coordinate {j}: |theta*xi_max| = {} exceeds {ENTROPIC_EXPONENT_LIMIT}",
                    e.abs()
                )));
            }
            b = b.min((-e).exp());
        }
        Self::new(theta, b)
    }

    pub fn theta_min(&self) -> f64 {
        self.theta.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `beta = 1 / (b^2 theta_min)`.
    pub fn beta(&self) -> f64 {
        1.0 / (self.b_lower * self.b_lower * self.theta_min())
    }
}

fn entropic_statistic(params: &EntropicParams, xi: &[f64]) -> Vec<f64> {
    xi.iter().zip(&params.theta).map(|(x, t)| (-t * x).exp()).collect()
}

/// Per-coordinate `E_P[exp(-theta_j xi_j)]` over a discrete distribution.
pub fn entropic_marginals(params: &EntropicParams, dist: &DiscreteDistribution) -> Result<Vec<f64>> {
    let n = params.theta.len();
    if dist.dim() != n {
        return Err(Error::shape(n, dist.dim(), "entropic marginals"));
    }
    let mut acc = vec![0.0; n];
    for (xi, &w) in dist.points.iter().zip(&dist.weights) {
        for j in 0..n {
            let e = params.theta[j] * xi[j];
            if e.abs() > ENTROPIC_EXPONENT_LIMIT {
                return Err(Error::Domain(format!(
                    "coordinate {j}: |theta*xi| = {} exceeds {ENTROPIC_EXPONENT_LIMIT}",
                    e.abs()
                )));
            }
            acc[j] += w * (-e).exp();
        }
    }
    Ok(acc)
}

pub fn entropic_value(params: &EntropicParams, z: &[f64]) -> Result<f64> {
    check_len(z, params.theta.len(), "entropic moments")?;
    check_positive(z)?;
    Ok(z.iter().zip(&params.theta).map(|(zj, t)| zj.ln() / t).sum())
}

/// `sum_j (e_q[j] - e_p[j]) / (theta_j e_p[j])`.
pub fn entropic_g_derivative(params: &EntropicParams, e_p: &[f64], e_q: &[f64]) -> Result<f64> {
    let n = params.theta.len();
    check_len(e_p, n, "e_p")?;
    check_len(e_q, n, "e_q")?;
    check_positive(e_p)?;
    let mut acc = 0.0;
    for j in 0..n {
        acc += (e_q[j] - e_p[j]) / (params.theta[j] * e_p[j]);
    }
    Ok(acc)
}

// ----------------------------------------------------------- finite support

/// An arbitrary smooth concave risk of the weight vector of a fixed
/// `n_atoms`-point support, given by value and gradient closures.
#[derive(Clone)]
pub struct FiniteSupportRiskSpec {
    pub n_atoms: usize,
    value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    gradient: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub beta_prime: f64,
}

impl fmt::Debug for FiniteSupportRiskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteSupportRiskSpec")
            .field("n_atoms", &self.n_atoms)
            .field("beta_prime", &self.beta_prime)
            .finish()
    }
}

impl FiniteSupportRiskSpec {
    pub fn new(
        n_atoms: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        beta_prime: f64,
    ) -> Self {
        Self {
            n_atoms,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            beta_prime,
        }
    }

    pub fn value(&self, p: &[f64]) -> Result<f64> {
        check_simplex(p, self.n_atoms)?;
        Ok((self.value)(p))
    }

    pub fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_simplex(p, self.n_atoms)?;
        Ok((self.gradient)(p))
    }

    /// `beta' * diam(simplex)^2` with the Euclidean simplex diameter `sqrt 2`.
    pub fn smoothness_constant(&self) -> f64 {
        2.0 * self.beta_prime
    }
}

/// `grad R(p)^T (q - p)`.
pub fn finite_support_g_derivative(spec: &FiniteSupportRiskSpec, p: &[f64], q: &[f64]) -> Result<f64> {
    check_simplex(q, spec.n_atoms)?;
    let g = spec.gradient(p)?;
    let mut acc = 0.0;
    for i in 0..spec.n_atoms {
        acc += g[i] * (q[i] - p[i]);
    }
    Ok(acc)
}

pub(crate) fn check_simplex(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::shape(n, p.len(), "simplex vector"));
    }
    if let Some(i) = p.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Validation(format!("weight {i} = {} is negative", p[i])));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::Validation(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::shape(n, v.len(), what));
    }
    Ok(())
}

fn check_positive(z: &[f64]) -> Result<()> {
    if let Some(j) = z.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!(
            "coordinate {j}: argument {} of log must be positive",
            z[j]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dist(rng: &mut ChaCha8Rng, atoms: usize, n: usize) -> DiscreteDistribution {
        let points = (0..atoms)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut w: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        DiscreteDistribution::new(points, w).unwrap()
    }

    #[test]
    fn variance_trivial_values() {
        let spec = RegularRiskSpec::variance(2, 1.0);
        assert_eq!(rr_value(&spec, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(), 2.0);
        let p = MomentState::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let q = MomentState::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2)).unwrap();
        assert_eq!(variance_g_derivative(&p, &q).unwrap(), 2.0);
        assert_eq!(variance_g_derivative(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn variance_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dist(&mut rng, 3, 2);
        let spec = RegularRiskSpec::variance(2, 1.0);
        let got = spec.value_of(&d).unwrap();
        let mut mean = [0.0; 2];
        for (x, w) in d.points.iter().zip(&d.weights) {
            mean[0] += w * x[0];
            mean[1] += w * x[1];
        }
        let mut want = 0.0;
        for (x, w) in d.points.iter().zip(&d.weights) {
            want += w * ((x[0] - mean[0]).powi(2) + (x[1] - mean[1]).powi(2));
        }
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn entropic_trivial_values() {
        let p = EntropicParams::new(vec![1.0], 0.5).unwrap();
        assert_eq!(entropic_value(&p, &[1.0]).unwrap(), 0.0);
        let p2 = EntropicParams::new(vec![2.0], 0.5).unwrap();
        assert_eq!(entropic_g_derivative(&p2, &[1.0], &[3.0]).unwrap(), 1.0);
        assert_eq!(entropic_g_derivative(&p2, &[1.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn entropic_domain_error_names_coordinate() {
        let p = EntropicParams::new(vec![1.0, 1.0], 0.5).unwrap();
        let err = entropic_value(&p, &[1.0, -0.5]).unwrap_err();
        assert!(matches!(err, Error::Domain(ref s) if s.contains("coordinate 1")));
        assert!(entropic_g_derivative(&p, &[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn entropic_derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = EntropicParams::from_support_box(vec![0.5, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        let spec = RegularRiskSpec::entropic(&params, 1.0);
        for _ in 0..20 {
            let p = random_dist(&mut rng, 4, 3);
            let q = random_dist(&mut rng, 4, 3);
            let ep = entropic_marginals(&params, &p).unwrap();
            let eq = entropic_marginals(&params, &q).unwrap();
            let d = entropic_g_derivative(&params, &ep, &eq).unwrap();
            let d2 = rr_g_derivative(&spec, &ep, &eq).unwrap();
            assert!((d - d2).abs() < 1e-12);
            let g = 1e-6;
            let mix = p.mixture(&q, g).unwrap();
            let fd = (spec.value_of(&mix).unwrap() - spec.value_of(&p).unwrap()) / g;
            assert!((fd - d).abs() < 1e-5 * (1.0 + d.abs()), "{fd} vs {d}");
        }
    }

    #[test]
    fn finite_support_linear_is_exact() {
        let c = vec![1.0, -2.0, 0.5];
        let c2 = c.clone();
        let spec = FiniteSupportRiskSpec::new(3, move |p: &[f64]| dot(&c2, p), move |_: &[f64]| c.clone(), 0.0);
        let p = [0.2, 0.3, 0.5];
        let q = [1.0, 0.0, 0.0];
        let d = finite_support_g_derivative(&spec, &p, &q).unwrap();
        assert!((d - (0.8 * 1.0 - 0.3 * -2.0 - 0.5 * 0.5)).abs() < 1e-15);
        assert!(finite_support_g_derivative(&spec, &p, &[0.5, 0.6, 0.0]).is_err());
        assert_eq!(spec.smoothness_constant(), 0.0);
    }

    #[test]
    fn smoothness_constants() {
        assert_eq!(smoothness_constant(&RegularRiskSpec::variance(3, 1.0)), 2.0);
        let p = EntropicParams::new(vec![2.0, 3.0], 0.5).unwrap();
        assert_eq!(smoothness_constant(&RegularRiskSpec::entropic(&p, 1.0)), 2.0);
        let spec = RegularRiskSpec::new(
            "affine",
            |x: &[f64]| x.to_vec(),
            |m: &[f64]| Ok(m[0]),
            |_: &[f64]| Ok(vec![1.0]),
            0.0,
            3.0,
        );
        assert_eq!(smoothness_constant(&spec), 0.0);
    }

    #[test]
    fn support_box_bound_and_limit() {
        let p = EntropicParams::from_support_box(vec![1.0, 2.0], &[1.0, 0.5]).unwrap();
        assert!((p.b_lower - (-1.0f64).exp()).abs() < 1e-15);
        assert!(EntropicParams::from_support_box(vec![1.0], &[600.0]).is_err());
        assert!(EntropicParams::new(vec![0.0], 1.0).is_err());
    }

    #[test]
    fn diameter_estimate_is_not_certified() {
        let e = estimate_diameter(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![1.0, 1.0]]);
        assert_eq!(e.value, 5.0);
        assert!(!e.certified);
    }
}
