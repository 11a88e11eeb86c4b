use serde::{Deserialize, Serialize};

use super::MinVarInstance;
use crate::ambiguity::{moments_of, NormTag, Support};
use crate::error::{Error, Result};
use crate::linalg::{self, dot};

/// Moment-diameter bounds and the derived regularity constants of the
/// variance objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    /// Bound on `||mu_P - mu_Q||_2`.
    pub b_mu: f64,
    /// Bound on `||Sigma_P - Sigma_Q||_2` (operator norm).
    pub b_sigma: f64,
    pub c1: f64,
    /// `2 b_mu^2`.
    pub c2: f64,
}

impl RegularityConstants {
    pub fn from_bounds(b_mu: f64, b_sigma: f64, mu_hat_norm: f64) -> Self {
        let c2 = 2.0 * b_mu * b_mu;
        let c1 = 2.0 * (b_sigma + 2.0 * (b_mu + mu_hat_norm).powi(2) + b_mu * b_mu);
        Self { b_mu, b_sigma, c1, c2 }
    }
}

pub fn regularity_constants(instance: &MinVarInstance) -> Result<RegularityConstants> {
    let amb = &instance.ambiguity;
    let p_hat = moments_of(&amb.nominal);
    let mu_norm = dot(p_hat.mu.as_slice(), p_hat.mu.as_slice()).sqrt();
    let rho = amb.radius_rho;
    if rho == 0.0 {
        return Ok(RegularityConstants::from_bounds(0.0, 0.0, mu_norm));
    }
    match &amb.support {
        Support::Ellipsoid { .. } => {
            let m = amb.support.ellipsoid_matrix().expect("ellipsoid")?;
            let lmin = linalg::min_eigenvalue(&m);
            if !(lmin > 0.0) {
                return Err(Error::Validation("ellipsoid matrix must be positive definite".into()));
            }
            let r = 1.0 / lmin.sqrt();
            let (b_mu, b_sigma) = (2.0 * r, 2.0 * r * r);
            Ok(RegularityConstants::from_bounds(b_mu, b_sigma, mu_norm))
        }
        Support::Finite { points } => {
            let r = points.iter().map(|z| linalg::norm2(z)).fold(0.0, f64::max);
            Ok(RegularityConstants::from_bounds(2.0 * r, 2.0 * r * r, mu_norm))
        }
        Support::Unconstrained => {
            if amb.order_m < 2 {
                return Err(Error::Unbounded(format!(
                    "order m = {} < 2 on unbounded support: no finite moment bounds",
                    amb.order_m
                )));
            }
            // ||q||_2 <= kappa ||q|| for the transportation norm.
            let kappa = match amb.norm_tag {
                NormTag::L2 => 1.0,
                NormTag::Linf => (instance.n() as f64).sqrt(),
            };
            let b_mu = 2.0 * rho * kappa;
            let b_sigma = instance.b_sigma.unwrap_or_else(|| {
                let tr = p_hat.covariance().trace().max(0.0);
                2.0 * (2.0 * rho * kappa * tr.sqrt() + rho * rho * kappa * kappa)
            });
            Ok(RegularityConstants::from_bounds(b_mu, b_sigma, mu_norm))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::{moments_of, DiscreteDistribution};
    use crate::minvar::FeasibleSet;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_ball() {
        let inst = MinVarInstance::new(
            vec![vec![0.5, 0.0], vec![-0.5, 0.0]],
            0.2,
            2,
            NormTag::L2,
            Support::ellipsoid(&DMatrix::identity(2, 2)),
            FeasibleSet::Simplex,
            0.0,
        )
        .unwrap();
        let c = regularity_constants(&inst).unwrap();
        assert_eq!((c.b_mu, c.b_sigma, c.c2, c.c1), (2.0, 2.0, 8.0, 28.0));
    }

    #[test]
    fn zero_radius() {
        let inst = MinVarInstance::new(
            vec![vec![1.0, 0.0], vec![1.0, 2.0]],
            0.0,
            2,
            NormTag::L2,
            Support::Unconstrained,
            FeasibleSet::Simplex,
            0.0,
        )
        .unwrap();
        let c = regularity_constants(&inst).unwrap();
        assert_eq!((c.b_mu, c.b_sigma, c.c2), (0.0, 0.0, 0.0));
        assert!((c.c1 - 4.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_low_order() {
        let inst = MinVarInstance::new(
            vec![vec![1.0, 0.0]],
            0.5,
            1,
            NormTag::L2,
            Support::Unconstrained,
            FeasibleSet::Simplex,
            0.0,
        )
        .unwrap();
        assert!(matches!(regularity_constants(&inst), Err(Error::Unbounded(_))));
    }

    fn random_in_ellipsoid(rng: &mut ChaCha8Rng, m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        loop {
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            if linalg::quad_form(m, &z) <= 1.0 {
                return z;
            }
        }
    }

    #[test]
    fn ellipsoid_audit() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let m = &a * a.transpose() + DMatrix::identity(3, 3) * 0.4;
        let samples: Vec<Vec<f64>> = (0..4).map(|_| random_in_ellipsoid(&mut rng, &m)).collect();
        let inst = MinVarInstance::new(
            samples,
            0.3,
            2,
            NormTag::L2,
            Support::ellipsoid(&m),
            FeasibleSet::Simplex,
            0.0,
        )
        .unwrap();
        let c = regularity_constants(&inst).unwrap();
        for _ in 0..1000 {
            let k = rng.random_range(1..5);
            let p = DiscreteDistribution::uniform((0..k).map(|_| random_in_ellipsoid(&mut rng, &m)).collect()).unwrap();
            let q = DiscreteDistribution::uniform((0..k).map(|_| random_in_ellipsoid(&mut rng, &m)).collect()).unwrap();
            let (mp, mq) = (moments_of(&p), moments_of(&q));
            assert!((&mp.mu - &mq.mu).norm() <= c.b_mu + 1e-12);
            let d = &mp.sigma - &mq.sigma;
            let op = linalg::max_eigenvalue(&d).abs().max(linalg::min_eigenvalue(&d).abs());
            assert!(op <= c.b_sigma + 1e-12);
        }
    }
}
