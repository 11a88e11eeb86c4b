use super::ellipsoidal::oracle_with_geometry;
use super::gtrs::EllipsoidGeometry;
use super::{inner_markowitz, oracle_unconstrained, regularity_constants, MinVarInstance, OracleOutput};
use crate::ambiguity::{mix_moments, moments_of, MomentState, Support};
use crate::error::{Error, Result};
use crate::fw::OracleStep;
use crate::linalg::dot;
use crate::saddle::{L2Regularizable, NdroConstants, NdroProblem};

/// `F(x, P) = x^T (Sigma_P - mu_P mu_P^T) x + (reg_alpha/2) ||x||^2` over a
/// Wasserstein ball, with moment states as the distribution representation.
#[derive(Debug, Clone)]
pub struct MinVarProblem {
    pub instance: MinVarInstance,
    mu_hat: Vec<f64>,
    geometry: Option<(EllipsoidGeometry, Vec<Vec<f64>>)>,
}

impl MinVarProblem {
    pub fn new(instance: MinVarInstance) -> Result<Self> {
        instance.validate()?;
        let geometry = match &instance.ambiguity.support {
            Support::Ellipsoid { .. } => {
                let m = instance.ambiguity.support.ellipsoid_matrix().expect("ellipsoid")?;
                let g = EllipsoidGeometry::new(&m)?;
                let rotated = instance.samples().iter().map(|xi| g.to_basis(xi)).collect();
                Some((g, rotated))
            }
            Support::Unconstrained => None,
            Support::Finite { .. } => {
                return Err(Error::Validation("no min-variance oracle for finite support".into()));
            }
        };
        let mu_hat = moments_of(&instance.ambiguity.nominal).mu.iter().cloned().collect();
        Ok(Self {
            instance,
            mu_hat,
            geometry,
        })
    }

    /// Moments of the nominal distribution, the usual starting state.
    pub fn nominal_state(&self) -> MomentState {
        moments_of(&self.instance.ambiguity.nominal)
    }

    /// Bound on `||x||_2` over the feasible set (a subset of the simplex).
    pub fn x_bound(&self) -> f64 {
        1.0
    }

    /// Full oracle output at `(x, p)`.
    pub fn oracle(&self, x: &[f64], p: &MomentState) -> Result<OracleOutput> {
        match &self.geometry {
            Some((g, rotated)) => oracle_with_geometry(x, &self.instance, p, g, rotated),
            None => oracle_unconstrained(x, &self.instance, p),
        }
    }
}

impl NdroProblem for MinVarProblem {
    type State = MomentState;

    fn inner_min(&self, p: &MomentState) -> Result<(Vec<f64>, f64)> {
        self.inner_min_l2(p, 0.0)
    }

    fn f_value(&self, x: &[f64], p: &MomentState) -> Result<f64> {
        Ok(super::variance_risk(x, p)? + 0.5 * self.instance.reg_alpha * dot(x, x))
    }

    fn f_g_derivative(&self, x: &[f64], p: &MomentState, q: &MomentState) -> Result<f64> {
        super::variance_risk_g_derivative(x, p, q)
    }

    /// The gap estimate adds the oracle's own duality gap, so it bounds the
    /// true FW-gap from above with no separate accuracy term.
    fn fw_oracle_at(&self, x: &[f64], p: &MomentState, _gamma: f64) -> Result<OracleStep<MomentState>> {
        let out = self.oracle(x, p)?;
        let gap_estimate = out.gap + out.duality_gap();
        Ok(OracleStep {
            direction: out.new_moments.expect("oracle output carries moments"),
            gap_estimate,
        })
    }

    fn mix(&self, p: &MomentState, q: &MomentState, gamma: f64) -> Result<MomentState> {
        mix_moments(p, q, gamma)
    }

    fn constants(&self) -> Result<NdroConstants> {
        let c = regularity_constants(&self.instance)?;
        Ok(NdroConstants {
            alpha: self.instance.reg_alpha,
            c1: c.c1,
            c2: c.c2,
        })
    }
}

impl L2Regularizable for MinVarProblem {
    fn inner_min_l2(&self, p: &MomentState, extra_alpha: f64) -> Result<(Vec<f64>, f64)> {
        inner_markowitz(
            p,
            self.instance.reg_alpha + extra_alpha,
            &self.instance.feasible_x,
            &self.mu_hat,
        )
    }
}
