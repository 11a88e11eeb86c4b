//! Distributionally robust minimum-variance portfolios:
//! `min_{x in X} sup_{P in B_rho(P_hat)} x^T (Sigma_P - mu_P mu_P^T) x`.

mod closed_form;
mod constants;
mod ellipsoidal;
mod gtrs;
mod instance;
mod problem;
mod qp;
mod unconstrained;
mod variance;

use serde::{Deserialize, Serialize};

use crate::ambiguity::{DiscreteDistribution, MomentState, NormTag};
use crate::error::Result;

pub use closed_form::{closed_form_saddle, surrogate_value, ClosedFormSaddle};
pub use constants::{regularity_constants, RegularityConstants};
pub use ellipsoidal::oracle_ellipsoidal;
pub use gtrs::{gtrs_subproblem, lmi_matrix, EllipsoidGeometry, GtrsSolution};
pub use instance::{FeasibleSet, MinVarInstance};
pub use problem::MinVarProblem;
pub use qp::{inner_markowitz, natural_residual, project_feasible};
pub use unconstrained::{
    dual_objective_unconstrained, eta_star_unconstrained, oracle_unconstrained, perturbation_unconstrained,
};
pub use variance::{variance_risk, variance_risk_g_derivative};

/// Result of one FW-oracle call at a fixed portfolio `x`: the worst-case
/// direction distribution `sum_k w_k delta(xi_{source_k} + q_k)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleOutput {
    pub eta_star: f64,
    pub displacements: Vec<Vec<f64>>,
    /// Coupling mass carried by each displacement.
    pub weights: Vec<f64>,
    /// Index of the nominal atom each displacement moves.
    pub source: Vec<usize>,
    #[serde(skip)]
    pub new_moments: Option<MomentState>,
    /// `dV_x(P; Q_x)`.
    pub gap: f64,
    /// `E_Q[(x^T (xi - v))^2]` at the returned direction.
    pub primal_value: f64,
    /// Value of the one-dimensional dual at the reported multiplier; an upper
    /// bound on the best achievable `primal_value`.
    pub dual_value: f64,
}

impl OracleOutput {
    pub fn moments(&self) -> &MomentState {
        self.new_moments.as_ref().expect("oracle output always carries moments")
    }

    /// Achieved duality gap of the linearized problem (zero for exact oracles).
    pub fn duality_gap(&self) -> f64 {
        (self.dual_value - self.primal_value).max(0.0)
    }

    /// Oracle accuracy `delta` in `true gap <= gamma delta C + g`.
    pub fn delta(&self, gamma: f64, smoothness_c: f64) -> f64 {
        let g = self.duality_gap();
        if g == 0.0 {
            0.0
        } else {
            g / (gamma * smoothness_c)
        }
    }

    /// `((sum_k w_k ||q_k||^m))^(1/m)`.
    pub fn radius(&self, order_m: u32, norm: NormTag) -> f64 {
        crate::ambiguity::perturbation_radius_weighted(&self.displacements, &self.weights, order_m, norm)
    }

    pub fn distribution(&self, samples: &[Vec<f64>]) -> Result<DiscreteDistribution> {
        let points = self
            .source
            .iter()
            .zip(&self.displacements)
            .map(|(&i, q)| samples[i].iter().zip(q).map(|(a, b)| a + b).collect())
            .collect();
        let d = DiscreteDistribution {
            points,
            weights: self.weights.clone(),
        };
        Ok(d)
    }
}
