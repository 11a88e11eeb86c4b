use serde::{Deserialize, Serialize};

use crate::ambiguity::{AmbiguitySpec, DiscreteDistribution, NormTag, Support};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeasibleSet {
    /// The probability simplex.
    #[default]
    Simplex,
    /// Simplex portfolios with nominal mean return `mu_hat^T x >= alpha_bar`.
    ReturnFloor { alpha_bar: f64 },
}

/// Nominal samples, ambiguity set and portfolio constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct MinVarInstance {
    pub ambiguity: AmbiguitySpec,
    pub feasible_x: FeasibleSet,
    /// Weight `a` of an explicit `(a/2)||x||^2` term in the objective.
    pub reg_alpha: f64,
    /// Caller-supplied second-moment diameter, needed for unconstrained
    /// support when the built-in bound is too loose.
    pub b_sigma: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    n: usize,
    #[serde(rename = "N")]
    n_samples: usize,
    samples: Vec<Vec<f64>>,
    rho: f64,
    #[serde(default = "default_m")]
    m: u32,
    #[serde(default)]
    norm: NormTag,
    #[serde(default)]
    support: Support,
    #[serde(default)]
    feasible_x: FeasibleSet,
    #[serde(default)]
    reg_alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b_sigma: Option<f64>,
}

fn default_m() -> u32 {
    2
}

impl TryFrom<RawInstance> for MinVarInstance {
    type Error = Error;
    fn try_from(r: RawInstance) -> Result<Self> {
        if r.samples.len() != r.n_samples {
            return Err(Error::shape(r.n_samples, r.samples.len(), "sample count N"));
        }
        if let Some(i) = r.samples.iter().position(|s| s.len() != r.n) {
            return Err(Error::shape(r.n, r.samples[i].len(), &format!("sample {i}")));
        }
        let inst = MinVarInstance::new(r.samples, r.rho, r.m, r.norm, r.support, r.feasible_x, r.reg_alpha)?;
        Ok(MinVarInstance {
            b_sigma: r.b_sigma,
            ..inst
        })
    }
}

impl From<MinVarInstance> for RawInstance {
    fn from(i: MinVarInstance) -> Self {
        RawInstance {
            n: i.n(),
            n_samples: i.n_samples(),
            samples: i.ambiguity.nominal.points,
            rho: i.ambiguity.radius_rho,
            m: i.ambiguity.order_m,
            norm: i.ambiguity.norm_tag,
            support: i.ambiguity.support,
            feasible_x: i.feasible_x,
            reg_alpha: i.reg_alpha,
            b_sigma: i.b_sigma,
        }
    }
}

impl MinVarInstance {
    pub fn new(
        samples: Vec<Vec<f64>>,
        rho: f64,
        order_m: u32,
        norm: NormTag,
        support: Support,
        feasible_x: FeasibleSet,
        reg_alpha: f64,
    ) -> Result<Self> {
        let nominal = DiscreteDistribution::uniform(samples)?;
        let ambiguity = AmbiguitySpec {
            order_m,
            radius_rho: rho,
            norm_tag: norm,
            support,
            nominal,
        };
        let inst = Self {
            ambiguity,
            feasible_x,
            reg_alpha,
            b_sigma: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        self.ambiguity.validate()?;
        if self.n() < 1 {
            return Err(Error::Validation("portfolio dimension must be positive".into()));
        }
        if !(self.reg_alpha >= 0.0) || !self.reg_alpha.is_finite() {
            return Err(Error::Validation(format!(
                "reg_alpha = {} must be >= 0",
                self.reg_alpha
            )));
        }
        if let Some(b) = self.b_sigma {
            if !(b >= 0.0) {
                return Err(Error::Validation(format!("b_sigma = {b} must be >= 0")));
            }
        }
        if let FeasibleSet::ReturnFloor { alpha_bar } = self.feasible_x {
            if !alpha_bar.is_finite() {
                return Err(Error::Validation("return floor must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.ambiguity.nominal.dim()
    }

    pub fn n_samples(&self) -> usize {
        self.ambiguity.nominal.len()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.ambiguity.nominal.points
    }

    pub fn rho(&self) -> f64 {
        self.ambiguity.radius_rho
    }

    pub fn norm(&self) -> NormTag {
        self.ambiguity.norm_tag
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        let mut c = self.clone();
        c.ambiguity.radius_rho = rho;
        c.validate()?;
        Ok(c)
    }

    pub fn with_reg_alpha(&self, reg_alpha: f64) -> Result<Self> {
        let mut c = self.clone();
        c.reg_alpha = reg_alpha;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip() {
        let json = r#"{"n":2,"N":2,"samples":[[0.1,0.2],[0.3,-0.1]],"rho":0.5,"m":2,"norm":"l2",
            "support":{"type":"unconstrained"},"feasible_x":{"type":"simplex"},"reg_alpha":0.0}"#;
        let inst: MinVarInstance = serde_json::from_str(json).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.n_samples(), 2);
        let again: MinVarInstance = serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn rejects_bad_shapes() {
        let json = r#"{"n":2,"N":3,"samples":[[0.1,0.2],[0.3,-0.1]],"rho":0.5}"#;
        assert!(serde_json::from_str::<MinVarInstance>(json).is_err());
        let json = r#"{"n":2,"N":1,"samples":[[0.1,0.2]],"rho":-1.0}"#;
        assert!(serde_json::from_str::<MinVarInstance>(json).is_err());
    }
}
