//! Norm-free Frank-Wolfe over distributions.
//!
//! The engine only ever touches a problem through [`FwProblem::mix`],
//! [`FwProblem::risk_value`] and [`FwProblem::oracle`]; it knows nothing about
//! norms, supports or how a distribution is represented.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRegime {
    /// `2 / (k + 2)`.
    Diminishing,
    /// `2 / (K + 2)` for a fixed budget `K`.
    Constant(usize),
}

pub fn stepsize(k: usize, regime: StepRegime) -> f64 {
    match regime {
        StepRegime::Diminishing => 2.0 / (k as f64 + 2.0),
        StepRegime::Constant(big_k) => 2.0 / (big_k as f64 + 2.0),
    }
}

/// `max(0, ceil(2C(2 + 3 delta) / eps) - 2)`.
pub fn iteration_budget(epsilon: f64, smoothness_c: f64, oracle_delta: f64) -> usize {
    let raw = (2.0 * smoothness_c * (2.0 + 3.0 * oracle_delta) / epsilon).ceil() - 2.0;
    if raw.is_nan() || raw <= 0.0 {
        0
    } else if raw >= usize::MAX as f64 {
        usize::MAX
    } else {
        raw as usize
    }
}

/// Certificate level on the gap estimate: `eps (2 + 2 delta) / (2 + 3 delta)`.
pub fn gap_threshold(epsilon: f64, oracle_delta: f64) -> f64 {
    epsilon * (2.0 + 2.0 * oracle_delta) / (2.0 + 3.0 * oracle_delta)
}

/// `4 C (1 + delta) / (k + 2)`, valid for `k >= 1`.
pub fn apriori_bound(k: usize, smoothness_c: f64, oracle_delta: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Validation("the a priori bound holds for k >= 1".into()));
    }
    Ok(4.0 * smoothness_c * (1.0 + oracle_delta) / (k as f64 + 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwConfig {
    pub smoothness_c: f64,
    pub oracle_delta: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub k_override: Option<usize>,
}

impl FwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness_c >= 0.0) {
            return Err(Error::Validation(format!(
                "smoothness C = {} must be >= 0",
                self.smoothness_c
            )));
        }
        if !(self.oracle_delta >= 0.0) {
            return Err(Error::Validation(format!(
                "oracle delta = {} must be >= 0",
                self.oracle_delta
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Validation(format!("epsilon = {} must be > 0", self.epsilon)));
        }
        Ok(())
    }

    /// The budget `K`: the override when present, otherwise `K(eps)`.
    pub fn budget(&self) -> usize {
        self.k_override
            .unwrap_or_else(|| iteration_budget(self.epsilon, self.smoothness_c, self.oracle_delta))
    }

    pub fn threshold(&self) -> f64 {
        gap_threshold(self.epsilon, self.oracle_delta)
    }
}

/// Output of an oracle call: a direction distribution and an estimate `g` of
/// the FW-gap with `true gap <= gamma * delta * C + g`.
#[derive(Debug, Clone)]
pub struct OracleStep<S> {
    pub direction: S,
    pub gap_estimate: f64,
}

pub trait FwProblem {
    type State: Clone;

    fn mix(&self, p: &Self::State, q: &Self::State, gamma: f64) -> Result<Self::State>;
    fn risk_value(&self, p: &Self::State) -> Result<f64>;
    fn oracle(&self, p: &Self::State, gamma: f64) -> Result<OracleStep<Self::State>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwRecord {
    pub k: usize,
    pub gamma: f64,
    pub gap_est: f64,
    pub risk_value: f64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Termination {
    /// The gap check passed at iteration `k` of the constant-step regime.
    Certified { k: usize },
    /// No index of the constant-step regime passed the check (typically an
    /// underestimated smoothness constant).
    CertificateMissed,
    /// A fixed number of iterations was run without any check.
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct FwTrace<S> {
    pub records: Vec<FwRecord>,
    pub final_state: S,
    pub final_value: f64,
    pub termination: Termination,
    pub budget_k: usize,
    pub threshold: f64,
}

impl<S> FwTrace<S> {
    pub fn certified(&self) -> bool {
        matches!(self.termination, Termination::Certified { .. })
    }

    /// Largest risk value seen over the run, including the final state.
    pub fn best_value(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.risk_value)
            .fold(self.final_value, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,gamma,gap_est,risk_value,time_ms")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.k,
                fmt_f64(r.gamma),
                fmt_f64(r.gap_est),
                fmt_f64(r.risk_value),
                fmt_f64(r.time_ms)
            )?;
        }
        Ok(())
    }
}

/// 17 significant digits in scientific notation; round-trips every f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn elapsed_ms(start: &Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs `K` diminishing steps followed by up to `K + 2` constant steps of size
/// `2/(K+2)`, stopping at the first constant-regime index whose gap estimate
/// passes the certificate threshold. On success the returned state is the
/// certified iterate `P_k`.
pub fn run_fw<P: FwProblem>(problem: &P, initial: P::State, config: &FwConfig) -> Result<FwTrace<P::State>> {
    config.validate()?;
    let big_k = config.budget();
    let threshold = config.threshold();
    let start = Instant::now();
    let mut records = Vec::new();
    let mut state = initial;
    let last = big_k.saturating_mul(2).saturating_add(1);

    for k in 0..=last {
        let regime = if k < big_k {
            StepRegime::Diminishing
        } else {
            StepRegime::Constant(big_k)
        };
        let gamma = stepsize(k, regime);
        let value = problem.risk_value(&state)?;
        let step = problem.oracle(&state, gamma).map_err(|e| e.at_iteration(k))?;
        records.push(FwRecord {
            k,
            gamma,
            gap_est: step.gap_estimate,
            risk_value: value,
            time_ms: elapsed_ms(&start),
        });
        if !value.is_finite() {
            return Err(Error::NonFiniteRisk { k, trace: records });
        }
        if k >= big_k && step.gap_estimate <= threshold {
            return Ok(FwTrace {
                records,
                final_state: state,
                final_value: value,
                termination: Termination::Certified { k },
                budget_k: big_k,
                threshold,
            });
        }
        state = problem.mix(&state, &step.direction, gamma)?;
    }
    let final_value = problem.risk_value(&state)?;
    if !final_value.is_finite() {
        return Err(Error::NonFiniteRisk {
            k: last + 1,
            trace: records,
        });
    }
    Ok(FwTrace {
        records,
        final_state: state,
        final_value,
        termination: Termination::CertificateMissed,
        budget_k: big_k,
        threshold,
    })
}

/// Runs exactly `iterations` diminishing-step iterations with no stopping
/// test; used to estimate `sup_Q R(Q)` for reporting.
pub fn run_fw_iterations<P: FwProblem>(problem: &P, initial: P::State, iterations: usize) -> Result<FwTrace<P::State>> {
    let start = Instant::now();
    let mut records = Vec::with_capacity(iterations);
    let mut state = initial;
    for k in 0..iterations {
        let gamma = stepsize(k, StepRegime::Diminishing);
        let value = problem.risk_value(&state)?;
        let step = problem.oracle(&state, gamma).map_err(|e| e.at_iteration(k))?;
        records.push(FwRecord {
            k,
            gamma,
            gap_est: step.gap_estimate,
            risk_value: value,
            time_ms: elapsed_ms(&start),
        });
        if !value.is_finite() {
            return Err(Error::NonFiniteRisk { k, trace: records });
        }
        state = problem.mix(&state, &step.direction, gamma)?;
    }
    let final_value = problem.risk_value(&state)?;
    Ok(FwTrace {
        records,
        final_state: state,
        final_value,
        termination: Termination::Exhausted,
        budget_k: iterations,
        threshold: f64::NAN,
    })
}
