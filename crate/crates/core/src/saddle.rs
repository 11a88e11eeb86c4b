//! Max-min saddle points of `min_x sup_P F(x, P)`: Frank-Wolfe on the
//! inner-minimized risk `R(P) = min_x F(x, P)` with an exact inner solve at
//! every iterate.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fw::{self, fmt_f64, FwProblem, OracleStep, StepRegime, Termination};
use crate::linalg::dot;

/// Regularity constants of `F`: strong convexity `alpha` in `x`, the
/// Lipschitz constant `c1` of `x -> dF_x(P; Q)`, and the uniform smoothness
/// constant `c2` of `P -> F(x, P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdroConstants {
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
}

pub trait NdroProblem {
    type State: Clone;

    /// Exact minimizer of `F(., p)` and its value.
    fn inner_min(&self, p: &Self::State) -> Result<(Vec<f64>, f64)>;
    fn f_value(&self, x: &[f64], p: &Self::State) -> Result<f64>;
    /// `dF_x(P; Q)`.
    fn f_g_derivative(&self, x: &[f64], p: &Self::State, q: &Self::State) -> Result<f64>;
    /// FW oracle for `F(x, .)` at `p`.
    fn fw_oracle_at(&self, x: &[f64], p: &Self::State, gamma: f64) -> Result<OracleStep<Self::State>>;
    fn mix(&self, p: &Self::State, q: &Self::State, gamma: f64) -> Result<Self::State>;
    fn constants(&self) -> Result<NdroConstants>;
    fn oracle_delta(&self) -> f64 {
        0.0
    }
}

/// Problems whose inner minimization can absorb an extra `(a/2)||x||_2^2`.
pub trait L2Regularizable: NdroProblem {
    /// Minimizer of `F(., p) + (extra_alpha/2)||x||^2` and that objective value.
    fn inner_min_l2(&self, p: &Self::State, extra_alpha: f64) -> Result<(Vec<f64>, f64)>;
}

/// `C = c2 + c1/(2 alpha) (c1 + sqrt(c1^2 + 4 alpha c2))`.
pub fn ndro_smoothness(alpha: f64, c1: f64, c2: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Validation(format!(
            "strong convexity alpha = {alpha} must be positive; regularize the problem first"
        )));
    }
    if !(c1 >= 0.0 && c2 >= 0.0) {
        return Err(Error::Validation(format!(
            "constants c1 = {c1}, c2 = {c2} must be >= 0"
        )));
    }
    Ok(c2 + c1 / (2.0 * alpha) * (c1 + (c1 * c1 + 4.0 * alpha * c2).sqrt()))
}

/// `C_eps = c2 + (c1 b_x^2 / 4 eps)(c1 + sqrt(c1^2 + 8 eps c2 / b_x^2))`.
pub fn regularized_smoothness(epsilon: f64, b_x: f64, c1: f64, c2: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(b_x > 0.0) {
        return Err(Error::Validation(format!(
            "need epsilon > 0 and b_x > 0, got {epsilon}, {b_x}"
        )));
    }
    let b2 = b_x * b_x;
    Ok(c2 + (c1 * b2 / (4.0 * epsilon)) * (c1 + (c1 * c1 + 8.0 * epsilon * c2 / b2).sqrt()))
}

/// Bound on `||x(P) - x(P_gamma)||` implied by strong convexity.
pub fn x_displacement_bound(gamma: f64, alpha: f64, c1: f64, c2: f64) -> f64 {
    gamma / (2.0 * alpha) * (c1 + (c1 * c1 + 4.0 * alpha * c2).sqrt())
}

/// `dR(P; Q) = dF_{x(P)}(P; Q)`.
pub fn danskin_g_derivative<N: NdroProblem>(problem: &N, p: &N::State, q: &N::State) -> Result<f64> {
    let (x, _) = problem.inner_min(p)?;
    problem.f_g_derivative(&x, p, q)
}

// ----------------------------------------------------------- regularization

/// `F(x, P) + (eps / b_x^2) ||x||_2^2`.
#[derive(Debug, Clone)]
pub struct Regularized<P> {
    pub inner: P,
    pub epsilon: f64,
    pub b_x: f64,
}

impl<P> Regularized<P> {
    pub fn weight(&self) -> f64 {
        self.epsilon / (self.b_x * self.b_x)
    }
}

pub fn regularize<P: L2Regularizable>(problem: P, epsilon: f64, b_x: f64) -> Result<Regularized<P>> {
    if !(b_x > 0.0) {
        return Err(Error::Validation(format!("b_x = {b_x} must be positive")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Validation(format!("epsilon = {epsilon} must be positive")));
    }
    Ok(Regularized {
        inner: problem,
        epsilon,
        b_x,
    })
}

impl<P: L2Regularizable> NdroProblem for Regularized<P> {
    type State = P::State;

    fn inner_min(&self, p: &P::State) -> Result<(Vec<f64>, f64)> {
        self.inner.inner_min_l2(p, 2.0 * self.weight())
    }

    fn f_value(&self, x: &[f64], p: &P::State) -> Result<f64> {
        Ok(self.inner.f_value(x, p)? + self.weight() * dot(x, x))
    }

    fn f_g_derivative(&self, x: &[f64], p: &P::State, q: &P::State) -> Result<f64> {
        self.inner.f_g_derivative(x, p, q)
    }

    fn fw_oracle_at(&self, x: &[f64], p: &P::State, gamma: f64) -> Result<OracleStep<P::State>> {
        self.inner.fw_oracle_at(x, p, gamma)
    }

    fn mix(&self, p: &P::State, q: &P::State, gamma: f64) -> Result<P::State> {
        self.inner.mix(p, q, gamma)
    }

    fn constants(&self) -> Result<NdroConstants> {
        let c = self.inner.constants()?;
        Ok(NdroConstants {
            alpha: c.alpha + 2.0 * self.weight(),
            ..c
        })
    }

    fn oracle_delta(&self) -> f64 {
        self.inner.oracle_delta()
    }
}

impl<P: L2Regularizable> L2Regularizable for Regularized<P> {
    fn inner_min_l2(&self, p: &P::State, extra_alpha: f64) -> Result<(Vec<f64>, f64)> {
        self.inner.inner_min_l2(p, extra_alpha + 2.0 * self.weight())
    }
}

// ------------------------------------------------------------ fixed x

/// `F(x, .)` at a fixed decision as a plain FW problem.
pub struct FixedX<'a, N: NdroProblem> {
    pub problem: &'a N,
    pub x: &'a [f64],
}

impl<N: NdroProblem> FwProblem for FixedX<'_, N> {
    type State = N::State;

    fn mix(&self, p: &N::State, q: &N::State, gamma: f64) -> Result<N::State> {
        self.problem.mix(p, q, gamma)
    }

    fn risk_value(&self, p: &N::State) -> Result<f64> {
        self.problem.f_value(self.x, p)
    }

    fn oracle(&self, p: &N::State, gamma: f64) -> Result<OracleStep<N::State>> {
        self.problem.fw_oracle_at(self.x, p, gamma)
    }
}

// ------------------------------------------------------------ Algorithm

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Smoothness of `R`; derived from the problem constants when absent.
    #[serde(default)]
    pub smoothness_c: Option<f64>,
    /// Replaces the budget `K(eps)`.
    #[serde(default)]
    pub k_override: Option<usize>,
    /// Stop (uncertified) after recording this iteration.
    #[serde(default)]
    pub iteration_cap: Option<usize>,
}

impl SaddleConfig {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            smoothness_c: None,
            k_override: None,
            iteration_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleRecord {
    pub k: usize,
    pub gamma: f64,
    pub gap_est: f64,
    pub primal_value: f64,
    pub dual_value: Option<f64>,
    pub time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SaddleResult<S> {
    pub x_eps: Vec<f64>,
    pub p_eps: S,
    pub records: Vec<SaddleRecord>,
    pub terminated_at: usize,
    pub certificate: f64,
    pub termination: Termination,
    pub epsilon: f64,
    pub budget_k: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleSummary {
    pub x_eps: Vec<f64>,
    pub certificate: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub certified: bool,
}

impl<S> SaddleResult<S> {
    pub fn certified(&self) -> bool {
        matches!(self.termination, Termination::Certified { .. })
    }

    pub fn primal_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.primal_value).collect()
    }

    pub fn gap_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gap_est).collect()
    }

    pub fn dual_trace(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.dual_value).collect()
    }

    pub fn summary(&self) -> SaddleSummary {
        SaddleSummary {
            x_eps: self.x_eps.clone(),
            certificate: self.certificate,
            epsilon: self.epsilon,
            iterations: self.records.len(),
            certified: self.certified(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,gamma,gap_est,primal_value,dual_value,time_ms")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.k,
                fmt_f64(r.gamma),
                fmt_f64(r.gap_est),
                fmt_f64(r.primal_value),
                fmt_f64(r.dual_value.unwrap_or(f64::NAN)),
                fmt_f64(r.time_ms)
            )?;
        }
        Ok(())
    }
}

pub fn run_saddle<N: NdroProblem>(
    problem: &N,
    initial: N::State,
    config: &SaddleConfig,
) -> Result<SaddleResult<N::State>> {
    run_saddle_observed(problem, initial, config, |_, _, _| Ok(None))
}

/// The max-min saddle algorithm. Iterations `0..=K` use `gamma_k = 2/(k+2)`; iterations
/// `K+1..=2K+1` use `2/(K+2)` and return `(x_k, P_k)` at the first index
/// whose gap estimate passes the certificate threshold. `observe` is called
/// with `(k, x_k, P_k)` before each update; a returned value is recorded as the
/// dual value of that iteration.
pub fn run_saddle_observed<N, O>(
    problem: &N,
    initial: N::State,
    config: &SaddleConfig,
    mut observe: O,
) -> Result<SaddleResult<N::State>>
where
    N: NdroProblem,
    O: FnMut(usize, &[f64], &N::State) -> Result<Option<f64>>,
{
    if !(config.epsilon > 0.0) {
        return Err(Error::Validation(format!(
            "epsilon = {} must be positive",
            config.epsilon
        )));
    }
    if !(config.delta >= 0.0) {
        return Err(Error::Validation(format!("delta = {} must be >= 0", config.delta)));
    }
    let big_k = match config.k_override {
        Some(k) => k,
        None => {
            let c = match config.smoothness_c {
                Some(c) => c,
                None => {
                    let k = problem.constants()?;
                    ndro_smoothness(k.alpha, k.c1, k.c2)?
                }
            };
            if !(c >= 0.0) {
                return Err(Error::Validation(format!("smoothness C = {c} must be >= 0")));
            }
            fw::iteration_budget(config.epsilon, c, config.delta)
        }
    };
    let threshold = fw::gap_threshold(config.epsilon, config.delta);
    let last = big_k.saturating_mul(2).saturating_add(1);
    let start = Instant::now();
    let mut records = Vec::new();
    let mut p = initial;

    for k in 0..=last {
        let gamma = if k <= big_k {
            fw::stepsize(k, StepRegime::Diminishing)
        } else {
            fw::stepsize(k, StepRegime::Constant(big_k))
        };
        let (x, value) = problem.inner_min(&p).map_err(|e| e.at_iteration(k))?;
        let step = problem.fw_oracle_at(&x, &p, gamma).map_err(|e| e.at_iteration(k))?;
        let dual = observe(k, &x, &p)?;
        records.push(SaddleRecord {
            k,
            gamma,
            gap_est: step.gap_estimate,
            primal_value: value,
            dual_value: dual,
            time_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite primal value at iteration {k}")));
        }
        let passes = k > big_k && step.gap_estimate <= threshold;
        let capped = config.iteration_cap.is_some_and(|c| k >= c);
        if passes || capped || k == last {
            let termination = if passes {
                Termination::Certified { k }
            } else if capped && k < last {
                Termination::Exhausted
            } else {
                Termination::CertificateMissed
            };
            return Ok(SaddleResult {
                x_eps: x,
                p_eps: p,
                records,
                terminated_at: k,
                certificate: step.gap_estimate,
                termination,
                epsilon: config.epsilon,
                budget_k: big_k,
                threshold,
            });
        }
        p = problem.mix(&p, &step.direction, gamma)?;
    }
    unreachable!("loop returns at k == last")
}

// ------------------------------------------------------------ verification

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsSaddleReport {
    /// Best value found by the fixed-x FW run: a lower estimate of
    /// `sup_Q F(x, Q)`.
    pub lhs_lower: f64,
    /// `min_j F(x, P_j) + g_j` over the same run: a certified upper bound on
    /// `sup_Q F(x, Q)` by concavity.
    pub lhs_upper: f64,
    pub mid: f64,
    pub rhs: f64,
    pub epsilon: f64,
    /// `mid - (lhs_upper - eps)`; nonnegative when the left inequality holds.
    pub left_slack: f64,
    /// `rhs + eps - mid`; nonnegative when the right inequality holds.
    pub right_slack: f64,
    pub passed: bool,
}

/// Checks `sup_Q F(x,Q) - eps <= F(x,p) <= min_y F(y,p) + eps`, bounding the
/// supremum from above with FW-gap certificates collected along a fixed-x FW
/// run of `sup_budget` iterations started at `p`.
pub fn verify_eps_saddle<N: NdroProblem>(
    problem: &N,
    x: &[f64],
    p: &N::State,
    epsilon: f64,
    sup_budget: usize,
) -> Result<EpsSaddleReport> {
    let fixed = FixedX { problem, x };
    let run = fw::run_fw_iterations(&fixed, p.clone(), sup_budget.max(1))?;
    let slack_c = problem.oracle_delta() * problem.constants().map(|c| c.c2).unwrap_or(f64::INFINITY);
    let mut lhs_upper = f64::INFINITY;
    for r in &run.records {
        let extra = if problem.oracle_delta() > 0.0 {
            r.gamma * slack_c
        } else {
            0.0
        };
        lhs_upper = lhs_upper.min(r.risk_value + r.gap_est + extra);
    }
    let lhs_lower = run.best_value();
    let mid = problem.f_value(x, p)?;
    let (_, rhs) = problem.inner_min(p)?;
    let left_slack = mid - (lhs_upper - epsilon);
    let right_slack = rhs + epsilon - mid;
    Ok(EpsSaddleReport {
        lhs_lower,
        lhs_upper,
        mid,
        rhs,
        epsilon,
        left_slack,
        right_slack,
        passed: left_slack >= 0.0 && right_slack >= 0.0,
    })
}
