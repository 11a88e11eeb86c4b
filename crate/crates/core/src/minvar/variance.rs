use crate::ambiguity::MomentState;
use crate::error::{Error, Result};

fn check(x: &[f64], p: &MomentState) -> Result<()> {
    if x.len() != p.dim() {
        return Err(Error::shape(p.dim(), x.len(), "portfolio"));
    }
    Ok(())
}

fn quad_and_mean(x: &[f64], p: &MomentState) -> (f64, f64) {
    let n = x.len();
    let mut quad = 0.0;
    let mut mean = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += p.sigma[(i, j)] * x[j];
        }
        quad += x[i] * row;
        mean += x[i] * p.mu[i];
    }
    (quad, mean)
}

/// `x^T Sigma x - (x^T mu)^2`.
pub fn variance_risk(x: &[f64], p: &MomentState) -> Result<f64> {
    check(x, p)?;
    let (quad, mean) = quad_and_mean(x, p);
    Ok(quad - mean * mean)
}

/// `x^T (Sigma_Q - Sigma_P) x - 2 (x^T mu_P)(x^T (mu_Q - mu_P))`.
pub fn variance_risk_g_derivative(x: &[f64], p: &MomentState, q: &MomentState) -> Result<f64> {
    check(x, p)?;
    check(x, q)?;
    let (qp, mp) = quad_and_mean(x, p);
    let (qq, mq) = quad_and_mean(x, q);
    Ok((qq - qp) - 2.0 * mp * (mq - mp))
}
