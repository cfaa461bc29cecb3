//! Convergence diagnostics over retained draws.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticError {
    #[error("need at least {needed} chains, got {got}")]
    TooFewChains { needed: usize, got: usize },
    #[error("need at least {needed} draws per chain, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("chains have unequal lengths")]
    Ragged,
}

/// A diagnostic value, or a flag that it cannot be computed (no
/// within-chain variation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Diagnostic {
    Value(f64),
    NotComputable,
}

impl Diagnostic {
    pub fn value(self) -> Option<f64> {
        match self {
            Diagnostic::Value(v) => Some(v),
            Diagnostic::NotComputable => None,
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn check(chains: &[Vec<f64>], min_chains: usize, min_draws: usize) -> Result<usize, DiagnosticError> {
    if chains.len() < min_chains {
        return Err(DiagnosticError::TooFewChains { needed: min_chains, got: chains.len() });
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagnosticError::Ragged);
    }
    if n < min_draws {
        return Err(DiagnosticError::TooFewDraws { needed: min_draws, got: n });
    }
    Ok(n)
}

/// Potential scale reduction factor `sqrt(V / W)` with
/// `V = (n-1)/n W + B/n`, `W` the mean within-chain variance and `B/n` the
/// variance of chain means.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<Diagnostic, DiagnosticError> {
    let n = check(chains, 2, 10)?;
    let nf = n as f64;
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b_over_n = sample_var(&means);
    if !(w > 0.0) {
        return Ok(Diagnostic::NotComputable);
    }
    let v = (nf - 1.0) / nf * w + b_over_n;
    Ok(Diagnostic::Value((v / w).sqrt()))
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size from Geyer's initial positive
/// sequence, with the monotone adjustment, capped at the total draw count.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<Diagnostic, DiagnosticError> {
    let n = check(chains, 1, 4)?;
    let m = chains.len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |lag: usize| -> f64 {
        chains.iter().zip(&means).map(|(c, &mu)| autocovariance(c, mu, lag)).sum::<f64>() / m as f64
    };
    let mean_var = acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&means);
    }
    if !(var_plus > 0.0) || !(mean_var > 0.0) {
        return Ok(Diagnostic::NotComputable);
    }
    let rho = |lag: usize| 1.0 - (mean_var - acov(lag)) / var_plus;

    let mut rho_hat = vec![1.0, rho(1)];
    let mut t = 1;
    let (mut even, mut odd) = (1.0, rho_hat[1]);
    while t + 2 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat.push(even);
            rho_hat.push(odd);
        }
        t += 2;
    }
    // enforce monotone decrease of the paired sums
    let mut i = 2;
    while i + 1 < rho_hat.len() {
        let prev = rho_hat[i - 2] + rho_hat[i - 1];
        if rho_hat[i] + rho_hat[i + 1] > prev {
            rho_hat[i] = prev / 2.0;
            rho_hat[i + 1] = prev / 2.0;
        }
        i += 2;
    }
    let tau = -1.0 + 2.0 * rho_hat.iter().sum::<f64>();
    let total = nf * m as f64;
    let ess = if tau > 0.0 { total / tau } else { total };
    Ok(Diagnostic::Value(ess.min(total)))
}

/// Monte Carlo standard error of a posterior mean.
pub fn mc_standard_error(chains: &[Vec<f64>]) -> Option<f64> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let ess = effective_sample_size(chains).ok()?.value()?;
    Some((sample_var(&pooled) / ess).sqrt())
}
