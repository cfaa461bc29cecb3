//! Scalar log-densities and numerically stable logistic helpers.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(1 / (1 + exp(-x)))` without overflow in either tail.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Bernoulli log-mass of `y` given the log-odds `eta`.
pub fn bernoulli_logit_logpmf(y: bool, eta: f64) -> f64 {
    if y {
        log_sigmoid(eta)
    } else {
        log_sigmoid(-eta)
    }
}

/// `log C(n, r)`.
pub fn ln_binomial_coefficient(r: u64, n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(r as f64 + 1.0) - ln_gamma((n - r) as f64 + 1.0)
}

/// Binomial log-mass of `r` events out of `n` at log-odds `eta`, constant included.
pub fn binomial_logit_logpmf(r: u64, n: u64, eta: f64) -> f64 {
    let mut lp = ln_binomial_coefficient(r, n);
    if r > 0 {
        lp += r as f64 * log_sigmoid(eta);
    }
    if r < n {
        lp += (n - r) as f64 * log_sigmoid(-eta);
    }
    lp
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    if !(var > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = x - mean;
    -0.5 * (LN_2PI + var.ln() + z * z / var)
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta_fn(a, b)
}

/// Log-mass of a Bernoulli draw with success probability `p`.
pub fn bernoulli_logpmf(y: bool, p: f64) -> f64 {
    if y {
        p.ln()
    } else {
        (-p).ln_1p()
    }
}

pub fn uniform_logpdf(x: f64, lower: f64, upper: f64) -> f64 {
    if x > lower && x < upper {
        -(upper - lower).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log-density of residuals `e` (observed minus mean) under the multi-arm
/// covariance with `var` on the diagonal and `var / 2` off it.
///
/// The covariance is `var/2 (I + 11')`, whose inverse and determinant are
/// available in closed form, so no factorisation is needed.
pub fn multi_arm_normal_logpdf(residuals: &[f64], var: f64) -> f64 {
    let m = residuals.len();
    if m == 0 {
        return 0.0;
    }
    if !(var > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mf = m as f64;
    let half = 0.5 * var;
    let sum: f64 = residuals.iter().sum();
    let sum_sq: f64 = residuals.iter().map(|e| e * e).sum();
    let quad = (sum_sq - sum * sum / (mf + 1.0)) / half;
    let log_det = mf * half.ln() + (mf + 1.0).ln();
    -0.5 * (mf * LN_2PI + log_det + quad)
}

/// Dense form of the multi-arm covariance, for inspection and tests.
pub fn multi_arm_covariance(m: usize, var: f64) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| if i == j { var } else { 0.5 * var })
                .collect()
        })
        .collect()
}

/// Normal prior stored as mean and variance (never a standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub var: f64,
}

impl NormalPrior {
    pub const fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        normal_logpdf(x, self.mean, self.var)
    }
}

impl Default for NormalPrior {
    fn default() -> Self {
        Self::new(0.0, 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        beta_logpdf(x, self.a, self.b)
    }

    pub fn is_valid(&self) -> bool {
        self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite()
    }
}
