//! WebAssembly bindings behind `www/index.html`.
//!
//! Each export returns a JSON string. The plain Rust functions do the work
//! and are usable natively; the `#[wasm_bindgen]` wrappers only serialize.

use netsynth::config::{Approach, BiasConfig, EffectModel, ModelConfig};
use netsynth::density::NormalPrior;
use netsynth::evidence::RobLevel;
use netsynth::nrs::{make_informative_priors, NrsEntry, NrsPosteriorSummary};
use netsynth::oracle::{grid_posterior_oracle, TinyModelSpec};
use netsynth::report::summarize;
use netsynth::{fit_model, Posterior, SamplerSettings};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct MixtureCurve {
    pub x: Vec<f64>,
    pub unbiased: Vec<f64>,
    pub biased: Vec<f64>,
    pub mixture: Vec<f64>,
}

/// Density of one study's relative effect under the bimodal bias model:
/// the unbiased component `N(d, tau^2)`, the biased one centred at `d + g`
/// with the bias spread added, and their mixture with weight `pi`.
pub fn mixture_curve(
    d: f64,
    tau: f64,
    g: f64,
    tau_gamma: f64,
    pi: f64,
    points: usize,
) -> Result<MixtureCurve, String> {
    if !(tau > 0.0 && tau < 2.0 && tau_gamma > 0.0 && tau_gamma < 2.0) {
        return Err("standard deviations must lie in (0, 2)".into());
    }
    if !(0.0..=1.0).contains(&pi) {
        return Err("bias probability must lie in [0, 1]".into());
    }
    if !(2..=2000).contains(&points) {
        return Err("between 2 and 2000 points".into());
    }
    let spec = TinyModelSpec::new(vec![TinyModelSpec::study("s", [3, 5], [10, 10])]);
    let mut net = spec.to_network();
    net.studies[0].rob = RobLevel::Unclear;
    let cfg = ModelConfig {
        approach: Approach::BiasModel2,
        bias: Some(BiasConfig { effect: EffectModel::Common, ..Default::default() }),
        ..Default::default()
    };
    let post = Posterior::new(&net, &cfg).map_err(|e| e.to_string())?;
    let space = post.space();
    let mut state = vec![0.0; space.len()];
    for (name, v) in [("d[treatment]", d), ("tau", tau), ("g", g), ("tau_gamma", tau_gamma), ("pi[s]", pi)] {
        let i = space.index_of(name).ok_or_else(|| format!("model has no {name}"))?;
        state[i] = v;
    }
    let theta = space.index_of("theta[s,treatment]").ok_or("model has no study effect")?;
    let spread = 4.0 * (tau * tau + tau_gamma * tau_gamma).sqrt();
    let (lo, hi) = (d.min(d + g) - spread, d.max(d + g) + spread);
    let mut out = MixtureCurve { x: vec![], unbiased: vec![], biased: vec![], mixture: vec![] };
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        state[theta] = x;
        out.x.push(x);
        out.unbiased.push(post.theta_logprior_given(&state, 0, false).exp());
        out.biased.push(post.theta_logprior_given(&state, 0, true).exp());
        out.mixture.push(post.mixture_marginal_theta(&state, 0).exp());
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct DiscountPoint {
    pub w: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub posterior_mean: f64,
    pub posterior_sd: f64,
}

/// Observational estimate `N(nrs_mean, nrs_var)` turned into a prior with
/// shift `zeta` and inflation `w`, combined with a normal summary of the
/// randomized evidence, over a log-spaced grid of `w` in `[1e-3, 1]`.
pub fn discount_curve(
    nrs_mean: f64,
    nrs_var: f64,
    rct_mean: f64,
    rct_var: f64,
    zeta: f64,
    points: usize,
) -> Result<Vec<DiscountPoint>, String> {
    if !(nrs_var > 0.0 && rct_var > 0.0) {
        return Err("variances must be positive".into());
    }
    if !(2..=500).contains(&points) {
        return Err("between 2 and 500 points".into());
    }
    let summary = NrsPosteriorSummary {
        reference: 1,
        reference_label: "reference".into(),
        entries: vec![NrsEntry {
            treatment: 2,
            label: "treatment".into(),
            mean: nrs_mean,
            variance: nrs_var,
            skewness: 0.0,
            observed: true,
        }],
    };
    (0..points)
        .map(|i| {
            let w = 10f64.powf(-3.0 + 3.0 * i as f64 / (points - 1) as f64);
            let prior = make_informative_priors(&summary, zeta, w, NormalPrior::default()).map_err(|e| e.to_string())?[0].prior;
            let precision = 1.0 / prior.var + 1.0 / rct_var;
            let mean = (prior.mean / prior.var + rct_mean / rct_var) / precision;
            Ok(DiscountPoint {
                w,
                prior_mean: prior.mean,
                prior_sd: prior.var.sqrt(),
                posterior_mean: mean,
                posterior_sd: precision.recip().sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub parameter: String,
    pub mcmc_mean: f64,
    pub mcmc_sd: f64,
    pub oracle_mean: f64,
    pub oracle_sd: f64,
    pub rhat: Option<f64>,
}

/// Sample the one-study common-effect model and compare with quadrature.
pub fn tiny_comparison(r: [u64; 2], n: [u64; 2], iterations: usize, seed: u64) -> Result<Vec<Comparison>, String> {
    if !(1_000..=200_000).contains(&iterations) {
        return Err("iterations must lie in [1000, 200000]".into());
    }
    let spec = TinyModelSpec::new(vec![TinyModelSpec::study("s1", r, n)]);
    spec.validate().map_err(|e| e.to_string())?;
    let settings = SamplerSettings { n_chains: 2, n_iterations: iterations, burn_in: iterations / 5, seed, ..Default::default() };
    let fit = fit_model(&spec.to_network(), &spec.config(), &settings, None).map_err(|e| e.to_string())?;
    let oracle = grid_posterior_oracle(&spec, 400).map_err(|e| e.to_string())?;
    let summaries = summarize(&fit.samples, 0.95).map_err(|e| e.to_string())?;
    oracle
        .names
        .iter()
        .map(|name| {
            let s = summaries.iter().find(|s| &s.parameter == name).ok_or_else(|| format!("{name} not sampled"))?;
            Ok(Comparison {
                parameter: name.clone(),
                mcmc_mean: s.mean,
                mcmc_sd: s.sd,
                oracle_mean: oracle.mean(name).unwrap_or(f64::NAN),
                oracle_sd: oracle.sd(name).unwrap_or(f64::NAN),
                rhat: s.rhat,
            })
        })
        .collect()
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = mixtureCurve)]
pub fn mixture_curve_js(d: f64, tau: f64, g: f64, tau_gamma: f64, pi: f64, points: usize) -> Result<String, JsError> {
    json(mixture_curve(d, tau, g, tau_gamma, pi, points))
}

#[wasm_bindgen(js_name = discountCurve)]
pub fn discount_curve_js(
    nrs_mean: f64,
    nrs_var: f64,
    rct_mean: f64,
    rct_var: f64,
    zeta: f64,
    points: usize,
) -> Result<String, JsError> {
    json(discount_curve(nrs_mean, nrs_var, rct_mean, rct_var, zeta, points))
}

#[wasm_bindgen(js_name = tinyComparison)]
pub fn tiny_comparison_js(r1: u32, n1: u32, r2: u32, n2: u32, iterations: usize, seed: u32) -> Result<String, JsError> {
    json(tiny_comparison([r1.into(), r2.into()], [n1.into(), n2.into()], iterations, seed.into()))
}
