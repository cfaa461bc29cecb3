use serde::{Deserialize, Serialize};

use super::{simulate_network, OracleError, SimulationSpec};
use crate::config::ModelConfig;
use crate::fit::fit_model;
use crate::mcmc::SamplerSettings;
use crate::report::Interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub parameter: String,
    pub truth: f64,
    /// Fraction of replicates whose interval contains the truth.
    pub coverage: f64,
    /// Mean of posterior median minus truth.
    pub median_bias: f64,
    /// Fraction of replicates with the median within two posterior sd of
    /// the truth.
    pub within_two_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replicates: usize,
    pub level: f64,
    pub rows: Vec<CoverageRow>,
    /// Largest potential scale reduction factor seen per replicate.
    pub max_rhat: Vec<Option<f64>>,
}

impl CoverageReport {
    pub fn row(&self, parameter: &str) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.parameter == parameter)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["parameter", "truth", "coverage", "median_bias", "within_two_sd", "replicates"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.parameter.clone(),
                format!("{}", r.truth),
                format!("{}", r.coverage),
                format!("{}", r.median_bias),
                format!("{}", r.within_two_sd),
                self.replicates.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

struct Replicate {
    /// Per parameter: covered, median - truth, within 2 sd.
    hits: Vec<(bool, f64, bool)>,
    max_rhat: Option<f64>,
}

/// Simulate `replicates` networks (seed `spec.seed + r`), fit each with
/// `cfg` (sampler seed `settings.seed + r`) and score `parameters`
/// against the truth. Covariates are centred at the simulation centre
/// when `cfg` has a regression.
pub fn recovery_experiment(
    spec: &SimulationSpec,
    cfg: &ModelConfig,
    settings: &SamplerSettings,
    replicates: usize,
    parameters: &[String],
    level: f64,
) -> Result<CoverageReport, OracleError> {
    if replicates == 0 {
        return Err(OracleError::Spec("at least one replicate is needed".into()));
    }
    let truth = simulate_network(spec)?.truth;
    let truths: Vec<f64> = parameters
        .iter()
        .map(|p| truth.get(p).ok_or_else(|| OracleError::Spec(format!("no true value for '{p}'"))))
        .collect::<Result<_, _>>()?;

    let one = |r: usize| -> Result<Replicate, OracleError> {
        let spec_r = SimulationSpec { seed: spec.seed.wrapping_add(r as u64), ..spec.clone() };
        let mut net = simulate_network(&spec_r)?.network;
        if cfg.regression.is_some() {
            net = net.center_covariates(&[spec.covariate_center]).map_err(crate::fit::FitError::from)?;
        }
        let settings_r = SamplerSettings { seed: settings.seed.wrapping_add(r as u64), ..settings.clone() };
        let fit = fit_model(&net, cfg, &settings_r, None)?;
        let mut hits = Vec::with_capacity(parameters.len());
        for (p, &t) in parameters.iter().zip(&truths) {
            let draws = fit.samples.pooled_by_name(p).ok_or_else(|| OracleError::Spec(format!("'{p}' is not sampled")))?;
            let iv = Interval::of(&draws, level)?;
            let n = draws.len() as f64;
            let mean = draws.iter().sum::<f64>() / n;
            let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            hits.push((iv.lower <= t && t <= iv.upper, iv.median - t, (iv.median - t).abs() <= 2.0 * sd));
        }
        let max_rhat = crate::report::summarize(&fit.samples, level)?.iter().filter_map(|s| s.rhat).reduce(f64::max);
        Ok(Replicate { hits, max_rhat })
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<Replicate, OracleError>> = {
        use rayon::prelude::*;
        (0..replicates).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Replicate, OracleError>> = (0..replicates).map(one).collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let n = replicates as f64;
    let rows = parameters
        .iter()
        .zip(&truths)
        .enumerate()
        .map(|(i, (p, &truth))| CoverageRow {
            parameter: p.clone(),
            truth,
            coverage: results.iter().filter(|r| r.hits[i].0).count() as f64 / n,
            median_bias: results.iter().map(|r| r.hits[i].1).sum::<f64>() / n,
            within_two_sd: results.iter().filter(|r| r.hits[i].2).count() as f64 / n,
        })
        .collect();
    Ok(CoverageReport { replicates, level, rows, max_rhat: results.iter().map(|r| r.max_rhat).collect() })
}
