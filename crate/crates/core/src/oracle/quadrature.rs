use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Continuous, Discrete, Normal};

use super::OracleError;
use crate::config::{BasicOverride, EffectModel, ModelConfig, PriorConfig};
use crate::density::NormalPrior;
use crate::evidence::{AdArm, Design, EvidenceNetwork, RobLevel, Study, StudyData, Treatment};
use crate::space::names;

/// Smallest accepted number of grid points per dimension.
pub const MIN_POINTS: usize = 400;

/// Stage-1 half-width in prior standard deviations.
pub const PRIOR_SDS: f64 = 8.0;

/// Stage-2 half-width in posterior standard deviations.
pub const POSTERIOR_SDS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyStudy {
    pub id: String,
    /// Events in the control and treatment arm.
    pub r: [u64; 2],
    pub n: [u64; 2],
}

/// A two-treatment common-effect model on at most two arm-level studies:
/// one effect plus one baseline per study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyModelSpec {
    pub studies: Vec<TinyStudy>,
    pub baseline_prior: NormalPrior,
    pub effect_prior: NormalPrior,
    /// Ignore the data.
    pub prior_only: bool,
}

impl TinyModelSpec {
    pub const CONTROL: &'static str = "control";
    pub const TREATMENT: &'static str = "treatment";

    pub fn new(studies: Vec<TinyStudy>) -> Self {
        Self { studies, baseline_prior: NormalPrior::default(), effect_prior: NormalPrior::default(), prior_only: false }
    }

    pub fn study(id: &str, r: [u64; 2], n: [u64; 2]) -> TinyStudy {
        TinyStudy { id: id.into(), r, n }
    }

    /// One study with 5/10 and 8/10 events.
    pub fn example() -> Self {
        Self::new(vec![Self::study("s1", [5, 8], [10, 10])])
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::Spec(m));
        if self.studies.is_empty() {
            return bad("at least one study is needed".into());
        }
        if self.n_parameters() > 3 {
            return bad(format!("{} parameters; quadrature supports at most 3", self.n_parameters()));
        }
        for s in &self.studies {
            if s.n.iter().any(|&n| n == 0) || s.r.iter().zip(&s.n).any(|(r, n)| r > n) {
                return bad(format!("study '{}': need 0 <= r <= n and n >= 1", s.id));
            }
        }
        for p in [self.baseline_prior, self.effect_prior] {
            if !(p.var > 0.0 && p.var.is_finite() && p.mean.is_finite()) {
                return bad("priors need a finite mean and positive variance".into());
            }
        }
        Ok(())
    }

    pub fn n_parameters(&self) -> usize {
        1 + self.studies.len()
    }

    /// Names as used by the sampler: the effect first, then baselines.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut v = vec![names::basic("d", Self::TREATMENT)];
        v.extend(self.studies.iter().map(|s| names::study("u", &s.id)));
        v
    }

    pub fn to_network(&self) -> EvidenceNetwork {
        let studies = self
            .studies
            .iter()
            .map(|s| Study {
                id: s.id.clone(),
                design: Design::Rct,
                rob: RobLevel::Low,
                reference_arm: 1,
                arms: vec![1, 2],
                directions: Default::default(),
                z: vec![],
                bias_prior: None,
                data: StudyData::Ad(
                    (0..2)
                        .map(|a| AdArm { treatment: a as u32 + 1, r: s.r[a], n: s.n[a], xbar: vec![] })
                        .collect(),
                ),
            })
            .collect();
        EvidenceNetwork {
            treatments: vec![
                Treatment { id: 1, label: Self::CONTROL.into(), is_active: false },
                Treatment { id: 2, label: Self::TREATMENT.into(), is_active: true },
            ],
            studies,
            reference: 1,
            centers: vec![],
            n_covariates: 0,
            n_study_covariates: 0,
        }
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            trt_effect: EffectModel::Common,
            prior_only: self.prior_only,
            priors: PriorConfig {
                location: self.baseline_prior,
                basic_overrides: vec![BasicOverride { treatment: 2, prior: self.effect_prior }],
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn log_lik(&self, j: usize, d: f64, u: f64) -> f64 {
        if self.prior_only {
            return 0.0;
        }
        let s = &self.studies[j];
        [u, u + d]
            .iter()
            .enumerate()
            .map(|(a, &eta)| {
                let p = 1.0 / (1.0 + (-eta).exp());
                Binomial::new(p, s.n[a]).map_or(f64::NEG_INFINITY, |b| b.ln_pmf(s.r[a]))
            })
            .sum()
    }
}

fn normal(p: NormalPrior) -> Normal {
    Normal::new(p.mean, p.var.sqrt()).expect("valid prior")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Log of the integral of prior times likelihood.
    pub log_normalizer: f64,
    pub points: usize,
}

impl OracleMoments {
    pub fn mean(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.means[i])
    }

    pub fn sd(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.sds[i])
    }
}

struct Grid {
    x: Vec<f64>,
    w: Vec<f64>,
}

fn trapezoid(lo: f64, hi: f64, points: usize) -> Grid {
    let h = (hi - lo) / (points - 1) as f64;
    let x = (0..points).map(|i| lo + h * i as f64).collect();
    let w = (0..points).map(|i| if i == 0 || i + 1 == points { h / 2.0 } else { h }).collect();
    Grid { x, w }
}

/// Tensor-product trapezoid integration over the effect and the study
/// baselines. The integrand factorizes over studies given the effect, so
/// the baseline sums are nested inside the effect sum; the result equals
/// the full tensor-product rule.
fn integrate(spec: &TinyModelSpec, d_grid: &Grid, u_grids: &[Grid]) -> OracleMoments {
    let pd = normal(spec.effect_prior);
    let pu = normal(spec.baseline_prior);
    let m = spec.studies.len();
    // per effect node: log weight, and per study E[u | d], E[u^2 | d]
    let mut lw = Vec::with_capacity(d_grid.x.len());
    let mut cond = Vec::with_capacity(d_grid.x.len());
    for (&d, &wd) in d_grid.x.iter().zip(&d_grid.w) {
        let mut total = wd.ln() + pd.ln_pdf(d);
        let mut moments = Vec::with_capacity(m);
        for (j, g) in u_grids.iter().enumerate() {
            let lv: Vec<f64> = g.x.iter().map(|&u| pu.ln_pdf(u) + spec.log_lik(j, d, u)).collect();
            let top = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
            for ((&u, &w), &l) in g.x.iter().zip(&g.w).zip(&lv) {
                let e = w * (l - top).exp();
                i0 += e;
                i1 += e * u;
                i2 += e * u * u;
            }
            total += top + i0.ln();
            moments.push((i1 / i0, i2 / i0));
        }
        lw.push(total);
        cond.push(moments);
    }
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = weights.iter().sum();
    let e = |f: &dyn Fn(usize) -> f64| weights.iter().enumerate().map(|(i, w)| w * f(i)).sum::<f64>() / z;
    let mut means = vec![e(&|i| d_grid.x[i])];
    let mut sds = vec![(e(&|i| d_grid.x[i] * d_grid.x[i]) - means[0] * means[0]).max(0.0).sqrt()];
    for j in 0..m {
        let mu = e(&|i| cond[i][j].0);
        means.push(mu);
        sds.push((e(&|i| cond[i][j].1) - mu * mu).max(0.0).sqrt());
    }
    OracleMoments { names: spec.parameter_names(), means, sds, log_normalizer: top + z.ln(), points: d_grid.x.len() }
}

/// Posterior means and standard deviations by quadrature.
///
/// Stage 1 spans the prior mean plus or minus [`PRIOR_SDS`] prior standard
/// deviations in every dimension; stage 2 re-centres each grid on the
/// stage-1 moments with half-width [`POSTERIOR_SDS`] posterior standard
/// deviations. Both stages use `points` nodes per dimension.
pub fn grid_posterior_oracle(spec: &TinyModelSpec, points: usize) -> Result<OracleMoments, OracleError> {
    spec.validate()?;
    if points < MIN_POINTS {
        return Err(OracleError::Spec(format!("need at least {MIN_POINTS} grid points, got {points}")));
    }
    let around = |p: NormalPrior| {
        let s = p.var.sqrt();
        trapezoid(p.mean - PRIOR_SDS * s, p.mean + PRIOR_SDS * s, points)
    };
    let m = spec.studies.len();
    let stage1 = integrate(spec, &around(spec.effect_prior), &(0..m).map(|_| around(spec.baseline_prior)).collect::<Vec<_>>());
    let regrid = |i: usize| {
        let (mu, sd) = (stage1.means[i], stage1.sds[i]);
        trapezoid(mu - POSTERIOR_SDS * sd, mu + POSTERIOR_SDS * sd, points)
    };
    let u_grids: Vec<Grid> = (1..=m).map(regrid).collect();
    let mut out = integrate(spec, &regrid(0), &u_grids);
    // the re-centred grid truncates the prior mass, so keep the wider normalizer
    out.log_normalizer = stage1.log_normalizer;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_data_centres_effect() {
        let spec = TinyModelSpec::new(vec![TinyModelSpec::study("s", [5, 5], [10, 10])]);
        let o = grid_posterior_oracle(&spec, 401).unwrap();
        assert!(o.means[0].abs() < 1e-9, "{}", o.means[0]);
    }

    #[test]
    fn prior_only_recovers_prior() {
        let spec = TinyModelSpec { prior_only: true, ..TinyModelSpec::example() };
        let o = grid_posterior_oracle(&spec, 401).unwrap();
        assert!(o.means[0].abs() < 1e-9);
        assert!((o.sds[0] - 10.0).abs() < 1e-6, "{}", o.sds[0]);
        assert!(o.log_normalizer.abs() < 1e-6);
    }

    #[test]
    fn normalizer_of_single_arm_pair() {
        // with a very tight effect prior the normalizer factorizes into
        // two beta-binomial-like integrals; compare with a 1-D rule
        let mut spec = TinyModelSpec::example();
        spec.effect_prior = NormalPrior { mean: 0.0, var: 1e-8 };
        let o = grid_posterior_oracle(&spec, 801).unwrap();
        let pu = normal(spec.baseline_prior);
        let g = trapezoid(-80.0, 80.0, 200_001);
        let one: f64 = g
            .x
            .iter()
            .zip(&g.w)
            .map(|(&u, &w)| w * (pu.ln_pdf(u) + spec.log_lik(0, 0.0, u)).exp())
            .sum();
        assert!((o.log_normalizer - one.ln()).abs() < 1e-3, "{} vs {}", o.log_normalizer, one.ln());
    }

    #[test]
    fn rejects_large_specs() {
        let s = TinyModelSpec::study("a", [1, 1], [2, 2]);
        let spec = TinyModelSpec::new(vec![s.clone(), s.clone(), s]);
        assert!(grid_posterior_oracle(&spec, 401).is_err());
        assert!(grid_posterior_oracle(&TinyModelSpec::example(), 100).is_err());
    }
}
