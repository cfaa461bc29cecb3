use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::config::ByRob;
use crate::density::{sigmoid, BetaPrior};
use crate::evidence::{
    AdArm, BiasDirection, DataFormat, Design, EvidenceNetwork, IpdRecord, RobLevel, Study, StudyData, Treatment,
};
use crate::space::names;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTreatment {
    pub label: String,
    pub active: bool,
    /// Log odds ratio versus the first treatment.
    pub effect: f64,
    /// Covariate interaction versus the first treatment.
    pub interaction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudy {
    pub id: String,
    pub design: Design,
    pub format: DataFormat,
    pub rob: RobLevel,
    /// Indices into the treatment list; the first is the study reference.
    pub arms: Vec<usize>,
    pub arm_size: Vec<u64>,
    pub covariate_mean: f64,
    pub covariate_sd: f64,
    /// Direction recorded for active-versus-active contrasts.
    pub direction: BiasDirection,
    pub bias_prior: Option<BetaPrior>,
}

/// True values and network shape for simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub treatments: Vec<SimTreatment>,
    pub studies: Vec<SimStudy>,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub tau: f64,
    /// Prognostic covariate effect.
    pub beta0: f64,
    pub covariate_center: f64,
    /// Mean bias for inactive-versus-active contrasts.
    pub g: f64,
    /// Mean bias for active-versus-active contrasts (direction 0 gets
    /// `+g_act`, direction 1 gets `-g_act`).
    pub g_act: f64,
    pub tau_gamma: f64,
    /// Probability that a study is biased, by risk of bias.
    pub pi: ByRob<f64>,
    /// Participant covariates are recorded rounded to this resolution
    /// (e.g. age in whole years); `None` keeps them exact.
    #[serde(default)]
    pub covariate_step: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub values: BTreeMap<String, f64>,
}

impl TruthRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Columns `parameter,value`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["parameter", "value"]).expect("in-memory write");
        for (k, v) in &self.values {
            w.write_record([k.clone(), format!("{v}")]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedNetwork {
    pub network: EvidenceNetwork,
    pub truth: TruthRecord,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::Spec(m));
        if self.treatments.len() < 2 {
            return bad("need at least two treatments".into());
        }
        for p in [self.pi.low, self.pi.high, self.pi.unclear] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("bias probability {p} outside [0, 1]"));
            }
        }
        if self.covariate_step.is_some_and(|h| !(h > 0.0)) {
            return bad("covariate step must be positive".into());
        }
        if self.tau < 0.0 || self.tau_gamma < 0.0 || self.baseline_sd < 0.0 {
            return bad("standard deviations must be non-negative".into());
        }
        for s in &self.studies {
            if s.arms.len() < 2 || s.arms.len() != s.arm_size.len() {
                return bad(format!("study '{}': need two or more arms, each with a size", s.id));
            }
            if s.arms.iter().any(|&a| a >= self.treatments.len()) {
                return bad(format!("study '{}': arm index out of range", s.id));
            }
            let mut seen = s.arms.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != s.arms.len() || s.arm_size.contains(&0) || s.covariate_sd < 0.0 {
                return bad(format!("study '{}': repeated arm, empty arm or negative sd", s.id));
            }
        }
        Ok(())
    }

    /// Six studies, four treatments, mixed designs and formats: three
    /// low-risk participant-level trials, one high-risk participant-level
    /// cohort and two high-risk arm-level trials.
    pub fn rrms_shape(seed: u64) -> Self {
        let t = |label: &str, active, effect, interaction| SimTreatment {
            label: label.into(),
            active,
            effect,
            interaction,
        };
        let s = |id: &str, design, format, rob, arms: Vec<usize>, total: u64, age: f64| {
            let k = arms.len() as u64;
            let mut arm_size = vec![total / k; arms.len()];
            arm_size[0] += total % k;
            SimStudy {
                id: id.into(),
                design,
                format,
                rob,
                arms,
                arm_size,
                covariate_mean: age,
                covariate_sd: 8.0,
                direction: BiasDirection::FavoursTreatment,
                bias_prior: Some(if rob == RobLevel::Low {
                    BetaPrior::new(1.0, 100.0)
                } else {
                    BetaPrior::new(100.0, 1.0)
                }),
            }
        };
        use DataFormat::{Ad, Ipd};
        use Design::{Nrs, Rct};
        use RobLevel::{High, Low};
        SimulationSpec {
            treatments: vec![
                t("Placebo", false, 0.0, 0.0),
                t("DF", true, -0.75, -0.01),
                t("GA", true, -0.4, -0.01),
                t("N", true, -1.1, -0.016),
            ],
            studies: vec![
                s("AFFIRM", Rct, Ipd, Low, vec![0, 3], 939, 36.0),
                s("CONFIRM", Rct, Ipd, Low, vec![0, 1, 2], 1417, 37.0),
                s("DEFINE", Rct, Ipd, Low, vec![0, 1], 1234, 39.0),
                s("SMSC", Nrs, Ipd, High, vec![2, 1, 3], 206, 46.0),
                s("Bornstein", Rct, Ad, High, vec![0, 2], 50, 34.0),
                s("Johnson", Rct, Ad, High, vec![0, 2], 251, 30.0),
            ],
            baseline_mean: -0.2,
            baseline_sd: 0.2,
            tau: 0.0,
            beta0: -0.02,
            covariate_center: 38.0,
            g: -0.4,
            g_act: 0.3,
            tau_gamma: 0.0,
            pi: ByRob { low: 0.0, high: 1.0, unclear: 0.5 },
            covariate_step: Some(1.0),
            seed,
        }
    }
}

/// Mean bias of arm `k` against reference `b`.
fn mean_bias(spec: &SimulationSpec, b: usize, k: usize, dir: BiasDirection) -> f64 {
    match (spec.treatments[b].active, spec.treatments[k].active) {
        (false, true) => spec.g,
        (true, false) => -spec.g,
        (false, false) => 0.0,
        (true, true) => match dir {
            BiasDirection::FavoursTreatment => -spec.g_act,
            _ => spec.g_act,
        },
    }
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("valid normal").sample(rng)
}

/// Draw a network from `spec`. Participant rows are Bernoulli at the
/// participant-level predictor; arm-level counts are binomial at the
/// predictor evaluated at the study's covariate mean. Biased studies get
/// additive bias effects on every contrast.
pub fn simulate_network(spec: &SimulationSpec) -> Result<SimulatedNetwork, OracleError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = BTreeMap::new();
    let reference = 0usize;
    for t in spec.treatments.iter().skip(1) {
        truth.insert(names::basic("d", &t.label), t.effect - spec.treatments[reference].effect);
        truth.insert(names::basic("BB", &t.label), t.interaction - spec.treatments[reference].interaction);
    }
    truth.insert("tau".into(), spec.tau);
    truth.insert("g".into(), spec.g);
    truth.insert("g_act".into(), spec.g_act);
    truth.insert("tau_gamma".into(), spec.tau_gamma);
    truth.insert("B0".into(), spec.beta0);

    let c = spec.covariate_center;
    let mut studies = Vec::with_capacity(spec.studies.len());
    for s in &spec.studies {
        let u = normal(&mut rng, spec.baseline_mean, spec.baseline_sd);
        let biased = rng.random::<f64>() < spec.pi.get(s.rob);
        let b = s.arms[0];
        // multi-arm random effects: a shared component plus arm components,
        // each with variance tau^2 / 2
        let half = spec.tau / 2f64.sqrt();
        let shared = normal(&mut rng, 0.0, half);
        let mut effects = vec![0.0; s.arms.len()];
        for (a, &k) in s.arms.iter().enumerate().skip(1) {
            let mean = spec.treatments[k].effect - spec.treatments[b].effect;
            let mut e = mean + shared + normal(&mut rng, 0.0, half);
            let gamma = normal(&mut rng, mean_bias(spec, b, k, s.direction), spec.tau_gamma);
            if biased {
                e += gamma;
            }
            effects[a] = e;
        }
        let slope = |a: usize| -> f64 {
            if a == 0 {
                0.0
            } else {
                spec.treatments[s.arms[a]].interaction - spec.treatments[b].interaction
            }
        };
        let data = match s.format {
            DataFormat::Ipd => {
                let mut rows = Vec::new();
                for (a, &k) in s.arms.iter().enumerate() {
                    for _ in 0..s.arm_size[a] {
                        let mut x = normal(&mut rng, s.covariate_mean, s.covariate_sd);
                        if let Some(step) = spec.covariate_step {
                            x = (x / step).round() * step;
                        }
                        let eta = u + spec.beta0 * (x - c) + effects[a] + slope(a) * (x - c);
                        let y = rng.random::<f64>() < sigmoid(eta);
                        rows.push(IpdRecord { treatment: k as u32 + 1, y, x: vec![x] });
                    }
                }
                StudyData::Ipd(rows)
            }
            DataFormat::Ad => StudyData::Ad(
                s.arms
                    .iter()
                    .enumerate()
                    .map(|(a, &k)| {
                        let eta = u + effects[a] + slope(a) * (s.covariate_mean - c);
                        let n = s.arm_size[a];
                        let r = Binomial::new(n, sigmoid(eta)).expect("valid binomial").sample(&mut rng);
                        AdArm { treatment: k as u32 + 1, r, n, xbar: vec![Some(s.covariate_mean)] }
                    })
                    .collect(),
            ),
        };
        truth.insert(names::study("u", &s.id), u);
        truth.insert(names::study("R", &s.id), f64::from(u8::from(biased)));
        let arms: Vec<u32> = s.arms.iter().map(|&k| k as u32 + 1).collect();
        let directions = arms[1..]
            .iter()
            .filter(|&&k| spec.treatments[b].active && spec.treatments[k as usize - 1].active)
            .map(|&k| (k, s.direction))
            .collect();
        studies.push(Study {
            id: s.id.clone(),
            design: s.design,
            rob: s.rob,
            reference_arm: arms[0],
            arms,
            directions,
            z: vec![],
            bias_prior: s.bias_prior,
            data,
        });
    }
    let treatments = spec
        .treatments
        .iter()
        .enumerate()
        .map(|(i, t)| Treatment { id: i as u32 + 1, label: t.label.clone(), is_active: t.active })
        .collect();
    let network = EvidenceNetwork {
        treatments,
        studies,
        reference: reference as u32 + 1,
        centers: vec![0.0],
        n_covariates: 1,
        n_study_covariates: 0,
    };
    Ok(SimulatedNetwork { network, truth: TruthRecord { values: truth } })
}
