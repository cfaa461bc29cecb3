//! Model configuration: synthesis approach, effect assumptions, bias
//! structure and priors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{BetaPrior, NormalPrior};
use crate::evidence::{RobLevel, TreatmentId};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("config does not match the data: {0}")]
    Data(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    #[default]
    Unadjusted,
    /// Two-step: observational posteriors become priors for the randomized fit.
    NrsPrior,
    #[serde(rename = "bias_model_1")]
    BiasModel1,
    /// Bimodal mixture on the relative effects.
    #[serde(rename = "bias_model_2")]
    BiasModel2,
}

text_enum!(Approach, "approach", {
    Approach::Unadjusted => "unadjusted",
    Approach::NrsPrior => "nrs_prior" | "nrs" | "nrs-prior",
    Approach::BiasModel1 => "bias_model_1" | "bias1" | "bias-model-1",
    Approach::BiasModel2 => "bias_model_2" | "bias2" | "bias-model-2",
});

impl Approach {
    pub fn is_bias_model(self) -> bool {
        matches!(self, Self::BiasModel1 | Self::BiasModel2)
    }
}

/// Exchangeable (random) or common (fixed) across studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EffectModel {
    #[default]
    Random,
    Common,
}

text_enum!(EffectModel, "effect model", {
    EffectModel::Random => "random",
    EffectModel::Common => "common" | "fixed",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineBeta0 {
    #[default]
    Independent,
    Random,
}

text_enum!(BaselineBeta0, "baseline covariate model", {
    BaselineBeta0::Independent => "independent",
    BaselineBeta0::Random => "random",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WithinBetween {
    #[default]
    Separate,
    /// Within-study interactions share the between-study parameters.
    Equal,
}

text_enum!(WithinBetween, "within/between setting", {
    WithinBetween::Separate => "separate",
    WithinBetween::Equal => "equal",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    /// Zero-based covariate column used as the effect modifier.
    pub covariate: usize,
    pub baseline_beta0: BaselineBeta0,
    pub within_between: WithinBetween,
    pub interaction_effect: EffectModel,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            covariate: 0,
            baseline_beta0: BaselineBeta0::Independent,
            within_between: WithinBetween::Separate,
            interaction_effect: EffectModel::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiasForm {
    #[default]
    Additive,
    Multiplicative,
    Both,
}

text_enum!(BiasForm, "bias form", {
    BiasForm::Additive => "additive",
    BiasForm::Multiplicative => "multiplicative",
    BiasForm::Both => "both",
});

impl BiasForm {
    pub fn has_additive(self) -> bool {
        matches!(self, Self::Additive | Self::Both)
    }

    pub fn has_multiplicative(self) -> bool {
        matches!(self, Self::Multiplicative | Self::Both)
    }
}

/// Mean bias for contrasts between two active treatments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanStructure {
    #[default]
    ZeroActiveActive,
    /// `+g_act` or `-g_act` depending on the bias direction.
    SignedActiveActive,
}

text_enum!(MeanStructure, "mean-bias structure", {
    MeanStructure::ZeroActiveActive => "zero_active_active" | "zero",
    MeanStructure::SignedActiveActive => "signed_active_active" | "signed",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityModel {
    #[default]
    PerStudyBeta,
    LogisticOnZ,
}

text_enum!(ProbabilityModel, "bias probability model", {
    ProbabilityModel::PerStudyBeta => "per_study_beta" | "beta",
    ProbabilityModel::LogisticOnZ => "logistic_on_z" | "logistic",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Heterogeneity {
    /// Separate heterogeneity for the bias effects, with a uniform prior.
    #[default]
    TauGammaPrior,
    /// Biased studies get variance `tau^2 / q` with a weight `q` per study.
    RobWeight,
}

text_enum!(Heterogeneity, "bias heterogeneity", {
    Heterogeneity::TauGammaPrior => "tau_gamma_prior" | "tau_gamma",
    Heterogeneity::RobWeight => "rob_weight" | "q",
});

/// Prior on the risk-of-bias weight of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QPrior {
    /// Constant weight in (0, 1].
    Fixed(f64),
    /// `Beta(v, 1)`.
    BetaV(f64),
}

impl Default for QPrior {
    fn default() -> Self {
        QPrior::BetaV(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ByRob<T> {
    pub low: T,
    pub high: T,
    pub unclear: T,
}

impl<T: Copy> ByRob<T> {
    pub fn get(&self, rob: RobLevel) -> T {
        match rob {
            RobLevel::Low => self.low,
            RobLevel::High => self.high,
            RobLevel::Unclear => self.unclear,
        }
    }
}

impl Default for ByRob<BetaPrior> {
    fn default() -> Self {
        Self { low: BetaPrior::new(1.0, 1.0), high: BetaPrior::new(1.0, 1.0), unclear: BetaPrior::new(1.0, 1.0) }
    }
}

impl Default for ByRob<f64> {
    fn default() -> Self {
        Self { low: 0.0, high: 0.0, unclear: 0.0 }
    }
}

impl Default for ByRob<QPrior> {
    fn default() -> Self {
        Self { low: QPrior::default(), high: QPrior::default(), unclear: QPrior::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    pub form: BiasForm,
    pub effect: EffectModel,
    pub mean_structure: MeanStructure,
    pub probability_model: ProbabilityModel,
    pub heterogeneity: Heterogeneity,
    /// Bias-probability priors by risk-of-bias level; a study's own
    /// `bias_a1`/`bias_a2` take precedence.
    pub pi_priors: ByRob<BetaPrior>,
    pub q_priors: ByRob<QPrior>,
    /// Per-study constant weights, overriding `q_priors`.
    pub fixed_q: BTreeMap<String, f64>,
    /// Prior on the probability that an unknown direction is `1`.
    pub direction_prior: BetaPrior,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            form: BiasForm::Additive,
            effect: EffectModel::Random,
            mean_structure: MeanStructure::ZeroActiveActive,
            probability_model: ProbabilityModel::PerStudyBeta,
            heterogeneity: Heterogeneity::TauGammaPrior,
            pi_priors: ByRob::default(),
            q_priors: ByRob::default(),
            fixed_q: BTreeMap::new(),
            direction_prior: BetaPrior::new(1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NrsConfig {
    /// Shift added to the observational posterior means.
    pub zeta: f64,
    /// Variance inflation: prior variance is the posterior variance over `w`.
    pub w: f64,
    /// Reference for the observational step; defaults to the network
    /// reference when observed there.
    pub reference: Option<TreatmentId>,
}

impl Default for NrsConfig {
    fn default() -> Self {
        Self { zeta: 0.0, w: 1.0, reference: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicOverride {
    pub treatment: TreatmentId,
    pub prior: NormalPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Vague prior on baselines, basic parameters, interactions and mean biases.
    pub location: NormalPrior,
    /// Upper bound of the uniform prior on every heterogeneity parameter.
    pub tau_upper: f64,
    pub basic_overrides: Vec<BasicOverride>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { location: NormalPrior::default(), tau_upper: 2.0, basic_overrides: Vec::new() }
    }
}

impl PriorConfig {
    pub fn basic(&self, k: TreatmentId) -> NormalPrior {
        self.basic_overrides
            .iter()
            .rev()
            .find(|o| o.treatment == k)
            .map_or(self.location, |o| o.prior)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub approach: Approach,
    pub trt_effect: EffectModel,
    /// Drop the data likelihood; the sampler then targets the prior.
    pub prior_only: bool,
    pub reference: Option<TreatmentId>,
    pub regression: Option<RegressionConfig>,
    pub bias: Option<BiasConfig>,
    pub nrs: NrsConfig,
    pub priors: PriorConfig,
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|source| ConfigError::Parse { path: "<string>".into(), source })?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn bias(&self) -> Option<&BiasConfig> {
        self.bias.as_ref().filter(|_| self.approach.is_bias_model())
    }

    /// Check internal consistency (independent of the data).
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.approach.is_bias_model() != self.bias.is_some() {
            return bad("bias settings must be given exactly when the approach is a bias model");
        }
        if !(self.nrs.w > 0.0 && self.nrs.w <= 1.0) {
            return bad("inflation factor w must lie in (0, 1]");
        }
        if !self.nrs.zeta.is_finite() {
            return bad("shift zeta must be finite");
        }
        if !(self.priors.tau_upper > 0.0 && self.priors.tau_upper.is_finite()) {
            return bad("tau_upper must be positive");
        }
        let normal_ok = |p: &NormalPrior| p.mean.is_finite() && p.var > 0.0 && p.var.is_finite();
        if !normal_ok(&self.priors.location) || !self.priors.basic_overrides.iter().all(|o| normal_ok(&o.prior)) {
            return bad("normal priors need a finite mean and positive variance");
        }
        if let Some(b) = &self.bias {
            let pis = [b.pi_priors.low, b.pi_priors.high, b.pi_priors.unclear, b.direction_prior];
            if !pis.iter().all(BetaPrior::is_valid) {
                return bad("beta prior parameters must be positive");
            }
            let q_ok = |q: QPrior| match q {
                QPrior::Fixed(v) => v > 0.0 && v <= 1.0,
                QPrior::BetaV(v) => v > 0.0 && v.is_finite(),
            };
            if ![b.q_priors.low, b.q_priors.high, b.q_priors.unclear].into_iter().all(q_ok)
                || !b.fixed_q.values().all(|&v| v > 0.0 && v <= 1.0)
            {
                return bad("weights q must lie in (0, 1] and Beta(v, 1) needs v > 0");
            }
            if b.heterogeneity == Heterogeneity::RobWeight {
                if self.trt_effect == EffectModel::Common {
                    return bad("the risk-of-bias weight parametrization needs random treatment effects");
                }
                if self.approach == Approach::BiasModel1 && b.form != BiasForm::Additive {
                    return bad("the risk-of-bias weight parametrization is defined for additive bias only");
                }
                if self.approach == Approach::BiasModel2 && b.effect != EffectModel::Common {
                    return bad("bias model 2 with risk-of-bias weights needs a common bias effect");
                }
            }
        }
        Ok(())
    }
}
