//! Enumeration of the unknowns implied by a network and a configuration.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::config::{
    Approach, BaselineBeta0, ConfigError, EffectModel, Heterogeneity, MeanStructure, ModelConfig, ProbabilityModel,
    QPrior, WithinBetween,
};
use crate::density::BetaPrior;
use crate::evidence::{BiasDirection, EvidenceError, EvidenceNetwork, Study, StudyData, TreatmentId};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error("model does not fit the data: {0}")]
    Data(String),
    #[error("parameter '{0}' is required by the model but not in the parameter space")]
    Unhoused(String),
    #[error("parameter space entries not used by the model: {0:?}")]
    Unused(Vec<String>),
    #[error("state has length {got}, parameter space has {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("log-posterior is NaN ({0})")]
    NotANumber(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Support {
    Real,
    /// Open interval `(0, upper)`.
    Interval { upper: f64 },
    Binary,
}

impl Support {
    pub const UNIT: Support = Support::Interval { upper: 1.0 };

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Real => x.is_finite(),
            Support::Interval { upper } => x > 0.0 && x < upper,
            Support::Binary => x == 0.0 || x == 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Role {
    Baseline,
    Basic,
    StudyEffect,
    BiasedEffect,
    Theta,
    Beta0,
    Beta0Mean,
    InteractionBasic,
    Interaction,
    BiasEffect,
    MeanBias,
    Heterogeneity,
    BiasProbability,
    Indicator,
    Direction,
    DirectionProbability,
    Weight,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Owner {
    Global,
    Study(usize),
}

/// Starting-value rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Init {
    Jitter,
    Heterogeneity,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamDescriptor {
    pub name: String,
    pub role: Role,
    pub support: Support,
    pub owner: Owner,
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSpace {
    pub params: Vec<ParamDescriptor>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub type ParameterState = Vec<f64>;

impl ParameterSpace {
    /// Build from descriptors; fails on a repeated name.
    pub fn from_params(params: Vec<ParamDescriptor>) -> Result<Self, ModelError> {
        let mut space = ParameterSpace { params: Vec::new(), index: HashMap::new() };
        for p in params {
            if space.index.contains_key(&p.name) {
                return Err(ModelError::Data(format!("duplicate parameter {}", p.name)));
            }
            space.push(p.name, p.role, p.support, p.owner, p.init);
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    fn push(&mut self, name: String, role: Role, support: Support, owner: Owner, init: Init) {
        let idx = self.params.len();
        let prev = self.index.insert(name.clone(), idx);
        assert!(prev.is_none(), "duplicate parameter {name}");
        self.params.push(ParamDescriptor { name, role, support, owner, init });
    }
}

pub mod names {
    pub fn study(kind: &str, study: &str) -> String {
        format!("{kind}[{study}]")
    }

    pub fn contrast(kind: &str, study: &str, arm: &str) -> String {
        format!("{kind}[{study},{arm}]")
    }

    pub fn basic(kind: &str, label: &str) -> String {
        format!("{kind}[{label}]")
    }

    pub fn indexed(kind: &str, i: usize) -> String {
        format!("{kind}[{}]", i + 1)
    }
}

/// How the mean bias of a contrast is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanBias {
    /// Inactive reference, active arm.
    Plus,
    /// Active reference, inactive arm.
    Minus,
    Zero,
    /// Active vs active with the direction fixed by the data: `+g_act` for
    /// direction 0, `-g_act` for direction 1.
    Signed(bool),
    /// Active vs active with a sampled direction.
    SignedLatent,
}

/// Derived switches shared by the space builder and the kernel.
#[derive(Debug, Clone)]
pub struct Plan {
    pub approach: Approach,
    pub reference: TreatmentId,
    pub random_trt: bool,
    pub covariate: Option<usize>,
    pub beta0_random: bool,
    pub interaction_random: bool,
    pub within_equal: bool,
    pub bias_random: bool,
    pub additive: bool,
    pub multiplicative: bool,
    /// Model 1 written as `(1 - R) delta + R delta_bias`.
    pub eq2: bool,
    pub rob_weight: bool,
    pub logistic: bool,
    pub signed: bool,
    pub prior_only: bool,
}

impl Plan {
    pub fn new(net: &EvidenceNetwork, cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let reference = cfg.reference.unwrap_or(net.reference);
        if !net.observed_treatments().contains(&reference) {
            return Err(ModelError::Data(format!("reference treatment {reference} is not in any study")));
        }
        let bias = cfg.bias();
        let approach = match cfg.approach {
            Approach::NrsPrior => Approach::Unadjusted,
            a => a,
        };
        let rob_weight = bias.is_some_and(|b| b.heterogeneity == Heterogeneity::RobWeight);
        let plan = Plan {
            approach,
            reference,
            random_trt: cfg.trt_effect == EffectModel::Random,
            covariate: cfg.regression.as_ref().map(|r| r.covariate),
            beta0_random: cfg.regression.as_ref().is_some_and(|r| r.baseline_beta0 == BaselineBeta0::Random),
            interaction_random: cfg.regression.as_ref().is_some_and(|r| r.interaction_effect == EffectModel::Random),
            within_equal: cfg.regression.as_ref().is_some_and(|r| r.within_between == WithinBetween::Equal),
            bias_random: bias.is_some_and(|b| b.effect == EffectModel::Random),
            additive: match approach {
                Approach::BiasModel1 => bias.is_some_and(|b| b.form.has_additive()),
                Approach::BiasModel2 => true,
                _ => false,
            },
            multiplicative: approach == Approach::BiasModel1 && bias.is_some_and(|b| b.form.has_multiplicative()),
            eq2: approach == Approach::BiasModel1 && rob_weight,
            rob_weight,
            logistic: bias.is_some_and(|b| b.probability_model == ProbabilityModel::LogisticOnZ),
            signed: bias.is_some_and(|b| b.mean_structure == MeanStructure::SignedActiveActive),
            prior_only: cfg.prior_only,
        };
        if let Some(c) = plan.covariate {
            if c >= net.n_covariates {
                return Err(ModelError::Data(format!(
                    "covariate column {} requested but the data have {}",
                    c + 1,
                    net.n_covariates
                )));
            }
            for s in &net.studies {
                if s.mean_covariate(c).is_none() {
                    return Err(ModelError::Data(format!("study '{}' lacks a mean for covariate {}", s.id, c + 1)));
                }
            }
        }
        Ok(plan)
    }

    pub fn is_bias(&self) -> bool {
        self.approach.is_bias_model()
    }

    /// Model 2 with common treatment effects: `theta = d diff + pi gamma`.
    pub fn theta_fixed(&self) -> bool {
        self.approach == Approach::BiasModel2 && !self.random_trt
    }

    pub fn has_indicator(&self) -> bool {
        self.is_bias() && !self.theta_fixed()
    }

    pub fn has_delta(&self) -> bool {
        self.random_trt && self.approach != Approach::BiasModel2
    }

    pub fn has_theta(&self) -> bool {
        self.random_trt && self.approach == Approach::BiasModel2
    }

    /// Exchangeable additive bias effects per contrast.
    pub fn has_gamma(&self) -> bool {
        self.bias_random && self.additive && !self.eq2
    }

    pub fn has_delta_bias(&self) -> bool {
        self.eq2 && self.bias_random
    }

    pub fn has_gamma_mult(&self) -> bool {
        self.bias_random && self.multiplicative
    }

    pub fn has_tau_gamma(&self) -> bool {
        match self.approach {
            Approach::BiasModel1 => self.has_gamma(),
            Approach::BiasModel2 => self.bias_random || (self.random_trt && !self.rob_weight),
            _ => false,
        }
    }

    pub fn mean_bias(&self, net: &EvidenceNetwork, study: &Study, k: TreatmentId) -> MeanBias {
        let b = study.reference_arm;
        match (net.is_active(b), net.is_active(k)) {
            (false, true) => MeanBias::Plus,
            (true, false) => MeanBias::Minus,
            (false, false) => MeanBias::Zero,
            (true, true) if !self.signed => MeanBias::Zero,
            (true, true) => match study.direction(k) {
                BiasDirection::FavoursReference => MeanBias::Signed(false),
                BiasDirection::FavoursTreatment => MeanBias::Signed(true),
                BiasDirection::Unknown => MeanBias::SignedLatent,
            },
        }
    }

    pub fn is_ipd(study: &Study) -> bool {
        matches!(study.data, StudyData::Ipd(_))
    }
}

pub fn pi_prior(cfg: &ModelConfig, study: &Study) -> BetaPrior {
    study
        .bias_prior
        .unwrap_or_else(|| cfg.bias.as_ref().map_or(BetaPrior::new(1.0, 1.0), |b| b.pi_priors.get(study.rob)))
}

pub fn q_prior(cfg: &ModelConfig, study: &Study) -> QPrior {
    let Some(b) = cfg.bias.as_ref() else { return QPrior::default() };
    match b.fixed_q.get(&study.id) {
        Some(&q) => QPrior::Fixed(q),
        None => b.q_priors.get(study.rob),
    }
}

/// Enumerate the parameters of `cfg` on `net`, in a fixed order: global
/// parameters first, then each study's in network order.
pub fn build_parameter_space(net: &EvidenceNetwork, cfg: &ModelConfig) -> Result<ParameterSpace, ModelError> {
    let plan = Plan::new(net, cfg)?;
    let mut space = ParameterSpace { params: Vec::new(), index: HashMap::new() };
    let tau = Support::Interval { upper: cfg.priors.tau_upper };
    let g = Owner::Global;
    let observed = net.observed_treatments();
    let others: Vec<TreatmentId> = observed.iter().copied().filter(|&t| t != plan.reference).collect();

    let kinds: Vec<Vec<MeanBias>> = net
        .studies
        .iter()
        .map(|s| s.contrast_arms().map(|k| plan.mean_bias(net, s, k)).collect())
        .collect();
    let any = |f: fn(MeanBias) -> bool| kinds.iter().flatten().any(|&m| f(m));
    let uses_g = plan.is_bias() && any(|m| matches!(m, MeanBias::Plus | MeanBias::Minus));
    let uses_g_act = plan.is_bias() && any(|m| matches!(m, MeanBias::Signed(_) | MeanBias::SignedLatent));
    let latent_dir = plan.is_bias() && any(|m| m == MeanBias::SignedLatent);

    for &k in &others {
        space.push(names::basic("d", net.label(k)), Role::Basic, Support::Real, g, Init::Jitter);
    }
    if plan.covariate.is_some() {
        for &k in &others {
            space.push(names::basic("BB", net.label(k)), Role::InteractionBasic, Support::Real, g, Init::Jitter);
        }
        if !plan.within_equal {
            for &k in &others {
                space.push(names::basic("BW", net.label(k)), Role::InteractionBasic, Support::Real, g, Init::Jitter);
            }
        }
        if plan.beta0_random {
            space.push("B0".into(), Role::Beta0Mean, Support::Real, g, Init::Jitter);
        }
    }
    if plan.random_trt {
        space.push("tau".into(), Role::Heterogeneity, tau, g, Init::Heterogeneity);
    }
    if plan.covariate.is_some() && plan.interaction_random {
        space.push("tauB".into(), Role::Heterogeneity, tau, g, Init::Heterogeneity);
        if !plan.within_equal {
            space.push("tauW".into(), Role::Heterogeneity, tau, g, Init::Heterogeneity);
        }
    }
    if plan.covariate.is_some() && plan.beta0_random {
        space.push("tau0".into(), Role::Heterogeneity, tau, g, Init::Heterogeneity);
    }
    if plan.additive || plan.eq2 {
        if uses_g {
            space.push("g".into(), Role::MeanBias, Support::Real, g, Init::Jitter);
        }
        if uses_g_act {
            space.push("g_act".into(), Role::MeanBias, Support::Real, g, Init::Jitter);
        }
    }
    if plan.multiplicative {
        if uses_g {
            space.push("g_mult".into(), Role::MeanBias, Support::Real, g, Init::Jitter);
        }
        if uses_g_act {
            space.push("g_mult_act".into(), Role::MeanBias, Support::Real, g, Init::Jitter);
        }
    }
    if plan.has_tau_gamma() {
        space.push("tau_gamma".into(), Role::Heterogeneity, tau, g, Init::Heterogeneity);
    }
    if plan.has_gamma_mult() {
        space.push("tau_gamma_mult".into(), Role::Heterogeneity, tau, g, Init::Heterogeneity);
    }
    if plan.is_bias() && plan.logistic {
        space.push("e".into(), Role::Logistic, Support::Real, g, Init::Jitter);
        for m in 0..net.n_study_covariates {
            space.push(names::indexed("f", m), Role::Logistic, Support::Real, g, Init::Jitter);
        }
    }
    let dir_mean = cfg.bias.as_ref().map_or(0.5, |b| b.direction_prior.mean());
    if latent_dir {
        space.push("p_dir".into(), Role::DirectionProbability, Support::UNIT, g, Init::Value(dir_mean));
    }

    for (j, s) in net.studies.iter().enumerate() {
        let own = Owner::Study(j);
        let sid = s.id.as_str();
        space.push(names::study("u", sid), Role::Baseline, Support::Real, own, Init::Jitter);
        if plan.covariate.is_some() && Plan::is_ipd(s) {
            space.push(names::study("beta0", sid), Role::Beta0, Support::Real, own, Init::Jitter);
        }
        if plan.is_bias() {
            let prior = pi_prior(cfg, s);
            if !plan.logistic {
                space.push(names::study("pi", sid), Role::BiasProbability, Support::UNIT, own, Init::Value(prior.mean()));
            }
            if plan.has_indicator() {
                let p = if plan.logistic { 0.5 } else { prior.mean() };
                space.push(names::study("R", sid), Role::Indicator, Support::Binary, own, Init::Value(p.round()));
            }
            if plan.rob_weight {
                if let QPrior::BetaV(v) = q_prior(cfg, s) {
                    space.push(names::study("q", sid), Role::Weight, Support::UNIT, own, Init::Value(v / (v + 1.0)));
                }
            }
        }
        for (c, k) in s.contrast_arms().enumerate() {
            let arm = net.label(k);
            let name = |kind: &str| names::contrast(kind, sid, arm);
            if plan.has_delta() {
                space.push(name("delta"), Role::StudyEffect, Support::Real, own, Init::Jitter);
            }
            if plan.has_delta_bias() {
                space.push(name("delta_bias"), Role::BiasedEffect, Support::Real, own, Init::Jitter);
            }
            if plan.has_theta() {
                space.push(name("theta"), Role::Theta, Support::Real, own, Init::Jitter);
            }
            if plan.has_gamma() {
                space.push(name("gamma"), Role::BiasEffect, Support::Real, own, Init::Jitter);
            }
            if plan.has_gamma_mult() {
                space.push(name("log_gamma_mult"), Role::BiasEffect, Support::Real, own, Init::Jitter);
            }
            if plan.covariate.is_some() && plan.interaction_random {
                space.push(name("betaB"), Role::Interaction, Support::Real, own, Init::Jitter);
                if !plan.within_equal && Plan::is_ipd(s) {
                    space.push(name("betaW"), Role::Interaction, Support::Real, own, Init::Jitter);
                }
            }
            if plan.is_bias() && kinds[j][c] == MeanBias::SignedLatent {
                space.push(name("dir"), Role::Direction, Support::Binary, own, Init::Value(dir_mean.round()));
            }
        }
    }
    Ok(space)
}

/// Deterministic starting values for one chain.
pub fn initial_state(space: &ParameterSpace, seed: u64) -> ParameterState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.1).expect("valid normal");
    space
        .params
        .iter()
        .map(|p| match (p.init, p.support) {
            (Init::Jitter, _) => jitter.sample(&mut rng),
            (Init::Heterogeneity, Support::Interval { upper }) => rng.random_range(0.05 * upper..0.25 * upper),
            (Init::Heterogeneity, _) => 0.3,
            (Init::Value(v), _) => v,
        })
        .collect()
}
