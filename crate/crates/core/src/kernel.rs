//! Joint log-posterior of the synthesis models.
//!
//! The posterior is organised in blocks: for every study a data block
//! (its likelihood) and a structure block (the hierarchical terms that tie
//! its study-level parameters to the global ones). Each parameter also has
//! an independent prior term. A single-parameter update only needs the
//! blocks that parameter touches.

use std::collections::BTreeMap;

use crate::config::{Approach, ModelConfig, QPrior};
use crate::density::{
    bernoulli_logpmf, binomial_logit_logpmf, ln_binomial_coefficient, log_sigmoid, multi_arm_normal_logpdf,
    normal_logpdf, sigmoid, uniform_logpdf, BetaPrior, NormalPrior,
};
use crate::evidence::{EvidenceNetwork, StudyData, TreatmentId};
use crate::mcmc::{ShiftMove, Target};
use crate::space::{
    build_parameter_space, names, pi_prior, q_prior, MeanBias, ModelError, Owner, ParameterSpace, Plan, Role, Support,
};

#[derive(Debug, Clone, Copy, PartialEq)]
enum ParamPrior {
    Flat,
    Normal(NormalPrior),
    Uniform(f64),
    Beta(BetaPrior),
}

impl ParamPrior {
    fn logpdf(&self, x: f64) -> f64 {
        match *self {
            ParamPrior::Flat => 0.0,
            ParamPrior::Normal(p) => p.logpdf(x),
            ParamPrior::Uniform(upper) => uniform_logpdf(x, 0.0, upper),
            ParamPrior::Beta(p) => p.logpdf(x),
        }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    x: f64,
    events: f64,
    non_events: f64,
}

#[derive(Debug, Clone)]
struct ArmData {
    treatment: TreatmentId,
    /// Index into the study's contrasts; `None` for the reference arm.
    contrast: Option<usize>,
    cells: Vec<Cell>,
    /// Log binomial coefficient (AD arms only).
    ln_coef: f64,
}

#[derive(Debug, Clone)]
struct Contrast {
    k: TreatmentId,
    mean: MeanBias,
    d_k: Option<usize>,
    d_b: Option<usize>,
    bb_k: Option<usize>,
    bb_b: Option<usize>,
    bw_k: Option<usize>,
    bw_b: Option<usize>,
    delta: Option<usize>,
    delta_bias: Option<usize>,
    theta: Option<usize>,
    gamma: Option<usize>,
    log_gamma_mult: Option<usize>,
    beta_b: Option<usize>,
    beta_w: Option<usize>,
    dir: Option<usize>,
}

#[derive(Debug, Clone)]
struct StudySlots {
    ipd: bool,
    xbar: f64,
    z: Vec<f64>,
    u: usize,
    beta0: Option<usize>,
    pi: Option<usize>,
    r: Option<usize>,
    q: Option<usize>,
    q_fixed: Option<f64>,
    arms: Vec<ArmData>,
    contrasts: Vec<Contrast>,
}

#[derive(Debug, Clone, Default)]
struct Globals {
    b0: Option<usize>,
    tau: Option<usize>,
    tau_b: Option<usize>,
    tau_w: Option<usize>,
    tau0: Option<usize>,
    g: Option<usize>,
    g_act: Option<usize>,
    g_mult: Option<usize>,
    g_mult_act: Option<usize>,
    tau_gamma: Option<usize>,
    tau_gamma_mult: Option<usize>,
    e: Option<usize>,
    f: Vec<usize>,
    p_dir: Option<usize>,
}

struct Resolver<'a> {
    space: &'a ParameterSpace,
    used: Vec<bool>,
}

impl Resolver<'_> {
    fn req(&mut self, name: &str) -> Result<usize, ModelError> {
        let i = self.space.index_of(name).ok_or_else(|| ModelError::Unhoused(name.to_string()))?;
        self.used[i] = true;
        Ok(i)
    }

    fn when(&mut self, cond: bool, name: &str) -> Result<Option<usize>, ModelError> {
        if cond {
            self.req(name).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Which additive-or-multiplicative mean a bias term uses.
#[derive(Clone, Copy)]
enum BiasScale {
    Additive,
    Multiplicative,
}

#[inline]
fn val(state: &[f64], i: Option<usize>) -> f64 {
    i.map_or(0.0, |i| state[i])
}

/// The log-posterior of one configured model on one network.
#[derive(Debug, Clone)]
pub struct Posterior {
    net: EvidenceNetwork,
    cfg: ModelConfig,
    plan: Plan,
    space: ParameterSpace,
    globals: Globals,
    studies: Vec<StudySlots>,
    priors: Vec<ParamPrior>,
    touched: Vec<Vec<usize>>,
    shifts: Vec<ShiftMove>,
}

impl Posterior {
    pub fn new(net: &EvidenceNetwork, cfg: &ModelConfig) -> Result<Self, ModelError> {
        let space = build_parameter_space(net, cfg)?;
        Self::with_space(net, cfg, space)
    }

    /// Resolve every symbol the configured equations need against `space`.
    /// Fails on a missing symbol and on entries the model never reads.
    pub fn with_space(net: &EvidenceNetwork, cfg: &ModelConfig, space: ParameterSpace) -> Result<Self, ModelError> {
        let plan = Plan::new(net, cfg)?;
        let mut res = Resolver { space: &space, used: vec![false; space.len()] };
        let reg = plan.covariate.is_some();
        let reference = plan.reference;

        let basic = |res: &mut Resolver, kind: &str, t: TreatmentId| -> Result<Option<usize>, ModelError> {
            if t == reference {
                Ok(None)
            } else {
                res.req(&names::basic(kind, net.label(t))).map(Some)
            }
        };

        let mut globals = Globals {
            b0: res.when(reg && plan.beta0_random, "B0")?,
            tau: res.when(plan.random_trt, "tau")?,
            tau_b: res.when(reg && plan.interaction_random, "tauB")?,
            tau_w: res.when(reg && plan.interaction_random && !plan.within_equal, "tauW")?,
            tau0: res.when(reg && plan.beta0_random, "tau0")?,
            tau_gamma: res.when(plan.has_tau_gamma(), "tau_gamma")?,
            tau_gamma_mult: res.when(plan.has_gamma_mult(), "tau_gamma_mult")?,
            e: res.when(plan.is_bias() && plan.logistic, "e")?,
            ..Default::default()
        };
        if plan.is_bias() && plan.logistic {
            for m in 0..net.n_study_covariates {
                globals.f.push(res.req(&names::indexed("f", m))?);
            }
        }

        let mut studies = Vec::with_capacity(net.studies.len());
        for s in &net.studies {
            let sid = s.id.as_str();
            let ipd = Plan::is_ipd(s);
            let xbar = plan.covariate.and_then(|c| s.mean_covariate(c)).unwrap_or(0.0);
            let u = res.req(&names::study("u", sid))?;
            let beta0 = res.when(reg && ipd, &names::study("beta0", sid))?;
            let pi = res.when(plan.is_bias() && !plan.logistic, &names::study("pi", sid))?;
            let r = res.when(plan.has_indicator(), &names::study("R", sid))?;
            let (q, q_fixed) = if plan.rob_weight {
                match q_prior(cfg, s) {
                    QPrior::BetaV(_) => (Some(res.req(&names::study("q", sid))?), None),
                    QPrior::Fixed(v) => (None, Some(v)),
                }
            } else {
                (None, None)
            };
            let b = s.reference_arm;
            let mut contrasts = Vec::new();
            for k in s.contrast_arms() {
                let name = |kind: &str| names::contrast(kind, sid, net.label(k));
                let mean = plan.mean_bias(net, s, k);
                let is_bias = plan.is_bias();
                let c = Contrast {
                    k,
                    mean,
                    d_k: basic(&mut res, "d", k)?,
                    d_b: basic(&mut res, "d", b)?,
                    bb_k: if reg { basic(&mut res, "BB", k)? } else { None },
                    bb_b: if reg { basic(&mut res, "BB", b)? } else { None },
                    bw_k: if reg && !plan.within_equal { basic(&mut res, "BW", k)? } else { None },
                    bw_b: if reg && !plan.within_equal { basic(&mut res, "BW", b)? } else { None },
                    delta: res.when(plan.has_delta(), &name("delta"))?,
                    delta_bias: res.when(plan.has_delta_bias(), &name("delta_bias"))?,
                    theta: res.when(plan.has_theta(), &name("theta"))?,
                    gamma: res.when(plan.has_gamma(), &name("gamma"))?,
                    log_gamma_mult: res.when(plan.has_gamma_mult(), &name("log_gamma_mult"))?,
                    beta_b: res.when(reg && plan.interaction_random, &name("betaB"))?,
                    beta_w: res.when(reg && plan.interaction_random && !plan.within_equal && ipd, &name("betaW"))?,
                    dir: res.when(is_bias && mean == MeanBias::SignedLatent, &name("dir"))?,
                };
                if is_bias {
                    let plus_minus = matches!(mean, MeanBias::Plus | MeanBias::Minus);
                    let signed = matches!(mean, MeanBias::Signed(_) | MeanBias::SignedLatent);
                    if plan.additive || plan.eq2 {
                        if plus_minus {
                            globals.g = Some(res.req("g")?);
                        }
                        if signed {
                            globals.g_act = Some(res.req("g_act")?);
                        }
                    }
                    if plan.multiplicative {
                        if plus_minus {
                            globals.g_mult = Some(res.req("g_mult")?);
                        }
                        if signed {
                            globals.g_mult_act = Some(res.req("g_mult_act")?);
                        }
                    }
                    if mean == MeanBias::SignedLatent {
                        globals.p_dir = Some(res.req("p_dir")?);
                    }
                }
                contrasts.push(c);
            }
            let arms = study_cells(s, &contrasts, plan.covariate);
            studies.push(StudySlots {
                ipd,
                xbar,
                z: s.z.clone(),
                u,
                beta0,
                pi,
                r,
                q,
                q_fixed,
                arms,
                contrasts,
            });
        }

        let unused: Vec<String> = res
            .used
            .iter()
            .enumerate()
            .filter(|(_, &u)| !u)
            .map(|(i, _)| space.params[i].name.clone())
            .collect();
        if !unused.is_empty() {
            return Err(ModelError::Unused(unused));
        }

        let mut post = Posterior {
            net: net.clone(),
            cfg: cfg.clone(),
            plan,
            space,
            globals,
            studies,
            priors: Vec::new(),
            touched: Vec::new(),
            shifts: Vec::new(),
        };
        post.priors = post.build_priors();
        post.touched = post.build_touched();
        post.shifts = post.build_shifts();
        Ok(post)
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn network(&self) -> &EvidenceNetwork {
        &self.net
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn reference(&self) -> TreatmentId {
        self.plan.reference
    }

    fn build_priors(&self) -> Vec<ParamPrior> {
        let loc = self.cfg.priors.location;
        let upper = self.cfg.priors.tau_upper;
        self.space
            .params
            .iter()
            .map(|p| match p.role {
                Role::Basic => {
                    let label = p.name.trim_start_matches("d[").trim_end_matches(']');
                    let k = self.net.treatment_by_label(label).map(|t| t.id).expect("basic parameter label");
                    ParamPrior::Normal(self.cfg.priors.basic(k))
                }
                Role::Baseline | Role::InteractionBasic | Role::Beta0Mean | Role::MeanBias | Role::Logistic => {
                    ParamPrior::Normal(loc)
                }
                Role::Beta0 if !self.plan.beta0_random => ParamPrior::Normal(loc),
                Role::Heterogeneity => ParamPrior::Uniform(upper),
                Role::BiasProbability => match p.owner {
                    Owner::Study(j) => ParamPrior::Beta(pi_prior(&self.cfg, &self.net.studies[j])),
                    Owner::Global => unreachable!("bias probabilities are per study"),
                },
                Role::Weight => match p.owner {
                    Owner::Study(j) => match q_prior(&self.cfg, &self.net.studies[j]) {
                        QPrior::BetaV(v) => ParamPrior::Beta(BetaPrior::new(v, 1.0)),
                        QPrior::Fixed(_) => unreachable!("fixed weights are not parameters"),
                    },
                    Owner::Global => unreachable!("weights are per study"),
                },
                Role::DirectionProbability => {
                    ParamPrior::Beta(self.cfg.bias.as_ref().map_or(BetaPrior::new(1.0, 1.0), |b| b.direction_prior))
                }
                _ => ParamPrior::Flat,
            })
            .collect()
    }

    /// Translations of each location parameter together with the sampled
    /// study-level effects whose mean moves with it.
    fn build_shifts(&self) -> Vec<ShiftMove> {
        let mut leads: Vec<usize> = Vec::new();
        let mut coords: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        let mut link = |lead: Option<usize>, dep: Option<usize>, coef: f64| {
            if let (Some(l), Some(d)) = (lead, dep) {
                if !leads.contains(&l) {
                    leads.push(l);
                }
                coords.entry(l).or_default().push((d, coef));
            }
        };
        for s in &self.studies {
            for c in &s.contrasts {
                for dep in [c.delta, c.delta_bias, c.theta] {
                    link(c.d_k, dep, 1.0);
                    link(c.d_b, dep, -1.0);
                }
                link(c.bb_k, c.beta_b, 1.0);
                link(c.bb_b, c.beta_b, -1.0);
                link(c.bw_k, c.beta_w, 1.0);
                link(c.bw_b, c.beta_w, -1.0);
                let (g, coef) = match c.mean {
                    MeanBias::Plus => (self.globals.g, 1.0),
                    MeanBias::Minus => (self.globals.g, -1.0),
                    MeanBias::Signed(false) => (self.globals.g_act, 1.0),
                    MeanBias::Signed(true) => (self.globals.g_act, -1.0),
                    MeanBias::Zero | MeanBias::SignedLatent => (None, 0.0),
                };
                if self.plan.additive {
                    link(g, c.gamma, coef);
                }
                link(g, c.delta_bias, coef);
            }
        }
        leads
            .into_iter()
            .map(|l| {
                let mut all = vec![(l, 1.0)];
                all.extend(coords.remove(&l).unwrap_or_default());
                let mut blocks: Vec<usize> = all.iter().flat_map(|&(p, _)| self.touched[p].iter().copied()).collect();
                blocks.sort_unstable();
                blocks.dedup();
                ShiftMove { coords: all, blocks }
            })
            .collect()
    }

    fn build_touched(&self) -> Vec<Vec<usize>> {
        let n = self.studies.len();
        let lik = |j: usize| 2 * j;
        let pri = |j: usize| 2 * j + 1;
        let plan = &self.plan;
        let containing = |t: TreatmentId| -> Vec<usize> {
            (0..n).filter(|&j| self.net.studies[j].arms.contains(&t)).collect()
        };
        let all_prior: Vec<usize> = (0..n).map(pri).collect();
        let both = |js: &[usize]| -> Vec<usize> {
            let mut v: Vec<usize> = js.iter().flat_map(|&j| [lik(j), pri(j)]).collect();
            v.sort_unstable();
            v
        };
        let using = |pred: &dyn Fn(MeanBias) -> bool| -> Vec<usize> {
            (0..n).filter(|&j| self.studies[j].contrasts.iter().any(|c| pred(c.mean))).collect()
        };
        let plus_minus = |m: MeanBias| matches!(m, MeanBias::Plus | MeanBias::Minus);
        let signed = |m: MeanBias| matches!(m, MeanBias::Signed(_) | MeanBias::SignedLatent);
        let d_in_lik = !plan.random_trt || (plan.eq2 && !plan.bias_random);

        self.space
            .params
            .iter()
            .map(|p| match (p.owner, p.role) {
                (Owner::Study(j), Role::Baseline) => vec![lik(j)],
                (Owner::Study(j), _) => vec![lik(j), pri(j)],
                (Owner::Global, Role::Basic) => {
                    let label = p.name.trim_start_matches("d[").trim_end_matches(']');
                    let k = self.net.treatment_by_label(label).map(|t| t.id).expect("label");
                    let js = containing(k);
                    if d_in_lik {
                        both(&js)
                    } else {
                        js.into_iter().map(pri).collect()
                    }
                }
                (Owner::Global, Role::InteractionBasic) => {
                    let label = p.name.split_once('[').map(|(_, r)| r.trim_end_matches(']')).unwrap_or("");
                    let k = self.net.treatment_by_label(label).map(|t| t.id).expect("label");
                    let js = containing(k);
                    if plan.interaction_random {
                        js.into_iter().map(pri).collect()
                    } else {
                        js.into_iter().map(lik).collect()
                    }
                }
                (Owner::Global, Role::MeanBias) => {
                    let js = if p.name.ends_with("_act") { using(&signed) } else { using(&plus_minus) };
                    if plan.bias_random {
                        js.into_iter().map(pri).collect()
                    } else {
                        both(&js)
                    }
                }
                (Owner::Global, Role::Logistic) => {
                    if plan.theta_fixed() {
                        both(&(0..n).collect::<Vec<_>>())
                    } else {
                        all_prior.clone()
                    }
                }
                (Owner::Global, Role::DirectionProbability) => {
                    using(&|m| m == MeanBias::SignedLatent).into_iter().map(pri).collect()
                }
                (Owner::Global, Role::Beta0Mean) => {
                    (0..n).filter(|&j| self.studies[j].ipd).map(pri).collect()
                }
                (Owner::Global, _) => all_prior.clone(),
            })
            .collect()
    }

    // ---- value helpers -------------------------------------------------

    fn d_diff(&self, state: &[f64], c: &Contrast) -> f64 {
        val(state, c.d_k) - val(state, c.d_b)
    }

    fn mean_bias_value(&self, state: &[f64], c: &Contrast, scale: BiasScale) -> f64 {
        let (g, g_act) = match scale {
            BiasScale::Additive => (self.globals.g, self.globals.g_act),
            BiasScale::Multiplicative => (self.globals.g_mult, self.globals.g_mult_act),
        };
        match c.mean {
            MeanBias::Plus => val(state, g),
            MeanBias::Minus => -val(state, g),
            MeanBias::Zero => 0.0,
            MeanBias::Signed(dir1) => {
                if dir1 {
                    -val(state, g_act)
                } else {
                    val(state, g_act)
                }
            }
            MeanBias::SignedLatent => {
                if val(state, c.dir) == 1.0 {
                    -val(state, g_act)
                } else {
                    val(state, g_act)
                }
            }
        }
    }

    fn gamma_value(&self, state: &[f64], c: &Contrast) -> f64 {
        match c.gamma {
            Some(i) => state[i],
            None => self.mean_bias_value(state, c, BiasScale::Additive),
        }
    }

    fn log_gamma_mult_value(&self, state: &[f64], c: &Contrast) -> f64 {
        match c.log_gamma_mult {
            Some(i) => state[i],
            None => self.mean_bias_value(state, c, BiasScale::Multiplicative),
        }
    }

    /// Bias probability of study `j`.
    pub fn pi_value(&self, state: &[f64], j: usize) -> f64 {
        let s = &self.studies[j];
        match s.pi {
            Some(i) => state[i],
            None => {
                let eta = val(state, self.globals.e)
                    + self.globals.f.iter().zip(&s.z).map(|(&fi, z)| state[fi] * z).sum::<f64>();
                sigmoid(eta)
            }
        }
    }

    fn log_pi(&self, state: &[f64], j: usize, r: bool) -> f64 {
        let s = &self.studies[j];
        match s.pi {
            Some(i) => bernoulli_logpmf(r, state[i]),
            None => {
                let eta = val(state, self.globals.e)
                    + self.globals.f.iter().zip(&s.z).map(|(&fi, z)| state[fi] * z).sum::<f64>();
                if r {
                    log_sigmoid(eta)
                } else {
                    log_sigmoid(-eta)
                }
            }
        }
    }

    fn q_value(&self, state: &[f64], j: usize) -> f64 {
        let s = &self.studies[j];
        s.q.map_or_else(|| s.q_fixed.unwrap_or(1.0), |i| state[i])
    }

    fn delta_value(&self, state: &[f64], c: &Contrast) -> f64 {
        match c.delta {
            Some(i) => state[i],
            None => self.d_diff(state, c),
        }
    }

    /// Relative effect entering the predictor of contrast arm `c`.
    fn effect(&self, state: &[f64], j: usize, c: &Contrast) -> f64 {
        let s = &self.studies[j];
        let r = val(state, s.r);
        match self.plan.approach {
            Approach::Unadjusted | Approach::NrsPrior => self.delta_value(state, c),
            Approach::BiasModel1 if self.plan.eq2 => {
                let delta = self.delta_value(state, c);
                let biased = match c.delta_bias {
                    Some(i) => state[i],
                    None => self.mean_bias_value(state, c, BiasScale::Additive) + self.d_diff(state, c),
                };
                (1.0 - r) * delta + r * biased
            }
            Approach::BiasModel1 => {
                let delta = self.delta_value(state, c);
                let mut eff = if self.plan.multiplicative {
                    delta * (r * self.log_gamma_mult_value(state, c)).exp()
                } else {
                    delta
                };
                if self.plan.additive {
                    eff += r * self.gamma_value(state, c);
                }
                eff
            }
            Approach::BiasModel2 => match c.theta {
                Some(i) => state[i],
                None => self.d_diff(state, c) + self.pi_value(state, j) * self.gamma_value(state, c),
            },
        }
    }

    fn beta_b_value(&self, state: &[f64], c: &Contrast) -> f64 {
        match c.beta_b {
            Some(i) => state[i],
            None => val(state, c.bb_k) - val(state, c.bb_b),
        }
    }

    fn beta_w_value(&self, state: &[f64], c: &Contrast) -> f64 {
        if self.plan.within_equal {
            return self.beta_b_value(state, c);
        }
        match c.beta_w {
            Some(i) => state[i],
            None => val(state, c.bw_k) - val(state, c.bw_b),
        }
    }

    fn contrast_of(&self, j: usize, k: TreatmentId) -> Option<&Contrast> {
        self.studies[j].contrasts.iter().find(|c| c.k == k)
    }

    /// Log-odds for a participant of IPD study `j` on arm `k` with
    /// (selected, centered) covariate value `x`.
    pub fn linear_predictor_ipd(&self, state: &[f64], j: usize, x: f64, k: TreatmentId) -> f64 {
        let s = &self.studies[j];
        let mut eta = state[s.u] + val(state, s.beta0) * x;
        if let Some(c) = self.contrast_of(j, k) {
            eta += self.effect(state, j, c);
            if self.plan.covariate.is_some() {
                let bw = self.beta_w_value(state, c);
                let bb = self.beta_b_value(state, c);
                eta += bw * x + (bb - bw) * s.xbar;
            }
        }
        eta
    }

    /// Log-odds for arm `k` of AD study `j`.
    pub fn linear_predictor_ad(&self, state: &[f64], j: usize, k: TreatmentId) -> f64 {
        let s = &self.studies[j];
        let mut eta = state[s.u];
        if let Some(c) = self.contrast_of(j, k) {
            eta += self.effect(state, j, c);
            if self.plan.covariate.is_some() {
                eta += self.beta_b_value(state, c) * s.xbar;
            }
        }
        eta
    }

    // ---- likelihood ------------------------------------------------------

    /// Data log-likelihood of study `j` (ignores `prior_only`).
    pub fn study_loglik(&self, state: &[f64], j: usize) -> f64 {
        let s = &self.studies[j];
        let mut total = 0.0;
        for arm in &s.arms {
            let base = state[s.u];
            let (eff, bw, bb) = match arm.contrast {
                Some(ci) => {
                    let c = &s.contrasts[ci];
                    let eff = self.effect(state, j, c);
                    if self.plan.covariate.is_some() {
                        (eff, self.beta_w_value(state, c), self.beta_b_value(state, c))
                    } else {
                        (eff, 0.0, 0.0)
                    }
                }
                None => (0.0, 0.0, 0.0),
            };
            if s.ipd {
                let b0 = val(state, s.beta0);
                let offset = base + eff + (bb - bw) * s.xbar * f64::from(arm.contrast.is_some());
                for cell in &arm.cells {
                    let eta = offset + (b0 + bw) * cell.x;
                    if cell.events > 0.0 {
                        total += cell.events * log_sigmoid(eta);
                    }
                    if cell.non_events > 0.0 {
                        total += cell.non_events * log_sigmoid(-eta);
                    }
                }
            } else {
                let eta = base + eff + bb * s.xbar;
                let cell = &arm.cells[0];
                total += arm.ln_coef;
                if cell.events > 0.0 {
                    total += cell.events * log_sigmoid(eta);
                }
                if cell.non_events > 0.0 {
                    total += cell.non_events * log_sigmoid(-eta);
                }
            }
        }
        total
    }

    /// Bernoulli log-likelihood summed over all participant rows.
    pub fn ipd_loglik(&self, state: &[f64]) -> f64 {
        (0..self.studies.len()).filter(|&j| self.studies[j].ipd).map(|j| self.study_loglik(state, j)).sum()
    }

    /// Binomial log-likelihood (with coefficients) summed over all AD arms.
    pub fn ad_loglik(&self, state: &[f64]) -> f64 {
        (0..self.studies.len()).filter(|&j| !self.studies[j].ipd).map(|j| self.study_loglik(state, j)).sum()
    }

    // ---- hierarchical terms -------------------------------------------------

    fn tau2(&self, state: &[f64], i: Option<usize>) -> f64 {
        let t = val(state, i);
        t * t
    }

    /// Multi-arm normal term tying the study effects of `j` to the basic
    /// parameters. Zero when treatment effects are common.
    pub fn random_effects_logprior(&self, state: &[f64], j: usize) -> f64 {
        if !self.plan.has_delta() {
            return 0.0;
        }
        let s = &self.studies[j];
        let resid: Vec<f64> = s.contrasts.iter().map(|c| state[c.delta.expect("delta")] - self.d_diff(state, c)).collect();
        multi_arm_normal_logpdf(&resid, self.tau2(state, self.globals.tau))
    }

    fn study_interaction_logprior(&self, state: &[f64], j: usize) -> f64 {
        let s = &self.studies[j];
        let mut lp = 0.0;
        if let Some(b0) = s.beta0 {
            if self.plan.beta0_random {
                lp += normal_logpdf(state[b0], val(state, self.globals.b0), self.tau2(state, self.globals.tau0));
            }
        }
        if self.plan.covariate.is_some() && self.plan.interaction_random {
            let vb = self.tau2(state, self.globals.tau_b);
            let vw = self.tau2(state, self.globals.tau_w);
            for c in &s.contrasts {
                if let Some(i) = c.beta_b {
                    lp += normal_logpdf(state[i], val(state, c.bb_k) - val(state, c.bb_b), vb);
                }
                if let Some(i) = c.beta_w {
                    lp += normal_logpdf(state[i], val(state, c.bw_k) - val(state, c.bw_b), vw);
                }
            }
        }
        lp
    }

    /// Exchangeable covariate-interaction (and random baseline covariate)
    /// terms over all studies.
    pub fn interaction_logprior(&self, state: &[f64]) -> f64 {
        (0..self.studies.len()).map(|j| self.study_interaction_logprior(state, j)).sum()
    }

    fn study_bias_structure_logprior(&self, state: &[f64], j: usize) -> f64 {
        if !self.plan.is_bias() {
            return 0.0;
        }
        let s = &self.studies[j];
        let mut lp = 0.0;
        let vg = self.tau2(state, self.globals.tau_gamma);
        let vgm = self.tau2(state, self.globals.tau_gamma_mult);
        for c in &s.contrasts {
            if let Some(i) = c.gamma {
                lp += normal_logpdf(state[i], self.mean_bias_value(state, c, BiasScale::Additive), vg);
            }
            if let Some(i) = c.log_gamma_mult {
                lp += normal_logpdf(state[i], self.mean_bias_value(state, c, BiasScale::Multiplicative), vgm);
            }
        }
        if self.plan.has_delta_bias() {
            let resid: Vec<f64> = s
                .contrasts
                .iter()
                .map(|c| {
                    state[c.delta_bias.expect("delta_bias")]
                        - self.mean_bias_value(state, c, BiasScale::Additive)
                        - self.d_diff(state, c)
                })
                .collect();
            let var = self.tau2(state, self.globals.tau) / self.q_value(state, j);
            lp += multi_arm_normal_logpdf(&resid, var);
        }
        lp
    }

    /// Bias-effect hierarchy: exchangeable bias effects around their mean
    /// bias, or the weighted biased-effect distribution. Weight priors live
    /// with the independent parameter priors.
    pub fn bias_structure_logprior(&self, state: &[f64]) -> f64 {
        (0..self.studies.len()).map(|j| self.study_bias_structure_logprior(state, j)).sum()
    }

    /// Indicator and direction terms of study `j`.
    pub fn study_bias_probability_logprior(&self, state: &[f64], j: usize) -> f64 {
        let s = &self.studies[j];
        let mut lp = 0.0;
        if let Some(r) = s.r {
            lp += self.log_pi(state, j, state[r] == 1.0);
        }
        if let Some(pd) = self.globals.p_dir {
            for c in &s.contrasts {
                if let Some(d) = c.dir {
                    lp += bernoulli_logpmf(state[d] == 1.0, state[pd]);
                }
            }
        }
        lp
    }

    /// Indicator and direction terms given their probabilities. The
    /// probabilities' own priors are in [`Self::hyperprior_logdensity`].
    pub fn bias_probability_logprior(&self, state: &[f64]) -> f64 {
        (0..self.studies.len()).map(|j| self.study_bias_probability_logprior(state, j)).sum()
    }

    /// Mixture term of study `j` conditional on an indicator value.
    pub fn theta_logprior_given(&self, state: &[f64], j: usize, biased: bool) -> f64 {
        if !self.plan.has_theta() {
            return 0.0;
        }
        let s = &self.studies[j];
        let tau2 = self.tau2(state, self.globals.tau);
        let resid: Vec<f64> = s
            .contrasts
            .iter()
            .map(|c| {
                let mut m = self.d_diff(state, c);
                if biased {
                    m += self.gamma_value(state, c);
                }
                state[c.theta.expect("theta")] - m
            })
            .collect();
        let var = if !biased {
            tau2
        } else if self.plan.rob_weight {
            tau2 / self.q_value(state, j)
        } else {
            tau2 + self.tau2(state, self.globals.tau_gamma)
        };
        multi_arm_normal_logpdf(&resid, var)
    }

    /// Mixture term of study `j` at the sampled indicator.
    pub fn mixture_logprior_theta(&self, state: &[f64], j: usize) -> f64 {
        let biased = val(state, self.studies[j].r) == 1.0;
        self.theta_logprior_given(state, j, biased)
    }

    /// Mixture term with the indicator summed out.
    pub fn mixture_marginal_theta(&self, state: &[f64], j: usize) -> f64 {
        let pi = self.pi_value(state, j);
        let a = (1.0 - pi).ln() + self.theta_logprior_given(state, j, false);
        let b = pi.ln() + self.theta_logprior_given(state, j, true);
        let m = a.max(b);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + ((a - m).exp() + (b - m).exp()).ln()
    }

    /// Relative effect of contrast arm `k` in study `j` under the fixed
    /// form of model 2, or the sampled one otherwise.
    pub fn theta_value(&self, state: &[f64], j: usize, k: TreatmentId) -> Option<f64> {
        let c = self.contrast_of(j, k)?;
        Some(self.effect(state, j, c))
    }

    /// Sum of the independent priors: baselines, basic parameters,
    /// interactions, mean biases, logistic coefficients, heterogeneity
    /// uniforms and the beta priors on probabilities and weights.
    pub fn hyperprior_logdensity(&self, state: &[f64]) -> f64 {
        (0..self.space.len()).map(|p| self.priors[p].logpdf(state[p])).sum()
    }

    /// Structure block of study `j`.
    pub fn study_structure_logprior(&self, state: &[f64], j: usize) -> f64 {
        self.random_effects_logprior(state, j)
            + self.study_interaction_logprior(state, j)
            + self.study_bias_structure_logprior(state, j)
            + self.study_bias_probability_logprior(state, j)
            + self.mixture_logprior_theta(state, j)
    }

    pub fn log_posterior(&self, state: &[f64]) -> Result<f64, ModelError> {
        if state.len() != self.space.len() {
            return Err(ModelError::StateLength { expected: self.space.len(), got: state.len() });
        }
        if let Some(p) = state.iter().position(|v| v.is_nan()) {
            return Err(ModelError::NotANumber(format!("input {}", self.space.params[p].name)));
        }
        let mut total = self.hyperprior_logdensity(state);
        for b in 0..self.n_blocks() {
            total += self.block_logdensity(state, b);
        }
        if total.is_nan() {
            return Err(ModelError::NotANumber("evaluation".into()));
        }
        Ok(total)
    }

    /// Posterior over a different network ordering or subset is rebuilt;
    /// this returns the index of study `id`.
    pub fn study_index(&self, id: &str) -> Option<usize> {
        self.net.study_index(id)
    }

    /// Centered grid cells of study `j` as `(arm, x, events, non-events)`.
    pub fn cells(&self, j: usize) -> Vec<(TreatmentId, f64, f64, f64)> {
        self.studies[j]
            .arms
            .iter()
            .flat_map(|a| a.cells.iter().map(move |c| (a.treatment, c.x, c.events, c.non_events)))
            .collect()
    }
}

fn study_cells(study: &crate::evidence::Study, contrasts: &[Contrast], covariate: Option<usize>) -> Vec<ArmData> {
    study
        .arms
        .iter()
        .map(|&t| {
            let contrast = contrasts.iter().position(|c| c.k == t);
            match &study.data {
                StudyData::Ipd(rows) => {
                    let mut cells: BTreeMap<u64, Cell> = BTreeMap::new();
                    for r in rows.iter().filter(|r| r.treatment == t) {
                        let x = covariate.map_or(0.0, |c| r.x[c]);
                        let cell = cells.entry(x.to_bits()).or_insert(Cell { x, events: 0.0, non_events: 0.0 });
                        if r.y {
                            cell.events += 1.0;
                        } else {
                            cell.non_events += 1.0;
                        }
                    }
                    let mut cells: Vec<Cell> = cells.into_values().collect();
                    cells.sort_by(|a, b| a.x.total_cmp(&b.x));
                    ArmData { treatment: t, contrast, cells, ln_coef: 0.0 }
                }
                StudyData::Ad(arms) => {
                    let a = arms.iter().find(|a| a.treatment == t).expect("AD arm per study arm");
                    ArmData {
                        treatment: t,
                        contrast,
                        cells: vec![Cell { x: 0.0, events: a.r as f64, non_events: (a.n - a.r) as f64 }],
                        ln_coef: ln_binomial_coefficient(a.r, a.n),
                    }
                }
            }
        })
        .collect()
}

impl Target for Posterior {
    fn dimension(&self) -> usize {
        self.space.len()
    }

    fn support(&self, p: usize) -> Support {
        self.space.params[p].support
    }

    fn n_blocks(&self) -> usize {
        2 * self.studies.len()
    }

    fn block_logdensity(&self, state: &[f64], b: usize) -> f64 {
        let j = b / 2;
        if b % 2 == 0 {
            if self.plan.prior_only {
                0.0
            } else {
                self.study_loglik(state, j)
            }
        } else {
            self.study_structure_logprior(state, j)
        }
    }

    fn param_logprior(&self, state: &[f64], p: usize) -> f64 {
        self.priors[p].logpdf(state[p])
    }

    fn blocks_touched(&self, p: usize) -> &[usize] {
        &self.touched[p]
    }

    fn shift_moves(&self) -> &[ShiftMove] {
        &self.shifts
    }

    fn parameter_names(&self) -> Vec<String> {
        self.space.names()
    }
}

/// Binomial log-likelihood of one arm, as used for AD studies. Exposed for
/// cross-checks.
pub fn ad_arm_loglik(r: u64, n: u64, eta: f64) -> f64 {
    binomial_logit_logpmf(r, n, eta)
}
