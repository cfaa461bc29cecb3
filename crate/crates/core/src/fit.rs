//! Running a configured model on a network.

use thiserror::Error;

use crate::config::{Approach, ModelConfig};
use crate::evidence::{validate_network, EvidenceError, EvidenceNetwork};
use crate::kernel::Posterior;
use crate::mcmc::{chain_init_seed, run_chains, PosteriorSamples, SamplerError, SamplerSettings};
use crate::space::{initial_state, ModelError, Owner, Role};

/// Above this many parameters only global and per-study bias parameters are
/// stored.
pub const MONITOR_ALL_LIMIT: usize = 400;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("{0}")]
    Workflow(String),
}

pub type Progress<'a> = Option<&'a (dyn Fn(usize, usize) + Sync)>;

#[derive(Debug, Clone)]
pub struct Fit {
    pub posterior: Posterior,
    pub samples: PosteriorSamples,
}

impl Fit {
    pub fn network(&self) -> &EvidenceNetwork {
        self.posterior.network()
    }
}

/// Parameters whose draws are kept.
pub fn monitored_parameters(post: &Posterior) -> Vec<usize> {
    let space = post.space();
    if space.len() <= MONITOR_ALL_LIMIT {
        return (0..space.len()).collect();
    }
    space
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            p.owner == Owner::Global || matches!(p.role, Role::BiasProbability | Role::Indicator | Role::Weight)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Starting states, one per chain.
pub fn initial_states(post: &Posterior, settings: &SamplerSettings) -> Vec<Vec<f64>> {
    (0..settings.n_chains)
        .map(|c| initial_state(post.space(), chain_init_seed(settings.seed, c)))
        .collect()
}

/// Validate the network, build the posterior and sample it.
///
/// The two-step observational-prior approach is run by
/// [`crate::nrs::run_two_step`]; this function rejects it.
pub fn fit_model(
    net: &EvidenceNetwork,
    cfg: &ModelConfig,
    settings: &SamplerSettings,
    progress: Progress<'_>,
) -> Result<Fit, FitError> {
    if cfg.approach == Approach::NrsPrior {
        return Err(FitError::Workflow("the nrs_prior approach runs in two steps; use run_two_step".into()));
    }
    fit_posterior(net, cfg, settings, progress)
}

pub(crate) fn fit_posterior(
    net: &EvidenceNetwork,
    cfg: &ModelConfig,
    settings: &SamplerSettings,
    progress: Progress<'_>,
) -> Result<Fit, FitError> {
    settings.validate()?;
    validate_network(net)?;
    let posterior = Posterior::new(net, cfg)?;
    let inits = initial_states(&posterior, settings);
    let monitored = monitored_parameters(&posterior);
    let samples = run_chains(&posterior, inits, settings, Some(monitored), progress)?;
    Ok(Fit { posterior, samples })
}
