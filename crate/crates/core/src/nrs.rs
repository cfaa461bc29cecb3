//! Two-step use of observational evidence: fit the non-randomized studies,
//! turn their posteriors into shifted and inflated priors, then fit the
//! randomized studies.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::{Approach, BasicOverride, ModelConfig};
use crate::density::NormalPrior;
use crate::evidence::{Design, EvidenceNetwork, TreatmentId};
use crate::fit::{fit_posterior, Fit, FitError, Progress};
use crate::mcmc::SamplerSettings;
use crate::space::names;

/// Skewness beyond which the normal approximation is flagged.
pub const SKEW_WARNING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrsEntry {
    pub treatment: TreatmentId,
    pub label: String,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Whether the treatment appears in an observational study.
    pub observed: bool,
}

/// Normal summaries of the basic parameters estimated from observational
/// studies, relative to `reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrsPosteriorSummary {
    pub reference: TreatmentId,
    pub reference_label: String,
    pub entries: Vec<NrsEntry>,
}

impl NrsPosteriorSummary {
    pub fn entry(&self, label: &str) -> Option<&NrsEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.observed && e.skewness.abs() > SKEW_WARNING)
            .map(|e| {
                format!(
                    "posterior of d[{}] has skewness {:.2}; its normal approximation may be poor",
                    e.label, e.skewness
                )
            })
            .collect()
    }

    /// Columns `parameter,mean,variance,reference,observed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["parameter", "mean", "variance", "reference", "observed"])?;
        for e in &self.entries {
            w.write_record([
                names::basic("d", &e.label),
                format!("{}", e.mean),
                format!("{}", e.variance),
                self.reference_label.clone(),
                e.observed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a summary written by [`Self::write_csv`], resolving labels
    /// against `net`. Skewness is not stored and reads back as zero.
    pub fn read_csv<R: Read>(r: R, net: &EvidenceNetwork) -> Result<Self, NrsError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut reference = None;
        let mut entries = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| NrsError::Summary(e.to_string()))?;
            let line = i + 2;
            let field = |k: usize| row.get(k).ok_or_else(|| NrsError::Summary(format!("row {line}: missing column")));
            let param = field(0)?;
            let label = param
                .strip_prefix("d[")
                .and_then(|p| p.strip_suffix(']'))
                .ok_or_else(|| NrsError::Summary(format!("row {line}: expected d[label], got '{param}'")))?;
            let t = net
                .treatment_by_label(label)
                .ok_or_else(|| NrsError::Summary(format!("row {line}: unknown treatment '{label}'")))?;
            let num = |k: usize| -> Result<f64, NrsError> {
                field(k)?.trim().parse().map_err(|_| NrsError::Summary(format!("row {line}: bad number")))
            };
            let (mean, variance) = (num(1)?, num(2)?);
            if !(variance > 0.0) {
                return Err(NrsError::Summary(format!("row {line}: variance must be positive")));
            }
            let rlabel = field(3)?;
            let r = net
                .treatment_by_label(rlabel)
                .ok_or_else(|| NrsError::Summary(format!("row {line}: unknown reference '{rlabel}'")))?;
            if reference.is_some_and(|x: &crate::evidence::Treatment| x.id != r.id) {
                return Err(NrsError::Summary(format!("row {line}: mixed references")));
            }
            reference = Some(r);
            let observed = match row.get(4) {
                Some(v) => v.trim().parse().map_err(|_| NrsError::Summary(format!("row {line}: bad flag")))?,
                None => true,
            };
            entries.push(NrsEntry { treatment: t.id, label: t.label.clone(), mean, variance, skewness: 0.0, observed });
        }
        let reference = reference.ok_or_else(|| NrsError::Summary("empty summary".into()))?;
        Ok(Self { reference: reference.id, reference_label: reference.label.clone(), entries })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NrsError {
    #[error("the network has no non-randomized studies")]
    NoObservationalStudies,
    #[error("inflation factor w must lie in (0, 1], got {0}")]
    Inflation(f64),
    #[error("reference treatment {0} is not observed in the randomized studies")]
    ReferenceNotInRct(String),
    #[error("invalid observational summary: {0}")]
    Summary(String),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Reference used by both steps: the configured one, else the network
/// reference when the observational studies include it, else the lowest
/// observed id.
pub fn nrs_reference(nrs: &EvidenceNetwork, net: &EvidenceNetwork, cfg: &ModelConfig) -> TreatmentId {
    let observed = nrs.observed_treatments();
    cfg.nrs
        .reference
        .or(cfg.reference.filter(|r| observed.contains(r)))
        .or(Some(net.reference).filter(|r| observed.contains(r)))
        .unwrap_or_else(|| observed.iter().copied().min().unwrap_or(net.reference))
}

fn moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    (mean, var, skew)
}

/// Observational step: fit the non-randomized studies alone and summarize
/// every basic parameter of `net` by its posterior mean and variance.
pub fn fit_nrs_posterior(
    net: &EvidenceNetwork,
    cfg: &ModelConfig,
    settings: &SamplerSettings,
    progress: Progress<'_>,
) -> Result<(NrsPosteriorSummary, Fit), NrsError> {
    let nrs = net.by_design(Design::Nrs);
    if nrs.studies.is_empty() {
        return Err(NrsError::NoObservationalStudies);
    }
    let reference = nrs_reference(&nrs, net, cfg);
    let step_cfg = step_config(cfg, reference, Vec::new());
    let fit = fit_posterior(&nrs, &step_cfg, settings, progress)?;
    let vague = cfg.priors.location;
    let entries = net
        .treatments
        .iter()
        .filter(|t| t.id != reference)
        .map(|t| {
            let draws = fit.samples.pooled_by_name(&names::basic("d", &t.label));
            match draws {
                Some(d) => {
                    let (mean, variance, skewness) = moments(&d);
                    NrsEntry { treatment: t.id, label: t.label.clone(), mean, variance, skewness, observed: true }
                }
                None => NrsEntry {
                    treatment: t.id,
                    label: t.label.clone(),
                    mean: vague.mean,
                    variance: vague.var,
                    skewness: 0.0,
                    observed: false,
                },
            }
        })
        .collect();
    let summary =
        NrsPosteriorSummary { reference, reference_label: net.label(reference).to_string(), entries };
    Ok((summary, fit))
}

/// Priors for the randomized step. Observed basic parameters get
/// `N(mean + zeta, variance / w)`; the others keep `vague`.
pub fn make_informative_priors(
    summary: &NrsPosteriorSummary,
    zeta: f64,
    w: f64,
    vague: NormalPrior,
) -> Result<Vec<BasicOverride>, NrsError> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(NrsError::Inflation(w));
    }
    Ok(summary
        .entries
        .iter()
        .map(|e| BasicOverride {
            treatment: e.treatment,
            prior: if e.observed { NormalPrior { mean: e.mean + zeta, var: e.variance / w } } else { vague },
        })
        .collect())
}

fn step_config(cfg: &ModelConfig, reference: TreatmentId, overrides: Vec<BasicOverride>) -> ModelConfig {
    let mut c = cfg.clone();
    c.approach = Approach::Unadjusted;
    c.bias = None;
    c.reference = Some(reference);
    c.priors.basic_overrides = overrides;
    c
}

#[derive(Debug, Clone)]
pub struct TwoStepFit {
    /// Absent when the network has no observational studies.
    pub nrs: Option<(NrsPosteriorSummary, Fit)>,
    pub priors: Vec<BasicOverride>,
    pub rct: Fit,
}

/// Both steps. Without observational studies the second step is a plain
/// fit of the randomized studies with the configured priors.
pub fn run_two_step(
    net: &EvidenceNetwork,
    cfg: &ModelConfig,
    settings: &SamplerSettings,
    zeta: f64,
    w: f64,
    progress: Progress<'_>,
) -> Result<TwoStepFit, NrsError> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(NrsError::Inflation(w));
    }
    let rct = net.by_design(Design::Rct);
    let (nrs, reference, priors) = if net.studies.iter().any(|s| s.design == Design::Nrs) {
        let (summary, fit) = fit_nrs_posterior(net, cfg, settings, progress)?;
        let priors = make_informative_priors(&summary, zeta, w, cfg.priors.location)?;
        let reference = summary.reference;
        (Some((summary, fit)), reference, priors)
    } else {
        (None, cfg.nrs.reference.or(cfg.reference).unwrap_or(net.reference), cfg.priors.basic_overrides.clone())
    };
    run_rct_step(&rct, cfg, settings, reference, priors, progress).map(|rct| TwoStepFit {
        priors: rct.posterior.config().priors.basic_overrides.clone(),
        nrs,
        rct,
    })
}

/// Randomized step with given priors, e.g. from an imported summary.
pub fn run_rct_step(
    rct: &EvidenceNetwork,
    cfg: &ModelConfig,
    settings: &SamplerSettings,
    reference: TreatmentId,
    priors: Vec<BasicOverride>,
    progress: Progress<'_>,
) -> Result<Fit, NrsError> {
    if !rct.observed_treatments().contains(&reference) {
        return Err(NrsError::ReferenceNotInRct(rct.label(reference).to_string()));
    }
    let rct = rct.clone().with_reference(reference).map_err(FitError::from)?;
    Ok(fit_posterior(&rct, &step_config(cfg, reference, priors), settings, progress)?)
}
