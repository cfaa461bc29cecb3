//! Typed cross-design, cross-format network evidence.
//!
//! A network holds treatments and studies; each study owns either
//! participant-level rows (IPD) or arm-level event counts (AD), together with
//! its design, risk-of-bias judgement and bias-direction metadata.

mod csv_io;
mod validate;

use std::collections::BTreeMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::BetaPrior;

pub use csv_io::{export_network, load_network, NetworkPaths};
pub use validate::{components, validate_network, ComparisonCount, RobCounts, StudyCovariates, ValidationReport};

pub type TreatmentId = u32;

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("{file}: schema error: {message}")]
    Schema { file: String, message: String },
    #[error("{file}: row {row}: {message}")]
    Row { file: String, row: usize, message: String },
    #[error("{file}: row {row}: referential error: {message}")]
    Referential { file: String, row: usize, message: String },
    #[error("{file}: row {row}: duplicate study id '{id}'")]
    DuplicateStudy { file: String, row: usize, id: String },
    #[error("network is disconnected; components: {}", format_components(.components))]
    Disconnected { components: Vec<Vec<String>> },
    #[error("study '{study}' has {arms} distinct arm(s); at least two are required")]
    DegenerateStudy { study: String, arms: usize },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("centering vector has length {got}, covariate dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {file}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
}

fn format_components(components: &[Vec<String>]) -> String {
    components
        .iter()
        .map(|c| format!("{{{}}}", c.join(",")))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Treatment {
    pub id: TreatmentId,
    pub label: String,
    /// `false` for placebo, standard care or no treatment.
    pub is_active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Design {
    Rct,
    Nrs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    Ipd,
    Ad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RobLevel {
    Low,
    High,
    Unclear,
}

/// Direction of bias for a contrast `k` vs the study reference `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiasDirection {
    /// `dir = 0`: bias favours `b` over `k`.
    FavoursReference,
    /// `dir = 1`: bias favours `k` over `b`.
    FavoursTreatment,
    Unknown,
}

impl BiasDirection {
    pub fn flipped(self) -> Self {
        match self {
            Self::FavoursReference => Self::FavoursTreatment,
            Self::FavoursTreatment => Self::FavoursReference,
            Self::Unknown => Self::Unknown,
        }
    }
}

text_enum!(Design, "design", { Design::Rct => "RCT", Design::Nrs => "NRS" });
text_enum!(DataFormat, "format", { DataFormat::Ipd => "IPD", DataFormat::Ad => "AD" });
text_enum!(RobLevel, "risk of bias", {
    RobLevel::Low => "low",
    RobLevel::High => "high" | "moderate",
    RobLevel::Unclear => "unclear",
});
text_enum!(BiasDirection, "bias direction", {
    BiasDirection::FavoursReference => "0",
    BiasDirection::FavoursTreatment => "1",
    BiasDirection::Unknown => "unknown" | "NA",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpdRecord {
    pub treatment: TreatmentId,
    pub y: bool,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdArm {
    pub treatment: TreatmentId,
    pub r: u64,
    pub n: u64,
    /// Arm mean covariates; `None` where not reported.
    pub xbar: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StudyData {
    Ipd(Vec<IpdRecord>),
    Ad(Vec<AdArm>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub design: Design,
    pub rob: RobLevel,
    pub reference_arm: TreatmentId,
    /// Distinct arms in order of first appearance in the data.
    pub arms: Vec<TreatmentId>,
    /// Direction per non-reference arm; absent entries are treated as unknown.
    pub directions: BTreeMap<TreatmentId, BiasDirection>,
    /// Study characteristics for the logistic bias-probability model.
    pub z: Vec<f64>,
    pub bias_prior: Option<BetaPrior>,
    pub data: StudyData,
}

impl Study {
    pub fn format(&self) -> DataFormat {
        match self.data {
            StudyData::Ipd(_) => DataFormat::Ipd,
            StudyData::Ad(_) => DataFormat::Ad,
        }
    }

    /// Non-reference arms, in arm order.
    pub fn contrast_arms(&self) -> impl Iterator<Item = TreatmentId> + '_ {
        self.arms.iter().copied().filter(move |&t| t != self.reference_arm)
    }

    pub fn direction(&self, k: TreatmentId) -> BiasDirection {
        self.directions.get(&k).copied().unwrap_or(BiasDirection::Unknown)
    }

    pub fn sample_size(&self) -> u64 {
        match &self.data {
            StudyData::Ipd(rows) => rows.len() as u64,
            StudyData::Ad(arms) => arms.iter().map(|a| a.n).sum(),
        }
    }

    /// Study mean of covariate `c`: the participant mean for IPD, the
    /// sample-size weighted mean of arm means for AD (`None` if any arm
    /// lacks it).
    pub fn mean_covariate(&self, c: usize) -> Option<f64> {
        match &self.data {
            StudyData::Ipd(rows) => {
                if rows.is_empty() {
                    return None;
                }
                let s: f64 = rows.iter().map(|r| r.x.get(c).copied()).sum::<Option<f64>>()?;
                Some(s / rows.len() as f64)
            }
            StudyData::Ad(arms) => {
                let mut num = 0.0;
                let mut den = 0.0;
                for a in arms {
                    num += a.xbar.get(c).copied().flatten()? * a.n as f64;
                    den += a.n as f64;
                }
                (den > 0.0).then(|| num / den)
            }
        }
    }
}

/// Collapse an IPD study to arm-level counts and covariate means.
///
/// AD studies are returned unchanged.
pub fn aggregate_ipd(study: &Study) -> Vec<AdArm> {
    match &study.data {
        StudyData::Ad(arms) => arms.clone(),
        StudyData::Ipd(rows) => study
            .arms
            .iter()
            .map(|&t| {
                let arm: Vec<&IpdRecord> = rows.iter().filter(|r| r.treatment == t).collect();
                let n = arm.len();
                let p = arm.first().map_or(0, |r| r.x.len());
                let xbar = (0..p)
                    .map(|c| Some(arm.iter().map(|r| r.x[c]).sum::<f64>() / n as f64))
                    .collect();
                AdArm {
                    treatment: t,
                    r: arm.iter().filter(|r| r.y).count() as u64,
                    n: n as u64,
                    xbar,
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceNetwork {
    pub treatments: Vec<Treatment>,
    pub studies: Vec<Study>,
    pub reference: TreatmentId,
    /// Accumulated centering values, one per covariate column.
    pub centers: Vec<f64>,
    pub n_covariates: usize,
    pub n_study_covariates: usize,
}

impl EvidenceNetwork {
    pub fn treatment(&self, id: TreatmentId) -> Option<&Treatment> {
        self.treatments.iter().find(|t| t.id == id)
    }

    pub fn treatment_index(&self, id: TreatmentId) -> Option<usize> {
        self.treatments.iter().position(|t| t.id == id)
    }

    pub fn label(&self, id: TreatmentId) -> &str {
        self.treatment(id).map_or("?", |t| t.label.as_str())
    }

    pub fn treatment_by_label(&self, label: &str) -> Option<&Treatment> {
        self.treatments
            .iter()
            .find(|t| t.label.eq_ignore_ascii_case(label.trim()))
    }

    pub fn is_active(&self, id: TreatmentId) -> bool {
        self.treatment(id).is_some_and(|t| t.is_active)
    }

    pub fn study_index(&self, id: &str) -> Option<usize> {
        self.studies.iter().position(|s| s.id == id)
    }

    /// Treatments that appear in at least one study, in treatment order.
    pub fn observed_treatments(&self) -> Vec<TreatmentId> {
        self.treatments
            .iter()
            .map(|t| t.id)
            .filter(|&id| self.studies.iter().any(|s| s.arms.contains(&id)))
            .collect()
    }

    /// Network reference chosen by default: a treatment labelled "placebo"
    /// if present, otherwise the lowest id.
    pub fn default_reference(treatments: &[Treatment]) -> Option<TreatmentId> {
        treatments
            .iter()
            .find(|t| t.label.eq_ignore_ascii_case("placebo"))
            .or_else(|| treatments.iter().min_by_key(|t| t.id))
            .map(|t| t.id)
    }

    pub fn with_reference(mut self, id: TreatmentId) -> Result<Self, EvidenceError> {
        if self.treatment(id).is_none() {
            return Err(EvidenceError::Invalid(format!("unknown reference treatment {id}")));
        }
        self.reference = id;
        Ok(self)
    }

    /// Studies satisfying `keep`, with treatments not observed in them
    /// dropped. If the reference is dropped, the lowest remaining id takes
    /// its place.
    pub fn subnetwork(&self, keep: impl Fn(&Study) -> bool) -> EvidenceNetwork {
        let studies: Vec<Study> = self.studies.iter().filter(|s| keep(s)).cloned().collect();
        let treatments: Vec<Treatment> = self
            .treatments
            .iter()
            .filter(|t| studies.iter().any(|s| s.arms.contains(&t.id)))
            .cloned()
            .collect();
        let reference = if treatments.iter().any(|t| t.id == self.reference) {
            self.reference
        } else {
            treatments.iter().map(|t| t.id).min().unwrap_or(self.reference)
        };
        EvidenceNetwork {
            treatments,
            studies,
            reference,
            centers: self.centers.clone(),
            n_covariates: self.n_covariates,
            n_study_covariates: self.n_study_covariates,
        }
    }

    pub fn by_design(&self, design: Design) -> EvidenceNetwork {
        self.subnetwork(|s| s.design == design)
    }

    /// Subtract `centers` from every participant covariate and arm mean.
    /// Centers accumulate in `self.centers` for back-transformation.
    pub fn center_covariates(&self, centers: &[f64]) -> Result<EvidenceNetwork, EvidenceError> {
        if centers.len() != self.n_covariates {
            return Err(EvidenceError::DimensionMismatch {
                expected: self.n_covariates,
                got: centers.len(),
            });
        }
        let mut out = self.clone();
        for study in &mut out.studies {
            match &mut study.data {
                StudyData::Ipd(rows) => {
                    for row in rows {
                        for (x, c) in row.x.iter_mut().zip(centers) {
                            *x -= c;
                        }
                    }
                }
                StudyData::Ad(arms) => {
                    for arm in arms {
                        for (x, c) in arm.xbar.iter_mut().zip(centers) {
                            if let Some(v) = x {
                                *v -= c;
                            }
                        }
                    }
                }
            }
        }
        if out.centers.len() != centers.len() {
            out.centers = vec![0.0; centers.len()];
        }
        for (acc, c) in out.centers.iter_mut().zip(centers) {
            *acc += c;
        }
        Ok(out)
    }

    pub fn total_sample_size(&self) -> u64 {
        self.studies.iter().map(Study::sample_size).sum()
    }
}
