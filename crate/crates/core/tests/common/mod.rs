#![allow(dead_code)]

use netsynth::evidence::{AdArm, Design, EvidenceNetwork, IpdRecord, RobLevel, Study, StudyData, Treatment, TreatmentId};
use netsynth::Posterior;

pub fn treatments(spec: &[(&str, bool)]) -> Vec<Treatment> {
    spec.iter()
        .enumerate()
        .map(|(i, &(label, is_active))| Treatment { id: i as u32 + 1, label: label.into(), is_active })
        .collect()
}

fn study(id: &str, arms: Vec<TreatmentId>, data: StudyData) -> Study {
    Study {
        id: id.into(),
        design: Design::Rct,
        rob: RobLevel::Low,
        reference_arm: arms[0],
        arms,
        directions: Default::default(),
        z: vec![],
        bias_prior: None,
        data,
    }
}

/// Arm-level study from `(treatment, r, n)`; the first arm is the reference.
pub fn ad_study(id: &str, arms: &[(TreatmentId, u64, u64)], xbar: Option<f64>) -> Study {
    let data = StudyData::Ad(
        arms.iter().map(|&(treatment, r, n)| AdArm { treatment, r, n, xbar: vec![xbar] }).collect(),
    );
    study(id, arms.iter().map(|a| a.0).collect(), data)
}

/// Participant-level study from `(treatment, y, x)` rows.
pub fn ipd_study(id: &str, rows: &[(TreatmentId, bool, f64)]) -> Study {
    let mut arms: Vec<TreatmentId> = Vec::new();
    for r in rows {
        if !arms.contains(&r.0) {
            arms.push(r.0);
        }
    }
    let data = StudyData::Ipd(rows.iter().map(|&(treatment, y, x)| IpdRecord { treatment, y, x: vec![x] }).collect());
    study(id, arms, data)
}

pub fn network(treatments: Vec<Treatment>, studies: Vec<Study>) -> EvidenceNetwork {
    EvidenceNetwork { treatments, studies, reference: 1, centers: vec![0.0], n_covariates: 1, n_study_covariates: 0 }
}

pub fn set(post: &Posterior, state: &mut [f64], name: &str, value: f64) {
    let i = post.space().index_of(name).unwrap_or_else(|| panic!("no parameter {name} in {:?}", post.space().names()));
    state[i] = value;
}

/// A state inside every support: zeros, 0.5 for bounded parameters.
pub fn neutral_state(post: &Posterior) -> Vec<f64> {
    use netsynth::space::Support;
    post.space()
        .params
        .iter()
        .map(|p| match p.support {
            Support::Real => 0.0,
            Support::Interval { upper } => 0.5 * upper.min(1.0),
            Support::Binary => 0.0,
        })
        .collect()
}
