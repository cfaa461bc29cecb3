use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::{EvidenceError, EvidenceNetwork, RobLevel, TreatmentId};

/// Number of studies directly comparing a pair of treatments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonCount {
    pub a: TreatmentId,
    pub b: TreatmentId,
    pub studies: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RobCounts {
    pub low: usize,
    pub high: usize,
    pub unclear: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyCovariates {
    pub study: String,
    pub arms: usize,
    /// Per covariate column: whether a study mean is available.
    pub available: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub connected: bool,
    pub n_treatments: usize,
    pub n_studies: usize,
    pub comparisons: Vec<ComparisonCount>,
    pub covariates: Vec<StudyCovariates>,
    pub rob: RobCounts,
    /// Declared treatments that appear in no study.
    pub unobserved: Vec<TreatmentId>,
}

impl ValidationReport {
    pub fn render(&self, net: &EvidenceNetwork) -> String {
        let mut out = format!(
            "connected: {}\ntreatments: {} ({} observed)\nstudies: {}\n",
            self.connected,
            self.n_treatments,
            self.n_treatments - self.unobserved.len(),
            self.n_studies
        );
        out.push_str("comparisons:\n");
        for c in &self.comparisons {
            out.push_str(&format!("  {} vs {}: {} studies\n", net.label(c.a), net.label(c.b), c.studies));
        }
        out.push_str(&format!(
            "risk of bias: low {}, high {}, unclear {}\n",
            self.rob.low, self.rob.high, self.rob.unclear
        ));
        for s in &self.covariates {
            let avail: Vec<&str> = s.available.iter().map(|&a| if a { "yes" } else { "no" }).collect();
            out.push_str(&format!("  {}: {} arms, covariates [{}]\n", s.study, s.arms, avail.join(",")));
        }
        out
    }
}

/// Connected components of the treatment co-occurrence graph over observed
/// treatments, each sorted by id; components ordered by smallest member.
pub fn components(net: &EvidenceNetwork) -> Vec<Vec<TreatmentId>> {
    let nodes = net.observed_treatments();
    let mut adj: BTreeMap<TreatmentId, Vec<TreatmentId>> = nodes.iter().map(|&t| (t, vec![])).collect();
    for s in &net.studies {
        for &a in &s.arms {
            for &b in &s.arms {
                if a != b {
                    adj.get_mut(&a).expect("observed").push(b);
                }
            }
        }
    }
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for &start in &nodes {
        if seen.contains_key(&start) {
            continue;
        }
        let mut comp = vec![];
        let mut queue = VecDeque::from([start]);
        seen.insert(start, ());
        while let Some(t) = queue.pop_front() {
            comp.push(t);
            for &n in &adj[&t] {
                if seen.insert(n, ()).is_none() {
                    queue.push_back(n);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Check arm counts and connectivity, and summarize the network.
pub fn validate_network(net: &EvidenceNetwork) -> Result<ValidationReport, EvidenceError> {
    if net.studies.is_empty() {
        return Err(EvidenceError::Invalid("network has no studies".into()));
    }
    for s in &net.studies {
        if s.arms.len() < 2 {
            return Err(EvidenceError::DegenerateStudy { study: s.id.clone(), arms: s.arms.len() });
        }
    }
    let comps = components(net);
    if comps.len() > 1 {
        return Err(EvidenceError::Disconnected {
            components: comps
                .iter()
                .map(|c| c.iter().map(|&t| net.label(t).to_string()).collect())
                .collect(),
        });
    }

    let mut pairs: BTreeMap<(TreatmentId, TreatmentId), usize> = BTreeMap::new();
    for s in &net.studies {
        let mut arms = s.arms.clone();
        arms.sort_unstable();
        for (i, &a) in arms.iter().enumerate() {
            for &b in &arms[i + 1..] {
                *pairs.entry((a, b)).or_default() += 1;
            }
        }
    }
    let mut rob = RobCounts::default();
    for s in &net.studies {
        match s.rob {
            RobLevel::Low => rob.low += 1,
            RobLevel::High => rob.high += 1,
            RobLevel::Unclear => rob.unclear += 1,
        }
    }
    let observed = net.observed_treatments();
    Ok(ValidationReport {
        connected: true,
        n_treatments: net.treatments.len(),
        n_studies: net.studies.len(),
        comparisons: pairs
            .into_iter()
            .map(|((a, b), studies)| ComparisonCount { a, b, studies })
            .collect(),
        covariates: net
            .studies
            .iter()
            .map(|s| StudyCovariates {
                study: s.id.clone(),
                arms: s.arms.len(),
                available: (0..net.n_covariates).map(|c| s.mean_covariate(c).is_some()).collect(),
            })
            .collect(),
        rob,
        unobserved: net
            .treatments
            .iter()
            .map(|t| t.id)
            .filter(|t| !observed.contains(t))
            .collect(),
    })
}
