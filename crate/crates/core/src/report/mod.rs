//! Posterior summaries, league tables, meta-regression curves and bias
//! summaries.
//!
//! Quantiles interpolate linearly between order statistics (sample
//! quantile type 7): for sorted draws `x[0..n]` the `p` quantile is
//! `x[h] + (h - floor h)(x[floor h + 1] - x[floor h])` with `h = (n - 1) p`.
//! Credible intervals are equal-tailed.

mod export;
mod svg;

pub use export::{export, read_summary_csv, ExportFormat, FILE_NAMES};
pub use svg::{curves_svg, forest_svg};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::EvidenceNetwork;
use crate::fit::Fit;
use crate::mcmc::diagnostics::{effective_sample_size, gelman_rubin, mc_standard_error};
use crate::mcmc::PosteriorSamples;
use crate::space::names;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no retained draws")]
    Empty,
    #[error("credible level must lie in (0, 1), got {0}")]
    Level(f64),
    #[error("parameter '{0}' is not among the stored draws")]
    Missing(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid summary file: {0}")]
    Parse(String),
}

/// Type-7 quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn of(draws: &[f64], level: f64) -> Result<Self, ReportError> {
        check_level(level)?;
        if draws.is_empty() {
            return Err(ReportError::Empty);
        }
        let mut s = draws.to_vec();
        s.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        Ok(Self { median: quantile(&s, 0.5), lower: quantile(&s, tail), upper: quantile(&s, 1.0 - tail) })
    }

    pub fn exp(self) -> Self {
        Self { median: self.median.exp(), lower: self.lower.exp(), upper: self.upper.exp() }
    }
}

fn check_level(level: f64) -> Result<(), ReportError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(ReportError::Level(level))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    pub mcse: Option<f64>,
}

/// Per monitored parameter: mean, sd, median, equal-tailed interval and
/// convergence diagnostics (absent when not computable).
pub fn summarize(samples: &PosteriorSamples, level: f64) -> Result<Vec<ParameterSummary>, ReportError> {
    check_level(level)?;
    if samples.n_retained == 0 || samples.n_chains() == 0 {
        return Err(ReportError::Empty);
    }
    (0..samples.names.len())
        .map(|m| {
            let chains = samples.chains_of(m);
            let pooled: Vec<f64> = chains.concat();
            let n = pooled.len() as f64;
            let mean = pooled.iter().sum::<f64>() / n;
            let sd = if pooled.len() > 1 {
                (pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let iv = Interval::of(&pooled, level)?;
            Ok(ParameterSummary {
                parameter: samples.names[m].clone(),
                mean,
                sd,
                median: iv.median,
                lower: iv.lower,
                upper: iv.upper,
                rhat: gelman_rubin(&chains).ok().and_then(|d| d.value()),
                ess: effective_sample_size(&chains).ok().and_then(|d| d.value()),
                mcse: mc_standard_error(&chains),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    LogOr,
    Or,
}

text_enum!(Scale, "scale", { Scale::LogOr => "logOR" | "log_or" | "log", Scale::Or => "OR" });

/// Draws of `d[label]` relative to `reference`; zero for the reference.
fn basic_draws(samples: &PosteriorSamples, label: &str, reference: &str) -> Result<Vec<f64>, ReportError> {
    if label == reference {
        return Ok(vec![0.0; samples.n_retained * samples.n_chains()]);
    }
    let name = names::basic("d", label);
    samples.pooled_by_name(&name).ok_or(ReportError::Missing(name))
}

/// All pairwise contrasts. `entries[a][b]` summarizes the per-draw
/// `d[b] - d[a]`, the log odds ratio of `b` versus `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueTable {
    pub labels: Vec<String>,
    pub scale: Scale,
    pub entries: Vec<Vec<Interval>>,
}

pub fn league_table(
    samples: &PosteriorSamples,
    labels: &[String],
    reference: &str,
    scale: Scale,
    level: f64,
) -> Result<LeagueTable, ReportError> {
    let draws = labels.iter().map(|l| basic_draws(samples, l, reference)).collect::<Result<Vec<_>, _>>()?;
    let mut entries = Vec::with_capacity(labels.len());
    for da in &draws {
        let mut row = Vec::with_capacity(labels.len());
        for db in &draws {
            let diff: Vec<f64> = db
                .iter()
                .zip(da)
                .map(|(b, a)| match scale {
                    Scale::LogOr => b - a,
                    Scale::Or => (b - a).exp(),
                })
                .collect();
            row.push(Interval::of(&diff, level)?);
        }
        entries.push(row);
    }
    Ok(LeagueTable { labels: labels.to_vec(), scale, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Odds ratio of `label` versus the reference across covariate values on
/// the original scale: per draw `exp(d + B (x - center))`, with `B` the
/// across-study interaction.
pub fn regression_curve(
    samples: &PosteriorSamples,
    label: &str,
    grid: &[f64],
    center: f64,
    level: f64,
) -> Result<Vec<CurvePoint>, ReportError> {
    let dn = names::basic("d", label);
    let bn = names::basic("BB", label);
    let d = samples.pooled_by_name(&dn).ok_or(ReportError::Missing(dn))?;
    let b = samples.pooled_by_name(&bn).ok_or(ReportError::Missing(bn))?;
    grid.iter()
        .map(|&x| {
            let or: Vec<f64> = d.iter().zip(&b).map(|(d, b)| (d + b * (x - center)).exp()).collect();
            let iv = Interval::of(&or, level)?;
            Ok(CurvePoint { x, median: iv.median, lower: iv.lower, upper: iv.upper })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyBias {
    pub study: String,
    pub rob: String,
    /// Posterior mean of the bias indicator, or of the bias probability
    /// when the model has no indicator.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub exp_g: Option<Interval>,
    pub exp_g_act: Option<Interval>,
    pub exp_g_mult: Option<Interval>,
    pub exp_g_mult_act: Option<Interval>,
    pub tau_gamma: Option<Interval>,
    pub studies: Vec<StudyBias>,
}

pub fn bias_report(samples: &PosteriorSamples, net: &EvidenceNetwork, level: f64) -> Result<BiasReport, ReportError> {
    let exp_of = |name: &str| -> Result<Option<Interval>, ReportError> {
        samples.pooled_by_name(name).map(|d| Interval::of(&d, level).map(Interval::exp)).transpose()
    };
    let studies = net
        .studies
        .iter()
        .filter_map(|s| {
            let draws = samples
                .pooled_by_name(&names::study("R", &s.id))
                .or_else(|| samples.pooled_by_name(&names::study("pi", &s.id)))?;
            let probability = draws.iter().sum::<f64>() / draws.len() as f64;
            Some(StudyBias { study: s.id.clone(), rob: s.rob.to_string(), probability })
        })
        .collect();
    Ok(BiasReport {
        exp_g: exp_of("g")?,
        exp_g_act: exp_of("g_act")?,
        exp_g_mult: exp_of("g_mult")?,
        exp_g_mult_act: exp_of("g_mult_act")?,
        tau_gamma: samples.pooled_by_name("tau_gamma").map(|d| Interval::of(&d, level)).transpose()?,
        studies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub treatment: String,
    pub reference: String,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub treatment: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub level: f64,
    /// Covariate values (original scale) for the regression curves.
    pub curve_grid: Vec<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { level: 0.95, curve_grid: (20..=60).map(f64::from).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub level: f64,
    pub reference: String,
    pub parameters: Vec<ParameterSummary>,
    /// Odds ratios of each treatment versus the reference.
    pub forest: Vec<ForestRow>,
    pub league: LeagueTable,
    pub curves: Vec<Curve>,
    pub bias: Option<BiasReport>,
    /// Covariate column used for meta-regression and its centering value.
    pub covariate: Option<usize>,
    pub center: Option<f64>,
}

impl FitReport {
    pub fn from_fit(fit: &Fit, opts: &ReportOptions) -> Result<Self, ReportError> {
        let post = &fit.posterior;
        let net = post.network();
        let samples = &fit.samples;
        let reference = net.label(post.reference()).to_string();
        let mut labels: Vec<String> = net.observed_treatments().iter().map(|&t| net.label(t).to_string()).collect();
        labels.retain(|l| *l == reference || samples.column(&names::basic("d", l)).is_some());
        let league = league_table(samples, &labels, &reference, Scale::Or, opts.level)?;
        let r = labels.iter().position(|l| *l == reference).expect("reference among labels");
        let forest = labels
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != r)
            .map(|(i, l)| {
                let iv = league.entries[r][i];
                ForestRow { treatment: l.clone(), reference: reference.clone(), median: iv.median, lower: iv.lower, upper: iv.upper }
            })
            .collect();
        let covariate = post.plan().covariate;
        let center = covariate.map(|c| net.centers.get(c).copied().unwrap_or(0.0));
        let mut curves = Vec::new();
        if let Some(center) = center {
            for l in labels.iter().filter(|l| **l != reference) {
                let points = regression_curve(samples, l, &opts.curve_grid, center, opts.level)?;
                curves.push(Curve { treatment: l.clone(), points });
            }
        }
        let bias = if post.plan().is_bias() { Some(bias_report(samples, net, opts.level)?) } else { None };
        Ok(Self {
            level: opts.level,
            reference,
            parameters: summarize(samples, opts.level)?,
            forest,
            league,
            curves,
            bias,
            covariate,
            center,
        })
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.parameter == name)
    }

    /// Largest potential scale reduction factor among the parameters.
    pub fn max_rhat(&self) -> Option<f64> {
        self.parameters.iter().filter_map(|p| p.rhat).reduce(f64::max)
    }
}
