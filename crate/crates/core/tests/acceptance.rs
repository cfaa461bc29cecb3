//! Acceptance gate: one PASS/FAIL line per primary criterion.
//!
//! Run with `cargo test -p netsynth --test acceptance --release`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{ad_study, network, set, treatments};
use netsynth::config::{
    Approach, BiasConfig, ByRob, EffectModel, Heterogeneity, MeanStructure, ModelConfig, RegressionConfig,
    WithinBetween,
};
use netsynth::density::{BetaPrior, NormalPrior};
use netsynth::evidence::{load_network, Design, EvidenceNetwork, NetworkPaths};
use netsynth::mcmc::diagnostics::{effective_sample_size, gelman_rubin};
use netsynth::nrs::{fit_nrs_posterior, make_informative_priors, run_rct_step};
use netsynth::oracle::{grid_posterior_oracle, recovery_experiment, simulate_network, SimulationSpec, TinyModelSpec};
use netsynth::report::{summarize, Interval};
use netsynth::space::Support;
use netsynth::{fit_model, Fit, Posterior, SamplerSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, Normal};

const RHAT_BAR: f64 = 1.05;
const ANTIDEPRESSANT_ENV: &str = "NETSYNTH_ANTIDEPRESSANT_DIR";

struct Outcome {
    pass: bool,
    detail: String,
    /// Failure caused by missing external input rather than by the code.
    unavailable: bool,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into(), unavailable: false }
    }
}

type Criterion = fn() -> Result<Outcome, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("oracle_equivalence", oracle_equivalence),
        ("prior_recovery", prior_recovery),
        ("reduction_identities", reduction_identities),
        ("antidepressant_reproduction", antidepressant_reproduction),
        ("rrms_substitute", rrms_substitute),
        ("two_step_limits", two_step_limits),
        ("mixture_correctness", mixture_correctness),
        ("diagnostics_reference", diagnostics_reference),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome::check(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name} ({secs:.1}s): {}", outcome.detail);
        if !outcome.pass && !outcome.unavailable {
            failed += 1;
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn settings(n_chains: usize, n_iterations: usize, burn_in: usize, seed: u64) -> SamplerSettings {
    SamplerSettings { n_chains, n_iterations, burn_in, seed, ..Default::default() }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn draws(fit: &Fit, name: &str) -> Result<Vec<f64>, String> {
    fit.samples.pooled_by_name(name).ok_or_else(|| format!("{name} is not monitored"))
}

fn max_rhat(fit: &Fit) -> Result<f64, Box<dyn std::error::Error>> {
    Ok(summarize(&fit.samples, 0.95)?.iter().filter_map(|s| s.rhat).fold(1.0, f64::max))
}

/// Monte Carlo standard error of the median: the interval of quantiles at
/// `0.5 +/- se`, with `se` the binomial error of the indicator below the
/// median at its effective sample size.
fn median_mcse(chains: &[Vec<f64>]) -> f64 {
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let med = netsynth::report::quantile(&pooled, 0.5);
    let ind: Vec<Vec<f64>> =
        chains.iter().map(|c| c.iter().map(|&v| if v <= med { 1.0 } else { 0.0 }).collect()).collect();
    let ess = effective_sample_size(&ind).ok().and_then(|d| d.value()).unwrap_or(pooled.len() as f64);
    let se = (0.25 / ess).sqrt();
    let lo = netsynth::report::quantile(&pooled, (0.5 - se).max(0.0));
    let hi = netsynth::report::quantile(&pooled, (0.5 + se).min(1.0));
    (hi - lo) / 2.0
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    netsynth::report::quantile(&v, 0.5)
}

// ---- oracle ----------------------------------------------------------------

fn oracle_equivalence() -> Result<Outcome, Box<dyn std::error::Error>> {
    let st = TinyModelSpec::study;
    let fixtures = vec![
        ("one_small", TinyModelSpec::example()),
        ("one_balanced", TinyModelSpec::new(vec![st("s1", [30, 45], [100, 100])])),
        ("rare_events", TinyModelSpec::new(vec![st("s1", [2, 9], [60, 60])])),
        ("two_studies", TinyModelSpec::new(vec![st("s1", [12, 20], [40, 40]), st("s2", [25, 31], [80, 75])])),
        (
            "informative_priors",
            TinyModelSpec {
                baseline_prior: NormalPrior::new(-1.0, 1.0),
                effect_prior: NormalPrior::new(0.5, 0.25),
                ..TinyModelSpec::new(vec![st("s1", [4, 3], [20, 20])])
            },
        ),
        (
            "prior_only",
            TinyModelSpec {
                prior_only: true,
                baseline_prior: NormalPrior::new(0.0, 0.25),
                effect_prior: NormalPrior::new(0.5, 0.5),
                ..TinyModelSpec::new(vec![st("s1", [3, 6], [10, 10])])
            },
        ),
    ];
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    let mut notes = Vec::new();
    for (i, (label, spec)) in fixtures.iter().enumerate() {
        let start = Instant::now();
        let oracle = grid_posterior_oracle(spec, 800)?;
        let fit = fit_model(&spec.to_network(), &spec.config(), &settings(8, 1_000_000, 20_000, 11 + i as u64), None)?;
        slowest = slowest.max(start.elapsed());
        for name in spec.parameter_names() {
            let (m, s) = mean_sd(&draws(&fit, &name)?);
            let err = (m - oracle.mean(&name).unwrap()).abs().max((s - oracle.sd(&name).unwrap()).abs());
            if err > worst {
                worst = err;
            }
            if err > 0.01 {
                notes.push(format!("{label}/{name} off by {err:.4}"));
            }
        }
    }
    let pass = worst <= 0.01 && slowest < Duration::from_secs(60);
    Ok(Outcome::check(
        pass,
        format!(
            "{} fixtures, max |mcmc - quadrature| = {worst:.4} (tol 0.01), slowest {:.1}s (limit 60s){}",
            fixtures.len(),
            slowest.as_secs_f64(),
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join(", ")) }
        ),
    ))
}

// ---- prior recovery ----------------------------------------------------------

fn three_treatment_network() -> EvidenceNetwork {
    network(
        treatments(&[("P", false), ("A", true), ("B", true)]),
        vec![
            ad_study("s1", &[(1, 10, 50), (2, 15, 50)], None),
            ad_study("s2", &[(1, 12, 60), (3, 20, 60)], None),
            ad_study("s3", &[(2, 8, 40), (3, 11, 40)], None),
        ],
    )
}

fn prior_recovery() -> Result<Outcome, Box<dyn std::error::Error>> {
    let net = three_treatment_network();
    let cfg = ModelConfig { prior_only: true, ..Default::default() };
    let fit = fit_model(&net, &cfg, &settings(8, 400_000, 20_000, 5), None)?;
    let mut worst_mean = 0.0f64;
    let mut worst_sd = 0.0f64;
    for label in ["A", "B"] {
        let (m, s) = mean_sd(&draws(&fit, &format!("d[{label}]"))?);
        worst_mean = worst_mean.max(m.abs());
        worst_sd = worst_sd.max((s / 10.0 - 1.0).abs());
    }
    let (tau_mean, _) = mean_sd(&draws(&fit, "tau")?);
    let pass = worst_mean < 0.3 && worst_sd < 0.05 && (tau_mean - 1.0).abs() < 0.05;
    Ok(Outcome::check(
        pass,
        format!(
            "max |mean d| = {worst_mean:.3} (< 0.3), max sd rel. error = {:.2}% (< 5%), mean tau = {tau_mean:.3} (1 +/- 0.05)",
            100.0 * worst_sd
        ),
    ))
}

// ---- reduction identities -------------------------------------------------------

fn reduction_identities() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut net = three_treatment_network();
    net.studies[0].rob = netsynth::evidence::RobLevel::High;
    net.studies[2].rob = netsynth::evidence::RobLevel::Unclear;
    let run = settings(4, 60_000, 10_000, 21);
    let unadjusted = fit_model(&net, &ModelConfig::default(), &run, None)?;
    let never = BetaPrior::new(1.0, 1e6);
    let bias_cfg = ModelConfig {
        approach: Approach::BiasModel1,
        bias: Some(BiasConfig { pi_priors: ByRob { low: never, high: never, unclear: never }, ..Default::default() }),
        ..Default::default()
    };
    let adjusted = fit_model(&net, &bias_cfg, &run, None)?;
    let mut worst = 0.0f64;
    for label in ["A", "B"] {
        let name = format!("d[{label}]");
        let (ia, ib) = (unadjusted.samples.column(&name).unwrap(), adjusted.samples.column(&name).unwrap());
        let (ca, cb) = (unadjusted.samples.chains_of(ia), adjusted.samples.chains_of(ib));
        let diff = (median(&ca.concat()) - median(&cb.concat())).abs();
        let combined = (median_mcse(&ca).powi(2) + median_mcse(&cb).powi(2)).sqrt();
        worst = worst.max(diff / combined);
    }

    let eq1 = Posterior::new(&net, &ModelConfig { bias: Some(BiasConfig::default()), ..bias_cfg.clone() })?;
    let eq2 = Posterior::new(
        &net,
        &ModelConfig {
            bias: Some(BiasConfig { heterogeneity: Heterogeneity::RobWeight, ..Default::default() }),
            ..bias_cfg
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut max_gap = 0.0f64;
    for _ in 0..10_000 {
        let mut s1 = random_state(&eq1, &mut rng);
        let mut s2 = random_state(&eq2, &mut rng);
        for (p, desc) in eq1.space().params.iter().enumerate() {
            if let Some(i) = eq2.space().index_of(&desc.name) {
                s2[i] = s1[p];
            }
        }
        for (j, study) in net.studies.iter().enumerate() {
            for k in study.contrast_arms() {
                let arm = net.label(k);
                let delta = s1[eq1.space().index_of(&format!("delta[{},{arm}]", study.id)).unwrap()];
                let gamma = format!("gamma[{},{arm}]", study.id);
                let g = rng.random_range(-2.0..2.0);
                set(&eq1, &mut s1, &gamma, g);
                set(&eq2, &mut s2, &format!("delta_bias[{},{arm}]", study.id), delta + g);
            }
            for &k in &study.arms {
                max_gap = max_gap.max((eq1.linear_predictor_ad(&s1, j, k) - eq2.linear_predictor_ad(&s2, j, k)).abs());
            }
        }
    }
    let pass = worst <= 2.0 && max_gap <= 1e-12;
    Ok(Outcome::check(
        pass,
        format!(
            "max |median diff| = {worst:.2} combined MCSE (<= 2); additive vs weighted predictor gap {max_gap:.1e} on 1e4 states (<= 1e-12)"
        ),
    ))
}

fn random_state(post: &Posterior, rng: &mut ChaCha8Rng) -> Vec<f64> {
    post.space()
        .params
        .iter()
        .map(|p| match p.support {
            Support::Real => rng.random_range(-3.0..3.0),
            Support::Interval { upper } => rng.random_range(0.01..upper.min(1.0)),
            Support::Binary => f64::from(u8::from(rng.random_bool(0.5))),
        })
        .collect()
}

// ---- antidepressant ----------------------------------------------------------------

fn antidepressant_reproduction() -> Result<Outcome, Box<dyn std::error::Error>> {
    let Some(dir) = std::env::var_os(ANTIDEPRESSANT_ENV) else {
        return Ok(Outcome {
            pass: false,
            detail: format!(
                "dataset not available in this environment; set {ANTIDEPRESSANT_ENV} to a directory with treatments.csv, studies.csv and ad.csv"
            ),
            unavailable: true,
        });
    };
    let net = load_network(&NetworkPaths::in_dir(&dir))?;
    let run = settings(2, 30_000, 10_000, 2026);
    let widen = 1.5;
    let unadjusted = fit_model(&net, &ModelConfig::default(), &run, None)?;
    let tau = Interval::of(&draws(&unadjusted, "tau")?, 0.95)?;
    let tau_ok = (tau.median - 0.210).abs() <= 0.02 * widen
        && (tau.lower - 0.169).abs() <= 0.03 * widen
        && (tau.upper - 0.251).abs() <= 0.03 * widen;

    let bias_cfg = ModelConfig {
        approach: Approach::BiasModel1,
        bias: Some(BiasConfig {
            mean_structure: MeanStructure::SignedActiveActive,
            pi_priors: ByRob { low: BetaPrior::new(1.0, 20.0), high: BetaPrior::new(20.0, 1.0), unclear: BetaPrior::new(1.0, 1.0) },
            ..Default::default()
        }),
        ..Default::default()
    };
    let adjusted = fit_model(&net, &bias_cfg, &run, None)?;
    let g_act = Interval::of(&draws(&adjusted, "g_act")?, 0.95)?.exp().median;
    let g = Interval::of(&draws(&adjusted, "g")?, 0.95)?.exp().median;
    let bias_ok = (g_act - 1.186).abs() <= 0.06 * widen && (g - 1.090).abs() <= 0.06 * widen;
    Ok(Outcome::check(
        tau_ok && bias_ok,
        format!(
            "tau {:.3} ({:.3}, {:.3}) vs 0.210 (0.169, 0.251); exp(g_act) {g_act:.3} vs 1.186; exp(g) {g:.3} vs 1.090 (reduced settings, tolerances x1.5)",
            tau.median, tau.lower, tau.upper
        ),
    ))
}

// ---- synthetic RRMS-shaped network ------------------------------------------------

fn rrms_config() -> ModelConfig {
    ModelConfig {
        approach: Approach::BiasModel1,
        regression: Some(RegressionConfig { within_between: WithinBetween::Equal, ..Default::default() }),
        bias: Some(BiasConfig { mean_structure: MeanStructure::SignedActiveActive, ..Default::default() }),
        ..Default::default()
    }
}

fn rrms_substitute() -> Result<Outcome, Box<dyn std::error::Error>> {
    let spec = SimulationSpec::rrms_shape(7);
    let net = simulate_network(&spec)?.network.center_covariates(&[spec.covariate_center])?;
    let fit = fit_model(&net, &rrms_config(), &settings(4, 40_000, 15_000, 7), None)?;
    let rhat = max_rhat(&fit)?;

    let params: Vec<String> = ["d[DF]", "d[GA]", "d[N]", "g"].iter().map(|s| s.to_string()).collect();
    let report = recovery_experiment(&spec, &rrms_config(), &settings(2, 20_000, 8_000, 100), 20, &params, 0.95)?;
    let worst = report.rows.iter().map(|r| r.coverage).fold(1.0, f64::min);
    let cover: Vec<String> = report.rows.iter().map(|r| format!("{} {:.2}", r.parameter, r.coverage)).collect();
    Ok(Outcome::check(
        rhat < RHAT_BAR && worst >= 0.80,
        format!("fit max R-hat {rhat:.3} (< {RHAT_BAR}); coverage at 20 replicates: {} (>= 0.80)", cover.join(", ")),
    ))
}

// ---- two-step prior ------------------------------------------------------------------------

fn two_step_network() -> EvidenceNetwork {
    let mut studies = vec![
        ad_study("r1", &[(1, 30, 80), (2, 22, 80)], None),
        ad_study("r2", &[(1, 25, 70), (2, 20, 70)], None),
        ad_study("o1", &[(1, 3000, 10000), (2, 3500, 10000)], None),
        ad_study("o2", &[(1, 2000, 8000), (2, 2300, 8000)], None),
    ];
    for s in &mut studies[2..] {
        s.design = Design::Nrs;
    }
    network(treatments(&[("P", false), ("A", true)]), studies)
}

fn two_step_limits() -> Result<Outcome, Box<dyn std::error::Error>> {
    let net = two_step_network();
    let cfg = ModelConfig { trt_effect: EffectModel::Common, ..Default::default() };
    let run = settings(4, 60_000, 10_000, 31);
    let (summary, _) = fit_nrs_posterior(&net, &cfg, &run, None)?;
    let nrs_mean = summary.entry("A").ok_or("no observational summary for A")?.mean;
    let rct = net.by_design(Design::Rct);
    let step = |w: f64| -> Result<f64, Box<dyn std::error::Error>> {
        let priors = make_informative_priors(&summary, 0.0, w, cfg.priors.location)?;
        let fit = run_rct_step(&rct, &cfg, &run, summary.reference, priors, None)?;
        Ok(mean_sd(&draws(&fit, "d[A]")?).0)
    };
    let rct_only = mean_sd(&draws(&fit_model(&rct, &cfg, &run, None)?, "d[A]")?).0;
    let tiny_w = step(1e-6)?;
    let path: Vec<f64> = [0.01, 0.1, 0.5, 1.0].iter().map(|&w| step(w)).collect::<Result<_, _>>()?;
    let toward = |a: f64, b: f64| (b - nrs_mean).abs() < (a - nrs_mean).abs();
    let monotone = toward(rct_only, path[0]) && path.windows(2).all(|p| toward(p[0], p[1]));
    let close = (tiny_w - rct_only).abs() <= 0.02;
    Ok(Outcome::check(
        close && monotone,
        format!(
            "w=1e-6 mean {tiny_w:.4} vs RCT-only {rct_only:.4} (tol 0.02); path over w=0.01,0.1,0.5,1: {} toward NRS mean {nrs_mean:.3}",
            path.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" -> ")
        ),
    ))
}

// ---- mixture -----------------------------------------------------------------------------------

fn mixture_correctness() -> Result<Outcome, Box<dyn std::error::Error>> {
    let net = three_treatment_network();
    let mixture_cfg = |trt| ModelConfig {
        approach: Approach::BiasModel2,
        trt_effect: trt,
        bias: Some(BiasConfig { effect: EffectModel::Common, ..Default::default() }),
        ..Default::default()
    };
    let post = Posterior::new(&net, &mixture_cfg(EffectModel::Random))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let mut st = random_state(&post, &mut rng);
        let j = rng.random_range(0..net.studies.len());
        let study = &net.studies[j];
        let k = study.contrast_arms().next().unwrap();
        let idx = |n: &str| post.space().index_of(n).unwrap();
        let r = idx(&format!("R[{}]", study.id));
        // latent indicator summed out
        let terms: Vec<f64> = [0.0, 1.0]
            .iter()
            .map(|&v| {
                st[r] = v;
                post.study_bias_probability_logprior(&st, j) + post.mixture_logprior_theta(&st, j)
            })
            .collect();
        let latent = log_sum_exp(terms[0], terms[1]);
        // direct two-component density
        let d = |label: &str| if label == "P" { 0.0 } else { st[idx(&format!("d[{label}]"))] };
        let contrast = d(net.label(k)) - d(net.label(study.reference_arm));
        let mean_bias = if net.is_active(study.reference_arm) { 0.0 } else { st[idx("g")] };
        let theta = st[idx(&format!("theta[{},{}]", study.id, net.label(k)))];
        let (tau, tau_g, pi) = (st[idx("tau")], st[idx("tau_gamma")], st[idx(&format!("pi[{}]", study.id))]);
        let direct = log_sum_exp(
            (1.0 - pi).ln() + Normal::new(contrast, tau)?.ln_pdf(theta),
            pi.ln() + Normal::new(contrast + mean_bias, (tau * tau + tau_g * tau_g).sqrt())?.ln_pdf(theta),
        );
        let direct = direct.exp();
        worst = worst
            .max((latent.exp() - direct).abs())
            .max((post.mixture_marginal_theta(&st, j).exp() - direct).abs());
    }

    let fixed = Posterior::new(&net, &mixture_cfg(EffectModel::Common))?;
    let mut exact = true;
    for _ in 0..10_000 {
        let st = random_state(&fixed, &mut rng);
        let idx = |n: &str| fixed.space().index_of(n).unwrap();
        for (j, study) in net.studies.iter().enumerate() {
            let pi = st[idx(&format!("pi[{}]", study.id))];
            for k in study.contrast_arms() {
                let d = |t| if t == 1 { 0.0 } else { st[idx(&format!("d[{}]", net.label(t)))] };
                let g = if net.is_active(study.reference_arm) { 0.0 } else { st[idx("g")] };
                exact &= fixed.theta_value(&st, j, k) == Some(d(k) - d(study.reference_arm) + pi * g);
            }
        }
    }
    Ok(Outcome::check(
        worst <= 1e-12 && exact,
        format!(
            "max density gap |latent - direct| = {worst:.1e} on 1e4 points (<= 1e-12); fixed mode theta = contrast + pi*gamma exactly: {exact}"
        ),
    ))
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

// ---- diagnostics ---------------------------------------------------------------------------

fn ar1_chains(seed: u64, m: usize, n: usize, phi: f64, shift: f64) -> Vec<Vec<f64>> {
    (0..m)
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + c as u64);
            let scale = (1.0 - phi * phi).sqrt();
            let mut x: f64 = StandardNormal.sample(&mut rng);
            (0..n)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x = phi * x + scale * e;
                    x + shift * c as f64
                })
                .collect()
        })
        .collect()
}

/// Textbook potential scale reduction factor.
fn reference_psrf(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// ESS by batch means on the pooled chains.
fn reference_ess(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len();
    let batch = (n as f64).sqrt() as usize;
    let per_chain = n / batch;
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let (mu, sd) = mean_sd(&all);
    let batch_means: Vec<f64> = chains
        .iter()
        .flat_map(|c| c.chunks_exact(batch).take(per_chain).map(|b| b.iter().sum::<f64>() / batch as f64))
        .collect();
    let k = batch_means.len() as f64;
    let var_bm = batch_means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (k - 1.0);
    let sigma2 = batch as f64 * var_bm;
    all.len() as f64 * sd * sd / sigma2
}

fn diagnostics_reference() -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut rhat_gap = 0.0f64;
    let mut ess_rel = 0.0f64;
    for (i, (phi, shift)) in [(0.0, 0.0), (0.5, 0.0), (0.8, 0.3), (0.9, 0.0)].into_iter().enumerate() {
        let chains = ar1_chains(500 + 10 * i as u64, 4, 40_000, phi, shift);
        let rhat = gelman_rubin(&chains)?.value().ok_or("R-hat not computable")?;
        rhat_gap = rhat_gap.max((rhat - reference_psrf(&chains)).abs());
        if shift == 0.0 {
            let ess = effective_sample_size(&chains)?.value().ok_or("ESS not computable")?;
            let theory = chains.len() as f64 * chains[0].len() as f64 * (1.0 - phi) / (1.0 + phi);
            ess_rel = ess_rel.max((ess / reference_ess(&chains) - 1.0).abs()).max((ess / theory - 1.0).abs());
        }
    }
    Ok(Outcome::check(
        rhat_gap <= 1e-6 && ess_rel <= 0.10,
        format!("max R-hat gap {rhat_gap:.1e} (<= 1e-6); max ESS relative gap {:.1}% (<= 10%)", 100.0 * ess_rel),
    ))
}
