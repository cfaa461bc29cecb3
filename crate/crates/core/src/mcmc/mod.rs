//! Adaptive random-walk Metropolis-within-Gibbs with exact flips for
//! binary parameters.

pub mod diagnostics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{log_sigmoid, sigmoid};
use crate::space::Support;

pub use diagnostics::{effective_sample_size, gelman_rubin, Diagnostic, DiagnosticError};

/// A log-density split into blocks so that one-parameter updates only
/// re-evaluate what the parameter touches.
///
/// The full log-density is the sum of all blocks plus every parameter's
/// independent prior term.
pub trait Target: Sync {
    fn dimension(&self) -> usize;
    fn support(&self, p: usize) -> Support;
    fn n_blocks(&self) -> usize;
    fn block_logdensity(&self, state: &[f64], b: usize) -> f64;
    fn param_logprior(&self, state: &[f64], p: usize) -> f64;
    /// Blocks whose value may change when parameter `p` changes.
    fn blocks_touched(&self, p: usize) -> &[usize];

    /// Joint translations tried after each sweep; none by default.
    fn shift_moves(&self) -> &[ShiftMove] {
        &[]
    }

    fn parameter_names(&self) -> Vec<String> {
        (0..self.dimension()).map(|p| format!("x[{}]", p + 1)).collect()
    }

    fn log_density(&self, state: &[f64]) -> f64 {
        let blocks: f64 = (0..self.n_blocks()).map(|b| self.block_logdensity(state, b)).sum();
        blocks + (0..self.dimension()).map(|p| self.param_logprior(state, p)).sum::<f64>()
    }
}

/// Random-walk move along a fixed direction over real-valued coordinates,
/// e.g. a location parameter together with the study effects centred on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMove {
    /// `(parameter, coefficient)` pairs; the lead parameter comes first.
    pub coords: Vec<(usize, f64)>,
    /// Union of the blocks touched by the coordinates, sorted.
    pub blocks: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler settings: {0}")]
    Settings(String),
    #[error("chain {chain}: log-density at the initial state is not finite ({value})")]
    NonFiniteStart { chain: usize, value: f64 },
    #[error("chain {chain}: initial state has length {got}, target dimension is {expected}")]
    StateLength { chain: usize, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iterations per adaptation batch; adaptation stops at the end of burn-in.
    pub adapt_batch: usize,
    pub target_acceptance: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            n_chains: 2,
            n_iterations: 100_000,
            burn_in: 40_000,
            thin: 1,
            seed: 1,
            adapt_batch: 50,
            target_acceptance: 0.44,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Settings(m.into()));
        if self.n_chains == 0 {
            return bad("at least one chain is needed");
        }
        if self.burn_in >= self.n_iterations {
            return bad("burn-in must be smaller than the number of iterations");
        }
        if self.thin == 0 {
            return bad("thinning must be at least 1");
        }
        if self.adapt_batch == 0 {
            return bad("adaptation batch must be at least 1");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad("target acceptance must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thin
    }
}

/// One chain's retained draws of the monitored parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    /// Iteration-major: `draws[i * n_monitored + m]`.
    pub draws: Vec<f64>,
    /// Post-burn-in acceptance rate per parameter (all parameters).
    pub acceptance: Vec<f64>,
    /// Proposal scales when burn-in ended.
    pub steps_at_burn_in: Vec<f64>,
    /// Proposal scales at the last iteration.
    pub steps_final: Vec<f64>,
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    /// Names of the monitored parameters, in column order.
    pub names: Vec<String>,
    /// Target indices of the monitored parameters.
    pub monitored: Vec<usize>,
    pub all_names: Vec<String>,
    pub n_retained: usize,
    pub chains: Vec<ChainDraws>,
    pub settings: SamplerSettings,
}

impl PosteriorSamples {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of monitored column `m` in chain `c`.
    pub fn chain(&self, c: usize, m: usize) -> Vec<f64> {
        let k = self.names.len();
        self.chains[c].draws.iter().skip(m).step_by(k).copied().collect()
    }

    pub fn chains_of(&self, m: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains()).map(|c| self.chain(c, m)).collect()
    }

    /// Draws of column `m` with chains concatenated in order.
    pub fn pooled(&self, m: usize) -> Vec<f64> {
        (0..self.n_chains()).flat_map(|c| self.chain(c, m)).collect()
    }

    pub fn pooled_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name).map(|m| self.pooled(m))
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        let d = self.pooled_by_name(name)?;
        Some(d.iter().sum::<f64>() / d.len() as f64)
    }

    /// Write `chain,iteration,<names...>` rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        let k = self.names.len();
        for (c, ch) in self.chains.iter().enumerate() {
            for i in 0..self.n_retained {
                let mut row = vec![(c + 1).to_string(), (i + 1).to_string()];
                row.extend(ch.draws[i * k..(i + 1) * k].iter().map(|v| format!("{v}")));
                w.write_record(&row).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Rebuild draws written by [`Self::to_csv`]. Acceptance rates and
    /// step sizes are not stored and come back empty.
    pub fn from_csv(text: &str, settings: SamplerSettings) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| e.to_string())?.clone();
        if header.len() < 2 || &header[0] != "chain" || &header[1] != "iteration" {
            return Err("expected columns chain,iteration,...".into());
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut chains: Vec<Vec<f64>> = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| e.to_string())?;
            let line = i + 2;
            let c: usize = row[0].parse().map_err(|_| format!("row {line}: bad chain number"))?;
            if c == 0 || c > chains.len() + 1 {
                return Err(format!("row {line}: chains must be numbered 1, 2, ... in order"));
            }
            if c > chains.len() {
                chains.push(Vec::new());
            }
            for v in row.iter().skip(2) {
                chains[c - 1].push(v.parse().map_err(|_| format!("row {line}: bad number '{v}'"))?);
            }
        }
        let k = names.len().max(1);
        let n = chains.first().map_or(0, |c| c.len() / k);
        if chains.iter().any(|c| c.len() != n * k) {
            return Err("chains have unequal lengths".into());
        }
        Ok(Self {
            monitored: (0..names.len()).collect(),
            all_names: names.clone(),
            names,
            n_retained: n,
            chains: chains
                .into_iter()
                .map(|draws| ChainDraws {
                    draws,
                    acceptance: vec![],
                    steps_at_burn_in: vec![],
                    steps_final: vec![],
                    final_state: vec![],
                })
                .collect(),
            settings,
        })
    }
}

/// Seeded generator for chain `chain`: a shared key with one stream per chain.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

/// Seed for the starting values of chain `chain`.
pub fn chain_init_seed(seed: u64, chain: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(chain as u64 + 1)
}

struct ChainState<'a, T: Target + ?Sized> {
    target: &'a T,
    state: Vec<f64>,
    blocks: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a, T: Target + ?Sized> ChainState<'a, T> {
    fn new(target: &'a T, state: Vec<f64>) -> Self {
        let blocks = (0..target.n_blocks()).map(|b| target.block_logdensity(&state, b)).collect();
        Self { target, state, blocks, scratch: Vec::new() }
    }

    fn total(&self) -> f64 {
        self.blocks.iter().sum::<f64>()
            + (0..self.target.dimension()).map(|p| self.target.param_logprior(&self.state, p)).sum::<f64>()
    }

    fn local(&self, p: usize) -> f64 {
        let t = self.target.blocks_touched(p);
        t.iter().map(|&b| self.blocks[b]).sum::<f64>() + self.target.param_logprior(&self.state, p)
    }

    /// Evaluate touched blocks at the current state into `scratch`.
    fn evaluate(&mut self, p: usize) -> f64 {
        let t = self.target.blocks_touched(p);
        self.scratch.clear();
        let mut sum = self.target.param_logprior(&self.state, p);
        for &b in t {
            let v = self.target.block_logdensity(&self.state, b);
            self.scratch.push(v);
            sum += v;
        }
        sum
    }

    fn commit(&mut self, p: usize) {
        let t = self.target.blocks_touched(p);
        for (i, &b) in t.iter().enumerate() {
            self.blocks[b] = self.scratch[i];
        }
    }

    /// One random-walk Metropolis update; returns whether it was accepted.
    fn metropolis(&mut self, p: usize, step: f64, rng: &mut ChaCha8Rng) -> bool {
        let x = self.state[p];
        let z: f64 = rng.sample(StandardNormal);
        let (proposal, log_jac) = match self.target.support(p) {
            Support::Real => (x + step * z, 0.0),
            Support::Interval { upper } => {
                let y = (x / (upper - x)).ln() + step * z;
                let xn = upper * sigmoid(y);
                let jac = |v: f64| v.ln() + (upper - v).ln();
                (xn, jac(xn) - jac(x))
            }
            Support::Binary => unreachable!("binary parameters use exact flips"),
        };
        if !self.target.support(p).contains(proposal) {
            return false;
        }
        let old = self.local(p);
        self.state[p] = proposal;
        let new = self.evaluate(p);
        let log_alpha = new - old + log_jac;
        let u: f64 = rng.random();
        if u.ln() < log_alpha {
            self.commit(p);
            true
        } else {
            self.state[p] = x;
            false
        }
    }

    fn shift(&mut self, mv: &ShiftMove, step: f64, rng: &mut ChaCha8Rng) -> bool {
        let z: f64 = rng.sample(StandardNormal);
        let prior = |st: &Self| mv.coords.iter().map(|&(p, _)| st.target.param_logprior(&st.state, p)).sum::<f64>();
        let old = mv.blocks.iter().map(|&b| self.blocks[b]).sum::<f64>() + prior(self);
        for &(p, c) in &mv.coords {
            self.state[p] += c * step * z;
        }
        let fresh: Vec<f64> = mv.blocks.iter().map(|&b| self.target.block_logdensity(&self.state, b)).collect();
        let new = fresh.iter().sum::<f64>() + prior(self);
        let u: f64 = rng.random();
        if u.ln() < new - old {
            for (&b, v) in mv.blocks.iter().zip(fresh) {
                self.blocks[b] = v;
            }
            true
        } else {
            for &(p, c) in &mv.coords {
                self.state[p] -= c * step * z;
            }
            false
        }
    }

    /// Draw a binary parameter from its exact two-point full conditional.
    fn flip(&mut self, p: usize, rng: &mut ChaCha8Rng) {
        let current = self.state[p];
        self.state[p] = 0.0;
        let l0 = self.evaluate(p);
        let s0 = std::mem::take(&mut self.scratch);
        self.state[p] = 1.0;
        let l1 = self.evaluate(p);
        let u: f64 = rng.random();
        let choose_one = match (l0 == f64::NEG_INFINITY, l1 == f64::NEG_INFINITY) {
            (true, true) => current == 1.0,
            (true, false) => true,
            (false, true) => false,
            _ => u.ln() < log_sigmoid(l1 - l0),
        };
        if choose_one {
            self.state[p] = 1.0;
        } else {
            self.state[p] = 0.0;
            self.scratch = s0;
        }
        self.commit(p);
    }
}

/// Exact Gibbs draw of binary parameter `p` given the rest of `state`.
///
/// The full conditional is proportional to the touched blocks and the
/// parameter's own prior at 0 and at 1.
pub fn gibbs_update_indicator<T: Target + ?Sized>(target: &T, state: &mut Vec<f64>, p: usize, rng: &mut ChaCha8Rng) {
    let mut cs = ChainState::new(target, std::mem::take(state));
    cs.flip(p, rng);
    *state = cs.state;
}

/// Probability that binary parameter `p` equals 1 under its full conditional.
pub fn indicator_conditional<T: Target + ?Sized>(target: &T, state: &[f64], p: usize) -> f64 {
    let mut s = state.to_vec();
    let mut at = |v: f64| {
        s[p] = v;
        target.param_logprior(&s, p) + target.blocks_touched(p).iter().map(|&b| target.block_logdensity(&s, b)).sum::<f64>()
    };
    let l0 = at(0.0);
    let l1 = at(1.0);
    match (l0 == f64::NEG_INFINITY, l1 == f64::NEG_INFINITY) {
        (true, true) => f64::NAN,
        (true, false) => 1.0,
        (false, true) => 0.0,
        _ => sigmoid(l1 - l0),
    }
}

/// Run one chain from `init`.
pub fn run_chain<T: Target + ?Sized>(
    target: &T,
    init: Vec<f64>,
    settings: &SamplerSettings,
    chain: usize,
    monitored: &[usize],
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<ChainDraws, SamplerError> {
    let dim = target.dimension();
    if init.len() != dim {
        return Err(SamplerError::StateLength { chain, expected: dim, got: init.len() });
    }
    let mut rng = chain_rng(settings.seed, chain);
    let mut cs = ChainState::new(target, init);
    let start = cs.total();
    if !start.is_finite() {
        return Err(SamplerError::NonFiniteStart { chain, value: start });
    }
    let binary: Vec<bool> = (0..dim).map(|p| target.support(p) == Support::Binary).collect();
    let mut steps = vec![1.0f64; dim];
    let mut batch_accepts = vec![0usize; dim];
    let mut batch_index = 0usize;
    let mut accepts = vec![0usize; dim];
    let moves = target.shift_moves();
    let mut move_steps = vec![1.0f64; moves.len()];
    let mut move_accepts = vec![0usize; moves.len()];
    let mut steps_at_burn_in = steps.clone();
    let retained = settings.retained();
    let mut draws = Vec::with_capacity(retained * monitored.len());
    let report_every = (settings.n_iterations / 20).max(1);

    for it in 0..settings.n_iterations {
        let burning = it < settings.burn_in;
        for p in 0..dim {
            if binary[p] {
                cs.flip(p, &mut rng);
            } else if cs.metropolis(p, steps[p], &mut rng) {
                if burning {
                    batch_accepts[p] += 1;
                } else {
                    accepts[p] += 1;
                }
            }
        }
        for (m, mv) in moves.iter().enumerate() {
            if cs.shift(mv, move_steps[m], &mut rng) && burning {
                move_accepts[m] += 1;
            }
        }
        if burning && (it + 1) % settings.adapt_batch == 0 {
            batch_index += 1;
            let delta = (1.0 / (batch_index as f64).sqrt()).min(1.0);
            for (step, acc) in move_steps.iter_mut().zip(move_accepts.iter_mut()) {
                let rate = *acc as f64 / settings.adapt_batch as f64;
                *step = if rate > settings.target_acceptance { *step * delta.exp() } else { *step / delta.exp() };
                *step = step.clamp(1e-8, 1e4);
                *acc = 0;
            }
            for p in 0..dim {
                if binary[p] {
                    continue;
                }
                let rate = batch_accepts[p] as f64 / settings.adapt_batch as f64;
                if rate > settings.target_acceptance {
                    steps[p] *= delta.exp();
                } else {
                    steps[p] /= delta.exp();
                }
                steps[p] = steps[p].clamp(1e-8, 1e4);
                batch_accepts[p] = 0;
            }
        }
        if it + 1 == settings.burn_in {
            steps_at_burn_in = steps.clone();
        }
        if !burning && (it - settings.burn_in + 1) % settings.thin == 0 && draws.len() < retained * monitored.len() {
            draws.extend(monitored.iter().map(|&p| cs.state[p]));
        }
        if let Some(report) = progress {
            if (it + 1) % report_every == 0 {
                report(chain, it + 1);
            }
        }
    }
    let post = (settings.n_iterations - settings.burn_in) as f64;
    Ok(ChainDraws {
        draws,
        acceptance: accepts.iter().zip(&binary).map(|(&a, &b)| if b { f64::NAN } else { a as f64 / post }).collect(),
        steps_at_burn_in,
        steps_final: steps,
        final_state: cs.state,
    })
}

/// Run all chains (in parallel when the `parallel` feature is on).
///
/// `inits` supplies one starting state per chain.
pub fn run_chains<T: Target + ?Sized>(
    target: &T,
    inits: Vec<Vec<f64>>,
    settings: &SamplerSettings,
    monitored: Option<Vec<usize>>,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<PosteriorSamples, SamplerError> {
    settings.validate()?;
    if inits.len() != settings.n_chains {
        return Err(SamplerError::Settings(format!(
            "{} starting states for {} chains",
            inits.len(),
            settings.n_chains
        )));
    }
    let monitored = monitored.unwrap_or_else(|| (0..target.dimension()).collect());
    let jobs: Vec<(usize, Vec<f64>)> = inits.into_iter().enumerate().collect();
    let run = |(c, init): (usize, Vec<f64>)| run_chain(target, init, settings, c, &monitored, progress);

    #[cfg(feature = "parallel")]
    let results: Vec<Result<ChainDraws, SamplerError>> = {
        use rayon::prelude::*;
        jobs.into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<ChainDraws, SamplerError>> = jobs.into_iter().map(run).collect();

    let chains = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let all_names = target.parameter_names();
    Ok(PosteriorSamples {
        names: monitored.iter().map(|&p| all_names[p].clone()).collect(),
        monitored,
        all_names,
        n_retained: settings.retained(),
        chains,
        settings: settings.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent normals, one block each.
    struct Normals {
        means: Vec<f64>,
        sds: Vec<f64>,
        touched: Vec<Vec<usize>>,
    }

    impl Normals {
        fn new(means: Vec<f64>, sds: Vec<f64>) -> Self {
            let touched = (0..means.len()).map(|p| vec![p]).collect();
            Self { means, sds, touched }
        }
    }

    impl Target for Normals {
        fn dimension(&self) -> usize {
            self.means.len()
        }
        fn support(&self, _: usize) -> Support {
            Support::Real
        }
        fn n_blocks(&self) -> usize {
            self.means.len()
        }
        fn block_logdensity(&self, s: &[f64], b: usize) -> f64 {
            let z = (s[b] - self.means[b]) / self.sds[b];
            -0.5 * z * z
        }
        fn param_logprior(&self, _: &[f64], _: usize) -> f64 {
            0.0
        }
        fn blocks_touched(&self, p: usize) -> &[usize] {
            &self.touched[p]
        }
    }

    #[test]
    fn reproducible_and_frozen_after_burn_in() {
        let t = Normals::new(vec![1.0, -3.0], vec![0.5, 4.0]);
        let settings = SamplerSettings { n_iterations: 4000, burn_in: 1000, seed: 9, ..Default::default() };
        let a = run_chains(&t, vec![vec![0.0; 2]; 2], &settings, None, None).unwrap();
        let b = run_chains(&t, vec![vec![0.0; 2]; 2], &settings, None, None).unwrap();
        assert_eq!(a, b);
        for ch in &a.chains {
            assert_eq!(ch.steps_at_burn_in, ch.steps_final);
        }
        assert_eq!(a.pooled(0).len(), 6000);
        assert!((a.mean("x[2]").unwrap() + 3.0).abs() < 0.6);
        assert_ne!(a.chain(0, 0), a.chain(1, 0), "chains use distinct streams");
    }

    #[test]
    fn thinning_retains_expected_count() {
        let t = Normals::new(vec![0.0], vec![1.0]);
        let settings = SamplerSettings { n_chains: 1, n_iterations: 1000, burn_in: 100, thin: 7, ..Default::default() };
        let s = run_chains(&t, vec![vec![0.0]], &settings, None, None).unwrap();
        assert_eq!(s.chain(0, 0).len(), 900 / 7);
    }

    #[test]
    fn settings_validation() {
        let mut s = SamplerSettings::default();
        s.validate().unwrap();
        s.burn_in = s.n_iterations;
        assert!(s.validate().is_err());
    }

    struct Bad;
    impl Target for Bad {
        fn dimension(&self) -> usize {
            1
        }
        fn support(&self, _: usize) -> Support {
            Support::Interval { upper: 2.0 }
        }
        fn n_blocks(&self) -> usize {
            0
        }
        fn block_logdensity(&self, _: &[f64], _: usize) -> f64 {
            0.0
        }
        fn param_logprior(&self, s: &[f64], _: usize) -> f64 {
            crate::density::uniform_logpdf(s[0], 0.0, 2.0)
        }
        fn blocks_touched(&self, _: usize) -> &[usize] {
            &[]
        }
    }

    #[test]
    fn non_finite_start_aborts() {
        let settings = SamplerSettings { n_chains: 1, n_iterations: 10, burn_in: 5, ..Default::default() };
        let err = run_chains(&Bad, vec![vec![3.0]], &settings, None, None).unwrap_err();
        assert!(matches!(err, SamplerError::NonFiniteStart { .. }));
    }
}
