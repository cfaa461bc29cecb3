use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use netsynth::config::{
    Approach, BaselineBeta0, BiasConfig, BiasForm, EffectModel, Heterogeneity, MeanStructure, ModelConfig,
    ProbabilityModel, RegressionConfig, WithinBetween,
};
use netsynth::density::{BetaPrior, NormalPrior};
use netsynth::report::ExportFormat;
use netsynth::SamplerSettings;

use crate::input;

fn beta_pair(s: &str) -> Result<BetaPrior, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected 'a,b', got '{s}'"))?;
    let p = BetaPrior::new(
        a.trim().parse().map_err(|_| format!("bad number '{a}'"))?,
        b.trim().parse().map_err(|_| format!("bad number '{b}'"))?,
    );
    if p.is_valid() {
        Ok(p)
    } else {
        Err(format!("beta parameters must be positive, got '{s}'"))
    }
}

fn normal_pair(s: &str) -> Result<NormalPrior, String> {
    let (m, v) = s.split_once(',').ok_or_else(|| format!("expected 'mean,variance', got '{s}'"))?;
    Ok(NormalPrior::new(
        m.trim().parse().map_err(|_| format!("bad number '{m}'"))?,
        v.trim().parse().map_err(|_| format!("bad number '{v}'"))?,
    ))
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Directory with the network tables.
    #[arg(long)]
    pub data: PathBuf,
    /// Model config (TOML); an optional `[sampler]` table sets the sampler.
    /// Flags override the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created; must be empty if it exists).
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long)]
    pub approach: Option<Approach>,
    /// Treatment effects: random or common.
    #[arg(long)]
    pub effects: Option<EffectModel>,
    /// Network reference treatment label.
    #[arg(long)]
    pub reference: Option<String>,
    /// Sample from the prior only.
    #[arg(long)]
    pub prior_only: bool,
    /// Vague normal prior `mean,variance` for locations.
    #[arg(long, value_parser = normal_pair)]
    pub location_prior: Option<NormalPrior>,
    #[arg(long)]
    pub tau_upper: Option<f64>,

    /// Effect-modifier column (1-based, as in x1, x2, ...); enables
    /// meta-regression.
    #[arg(long)]
    pub covariate: Option<usize>,
    /// Value the covariate is centred at; defaults to the sample-size
    /// weighted mean over studies.
    #[arg(long)]
    pub center: Option<f64>,
    #[arg(long)]
    pub within_between: Option<WithinBetween>,
    #[arg(long)]
    pub interaction_effect: Option<EffectModel>,
    #[arg(long)]
    pub baseline_beta0: Option<BaselineBeta0>,

    #[arg(long)]
    pub bias_form: Option<BiasForm>,
    /// Bias effects: random or common.
    #[arg(long)]
    pub bias_effect: Option<EffectModel>,
    #[arg(long)]
    pub mean_structure: Option<MeanStructure>,
    #[arg(long)]
    pub probability_model: Option<ProbabilityModel>,
    #[arg(long)]
    pub heterogeneity: Option<Heterogeneity>,
    /// Beta prior `a,b` on the bias probability of low risk-of-bias studies.
    #[arg(long, value_parser = beta_pair)]
    pub pi_low: Option<BetaPrior>,
    #[arg(long, value_parser = beta_pair)]
    pub pi_high: Option<BetaPrior>,
    #[arg(long, value_parser = beta_pair)]
    pub pi_unclear: Option<BetaPrior>,

    /// Shift added to the observational means (two-step approach).
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Inflation factor in (0, 1] (two-step approach).
    #[arg(long)]
    pub w: Option<f64>,

    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// Credible level of the reports.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Comma-separated export formats: csv, json, svg.
    #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
    pub formats: Vec<ExportFormat>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Output directory of an earlier `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Where to write the reports; defaults to the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_delimiter = ',', default_value = "csv,json,svg")]
    pub formats: Vec<ExportFormat>,
    /// Covariate grid for regression curves: `from,to,step` on the
    /// original scale.
    #[arg(long, default_value = "20,60,1")]
    pub curve_grid: String,
}

impl ReportArgs {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let parts: Vec<f64> = self
            .curve_grid
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| input(anyhow!("curve grid must be 'from,to,step'")))?;
        let [from, to, step] = parts[..] else { bail!(input(anyhow!("curve grid must be 'from,to,step'"))) };
        if !(step > 0.0 && to >= from) {
            bail!(input(anyhow!("curve grid needs to >= from and step > 0")));
        }
        let n = ((to - from) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| from + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Six studies shaped like a mixed-design multiple sclerosis network.
    RrmsShape,
    /// A two-parameter fixture with a quadrature reference.
    Tiny,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// A model config file with an optional `[sampler]` table.
pub fn read_config_file(path: &Path) -> Result<(ModelConfig, Option<SamplerSettings>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(input)?;
    parse_config_text(&text).with_context(|| format!("in {}", path.display())).map_err(input)
}

pub fn parse_config_text(text: &str) -> Result<(ModelConfig, Option<SamplerSettings>)> {
    let mut table: toml::Table = toml::from_str(text)?;
    let sampler = match table.remove("sampler") {
        Some(v) => Some(v.try_into::<SamplerSettings>()?),
        None => None,
    };
    let cfg: ModelConfig = toml::Value::Table(table).try_into()?;
    Ok((cfg, sampler))
}

impl FitArgs {
    /// Config file (or defaults) with the flags applied on top.
    pub fn resolve(&self) -> Result<(ModelConfig, SamplerSettings)> {
        let (mut cfg, sampler) = match &self.config {
            Some(p) => read_config_file(p)?,
            None => (ModelConfig::default(), None),
        };
        let mut s = sampler.unwrap_or_default();
        if let Some(v) = self.approach {
            cfg.approach = v;
        }
        if let Some(v) = self.effects {
            cfg.trt_effect = v;
        }
        cfg.prior_only |= self.prior_only;
        if let Some(v) = self.location_prior {
            cfg.priors.location = v;
        }
        if let Some(v) = self.tau_upper {
            cfg.priors.tau_upper = v;
        }
        if let Some(c) = self.covariate {
            if c == 0 {
                bail!(input(anyhow!("--covariate is 1-based")));
            }
            cfg.regression.get_or_insert_with(RegressionConfig::default).covariate = c - 1;
        }
        if self.within_between.is_some() || self.interaction_effect.is_some() || self.baseline_beta0.is_some() {
            let reg = cfg
                .regression
                .as_mut()
                .ok_or_else(|| input(anyhow!("regression options need --covariate or a [regression] table")))?;
            if let Some(v) = self.within_between {
                reg.within_between = v;
            }
            if let Some(v) = self.interaction_effect {
                reg.interaction_effect = v;
            }
            if let Some(v) = self.baseline_beta0 {
                reg.baseline_beta0 = v;
            }
        }

        if cfg.approach.is_bias_model() {
            let b = cfg.bias.get_or_insert_with(BiasConfig::default);
            if let Some(v) = self.bias_form {
                b.form = v;
            }
            if let Some(v) = self.bias_effect {
                b.effect = v;
            }
            if let Some(v) = self.mean_structure {
                b.mean_structure = v;
            }
            if let Some(v) = self.probability_model {
                b.probability_model = v;
            }
            if let Some(v) = self.heterogeneity {
                b.heterogeneity = v;
            }
            if let Some(v) = self.pi_low {
                b.pi_priors.low = v;
            }
            if let Some(v) = self.pi_high {
                b.pi_priors.high = v;
            }
            if let Some(v) = self.pi_unclear {
                b.pi_priors.unclear = v;
            }
        } else {
            let bias_flags = self.bias_form.is_some()
                || self.bias_effect.is_some()
                || self.mean_structure.is_some()
                || self.probability_model.is_some()
                || self.heterogeneity.is_some()
                || self.pi_low.is_some()
                || self.pi_high.is_some()
                || self.pi_unclear.is_some();
            if bias_flags {
                bail!(input(anyhow!("bias options need --approach bias1 or bias2")));
            }
            cfg.bias = None;
        }
        if let Some(v) = self.zeta {
            cfg.nrs.zeta = v;
        }
        if let Some(v) = self.w {
            cfg.nrs.w = v;
        }

        if let Some(v) = self.chains {
            s.n_chains = v;
        }
        if let Some(v) = self.iterations {
            s.n_iterations = v;
        }
        if let Some(v) = self.burn_in {
            s.burn_in = v;
        }
        if let Some(v) = self.thin {
            s.thin = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        cfg.validate().map_err(input)?;
        s.validate().map_err(input)?;
        Ok((cfg, s))
    }
}
