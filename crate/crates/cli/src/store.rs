//! Layout of a fit directory and its run manifest.
//!
//! ```text
//! <out>/inputs/data/*.csv     copies of the network tables
//! <out>/inputs/config.toml    resolved model config with a [sampler] table
//! <out>/inputs/run.toml       centering and report options
//! <out>/fitted.toml           model actually sampled (after the two-step rewrite)
//! <out>/draws.csv             retained draws
//! <out>/nrs_summary.csv       observational summaries (two-step only)
//! <out>/summary.csv ...       reports
//! <out>/manifest.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use netsynth::evidence::{load_network, Design, EvidenceNetwork, NetworkPaths};
use netsynth::{Fit, ModelConfig, Posterior, PosteriorSamples, SamplerSettings};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::input;
use crate::options::parse_config_text;

pub const DATA: &str = "inputs/data";
pub const CONFIG: &str = "inputs/config.toml";
pub const RUN: &str = "inputs/run.toml";
pub const FITTED: &str = "fitted.toml";
pub const DRAWS: &str = "draws.csv";
pub const NRS_SUMMARY: &str = "nrs_summary.csv";
pub const NRS_DRAWS: &str = "nrs_draws.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub center: Option<f64>,
    pub level: f64,
    pub formats: Vec<String>,
}

/// The model behind `draws.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    /// Only the randomized studies were used (second step of the
    /// two-step approach).
    pub rct_only: bool,
    pub center: Option<f64>,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the fit directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub parameter: String,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub seed: u64,
    pub settings: SamplerSettings,
    pub config: ModelConfig,
    pub options: RunOptions,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub diagnostics: Vec<ParameterDiagnostics>,
    pub max_rhat: Option<f64>,
    pub converged: bool,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display())).map_err(input)?;
        serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display())).map_err(input)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digests(root: &Path, files: &[PathBuf]) -> Result<Vec<FileDigest>> {
    files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(root).unwrap_or(f);
            Ok(FileDigest { path: rel.to_string_lossy().replace('\\', "/"), sha256: sha256_file(f)? })
        })
        .collect()
}

/// Copy the network tables into `<out>/inputs/data`; returns the copies.
pub fn copy_inputs(paths: &NetworkPaths, out: &Path) -> Result<Vec<PathBuf>> {
    let data = out.join(DATA);
    fs::create_dir_all(&data).with_context(|| format!("cannot create {}", data.display()))?;
    let mut copies = Vec::new();
    for src in paths.all() {
        let name = src.file_name().ok_or_else(|| anyhow!("bad input path {}", src.display()))?;
        let dst = data.join(name);
        fs::copy(src, &dst).with_context(|| format!("cannot copy {}", src.display())).map_err(input)?;
        copies.push(dst);
    }
    Ok(copies)
}

pub fn config_text(cfg: &ModelConfig, settings: &SamplerSettings) -> Result<String> {
    let mut table: toml::Table = toml::from_str(&cfg.to_toml_string())?;
    table.insert("sampler".into(), toml::Value::try_from(settings)?);
    Ok(toml::to_string(&table)?)
}

pub fn read_inputs(dir: &Path) -> Result<(NetworkPaths, ModelConfig, SamplerSettings, RunOptions)> {
    let cfg_path = dir.join(CONFIG);
    let text = fs::read_to_string(&cfg_path)
        .with_context(|| format!("{} is not a fit directory (no {CONFIG})", dir.display()))
        .map_err(input)?;
    let (cfg, sampler) = parse_config_text(&text).map_err(input)?;
    let run_text = fs::read_to_string(dir.join(RUN)).with_context(|| format!("missing {RUN}")).map_err(input)?;
    let run: RunOptions = toml::from_str(&run_text).map_err(input)?;
    Ok((NetworkPaths::in_dir(dir.join(DATA)), cfg, sampler.unwrap_or_default(), run))
}

/// Network as seen by the fitted model.
pub fn fitted_network(paths: &NetworkPaths, fitted: &FittedModel) -> Result<EvidenceNetwork> {
    let mut net = load_network(paths).map_err(input)?;
    if let Some(c) = fitted.center {
        let mut centers = vec![0.0; net.n_covariates];
        let col = fitted.config.regression.as_ref().map_or(0, |r| r.covariate);
        *centers.get_mut(col).ok_or_else(|| input(anyhow!("covariate {} not in the data", col + 1)))? = c;
        net = net.center_covariates(&centers)?;
    }
    if fitted.rct_only {
        net = net.by_design(Design::Rct);
        if let Some(r) = fitted.config.reference {
            net = net.with_reference(r)?;
        }
    }
    Ok(net)
}

/// Rebuild the posterior and draws of a stored fit.
pub fn load_fit(dir: &Path) -> Result<Fit> {
    let (paths, _, settings, _) = read_inputs(dir)?;
    let fitted_text = fs::read_to_string(dir.join(FITTED)).with_context(|| format!("missing {FITTED}")).map_err(input)?;
    let fitted: FittedModel = toml::from_str(&fitted_text).map_err(input)?;
    let net = fitted_network(&paths, &fitted)?;
    let posterior = Posterior::new(&net, &fitted.config).map_err(input)?;
    let draws = fs::read_to_string(dir.join(DRAWS)).with_context(|| format!("missing {DRAWS}")).map_err(input)?;
    let samples = PosteriorSamples::from_csv(&draws, settings).map_err(|e| input(anyhow!("{DRAWS}: {e}")))?;
    let known = posterior.space().names();
    if let Some(bad) = samples.names.iter().find(|n| !known.contains(n)) {
        return Err(input(anyhow!("{DRAWS} has column '{bad}' that the stored model does not define")));
    }
    Ok(Fit { posterior, samples })
}
