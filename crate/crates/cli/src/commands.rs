use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use netsynth::config::Approach;
use netsynth::evidence::{export_network, load_network, validate_network, EvidenceNetwork, NetworkPaths};
use netsynth::nrs::run_two_step;
use netsynth::oracle::{grid_posterior_oracle, simulate_network, SimulationSpec, TinyModelSpec};
use netsynth::report::{export, ExportFormat, FitReport, ReportOptions};
use netsynth::{fit_model, Fit, ModelConfig, Posterior, SamplerSettings};

use crate::options::{read_config_file, FitArgs, Preset, ReportArgs, SimulateArgs};
use crate::store::{self, FittedModel, ParameterDiagnostics, RunManifest, RunOptions};
use crate::{input, EXIT_CONVERGENCE, RHAT_BAR};

fn load(data: &Path) -> Result<(NetworkPaths, EvidenceNetwork)> {
    if !data.is_dir() {
        return Err(input(anyhow!("data directory {} does not exist", data.display())));
    }
    let paths = NetworkPaths::in_dir(data);
    let net = load_network(&paths).map_err(input)?;
    Ok((paths, net))
}

pub fn validate(data: &Path, config: Option<&Path>) -> Result<u8> {
    let (_, net) = load(data)?;
    let report = validate_network(&net).map_err(input)?;
    eprint!("{}", report.render(&net));
    if let Some(path) = config {
        let (cfg, _) = read_config_file(path)?;
        cfg.validate().map_err(input)?;
        let post = Posterior::new(&net, &cfg).map_err(input)?;
        eprintln!("model: {} parameters", post.space().len());
    }
    Ok(0)
}

/// Sample-size weighted mean of the study covariate means.
fn default_center(net: &EvidenceNetwork, col: usize) -> Result<f64> {
    if col >= net.n_covariates {
        bail!(input(anyhow!("covariate {} not in the data ({} columns)", col + 1, net.n_covariates)));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for s in &net.studies {
        let m = s
            .mean_covariate(col)
            .ok_or_else(|| input(anyhow!("study '{}' has no value for covariate {}", s.id, col + 1)))?;
        num += m * s.sample_size() as f64;
        den += s.sample_size() as f64;
    }
    if den == 0.0 {
        bail!(input(anyhow!("network has no participants")));
    }
    Ok(num / den)
}

fn prepare_out(out: &Path) -> Result<()> {
    if out.exists() && fs::read_dir(out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        bail!(input(anyhow!("output directory {} exists and is not empty", out.display())));
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display())).map_err(input)
}

pub fn fit(args: &FitArgs, quiet: bool) -> Result<u8> {
    let (mut cfg, settings) = args.resolve()?;
    let (paths, net) = load(&args.data)?;
    if let Some(label) = &args.reference {
        let t = net.treatment_by_label(label).ok_or_else(|| input(anyhow!("unknown reference treatment '{label}'")))?;
        cfg.reference = Some(t.id);
    }
    let center = match (&cfg.regression, args.center) {
        (None, Some(_)) => bail!(input(anyhow!("--center needs a meta-regression (--covariate)"))),
        (None, None) => None,
        (Some(_), Some(c)) => Some(c),
        (Some(r), None) => Some(default_center(&net, r.covariate)?),
    };
    let options = RunOptions {
        center,
        level: args.level,
        formats: args.formats.iter().map(ToString::to_string).collect(),
    };
    prepare_out(&args.out)?;
    let mut inputs = store::copy_inputs(&paths, &args.out)?;
    let cfg_path = args.out.join(store::CONFIG);
    fs::write(&cfg_path, store::config_text(&cfg, &settings)?)?;
    let run_path = args.out.join(store::RUN);
    fs::write(&run_path, toml::to_string(&options)?)?;
    inputs.push(cfg_path);
    inputs.push(run_path);
    let manifest = execute(&args.out, &inputs, &cfg, &settings, &options, quiet)?;
    if !manifest.converged {
        eprintln!(
            "warning: largest R-hat is {:.3} (>= {RHAT_BAR}); outputs written to {}",
            manifest.max_rhat.unwrap_or(f64::NAN),
            args.out.display()
        );
        return Ok(EXIT_CONVERGENCE);
    }
    Ok(0)
}

fn progress_printer(settings: &SamplerSettings) -> impl Fn(usize, usize) + Sync {
    let total = settings.n_iterations;
    move |chain, it| eprintln!("chain {}: {it}/{total}", chain + 1)
}

/// Run the model from the stored inputs in `out` and write every output.
fn execute(
    out: &Path,
    inputs: &[PathBuf],
    cfg: &ModelConfig,
    settings: &SamplerSettings,
    options: &RunOptions,
    quiet: bool,
) -> Result<RunManifest> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let paths = NetworkPaths::in_dir(out.join(store::DATA));
    let rct_only = cfg.approach == Approach::NrsPrior;
    let fitted_cfg_stub = FittedModel { rct_only: false, center: options.center, config: cfg.clone() };
    let net = store::fitted_network(&paths, &fitted_cfg_stub)?;
    let formats: Vec<ExportFormat> =
        options.formats.iter().map(|f| f.parse().map_err(|e: String| input(anyhow!(e)))).collect::<Result<_>>()?;

    let printer = progress_printer(settings);
    let progress: Option<&(dyn Fn(usize, usize) + Sync)> = if quiet { None } else { Some(&printer) };
    let mut outputs = Vec::new();
    let fit: Fit = if rct_only {
        let two = run_two_step(&net, cfg, settings, cfg.nrs.zeta, cfg.nrs.w, progress)
            .map_err(classify_nrs)?;
        if let Some((summary, nrs_fit)) = &two.nrs {
            for w in summary.warnings() {
                eprintln!("warning: {w}");
            }
            let p = out.join(store::NRS_SUMMARY);
            let mut buf = Vec::new();
            summary.write_csv(&mut buf)?;
            fs::write(&p, buf)?;
            outputs.push(p);
            let p = out.join(store::NRS_DRAWS);
            fs::write(&p, nrs_fit.samples.to_csv())?;
            outputs.push(p);
        }
        two.rct
    } else {
        fit_model(&net, cfg, settings, progress).map_err(classify_fit)?
    };

    let fitted = FittedModel { rct_only, center: options.center, config: fit.posterior.config().clone() };
    let p = out.join(store::FITTED);
    fs::write(&p, toml::to_string(&fitted)?)?;
    outputs.push(p);
    let p = out.join(store::DRAWS);
    fs::write(&p, fit.samples.to_csv())?;
    outputs.push(p);

    let opts = ReportOptions { level: options.level, ..Default::default() };
    let report = FitReport::from_fit(&fit, &opts)?;
    outputs.extend(export(&report, out, &formats)?);

    let max_rhat = report.max_rhat();
    let converged = max_rhat.is_none_or(|r| r < RHAT_BAR);
    let manifest = RunManifest {
        software: format!("netsynth {}", env!("CARGO_PKG_VERSION")),
        started_unix: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        seed: settings.seed,
        settings: settings.clone(),
        config: cfg.clone(),
        options: options.clone(),
        inputs: store::digests(out, inputs)?,
        outputs: store::digests(out, &outputs)?,
        diagnostics: report
            .parameters
            .iter()
            .map(|p| ParameterDiagnostics { parameter: p.parameter.clone(), rhat: p.rhat, ess: p.ess })
            .collect(),
        max_rhat,
        converged,
    };
    fs::write(out.join(store::MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn classify_fit(e: netsynth::FitError) -> anyhow::Error {
    use netsynth::FitError;
    match e {
        FitError::Evidence(_) | FitError::Model(_) | FitError::Workflow(_) => input(e),
        FitError::Sampler(ref s) if matches!(s, netsynth::mcmc::SamplerError::Settings(_)) => input(e),
        FitError::Sampler(_) => e.into(),
    }
}

fn classify_nrs(e: netsynth::nrs::NrsError) -> anyhow::Error {
    use netsynth::nrs::NrsError;
    match e {
        NrsError::Fit(f) => classify_fit(f),
        other => input(other),
    }
}

pub fn report(args: &ReportArgs, quiet: bool) -> Result<u8> {
    if !args.fit.is_dir() {
        bail!(input(anyhow!("fit directory {} does not exist", args.fit.display())));
    }
    let fit = store::load_fit(&args.fit)?;
    let opts = ReportOptions { level: args.level, curve_grid: args.grid()? };
    let report = FitReport::from_fit(&fit, &opts).map_err(input)?;
    let out = args.out.clone().unwrap_or_else(|| args.fit.clone());
    for p in export(&report, &out, &args.formats)? {
        if !quiet {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(0)
}

pub fn replay(dir: &Path, quiet: bool) -> Result<u8> {
    let manifest = store::RunManifest::read(dir)?;
    for d in &manifest.inputs {
        let now = store::sha256_file(&dir.join(&d.path)).map_err(input)?;
        if now != d.sha256 {
            bail!(input(anyhow!("input {} changed since the run (digest mismatch)", d.path)));
        }
    }
    let (_, cfg, settings, options) = store::read_inputs(dir)?;
    let scratch = tempfile::tempdir()?;
    let copy = scratch.path().join("run");
    let mut inputs = Vec::new();
    for d in &manifest.inputs {
        let dst = copy.join(&d.path);
        fs::create_dir_all(dst.parent().expect("relative path has a parent"))?;
        fs::copy(dir.join(&d.path), &dst)?;
        inputs.push(dst);
    }
    let fresh = execute(&copy, &inputs, &cfg, &settings, &options, quiet)?;
    let mut mismatched = Vec::new();
    for d in &manifest.outputs {
        match fresh.outputs.iter().find(|f| f.path == d.path) {
            Some(f) if f.sha256 == d.sha256 => {}
            _ => mismatched.push(d.path.clone()),
        }
    }
    if !mismatched.is_empty() {
        bail!("replay differs in: {}", mismatched.join(", "));
    }
    eprintln!("replay identical: {} outputs", manifest.outputs.len());
    Ok(0)
}

pub fn simulate(args: &SimulateArgs, quiet: bool) -> Result<u8> {
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display())).map_err(input)?;
    match args.preset {
        Preset::RrmsShape => {
            let spec = SimulationSpec::rrms_shape(args.seed);
            let sim = simulate_network(&spec)?;
            export_network(&sim.network, &args.out)?;
            fs::write(args.out.join("truth.csv"), sim.truth.to_csv())?;
            fs::write(args.out.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
        }
        Preset::Tiny => {
            let spec = TinyModelSpec::example();
            export_network(&spec.to_network(), &args.out)?;
            let oracle = grid_posterior_oracle(&spec, 800)?;
            let mut rows = String::from("parameter,mean,sd\n");
            for (i, name) in oracle.names.iter().enumerate() {
                rows.push_str(&format!("{name},{},{}\n", oracle.means[i], oracle.sds[i]));
            }
            fs::write(args.out.join("oracle.csv"), rows)?;
            fs::write(args.out.join("config.toml"), spec.config().to_toml_string())?;
            fs::write(args.out.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
        }
    }
    if !quiet {
        eprintln!("wrote {}", args.out.display());
    }
    Ok(0)
}
