use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Parser, ValueEnum};
use serde_json::{json, Value};
use sphrank::angular::{fvml_concentration_mle, sample};
use sphrank::efficiency::{are_table, standard_scores, standard_truths};
use sphrank::estimators::{one_step_r_estimate, Classical, EstimateResult};
use sphrank::geometry::{cosines, normalize};
use sphrank::io::{
    parse_dataset_verbose, sha256_hex, to_json_string, write_sample_csv_file, DatasetSpec, OutputRecord, RunManifest,
    LIBRARY_VERSION,
};
use sphrank::montecarlo::{run_mse_experiment, ExperimentConfig, FULL_SCALE_REPLICATES, LOW_CONFIDENCE_REPLICATES};
use sphrank::score::score_from_model;
use sphrank::{AngularModel, Error, SampleSet, UnitVector};

use crate::{AnalyzeArgs, AreTableArgs, Cli, Command, EstimateArgs, Method, MseArgs, ReplayArgs, SampleArgs, TableFormat};

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Replay(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Replay(_) => 1,
            Self::Lib(e) => match e {
                Error::Io(_) => 1,
                Error::Parse { .. }
                | Error::Norm { .. }
                | Error::Config(_)
                | Error::Json(_)
                | Error::InvalidParameter(_)
                | Error::DimensionMismatch { .. }
                | Error::UnsupportedDimension(_)
                | Error::ZeroVector(_) => 2,
                Error::NoSignChange { .. } => 4,
                _ => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lib(e) => e.fmt(f),
            Self::Replay(msg) => write!(f, "replay mismatch: {msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Lib(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Bookkeeping for the manifest of one command.
struct Run {
    command: &'static str,
    started_at: String,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<OutputRecord>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            started_at: now(),
            config: Value::Null,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn write(&mut self, path: &Path, contents: &str) -> CliResult<()> {
        std::fs::write(path, contents)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn finish(self, argv: &[String], write_manifest: bool) -> CliResult<()> {
        if !write_manifest {
            return Ok(());
        }
        let primary = self.outputs.first().cloned().expect("every command writes an output");
        let manifest = RunManifest {
            command: self.command.into(),
            args: argv.to_vec(),
            working_dir: std::env::current_dir()?.display().to_string(),
            config: self.config,
            seed: self.seed,
            library_version: LIBRARY_VERSION.into(),
            started_at: self.started_at,
            finished_at: now(),
            inputs: self.inputs,
            outputs: self.outputs.iter().map(|p| OutputRecord::of(p)).collect::<sphrank::Result<_>>()?,
        };
        std::fs::write(RunManifest::path_for(&primary), to_json_string(&manifest)?)?;
        Ok(())
    }
}

fn value_name<V: ValueEnum>(v: V) -> String {
    v.to_possible_value().map_or_else(String::new, |p| p.get_name().to_string())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn run(command: Command, argv: &[String], write_manifest: bool) -> CliResult<()> {
    match command {
        Command::Sample(a) => cmd_sample(a)?.finish(argv, write_manifest),
        Command::Estimate(a) => cmd_estimate(a)?.finish(argv, write_manifest),
        Command::AreTable(a) => cmd_are_table(a)?.finish(argv, write_manifest),
        Command::Mse(a) => cmd_mse(a)?.finish(argv, write_manifest),
        Command::Analyze(a) => cmd_analyze(a)?.finish(argv, write_manifest),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn cmd_sample(a: SampleArgs) -> CliResult<Run> {
    let mut run = Run::new("sample");
    let theta: UnitVector = match (&a.theta, a.k) {
        (Some(t), Some(k)) if t.len() != k => {
            return Err(Error::DimensionMismatch { expected: k, found: t.len() }.into());
        }
        (Some(t), _) => normalize(t)?,
        (None, Some(k)) => UnitVector::basis(k, 0)?,
        (None, None) => return Err(Error::Config("give --theta or --k".into()).into()),
    };
    let k = theta.dim();
    let s = sample(&a.model, k, &theta, a.n, a.seed)?;
    run.config = json!({ "model": a.model.to_string(), "k": k, "theta": theta.as_slice(), "n": a.n, "seed": a.seed });
    run.seed = Some(a.seed);
    write_sample_csv_file(&s, &a.out)?;
    run.outputs.push(a.out);
    Ok(run)
}

fn load(run: &mut Run, spec: &DatasetSpec) -> CliResult<SampleSet> {
    let parsed = parse_dataset_verbose(spec)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    run.inputs.push(OutputRecord::of(&spec.path)?);
    Ok(parsed.sample)
}

fn estimate_json(sample: &SampleSet, est: &EstimateResult, extra: Value) -> Value {
    let mut v = json!({
        "n": sample.len(),
        "k": sample.k(),
        "method": est.method,
        "theta_hat": est.theta_hat.as_slice(),
        "preliminary_theta": est.preliminary.as_ref().map(UnitVector::as_slice),
        "beta_hat": est.beta_hat,
        "j_cross_hat": est.j_cross_hat,
        "iterations": est.iterations,
        "converged": est.converged,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    v
}

fn cmd_estimate(a: EstimateArgs) -> CliResult<Run> {
    let mut run = Run::new("estimate");
    let spec = DatasetSpec { path: a.data.clone(), format: a.format, k: a.k };
    let s = load(&mut run, &spec)?;
    let (est, extra) = match a.method {
        Method::Mean => (Classical::Mean.estimate(&s)?, json!({})),
        Method::Median => (Classical::Median.estimate(&s)?, json!({})),
        Method::OnestepR => {
            let model = a.score.clone().ok_or_else(|| Error::Config("onestep-r needs --score".into()))?;
            let pre = a.preliminary.estimate(&s)?;
            let score = score_from_model(&model, s.k())?;
            let est = one_step_r_estimate(&s, &score, &pre)?;
            (est, json!({ "score": model.to_string(), "preliminary": a.preliminary.to_string() }))
        }
    };
    run.config = json!({
        "data": spec.path.display().to_string(),
        "format": spec.format.to_string(),
        "method": value_name(a.method),
        "score": a.score.as_ref().map(ToString::to_string),
        "preliminary": a.preliminary.to_string(),
    });
    run.write(&a.out, &to_json_string(&estimate_json(&s, &est, extra))?)?;
    Ok(run)
}

fn cmd_are_table(a: AreTableArgs) -> CliResult<Run> {
    let mut run = Run::new("are-table");
    let table = are_table(&standard_truths(), &standard_scores(), a.reference, a.k)?;
    run.config = json!({ "reference": a.reference.to_string(), "k": a.k, "format": value_name(a.format) });
    let text = match a.format {
        TableFormat::Csv => table.to_csv(),
        TableFormat::Text => table.to_text(),
    };
    run.write(&a.out, &text)?;
    Ok(run)
}

fn cmd_mse(a: MseArgs) -> CliResult<Run> {
    let mut run = Run::new("mse");
    let mut config: ExperimentConfig = serde_json::from_slice(&std::fs::read(&a.config)?).map_err(Error::Json)?;
    run.inputs.push(OutputRecord::of(&a.config)?);
    if a.full_scale {
        config.replicates = FULL_SCALE_REPLICATES;
    }
    if let Some(m) = a.replicates {
        config.replicates = m;
    }
    if config.replicates < LOW_CONFIDENCE_REPLICATES {
        eprintln!("warning: {} replicates; standard errors are low-confidence", config.replicates);
    }
    let report = run_mse_experiment(&config)?;
    run.config = serde_json::to_value(&config).map_err(Error::Json)?;
    run.seed = Some(config.seed);
    let body = if a.out.extension().is_some_and(|e| e == "json") {
        to_json_string(&report)?
    } else {
        report.to_csv()
    };
    run.write(&a.out, &body)?;
    Ok(run)
}

fn cmd_analyze(a: AnalyzeArgs) -> CliResult<Run> {
    let mut run = Run::new("analyze");
    let spec = DatasetSpec { path: a.data.clone(), format: a.format, k: a.k };
    let s = load(&mut run, &spec)?;
    let mean = Classical::Mean.estimate(&s)?;
    let median = Classical::Median.estimate(&s)?;
    let pre = match a.preliminary {
        Classical::Mean => &mean,
        Classical::Median => &median,
    };
    let kappa_mle = fvml_concentration_mle(&s)?;
    let mut kappas = Vec::new();
    for token in &a.kappas {
        let token = token.trim();
        if token.eq_ignore_ascii_case("mle") {
            kappas.push(("mle".to_string(), kappa_mle));
        } else {
            let v: f64 = token.parse().map_err(|_| Error::Config(format!("bad kappa '{token}'")))?;
            kappas.push((token.to_string(), v));
        }
    }
    let mut estimates = Vec::new();
    let mut csv = String::from("estimator,kappa");
    for i in 1..=s.k() {
        csv.push_str(&format!(",x{i}"));
    }
    csv.push('\n');
    let mut csv_row = |name: &str, kappa: Option<f64>, theta: &UnitVector| {
        csv.push_str(name);
        csv.push(',');
        if let Some(kp) = kappa {
            csv.push_str(&kp.to_string());
        }
        for x in theta.as_slice() {
            csv.push_str(&format!(",{x}"));
        }
        csv.push('\n');
    };
    csv_row("mean", None, &mean.theta_hat);
    csv_row("median", None, &median.theta_hat);
    for (label, kappa) in &kappas {
        let model = AngularModel::fvml(*kappa)?;
        let est = one_step_r_estimate(&s, &score_from_model(&model, s.k())?, pre)?;
        csv_row(&format!("onestep-r[{label}]"), Some(*kappa), &est.theta_hat);
        estimates.push(json!({
            "kappa_label": label,
            "kappa": kappa,
            "theta_hat": est.theta_hat.as_slice(),
            "beta_hat": est.beta_hat,
            "j_cross_hat": est.j_cross_hat,
        }));
    }
    let cos = cosines(&pre.theta_hat, &s);
    let report = json!({
        "n": s.len(),
        "k": s.k(),
        "data_sha256": run.inputs[0].sha256,
        "mean": mean.theta_hat.as_slice(),
        "median": median.theta_hat.as_slice(),
        "mean_resultant_length": s.mean_resultant_length(),
        "kappa_mle": kappa_mle,
        "preliminary": a.preliminary.to_string(),
        "estimates": estimates,
        "cosines": cos,
    });
    run.config = json!({
        "data": spec.path.display().to_string(),
        "format": spec.format.to_string(),
        "kappas": a.kappas,
        "preliminary": a.preliminary.to_string(),
    });
    run.write(&a.out, &to_json_string(&report)?)?;
    run.write(&a.out.with_extension("csv"), &csv)?;
    if let Some(p) = &a.plot_data {
        let mut body = String::from("cosine\n");
        for c in &cos {
            body.push_str(&format!("{c}\n"));
        }
        run.write(p, &body)?;
    }
    Ok(run)
}

fn cmd_replay(a: ReplayArgs) -> CliResult<()> {
    let manifest = RunManifest::read(&a.manifest)?;
    let cli = Cli::try_parse_from(std::iter::once("sphrank".to_string()).chain(manifest.args.iter().cloned()))
        .map_err(|e| Error::Config(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::Config("a manifest cannot replay a replay".into()).into());
    }
    let previous = std::env::current_dir()?;
    std::env::set_current_dir(&manifest.working_dir)?;
    let outcome = run(cli.command, &manifest.args, false).and_then(|()| {
        for out in &manifest.outputs {
            let now = sha256_hex(&std::fs::read(&out.path)?);
            if now != out.sha256 {
                return Err(CliError::Replay(format!("{} changed", out.path)));
            }
        }
        Ok(())
    });
    std::env::set_current_dir(previous)?;
    outcome?;
    println!("replay ok: {} output(s) identical", manifest.outputs.len());
    Ok(())
}
