use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};
use walklab::{
    execute, run_config_file, run_report, CliError, CliResult, Context, Destination, Experiment,
    RunSummary,
};

#[derive(Parser)]
#[command(
    name = "walklab",
    version,
    about = "Random walks on groups: small-ball bounds, profiles, transforms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file whose `experiment` field names the command.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Enumerate a ball and its growth.
    Ball(ExpArgs),
    /// Exact and Monte Carlo small-ball probabilities.
    Walk(ExpArgs),
    /// Isoperimetric and spectral profiles.
    Profile(ExpArgs),
    /// Evaluate the small-ball bound and heat-kernel transforms.
    Bound(ExpArgs),
    /// Compare measured small-ball probabilities with the bound.
    CheckDomination(ExpArgs),
    /// Finite-chain and wall-metric verification.
    Prooflab(ExpArgs),
    /// Doubling, slow-variation and interpolation diagnostics.
    Regularity(ExpArgs),
    /// Occupation moments and the lamp-randomizing walk.
    Occupation(ExpArgs),
    /// Consolidate a results directory into tidy series.
    Report {
        results: PathBuf,
        /// Defaults to `<results>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExpArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, or a `.csv` path for the primary table.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    group: Option<String>,
    /// Ball radius; for `walk --ball`, the small-ball radius instead.
    #[arg(long)]
    radius: Option<u32>,
    /// Ball segment file (`walk` only).
    #[arg(long)]
    ball: Option<PathBuf>,
    /// Generator weights as a JSON array, e.g. '["1/4","1/4","1/4","1/4"]'.
    #[arg(long)]
    weights: Option<String>,
    /// Holding probability, e.g. 1/2.
    #[arg(long)]
    hold: Option<String>,
    /// `exact`, or `mc` to add Monte Carlo estimates (`walk` only).
    #[arg(long, value_parser = ["exact", "mc"])]
    mode: Option<String>,
    /// Monte Carlo samples per (k, r).
    #[arg(long)]
    samples: Option<u64>,
    /// Radii (comma separated).
    #[arg(long = "r", value_delimiter = ',')]
    r: Vec<u64>,
    /// Same as `--r`, for commands whose field is `rs`.
    #[arg(long, value_delimiter = ',')]
    rs: Vec<u64>,
    /// Moments (comma separated).
    #[arg(long = "p", value_delimiter = ',')]
    p: Vec<u64>,
    /// Step counts (comma separated).
    #[arg(long, value_delimiter = ',')]
    ks: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    steps: Vec<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Tail model: none, gaussian, or power_law:<alpha>.
    #[arg(long)]
    tail: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other field as `key=<json>`.
    #[arg(long = "set", value_name = "KEY=JSON")]
    set: Vec<String>,
}

fn list(v: &[u64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::from(x)).collect())
}

fn tail_value(s: &str) -> CliResult<Value> {
    let mut m = Map::new();
    match s.split_once(':') {
        Some(("power_law", a)) => {
            let alpha: f64 = a
                .parse()
                .map_err(|_| CliError::invalid("/tail", format!("bad exponent `{a}`")))?;
            m.insert("kind".into(), "power_law".into());
            m.insert("alpha".into(), alpha.into());
        }
        None => {
            m.insert("kind".into(), s.into());
        }
        _ => {
            return Err(CliError::invalid(
                "/tail",
                format!("unknown tail model `{s}`"),
            ))
        }
    }
    Ok(Value::Object(m))
}

/// Config from `--config` plus flag overrides.
fn build(name: &str, a: &ExpArgs) -> CliResult<(Experiment, Option<(String, Vec<u8>)>, PathBuf)> {
    let (mut v, file, base) = match &a.config {
        Some(p) => {
            let bytes = std::fs::read(p)
                .map_err(|e| CliError::MissingInput(format!("{}: {e}", p.display())))?;
            let v: Value = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::invalid("/", e.to_string()))?;
            let base = p.parent().map(PathBuf::from).unwrap_or_default();
            (v, Some((p.display().to_string(), bytes)), base)
        }
        None => (Value::Object(Map::new()), None, PathBuf::new()),
    };
    let obj = v
        .as_object_mut()
        .ok_or_else(|| CliError::invalid("/", "config must be a JSON object"))?;
    if let Some(g) = &a.group {
        obj.insert("group".into(), g.clone().into());
    }
    if let Some(r) = a.radius {
        if name == "walk" && a.ball.is_some() {
            obj.insert("rs".into(), list(&[r as u64]));
        } else {
            obj.insert("radius".into(), r.into());
        }
    }
    if let Some(b) = &a.ball {
        // Relative to the working directory, not to a `--config` file.
        let b = std::path::absolute(b).unwrap_or_else(|_| b.clone());
        obj.insert("ball".into(), b.display().to_string().into());
    }
    if a.weights.is_some() || a.hold.is_some() {
        let mut k = obj
            .get("kernel")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();
        if let Some(w) = &a.weights {
            let v: Value = serde_json::from_str(w)
                .map_err(|e| CliError::invalid("/kernel/weights", format!("--weights: {e}")))?;
            k.insert("weights".into(), v);
        }
        if let Some(h) = &a.hold {
            k.insert("hold".into(), h.clone().into());
        }
        obj.insert("kernel".into(), Value::Object(k));
    }
    if !a.r.is_empty() {
        obj.insert(
            if name == "occupation" { "r" } else { "rs" }.into(),
            list(&a.r),
        );
    }
    if !a.rs.is_empty() {
        obj.insert("rs".into(), list(&a.rs));
    }
    if !a.p.is_empty() {
        obj.insert("p".into(), list(&a.p));
    }
    if !a.ks.is_empty() {
        obj.insert("ks".into(), list(&a.ks));
    }
    if !a.steps.is_empty() {
        obj.insert("steps".into(), list(&a.steps));
    }
    if let Some(h) = a.horizon {
        obj.insert("horizon".into(), h.into());
    }
    if let Some(t) = &a.tail {
        obj.insert("tail".into(), tail_value(t)?);
    }
    if name == "walk" {
        match a.mode.as_deref() {
            Some("mc") => {
                let mut mc = obj
                    .get("monte_carlo")
                    .and_then(Value::as_object)
                    .cloned()
                    .unwrap_or_default();
                mc.entry("samples").or_insert(10_000.into());
                if let Some(n) = a.samples {
                    mc.insert("samples".into(), n.into());
                }
                if let Some(s) = a.seed {
                    mc.insert("seed".into(), s.into());
                }
                obj.insert("monte_carlo".into(), Value::Object(mc));
            }
            Some(_) => {
                obj.remove("monte_carlo");
            }
            None => {}
        }
    } else if let Some(s) = a.seed {
        obj.insert("seed".into(), s.into());
    }
    for kv in &a.set {
        let (k, raw) = kv
            .split_once('=')
            .ok_or_else(|| CliError::invalid("/", format!("--set expects KEY=JSON, got `{kv}`")))?;
        let x: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
        obj.insert(k.into(), x);
    }
    Ok((Experiment::from_value(v, Some(name))?, file, base))
}

fn report_error(e: &CliError) -> ExitCode {
    let mut m = Map::new();
    m.insert("error".into(), e.code().into());
    if let CliError::ConfigInvalid { pointer, .. } = e {
        m.insert("pointer".into(), pointer.clone().into());
    }
    m.insert("message".into(), e.to_string().into());
    eprintln!("{}", Value::Object(m));
    ExitCode::from(walklab::EXIT_ERROR as u8)
}

fn finish(s: RunSummary) -> ExitCode {
    for p in &s.written {
        println!("{}", p.display());
    }
    if !s.manifest.flags.is_empty() {
        eprintln!("flags: {}", s.manifest.flags.join(", "));
    }
    ExitCode::from(s.exit_code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            workers,
        } => run_config_file(&config, None, &Destination::from_arg(&out), workers),
        Command::Report { results, out } => {
            let out = out.unwrap_or_else(|| results.join("report"));
            run_report(&results, &out)
        }
        Command::Ball(a) => exp("ball", a),
        Command::Walk(a) => exp("walk", a),
        Command::Profile(a) => exp("profile", a),
        Command::Bound(a) => exp("bound", a),
        Command::CheckDomination(a) => exp("check-domination", a),
        Command::Prooflab(a) => exp("prooflab", a),
        Command::Regularity(a) => exp("regularity", a),
        Command::Occupation(a) => exp("occupation", a),
    };
    match result {
        Ok(s) => finish(s),
        Err(e) => report_error(&e),
    }
}

fn exp(name: &str, a: ExpArgs) -> CliResult<RunSummary> {
    let (e, file, base) = build(name, &a)?;
    let ctx = Context::from_env(base);
    execute(
        &e,
        &ctx,
        &Destination::from_arg(&a.out),
        a.workers,
        file.as_ref().map(|(n, b)| (n.as_str(), b.as_slice())),
    )
}
