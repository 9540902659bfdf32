//! Command-line harness for walklab: run configs, deterministic manifests
//! and tidy report files.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod report;
pub mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::Experiment;
pub use error::{CliError, CliResult};
pub use manifest::{OutputEntry, RunManifest};
pub use run::{Context, Outputs};

use crate::output::{sha256_hex, to_json};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_SOFT: i32 = 2;

/// Where a run writes its files.
#[derive(Clone, Debug)]
pub enum Destination {
    /// Every output under this directory, plus `manifest.json`.
    Dir(PathBuf),
    /// The primary CSV at this path; other outputs next to it as
    /// `<stem>.<name>`, the manifest as `<stem>.manifest.json`.
    CsvFile(PathBuf),
}

impl Destination {
    pub fn from_arg(p: &Path) -> Self {
        if p.extension().is_some_and(|e| e == "csv") {
            Destination::CsvFile(p.to_path_buf())
        } else {
            Destination::Dir(p.to_path_buf())
        }
    }

    fn layout(&self, names: &[String]) -> Vec<PathBuf> {
        match self {
            Destination::Dir(d) => names.iter().map(|n| d.join(n)).collect(),
            Destination::CsvFile(f) => {
                let dir = f.parent().map(Path::to_path_buf).unwrap_or_default();
                let stem = f
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let primary = names.iter().position(|n| n.ends_with(".csv"));
                names
                    .iter()
                    .enumerate()
                    .map(|(i, n)| {
                        if Some(i) == primary {
                            f.clone()
                        } else {
                            dir.join(format!("{stem}.{n}"))
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub manifest: RunManifest,
    /// Paths written, manifest last.
    pub written: Vec<PathBuf>,
    pub exit_code: i32,
}

fn write_all(
    dest: &Destination,
    files: &[(String, Vec<u8>)],
    manifest: &RunManifest,
) -> CliResult<Vec<PathBuf>> {
    let mut names: Vec<String> = files.iter().map(|f| f.0.clone()).collect();
    names.push("manifest.json".into());
    let paths = dest.layout(&names);
    let manifest_bytes = to_json(manifest)?.into_bytes();
    for (path, bytes) in paths.iter().zip(
        files
            .iter()
            .map(|f| &f.1)
            .chain(std::iter::once(&manifest_bytes)),
    ) {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, bytes)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(paths)
}

fn entries(
    files: &[(String, Vec<u8>)],
    kinds: &BTreeMap<String, Vec<String>>,
) -> BTreeMap<String, OutputEntry> {
    files
        .iter()
        .map(|(name, bytes)| {
            let e = OutputEntry {
                sha256: sha256_hex(bytes),
                operation: manifest::operation_of(name).into(),
                kinds: kinds.get(name).cloned().unwrap_or_default(),
            };
            (name.clone(), e)
        })
        .collect()
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// Run one experiment on a pool of `workers` threads and write its outputs.
///
/// `config_file` is the config's display name and raw bytes, recorded in
/// the manifest inputs.
pub fn execute(
    exp: &Experiment,
    ctx: &Context,
    dest: &Destination,
    workers: usize,
    config_file: Option<(&str, &[u8])>,
) -> CliResult<RunSummary> {
    let start = Instant::now();
    let out = pool(workers)?.install(|| run::run(exp, ctx))?;
    let mut inputs = out.inputs.clone();
    if let Some((name, bytes)) = config_file {
        inputs.insert(name.into(), sha256_hex(bytes));
    }
    let manifest = RunManifest {
        command: exp.name().into(),
        config: exp.echo(),
        seeds: exp.seeds(),
        code_version: manifest::CODE_VERSION.into(),
        inputs,
        workers,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: entries(&out.files, &out.kinds),
        flags: out.flags.clone(),
        cache: out.cache.clone(),
    };
    let written = write_all(dest, &out.files, &manifest)?;
    let exit_code = if out.flags.is_empty() {
        EXIT_OK
    } else {
        EXIT_SOFT
    };
    Ok(RunSummary {
        manifest,
        written,
        exit_code,
    })
}

/// Read a config file and run it.
pub fn run_config_file(
    path: &Path,
    forced: Option<&str>,
    dest: &Destination,
    workers: usize,
) -> CliResult<RunSummary> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    let text =
        std::str::from_utf8(&bytes).map_err(|_| CliError::invalid("/", "config is not UTF-8"))?;
    let exp = Experiment::from_json(text, forced)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let ctx = Context::from_env(base);
    execute(
        &exp,
        &ctx,
        dest,
        workers,
        Some((&path.display().to_string(), &bytes)),
    )
}

/// Consolidate `results` into report files under `out`.
pub fn run_report(results: &Path, out: &Path) -> CliResult<RunSummary> {
    let start = Instant::now();
    let (files, found) = report::report(results)?;
    let mut inputs = BTreeMap::new();
    for f in found {
        let bytes = std::fs::read(results.join(&f))?;
        inputs.insert(f, sha256_hex(&bytes));
    }
    let manifest = RunManifest {
        command: "report".into(),
        config: serde_json::json!({ "results": results.display().to_string() }),
        seeds: Vec::new(),
        code_version: manifest::CODE_VERSION.into(),
        inputs,
        workers: 1,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: entries(&files, &BTreeMap::new()),
        flags: Vec::new(),
        cache: Vec::new(),
    };
    let written = write_all(&Destination::Dir(out.to_path_buf()), &files, &manifest)?;
    Ok(RunSummary {
        manifest,
        written,
        exit_code: EXIT_OK,
    })
}
