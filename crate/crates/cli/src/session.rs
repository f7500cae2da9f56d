use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use lookahead_core::parallel::Execution;

use crate::args::{Cli, Format};
use crate::config::RunConfig;
use crate::manifest::{timestamp, FileDigest, RunManifest};
use crate::{usage_err, CliError, CliResult, UsageExt};

const DEFAULT_OUT: &str = "out";

/// State shared by one invocation: resolved globals plus the files it read
/// and wrote, which end up in the manifest.
pub(crate) struct Session {
    pub out: PathBuf,
    pub seed: u64,
    pub exec: Execution,
    pub format: Format,
    pub config: RunConfig,
    argv: Vec<String>,
    started_at: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    notes: Vec<String>,
}

impl Session {
    pub fn open(cli: &Cli, argv: Vec<String>) -> CliResult<Self> {
        let config = match &cli.config {
            Some(p) => RunConfig::load(p).usage()?,
            None => RunConfig::default(),
        };
        let jobs = cli.jobs.or(config.jobs);
        if jobs == Some(0) {
            return Err(usage_err("--jobs must be at least 1"));
        }
        let out = cli
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        prepare_out_dir(&out)?;
        Ok(Self {
            seed: cli.seed.or(config.seed).unwrap_or(0),
            exec: execution(jobs),
            format: cli.format.or(config.format).unwrap_or_default(),
            out,
            config,
            argv,
            started_at: timestamp(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        })
    }

    /// Registers an input after checking that it can be opened.
    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        fs::File::open(path).usage_ctx(format!("cannot read input {}", path.display()))?;
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
        Ok(())
    }

    /// Absolute location of an output given relative to the output
    /// directory; parent directories are created.
    pub fn output(&mut self, rel: impl AsRef<Path>) -> CliResult<PathBuf> {
        let rel = rel.as_ref();
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).usage_ctx(format!("cannot create {}", parent.display()))?;
        }
        let shown = rel.to_string_lossy().replace('\\', "/");
        if !self.outputs.contains(&shown) {
            self.outputs.push(shown);
        }
        Ok(path)
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.notes.push(msg);
    }

    /// Writes the manifest and returns its path.
    pub fn finish(mut self, subcommand: &str, config: serde_json::Value) -> CliResult<PathBuf> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| FileDigest::of(p, p.display().to_string()))
            .collect::<std::io::Result<Vec<_>>>()?;
        self.outputs.sort();
        let outputs = self
            .outputs
            .iter()
            .map(|rel| FileDigest::of(&self.out.join(rel), rel.clone()))
            .collect::<std::io::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            command_line: self.argv,
            config,
            seeds: BTreeMap::from([("seed".to_string(), self.seed)]),
            inputs,
            outputs,
            started_at: self.started_at,
            finished_at: timestamp(),
            notes: self.notes,
        };
        let path = self.out.join(format!("manifest.{subcommand}.json"));
        crate::files::write_json(&path, &manifest)?;
        Ok(path)
    }
}

fn prepare_out_dir(out: &Path) -> CliResult<()> {
    if out.exists() && !out.is_dir() {
        return Err(usage_err(format!("output path {} is not a directory", out.display())));
    }
    fs::create_dir_all(out).usage_ctx(format!("cannot create output directory {}", out.display()))?;
    let probe = out.join(".write-probe");
    fs::write(&probe, b"")
        .map_err(|e| CliError::usage(anyhow!(e).context(format!("output directory {} is not writable", out.display()))))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

#[cfg(feature = "parallel")]
fn execution(jobs: Option<usize>) -> Execution {
    match jobs {
        Some(1) => Execution::Sequential,
        Some(n) => {
            // Only the first call in a process can size the global pool.
            if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                log::debug!("thread pool already initialised; --jobs {n} ignored");
            }
            Execution::Parallel
        }
        None => Execution::Parallel,
    }
}

#[cfg(not(feature = "parallel"))]
fn execution(_jobs: Option<usize>) -> Execution {
    Execution::Sequential
}
