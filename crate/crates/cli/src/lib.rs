//! Command-line harness: reads a JSON experiment config, runs it and writes
//! CSV/JSON artifacts plus a manifest.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{canonical_json, parse_config, ExperimentConfig};
use error::CliError;
use experiments::{run_experiment, write_json, Emitter};
use manifest::{content_hash, RunManifest, Status, Verdict};

pub const THREADS_ENV: &str = "SWARMSPHERE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "swarmsphere", version, about = "Sphere swarm experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Runs `cfg`, writing everything under `out_dir`. The manifest is written
/// last, also when the experiment fails.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let mut em = Emitter::new(out_dir)?;
    let canonical = canonical_json(cfg);
    em.json("config.resolved.json", &serde_json::from_str::<serde_json::Value>(&canonical).unwrap())?;
    let result = run_experiment(cfg, &mut em);
    let (metrics, warnings, error) = match result {
        Ok(o) => (o.metrics, o.warnings, None),
        Err(e) => (Default::default(), Vec::new(), Some(e)),
    };
    let verdicts: Vec<Verdict> = cfg
        .gates
        .iter()
        .map(|g| Verdict::evaluate(g, metrics.get(&g.metric).copied()))
        .collect();
    let status = if error.is_some() {
        Status::Error
    } else if verdicts.iter().all(|v| v.pass) {
        Status::Pass
    } else {
        Status::Fail
    };
    let manifest = RunManifest {
        config_hash: content_hash(canonical.as_bytes()),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: serde_json::to_value(cfg.experiment)
            .unwrap()
            .as_str()
            .unwrap()
            .to_string(),
        seed: cfg.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: em.outputs.clone(),
        metrics,
        verdicts,
        warnings,
        status,
        error: error.as_ref().map(|e| e.to_string()),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    match error {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| CliError::Config {
            key: THREADS_ENV.to_string(),
            message: format!("`{v}` is not a thread count"),
        })?;
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    match cli.command {
        Command::Validate { config } => match parse_config(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        },
        Command::Run {
            config,
            seed_override,
            out,
        } => {
            let mut cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            };
            if let Some(s) = seed_override {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let dir = cfg.output_dir.clone();
            match run(&cfg, &dir) {
                Ok(m) => {
                    for w in &m.warnings {
                        eprintln!("warning: {w}");
                    }
                    for v in &m.verdicts {
                        let observed = v.observed.map_or("missing".to_string(), |x| format!("{x:e}"));
                        println!(
                            "{} {} {:?} {:e} (observed {observed})",
                            if v.pass { "PASS" } else { "FAIL" },
                            v.metric,
                            v.op,
                            v.threshold
                        );
                    }
                    println!("wrote {} files to {}", m.outputs.len() + 1, dir.display());
                    if m.status == Status::Pass {
                        0
                    } else {
                        1
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    2
                }
            }
        }
    }
}
