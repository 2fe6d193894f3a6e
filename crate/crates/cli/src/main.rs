//! `gmmsi`: rank tables, verdicts, Monte Carlo sweeps and region maps from a model file.
//!
//! Exit status is 0 on success, 1 for bad input (flags, config, model) and 2 when a run
//! fails. Diagnostics go to standard error as one line starting with an error code.

mod args;
mod job;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use gmmsi::Error;

use args::Cli;
use output::{sha256_hex, write_atomic, Manifest, MANIFEST_NAME};

const THREADS_VAR: &str = "GMMSI_THREADS";

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn report(&self) -> (String, u8) {
        match self {
            Failure::Usage(msg) => (format!("E_USAGE: {msg}"), 1),
            Failure::Core(e) => (format!("{}: {e}", e.code()), if e.is_validation() { 1 } else { 2 }),
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .map(|l| l.trim_start_matches("error:").trim())
                .find(|l| !l.is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("E_USAGE: {first}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, &argv) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (line, code) = f.report();
            eprintln!("{}", line.replace('\n', " "));
            ExitCode::from(code)
        }
    }
}

fn configure_threads() -> Result<usize, Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(rayon::current_num_threads());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    // Fails only if a pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}

fn read_manifest(path: &Path) -> Result<Manifest, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Core(Error::Config(format!("bad manifest {}: {e}", path.display()))))
}

fn run(cli: &Cli, argv: &[String]) -> Result<String, Failure> {
    let threads = configure_threads()?;
    let cmd = &cli.command;
    let common = cmd.common();
    let recorded = match &common.manifest {
        Some(p) => {
            let m = read_manifest(p)?;
            if m.command != cmd.name() {
                return Err(Error::Config(format!("manifest records {}, not {}", m.command, cmd.name())).into());
            }
            Some(m)
        }
        None => None,
    };
    let config: PathBuf = match (&common.config, &recorded) {
        (Some(c), _) => c.clone(),
        (None, Some(m)) => m.config.clone(),
        (None, None) => return Err(Failure::Usage("missing --config".into())),
    };
    let bytes = std::fs::read(&config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
    let digest = sha256_hex(&bytes);
    if let Some(m) = &recorded {
        if common.config.is_none() && m.config_sha256 != digest {
            return Err(Error::Config(format!("{} changed since the manifest was written", config.display())).into());
        }
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", config.display())))?;
    let model = gmmsi::model::ModelFile::parse(&text)?.build()?;
    let job = job::resolve(cmd, &model, recorded.map(|m| m.job))?;

    let start = Instant::now();
    let artifacts = job.run(&model)?;
    let wall = start.elapsed().as_secs_f64();

    let out = &common.out;
    std::fs::create_dir_all(out).map_err(Error::Io)?;
    for (name, contents) in &artifacts.files {
        write_atomic(out, name, contents).map_err(Error::Io)?;
    }
    let manifest = Manifest {
        tool: "gmmsi".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.name().into(),
        argv: argv.to_vec(),
        config: std::fs::canonicalize(&config).unwrap_or(config),
        config_sha256: digest,
        job,
        threads,
        outputs: artifacts.files.iter().map(|(n, _)| n.clone()).collect(),
        wall_time_s: wall,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(out, MANIFEST_NAME, &(json + "\n")).map_err(Error::Io)?;
    Ok(artifacts.summary)
}
