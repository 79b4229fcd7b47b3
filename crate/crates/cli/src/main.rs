//! Command-line pipeline: scene synthesis, decomposition, HSV mapping,
//! training, rendering, evaluation, and point-cloud export.
//!
//! One subcommand per stage; every run resolves its configuration (file,
//! `--seed`, `--set` overrides) and writes the resolved form next to its
//! outputs, so a run can be reproduced from the snapshot alone. Exit codes:
//! 0 success, 1 usage/validation error, 2 runtime failure.

mod commands;
mod config;

use std::process::ExitCode;

const USAGE: &str = "\
thermotex — thermal TeX decomposition and HSV radiance fields

USAGE:
    thermotex <SUBCOMMAND> [FLAGS]

SUBCOMMANDS:
    synth       render a synthetic thermal dataset from a scene config
    decompose   recover temperature/texture from dataset radiance cubes
    map         map decomposed TeX images to HSV
    train       fit the HSV radiance field to a dataset
    render      render novel views from a checkpoint
    eval        score rendered views against a dataset's ground truth
    pointcloud  export density samples above a threshold as ascii PLY

FLAGS:
    --config PATH      subcommand config JSON ('ref_scene' is built in
                       for synth); defaults to the built-in defaults
    --seed N           seed override
    --out DIR          output directory (default '.')
    --threads N        rayon thread count (default: all cores)
    --set KEY=VALUE    override one config field (repeatable; JSON values)
    --help             print this text
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            if !message.is_empty() {
                eprintln!("error: {message}\n");
            }
            eprint!("{USAGE}");
            ExitCode::from(1)
        }
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; prints usage.
    Usage(String),
    /// Bad inputs or config; exit 1.
    Validation(String),
    /// The pipeline itself failed; exit 2.
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Default, Clone)]
pub struct Invocation {
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub threads: Option<usize>,
    pub overrides: Vec<(String, String)>,
}

fn run(args: &[String]) -> Result<(), CliError> {
    let Some(subcommand) = args.first() else {
        return Err(CliError::Usage(String::new()));
    };
    if subcommand == "--help" || subcommand == "-h" || subcommand == "help" {
        print!("{USAGE}");
        return Ok(());
    }

    let mut invocation = Invocation::default();
    let mut i = 1;
    while i < args.len() {
        let flag = args[i].clone();
        let value = |i: &mut usize| -> Result<String, CliError> {
            *i += 1;
            args.get(*i)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("flag {flag} expects a value")))
        };
        match args[i].as_str() {
            "--config" => invocation.config = Some(value(&mut i)?),
            "--seed" => {
                let raw = value(&mut i)?;
                invocation.seed = Some(
                    raw.parse()
                        .map_err(|_| CliError::Usage(format!("bad seed '{raw}'")))?,
                );
            }
            "--out" => invocation.out = Some(value(&mut i)?),
            "--threads" => {
                let raw = value(&mut i)?;
                invocation.threads = Some(
                    raw.parse()
                        .map_err(|_| CliError::Usage(format!("bad thread count '{raw}'")))?,
                );
            }
            "--set" => {
                let raw = value(&mut i)?;
                let Some((key, val)) = raw.split_once('=') else {
                    return Err(CliError::Usage(format!(
                        "--set expects KEY=VALUE, got '{raw}'"
                    )));
                };
                invocation
                    .overrides
                    .push((key.to_string(), val.to_string()));
            }
            "--help" | "-h" => {
                print!("{USAGE}");
                return Ok(());
            }
            other => return Err(CliError::Usage(format!("unknown flag '{other}'"))),
        }
        i += 1;
    }

    if let Some(threads) = invocation.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(CliError::runtime)?;
    }

    match subcommand.as_str() {
        "synth" => commands::synth(&invocation),
        "decompose" => commands::decompose(&invocation),
        "map" => commands::map(&invocation),
        "train" => commands::train(&invocation),
        "render" => commands::render(&invocation),
        "eval" => commands::eval(&invocation),
        "pointcloud" => commands::pointcloud(&invocation),
        other => Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    }
}
