use clap::Parser;
use ptnm_cli::commands::{
    render_checks, render_demo, render_measures, render_sweep, tensor_to_json,
};
use ptnm_cli::{cmd_build, cmd_check, cmd_demo, cmd_measure, cmd_sweep};
use ptnm_cli::{CliError, Command, Format, Result, RunConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Process tensors, Markovianity checks and non-Markovianity measures.
#[derive(Debug, Parser)]
#[command(name = "ptnm", version)]
struct Cli {
    /// Command to run; without one, the config's `commands` list runs in order.
    #[arg(value_enum)]
    command: Option<Command>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the optimizer seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `results.json` becomes `results-check.json` when several commands share it.
fn suffixed(path: &Path, command: Command) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let mut name = format!("{stem}-{}", command.name());
    if let Some(ext) = path.extension() {
        name.push('.');
        name.push_str(&ext.to_string_lossy());
    }
    path.with_file_name(name)
}

fn run_one(cfg: &RunConfig, command: Command, out: Option<&Path>) -> Result<()> {
    match command {
        Command::Build => {
            let t = cmd_build(cfg)?;
            write_output(out.or(cfg.tensor_path.as_deref()), &tensor_to_json(&t))
        }
        Command::Check => write_output(out, &render_checks(&cmd_check(cfg)?, cfg.format)),
        Command::Measure => write_output(out, &render_measures(&cmd_measure(cfg)?, cfg.format)),
        Command::Sweep => write_output(out, &render_sweep(&cmd_sweep(cfg)?, cfg.format)),
        Command::Demo => write_output(out, &render_demo(&cmd_demo(&cfg.optimizer)?)),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.optimizer.seed = seed;
    }
    if let Some(restarts) = cli.restarts {
        cfg.optimizer.restarts = restarts;
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    cfg.optimizer.validate()?;
    let out = cli.out.or_else(|| cfg.output_path.clone());
    let commands = match cli.command {
        Some(c) => vec![c],
        None if cfg.commands.is_empty() => {
            return Err(CliError::Config(
                "no command given and none in the config".into(),
            ))
        }
        None => cfg.commands.clone(),
    };
    let shared = commands.len() > 1;
    for &command in &commands {
        let path = match &out {
            Some(p) if shared && command != Command::Build => Some(suffixed(p, command)),
            Some(_) if shared => None,
            other => other.clone(),
        };
        run_one(&cfg, command, path.as_deref())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ptnm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
