mod colormap;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::{collect_inputs, CliError};
use config::Config;

/// Content-adaptive high-resolution depth estimation.
///
/// Configuration layers, lowest first: built-in defaults, --config file,
/// DEPTHBOOST_<KEY> environment variables, --set overrides, dedicated flags.
#[derive(Parser)]
#[command(name = "depthboost", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct GlobalArgs {
    /// key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key (repeatable), e.g. --set merge.radius=32.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// synthetic | external:CMD (CMD uses {in} and {out}).
    #[arg(long, global = true)]
    backend: Option<String>,
    /// analytic | merge-external:CMD (CMD uses {low}, {high} and {out}).
    #[arg(long, global = true)]
    merger: Option<String>,
    #[arg(long, global = true)]
    receptive: Option<String>,
    #[arg(long, global = true)]
    x_percent: Option<String>,
    #[arg(long, global = true)]
    workers: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Fail on the first patch error instead of skipping the patch.
    #[arg(long, global = true)]
    strict: bool,
    /// Dump intermediate maps per input under this directory.
    #[arg(long, global = true)]
    debug_dir: Option<PathBuf>,
    /// -v info, -vv debug, -vvv trace.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Args)]
struct RunArgs {
    out_dir: PathBuf,
    images: Vec<PathBuf>,
    /// Generate a synthetic scene for this seed (repeatable).
    #[arg(long)]
    scene_seed: Vec<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full pipeline: double estimate at the adaptive base size plus merged patches.
    Boost(RunArgs),
    /// Double estimate only (boost without patches).
    Double(RunArgs),
    /// Context map and resolution plan, no estimation.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the reference-scale edge map.
        #[arg(long)]
        edges: bool,
    },
    /// Score predictions against ground truth from a manifest of `pred gt` lines.
    Eval { manifest: PathBuf, out_dir: PathBuf },
    /// Write synthetic scenes with their ground truth.
    Synth {
        out_dir: PathBuf,
        #[arg(long, required = true)]
        scene_seed: Vec<u64>,
    },
}

fn build_config(g: &GlobalArgs) -> Result<Config, CliError> {
    let mut cfg = Config::default();
    if let Some(path) = &g.config {
        if !path.is_file() {
            return Err(CliError::Usage(format!("config not found: {}", path.display())));
        }
        cfg.apply_file(path)?;
    }
    cfg.apply_env(|k| std::env::var(k).ok())?;
    cfg.apply_overrides(g.set.iter().map(String::as_str))?;
    let flags = [
        ("backend", &g.backend),
        ("merger", &g.merger),
        ("receptive", &g.receptive),
        ("x_percent", &g.x_percent),
        ("workers", &g.workers),
        ("seed", &g.seed),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if g.strict {
        cfg.strict = true;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = build_config(&cli.global)?;
    let debug = cli.global.debug_dir.as_deref();
    match cli.command {
        Cmd::Boost(a) => {
            let inputs = collect_inputs(&a.images, &a.scene_seed)?;
            commands::run_boost(&cfg, &a.out_dir, &inputs, debug)?;
        }
        Cmd::Double(a) => {
            cfg.patches = false;
            let inputs = collect_inputs(&a.images, &a.scene_seed)?;
            commands::run_boost(&cfg, &a.out_dir, &inputs, debug)?;
        }
        Cmd::Analyze { run, edges } => {
            let inputs = collect_inputs(&run.images, &run.scene_seed)?;
            commands::run_analyze(&cfg, &run.out_dir, &inputs, edges)?;
        }
        Cmd::Eval { manifest, out_dir } => {
            commands::run_eval(&cfg, &manifest, &out_dir)?;
        }
        Cmd::Synth { out_dir, scene_seed } => {
            commands::run_synth(&cfg, &out_dir, &scene_seed)?;
        }
    }
    Ok(())
}

fn report(kind: &str, message: &str, code: i32) -> ExitCode {
    let err = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{err}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return report("usage", e.kind().to_string().as_str(), 2);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind(), &e.to_string(), e.exit_code()),
    }
}
