mod config;
mod scenario;

use clap::{Parser, Subcommand};
use scenario::{Failure, Status};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Default output directory when neither `--out` nor the config names one.
const OUT_ENV: &str = "NULLCTL_OUT";
const OUT_DEFAULT: &str = "nullctl-out";

#[derive(Parser)]
#[command(name = "nullctl", version, about = "Null-control experiments for the singular heat equation with memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario configs (`preset:NAME` selects a shipped preset).
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
        /// Output directory; overrides the config and $NULLCTL_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of configs run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a config without running it.
    Validate { config: String },
    /// Shipped presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset's JSON.
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run { configs, out, jobs } => run_all(&configs, out.as_deref(), jobs),
        Command::Validate { config } => validate(&config),
        Command::Presets { action } => presets(action),
    };
    ExitCode::from(status.code())
}

fn presets(action: PresetAction) -> Status {
    match action {
        PresetAction::List => {
            for p in config::PRESETS {
                let desc = config::parse(p.text, p.name, PathBuf::from("."))
                    .ok()
                    .and_then(|l| l.config.description)
                    .unwrap_or_default();
                println!("{:<22} {desc}", p.name);
            }
            Status::Ok
        }
        PresetAction::Show { name } => match config::preset(&name) {
            Some(p) => {
                print!("{}", p.text);
                Status::Ok
            }
            None => {
                eprintln!("error: unknown preset '{name}'");
                Status::Malformed
            }
        },
    }
}

fn validate(arg: &str) -> Status {
    match config::load(arg).map_err(Failure::from).and_then(scenario::prepare) {
        Ok(p) => {
            for line in &p.report {
                println!("{line}");
            }
            println!("{arg}: ok ({})", p.loaded.config.scenario.name());
            Status::Ok
        }
        Err(f) => {
            eprintln!("error: {f}");
            f.status
        }
    }
}

fn output_dir(cli_out: Option<&Path>, configured: Option<&Path>, base: &Path) -> PathBuf {
    if let Some(d) = cli_out {
        return d.to_path_buf();
    }
    if let Some(d) = configured {
        return if d.is_absolute() { d.to_path_buf() } else { base.join(d) };
    }
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(OUT_DEFAULT))
}

/// Subdirectory name used when several configs share one output directory.
fn run_name(arg: &str) -> String {
    match arg.strip_prefix("preset:") {
        Some(name) => name.to_string(),
        None => Path::new(arg)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into()),
    }
}

fn run_one(arg: &str, cli_out: Option<&Path>, nested: bool) -> Status {
    let prepared = match config::load(arg).map_err(Failure::from).and_then(scenario::prepare) {
        Ok(p) => p,
        Err(f) => {
            eprintln!("error: {f}");
            return f.status;
        }
    };
    let c = &prepared.loaded.config;
    let mut dir = output_dir(cli_out, c.output.directory.as_deref(), &prepared.loaded.base_dir);
    if nested {
        dir.push(run_name(arg));
    }
    let outcome = scenario::run(&prepared);
    if let Err(e) = write_outcome(&dir, &c.output.prefix, &outcome) {
        eprintln!("error: {arg}: cannot write to {}: {e}", dir.display());
        return Status::Malformed;
    }
    match &outcome.message {
        Some(m) => eprintln!("{arg}: {m} (exit {})", outcome.status.code()),
        None => println!("{arg}: {} done, artifacts in {}", c.scenario.name(), dir.display()),
    }
    outcome.status
}

fn write_outcome(dir: &Path, prefix: &str, outcome: &scenario::Outcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{prefix}summary.json")), outcome.summary_json())?;
    for (name, contents) in &outcome.artifacts {
        std::fs::write(dir.join(format!("{prefix}{name}")), contents)?;
    }
    Ok(())
}

/// Runs configs on up to `jobs` threads; the result is the most severe status.
fn run_all(configs: &[String], cli_out: Option<&Path>, jobs: usize) -> Status {
    let nested = configs.len() > 1;
    let jobs = jobs.clamp(1, configs.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let worst = std::sync::Mutex::new(Status::Ok);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(arg) = configs.get(i) else { break };
                let s = run_one(arg, cli_out, nested);
                let mut w = worst.lock().expect("status lock");
                *w = (*w).max(s);
            });
        }
    });
    worst.into_inner().expect("status lock")
}
