use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use aaosa_core::UserId;
use aaosa_mapdemo::service::{DemoService, ServiceConfig};
use aaosa_mapdemo::snapshot::{load_policies, save_policies};
use aaosa_mapdemo::world::load_locations;
use aaosa_mapdemo::DemoConfig;

use aaosa_cli::{dump_snapshot_file, dump_url, run_scenario, Repl, RunConfig, Scenario};

const IO_FAILURE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "aaosa", version, about = "Drive the adaptive-agent map demo from a terminal")]
struct Cli {
    /// User the requests are issued as
    #[arg(long, global = true, default_value = "u1")]
    user: String,
    /// Seed for every agent's random choices
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// CSV file with columns id,kind,name,x,y,info
    #[arg(long, global = true)]
    locations: Option<PathBuf>,
    /// Policy snapshot to load at start (and to save to, for repl and serve)
    #[arg(long, global = true, env = "AAOSA_SNAPSHOT")]
    snapshot: Option<PathBuf>,
    /// Run a scenario file instead of starting the REPL
    #[arg(long)]
    script: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Interactive session (default)
    Repl,
    /// Run a scenario file and report each step
    Run {
        path: PathBuf,
        /// Write the full router trace as JSON lines
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write the final policy snapshot
        #[arg(long)]
        snapshot_out: Option<PathBuf>,
    },
    /// Print patterns and trusts from --snapshot or a running service
    Dump {
        /// Base URL of a running service, e.g. http://127.0.0.1:8080
        #[arg(long)]
        url: Option<String>,
        /// Only this agent
        #[arg(long)]
        agent: Option<String>,
    },
    /// Serve the HTTP and WebSocket API
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "AAOSA_PORT", default_value_t = 8080)]
        port: u16,
    },
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn run_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let locations = match &cli.locations {
        Some(path) => load_locations(path).with_context(|| format!("cannot load locations from {}", path.display()))?,
        None => Vec::new(),
    };
    Ok(RunConfig { seed: cli.seed, user: UserId::new(cli.user.as_str()), locations })
}

fn load_existing(demo: &mut aaosa_mapdemo::Demo, snapshot: Option<&Path>) -> anyhow::Result<()> {
    if let Some(path) = snapshot.filter(|p| p.exists()) {
        load_policies(demo.net_mut(), path).with_context(|| format!("cannot load {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: &Cli, path: &Path, trace_out: Option<&Path>, snapshot_out: Option<&Path>) -> ExitCode {
    let prepared = (|| -> anyhow::Result<_> {
        let scenario = Scenario::load(path).with_context(|| format!("scenario {}", path.display()))?;
        let cfg = run_config(cli)?;
        let (mut demo, clock) = cfg.demo()?;
        load_existing(&mut demo, cli.snapshot.as_deref())?;
        Ok((scenario, cfg, demo, clock))
    })();
    let (scenario, cfg, mut demo, clock) = match prepared {
        Ok(p) => p,
        Err(e) => return fail(IO_FAILURE, format!("{e:#}")),
    };
    let report = run_scenario(&scenario, &mut demo, &clock, &cfg.user);
    print!("{}", report.render());
    let writes = [(trace_out, &report.trace_jsonl), (snapshot_out, &report.snapshot)];
    for (target, text) in writes {
        if let Some(target) = target {
            if let Err(e) = std::fs::write(target, text) {
                return fail(IO_FAILURE, format!("cannot write {}: {e}", target.display()));
            }
        }
    }
    ExitCode::from(report.exit_code() as u8)
}

fn repl(cli: &Cli) -> anyhow::Result<()> {
    let cfg = run_config(cli)?;
    let (mut demo, clock) = cfg.demo()?;
    load_existing(&mut demo, cli.snapshot.as_deref())?;
    let mut repl = Repl::new(demo, clock, cfg.user);
    repl.prompt = std::io::stdin().is_terminal();
    repl.run(std::io::stdin().lock(), std::io::stdout().lock())?;
    if let Some(path) = &cli.snapshot {
        save_policies(repl.demo.net(), path).with_context(|| format!("cannot save {}", path.display()))?;
    }
    Ok(())
}

fn serve(cli: &Cli, host: &str, port: u16) -> anyhow::Result<()> {
    let cfg = run_config(cli)?;
    let service = DemoService::new(ServiceConfig {
        demo: DemoConfig::with_seed(cfg.seed),
        locations: cfg.locations,
        snapshot_path: cli.snapshot.clone(),
        ..ServiceConfig::default()
    })?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        aaosa_mapdemo::http::serve(listener, Arc::new(service)).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match (&cli.command, &cli.script) {
        (None, Some(script)) => run(&cli, script, None, None),
        (Some(Command::Run { path, trace_out, snapshot_out }), _) => {
            run(&cli, path, trace_out.as_deref(), snapshot_out.as_deref())
        }
        (Some(Command::Dump { url, agent }), _) => {
            let result = match (url, &cli.snapshot) {
                (Some(url), _) => dump_url(url, agent.as_deref()),
                (None, Some(path)) => match run_config(&cli) {
                    Ok(cfg) => dump_snapshot_file(path, &cfg, agent.as_deref()),
                    Err(e) => return fail(IO_FAILURE, format!("{e:#}")),
                },
                (None, None) => return fail(IO_FAILURE, "dump needs --snapshot or --url"),
            };
            match result {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e.exit_code() as u8, e),
            }
        }
        (Some(Command::Serve { host, port }), _) => match serve(&cli, host, *port) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(1, format!("{e:#}")),
        },
        (None | Some(Command::Repl), _) => match repl(&cli) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(IO_FAILURE, format!("{e:#}")),
        },
    }
}
