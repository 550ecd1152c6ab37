use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use audit_cli::commands::{cmd_classify, cmd_report, cmd_run, cmd_sample, cmd_validate, parse_noise};
use audit_cli::{api, sim_api, CliError};
use audit_core::scenario::{default_scenario, Scenario};
use audit_core::sim::Simulator;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "audit", version, about = "Paired sock-puppet audit of ad targeting on a simulated short-video platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seed interests and run all collection sessions.
    Run {
        #[arg(short, long)]
        scenario: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Classify every collected video.
    Classify {
        run_dir: PathBuf,
        /// Label noise as `type=R,topic=R,seed=N`.
        #[arg(long)]
        noise: Option<String>,
    },
    /// Build the report bundle under DIR/report.
    Report { run_dir: PathBuf },
    /// Draw a stratified validation sample.
    Sample {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        per_cell: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare annotation files with the pipeline and with each other.
    Validate {
        run_dir: PathBuf,
        #[arg(required = true)]
        annotations: Vec<PathBuf>,
    },
    /// Serve the annotation API for a run directory.
    Serve {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Serve the simulated platform over HTTP.
    SimServe {
        #[arg(short, long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 8081)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write the default scenario to a file.
    InitScenario {
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn serve(router: axum::Router, host: &str, port: u16) -> Result<()> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| CliError::Usage(format!("bad listen address {host}:{port}: {e}")))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, out } => {
            let m = cmd_run(&scenario, &out)?;
            let exposures: u64 = m.totals.values().map(|t| t.exposures).sum();
            println!("{} users, {exposures} exposures, manifest {}", m.totals.len(), m.content_hash);
        }
        Command::Classify { run_dir, noise } => {
            let noise = noise.as_deref().map(parse_noise).transpose()?;
            let n = cmd_classify(&run_dir, noise)?;
            println!("classified {n} videos");
        }
        Command::Report { run_dir } => {
            let report = cmd_report(&run_dir)?;
            for row in &report.profiling_creator {
                println!(
                    "{:<16} creator {:>18} vs {:>18}  {:+.2} pp {}",
                    row.label,
                    row.result.personalization.to_string(),
                    row.result.baseline.to_string(),
                    row.result.delta_pp,
                    row.result.stars.as_str()
                );
            }
        }
        Command::Sample { run_dir, per_cell, seed } => {
            let (path, cells) = cmd_sample(&run_dir, per_cell, seed)?;
            let n: usize = cells.iter().map(|c| c.video_ids.len()).sum();
            println!("{n} videos in {} cells -> {}", cells.len(), path.display());
        }
        Command::Validate { run_dir, annotations } => {
            let v = cmd_validate(&run_dir, &annotations)?;
            for a in &v.annotators {
                println!(
                    "{}: type {} topic {}",
                    a.annotator_id, a.ad_type.rate, a.ad_topic.rate
                );
            }
            for p in &v.agreement {
                println!(
                    "{} vs {}: type {} topic {}",
                    p.first, p.second, p.ad_type.rate, p.ad_topic.rate
                );
            }
        }
        Command::Serve { run_dir, port, host } => {
            let state = api::ApiState::load(&run_dir)?;
            serve(api::router(state), &host, port)?;
        }
        Command::SimServe { scenario, port, host } => {
            let s = Scenario::load(&scenario)?;
            let sim = Arc::new(Simulator::new(s.seed, s.policy));
            serve(sim_api::router(sim), &host, port)?;
        }
        Command::InitScenario { out } => {
            std::fs::write(&out, default_scenario().to_canonical_json())
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
