//! `disagg` — privacy-preserving disaggregation of aggregate allocations.
//!
//! Exit codes: 0 every embedded check passed, 1 a check failed,
//! 2 usage or runtime error. All commands are deterministic given
//! `--seed`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use disagg_cli::{
    cmd_microgrid, cmd_oracle_check, cmd_privacy, cmd_run, cmd_spectral, cmd_toy, CmdError,
};
use disagg_core::ProtocolParams;

#[derive(Parser)]
#[command(
    name = "disagg",
    version,
    about = "Split aggregate allocations across agents without exposing their private constraints"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Gap below which an allocation counts as disaggregated.
    #[arg(long, global = true, default_value_t = 0.01)]
    eps_dis: f64,

    /// Initial per-sweep movement threshold for the inner loop.
    #[arg(long, global = true, default_value_t = 0.1)]
    eps_cvg: f64,

    /// Multiplier-threshold constant used when selecting cut periods.
    #[arg(long, global = true, default_value_t = 10.0)]
    threshold_b: f64,

    /// Base seed. Defaults per command: spectral 6, microgrid 1000,
    /// everything else 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Emit the machine-readable JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads for campaign commands. Results do not depend on
    /// the job count.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reproduce the built-in 3-agent reference run with both cut
    /// families and diff it against the expected trajectory.
    /// (Tolerances are pinned here; --eps-dis/--eps-cvg are ignored.)
    Toy,
    /// Disaggregate one instance file (JSON) and audit the wire traffic.
    Run {
        /// Path to the instance JSON.
        instance: PathBuf,
    },
    /// Seeded campaign of generation-scheduling instances; CSV report.
    Microgrid {
        #[arg(long, default_value_t = 16)]
        n_agents: usize,
        /// Scheduling horizon (at most 16).
        #[arg(long, default_value_t = 6)]
        horizon: usize,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Worst-case smallest positive coupling eigenvalue per horizon
    /// versus the certified lower bound; CSV report.
    Spectral {
        #[arg(long, default_value_t = 6)]
        n_agents: usize,
        /// Comma-separated horizons to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 6, 8, 12])]
        horizons: Vec<usize>,
        /// Random configurations per horizon (default: 100 per period).
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Transcript permutation invariance plus structural audits.
    Privacy {
        #[arg(long, default_value_t = 4)]
        n_agents: usize,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
    },
    /// Cross-check the exhaustive subset oracle against the projection
    /// gap on random small instances.
    OracleCheck {
        /// Decisive samples to collect.
        #[arg(long, default_value_t = 50)]
        checks: usize,
    },
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    if !(cli.eps_dis > 0.0 && cli.eps_cvg > 0.0 && cli.threshold_b > 0.0) {
        eprintln!("error: --eps-dis, --eps-cvg, and --threshold-b must be positive");
        return 2;
    }
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return 2;
    }
    let seed = cli.seed.unwrap_or(match cli.cmd {
        Cmd::Spectral { .. } => 6,
        Cmd::Microgrid { .. } => 1000,
        _ => 0,
    });
    let params = ProtocolParams {
        eps_cvg0: cli.eps_cvg,
        eps_dis: cli.eps_dis,
        threshold_b: cli.threshold_b,
        seed,
        ..ProtocolParams::default()
    };

    let outcome: Result<(String, String, bool), CmdError> = match &cli.cmd {
        Cmd::Toy => cmd_toy(cli.threshold_b, seed).map(|r| {
            (
                r.render(),
                serde_json::to_string_pretty(&r).expect("report serializes"),
                r.pass(),
            )
        }),
        Cmd::Run { instance } => cmd_run(instance, &params).map(|r| {
            (
                r.render(),
                serde_json::to_string_pretty(&r).expect("report serializes"),
                r.pass(),
            )
        }),
        Cmd::Microgrid {
            n_agents,
            horizon,
            instances,
        } => cmd_microgrid(*n_agents, *horizon, *instances, seed, &params, cli.jobs).map(|r| {
            (
                r.render(),
                serde_json::to_string_pretty(&r).expect("report serializes"),
                r.pass(),
            )
        }),
        Cmd::Spectral {
            n_agents,
            horizons,
            draws,
        } => cmd_spectral(*n_agents, horizons, *draws, seed).map(|r| {
            (
                r.render(),
                serde_json::to_string_pretty(&r).expect("report serializes"),
                r.pass(),
            )
        }),
        Cmd::Privacy { n_agents, horizon } => cmd_privacy(*n_agents, *horizon, seed, &params)
            .map(|r| {
                (
                    r.render(),
                    serde_json::to_string_pretty(&r).expect("report serializes"),
                    r.pass(),
                )
            }),
        Cmd::OracleCheck { checks } => cmd_oracle_check(*checks, seed, cli.jobs).map(|r| {
            (
                r.render(),
                serde_json::to_string_pretty(&r).expect("report serializes"),
                r.pass(),
            )
        }),
    };

    match outcome {
        Ok((text, json, pass)) => {
            let body = if cli.json { json } else { text };
            if let Some(path) = &cli.out {
                if let Err(e) = std::fs::write(path, &body) {
                    eprintln!("error: write {}: {e}", path.display());
                    return 2;
                }
                eprintln!("wrote {}", path.display());
            } else {
                print!("{body}");
                if !body.ends_with('\n') {
                    println!();
                }
            }
            if pass {
                0
            } else {
                eprintln!("one or more checks failed");
                1
            }
        }
        Err(CmdError::Check(msg)) => {
            eprintln!("check failed: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
