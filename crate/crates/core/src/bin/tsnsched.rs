use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsnsched::harness::{self, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "tsnsched", version, about = "TSN gate scheduling and learned flow admission")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the static flow set, write schedule, GCLs and verifier report.
    SolveStatic(Common),
    /// Simulate a GCL set and dispatch plan (or the solved static set).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gcl: Option<PathBuf>,
        #[arg(long)]
        dispatch: Option<PathBuf>,
        #[arg(long)]
        trace: bool,
    },
    /// Train the TD3 admission agent.
    Train(Common),
    /// Run one greedy epoch with a trained checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train the single-critic DDPG baseline.
    BaselineDdpg(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    mix: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    arrival_seed: Option<u64>,
    #[arg(long)]
    omega: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    link_rate_bps: Option<u64>,
    #[arg(long)]
    guard_band_ns: Option<i64>,
    #[arg(long)]
    eval_hyperperiods: Option<usize>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write decisions.csv, one row per offered flow (train only).
    #[arg(long)]
    decision_log: bool,
    /// Run this many seeds in parallel (train and baseline only).
    #[arg(long, default_value_t = 1)]
    parallel_seeds: usize,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(
                if let Some(v) = &self.$f { cfg.$g = v.clone().into(); }
            )*};
        }
        set!(topology => topology, flows => flows, mix => mix, seed => seed,
             arrival_seed => arrival_seed, omega => omega, epochs => epochs,
             link_rate_bps => link_rate_bps, guard_band_ns => guard_band_ns,
             eval_hyperperiods => eval_hyperperiods, warmup_steps => warmup_steps,
             checkpoint_every => checkpoint_every, out => output_dir);
        cfg.decision_log |= self.decision_log;
        Ok(cfg)
    }
}

fn train(common: &Common, ddpg: bool) -> Result<(), HarnessError> {
    let cfg = common.resolve()?;
    let results = if common.parallel_seeds > 1 {
        harness::run_parallel_seeds(&cfg, common.parallel_seeds, |c| harness::cmd_train(c, ddpg))
    } else {
        vec![harness::cmd_train(&cfg, ddpg)]
    };
    for r in results {
        let out = r?;
        let last = out.records.last().expect("at least one epoch");
        println!(
            "{}: final admission rate {:.3}",
            out.csv_path.display(),
            last.stats.admission_rate
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::SolveStatic(c) => {
            let rep = harness::cmd_solve_static(&c.resolve()?)?;
            println!(
                "objective {} beta {} violations {}",
                rep.assignment.objective, rep.beta, rep.violations
            );
        }
        Command::Simulate {
            common,
            gcl,
            dispatch,
            trace,
        } => {
            let m = harness::cmd_simulate(&common.resolve()?, gcl.as_deref(), dispatch.as_deref(), trace)?;
            for (id, f) in &m.flows {
                println!(
                    "{id}: delivered {} dropped {} mean latency {:.1} ns jitter {:.1} ns",
                    f.delivered, f.dropped, f.mean_latency, f.jitter_std
                );
            }
        }
        Command::Train(c) => train(&c, false)?,
        Command::BaselineDdpg(c) => train(&c, true)?,
        Command::Evaluate { common, checkpoint } => {
            let rep = harness::cmd_evaluate(&common.resolve()?, &checkpoint)?;
            println!(
                "admitted {}/{} ({:.3})",
                rep.stats.admitted, rep.stats.requested, rep.stats.admission_rate
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
