//! `cril`: record demonstrations, prepare datasets, train and evaluate.
//!
//! Exit status is 0 on success, 1 for usage errors (bad flags, bad config
//! file) and 2 when a command fails while running.

mod config;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cril_core::dataset::{histogram, prepare, read_dataset, write_dataset, PrepareOptions};
use cril_core::eval::evaluate;
use cril_core::expert::ScriptedExpert;
use cril_core::model::{check_tiny_gradients, read_checkpoint, write_checkpoint};
use cril_core::record::record_episodes;
use cril_core::train::{train, TrainConfig};
use cril_record::{ServeOptions, TickMode};

use config::{Resolved, UsageError};

#[derive(Parser, Debug)]
#[command(name = "cril", version, about = "Behavioral-cloning driving toolkit")]
struct Cli {
    /// key=value file with simulator constants and an optional `seed`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct SeedArg {
    /// Overrides the config file and CRIL_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Record scripted-expert episodes to a dataset file.
    ExpertRecord {
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Serve the websocket recording endpoint.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        out: PathBuf,
        /// Milliseconds per simulator tick; defaults to the simulator step.
        #[arg(long, conflicts_with = "lockstep")]
        tick_ms: Option<u64>,
        /// Advance one tick per client input message instead of on a timer.
        #[arg(long)]
        lockstep: bool,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Run the preprocessing pipeline on a recorded dataset.
    Prepare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        discard_intro: bool,
        #[arg(long)]
        balance: bool,
        #[arg(long)]
        grayscale: bool,
        #[arg(long)]
        augment: bool,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Train a model and write a checkpoint plus loss curves.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
        /// Per-step training loss; the holdout curve goes next to it as `<stem>.holdout.csv`.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        holdout: f64,
        /// Train without the sensor branch.
        #[arg(long)]
        no_sensors: bool,
        #[arg(long)]
        no_dropout: bool,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Score a checkpoint over closed-loop episodes.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Print the label histogram of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Finite-difference check of every gradient of a small model.
    Gradcheck {
        #[arg(long, default_value_t = 4)]
        examples: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[command(flatten)]
        seed: SeedArg,
    },
}

impl Command {
    fn seed_arg(&self) -> SeedArg {
        match self {
            Command::ExpertRecord { seed, .. }
            | Command::Serve { seed, .. }
            | Command::Prepare { seed, .. }
            | Command::Train { seed, .. }
            | Command::Eval { seed, .. }
            | Command::Stats { seed, .. }
            | Command::Gradcheck { seed, .. } => *seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let env_seed = std::env::var("CRIL_SEED").ok();
    let resolved = match config::resolve(cli.config.as_deref(), cli.command.seed_arg().seed, env_seed.as_deref()) {
        Ok(r) => r,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    println!("seed: {} ({})", resolved.seed, resolved.seed_source);
    match run(cli.command, &resolved) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command, r: &Resolved) -> Result<()> {
    let seed = r.seed;
    match command {
        Command::ExpertRecord { episodes, out, .. } => {
            let ds = record_episodes(&ScriptedExpert::default(), episodes, seed, r.sim)?;
            write_dataset(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("recorded {} samples from {episodes} episodes to {}", ds.len(), out.display());
        }
        Command::Serve { port, host, out, tick_ms, lockstep, .. } => {
            let addr: SocketAddr =
                format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            let tick = if lockstep {
                TickMode::Lockstep
            } else {
                TickMode::Fixed(tick_ms.map_or(Duration::from_secs_f64(r.sim.dt), Duration::from_millis))
            };
            let opts = ServeOptions { sim: r.sim, tick, ..ServeOptions::new(out) };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                println!("listening on ws://{}", listener.local_addr()?);
                cril_record::serve(listener, opts).await
            })?;
        }
        Command::Prepare { input, out, discard_intro, balance, grayscale, augment, .. } => {
            let opts = PrepareOptions { discard_intro, balance, grayscale, augment, seed };
            let stages = opts.stages();
            println!("pipeline: {}", if stages.is_empty() { "none".into() } else { stages.join(" -> ") });
            let ds = read_dataset(&input).with_context(|| format!("reading {}", input.display()))?;
            let before = ds.len();
            let ds = prepare(ds, &opts)?;
            write_dataset(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("{before} -> {} samples written to {}", ds.len(), out.display());
        }
        Command::Train { data, epochs, batch, lr, out, curve, holdout, no_sensors, no_dropout, .. } => {
            let cfg = TrainConfig {
                lr,
                epochs,
                batch_size: batch,
                seed,
                holdout_fraction: holdout,
                sensor_branch: !no_sensors,
                dropout: !no_dropout,
                ..TrainConfig::default()
            };
            cfg.validate()?;
            let ds = read_dataset(&data).with_context(|| format!("reading {}", data.display()))?;
            println!("training on {} samples: epochs {epochs}, batch {batch}, lr {lr}", ds.len());
            let (model, losses) = train(&ds, &cfg)?;
            write_checkpoint(&model, &out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = curve {
                write_text(&path, &losses.to_text())?;
                write_text(&holdout_path(&path), &losses.holdout_text())?;
            }
            if let (Some(first), Some(last)) = (losses.initial_loss(), losses.final_loss()) {
                println!("loss {first:.4} -> {last:.4}");
            }
            if let Some(h) = losses.final_holdout() {
                println!("holdout loss {:.4}, accuracy {:.4}", h.loss, h.accuracy);
            }
        }
        Command::Eval { model, episodes, report, .. } => {
            let net = read_checkpoint(&model).with_context(|| format!("reading {}", model.display()))?;
            let result = evaluate(&net, episodes, seed, r.sim)?;
            let text = result.to_text();
            print!("{text}");
            if let Some(path) = report {
                write_text(&path, &text)?;
            }
        }
        Command::Stats { data, .. } => {
            let ds = read_dataset(&data).with_context(|| format!("reading {}", data.display()))?;
            println!("{} samples, {:?}", ds.len(), ds.mode);
            print!("{}", histogram(&ds.samples).report());
        }
        Command::Gradcheck { examples, tolerance, .. } => {
            if examples == 0 || !(tolerance > 0.0) {
                bail!("examples must be positive and tolerance above zero");
            }
            let report = check_tiny_gradients(seed, examples, tolerance);
            println!(
                "{} parameters checked, max relative error {:.3e}, max absolute error {:.3e}",
                report.checked, report.max_rel_error, report.max_abs_error
            );
            if !report.passed() {
                bail!("{} gradients exceed tolerance {tolerance}", report.failures.len());
            }
        }
    }
    Ok(())
}

fn holdout_path(curve: &Path) -> PathBuf {
    let stem = curve.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    curve.with_file_name(format!("{stem}.holdout.csv"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
