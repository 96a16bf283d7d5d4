use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use prometheus_core::analysis::{percentage_reduction, BatchSummary, EpisodeSummary};
use prometheus_core::batch::{simulate_batch, Execution};
use prometheus_core::dataset::{self, Trajectory};
use prometheus_core::gripper::PolicyKind;
use prometheus_core::server::{run_episode, EpisodeSetup, Pipeline, ServerError};
use prometheus_core::session::{self, SessionOptions};
use prometheus_core::Config;

#[derive(Debug, Parser)]
#[command(
    name = "prometheus",
    version,
    about = "Simulated force-feedback teleoperation and dataset tools"
)]
struct Cli {
    /// Configuration file; $PROMETHEUS_CONFIG takes precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run scripted episodes and write one trajectory file per episode.
    Simulate {
        #[arg(long)]
        task: String,
        #[arg(long, default_value = "force_capped")]
        policy: String,
        #[arg(long, default_value_t = 10)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Run episodes one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Serve one live operator session over TCP.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory for episodes recorded during the session.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value = "tomato")]
        object: String,
    },
    /// Re-simulate a recorded scripted episode and compare force traces.
    Replay { file: PathBuf },
    /// Summarize recorded episodes.
    Analyze {
        /// Trajectory files or directories of them.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Second batch; reports the peak-force reduction from the first.
        #[arg(long, num_args = 1..)]
        compare: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Metric::Peak)]
        metric: Metric,
        /// Write `step mean_force_n` plot data here.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Flatten trajectories to CSV with 256-bin proprioceptive tokens.
    Export {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    /// Mean peak contact force.
    Peak,
    /// Mean force while holding.
    Hold,
}

#[derive(Debug, Serialize)]
struct SimulateSummary<'a> {
    task: &'a str,
    policy: PolicyKind,
    seed: u64,
    episodes: u64,
    files: Vec<String>,
    batch: Option<BatchSummary>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = Config::resolve(cli.config.as_deref()).context("loading configuration")?;
    match cli.command {
        Command::Simulate {
            task,
            policy,
            episodes,
            seed,
            out_dir,
            sequential,
        } => simulate(&config, &task, &policy, episodes, seed, &out_dir, sequential),
        Command::Serve {
            port,
            host,
            out_dir,
            object,
        } => serve(&config, &host, port, out_dir, object),
        Command::Replay { file } => replay(&file),
        Command::Analyze {
            files,
            compare,
            metric,
            plot_data,
        } => analyze(&files, &compare, metric, plot_data.as_deref()),
        Command::Export { files, out } => export(&files, &out),
    }
}

fn simulate(
    config: &Config,
    task: &str,
    policy: &str,
    episodes: u64,
    seed: u64,
    out_dir: &Path,
    sequential: bool,
) -> Result<()> {
    let policy: PolicyKind = policy.parse()?;
    config.object(task)?;
    let setups = (0..episodes)
        .map(|i| EpisodeSetup::from_config(config, task, policy, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for (setup, run) in setups.iter().zip(simulate_batch(&setups, exec)) {
        let run = match run {
            Ok(r) => r,
            Err(ServerError::Timeout { ticks, .. }) => {
                log::warn!("episode {} timed out after {ticks} ticks", setup.episode_index);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let name = format!("{task}_{policy}_{:04}.jsonl", setup.episode_index);
        dataset::export(&run.trajectory, out_dir.join(&name))?;
        summaries.push(EpisodeSummary::from_trajectory(&run.trajectory));
        files.push(name);
    }
    let batch = if summaries.is_empty() {
        None
    } else {
        Some(BatchSummary::from_episodes(&summaries)?)
    };
    let summary = SimulateSummary {
        task,
        policy,
        seed,
        episodes,
        files,
        batch,
    };
    let path = out_dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;

    println!("{task} {policy} seed={seed} episodes={episodes}");
    match &summary.batch {
        Some(b) => print_batch(b),
        None => println!("no episodes"),
    }
    Ok(())
}

fn print_batch(b: &BatchSummary) {
    println!(
        "episodes {}  success {:.3}  slip {:.3}  damage {:.3}  mean_peak {:.4} N  mean_hold {:.4} N",
        b.episodes, b.success_rate, b.slip_rate, b.damage_rate, b.mean_peak_force, b.mean_hold_force
    );
}

fn serve(config: &Config, host: &str, port: u16, out_dir: Option<PathBuf>, object: String) -> Result<()> {
    let pipeline = Pipeline::from_config(config)?;
    config.object(&object)?;
    let listener = session::bind(format!("{host}:{port}"))?;
    println!("listening on {}", session::endpoint(&listener)?);
    let opts = SessionOptions {
        out_dir,
        object,
        ..SessionOptions::default()
    };
    let summary = session::serve(listener, &pipeline, config, &opts)?;
    println!(
        "session ended after {} ticks, {} telemetry records ({} dropped)",
        summary.ticks, summary.telemetry_sent, summary.telemetry_dropped
    );
    for p in summary.episodes_written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn replay(file: &Path) -> Result<()> {
    let recorded = dataset::import(file)?;
    let Some(setup) = &recorded.header.setup else {
        bail!("{} carries no scripted setup to replay", file.display());
    };
    let run = run_episode(setup)?;
    let expected: Vec<f64> = recorded.steps.iter().map(|s| s.observation.force_norm).collect();
    let got: Vec<f64> = run.trajectory.steps.iter().map(|s| s.observation.force_norm).collect();
    if expected != got {
        let first = expected
            .iter()
            .zip(&got)
            .position(|(a, b)| a != b)
            .unwrap_or(expected.len().min(got.len()));
        bail!(
            "force trace differs at step {first} ({} recorded steps, {} replayed)",
            expected.len(),
            got.len()
        );
    }
    println!(
        "{}: {} steps reproduced exactly, outcome {}",
        file.display(),
        got.len(),
        run.outcome.label
    );
    Ok(())
}

fn collect_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Trajectory>> {
    collect_files(paths)?
        .iter()
        .map(|p| dataset::import(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn metric_of(b: &BatchSummary, m: Metric) -> f64 {
    match m {
        Metric::Peak => b.mean_peak_force,
        Metric::Hold => b.mean_hold_force,
    }
}

fn analyze(files: &[PathBuf], compare: &[PathBuf], metric: Metric, plot_data: Option<&Path>) -> Result<()> {
    let a = BatchSummary::from_trajectories(&load_all(files)?)?;
    println!(
        "{:<8} {:>8} {:>8} {:>8} {:>8} {:>12}",
        "batch", "episodes", "success", "slip", "damage", "metric_n"
    );
    let row = |name: &str, b: &BatchSummary| {
        println!(
            "{:<8} {:>8} {:>8.3} {:>8.3} {:>8.3} {:>12.4}",
            name,
            b.episodes,
            b.success_rate,
            b.slip_rate,
            b.damage_rate,
            metric_of(b, metric)
        )
    };
    row("A", &a);
    if !compare.is_empty() {
        let b = BatchSummary::from_trajectories(&load_all(compare)?)?;
        row("B", &b);
        let reduction = match metric {
            Metric::Peak => percentage_reduction(&a, &b)?,
            Metric::Hold => {
                if a.mean_hold_force == 0.0 {
                    bail!("baseline mean hold force is zero");
                }
                (a.mean_hold_force - b.mean_hold_force) / a.mean_hold_force
            }
        };
        println!("reduction A->B: {:.2}%", reduction * 100.0);
    }
    if let Some(path) = plot_data {
        std::fs::write(path, a.curve_data()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn export(files: &[PathBuf], out: &Path) -> Result<()> {
    let mut csv = String::from(
        "episode,step,j0,j1,j2,j3,j4,j5,gripper_pos_norm,force_norm,gripper_bin,force_bin,\
         a0,a1,a2,a3,a4,a5,a6,clamped\n",
    );
    let mut rows = 0usize;
    for t in load_all(files)? {
        for (k, s) in t.steps.iter().enumerate() {
            let o = &s.observation;
            let [gb, fb] = o.proprio_bins()?;
            let mut line = format!("{},{k}", t.header.episode_id);
            for j in o.joints {
                line.push_str(&format!(",{j}"));
            }
            line.push_str(&format!(",{},{},{},{}", o.gripper_pos_norm, o.force_norm, gb.0, fb.0));
            match &s.action {
                Some(a) => a.0.iter().for_each(|v| line.push_str(&format!(",{v}"))),
                None => line.push_str(",,,,,,,"),
            }
            line.push_str(&format!(",{}\n", s.clamped as u8));
            csv.push_str(&line);
            rows += 1;
        }
    }
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {rows} rows to {}", out.display());
    Ok(())
}
