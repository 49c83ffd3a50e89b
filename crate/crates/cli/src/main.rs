use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asddpg_core::experiment::{self, ExperimentManifest};
use asddpg_core::WorldSpec;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asddpg", version, about = "Train and analyse controller-assisted DDPG navigation agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every run of a manifest (or a built-in preset).
    Run {
        /// Manifest TOML file.
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        manifest: Option<PathBuf>,
        /// Built-in manifest: fig4, fig5-6, fig8 or smoke.
        #[arg(long)]
        preset: Option<String>,
        /// Write here instead of the manifest's output_dir.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Train this many (run, seed) pairs at once.
        #[arg(long, short, default_value_t = 1, env = "ASDDPG_JOBS")]
        jobs: usize,
    },
    /// Print a built-in manifest as TOML.
    Preset { name: String },
    /// Print a built-in world (empty, simple, complex) as TOML.
    World { name: String },
    /// Smooth learning curves and tabulate outcomes for finished runs.
    Summarize {
        /// Experiment output directory or a single run directory.
        dir: PathBuf,
        /// Moving-average window, in episodes.
        #[arg(long, default_value_t = 100)]
        window: usize,
    },
    /// Turn logged trajectories into switch-tagged polylines.
    Replay {
        dir: PathBuf,
        /// World name or TOML path; must match the world the runs used.
        #[arg(long)]
        world: String,
    },
    /// Evaluate a saved policy without exploration or controller help.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value = "empty")]
        world: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            manifest,
            preset,
            output,
            jobs,
        } => {
            let m = match (&manifest, &preset) {
                (Some(path), _) => ExperimentManifest::load(path)?,
                (None, Some(name)) => {
                    experiment::preset(name).with_context(|| format!("unknown preset `{name}`"))?
                }
                (None, None) => bail!("give a manifest path or --preset"),
            };
            let root = output.unwrap_or_else(|| m.output_root());
            eprintln!("training {} (run, seed) pairs into {}", m.job_count(), root.display());
            let index = experiment::run_manifest_in(&m, &root, jobs.max(1))?;
            println!("{:<24} {:>5} {:>8} {:>8} {:>7} {:>7}", "run", "seed", "episodes", "steps", "reach", "metric");
            let mut failed = 0;
            for e in &index.entries {
                match &e.summary {
                    Some(s) => println!(
                        "{:<24} {:>5} {:>8} {:>8} {:>7} {:>7}",
                        e.run,
                        e.seed,
                        s.episodes,
                        s.total_steps,
                        opt(s.final_reach_rate),
                        opt(s.final_eval_metric)
                    ),
                    None => {
                        failed += 1;
                        println!("{:<24} {:>5} FAILED: {}", e.run, e.seed, e.error.as_deref().unwrap_or("unknown"));
                    }
                }
            }
            if failed > 0 {
                eprintln!("{failed} of {} runs failed", index.entries.len());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Preset { name } => {
            let m = experiment::preset(&name).with_context(|| {
                format!("unknown preset `{name}` (available: {})", experiment::PRESETS.join(", "))
            })?;
            print!("{}", m.to_toml());
        }
        Command::World { name } => {
            let w = WorldSpec::preset(&name).with_context(|| format!("unknown world `{name}`"))?;
            print!("{}", w.to_toml());
        }
        Command::Summarize { dir, window } => {
            let rows = experiment::summarize(&dir, window)?;
            println!(
                "{:<24} {:>5} {:>8} {:>8} {:>7} {:>7} {:>7} {:>10}",
                "run", "seed", "episodes", "steps", "reach", "metric", "usage", "steps@80%"
            );
            for r in rows {
                println!(
                    "{:<24} {:>5} {:>8} {:>8} {:>7} {:>7} {:>7.3} {:>10}",
                    r.run,
                    r.seed,
                    r.episodes,
                    r.steps,
                    opt(r.final_reach_rate),
                    opt(r.final_eval_metric),
                    r.final_usage_ratio,
                    r.steps_to_sustained_80.map_or_else(|| "-".into(), |s| s.to_string())
                );
            }
        }
        Command::Replay { dir, world } => {
            let world = WorldSpec::resolve(&world)?;
            for path in experiment::replay_trajectories(&dir, &world)? {
                println!("{}", path.display());
            }
        }
        Command::Eval {
            checkpoint,
            episodes,
            world,
            seed,
        } => {
            let world = WorldSpec::resolve(&world)?;
            let r = experiment::eval_checkpoint(&checkpoint, &world, episodes, seed)?;
            println!("episodes     {episodes}");
            println!("mean metric  {:.4}", r.mean_metric);
            println!("reach rate   {:.3}", r.reach_rate);
            println!("crash rate   {:.3}", r.crash_rate);
            println!("timeout rate {:.3}", r.timeout_rate);
        }
    }
    Ok(ExitCode::SUCCESS)
}
