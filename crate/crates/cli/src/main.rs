//! `rebal`: command-line driver for the rebalancing pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rebal_core::agent::{curve_to_csv, load_checkpoint, Checkpoint};
use rebal_core::pipeline::{self, read_file, write_file, PreparedPaths, RunManifest, RunPaths};
use rebal_core::synth::{synthetic_trips, with_outside, TidalDesign};
use rebal_core::{Config, EpisodeLog, Error, JourneyPlan, Result};

#[derive(Parser, Debug)]
#[command(name = "rebal", version, about = "Bike-sharing rebalancing: train, simulate, plan, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the run (defaults to the first configured seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (defaults to the configured `out_dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic tidal network's station file and trip log.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Balanced background trips per hour.
        #[arg(long, default_value_t = 6)]
        background: usize,
    },
    /// Clean trips, select the busiest stations and build the demand profile.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Trip log CSV.
        #[arg(long)]
        trips: Option<PathBuf>,
        /// Station file CSV.
        #[arg(long)]
        stations: Option<PathBuf>,
        /// Representative day, YYYY-MM-DD.
        #[arg(long)]
        date: Option<String>,
        /// Number of busiest stations to keep.
        #[arg(long)]
        k: Option<usize>,
        /// Use the built-in synthetic network instead of trip files.
        #[arg(long)]
        synthetic: bool,
    },
    /// Train a Q-network and write its checkpoint and learning curve.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding the prepared stations.csv and demand.csv.
        #[arg(long)]
        prepared: Option<PathBuf>,
        /// Override the configured training steps.
        #[arg(long)]
        timesteps: Option<u64>,
    },
    /// Greedy 24-hour rollout of a checkpoint.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to roll out (defaults to the seed directory).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory holding the prepared stations.csv and demand.csv.
        #[arg(long)]
        prepared: Option<PathBuf>,
    },
    /// Turn an episode log into a scheduled journey plan.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Episode log JSONL (defaults to the seed directory).
        #[arg(long)]
        episode: Option<PathBuf>,
        /// Directory holding the prepared stations.csv and demand.csv.
        #[arg(long)]
        prepared: Option<PathBuf>,
    },
    /// Render the dispatch report for a plan.
    Report {
        #[command(flatten)]
        common: Common,
        /// Journey plan JSON (defaults to the seed directory).
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Export stations and journeys as GeoJSON.
    Map {
        #[command(flatten)]
        common: Common,
        /// Journey plan JSON (defaults to the seed directory).
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Episode log JSONL (defaults to the seed directory).
        #[arg(long)]
        episode: Option<PathBuf>,
        /// Directory holding the prepared stations.csv and demand.csv.
        #[arg(long)]
        prepared: Option<PathBuf>,
    },
    /// Prepare once, then run every configured seed and aggregate.
    RunAll {
        #[command(flatten)]
        common: Common,
        /// Worker threads for concurrent seeds.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

struct Ctx {
    cfg: Config,
    seed: u64,
}

impl Ctx {
    fn new(common: &Common, validate: bool) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(out) = &common.out_dir {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = common.seed {
            if !cfg.seeds.contains(&seed) {
                cfg.seeds = vec![seed];
            }
        }
        if validate {
            cfg.validate()?;
        }
        let seed = common.seed.unwrap_or(cfg.seeds[0]);
        Ok(Ctx { cfg, seed })
    }

    fn prepared_dir(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.cfg.out_dir.join("prepared"))
    }

    fn run_paths(&self) -> RunPaths {
        RunPaths::new(&self.cfg.out_dir, self.seed)
    }

    fn load_prepared(&self, flag: &Option<PathBuf>) -> Result<(Arc<rebal_core::StationRegistry>, Arc<rebal_core::ingest::DemandProfile>, PreparedPaths)> {
        let dir = self.prepared_dir(flag);
        let (registry, profile) = pipeline::load_prepared(&dir)?;
        Ok((Arc::new(registry), Arc::new(profile), PreparedPaths::in_dir(&dir)))
    }
}

fn finish_manifest(manifest: RunManifest, path: &Path) -> Result<()> {
    manifest.finish(path).map(|_| ())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, background } => {
            let ctx = Ctx::new(&common, false)?;
            let design = ctx.cfg.data.synthetic.clone().unwrap_or_default();
            let registry = design.registry()?;
            let profile = design.profile()?;
            let trips = synthetic_trips(&registry, &profile, ctx.cfg.data.date()?, background, ctx.seed)?;
            let out = &ctx.cfg.out_dir;
            write_file(&out.join("stations.csv"), with_outside(&registry)?.to_csv_string())?;
            write_file(&out.join("trips.csv"), rebal_core::ingest::trips_to_csv_string(&trips))?;
            println!(
                "wrote {} trips over {} stations to {}",
                trips.len(),
                registry.len() + 1,
                out.display()
            );
        }
        Command::Prepare {
            common,
            trips,
            stations,
            date,
            k,
            synthetic,
        } => {
            let mut ctx = Ctx::new(&common, false)?;
            let data = &mut ctx.cfg.data;
            if trips.is_some() || stations.is_some() {
                data.synthetic = None;
            }
            data.trips = trips.or(data.trips.take());
            data.stations = stations.or(data.stations.take());
            if let Some(d) = date {
                data.date = d;
            }
            if let Some(k) = k {
                data.top_k = k;
            }
            if synthetic {
                data.synthetic = Some(data.synthetic.take().unwrap_or_else(TidalDesign::default));
            }
            ctx.cfg.validate()?;
            let mut manifest = RunManifest::start("prepare", &ctx.cfg, None);
            for (name, path) in [("trips", &ctx.cfg.data.trips), ("stations", &ctx.cfg.data.stations)] {
                if let (Some(p), None) = (path, &ctx.cfg.data.synthetic) {
                    manifest.input(name, p)?;
                }
            }
            let prepared = pipeline::prepare(&ctx.cfg)?;
            let dir = ctx.cfg.out_dir.join("prepared");
            let paths = pipeline::write_prepared(&prepared, &dir)?;
            manifest.artifact("stations", &paths.stations)?;
            manifest.artifact("demand", &paths.demand)?;
            manifest.artifact("drops", &paths.drops)?;
            finish_manifest(manifest, &dir.join("manifest.json"))?;
            let d = prepared.drops;
            println!(
                "kept {} trips; dropped {} (malformed {}, missing coordinates {}, invalid duration {}, unknown station {})",
                prepared.trips_kept,
                d.total(),
                d.malformed,
                d.missing_coordinates,
                d.invalid_duration,
                d.unknown_station
            );
            println!(
                "registry: {} stations -> {}\ndemand profile: {}x24 -> {}",
                prepared.registry.len(),
                paths.stations.display(),
                prepared.profile.len(),
                paths.demand.display()
            );
        }
        Command::Train {
            common,
            prepared,
            timesteps,
        } => {
            let mut ctx = Ctx::new(&common, false)?;
            if let Some(t) = timesteps {
                ctx.cfg.train.total_timesteps = t;
            }
            ctx.cfg.train.validate()?;
            let (registry, profile, inputs) = ctx.load_prepared(&prepared)?;
            let paths = ctx.run_paths();
            let mut manifest = RunManifest::start("train", &ctx.cfg, Some(ctx.seed));
            manifest.input("stations", &inputs.stations)?;
            manifest.input("demand", &inputs.demand)?;
            let outcome = pipeline::train(&ctx.cfg, registry, profile, ctx.seed)?;
            write_file(&paths.checkpoint, Checkpoint::new(&outcome.network, &ctx.cfg.train, ctx.seed).to_json())?;
            write_file(&paths.curve, curve_to_csv(&outcome.curve))?;
            manifest.artifact("checkpoint", &paths.checkpoint)?;
            manifest.artifact("curve", &paths.curve)?;
            finish_manifest(manifest, &paths.dir.join("manifest_train.json"))?;
            println!(
                "trained {} steps, {} updates, {} episodes; final loss {}; checkpoint -> {}",
                ctx.cfg.train.total_timesteps,
                outcome.updates,
                outcome.curve.len(),
                outcome.final_loss.map_or("n/a".to_string(), |l| format!("{l:.6}")),
                paths.checkpoint.display()
            );
        }
        Command::Simulate {
            common,
            checkpoint,
            prepared,
        } => {
            let ctx = Ctx::new(&common, false)?;
            let (registry, profile, _) = ctx.load_prepared(&prepared)?;
            let paths = ctx.run_paths();
            let ckpt_path = checkpoint.unwrap_or_else(|| paths.checkpoint.clone());
            let ckpt = load_checkpoint(&ckpt_path)?;
            let log = pipeline::simulate(&ctx.cfg, registry, profile, &ckpt, ctx.seed)?;
            write_file(&paths.episode, log.to_jsonl())?;
            println!(
                "{} steps, total reward {:.3}; episode log -> {}",
                log.len(),
                log.total_reward(),
                paths.episode.display()
            );
        }
        Command::Plan {
            common,
            episode,
            prepared,
        } => {
            let ctx = Ctx::new(&common, false)?;
            let (registry, _, _) = ctx.load_prepared(&prepared)?;
            let paths = ctx.run_paths();
            let log = EpisodeLog::load(&episode.unwrap_or_else(|| paths.episode.clone()))?;
            let planned = pipeline::plan(&ctx.cfg, &registry, &log)?;
            write_file(&paths.plan, planned.document.to_json_pretty() + "\n")?;
            println!(
                "{} tasks -> {} journeys, {:.2} km (one round trip per task: {:.2} km); plan -> {}",
                planned.tasks.len(),
                planned.journeys.len(),
                planned.document.total_km(),
                planned.naive_km,
                paths.plan.display()
            );
        }
        Command::Report { common, plan } => {
            let ctx = Ctx::new(&common, false)?;
            let paths = ctx.run_paths();
            let doc = JourneyPlan::from_json(&read_file(&plan.unwrap_or_else(|| paths.plan.clone()))?)?;
            let report = pipeline::report(&ctx.cfg, &doc)?;
            write_file(&paths.report, &report.markdown)?;
            if let Some(reason) = &report.fallback_reason {
                eprintln!("language-model report rejected: {reason}");
            }
            println!("{:?} report -> {}", report.source, paths.report.display());
        }
        Command::Map {
            common,
            plan,
            episode,
            prepared,
        } => {
            let ctx = Ctx::new(&common, false)?;
            let (registry, _, _) = ctx.load_prepared(&prepared)?;
            let paths = ctx.run_paths();
            let doc = JourneyPlan::from_json(&read_file(&plan.unwrap_or_else(|| paths.plan.clone()))?)?;
            let log = EpisodeLog::load(&episode.unwrap_or_else(|| paths.episode.clone()))?;
            let map = pipeline::map_geojson(&registry, &log, &doc)?;
            write_file(&paths.map, pipeline::to_json_string(&map))?;
            println!(
                "{} stations, {} journeys -> {}",
                registry.len(),
                doc.trucks.len(),
                paths.map.display()
            );
        }
        Command::RunAll { common, threads } => {
            let ctx = Ctx::new(&common, true)?;
            let out = pipeline::run_all(&ctx.cfg, threads)?;
            print!("{}", out.aggregate.to_markdown());
            println!("aggregate -> {}", out.aggregate_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Validation(problems) = &e {
                for p in problems {
                    eprintln!("  {p}");
                }
            }
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
