//! File-based orchestration of the four phases, per seed and across seeds.
//!
//! Layout under `out_dir`:
//!
//! ```text
//! prepared/stations.csv, demand.csv, drops.json
//! seed_<s>/checkpoint.json, curve.csv, episode.jsonl, plan.json,
//!          report.md, map.geojson, manifest.json
//! run_<s>.json
//! aggregate.json, aggregate.md
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::agent::{self, curve_to_csv, greedy_rollout, Checkpoint, TrainOutcome};
use crate::config::Config;
use crate::domain::StationRegistry;
use crate::env::{EpisodeLog, RebalanceEnv};
use crate::error::{Error, Result};
use crate::ingest::{self, DemandProfile, DropCounts, TripFilter};
use crate::metrics::{self, Aggregate, RunResult};
use crate::planner::{self, DistanceProvider, Journey, JourneyPlan, TransferTask};
use crate::report::{self, DispatchReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- prepare

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub registry: StationRegistry,
    pub profile: DemandProfile,
    pub drops: DropCounts,
    pub trips_kept: usize,
}

/// Builds the registry and demand profile from trip files or the synthetic
/// design.
pub fn prepare(cfg: &Config) -> Result<Prepared> {
    let data = &cfg.data;
    if let Some(design) = &data.synthetic {
        return Ok(Prepared {
            registry: design.registry()?,
            profile: design.profile()?,
            drops: DropCounts::default(),
            trips_kept: 0,
        });
    }
    let (Some(trips_path), Some(stations_path)) = (&data.trips, &data.stations) else {
        return Err(Error::Config("data.trips and data.stations are required".into()));
    };
    let all = StationRegistry::load_csv(stations_path)?;
    let filter = TripFilter {
        min_duration_secs: data.min_duration_secs,
        max_duration_secs: data.max_duration_secs,
        known_stations: None,
    }
    .with_known_stations(&all);
    let (trips, drops) = ingest::load_trips(trips_path, &filter)?;
    let ids = ingest::select_top_k(&trips, data.top_k)?;
    let registry = ingest::select_registry(&all, &ids)?;
    let profile = ingest::build_demand_profile(&trips, &registry, data.date()?)?;
    Ok(Prepared {
        registry,
        profile,
        drops,
        trips_kept: trips.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedPaths {
    pub stations: PathBuf,
    pub demand: PathBuf,
    pub drops: PathBuf,
}

impl PreparedPaths {
    pub fn in_dir(dir: &Path) -> Self {
        PreparedPaths {
            stations: dir.join("stations.csv"),
            demand: dir.join("demand.csv"),
            drops: dir.join("drops.json"),
        }
    }
}

pub fn write_prepared(p: &Prepared, dir: &Path) -> Result<PreparedPaths> {
    let paths = PreparedPaths::in_dir(dir);
    write_file(&paths.stations, p.registry.to_csv_string())?;
    write_file(&paths.demand, p.profile.to_csv_string())?;
    let drops = json!({"dropped": p.drops, "dropped_total": p.drops.total(), "trips_kept": p.trips_kept});
    write_file(&paths.drops, to_json_string(&drops))?;
    Ok(paths)
}

pub fn load_prepared(dir: &Path) -> Result<(StationRegistry, DemandProfile)> {
    let paths = PreparedPaths::in_dir(dir);
    let registry = StationRegistry::load_csv(&paths.stations)?;
    let profile = DemandProfile::load_csv(&paths.demand)?;
    profile.check_against(&registry)?;
    Ok((registry, profile))
}

// ---------------------------------------------------------------- train / simulate

pub fn make_env(cfg: &Config, registry: Arc<StationRegistry>, profile: Arc<DemandProfile>) -> Result<RebalanceEnv> {
    RebalanceEnv::new(registry, profile, cfg.env.reward, cfg.env.episode_hours)
}

pub fn train(cfg: &Config, registry: Arc<StationRegistry>, profile: Arc<DemandProfile>, seed: u64) -> Result<TrainOutcome> {
    let mut env = make_env(cfg, registry, profile)?;
    agent::train(&mut env, &cfg.train, seed)
}

/// Greedy rollout from `reset(seed)` with a checkpointed network.
pub fn simulate(
    cfg: &Config,
    registry: Arc<StationRegistry>,
    profile: Arc<DemandProfile>,
    checkpoint: &Checkpoint,
    seed: u64,
) -> Result<EpisodeLog> {
    checkpoint.expect_stations(registry.len())?;
    let net = checkpoint.network()?;
    let mut env = make_env(cfg, registry, profile)?;
    greedy_rollout(&mut env, &net, seed)
}

// ---------------------------------------------------------------- plan

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub tasks: Vec<TransferTask>,
    pub journeys: Vec<Journey>,
    pub naive_km: f64,
    pub document: JourneyPlan,
}

pub fn distance_provider(cfg: &Config, registry: &StationRegistry) -> Result<DistanceProvider> {
    match &cfg.planner.distance_matrix {
        Some(path) => DistanceProvider::load_matrix(path, registry),
        None => DistanceProvider::haversine(registry, cfg.planner.circuity_factor),
    }
}

/// Extracts tasks, chains them into journeys and schedules them.
pub fn plan(cfg: &Config, registry: &StationRegistry, log: &EpisodeLog) -> Result<PlanOutput> {
    log.initial.validate(registry)?;
    let provider = distance_provider(cfg, registry)?;
    let p = &cfg.planner;
    let tasks = planner::extract_strategic_plan(log);
    let journeys = planner::build_journeys(&tasks, p.truck_capacity, &provider)?;
    let journeys = planner::schedule_journeys(&journeys, &tasks, p.truck_speed_kmh, p.load_minutes_per_stop)?;
    let naive_km = planner::naive_round_trip_km(&tasks, p.truck_capacity, &provider)?;
    let document = JourneyPlan::from_journeys(&cfg.data.date, &journeys, registry)?;
    document.validate()?;
    Ok(PlanOutput {
        tasks,
        journeys,
        naive_km,
        document,
    })
}

// ---------------------------------------------------------------- report / map

pub fn report(cfg: &Config, plan: &JourneyPlan) -> Result<DispatchReport> {
    report::generate_report(plan, cfg.report.endpoint().as_ref())
}

/// GeoJSON with one Point per station and one LineString per journey.
pub fn map_geojson(registry: &StationRegistry, log: &EpisodeLog, plan: &JourneyPlan) -> Result<Value> {
    let stations = registry.stations();
    if log.initial.inventories.len() != stations.len() || log.final_state.inventories.len() != stations.len() {
        return Err(Error::Validation(vec![format!(
            "episode log covers {} stations, registry has {}",
            log.initial.inventories.len(),
            stations.len()
        )]));
    }
    let mut features: Vec<Value> = stations
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [s.lon, s.lat]},
                "properties": {
                    "kind": "station",
                    "id": s.id,
                    "name": s.name,
                    "capacity": s.capacity,
                    "target": s.target,
                    "initial_inventory": log.initial.inventories[i],
                    "final_inventory": log.final_state.inventories[i],
                }
            })
        })
        .collect();
    let mut problems = Vec::new();
    let locate = |name: &str, at: String, problems: &mut Vec<String>| match stations.iter().find(|s| s.name == name) {
        Some(s) => Some(json!([s.lon, s.lat])),
        None => {
            problems.push(format!("{at}: station `{name}` is not in the registry"));
            None
        }
    };
    for (t, truck) in plan.trucks.iter().enumerate() {
        let mut coords = Vec::new();
        coords.extend(locate(&truck.pickup.station, format!("$.trucks[{t}].pickup.station"), &mut problems));
        for (l, leg) in truck.legs.iter().enumerate() {
            coords.extend(locate(&leg.station, format!("$.trucks[{t}].legs[{l}].station"), &mut problems));
        }
        let stops: Vec<&str> = std::iter::once(truck.pickup.station.as_str())
            .chain(truck.legs.iter().map(|l| l.station.as_str()))
            .collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {
                "kind": "journey",
                "truck_id": truck.truck_id,
                "dispatch_time": truck.dispatch_time(),
                "load": truck.pickup.load,
                "total_km": truck.total_km,
                "stops": stops,
                "tight_schedule": truck.tight_schedule,
            }
        }));
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

// ---------------------------------------------------------------- metrics

pub fn run_result(
    seed: u64,
    registry: &StationRegistry,
    log: &EpisodeLog,
    plan: &PlanOutput,
    train: Option<&TrainOutcome>,
) -> Result<RunResult> {
    let targets = registry.targets();
    let initial = metrics::imbalance(&log.initial, &targets)?;
    let final_ = metrics::imbalance(&log.final_state, &targets)?;
    let reduction = metrics::imbalance_reduction(initial, final_);
    let utilization = metrics::truck_utilization(&plan.journeys);
    Ok(RunResult {
        seed,
        imbalance_initial: initial,
        imbalance_final: final_,
        imbalance_reduction: reduction.value,
        imbalance_reduction_degenerate: reduction.degenerate,
        total_km: plan.document.total_km(),
        naive_km: (plan.naive_km * 100.0).round() / 100.0,
        trucks: plan.journeys.len(),
        bikes_moved: plan.document.total_bikes(),
        truck_utilization: utilization.value,
        truck_utilization_degenerate: utilization.degenerate,
        total_reward: log.total_reward(),
        final_loss: train.and_then(|t| t.final_loss),
        task_hours: metrics::task_hour_density(&plan.tasks),
        learning_curve: train.map(|t| t.curve.clone()).unwrap_or_default(),
    })
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl FileHash {
    pub fn of(name: &str, path: &Path) -> Result<Self> {
        Ok(FileHash {
            name: name.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Reproducibility record for one command or seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Config,
    pub inputs: Vec<FileHash>,
    pub artifacts: Vec<FileHash>,
    pub started_at: String,
    pub finished_at: String,
    pub complete: bool,
}

impl RunManifest {
    pub fn start(command: &str, cfg: &Config, seed: Option<u64>) -> Self {
        RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            seed,
            config: cfg.clone(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
            complete: false,
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileHash::of(name, path)?);
        Ok(())
    }

    pub fn artifact(&mut self, name: &str, path: &Path) -> Result<()> {
        self.artifacts.push(FileHash::of(name, path)?);
        Ok(())
    }

    pub fn finish(mut self, path: &Path) -> Result<Self> {
        self.finished_at = chrono::Utc::now().to_rfc3339();
        self.complete = true;
        write_file(path, to_json_string(&self))?;
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_file(path)?)?)
    }

    /// Every listed file exists and still has its recorded hash.
    pub fn verify(&self) -> Result<()> {
        let mut problems = Vec::new();
        for f in self.inputs.iter().chain(&self.artifacts) {
            match sha256_file(&f.path) {
                Ok(h) if h == f.sha256 => {}
                Ok(_) => problems.push(format!("{}: hash changed", f.path.display())),
                Err(e) => problems.push(e.to_string()),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

// ---------------------------------------------------------------- full runs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPaths {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub curve: PathBuf,
    pub episode: PathBuf,
    pub plan: PathBuf,
    pub report: PathBuf,
    pub map: PathBuf,
    pub manifest: PathBuf,
    pub result: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path, seed: u64) -> Self {
        let dir = out_dir.join(format!("seed_{seed}"));
        RunPaths {
            checkpoint: dir.join("checkpoint.json"),
            curve: dir.join("curve.csv"),
            episode: dir.join("episode.jsonl"),
            plan: dir.join("plan.json"),
            report: dir.join("report.md"),
            map: dir.join("map.geojson"),
            manifest: dir.join("manifest.json"),
            result: out_dir.join(format!("run_{seed}.json")),
            dir,
        }
    }
}

/// Train, simulate, plan, report, map and score one seed.
pub fn run_seed(
    cfg: &Config,
    registry: Arc<StationRegistry>,
    profile: Arc<DemandProfile>,
    prepared: &PreparedPaths,
    seed: u64,
) -> Result<RunResult> {
    let paths = RunPaths::new(&cfg.out_dir, seed);
    let mut manifest = RunManifest::start("run", cfg, Some(seed));
    manifest.input("stations", &prepared.stations)?;
    manifest.input("demand", &prepared.demand)?;

    let outcome = train(cfg, registry.clone(), profile.clone(), seed)?;
    let checkpoint = Checkpoint::new(&outcome.network, &cfg.train, seed);
    write_file(&paths.checkpoint, checkpoint.to_json())?;
    write_file(&paths.curve, curve_to_csv(&outcome.curve))?;

    let checkpoint = agent::load_checkpoint(&paths.checkpoint)?;
    let log = simulate(cfg, registry.clone(), profile, &checkpoint, seed)?;
    write_file(&paths.episode, log.to_jsonl())?;

    let planned = plan(cfg, &registry, &log)?;
    write_file(&paths.plan, planned.document.to_json_pretty() + "\n")?;
    let dispatch = report(cfg, &planned.document)?;
    write_file(&paths.report, &dispatch.markdown)?;
    let map = map_geojson(&registry, &log, &planned.document)?;
    write_file(&paths.map, to_json_string(&map))?;

    let result = run_result(seed, &registry, &log, &planned, Some(&outcome))?;
    write_file(&paths.result, to_json_string(&result))?;

    for (name, path) in [
        ("checkpoint", &paths.checkpoint),
        ("curve", &paths.curve),
        ("episode", &paths.episode),
        ("plan", &paths.plan),
        ("report", &paths.report),
        ("map", &paths.map),
        ("metrics", &paths.result),
    ] {
        manifest.artifact(name, path)?;
    }
    manifest.finish(&paths.manifest)?;
    log::info!(
        "seed {seed}: imbalance {} -> {} ({:.2}%), {} trucks, {:.2} km",
        result.imbalance_initial,
        result.imbalance_final,
        result.imbalance_reduction,
        result.trucks,
        result.total_km
    );
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunAllOutput {
    pub results: Vec<RunResult>,
    pub aggregate: Aggregate,
    pub aggregate_path: PathBuf,
}

/// Prepares once, then runs every seed; with `threads > 1` seeds run
/// concurrently. Outputs do not depend on the thread count. A failing seed
/// fails the aggregate but completed runs stay on disk.
pub fn run_all(cfg: &Config, threads: usize) -> Result<RunAllOutput> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let prepared_paths = write_prepared(&prepared, &cfg.out_dir.join("prepared"))?;
    let registry = Arc::new(prepared.registry);
    let profile = Arc::new(prepared.profile);

    let threads = threads.clamp(1, cfg.seeds.len());
    let mut outcomes: Vec<Option<Result<RunResult>>> = (0..cfg.seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (worker, chunk) in outcomes.chunks_mut(cfg.seeds.len().div_ceil(threads)).enumerate() {
            let (registry, profile, prepared_paths) = (&registry, &profile, &prepared_paths);
            let first = worker * cfg.seeds.len().div_ceil(threads);
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let seed = cfg.seeds[first + k];
                    *slot = Some(run_seed(cfg, registry.clone(), profile.clone(), prepared_paths, seed));
                }
            });
        }
    });

    let mut results = Vec::with_capacity(cfg.seeds.len());
    for (seed, outcome) in cfg.seeds.iter().zip(outcomes) {
        match outcome.expect("every seed ran") {
            Ok(r) => results.push(r),
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                return Err(e);
            }
        }
    }
    let aggregate = metrics::aggregate_runs(&results)?;
    let aggregate_path = cfg.out_dir.join("aggregate.json");
    write_file(&aggregate_path, to_json_string(&aggregate))?;
    write_file(&cfg.out_dir.join("aggregate.md"), aggregate.to_markdown())?;
    Ok(RunAllOutput {
        results,
        aggregate,
        aggregate_path,
    })
}
