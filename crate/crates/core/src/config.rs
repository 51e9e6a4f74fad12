//! TOML run configuration.
//!
//! ```toml
//! seeds = [1, 2, 3]
//! out_dir = "runs"
//!
//! [data]
//! trips = "trips.csv"          # or omit both files and set [data.synthetic]
//! stations = "stations.csv"
//! date = "2016-07-01"
//! top_k = 30
//!
//! [train]
//! total_timesteps = 100000
//!
//! [env]
//! episode_hours = 24
//!
//! [planner]
//! truck_capacity = 20
//!
//! [report]
//! use_llm = false
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agent::TrainConfig;
use crate::env::RewardConfig;
use crate::error::{Error, Result};
use crate::report::EndpointConfig;
use crate::synth::TidalDesign;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub trips: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    /// Used instead of trip files when set.
    pub synthetic: Option<TidalDesign>,
    pub date: String,
    pub top_k: usize,
    pub min_duration_secs: i64,
    pub max_duration_secs: i64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            trips: None,
            stations: None,
            synthetic: None,
            date: "2016-07-01".into(),
            top_k: 30,
            min_duration_secs: 60,
            max_duration_secs: 86_400,
        }
    }
}

impl DataConfig {
    pub fn date(&self) -> Result<chrono::NaiveDate> {
        chrono::NaiveDate::parse_from_str(&self.date, "%Y-%m-%d")
            .map_err(|_| Error::Config(format!("data.date `{}` is not YYYY-MM-DD", self.date)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub episode_hours: u32,
    pub reward: RewardConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            episode_hours: 24,
            reward: RewardConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub truck_capacity: u32,
    pub truck_speed_kmh: f64,
    pub load_minutes_per_stop: u32,
    pub circuity_factor: f64,
    /// Optional `from,to,km` file replacing great-circle distances.
    pub distance_matrix: Option<PathBuf>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            truck_capacity: 20,
            truck_speed_kmh: 20.0,
            load_minutes_per_stop: 5,
            circuity_factor: 1.3,
            distance_matrix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Try the endpoint named by the `SMARTFLOW_LLM_*` variables.
    pub use_llm: bool,
    pub timeout_secs: u64,
    pub max_tokens: u32,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            use_llm: true,
            timeout_secs: 30,
            max_tokens: 2048,
        }
    }
}

impl ReportConfig {
    pub fn endpoint(&self) -> Option<EndpointConfig> {
        if !self.use_llm {
            return None;
        }
        let mut e = EndpointConfig::from_env()?;
        e.timeout = Duration::from_secs(self.timeout_secs);
        e.max_tokens = self.max_tokens;
        Some(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub planner: PlannerConfig,
    pub report: ReportConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seeds: vec![1, 2, 3],
            out_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            env: EnvConfig::default(),
            planner: PlannerConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.data.trips, &mut self.data.stations, &mut self.planner.distance_matrix]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.out_dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.data.date()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.env.episode_hours == 0 {
            return Err(Error::Config("env.episode_hours must be at least 1".into()));
        }
        let p = &self.planner;
        if p.truck_capacity == 0 {
            return Err(Error::Config("planner.truck_capacity must be at least 1".into()));
        }
        if !(p.truck_speed_kmh > 0.0 && p.truck_speed_kmh.is_finite()) {
            return Err(Error::Config("planner.truck_speed_kmh must be positive".into()));
        }
        if !(p.circuity_factor >= 1.0 && p.circuity_factor.is_finite()) {
            return Err(Error::Config("planner.circuity_factor must be >= 1".into()));
        }
        let d = &self.data;
        if d.synthetic.is_none() && (d.trips.is_none() || d.stations.is_none()) {
            return Err(Error::Config(
                "set data.trips and data.stations, or a [data.synthetic] network".into(),
            ));
        }
        if d.top_k == 0 {
            return Err(Error::Config("data.top_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
