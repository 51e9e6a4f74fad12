//! Value types shared across the pipeline: stations, network state and the
//! flattened transfer-action space.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A docking station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    /// Number of docks, at least 1.
    pub capacity: u32,
    /// Balanced inventory level the station should hold.
    pub target: u32,
}

impl Station {
    /// Builds a station whose target is the default `capacity / 2`.
    pub fn new(id: impl Into<String>, name: impl Into<String>, lat: f64, lon: f64, capacity: u32) -> Result<Self> {
        Self::with_target(id, name, lat, lon, capacity, capacity / 2)
    }

    pub fn with_target(
        id: impl Into<String>,
        name: impl Into<String>,
        lat: f64,
        lon: f64,
        capacity: u32,
        target: u32,
    ) -> Result<Self> {
        let station = Station {
            id: id.into(),
            name: name.into(),
            lat,
            lon,
            capacity,
            target,
        };
        station.validate()?;
        Ok(station)
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity < 1 {
            return Err(Error::Input(format!("station {}: capacity must be >= 1", self.id)));
        }
        if self.target > self.capacity {
            return Err(Error::Input(format!(
                "station {}: target {} exceeds capacity {}",
                self.id, self.target, self.capacity
            )));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Input(format!(
                "station {}: coordinates ({}, {}) out of range",
                self.id, self.lat, self.lon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RegistryRow {
    id: String,
    name: String,
    lat: f64,
    lon: f64,
    capacity: u32,
    #[serde(default)]
    target: Option<u32>,
}

/// Ordered set of stations. A station's position in the registry is its
/// index in state vectors and actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRegistry {
    stations: Vec<Station>,
}

impl StationRegistry {
    pub fn new(stations: Vec<Station>) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::Input("station registry is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &stations {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Input(format!("duplicate station id {}", s.id)));
            }
        }
        Ok(StationRegistry { stations })
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn get(&self, index: usize) -> Option<&Station> {
        self.stations.get(index)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.stations.iter().map(|s| s.capacity).collect()
    }

    pub fn targets(&self) -> Vec<u32> {
        self.stations.iter().map(|s| s.target).collect()
    }

    /// Number of discrete transfer actions, `n * (n - 1)`.
    pub fn action_count(&self) -> usize {
        let n = self.len();
        n * n.saturating_sub(1)
    }

    /// Reads `id,name,lat,lon,capacity[,target]`. A missing or empty target
    /// falls back to `capacity / 2`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(&file, e))?;
        let mut stations = Vec::new();
        for (row, record) in reader.deserialize::<RegistryRow>().enumerate() {
            let record = record.map_err(|e| csv_error(&file, e))?;
            let target = record.target.unwrap_or(record.capacity / 2);
            let station = Station::with_target(record.id, record.name, record.lat, record.lon, record.capacity, target)
                .map_err(|e| Error::Parse {
                    file: file.clone(),
                    line: row as u64 + 2,
                    msg: e.to_string(),
                })?;
            stations.push(station);
        }
        Self::new(stations).map_err(|e| Error::Input(format!("{file}: {e}")))
    }

    /// Writes the registry with an explicit target column.
    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["id", "name", "lat", "lon", "capacity", "target"])
            .expect("in-memory write");
        for s in &self.stations {
            writer
                .write_record([
                    s.id.clone(),
                    s.name.clone(),
                    s.lat.to_string(),
                    s.lon.to_string(),
                    s.capacity.to_string(),
                    s.target.to_string(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

pub(crate) fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(file, source),
        kind => Error::Parse {
            file: file.to_string(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

/// Inventories per station plus the hour of day.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    pub inventories: Vec<u32>,
    pub hour: u32,
}

impl NetworkState {
    pub fn total_bikes(&self) -> u64 {
        self.inventories.iter().map(|&v| u64::from(v)).sum()
    }

    /// Checks length and per-station bounds against `registry`.
    pub fn validate(&self, registry: &StationRegistry) -> Result<()> {
        if self.inventories.len() != registry.len() {
            return Err(Error::Contract(format!(
                "state has {} stations, registry has {}",
                self.inventories.len(),
                registry.len()
            )));
        }
        if self.hour > 23 {
            return Err(Error::Contract(format!("hour {} outside 0..=23", self.hour)));
        }
        for (i, (inv, s)) in self.inventories.iter().zip(registry.stations()).enumerate() {
            if *inv > s.capacity {
                return Err(Error::Contract(format!(
                    "station {i} holds {inv} bikes but has capacity {}",
                    s.capacity
                )));
            }
        }
        Ok(())
    }
}

/// Move one bike from `source` to `dest`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub source: usize,
    pub dest: usize,
}

/// Flattens an ordered station pair into `[0, n(n-1))`, lexicographic over
/// `(source, dest)` with the diagonal skipped.
pub fn encode_action(source: usize, dest: usize, n: usize) -> Result<usize> {
    if source == dest {
        return Err(Error::Contract(format!("action source and dest are both {source}")));
    }
    if source >= n || dest >= n {
        return Err(Error::Contract(format!(
            "action ({source}, {dest}) out of range for {n} stations"
        )));
    }
    let column = if dest < source { dest } else { dest - 1 };
    Ok(source * (n - 1) + column)
}

/// Inverse of [`encode_action`].
pub fn decode_action(index: usize, n: usize) -> Result<Action> {
    let count = n * n.saturating_sub(1);
    if index >= count {
        return Err(Error::Contract(format!(
            "action index {index} out of range for {n} stations ({count} actions)"
        )));
    }
    let source = index / (n - 1);
    let column = index % (n - 1);
    let dest = if column < source { column } else { column + 1 };
    Ok(Action { source, dest })
}

/// Shortfall of station `j` below its target, clamped at zero.
pub fn need(state: &NetworkState, j: usize, registry: &StationRegistry) -> u32 {
    let target = registry.stations()[j].target;
    target.saturating_sub(state.inventories[j])
}
