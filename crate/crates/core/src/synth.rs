//! Synthetic tidal networks and trip corpora for demos and tests.

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Station, StationRegistry};
use crate::error::{Error, Result};
use crate::ingest::{DemandProfile, TripRecord};

/// A commuter network: one tidal pair drains and refills in opposite
/// directions, the other commuter stations are quiet, and a small hub is
/// topped up every hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TidalDesign {
    /// Commuter stations, at least two. Station 0 drains in the morning and
    /// station 1 fills; the evening reverses it.
    pub commuter_stations: usize,
    pub capacity: u32,
    pub target: u32,
    /// Bikes moved by the tide in each tidal hour.
    pub tide: u32,
    pub morning_hours: Vec<u32>,
    pub evening_hours: Vec<u32>,
    /// The hub is refilled to capacity every hour and drains to its target
    /// during the last hour.
    pub hub_capacity: u32,
}

impl Default for TidalDesign {
    fn default() -> Self {
        TidalDesign {
            commuter_stations: 4,
            capacity: 10,
            target: 7,
            tide: 2,
            morning_hours: vec![7, 8],
            evening_hours: vec![17, 18],
            hub_capacity: 2,
        }
    }
}

const NAMES: [&str; 12] = [
    "Harbor Terminal",
    "Market Square",
    "Elm & 3rd",
    "Riverside Park",
    "Central Depot",
    "Union Plaza",
    "Mill Street",
    "Library Green",
    "Canal Bridge",
    "Oak & 9th",
    "College Gate",
    "Museum Row",
];

fn station_name(i: usize) -> String {
    match NAMES.get(i) {
        Some(n) => n.to_string(),
        None => format!("Dock {i:03}"),
    }
}

impl TidalDesign {
    pub fn station_count(&self) -> usize {
        self.commuter_stations + 1
    }

    fn validate(&self) -> Result<()> {
        if self.commuter_stations < 2 {
            return Err(Error::Config("a tidal network needs at least two commuter stations".into()));
        }
        if self.target > self.capacity || self.hub_capacity == 0 {
            return Err(Error::Config("targets must fit within capacities".into()));
        }
        if self.morning_hours.iter().chain(&self.evening_hours).any(|&h| h >= 24) {
            return Err(Error::Config("tidal hours must lie in 0..24".into()));
        }
        Ok(())
    }

    /// Stations laid out on a ring about 1 km across; the hub sits last.
    pub fn registry(&self) -> Result<StationRegistry> {
        self.validate()?;
        let n = self.station_count();
        let stations = (0..n)
            .map(|i| {
                let angle = i as f64 / n as f64 * std::f64::consts::TAU;
                let (lat, lon) = (40.75 + 0.012 * angle.sin(), -73.98 + 0.016 * angle.cos());
                if i == self.commuter_stations {
                    Station::with_target(format!("S{i:02}"), "Hub Yard", lat, lon, self.hub_capacity, self.hub_capacity / 2)
                } else {
                    Station::with_target(format!("S{i:02}"), station_name(i), lat, lon, self.capacity, self.target)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        StationRegistry::new(stations)
    }

    pub fn profile(&self) -> Result<DemandProfile> {
        let registry = self.registry()?;
        let mut profile = DemandProfile::zeros(registry.stations().iter().map(|s| s.id.clone()).collect());
        let tide = self.tide as i32;
        for &h in &self.morning_hours {
            profile.deltas[0][h as usize] -= tide;
            profile.deltas[1][h as usize] += tide;
        }
        for &h in &self.evening_hours {
            profile.deltas[0][h as usize] += tide;
            profile.deltas[1][h as usize] -= tide;
        }
        let hub = self.commuter_stations;
        let cap = self.hub_capacity as i32;
        for h in 0..23 {
            profile.deltas[hub][h] = cap;
        }
        profile.deltas[hub][23] = -(cap - cap / 2);
        Ok(profile)
    }
}

/// Id of the off-network station that feeds the hub in synthetic corpora.
pub const OUTSIDE_ID: &str = "EXT";

fn outside() -> Result<Station> {
    Station::new(OUTSIDE_ID, "Outside Depot", 40.70, -74.02, 1)
}

/// `registry` plus the off-network station, as written to a station file
/// next to a synthetic trip corpus.
pub fn with_outside(registry: &StationRegistry) -> Result<StationRegistry> {
    let mut stations = registry.stations().to_vec();
    stations.push(outside()?);
    StationRegistry::new(stations)
}

/// Trips on `date` whose per-hour net flows reproduce `profile`, plus
/// balanced background traffic and a few rows the cleaning rules drop.
///
/// A station's outflow and inflow in the same hour are generated as trips
/// that start and end inside that hour. Flows that cannot be paired inside
/// `registry` go to or come from [`OUTSIDE_ID`].
pub fn synthetic_trips(
    registry: &StationRegistry,
    profile: &DemandProfile,
    date: NaiveDate,
    background_per_hour: usize,
    seed: u64,
) -> Result<Vec<TripRecord>> {
    profile.check_against(registry)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stations = registry.stations();
    let n = stations.len();
    let outside = outside()?;
    let mut trips = Vec::new();

    let at = |hour: u32, minute: u32| -> NaiveDateTime { date.and_time(NaiveTime::from_hms_opt(hour, minute, 0).unwrap()) };

    let push = |trips: &mut Vec<TripRecord>, rng: &mut ChaCha8Rng, from: &Station, to: &Station, hour: u32| {
        let start = rng.gen_range(0..40);
        let ride = rng.gen_range(5..19);
        trips.push(TripRecord {
            start_time: at(hour, start),
            end_time: at(hour, start + ride),
            start_station_id: from.id.clone(),
            end_station_id: to.id.clone(),
            start_lat: Some(from.lat),
            start_lon: Some(from.lon),
            end_lat: Some(to.lat),
            end_lon: Some(to.lon),
        });
    };

    for hour in 0..24u32 {
        let mut surplus: Vec<(usize, i32)> = Vec::new();
        let mut deficit: Vec<(usize, i32)> = Vec::new();
        for i in 0..n {
            let d = profile.delta(i, hour as usize);
            if d > 0 {
                surplus.push((i, d));
            } else if d < 0 {
                deficit.push((i, -d));
            }
        }
        // Pair outflows with inflows; leftovers go to or come from outside.
        let (mut si, mut di) = (0, 0);
        while si < surplus.len() || di < deficit.len() {
            match (surplus.get_mut(si), deficit.get_mut(di)) {
                (Some(s), Some(d)) => {
                    push(&mut trips, &mut rng, &stations[d.0], &stations[s.0], hour);
                    s.1 -= 1;
                    d.1 -= 1;
                }
                (Some(s), None) => {
                    push(&mut trips, &mut rng, &outside, &stations[s.0], hour);
                    s.1 -= 1;
                }
                (None, Some(d)) => {
                    push(&mut trips, &mut rng, &stations[d.0], &outside, hour);
                    d.1 -= 1;
                }
                (None, None) => unreachable!(),
            }
            if surplus.get(si).is_some_and(|s| s.1 == 0) {
                si += 1;
            }
            if deficit.get(di).is_some_and(|d| d.1 == 0) {
                di += 1;
            }
        }
        for _ in 0..background_per_hour {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            push(&mut trips, &mut rng, &stations[a], &stations[b], hour);
            push(&mut trips, &mut rng, &stations[b], &stations[a], hour);
        }
    }

    // Rows the cleaning rules remove.
    let a = &stations[0];
    let b = &stations[1 % n];
    let mut short = trips[0].clone();
    short.end_time = short.start_time + chrono::Duration::seconds(30);
    let mut nocoord = trips[0].clone();
    nocoord.start_lat = None;
    trips.push(short);
    trips.push(nocoord);
    push(&mut trips, &mut rng, a, b, 12);
    let last = trips.last_mut().expect("just pushed");
    last.end_time = last.start_time + chrono::Duration::days(2);

    trips.sort_by(|x, y| x.start_time.cmp(&y.start_time).then(x.start_station_id.cmp(&y.start_station_id)));
    Ok(trips)
}
