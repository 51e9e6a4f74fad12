//! Trip-log ingestion: cleansing, busiest-station selection and the hourly
//! net-flow profile that drives the simulator.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::domain::{csv_error, StationRegistry};
use crate::error::{Error, Result};

pub const HOURS: usize = 24;

/// One cleaned trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub start_station_id: String,
    pub end_station_id: String,
    pub start_lat: Option<f64>,
    pub start_lon: Option<f64>,
    pub end_lat: Option<f64>,
    pub end_lon: Option<f64>,
}

impl TripRecord {
    pub fn duration_secs(&self) -> i64 {
        (self.end_time - self.start_time).num_seconds()
    }
}

/// Cleansing thresholds. Durations must lie strictly inside
/// `(min_duration_secs, max_duration_secs)`.
#[derive(Debug, Clone)]
pub struct TripFilter {
    pub min_duration_secs: i64,
    pub max_duration_secs: i64,
    /// When set, trips touching any other station id are dropped.
    pub known_stations: Option<HashSet<String>>,
}

impl Default for TripFilter {
    fn default() -> Self {
        TripFilter {
            min_duration_secs: 60,
            max_duration_secs: 24 * 3600,
            known_stations: None,
        }
    }
}

impl TripFilter {
    pub fn with_known_stations(mut self, registry: &StationRegistry) -> Self {
        self.known_stations = Some(registry.stations().iter().map(|s| s.id.clone()).collect());
        self
    }
}

/// Rows dropped per cleansing rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub malformed: u64,
    pub missing_coordinates: u64,
    pub invalid_duration: u64,
    pub unknown_station: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.malformed + self.missing_coordinates + self.invalid_duration + self.unknown_station
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DropReason {
    MissingCoordinates,
    InvalidDuration,
    UnknownStation,
}

fn check(trip: &TripRecord, filter: &TripFilter) -> Option<DropReason> {
    let coords = [trip.start_lat, trip.start_lon, trip.end_lat, trip.end_lon];
    if coords.iter().any(|c| !matches!(c, Some(v) if v.is_finite())) {
        return Some(DropReason::MissingCoordinates);
    }
    let d = trip.duration_secs();
    if d <= filter.min_duration_secs || d >= filter.max_duration_secs {
        return Some(DropReason::InvalidDuration);
    }
    if trip.start_station_id.is_empty() || trip.end_station_id.is_empty() {
        return Some(DropReason::UnknownStation);
    }
    if let Some(known) = &filter.known_stations {
        if !known.contains(&trip.start_station_id) || !known.contains(&trip.end_station_id) {
            return Some(DropReason::UnknownStation);
        }
    }
    None
}

/// Applies the cleansing rules to already-parsed records.
pub fn cleanse(trips: Vec<TripRecord>, filter: &TripFilter) -> (Vec<TripRecord>, DropCounts) {
    let mut counts = DropCounts::default();
    let kept = trips
        .into_iter()
        .filter(|t| match check(t, filter) {
            None => true,
            Some(DropReason::MissingCoordinates) => {
                counts.missing_coordinates += 1;
                false
            }
            Some(DropReason::InvalidDuration) => {
                counts.invalid_duration += 1;
                false
            }
            Some(DropReason::UnknownStation) => {
                counts.unknown_station += 1;
                false
            }
        })
        .collect();
    (kept, counts)
}

const TIME_FORMATS: [&str; 2] = ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M:%S"];

fn parse_time(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim().trim_matches('"');
    TIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

fn parse_coord(raw: &str) -> std::result::Result<Option<f64>, ()> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("nan") || raw.eq_ignore_ascii_case("null") {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|_| ())
}

struct Columns {
    start: usize,
    stop: usize,
    start_id: usize,
    end_id: usize,
    start_lat: usize,
    start_lon: usize,
    end_lat: usize,
    end_lon: usize,
}

impl Columns {
    fn locate(headers: &csv::StringRecord, file: &str) -> Result<Self> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Parse {
                    file: file.to_string(),
                    line: 1,
                    msg: format!("missing column `{name}`"),
                })
        };
        Ok(Columns {
            start: find("starttime")?,
            stop: find("stoptime")?,
            start_id: find("start station id")?,
            end_id: find("end station id")?,
            start_lat: find("start station latitude")?,
            start_lon: find("start station longitude")?,
            end_lat: find("end station latitude")?,
            end_lon: find("end station longitude")?,
        })
    }

    fn parse(&self, row: &csv::StringRecord) -> Option<TripRecord> {
        let field = |i: usize| row.get(i);
        Some(TripRecord {
            start_time: parse_time(field(self.start)?)?,
            end_time: parse_time(field(self.stop)?)?,
            start_station_id: field(self.start_id)?.trim().to_string(),
            end_station_id: field(self.end_id)?.trim().to_string(),
            start_lat: parse_coord(field(self.start_lat)?).ok()?,
            start_lon: parse_coord(field(self.start_lon)?).ok()?,
            end_lat: parse_coord(field(self.end_lat)?).ok()?,
            end_lon: parse_coord(field(self.end_lon)?).ok()?,
        })
    }
}

/// Reads a trip CSV in the legacy Citi Bike schema and cleanses it.
///
/// Rows that fail to parse are counted as `malformed` and skipped.
pub fn load_trips(path: &Path, filter: &TripFilter) -> Result<(Vec<TripRecord>, DropCounts)> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(&file, e))?;
    let headers = reader.headers().map_err(|e| csv_error(&file, e))?.clone();
    let columns = Columns::locate(&headers, &file)?;

    let mut parsed = Vec::new();
    let mut malformed = 0;
    for row in reader.records() {
        match row {
            Ok(row) => match columns.parse(&row) {
                Some(trip) => parsed.push(trip),
                None => malformed += 1,
            },
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(csv_error(&file, e)),
            Err(_) => malformed += 1,
        }
    }
    let (kept, mut counts) = cleanse(parsed, filter);
    counts.malformed = malformed;
    Ok((kept, counts))
}

/// Writes trips in the same schema [`load_trips`] reads.
pub fn trips_to_csv_string(trips: &[TripRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "starttime",
        "stoptime",
        "start station id",
        "end station id",
        "start station latitude",
        "start station longitude",
        "end station latitude",
        "end station longitude",
    ])
    .expect("in-memory write");
    let coord = |c: Option<f64>| c.map(|v| v.to_string()).unwrap_or_default();
    for t in trips {
        w.write_record([
            t.start_time.format("%Y-%m-%d %H:%M:%S").to_string(),
            t.end_time.format("%Y-%m-%d %H:%M:%S").to_string(),
            t.start_station_id.clone(),
            t.end_station_id.clone(),
            coord(t.start_lat),
            coord(t.start_lon),
            coord(t.end_lat),
            coord(t.end_lon),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// The `k` station ids with the most trip endpoints (departures plus
/// arrivals), busiest first, ties broken by ascending id.
pub fn select_top_k(trips: &[TripRecord], k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in trips {
        *counts.entry(t.start_station_id.as_str()).or_default() += 1;
        *counts.entry(t.end_station_id.as_str()).or_default() += 1;
    }
    if counts.len() < k {
        return Err(Error::Input(format!(
            "requested the top {k} stations but the trips only touch {} distinct stations ({} short)",
            counts.len(),
            k - counts.len()
        )));
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(k).map(|(id, _)| id.to_string()).collect())
}

/// Per-station, per-hour net flow (arrivals minus departures) for one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub station_ids: Vec<String>,
    pub deltas: Vec<[i32; HOURS]>,
}

impl DemandProfile {
    pub fn zeros(station_ids: Vec<String>) -> Self {
        let deltas = vec![[0; HOURS]; station_ids.len()];
        DemandProfile { station_ids, deltas }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn delta(&self, station: usize, hour: usize) -> i32 {
        self.deltas[station][hour]
    }

    /// Checks the profile rows line up with `registry`.
    pub fn check_against(&self, registry: &StationRegistry) -> Result<()> {
        let ids: Vec<&str> = registry.stations().iter().map(|s| s.id.as_str()).collect();
        let mine: Vec<&str> = self.station_ids.iter().map(String::as_str).collect();
        if ids != mine {
            return Err(Error::Input(format!(
                "demand profile stations {mine:?} do not match registry {ids:?}"
            )));
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["station_id".to_string()];
        header.extend((0..HOURS).map(|h| format!("h{h}")));
        w.write_record(&header).expect("in-memory write");
        for (id, row) in self.station_ids.iter().zip(&self.deltas) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&file, e))?;
        let headers = reader.headers().map_err(|e| csv_error(&file, e))?.clone();
        let expected: Vec<String> = std::iter::once("station_id".to_string())
            .chain((0..HOURS).map(|h| format!("h{h}")))
            .collect();
        if headers.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse {
                file,
                line: 1,
                msg: "expected header station_id,h0..h23".into(),
            });
        }
        let mut profile = DemandProfile {
            station_ids: Vec::new(),
            deltas: Vec::new(),
        };
        for (i, rec) in reader.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| csv_error(&file, e))?;
            let mut row = [0i32; HOURS];
            for (h, slot) in row.iter_mut().enumerate() {
                *slot = rec
                    .get(h + 1)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        file: file.clone(),
                        line,
                        msg: format!("bad value in column h{h}"),
                    })?;
            }
            profile.station_ids.push(rec[0].trim().to_string());
            profile.deltas.push(row);
        }
        Ok(profile)
    }
}

/// Counts arrivals minus departures per selected station and hour on `date`.
///
/// Departures land in the start hour and arrivals in the end hour. A trip
/// with one unselected endpoint contributes only its selected endpoint.
pub fn build_demand_profile(trips: &[TripRecord], registry: &StationRegistry, date: NaiveDate) -> Result<DemandProfile> {
    if registry.is_empty() {
        return Err(Error::Contract("registry is empty".into()));
    }
    let index: HashMap<&str, usize> = registry
        .stations()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut profile = DemandProfile::zeros(registry.stations().iter().map(|s| s.id.clone()).collect());
    let mut events = 0u64;
    for t in trips {
        if t.start_time.date() == date {
            if let Some(&i) = index.get(t.start_station_id.as_str()) {
                profile.deltas[i][t.start_time.hour() as usize] -= 1;
                events += 1;
            }
        }
        if t.end_time.date() == date {
            if let Some(&i) = index.get(t.end_station_id.as_str()) {
                profile.deltas[i][t.end_time.hour() as usize] += 1;
                events += 1;
            }
        }
    }
    if events == 0 {
        let mut dates: BTreeMap<NaiveDate, u64> = BTreeMap::new();
        for t in trips {
            *dates.entry(t.start_time.date()).or_default() += 1;
        }
        let hint = dates
            .iter()
            .max_by_key(|(d, c)| (**c, std::cmp::Reverse(**d)))
            .map(|(d, _)| format!("; try {d}, the busiest date in the data"))
            .unwrap_or_default();
        return Err(Error::Input(format!(
            "no trips at the selected stations on {date}{hint}"
        )));
    }
    Ok(profile)
}

/// Builds the selected-station registry in ranked order from the full
/// station metadata.
pub fn select_registry(all: &StationRegistry, ids: &[String]) -> Result<StationRegistry> {
    let stations = ids
        .iter()
        .map(|id| {
            all.index_of(id)
                .map(|i| all.stations()[i].clone())
                .ok_or_else(|| Error::Input(format!("station {id} has no metadata")))
        })
        .collect::<Result<Vec<_>>>()?;
    StationRegistry::new(stations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Station;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    fn trip(a: &str, b: &str, start: &str, end: &str) -> TripRecord {
        TripRecord {
            start_time: ts(start),
            end_time: ts(end),
            start_station_id: a.into(),
            end_station_id: b.into(),
            start_lat: Some(40.7),
            start_lon: Some(-74.0),
            end_lat: Some(40.71),
            end_lon: Some(-74.01),
        }
    }

    fn registry(ids: &[&str]) -> StationRegistry {
        StationRegistry::new(
            ids.iter()
                .map(|id| Station::new(*id, format!("Station {id}"), 40.7, -74.0, 20).unwrap())
                .collect(),
        )
        .unwrap()
    }

    const HEADER: &str = "starttime,stoptime,start station id,end station id,start station latitude,start station longitude,end station latitude,end station longitude\n";

    #[test]
    fn load_applies_rules() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trips.csv");
        let body = format!(
            "{HEADER}\
2016-07-01 08:00:00,2016-07-01 08:15:00,A,B,40.7,-74.0,40.71,-74.01\n\
2016-07-01 08:00:00,2016-07-01 08:15:00,A,B,40.7,-74.0,,-74.01\n\
2016-07-01 08:00:00,2016-07-01 08:00:30,A,B,40.7,-74.0,40.71,-74.01\n\
2016-07-01 08:00:00,2016-07-02 09:00:00,A,B,40.7,-74.0,40.71,-74.01\n\
not-a-time,2016-07-01 08:15:00,A,B,40.7,-74.0,40.71,-74.01\n\
2016-07-01 08:00:00,2016-07-01 08:15:00,A,Z,40.7,-74.0,40.71,-74.01\n"
        );
        std::fs::write(&path, body).unwrap();
        let filter = TripFilter::default().with_known_stations(&registry(&["A", "B"]));
        let (kept, counts) = load_trips(&path, &filter).unwrap();
        assert_eq!(kept, vec![trip("A", "B", "2016-07-01 08:00:00", "2016-07-01 08:15:00")]);
        assert_eq!(
            counts,
            DropCounts {
                malformed: 1,
                missing_coordinates: 1,
                invalid_duration: 2,
                unknown_station: 1
            }
        );
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_trips(Path::new("/nonexistent/trips.csv"), &TripFilter::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }

    #[test]
    fn missing_column_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trips.csv");
        std::fs::write(&path, "starttime,stoptime\n").unwrap();
        assert!(matches!(load_trips(&path, &TripFilter::default()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn top_k_examples() {
        let mut trips = Vec::new();
        // A: 5 endpoints, B: 9, C: 2 (round trips count both endpoints)
        for _ in 0..2 {
            trips.push(trip("A", "B", "2016-07-01 08:00:00", "2016-07-01 08:15:00"));
        }
        trips.push(trip("A", "A", "2016-07-01 08:00:00", "2016-07-01 08:15:00"));
        trips.push(trip("B", "C", "2016-07-01 08:00:00", "2016-07-01 08:15:00"));
        trips.push(trip("C", "B", "2016-07-01 08:00:00", "2016-07-01 08:15:00"));
        for _ in 0..2 {
            trips.push(trip("B", "B", "2016-07-01 08:00:00", "2016-07-01 08:15:00"));
        }
        trips.push(trip("A", "B", "2016-07-01 08:00:00", "2016-07-01 08:15:00"));
        assert_eq!(select_top_k(&trips, 2).unwrap(), vec!["B", "A"]);

        let tie = vec![
            trip("B", "A", "2016-07-01 08:00:00", "2016-07-01 08:15:00"),
            trip("A", "B", "2016-07-01 08:00:00", "2016-07-01 08:15:00"),
        ];
        assert_eq!(select_top_k(&tie, 1).unwrap(), vec!["A"]);
        let err = select_top_k(&tie, 5).unwrap_err();
        assert!(err.to_string().contains("3 short"), "{err}");
    }

    fn synthetic_corpus(n_trips: usize, n_stations: usize, seed: u64) -> Vec<TripRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = ts("2016-07-01 00:00:00");
        (0..n_trips)
            .map(|_| {
                // Skewed station popularity so counts are not all tied.
                let pick = |rng: &mut ChaCha8Rng| {
                    let u: f64 = rng.gen();
                    format!("S{:03}", ((u * u) * n_stations as f64) as usize)
                };
                let a = pick(&mut rng);
                let b = pick(&mut rng);
                let start = base + chrono::Duration::seconds(rng.gen_range(-3600..25 * 3600));
                let end = start + chrono::Duration::seconds(rng.gen_range(120..5400));
                let mut t = trip(&a, &b, "2016-07-01 00:00:00", "2016-07-01 00:10:00");
                t.start_time = start;
                t.end_time = end;
                t
            })
            .collect()
    }

    #[test]
    fn top_k_matches_full_sort_oracle() {
        let trips = synthetic_corpus(10_000, 80, 7);
        // Oracle: count via BTreeMap, then a full sort on (-count, id).
        let mut counts: BTreeMap<String, i64> = BTreeMap::new();
        for t in &trips {
            *counts.entry(t.start_station_id.clone()).or_default() += 1;
            *counts.entry(t.end_station_id.clone()).or_default() += 1;
        }
        let mut all: Vec<(i64, String)> = counts.into_iter().map(|(id, c)| (-c, id)).collect();
        all.sort();
        let expected: Vec<String> = all.into_iter().take(30).map(|(_, id)| id).collect();
        assert_eq!(select_top_k(&trips, 30).unwrap(), expected);
    }

    #[test]
    fn profile_single_trip() {
        let reg = registry(&["A", "B"]);
        let trips = vec![trip("A", "B", "2016-07-01 08:10:00", "2016-07-01 08:25:00")];
        let date = NaiveDate::from_ymd_opt(2016, 7, 1).unwrap();
        let p = build_demand_profile(&trips, &reg, date).unwrap();
        assert_eq!(p.deltas[0][8], -1);
        assert_eq!(p.deltas[1][8], 1);
        assert_eq!(p.deltas.iter().flatten().filter(|v| **v != 0).count(), 2);

        let other = NaiveDate::from_ymd_opt(2016, 7, 2).unwrap();
        let err = build_demand_profile(&trips, &reg, other).unwrap_err();
        assert!(err.to_string().contains("2016-07-01"), "{err}");
        assert!(build_demand_profile(&[], &reg, date).is_err());
    }

    #[test]
    fn profile_spanning_hours_and_outside_stations() {
        let reg = registry(&["A", "B"]);
        let date = NaiveDate::from_ymd_opt(2016, 7, 1).unwrap();
        let trips = vec![
            trip("A", "B", "2016-07-01 08:50:00", "2016-07-01 09:10:00"),
            trip("A", "Z", "2016-07-01 10:00:00", "2016-07-01 10:20:00"),
            trip("Z", "B", "2016-07-01 23:50:00", "2016-07-02 00:20:00"),
        ];
        let p = build_demand_profile(&trips, &reg, date).unwrap();
        assert_eq!(p.deltas[0][8], -1);
        assert_eq!(p.deltas[1][9], 1);
        assert_eq!(p.deltas[0][10], -1);
        // Arrival lands on the next day and is excluded.
        assert_eq!(p.deltas[1][23], 0);
    }

    #[test]
    fn profile_matches_groupby_oracle() {
        let trips = synthetic_corpus(10_000, 40, 11);
        let date = NaiveDate::from_ymd_opt(2016, 7, 1).unwrap();
        let ids = select_top_k(&trips, 15).unwrap();
        let reg = registry(&ids.iter().map(String::as_str).collect::<Vec<_>>());
        let p = build_demand_profile(&trips, &reg, date).unwrap();

        // Oracle: group endpoint events by (date, hour) directly from timestamps.
        let selected: HashSet<&str> = ids.iter().map(String::as_str).collect();
        let mut per_hour = [0i64; HOURS];
        let mut per_cell: HashMap<(String, u32), i64> = HashMap::new();
        for t in &trips {
            let dep = t.start_time.format("%Y-%m-%d %H").to_string();
            let arr = t.end_time.format("%Y-%m-%d %H").to_string();
            if dep.starts_with("2016-07-01") && selected.contains(t.start_station_id.as_str()) {
                let h: u32 = dep[11..].parse().unwrap();
                per_hour[h as usize] -= 1;
                *per_cell.entry((t.start_station_id.clone(), h)).or_default() -= 1;
            }
            if arr.starts_with("2016-07-01") && selected.contains(t.end_station_id.as_str()) {
                let h: u32 = arr[11..].parse().unwrap();
                per_hour[h as usize] += 1;
                *per_cell.entry((t.end_station_id.clone(), h)).or_default() += 1;
            }
        }
        for h in 0..HOURS {
            let col: i64 = p.deltas.iter().map(|r| i64::from(r[h])).sum();
            assert_eq!(col, per_hour[h], "hour {h}");
        }
        for (i, id) in ids.iter().enumerate() {
            for h in 0..HOURS {
                let expect = per_cell.get(&(id.clone(), h as u32)).copied().unwrap_or(0);
                assert_eq!(i64::from(p.deltas[i][h]), expect);
            }
        }
    }

    #[test]
    fn internal_trips_sum_to_zero_per_hour() {
        let reg = registry(&["A", "B", "C"]);
        let date = NaiveDate::from_ymd_opt(2016, 7, 1).unwrap();
        let trips = vec![
            trip("A", "B", "2016-07-01 07:05:00", "2016-07-01 07:30:00"),
            trip("C", "A", "2016-07-01 07:10:00", "2016-07-01 07:40:00"),
            trip("B", "C", "2016-07-01 17:10:00", "2016-07-01 17:40:00"),
        ];
        let p = build_demand_profile(&trips, &reg, date).unwrap();
        for h in 0..HOURS {
            assert_eq!(p.deltas.iter().map(|r| r[h]).sum::<i32>(), 0);
        }
    }

    #[test]
    fn profile_csv_round_trip() {
        let mut p = DemandProfile::zeros(vec!["A".into(), "B".into()]);
        p.deltas[0][3] = -4;
        p.deltas[1][23] = 7;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demand.csv");
        std::fs::write(&path, p.to_csv_string()).unwrap();
        assert_eq!(DemandProfile::load_csv(&path).unwrap(), p);
        assert!(p.to_csv_string().starts_with("station_id,h0,h1,"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_trip() -> impl Strategy<Value = TripRecord> {
            (
                0i64..200_000,
                -100i64..100_000,
                0u8..4,
                0u8..4,
                proptest::option::weighted(0.9, -90.0f64..90.0),
            )
                .prop_map(|(start, dur, a, b, lat)| {
                    let base = ts("2016-07-01 00:00:00");
                    TripRecord {
                        start_time: base + chrono::Duration::seconds(start),
                        end_time: base + chrono::Duration::seconds(start + dur),
                        start_station_id: format!("S{a}"),
                        end_station_id: format!("S{b}"),
                        start_lat: lat,
                        start_lon: Some(-74.0),
                        end_lat: Some(40.0),
                        end_lon: Some(-74.0),
                    }
                })
        }

        proptest! {
            #[test]
            fn cleansing_is_idempotent(trips in proptest::collection::vec(arb_trip(), 0..60)) {
                let filter = TripFilter::default();
                let (once, _) = cleanse(trips, &filter);
                let (twice, counts) = cleanse(once.clone(), &filter);
                prop_assert_eq!(once, twice);
                prop_assert_eq!(counts.total(), 0);
            }
        }
    }
}
