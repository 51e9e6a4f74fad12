use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::domain::{csv_error, StationRegistry};
use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in kilometres between two `(lat, lon)` points in
/// degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Road-distance estimate between stations.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceProvider {
    /// Great-circle distance scaled by a circuity factor.
    Haversine { coords: Vec<(f64, f64)>, circuity: f64 },
    /// Explicit kilometres; `None` marks a missing entry.
    Matrix(Vec<Vec<Option<f64>>>),
}

#[derive(Debug, Deserialize)]
struct MatrixRow {
    from: String,
    to: String,
    km: f64,
}

impl DistanceProvider {
    pub fn haversine(registry: &StationRegistry, circuity: f64) -> Result<Self> {
        if !(circuity >= 1.0 && circuity.is_finite()) {
            return Err(Error::Config(format!("circuity factor {circuity} must be >= 1")));
        }
        Ok(DistanceProvider::Haversine {
            coords: registry.stations().iter().map(|s| (s.lat, s.lon)).collect(),
            circuity,
        })
    }

    /// Loads `from,to,km` rows keyed by station id. Pairs not listed stay
    /// missing and fail at lookup time.
    pub fn load_matrix(path: &Path, registry: &StationRegistry) -> Result<Self> {
        let file = path.display().to_string();
        let index: HashMap<&str, usize> = registry
            .stations()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let n = registry.len();
        let mut m = vec![vec![None; n]; n];
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(&file, e))?;
        for (row, rec) in reader.deserialize::<MatrixRow>().enumerate() {
            let rec = rec.map_err(|e| csv_error(&file, e))?;
            let line = row as u64 + 2;
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| Error::Parse {
                    file: file.clone(),
                    line,
                    msg: format!("unknown station id {id}"),
                })
            };
            let (i, j) = (lookup(&rec.from)?, lookup(&rec.to)?);
            if !(rec.km.is_finite() && (rec.km > 0.0 || i == j)) {
                return Err(Error::Parse {
                    file: file.clone(),
                    line,
                    msg: format!("distance {} must be positive", rec.km),
                });
            }
            m[i][j] = Some(rec.km);
        }
        Ok(DistanceProvider::Matrix(m))
    }

    pub fn len(&self) -> usize {
        match self {
            DistanceProvider::Haversine { coords, .. } => coords.len(),
            DistanceProvider::Matrix(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Kilometres from station `i` to station `j`; zero on the diagonal.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.len();
        if i >= n || j >= n {
            return Err(Error::Contract(format!("station index ({i}, {j}) out of range for {n}")));
        }
        if i == j {
            return Ok(0.0);
        }
        match self {
            DistanceProvider::Haversine { coords, circuity } => Ok(haversine_km(coords[i], coords[j]) * circuity),
            DistanceProvider::Matrix(m) => m[i][j]
                .ok_or_else(|| Error::Config(format!("distance matrix has no entry for ({i}, {j})"))),
        }
    }
}
