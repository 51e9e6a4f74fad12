//! Tactical planning: strategic transfers to scheduled truck journeys.

pub mod distance;
mod document;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use distance::{haversine_km, DistanceProvider};
pub use document::{format_clock, parse_clock, JourneyPlan, LegDoc, PickupDoc, TruckPlan};

use crate::env::EpisodeLog;
use crate::error::{Error, Result};

/// A strategically required bike move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferTask {
    pub source: usize,
    pub dest: usize,
    pub quantity: u32,
    /// Hour at which the need was identified.
    pub need_hour: u32,
}

/// One delivery stop. Times are minutes after midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub station: usize,
    pub drop: u32,
    /// Kilometres from the previous stop (the pickup for the first leg).
    pub km: f64,
    /// When service at the previous stop starts: loading at the pickup for
    /// the first leg, unloading at the prior leg otherwise.
    pub dispatch_min: i64,
    pub arrival_min: i64,
    pub deadline_min: i64,
}

/// A single truck run: load at one surplus station, then drop at deficit
/// stations in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Journey {
    pub truck_id: usize,
    pub pickup: usize,
    pub load: u32,
    pub legs: Vec<Leg>,
    pub total_km: f64,
    pub tight_schedule: bool,
}

impl Journey {
    pub fn delivered(&self) -> u32 {
        self.legs.iter().map(|l| l.drop).sum()
    }

    pub fn earliest_deadline(&self) -> i64 {
        self.legs.iter().map(|l| l.deadline_min).min().unwrap_or(i64::MAX)
    }

    pub fn dispatch_min(&self) -> i64 {
        self.legs.first().map(|l| l.dispatch_min).unwrap_or(0)
    }
}

/// Tasks from the positive-reward steps of an episode. Consecutive positive
/// steps with the same `(source, dest)` merge into one task that keeps the
/// earliest hour.
pub fn extract_strategic_plan(log: &EpisodeLog) -> Vec<TransferTask> {
    let mut tasks: Vec<TransferTask> = Vec::new();
    let mut extend_last = false;
    for step in &log.steps {
        if step.reward <= 0.0 {
            extend_last = false;
            continue;
        }
        match tasks.last_mut() {
            Some(last) if extend_last && last.source == step.source && last.dest == step.dest => {
                last.quantity += 1;
            }
            _ => tasks.push(TransferTask {
                source: step.source,
                dest: step.dest,
                quantity: 1,
                need_hour: step.hour,
            }),
        }
        extend_last = true;
    }
    tasks
}

/// Net bikes each station must give up (positive) or receive (negative).
pub fn net_balances(tasks: &[TransferTask], n: usize) -> Vec<i64> {
    let mut net = vec![0i64; n];
    for t in tasks {
        net[t.source] += i64::from(t.quantity);
        net[t.dest] -= i64::from(t.quantity);
    }
    net
}

fn station_count(tasks: &[TransferTask], provider: &DistanceProvider) -> Result<usize> {
    let n = provider.len();
    for t in tasks {
        if t.source >= n || t.dest >= n || t.source == t.dest || t.quantity == 0 {
            return Err(Error::Contract(format!("invalid transfer task {t:?} for {n} stations")));
        }
    }
    Ok(n)
}

/// Chains tasks into capacity-limited journeys.
///
/// Repeatedly takes the station with the largest remaining surplus, loads
/// `min(surplus, capacity)` bikes, then drives to the nearest station with a
/// remaining deficit (measured from the truck's current stop) until empty.
/// Ties go to the lowest index. Planning stops once either side runs out.
pub fn build_journeys(tasks: &[TransferTask], capacity: u32, provider: &DistanceProvider) -> Result<Vec<Journey>> {
    if capacity == 0 {
        return Err(Error::Contract("truck capacity must be at least 1".into()));
    }
    let n = station_count(tasks, provider)?;
    let net = net_balances(tasks, n);
    let mut surplus: Vec<u32> = net.iter().map(|&v| v.max(0) as u32).collect();
    let mut deficit: Vec<u32> = net.iter().map(|&v| (-v).max(0) as u32).collect();

    let mut journeys = Vec::new();
    loop {
        let Some(pickup) = pick_max(&surplus) else { break };
        if deficit.iter().all(|&d| d == 0) {
            break;
        }
        let load = surplus[pickup].min(capacity);
        let mut onboard = load;
        let mut at = pickup;
        let mut legs = Vec::new();
        let mut total_km = 0.0;
        while onboard > 0 {
            let Some(next) = nearest_deficit(at, &deficit, provider)? else { break };
            let drop = onboard.min(deficit[next]);
            let km = provider.distance(at, next)?;
            deficit[next] -= drop;
            onboard -= drop;
            total_km += km;
            legs.push(Leg {
                station: next,
                drop,
                km,
                dispatch_min: 0,
                arrival_min: 0,
                deadline_min: 0,
            });
            at = next;
        }
        // Bikes left on board never leave the pickup.
        let loaded = load - onboard;
        surplus[pickup] -= loaded;
        journeys.push(Journey {
            truck_id: journeys.len() + 1,
            pickup,
            load: loaded,
            legs,
            total_km,
            tight_schedule: false,
        });
    }
    Ok(journeys)
}

fn pick_max(values: &[u32]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v > 0 && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn nearest_deficit(from: usize, deficit: &[u32], provider: &DistanceProvider) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &d) in deficit.iter().enumerate() {
        if d == 0 {
            continue;
        }
        let km = provider.distance(from, j)?;
        if best.is_none_or(|(_, b)| km < b) {
            best = Some((j, km));
        }
    }
    Ok(best.map(|(j, _)| j))
}

/// Kilometres if every task were its own round trip, repeated when the
/// quantity exceeds truck capacity.
pub fn naive_round_trip_km(tasks: &[TransferTask], capacity: u32, provider: &DistanceProvider) -> Result<f64> {
    let capacity = capacity.max(1);
    tasks.iter().try_fold(0.0, |acc, t| {
        let trips = t.quantity.div_ceil(capacity);
        Ok(acc + f64::from(trips) * 2.0 * provider.distance(t.source, t.dest)?)
    })
}

/// Whole minutes to drive `km`, rounded up.
pub fn travel_minutes(km: f64, speed_kmh: f64) -> i64 {
    let minutes = km / speed_kmh * 60.0;
    // Shave float noise so an exact 20.0 does not become 21.
    (minutes - 1e-9).ceil().max(0.0) as i64
}

/// Assigns just-in-time times to every leg and orders journeys by urgency.
///
/// Each leg's deadline is the earliest `need_hour` among tasks delivering to
/// its station. Working backwards from the last leg, a leg must arrive early
/// enough to unload and drive to the next one; the journey's dispatch is the
/// first arrival minus driving and loading time. A dispatch before midnight
/// is clamped to 00:00, the route is replayed forwards from there and the
/// journey is flagged `tight_schedule`. Journeys are then sorted by earliest
/// deadline and renumbered.
pub fn schedule_journeys(
    journeys: &[Journey],
    tasks: &[TransferTask],
    speed_kmh: f64,
    load_minutes: u32,
) -> Result<Vec<Journey>> {
    if !(speed_kmh > 0.0 && speed_kmh.is_finite()) {
        return Err(Error::Config(format!("truck speed {speed_kmh} must be positive")));
    }
    let mut deadlines: BTreeMap<usize, i64> = BTreeMap::new();
    for t in tasks {
        let d = i64::from(t.need_hour) * 60;
        deadlines.entry(t.dest).and_modify(|v| *v = (*v).min(d)).or_insert(d);
    }
    let service = i64::from(load_minutes);

    let mut scheduled = Vec::with_capacity(journeys.len());
    for journey in journeys {
        let mut j = journey.clone();
        for leg in &mut j.legs {
            leg.deadline_min = *deadlines.get(&leg.station).ok_or_else(|| {
                Error::Contract(format!("leg to station {} serves no transfer task", leg.station))
            })?;
        }
        let travel: Vec<i64> = j.legs.iter().map(|l| travel_minutes(l.km, speed_kmh)).collect();

        let count = j.legs.len();
        for k in (0..count).rev() {
            let latest = if k + 1 < count {
                j.legs[k + 1].arrival_min - travel[k + 1] - service
            } else {
                i64::MAX
            };
            j.legs[k].arrival_min = j.legs[k].deadline_min.min(latest);
        }
        for k in 0..count {
            j.legs[k].dispatch_min = j.legs[k].arrival_min - travel[k] - service;
        }

        j.tight_schedule = false;
        if count > 0 && j.legs[0].dispatch_min < 0 {
            j.tight_schedule = true;
            let mut clock = 0;
            for k in 0..count {
                let dispatch = j.legs[k].dispatch_min.max(clock);
                let arrival = dispatch + service + travel[k];
                j.legs[k].dispatch_min = dispatch;
                j.legs[k].arrival_min = arrival;
                clock = arrival;
            }
        }
        scheduled.push(j);
    }

    scheduled.sort_by(|a, b| {
        a.earliest_deadline()
            .cmp(&b.earliest_deadline())
            .then(a.dispatch_min().cmp(&b.dispatch_min()))
            .then(a.truck_id.cmp(&b.truck_id))
    });
    for (i, j) in scheduled.iter_mut().enumerate() {
        j.truck_id = i + 1;
    }
    Ok(scheduled)
}
