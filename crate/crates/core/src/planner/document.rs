//! The JSON journey-plan document shared by the planner, reports and map.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Journey;
use crate::domain::StationRegistry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickupDoc {
    pub station: String,
    pub load: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegDoc {
    pub station: String,
    pub drop: u32,
    pub dispatch_time: String,
    pub arrival_time: String,
    pub km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruckPlan {
    pub truck_id: usize,
    pub pickup: PickupDoc,
    pub legs: Vec<LegDoc>,
    pub total_km: f64,
    pub tight_schedule: bool,
}

impl TruckPlan {
    pub fn dispatch_time(&self) -> &str {
        self.legs.first().map(|l| l.dispatch_time.as_str()).unwrap_or("00:00")
    }
}

/// `{date, trucks: [...]}` with station display names and `HH:MM` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneyPlan {
    pub date: String,
    pub trucks: Vec<TruckPlan>,
}

pub fn format_clock(minutes: i64) -> String {
    let m = minutes.clamp(0, 24 * 60 - 1);
    format!("{:02}:{:02}", m / 60, m % 60)
}

pub fn parse_clock(s: &str) -> Option<i64> {
    let (h, m) = s.split_once(':')?;
    if h.len() != 2 || m.len() != 2 {
        return None;
    }
    let (h, m): (i64, i64) = (h.parse().ok()?, m.parse().ok()?);
    ((0..24).contains(&h) && (0..60).contains(&m)).then_some(h * 60 + m)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl JourneyPlan {
    pub fn from_journeys(date: &str, journeys: &[Journey], registry: &StationRegistry) -> Result<Self> {
        let name = |i: usize| {
            registry
                .get(i)
                .map(|s| s.name.clone())
                .ok_or_else(|| Error::Contract(format!("station index {i} not in registry")))
        };
        let trucks = journeys
            .iter()
            .map(|j| {
                Ok(TruckPlan {
                    truck_id: j.truck_id,
                    pickup: PickupDoc {
                        station: name(j.pickup)?,
                        load: j.load,
                    },
                    legs: j
                        .legs
                        .iter()
                        .map(|l| {
                            Ok(LegDoc {
                                station: name(l.station)?,
                                drop: l.drop,
                                dispatch_time: format_clock(l.dispatch_min),
                                arrival_time: format_clock(l.arrival_min),
                                km: round2(l.km),
                            })
                        })
                        .collect::<Result<_>>()?,
                    total_km: round2(j.total_km),
                    tight_schedule: j.tight_schedule,
                })
            })
            .collect::<Result<_>>()?;
        Ok(JourneyPlan {
            date: date.to_string(),
            trucks,
        })
    }

    pub fn total_bikes(&self) -> u64 {
        self.trucks.iter().map(|t| u64::from(t.pickup.load)).sum()
    }

    pub fn total_km(&self) -> f64 {
        round2(self.trucks.iter().map(|t| t.total_km).sum())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Parses and validates, listing every offending JSON path.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("$: {e}")]))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        let mut problems = Vec::new();
        check_structure(value, &mut problems);
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let plan: JourneyPlan =
            serde_json::from_value(value.clone()).map_err(|e| Error::Validation(vec![format!("$: {e}")]))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Semantic checks beyond the JSON shape.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if chrono::NaiveDate::parse_from_str(&self.date, "%Y-%m-%d").is_err() {
            problems.push(format!("$.date: `{}` is not YYYY-MM-DD", self.date));
        }
        let mut ids = std::collections::HashSet::new();
        for (t, truck) in self.trucks.iter().enumerate() {
            let at = format!("$.trucks[{t}]");
            if truck.truck_id == 0 || !ids.insert(truck.truck_id) {
                problems.push(format!("{at}.truck_id: must be a unique positive integer"));
            }
            if truck.pickup.station.trim().is_empty() {
                problems.push(format!("{at}.pickup.station: empty"));
            }
            if truck.pickup.load == 0 {
                problems.push(format!("{at}.pickup.load: must be at least 1"));
            }
            if truck.legs.is_empty() {
                problems.push(format!("{at}.legs: a journey needs at least one leg"));
            }
            let dropped: u64 = truck.legs.iter().map(|l| u64::from(l.drop)).sum();
            if dropped != u64::from(truck.pickup.load) {
                problems.push(format!(
                    "{at}.legs: drops sum to {dropped} but pickup loads {}",
                    truck.pickup.load
                ));
            }
            if !(truck.total_km.is_finite() && truck.total_km >= 0.0) {
                problems.push(format!("{at}.total_km: must be a non-negative number"));
            }
            let mut clock = i64::MIN;
            for (l, leg) in truck.legs.iter().enumerate() {
                let at = format!("{at}.legs[{l}]");
                if leg.station.trim().is_empty() {
                    problems.push(format!("{at}.station: empty"));
                }
                if leg.drop == 0 {
                    problems.push(format!("{at}.drop: must be at least 1"));
                }
                if !(leg.km.is_finite() && leg.km >= 0.0) {
                    problems.push(format!("{at}.km: must be a non-negative number"));
                }
                let times = [("dispatch_time", &leg.dispatch_time), ("arrival_time", &leg.arrival_time)];
                for (field, raw) in times {
                    match parse_clock(raw) {
                        None => problems.push(format!("{at}.{field}: `{raw}` is not HH:MM")),
                        Some(m) if m < clock => problems.push(format!("{at}.{field}: time goes backwards")),
                        Some(m) => clock = m,
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

fn check_structure(v: &Value, problems: &mut Vec<String>) {
    let Some(root) = v.as_object() else {
        problems.push("$: expected an object".into());
        return;
    };
    expect(root.get("date"), "$.date", Value::is_string, "string", problems);
    let Some(trucks) = root.get("trucks") else {
        problems.push("$.trucks: missing".into());
        return;
    };
    let Some(trucks) = trucks.as_array() else {
        problems.push("$.trucks: expected an array".into());
        return;
    };
    for (t, truck) in trucks.iter().enumerate() {
        let at = format!("$.trucks[{t}]");
        let Some(obj) = truck.as_object() else {
            problems.push(format!("{at}: expected an object"));
            continue;
        };
        expect(obj.get("truck_id"), &format!("{at}.truck_id"), Value::is_u64, "non-negative integer", problems);
        expect(obj.get("total_km"), &format!("{at}.total_km"), Value::is_number, "number", problems);
        expect(obj.get("tight_schedule"), &format!("{at}.tight_schedule"), Value::is_boolean, "boolean", problems);
        match obj.get("pickup").and_then(Value::as_object) {
            None => problems.push(format!("{at}.pickup: expected an object")),
            Some(p) => {
                expect(p.get("station"), &format!("{at}.pickup.station"), Value::is_string, "string", problems);
                expect(p.get("load"), &format!("{at}.pickup.load"), Value::is_u64, "non-negative integer", problems);
            }
        }
        match obj.get("legs").and_then(Value::as_array) {
            None => problems.push(format!("{at}.legs: expected an array")),
            Some(legs) => {
                for (l, leg) in legs.iter().enumerate() {
                    let at = format!("{at}.legs[{l}]");
                    let Some(leg) = leg.as_object() else {
                        problems.push(format!("{at}: expected an object"));
                        continue;
                    };
                    expect(leg.get("station"), &format!("{at}.station"), Value::is_string, "string", problems);
                    expect(leg.get("drop"), &format!("{at}.drop"), Value::is_u64, "non-negative integer", problems);
                    expect(leg.get("dispatch_time"), &format!("{at}.dispatch_time"), Value::is_string, "string", problems);
                    expect(leg.get("arrival_time"), &format!("{at}.arrival_time"), Value::is_string, "string", problems);
                    expect(leg.get("km"), &format!("{at}.km"), Value::is_number, "number", problems);
                }
            }
        }
    }
}

fn expect(v: Option<&Value>, path: &str, ok: fn(&Value) -> bool, what: &str, problems: &mut Vec<String>) {
    match v {
        None => problems.push(format!("{path}: missing")),
        Some(v) if !ok(v) => problems.push(format!("{path}: expected {what}")),
        _ => {}
    }
}
