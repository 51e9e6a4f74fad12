use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::planner::JourneyPlan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub violations: Vec<String>,
}

impl GroundingResult {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Sentinel that replaces known station names before numbers are read.
const MASK: &str = "\u{1}";

struct Patterns {
    date: Regex,
    time: Regex,
    decimal: Regex,
    integer: Regex,
    line_station: Regex,
    station_phrase: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        date: Regex::new(r"\b\d{4}-\d{2}-\d{2}\b").unwrap(),
        time: Regex::new(r"\b\d{1,2}:\d{2}\b").unwrap(),
        decimal: Regex::new(r"\d+\.\d+").unwrap(),
        integer: Regex::new(r"\d+").unwrap(),
        line_station: Regex::new(r"(?m)^\s*[-*]?\s*(?:Pickup:\s*)?\S+\s+[—–-]+\s+(.+?)\s+[—–-]+\s+(?:drop|load)\b")
            .unwrap(),
        station_phrase: Regex::new(r"\bStation\s+[A-Z0-9][\w'&.-]*").unwrap(),
    })
}

struct Facts {
    names: Vec<String>,
    times: BTreeSet<String>,
    km: BTreeSet<String>,
    quantities: BTreeSet<u64>,
    small: BTreeSet<u64>,
}

fn facts(plan: &JourneyPlan) -> Facts {
    let mut names = BTreeSet::new();
    let mut times = BTreeSet::new();
    let mut km = BTreeSet::new();
    let mut quantities = BTreeSet::new();
    let mut small = BTreeSet::new();
    small.insert(plan.trucks.len() as u64);
    quantities.insert(plan.total_bikes());
    km.insert(format!("{:.2}", plan.total_km()));
    for t in &plan.trucks {
        quantities.insert(t.truck_id as u64);
        names.insert(t.pickup.station.clone());
        quantities.insert(u64::from(t.pickup.load));
        km.insert(format!("{:.2}", t.total_km));
        for (i, leg) in t.legs.iter().enumerate() {
            small.insert(i as u64 + 1);
            names.insert(leg.station.clone());
            quantities.insert(u64::from(leg.drop));
            times.insert(leg.dispatch_time.clone());
            times.insert(leg.arrival_time.clone());
            km.insert(format!("{:.2}", leg.km));
        }
    }
    let mut names: Vec<String> = names.into_iter().filter(|n| !n.is_empty()).collect();
    names.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    Facts {
        names,
        times,
        km,
        quantities,
        small: small.into_iter().filter(|&n| n <= 24).collect(),
    }
}

fn normalize_time(raw: &str) -> String {
    match raw.split_once(':') {
        Some((h, m)) if h.len() == 1 => format!("0{h}:{m}"),
        _ => raw.to_string(),
    }
}

/// Checks that every station name, time, distance and quantity in `text`
/// appears in `plan`.
///
/// Known station names are masked first so digits inside names are not read
/// as figures. Remaining station candidates come from ticket-shaped lines and
/// `Station X` phrases.
pub fn ground_check(text: &str, plan: &JourneyPlan) -> GroundingResult {
    let p = patterns();
    let f = facts(plan);
    let mut violations = Vec::new();

    let mut masked = text.to_string();
    for name in &f.names {
        masked = masked.replace(name.as_str(), MASK);
    }

    for m in p.line_station.captures_iter(&masked) {
        let station = m[1].trim();
        if station != MASK {
            violations.push(format!("station `{}` is not in the plan", station.replace(MASK, "…")));
        }
    }
    for m in p.station_phrase.find_iter(&masked) {
        violations.push(format!("station `{}` is not in the plan", m.as_str()));
    }

    let mut rest = String::with_capacity(masked.len());
    let mut last = 0;
    for m in p.date.find_iter(&masked) {
        if m.as_str() != plan.date {
            violations.push(format!("date {} is not the plan date", m.as_str()));
        }
        rest.push_str(&masked[last..m.start()]);
        rest.push(' ');
        last = m.end();
    }
    rest.push_str(&masked[last..]);

    let rest = replace_checked(&p.time, &rest, |tok| {
        let t = normalize_time(tok);
        (!f.times.contains(&t)).then(|| format!("time {tok} is not in the plan"))
    }, &mut violations);
    let rest = replace_checked(&p.decimal, &rest, |tok| {
        let ok = tok
            .parse::<f64>()
            .map(|v| f.km.contains(&format!("{v:.2}")) && decimals(tok) <= 2)
            .unwrap_or(false);
        (!ok).then(|| format!("distance {tok} is not in the plan"))
    }, &mut violations);
    replace_checked(&p.integer, &rest, |tok| {
        let ok = tok
            .parse::<u64>()
            .map(|v| f.quantities.contains(&v) || f.small.contains(&v))
            .unwrap_or(false);
        (!ok).then(|| format!("quantity {tok} is not in the plan"))
    }, &mut violations);

    GroundingResult { violations }
}

fn decimals(tok: &str) -> usize {
    tok.split_once('.').map(|(_, d)| d.len()).unwrap_or(0)
}

fn replace_checked(
    re: &Regex,
    text: &str,
    mut check: impl FnMut(&str) -> Option<String>,
    violations: &mut Vec<String>,
) -> String {
    re.replace_all(text, |c: &regex::Captures| {
        if let Some(v) = check(&c[0]) {
            violations.push(v);
        }
        " "
    })
    .into_owned()
}
