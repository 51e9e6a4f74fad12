//! Run scoring and cross-seed aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::CurvePoint;
use crate::domain::NetworkState;
use crate::error::{Error, Result};
use crate::planner::{Journey, TransferTask};

/// L1 distance between inventories and targets.
pub fn imbalance(state: &NetworkState, targets: &[u32]) -> Result<u64> {
    if state.inventories.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} inventories vs {} targets",
            state.inventories.len(),
            targets.len()
        )));
    }
    Ok(state
        .inventories
        .iter()
        .zip(targets)
        .map(|(&i, &t)| u64::from(i.abs_diff(t)))
        .sum())
}

/// A percentage plus a flag for the degenerate case it was defined away.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percent {
    pub value: f64,
    pub degenerate: bool,
}

/// `100 * (initial - final) / initial`; 0 and flagged when `initial` is 0.
pub fn imbalance_reduction(initial: u64, final_: u64) -> Percent {
    if initial == 0 {
        return Percent {
            value: 0.0,
            degenerate: true,
        };
    }
    Percent {
        value: 100.0 * (initial as f64 - final_ as f64) / initial as f64,
        degenerate: false,
    }
}

/// Share of journeys with two or more delivery legs.
pub fn truck_utilization(journeys: &[Journey]) -> Percent {
    if journeys.is_empty() {
        return Percent {
            value: 0.0,
            degenerate: true,
        };
    }
    let multi = journeys.iter().filter(|j| j.legs.len() >= 2).count();
    Percent {
        value: 100.0 * multi as f64 / journeys.len() as f64,
        degenerate: false,
    }
}

/// Task counts per `need_hour`.
pub fn task_hour_density(tasks: &[TransferTask]) -> [u32; 24] {
    let mut bins = [0u32; 24];
    for t in tasks {
        bins[(t.need_hour % 24) as usize] += 1;
    }
    bins
}

/// Scores of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub imbalance_initial: u64,
    pub imbalance_final: u64,
    pub imbalance_reduction: f64,
    pub imbalance_reduction_degenerate: bool,
    pub total_km: f64,
    pub naive_km: f64,
    pub trucks: usize,
    pub bikes_moved: u64,
    pub truck_utilization: f64,
    pub truck_utilization_degenerate: bool,
    pub total_reward: f64,
    pub final_loss: Option<f64>,
    pub task_hours: [u32; 24],
    pub learning_curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation; absent for a single run.
    pub std: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds: Vec<u64>,
    pub metrics: Vec<MetricSummary>,
}

/// Mean and `n - 1` standard deviation of each value.
pub fn mean_std(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    Some((mean, std))
}

/// Per-metric summaries in a fixed row order. Seeds are sorted so the result
/// does not depend on run order.
pub fn aggregate_runs(results: &[RunResult]) -> Result<Aggregate> {
    if results.is_empty() {
        return Err(Error::Input("cannot aggregate zero runs".into()));
    }
    let mut runs: Vec<&RunResult> = results.iter().collect();
    runs.sort_by_key(|r| r.seed);
    let rows: [(&str, fn(&RunResult) -> Option<f64>); 7] = [
        ("imbalance_reduction_pct", |r| Some(r.imbalance_reduction)),
        ("imbalance_initial", |r| Some(r.imbalance_initial as f64)),
        ("imbalance_final", |r| Some(r.imbalance_final as f64)),
        ("total_km", |r| Some(r.total_km)),
        ("truck_utilization_pct", |r| Some(r.truck_utilization)),
        ("trucks", |r| Some(r.trucks as f64)),
        ("final_loss", |r| r.final_loss),
    ];
    let metrics = rows
        .iter()
        .filter_map(|(name, get)| {
            let values: Vec<f64> = runs.iter().filter_map(|r| get(r)).collect();
            mean_std(&values).map(|(mean, std)| MetricSummary {
                name: name.to_string(),
                mean,
                std,
                n: values.len(),
            })
        })
        .collect();
    Ok(Aggregate {
        seeds: runs.iter().map(|r| r.seed).collect(),
        metrics,
    })
}

impl Aggregate {
    pub fn get(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(md, "| Metric | Value (mean ± std) | Runs |");
        let _ = writeln!(md, "|---|---|---|");
        for m in &self.metrics {
            let value = match m.std {
                Some(s) => format!("{:.2} ± {:.2}", m.mean, s),
                None => format!("{:.2} (std n/a)", m.mean),
            };
            let _ = writeln!(md, "| {} | {} | {} |", m.name, value, m.n);
        }
        let _ = writeln!(md, "\nSeeds: {}", seeds.join(", "));
        md
    }
}
