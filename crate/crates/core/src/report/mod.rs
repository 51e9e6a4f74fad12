//! Dispatch reports: a deterministic Markdown formatter, an optional
//! language-model path and a post-hoc grounding check.

mod grounding;
mod llm;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use grounding::{ground_check, GroundingResult};
pub use llm::{generate_report, EndpointConfig, ENV_KEY, ENV_MODEL, ENV_URL};

use crate::error::Result;
use crate::planner::JourneyPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportSource {
    Deterministic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchReport {
    /// Full Markdown document.
    pub markdown: String,
    pub manager_briefing: String,
    /// One Markdown block per `## ` section after the briefing.
    pub tickets: Vec<String>,
    pub source: ReportSource,
    /// Why the language-model path was abandoned, if it was tried.
    pub fallback_reason: Option<String>,
}

impl DispatchReport {
    pub fn from_markdown(markdown: String, source: ReportSource) -> Self {
        let mut briefing = String::new();
        let mut tickets: Vec<String> = Vec::new();
        for line in markdown.lines() {
            if line.starts_with("## ") && !line.to_lowercase().contains("briefing") {
                tickets.push(String::new());
            }
            match tickets.last_mut() {
                Some(t) => {
                    t.push_str(line);
                    t.push('\n');
                }
                None if !line.starts_with('#') => {
                    briefing.push_str(line);
                    briefing.push('\n');
                }
                None => {}
            }
        }
        DispatchReport {
            manager_briefing: briefing.trim().to_string(),
            tickets: tickets.into_iter().map(|t| t.trim_end().to_string()).collect(),
            markdown,
            source,
            fallback_reason: None,
        }
    }
}

fn plural(n: u64, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

/// Renders the fixed Markdown template. Validates the plan first.
pub fn format_report(plan: &JourneyPlan) -> Result<DispatchReport> {
    plan.validate()?;
    let mut md = String::new();
    let _ = writeln!(md, "# Dispatch Report — {}\n", plan.date);
    let _ = writeln!(md, "## Manager Briefing\n");
    if plan.trucks.is_empty() {
        let _ = writeln!(md, "0 trucks dispatched. The network needs no rebalancing moves today.");
    } else {
        let _ = writeln!(
            md,
            "{} dispatched, moving {} over {:.2} km in total.",
            plural(plan.trucks.len() as u64, "truck", "trucks"),
            plural(plan.total_bikes(), "bike", "bikes"),
            plan.total_km()
        );
    }
    for truck in &plan.trucks {
        let _ = writeln!(md, "\n## Truck {}\n", truck.truck_id);
        let _ = writeln!(
            md,
            "- Pickup: {} — {} — load {}",
            truck.dispatch_time(),
            truck.pickup.station,
            plural(u64::from(truck.pickup.load), "bike", "bikes")
        );
        for leg in &truck.legs {
            let _ = writeln!(
                md,
                "- {} — {} — drop {}",
                leg.arrival_time,
                leg.station,
                plural(u64::from(leg.drop), "bike", "bikes")
            );
        }
        let _ = writeln!(md, "\nRoute distance: {:.2} km.", truck.total_km);
        if truck.tight_schedule {
            let _ = writeln!(md, "Tight schedule: departs at the start of the day and may arrive after the need.");
        }
    }
    Ok(DispatchReport::from_markdown(md, ReportSource::Deterministic))
}

const PROMPT_HEAD: &str = "\
## Role
You are SmartFlow, a logistics analyst for a city bike-sharing operator. \
Write today's rebalancing dispatch report for the operations manager and the truck drivers.

## Journey plan data
```json
";

const PROMPT_TAIL: &str = "\n```

## Rules
- Use only the data in the journey plan above. Do not invent, estimate or round any value.
- Every station name, time, bike quantity and distance you write must appear in the plan exactly as given.
- Quote distances with two decimals.
- If the plan has no trucks, say that 0 trucks are dispatched.

## Required format
Return Markdown only:
1. An H1 title `# Dispatch Report — <date>`.
2. A `## Manager Briefing` section with one paragraph giving the number of trucks, total bikes moved and total km.
3. One `## Truck <truck_id>` section per truck containing
   - a pickup line `- Pickup: <dispatch time> — <station> — load <N> bikes`
   - one line per leg `- <arrival time> — <station> — drop <N> bikes`
   - a line `Route distance: <total_km> km.`
";

/// Prompt for the language-model path. Only the embedded plan varies between
/// plans.
pub fn build_prompt(plan: &JourneyPlan) -> String {
    let data = plan.to_json_pretty();
    let mut prompt = String::with_capacity(PROMPT_HEAD.len() + data.len() + PROMPT_TAIL.len());
    prompt.push_str(PROMPT_HEAD);
    prompt.push_str(&data);
    prompt.push_str(PROMPT_TAIL);
    prompt
}
