use std::time::Duration;

use serde_json::{json, Value};

use super::{build_prompt, format_report, ground_check, DispatchReport, ReportSource};
use crate::error::Result;
use crate::planner::JourneyPlan;

pub const ENV_URL: &str = "SMARTFLOW_LLM_URL";
pub const ENV_KEY: &str = "SMARTFLOW_LLM_KEY";
pub const ENV_MODEL: &str = "SMARTFLOW_LLM_MODEL";

/// A chat-completion endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_tokens: u32,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            api_key: None,
            model: "default".into(),
            max_tokens: 2048,
            timeout: Duration::from_secs(30),
        }
    }

    /// Reads the endpoint from the environment; `None` when no URL is set.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_URL).ok().filter(|u| !u.trim().is_empty())?;
        let mut cfg = EndpointConfig::new(url.trim());
        cfg.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        if let Ok(model) = std::env::var(ENV_MODEL) {
            if !model.trim().is_empty() {
                cfg.model = model.trim().to_string();
            }
        }
        Some(cfg)
    }
}

/// Asks the endpoint for a report and keeps it only if it passes the
/// grounding check. Any failure yields the deterministic report with the
/// reason recorded; only an invalid plan is an error.
pub fn generate_report(plan: &JourneyPlan, endpoint: Option<&EndpointConfig>) -> Result<DispatchReport> {
    let fallback = format_report(plan)?;
    let Some(endpoint) = endpoint else {
        return Ok(fallback);
    };
    let reason = match request(plan, endpoint) {
        Ok(text) => {
            let g = ground_check(&text, plan);
            if g.passed() {
                return Ok(DispatchReport::from_markdown(text, ReportSource::Llm));
            }
            format!("grounding failed: {}", g.violations.join("; "))
        }
        Err(e) => e,
    };
    log::warn!("language-model report rejected, using deterministic formatter: {reason}");
    Ok(DispatchReport {
        fallback_reason: Some(reason),
        ..fallback
    })
}

fn request(plan: &JourneyPlan, endpoint: &EndpointConfig) -> std::result::Result<String, String> {
    let agent = ureq::AgentBuilder::new().timeout(endpoint.timeout).build();
    let body = json!({
        "model": endpoint.model,
        "messages": [{"role": "user", "content": build_prompt(plan)}],
        "max_tokens": endpoint.max_tokens,
        "temperature": 0,
    });
    let mut req = agent.post(&endpoint.url).set("Content-Type", "application/json");
    if let Some(key) = &endpoint.api_key {
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    let response = req.send_json(body).map_err(|e| match e {
        ureq::Error::Status(code, _) => format!("endpoint returned HTTP {code}"),
        ureq::Error::Transport(t) => format!("transport error: {t}"),
    })?;
    let value: Value = response
        .into_json()
        .map_err(|e| format!("response is not JSON: {e}"))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| "response has no choices[0].message.content".to_string())?;
    let text = strip_fence(content.trim());
    if text.is_empty() {
        return Err("empty completion".into());
    }
    Ok(text.to_string())
}

fn strip_fence(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    let rest = rest.split_once('\n').map(|(_, r)| r).unwrap_or("");
    rest.strip_suffix("```").unwrap_or(rest).trim()
}
