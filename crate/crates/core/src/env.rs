//! Hourly bike-sharing simulator.
//!
//! One step moves at most one bike between two stations, then applies an hour
//! of public demand from a [`DemandProfile`], clips inventories to
//! `[0, capacity]` and advances the clock.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{decode_action, need, Action, NetworkState, StationRegistry};
use crate::error::{Error, Result};
use crate::ingest::DemandProfile;

/// Shaped-reward constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Multiplier on `need(dest) / capacity(dest)` for useful moves.
    pub scale: f64,
    /// Reward for a feasible move that serves no need.
    pub wasted: f64,
    /// Reward for an infeasible move.
    pub infeasible: f64,
    /// When set, a move only counts as useful if the source holds more bikes
    /// than its target; moves that rob a station at or below target earn
    /// `wasted`.
    pub require_source_surplus: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            scale: 1.0,
            wasted: -1.0,
            infeasible: -10.0,
            require_source_surplus: true,
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInfo {
    pub action_feasible: bool,
    pub need_served: u32,
    pub hour_executed: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: NetworkState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One step of an episode as exported to JSON Lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub hour: u32,
    pub source: usize,
    pub dest: usize,
    pub reward: f64,
    pub feasible: bool,
    pub need_served: u32,
    pub inventories_before: Vec<u32>,
    pub inventories_after: Vec<u32>,
}

/// A full episode: the starting state, every step and the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub initial: NetworkState,
    pub steps: Vec<EpisodeStep>,
    pub final_state: NetworkState,
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        for step in &self.steps {
            serde_json::to_writer(&mut out, step).expect("step serializes");
            out.write_all(b"\n").expect("in-memory write");
        }
        String::from_utf8(out).expect("json is utf-8")
    }

    /// Parses JSON Lines written by [`EpisodeLog::to_jsonl`]. The initial
    /// state is the first step's pre-move inventories, the final state the
    /// last step's post-demand inventories.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let steps = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<EpisodeStep>(l).map_err(|e| Error::Parse {
                    file: "episode log".into(),
                    line: i as u64 + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let first = steps
            .first()
            .ok_or_else(|| Error::Input("episode log is empty".into()))?;
        let last = steps.last().expect("non-empty");
        let initial = NetworkState {
            inventories: first.inventories_before.clone(),
            hour: first.hour,
        };
        let final_state = NetworkState {
            inventories: last.inventories_after.clone(),
            hour: (last.hour + 1) % 24,
        };
        Ok(EpisodeLog {
            initial,
            steps,
            final_state,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                file: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }
}

/// Draws starting inventories uniformly from `[0, capacity]` per station.
pub fn reset_state(registry: &StationRegistry, seed: u64) -> NetworkState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NetworkState {
        inventories: registry
            .stations()
            .iter()
            .map(|s| rng.gen_range(0..=s.capacity))
            .collect(),
        hour: 0,
    }
}

/// A transfer needs a bike at the source and a free dock at the destination.
pub fn is_feasible(state: &NetworkState, action: Action, registry: &StationRegistry) -> bool {
    state.inventories[action.source] >= 1 && state.inventories[action.dest] < registry.stations()[action.dest].capacity
}

/// Reward for taking `action` in `state`, evaluated before demand.
pub fn compute_reward(state: &NetworkState, action: Action, registry: &StationRegistry, rewards: &RewardConfig) -> f64 {
    if !is_feasible(state, action, registry) {
        return rewards.infeasible;
    }
    let stations = registry.stations();
    let need_dest = need(state, action.dest, registry);
    let source_ok = !rewards.require_source_surplus
        || state.inventories[action.source] > stations[action.source].target;
    if need_dest > 0 && source_ok {
        rewards.scale * f64::from(need_dest) / f64::from(stations[action.dest].capacity)
    } else {
        rewards.wasted
    }
}

/// Applies one hour of net flow at `state.hour` and clips to capacity. The
/// clock is left untouched.
pub fn apply_demand(state: &NetworkState, profile: &DemandProfile, registry: &StationRegistry) -> NetworkState {
    let hour = state.hour as usize % 24;
    let inventories = state
        .inventories
        .iter()
        .zip(registry.stations())
        .enumerate()
        .map(|(i, (&inv, s))| {
            let next = i64::from(inv) + i64::from(profile.delta(i, hour));
            next.clamp(0, i64::from(s.capacity)) as u32
        })
        .collect();
    NetworkState {
        inventories,
        hour: state.hour,
    }
}

/// Network input: inventories divided by capacity, then hour / 23.
pub fn observation(state: &NetworkState, registry: &StationRegistry) -> Vec<f64> {
    let mut obs: Vec<f64> = state
        .inventories
        .iter()
        .zip(registry.stations())
        .map(|(&inv, s)| f64::from(inv) / f64::from(s.capacity))
        .collect();
    obs.push(f64::from(state.hour) / 23.0);
    obs
}

/// Raw integer observation: inventories followed by the hour.
pub fn raw_observation(state: &NetworkState) -> Vec<u32> {
    let mut obs = state.inventories.clone();
    obs.push(state.hour);
    obs
}

/// Stateful single-threaded simulator instance.
#[derive(Debug, Clone)]
pub struct RebalanceEnv {
    registry: Arc<StationRegistry>,
    profile: Arc<DemandProfile>,
    rewards: RewardConfig,
    episode_hours: u32,
    state: Option<NetworkState>,
    elapsed: u32,
    log: Option<EpisodeLog>,
}

impl RebalanceEnv {
    pub fn new(
        registry: Arc<StationRegistry>,
        profile: Arc<DemandProfile>,
        rewards: RewardConfig,
        episode_hours: u32,
    ) -> Result<Self> {
        if registry.len() < 2 {
            return Err(Error::Input("the simulator needs at least two stations".into()));
        }
        profile.check_against(&registry)?;
        if episode_hours == 0 {
            return Err(Error::Config("episode_hours must be at least 1".into()));
        }
        Ok(RebalanceEnv {
            registry,
            profile,
            rewards,
            episode_hours,
            state: None,
            elapsed: 0,
            log: None,
        })
    }

    pub fn registry(&self) -> &StationRegistry {
        &self.registry
    }

    pub fn profile(&self) -> &DemandProfile {
        &self.profile
    }

    pub fn rewards(&self) -> &RewardConfig {
        &self.rewards
    }

    pub fn episode_hours(&self) -> u32 {
        self.episode_hours
    }

    pub fn station_count(&self) -> usize {
        self.registry.len()
    }

    pub fn action_count(&self) -> usize {
        self.registry.action_count()
    }

    pub fn observation_len(&self) -> usize {
        self.registry.len() + 1
    }

    pub fn state(&self) -> Option<&NetworkState> {
        self.state.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.state.is_some() && self.elapsed >= self.episode_hours
    }

    pub fn reset(&mut self, seed: u64) -> NetworkState {
        let state = reset_state(&self.registry, seed);
        self.start_from(state.clone());
        state
    }

    /// Starts an episode from an explicit state, e.g. a recorded one.
    pub fn reset_to(&mut self, state: NetworkState) -> Result<()> {
        state.validate(&self.registry)?;
        self.start_from(state);
        Ok(())
    }

    fn start_from(&mut self, state: NetworkState) {
        self.elapsed = 0;
        self.log = Some(EpisodeLog {
            initial: state.clone(),
            steps: Vec::with_capacity(self.episode_hours as usize),
            final_state: state.clone(),
        });
        self.state = Some(state);
    }

    pub fn observation(&self) -> Result<Vec<f64>> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Contract("environment has not been reset".into()))?;
        Ok(observation(state, &self.registry))
    }

    /// Validate, transfer, apply demand, clip, reward, advance the clock.
    pub fn step(&mut self, action_index: usize) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::Contract("step called after the episode finished".into()));
        }
        let before = self
            .state
            .take()
            .ok_or_else(|| Error::Contract("step called before reset".into()))?;
        let action = match decode_action(action_index, self.registry.len()) {
            Ok(a) => a,
            Err(e) => {
                self.state = Some(before);
                return Err(e);
            }
        };

        let feasible = is_feasible(&before, action, &self.registry);
        let reward = compute_reward(&before, action, &self.registry, &self.rewards);
        let need_served = if feasible { need(&before, action.dest, &self.registry) } else { 0 };

        let mut moved = before.clone();
        if feasible {
            moved.inventories[action.source] -= 1;
            moved.inventories[action.dest] += 1;
        }
        let mut next = apply_demand(&moved, &self.profile, &self.registry);
        let hour_executed = before.hour;
        next.hour = (before.hour + 1) % 24;
        self.elapsed += 1;
        let done = self.elapsed >= self.episode_hours;

        if let Some(log) = self.log.as_mut() {
            log.steps.push(EpisodeStep {
                hour: hour_executed,
                source: action.source,
                dest: action.dest,
                reward,
                feasible,
                need_served,
                inventories_before: before.inventories.clone(),
                inventories_after: next.inventories.clone(),
            });
            log.final_state = next.clone();
        }
        self.state = Some(next.clone());
        Ok(StepOutcome {
            next_state: next,
            reward,
            done,
            info: StepInfo {
                action_feasible: feasible,
                need_served,
                hour_executed,
            },
        })
    }

    /// Log of the current (or just finished) episode.
    pub fn episode_log(&self) -> Option<&EpisodeLog> {
        self.log.as_ref()
    }

    pub fn take_episode_log(&mut self) -> Option<EpisodeLog> {
        self.log.take()
    }
}
