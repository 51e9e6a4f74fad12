//! Deep Q-learning: Bellman targets, gradient updates and the training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::{argmax, QNetwork};
use super::policy::{select_action, EpsilonSchedule};
use super::replay::{ReplayBuffer, Transition};
use crate::env::{EpisodeLog, RebalanceEnv};
use crate::error::{Error, Result};

/// DQN hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_timesteps: u64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learning_starts: u64,
    pub train_freq: u64,
    pub target_sync_interval: u64,
    pub hidden_sizes: [usize; 2],
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    /// Episodes in the learning-curve moving average.
    pub moving_avg_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_timesteps: 1_000_000,
            gamma: 0.99,
            learning_rate: 1e-4,
            buffer_capacity: 50_000,
            batch_size: 64,
            learning_starts: 1_000,
            train_freq: 4,
            target_sync_interval: 1_000,
            hidden_sizes: [128, 128],
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.1,
            moving_avg_window: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma {} must lie in (0, 1)", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return fail(format!(
                "buffer_capacity {} must be at least batch_size {} (> 0)",
                self.buffer_capacity, self.batch_size
            ));
        }
        if self.train_freq == 0 || self.target_sync_interval == 0 {
            return fail("train_freq and target_sync_interval must be positive".into());
        }
        if !(self.epsilon_start <= 1.0 && self.epsilon_start >= self.epsilon_end && self.epsilon_end >= 0.0) {
            return fail(format!(
                "need 1 >= epsilon_start ({}) >= epsilon_end ({}) >= 0",
                self.epsilon_start, self.epsilon_end
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return fail("epsilon_decay_fraction must lie in [0, 1]".into());
        }
        if self.hidden_sizes.contains(&0) || self.moving_avg_window == 0 {
            return fail("hidden sizes and moving_avg_window must be positive".into());
        }
        Ok(())
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule::new(
            self.epsilon_start,
            self.epsilon_end,
            self.epsilon_decay_fraction,
            self.total_timesteps,
        )
    }
}

/// `y = r` for terminal transitions, else `r + gamma * max_a' Q_target(s', a')`.
pub fn compute_targets(batch: &[&Transition], target_net: &QNetwork, gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Contract("cannot compute targets for an empty batch".into()));
    }
    batch
        .iter()
        .map(|t| {
            if t.done {
                return Ok(t.reward);
            }
            let q = target_net.forward(&t.next_state)?;
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(t.reward + gamma * best)
        })
        .collect()
}

/// One Adam step on the batch's squared Bellman error. Returns the loss
/// measured before the update.
pub fn train_step(
    net: &mut QNetwork,
    target_net: &QNetwork,
    optimizer: &mut Adam,
    batch: &[&Transition],
    gamma: f64,
) -> Result<f64> {
    let targets = compute_targets(batch, target_net, gamma)?;
    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grads) = net.mse_gradients(&states, &actions, &targets)?;
    if !loss.is_finite() {
        let worst = targets.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
        return Err(Error::Training(format!(
            "non-finite loss {loss} after {} updates (max |target| {worst:e})",
            optimizer.steps()
        )));
    }
    optimizer.apply(net, &grads);
    if !net.all_finite() {
        return Err(Error::Training(format!(
            "network weights became non-finite at update {}",
            optimizer.steps()
        )));
    }
    Ok(loss)
}

/// One learning-curve row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: u64,
    pub reward: f64,
    pub moving_avg: f64,
}

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "reward", "moving_avg"]).expect("in-memory write");
    for p in curve {
        w.write_record([p.episode.to_string(), p.reward.to_string(), p.moving_avg.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: QNetwork,
    pub curve: Vec<CurvePoint>,
    /// Mean loss over the last (up to) 100 updates; `None` if training never
    /// updated the network.
    pub final_loss: Option<f64>,
    pub updates: u64,
    /// Greedy rollout from `reset(seed)` with the trained network.
    pub rollout: EpisodeLog,
}

/// Builds a freshly initialized network sized for `env`.
pub fn init_network(env: &RebalanceEnv, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<QNetwork> {
    QNetwork::new(env.observation_len(), &cfg.hidden_sizes, env.action_count(), rng)
}

/// Trains a Q-network in `env` for `cfg.total_timesteps` environment steps.
/// Identical `(env, cfg, seed)` give bit-identical results.
pub fn train(env: &mut RebalanceEnv, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = init_network(env, cfg, &mut rng)?;
    let mut target = net.clone();
    let mut optimizer = Adam::new(&net, cfg.learning_rate);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let schedule = cfg.epsilon_schedule();

    let mut curve = Vec::new();
    let mut episode_rewards: Vec<f64> = Vec::new();
    let mut episode_reward = 0.0;
    let mut recent_losses = std::collections::VecDeque::with_capacity(100);
    let mut updates = 0u64;

    if cfg.total_timesteps > 0 {
        env.reset(rng.gen());
    }
    let mut obs = if cfg.total_timesteps > 0 { env.observation()? } else { Vec::new() };

    for t in 0..cfg.total_timesteps {
        let q = net.forward(&obs)?;
        let action = select_action(&q, schedule.value(t), &mut rng)?;
        let out = env.step(action)?;
        let next_obs = env.observation()?;
        episode_reward += out.reward;
        buffer.push(Transition {
            state: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_state: next_obs.clone(),
            done: out.done,
        });

        if out.done {
            episode_rewards.push(episode_reward);
            let window = &episode_rewards[episode_rewards.len().saturating_sub(cfg.moving_avg_window)..];
            curve.push(CurvePoint {
                episode: episode_rewards.len() as u64 - 1,
                reward: episode_reward,
                moving_avg: window.iter().sum::<f64>() / window.len() as f64,
            });
            episode_reward = 0.0;
            env.reset(rng.gen());
            obs = env.observation()?;
        } else {
            obs = next_obs;
        }

        if t >= cfg.learning_starts && t % cfg.train_freq == 0 && buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(cfg.batch_size, &mut rng);
            let loss = train_step(&mut net, &target, &mut optimizer, &batch, cfg.gamma)?;
            updates += 1;
            if recent_losses.len() == 100 {
                recent_losses.pop_front();
            }
            recent_losses.push_back(loss);
        }
        if (t + 1) % cfg.target_sync_interval == 0 {
            target.sync_from(&net)?;
        }
    }

    let final_loss = (!recent_losses.is_empty()).then(|| recent_losses.iter().sum::<f64>() / recent_losses.len() as f64);
    let rollout = greedy_rollout(env, &net, seed)?;
    Ok(TrainOutcome {
        network: net,
        curve,
        final_loss,
        updates,
        rollout,
    })
}

/// Plays one episode from `reset(seed)`, choosing actions with `choose`.
pub fn rollout(env: &mut RebalanceEnv, seed: u64, mut choose: impl FnMut(&[f64]) -> Result<usize>) -> Result<EpisodeLog> {
    env.reset(seed);
    loop {
        let obs = env.observation()?;
        let action = choose(&obs)?;
        if env.step(action)?.done {
            break;
        }
    }
    env.take_episode_log()
        .ok_or_else(|| Error::Contract("episode log missing after rollout".into()))
}

/// Epsilon-zero rollout.
pub fn greedy_rollout(env: &mut RebalanceEnv, net: &QNetwork, seed: u64) -> Result<EpisodeLog> {
    if net.input_dim() != env.observation_len() || net.output_dim() != env.action_count() {
        return Err(Error::Checkpoint(format!(
            "network shape {:?} does not fit {} stations",
            net.shape(),
            env.station_count()
        )));
    }
    rollout(env, seed, |obs| {
        let q = net.forward(obs)?;
        Ok(argmax(&q).expect("non-empty output"))
    })
}

/// Uniform-random baseline rollout.
pub fn random_rollout(env: &mut RebalanceEnv, seed: u64, rng: &mut impl Rng) -> Result<EpisodeLog> {
    let actions = env.action_count();
    rollout(env, seed, |_| Ok(rng.gen_range(0..actions)))
}
