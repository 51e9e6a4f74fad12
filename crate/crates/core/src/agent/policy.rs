use rand::Rng;

use super::mlp::argmax;
use crate::error::{Error, Result};

/// Epsilon-greedy choice: a uniform index with probability `epsilon`,
/// otherwise the argmax with lowest-index tie-break.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::Contract("cannot select from an empty Q-vector".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Contract(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..q.len()));
    }
    Ok(argmax(q).expect("non-empty"))
}

/// Linear decay from `start` to `end` over the first `fraction` of
/// `total_steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, fraction: f64, total_steps: u64) -> Self {
        EpsilonSchedule {
            start,
            end,
            decay_steps: (fraction * total_steps as f64).round() as u64,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}
