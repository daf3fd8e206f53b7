use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// What a Byzantine node sends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackBehavior {
    /// A fresh `U(lo, hi)` draw per iteration, broadcast to every receiver.
    UniformRandom { lo: f64, hi: f64 },
    /// The same value every iteration.
    Constant { value: f64 },
    /// `-scale` times the mean of the sender's honest in-neighbors' values.
    SignFlip { scale: f64 },
    /// An independent `U(lo, hi)` draw for every receiver; not a broadcast.
    ValueSpoof { lo: f64, hi: f64 },
}

/// Byzantine nodes and their behavior. Every emitted value is a pure
/// function of `(seed, tick, sender, receiver, observed)`, so runs replay
/// exactly and honest trajectories depend on the attack only through the
/// values received.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    byzantine: BTreeSet<usize>,
    behavior: AttackBehavior,
    seed: u64,
}

/// Marker for broadcast draws in the seed path.
const ALL_RECEIVERS: u64 = u64::MAX;

impl AttackSpec {
    pub fn new(
        byzantine: impl IntoIterator<Item = usize>,
        behavior: AttackBehavior,
        seed: u64,
    ) -> Result<Self> {
        match behavior {
            AttackBehavior::UniformRandom { lo, hi } | AttackBehavior::ValueSpoof { lo, hi }
                if !(lo <= hi) =>
            {
                return Err(Error::Config(format!("attack range [{lo}, {hi}] is empty")));
            }
            _ => {}
        }
        Ok(Self {
            byzantine: byzantine.into_iter().collect(),
            behavior,
            seed,
        })
    }

    /// No Byzantine nodes.
    pub fn none() -> Self {
        Self {
            byzantine: BTreeSet::new(),
            behavior: AttackBehavior::Constant { value: 0.0 },
            seed: 0,
        }
    }

    pub fn byzantine(&self) -> &BTreeSet<usize> {
        &self.byzantine
    }

    pub fn is_byzantine(&self, node: usize) -> bool {
        self.byzantine.contains(&node)
    }

    pub fn behavior(&self) -> AttackBehavior {
        self.behavior
    }

    pub fn validate(&self, node_count: usize) -> Result<()> {
        match self.byzantine.iter().find(|&&n| n >= node_count) {
            Some(&n) => Err(Error::UnknownNode(n + 1, node_count)),
            None if self.byzantine.len() >= node_count => {
                Err(Error::Config("every node is Byzantine".into()))
            }
            None => Ok(()),
        }
    }

    fn draw_rng(&self, tick: u64, sender: usize, receiver: usize) -> rng::StreamRng {
        let receiver = match self.behavior {
            AttackBehavior::ValueSpoof { .. } => receiver as u64,
            _ => ALL_RECEIVERS,
        };
        rng::stream(self.seed, &[tick, sender as u64, receiver])
    }

    /// Scalar sent by `sender` to `receiver` at communication tick `tick`.
    /// `observed` is the mean of the sender's honest in-neighbors' values.
    pub fn scalar(&self, tick: u64, sender: usize, receiver: usize, observed: f64) -> f64 {
        match self.behavior {
            AttackBehavior::Constant { value } => value,
            AttackBehavior::SignFlip { scale } => -scale * observed,
            AttackBehavior::UniformRandom { lo, hi } | AttackBehavior::ValueSpoof { lo, hi } => {
                let u: f64 = self.draw_rng(tick, sender, receiver).random();
                lo + (hi - lo) * u
            }
        }
    }

    /// Vector message for vector-valued protocols; coordinates are drawn
    /// independently.
    pub fn vector(&self, tick: u64, sender: usize, receiver: usize, observed: &[f64]) -> Vec<f64> {
        match self.behavior {
            AttackBehavior::Constant { value } => vec![value; observed.len()],
            AttackBehavior::SignFlip { scale } => observed.iter().map(|v| -scale * v).collect(),
            AttackBehavior::UniformRandom { lo, hi } | AttackBehavior::ValueSpoof { lo, hi } => {
                let mut rng = self.draw_rng(tick, sender, receiver);
                (0..observed.len())
                    .map(|_| lo + (hi - lo) * rng.random::<f64>())
                    .collect()
            }
        }
    }
}
