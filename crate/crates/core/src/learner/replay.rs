use alloc::vec::Vec;

use rand::Rng;

/// One joint step of the learner-controlled agents (ids `0..agents`).
///
/// Observations are flattened per agent and stored in single precision;
/// agents that are dead hold zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<f32>,
    pub next_observations: Vec<f32>,
    pub positions: Vec<[f64; 2]>,
    pub next_positions: Vec<[f64; 2]>,
    pub alive: Vec<bool>,
    pub next_alive: Vec<bool>,
    /// Weights in force when the step's graph was elected.
    pub weights: Vec<u8>,
    /// Leaders of the previous step's graph, the election's starting point.
    pub prev_leaders: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// The episode ended here for a reason other than the horizon; no bootstrapping.
    pub terminal: bool,
    pub state_digest: u64,
}

impl Transition {
    pub fn agents(&self) -> usize {
        self.alive.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.len() / self.agents().max(1)
    }

    pub fn observation(&self, agent: usize) -> &[f32] {
        let d = self.obs_dim();
        &self.observations[agent * d..(agent + 1) * d]
    }

    pub fn next_observation(&self, agent: usize) -> &[f32] {
        let d = self.obs_dim();
        &self.next_observations[agent * d..(agent + 1) * d]
    }

    pub fn live(&self) -> Vec<usize> {
        (0..self.agents()).filter(|&i| self.alive[i]).collect()
    }

    pub fn next_live(&self) -> Vec<usize> {
        (0..self.agents()).filter(|&i| self.next_alive[i]).collect()
    }

    /// Checks that every per-agent record has the same length and rewards are finite.
    pub fn is_consistent(&self) -> bool {
        let n = self.agents();
        n > 0
            && self.observations.len().is_multiple_of(n)
            && self.next_observations.len() == self.observations.len()
            && [
                self.positions.len(),
                self.next_positions.len(),
                self.next_alive.len(),
                self.weights.len(),
                self.actions.len(),
                self.rewards.len(),
            ]
            .iter()
            .all(|&l| l == n)
            && self.rewards.iter().all(|r| r.is_finite())
    }
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, k: usize) -> Option<&Transition> {
        self.items.get(k)
    }

    /// Distinct slots drawn uniformly, `min(batch, len)` of them.
    pub fn sample_indices<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        rand::seq::index::sample(rng, self.items.len(), batch.min(self.items.len())).into_vec()
    }

    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<&Transition> {
        self.sample_indices(batch, rng).into_iter().map(|k| &self.items[k]).collect()
    }
}
