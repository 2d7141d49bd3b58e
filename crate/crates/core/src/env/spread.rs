use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentState, EnvError, ObsLayout, Observation, Position, RewardEvent, RewardKind, StepInfo, Team, WorldState};

/// UP, DOWN, LEFT, RIGHT, STAY.
pub const SPREAD_ACTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SpreadConfig {
    pub agents: usize,
    pub landmarks: usize,
    pub horizon: usize,
    pub step_size: f64,
    /// An agent occupies a landmark when strictly closer than this.
    pub capture_radius: f64,
    /// Landmark offsets are visible only when strictly closer than this.
    pub view_radius: f64,
    /// Agents required per landmark.
    pub occupancy: usize,
    pub success_reward: f64,
    pub overload_penalty: f64,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        Self {
            agents: 12,
            landmarks: 4,
            horizon: 50,
            step_size: 0.1,
            capture_radius: 0.2,
            view_radius: 0.4,
            occupancy: 3,
            success_reward: 2.0,
            overload_penalty: -10.0,
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

impl SpreadConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.into()));
        if self.agents == 0 || self.landmarks == 0 || self.horizon == 0 {
            return bad("agent count, landmark count and horizon must be positive");
        }
        if self.occupancy == 0 || self.occupancy > self.agents {
            return bad("occupancy must be between 1 and the agent count");
        }
        if !(self.step_size > 0.0 && self.capture_radius > 0.0 && self.view_radius > 0.0) {
            return bad("step size and radii must be positive");
        }
        Ok(())
    }

    pub fn obs_layout(&self) -> ObsLayout {
        ObsLayout {
            grid: None,
            relative_dim: 2 * (self.agents - 1) + 3 * self.landmarks,
            self_dim: 2,
        }
    }

    pub(crate) fn reset(&self, seed: u64) -> Result<WorldState, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enemy_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let agents = (0..self.agents)
            .map(|id| AgentState {
                id,
                position: Position::Point {
                    x: rng.random::<f64>(),
                    y: rng.random::<f64>(),
                },
                health: 1,
                alive: true,
                team: Team::Ally,
            })
            .collect();
        let landmarks = (0..self.landmarks).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        Ok(WorldState {
            agents,
            landmarks,
            tick: 0,
            rng_seed: seed,
            rng,
            enemy_rng,
        })
    }

    pub(crate) fn observe(&self, state: &WorldState, agent: usize) -> Observation {
        let me = state.position(agent);
        let mut relative = Vec::with_capacity(self.obs_layout().relative_dim);
        for other in state.agents.iter().filter(|a| a.id != agent) {
            let p = other.position.to_point();
            relative.push(p[0] - me[0]);
            relative.push(p[1] - me[1]);
        }
        let mut visible = Vec::with_capacity(self.landmarks);
        for &l in &state.landmarks {
            if dist(l, me) < self.view_radius {
                relative.push(l[0] - me[0]);
                relative.push(l[1] - me[1]);
                visible.push(1.0);
            } else {
                relative.push(0.0);
                relative.push(0.0);
                visible.push(0.0);
            }
        }
        relative.extend(visible);
        Observation {
            window: Vec::new(),
            relative,
            self_features: alloc::vec![me[0], me[1]],
        }
    }

    /// Negative sum, over landmarks, of the distances to the `occupancy` nearest agents.
    pub fn shaping(&self, state: &WorldState) -> Vec<f64> {
        state
            .landmarks
            .iter()
            .map(|&l| {
                let mut d: Vec<f64> = state.agents.iter().map(|a| dist(a.position.to_point(), l)).collect();
                d.sort_by(|a, b| a.total_cmp(b));
                -d.iter().take(self.occupancy).sum::<f64>()
            })
            .collect()
    }

    pub(crate) fn step(&self, state: &mut WorldState, joint: &[usize]) -> Result<StepInfo, EnvError> {
        if let Some((agent, &action)) = joint.iter().enumerate().find(|(_, &a)| a >= SPREAD_ACTIONS) {
            return Err(EnvError::InvalidAction { agent, action });
        }
        for (a, &act) in state.agents.iter_mut().zip(joint) {
            let [x, y] = a.position.to_point();
            let (dx, dy) = match act {
                0 => (0.0, 1.0),
                1 => (0.0, -1.0),
                2 => (-1.0, 0.0),
                3 => (1.0, 0.0),
                _ => (0.0, 0.0),
            };
            a.position = Position::Point {
                x: (x + dx * self.step_size).clamp(0.0, 1.0),
                y: (y + dy * self.step_size).clamp(0.0, 1.0),
            };
        }
        let mut info = StepInfo::default();
        let mut shared: Vec<(RewardKind, f64)> = Vec::new();
        for &l in &state.landmarks {
            let inside = state
                .agents
                .iter()
                .filter(|a| dist(a.position.to_point(), l) < self.capture_radius)
                .count();
            if inside == self.occupancy {
                info.successes += 1;
                shared.push((RewardKind::Success, self.success_reward));
            } else if inside > self.occupancy {
                info.overloads += 1;
                shared.push((RewardKind::Overload, self.overload_penalty));
            }
        }
        for s in self.shaping(state) {
            shared.push((RewardKind::Shaping, s));
        }
        for agent in 0..state.agents.len() {
            for &(kind, value) in &shared {
                info.events.push(RewardEvent { agent, kind, value });
            }
        }
        Ok(info)
    }
}
