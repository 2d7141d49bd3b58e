//! Seedable multi-agent environments: a grid battle against scripted
//! enemies, and cooperative spread over landmarks in the unit square.

mod battle;
mod spread;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;

pub use battle::{BattleConfig, BattleRewards, UnitStats, BATTLE_CHANNELS};
pub use spread::{SpreadConfig, SPREAD_ACTIONS};

#[derive(Debug, Clone, PartialEq)]
pub enum EnvError {
    Config(String),
    ActionLength { expected: usize, got: usize },
    InvalidAction { agent: usize, action: usize },
    UnknownAgent(usize),
    NotBattle,
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::Config(m) => write!(f, "invalid scenario config: {m}"),
            EnvError::ActionLength { expected, got } => {
                write!(f, "joint action has {got} entries, expected {expected}")
            }
            EnvError::InvalidAction { agent, action } => write!(f, "action {action} invalid for agent {agent}"),
            EnvError::UnknownAgent(id) => write!(f, "no agent with id {id}"),
            EnvError::NotBattle => write!(f, "operation requires a battle scenario"),
        }
    }
}

impl core::error::Error for EnvError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Team {
    Ally,
    Enemy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Position {
    Cell { x: i32, y: i32 },
    Point { x: f64, y: f64 },
}

impl Position {
    pub fn to_point(self) -> [f64; 2] {
        match self {
            Position::Cell { x, y } => [x as f64, y as f64],
            Position::Point { x, y } => [x, y],
        }
    }

    pub fn cell(self) -> Option<(i32, i32)> {
        match self {
            Position::Cell { x, y } => Some((x, y)),
            Position::Point { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub position: Position,
    pub health: i32,
    pub alive: bool,
    pub team: Team,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub landmarks: Vec<[f64; 2]>,
    pub tick: usize,
    pub rng_seed: u64,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) enemy_rng: ChaCha8Rng,
}

impl WorldState {
    pub fn position(&self, id: usize) -> [f64; 2] {
        self.agents[id].position.to_point()
    }

    pub fn is_alive(&self, id: usize) -> bool {
        self.agents.get(id).is_some_and(|a| a.alive)
    }

    /// Compact FNV-1a digest of the observable state, for trace audits.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(self.tick as u64).to_le_bytes());
        for a in &self.agents {
            let p = a.position.to_point();
            eat(&p[0].to_le_bytes());
            eat(&p[1].to_le_bytes());
            eat(&a.health.to_le_bytes());
            eat(&[a.alive as u8]);
        }
        for l in &self.landmarks {
            eat(&l[0].to_le_bytes());
            eat(&l[1].to_le_bytes());
        }
        h
    }
}

/// Per-agent local observation. `window` is a channels-last grid (battle),
/// `relative` holds offsets to other agents and landmarks (spread).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub window: Vec<f64>,
    pub relative: Vec<f64>,
    pub self_features: Vec<f64>,
}

impl Observation {
    pub fn zeroed(layout: &ObsLayout) -> Self {
        let window = match layout.grid {
            Some(g) => alloc::vec![0.0; g.side * g.side * g.channels],
            None => Vec::new(),
        };
        Self {
            window,
            relative: alloc::vec![0.0; layout.relative_dim],
            self_features: alloc::vec![0.0; layout.self_dim],
        }
    }

    /// Network input: window, then relative offsets, then own features.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        self.extend_into(&mut v);
        v
    }

    pub fn extend_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.window);
        out.extend_from_slice(&self.relative);
        out.extend_from_slice(&self.self_features);
    }

    pub fn len(&self) -> usize {
        self.window.len() + self.relative.len() + self.self_features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub side: usize,
    pub channels: usize,
}

/// Shape of the flattened observation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    pub grid: Option<GridLayout>,
    pub relative_dim: usize,
    pub self_dim: usize,
}

impl ObsLayout {
    pub fn flat_dim(&self) -> usize {
        self.grid.map_or(0, |g| g.side * g.side * g.channels) + self.relative_dim + self.self_dim
    }
}

/// One discrete action index per agent, indexed by agent id.
pub type JointAction = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardKind {
    Hit,
    Death,
    BlankAttack,
    Success,
    Overload,
    Shaping,
}

impl RewardKind {
    pub fn tag(self) -> &'static str {
        match self {
            RewardKind::Hit => "hit",
            RewardKind::Death => "death",
            RewardKind::BlankAttack => "blank_attack",
            RewardKind::Success => "success",
            RewardKind::Overload => "overload",
            RewardKind::Shaping => "shaping",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardEvent {
    pub agent: usize,
    pub kind: RewardKind,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    /// Itemized rewards; each agent's reward is the sum of its events in order.
    pub events: Vec<RewardEvent>,
    /// Enemies killed by allies this step.
    pub kills: usize,
    /// Allies killed this step.
    pub deaths: usize,
    pub hits: usize,
    pub blank_attacks: usize,
    pub successes: usize,
    pub overloads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub rewards: Vec<f64>,
    pub next_observations: Vec<Observation>,
    /// The episode is over, by elimination or by reaching the horizon.
    pub done: bool,
    /// The episode ended for a reason other than the horizon.
    pub terminal: bool,
    pub info: StepInfo,
}

/// A scenario together with its validated configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Scenario {
    Battle(BattleConfig),
    Spread(SpreadConfig),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Battle(_) => "battle",
            Scenario::Spread(_) => "spread",
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            Scenario::Battle(c) => c.validate(),
            Scenario::Spread(c) => c.validate(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Scenario::Battle(c) => c.horizon,
            Scenario::Spread(c) => c.horizon,
        }
    }

    pub fn set_horizon(&mut self, horizon: usize) {
        match self {
            Scenario::Battle(c) => c.horizon = horizon,
            Scenario::Spread(c) => c.horizon = horizon,
        }
    }

    /// Total agents in the world, including scripted enemies.
    pub fn agent_count(&self) -> usize {
        match self {
            Scenario::Battle(c) => c.allies + c.enemies,
            Scenario::Spread(c) => c.agents,
        }
    }

    /// Agents driven by the learner; they occupy ids `0..controlled`.
    pub fn controlled(&self) -> usize {
        match self {
            Scenario::Battle(c) => c.allies,
            Scenario::Spread(c) => c.agents,
        }
    }

    /// Action-space size of learner-controlled agents.
    pub fn action_count(&self) -> usize {
        match self {
            Scenario::Battle(c) => c.action_count(Team::Ally),
            Scenario::Spread(_) => SPREAD_ACTIONS,
        }
    }

    pub fn obs_layout(&self) -> ObsLayout {
        match self {
            Scenario::Battle(c) => c.obs_layout(),
            Scenario::Spread(c) => c.obs_layout(),
        }
    }

    /// Radius used for communication neighbourhoods, in arena units.
    pub fn default_radius(&self) -> f64 {
        match self {
            Scenario::Battle(_) => 6.0,
            Scenario::Spread(_) => 0.6,
        }
    }

    pub fn reset(&self, seed: u64) -> Result<WorldState, EnvError> {
        self.validate()?;
        match self {
            Scenario::Battle(c) => c.reset(seed),
            Scenario::Spread(c) => c.reset(seed),
        }
    }

    pub fn observe(&self, state: &WorldState, agent: usize) -> Result<Observation, EnvError> {
        if agent >= state.agents.len() {
            return Err(EnvError::UnknownAgent(agent));
        }
        if !state.agents[agent].alive {
            return Ok(Observation::zeroed(&self.obs_layout()));
        }
        Ok(match self {
            Scenario::Battle(c) => c.observe(state, agent),
            Scenario::Spread(c) => c.observe(state, agent),
        })
    }

    /// Observations of the learner-controlled agents.
    pub fn observe_controlled(&self, state: &WorldState) -> Result<Vec<Observation>, EnvError> {
        (0..self.controlled()).map(|i| self.observe(state, i)).collect()
    }

    /// Advances the world by one tick. `joint` holds one action per agent
    /// (enemies included); actions of dead agents are ignored.
    pub fn step(&self, state: &mut WorldState, joint: &[usize]) -> Result<StepResult, EnvError> {
        if joint.len() != state.agents.len() {
            return Err(EnvError::ActionLength {
                expected: state.agents.len(),
                got: joint.len(),
            });
        }
        let info = match self {
            Scenario::Battle(c) => c.step(state, joint)?,
            Scenario::Spread(c) => c.step(state, joint)?,
        };
        state.tick += 1;
        let mut rewards = alloc::vec![0.0; state.agents.len()];
        for e in &info.events {
            rewards[e.agent] += e.value;
        }
        let terminal = match self {
            Scenario::Battle(_) => battle::one_side_eliminated(state),
            Scenario::Spread(_) => false,
        };
        let done = terminal || state.tick >= self.horizon();
        let next_observations = (0..state.agents.len())
            .map(|i| self.observe(state, i))
            .collect::<Result<_, _>>()?;
        Ok(StepResult {
            rewards,
            next_observations,
            done,
            terminal,
            info,
        })
    }

    /// Scripted opponent: actions for every agent, no-ops for non-enemies.
    pub fn enemy_policy(&self, state: &mut WorldState) -> Result<Vec<usize>, EnvError> {
        match self {
            Scenario::Battle(c) => Ok(c.enemy_policy(state)),
            Scenario::Spread(_) => Err(EnvError::NotBattle),
        }
    }
}
