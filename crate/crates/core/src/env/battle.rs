use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AgentState, EnvError, GridLayout, ObsLayout, Observation, Position, RewardEvent, RewardKind, StepInfo, Team,
    WorldState,
};

/// Window channels: wall, own-team presence, own-team health, opponent presence, opponent health.
pub const BATTLE_CHANNELS: usize = 5;
const VIEW: i32 = 6;
// The even-sided window spans offsets -2..=3 around the agent.
const VIEW_LO: i32 = -2;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitStats {
    pub speed: u32,
    pub attack: i32,
    pub health: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BattleRewards {
    pub hit: f64,
    pub death: f64,
    pub blank_attack: f64,
}

impl Default for BattleRewards {
    fn default() -> Self {
        Self {
            hit: 5.0,
            death: -2.0,
            blank_attack: -0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BattleConfig {
    pub width: usize,
    pub height: usize,
    pub allies: usize,
    pub enemies: usize,
    pub ally: UnitStats,
    pub enemy: UnitStats,
    pub horizon: usize,
    pub rewards: BattleRewards,
}

impl Default for BattleConfig {
    fn default() -> Self {
        Self {
            width: 12,
            height: 12,
            allies: 8,
            enemies: 8,
            ally: UnitStats {
                speed: 1,
                attack: 1,
                health: 4,
            },
            enemy: UnitStats {
                speed: 2,
                attack: 2,
                health: 10,
            },
            horizon: 300,
            rewards: BattleRewards::default(),
        }
    }
}

/// Cell offsets reachable by one move at the given speed (Manhattan radius),
/// ordered by (dy, dx).
fn move_offsets(speed: u32) -> Vec<(i32, i32)> {
    let s = speed as i32;
    let mut out = Vec::new();
    for dy in -s..=s {
        for dx in -s..=s {
            let d = dx.abs() + dy.abs();
            if d >= 1 && d <= s {
                out.push((dx, dy));
            }
        }
    }
    out
}

const ATTACK_OFFSETS: [(i32, i32); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BattleAction {
    Noop,
    Move(i32, i32),
    Attack(i32, i32),
}

impl BattleConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.into()));
        if self.width == 0 || self.height == 0 {
            return bad("arena size must be positive");
        }
        if self.allies == 0 || self.enemies == 0 {
            return bad("both teams need at least one agent");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.ally.health <= 0 || self.enemy.health <= 0 || self.ally.speed == 0 || self.enemy.speed == 0 {
            return bad("unit stats must be positive");
        }
        if self.ally.attack < 0 || self.enemy.attack < 0 {
            return bad("attack must be non-negative");
        }
        for n in [self.allies, self.enemies] {
            let (rows, cols) = formation(n, self.height);
            if rows > self.height || 2 * cols > self.width {
                return Err(EnvError::Config(alloc::format!(
                    "{n} agents do not fit a {}x{} arena half",
                    self.width,
                    self.height
                )));
            }
        }
        Ok(())
    }

    pub fn stats(&self, team: Team) -> UnitStats {
        match team {
            Team::Ally => self.ally,
            Team::Enemy => self.enemy,
        }
    }

    pub fn action_count(&self, team: Team) -> usize {
        1 + move_offsets(self.stats(team).speed).len() + ATTACK_OFFSETS.len()
    }

    /// Decodes an action index: 0 is no-op, then moves, then the 8 attacks.
    pub(crate) fn decode(&self, team: Team, action: usize) -> Option<BattleAction> {
        let moves = move_offsets(self.stats(team).speed);
        if action == 0 {
            Some(BattleAction::Noop)
        } else if action <= moves.len() {
            let (dx, dy) = moves[action - 1];
            Some(BattleAction::Move(dx, dy))
        } else if action <= moves.len() + ATTACK_OFFSETS.len() {
            let (dx, dy) = ATTACK_OFFSETS[action - 1 - moves.len()];
            Some(BattleAction::Attack(dx, dy))
        } else {
            None
        }
    }

    pub(crate) fn encode(&self, team: Team, action: BattleAction) -> usize {
        let moves = move_offsets(self.stats(team).speed);
        match action {
            BattleAction::Noop => 0,
            BattleAction::Move(dx, dy) => 1 + moves.iter().position(|&m| m == (dx, dy)).expect("move in set"),
            BattleAction::Attack(dx, dy) => {
                1 + moves.len() + ATTACK_OFFSETS.iter().position(|&m| m == (dx, dy)).expect("attack in set")
            }
        }
    }

    pub fn obs_layout(&self) -> ObsLayout {
        ObsLayout {
            grid: Some(GridLayout {
                side: VIEW as usize,
                channels: BATTLE_CHANNELS,
            }),
            relative_dim: 0,
            self_dim: 3,
        }
    }

    fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub(crate) fn reset(&self, seed: u64) -> Result<WorldState, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enemy_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut occupied = vec![false; self.width * self.height];
        let mut agents = Vec::with_capacity(self.allies + self.enemies);
        for (team, n) in [(Team::Ally, self.allies), (Team::Enemy, self.enemies)] {
            let (rows, cols) = formation(n, self.height);
            let x0 = (self.width / 4).saturating_sub(cols / 2);
            let y0 = (self.height - rows) / 2;
            for k in 0..n {
                let (r, c) = (k % rows, k / rows);
                let mut x = (x0 + c) as i32;
                let y = (y0 + r) as i32;
                if team == Team::Enemy {
                    x = self.width as i32 - 1 - x;
                }
                agents.push(AgentState {
                    id: agents.len(),
                    position: Position::Cell { x, y },
                    health: self.stats(team).health,
                    alive: true,
                    team,
                });
                occupied[y as usize * self.width + x as usize] = true;
            }
        }
        // Jitter: each agent tries one random unit shift into a free in-bounds cell.
        for a in agents.iter_mut() {
            let (dx, dy) = (rng.random_range(-1..=1), rng.random_range(-1..=1));
            let (x, y) = a.position.cell().unwrap();
            let (nx, ny) = (x + dx, y + dy);
            if (dx, dy) != (0, 0) && self.in_bounds(nx, ny) && !occupied[ny as usize * self.width + nx as usize] {
                occupied[y as usize * self.width + x as usize] = false;
                occupied[ny as usize * self.width + nx as usize] = true;
                a.position = Position::Cell { x: nx, y: ny };
            }
        }
        Ok(WorldState {
            agents,
            landmarks: Vec::new(),
            tick: 0,
            rng_seed: seed,
            rng,
            enemy_rng,
        })
    }

    fn occupancy(&self, state: &WorldState) -> Vec<Option<usize>> {
        let mut grid = vec![None; self.width * self.height];
        for a in state.agents.iter().filter(|a| a.alive) {
            let (x, y) = a.position.cell().unwrap();
            grid[y as usize * self.width + x as usize] = Some(a.id);
        }
        grid
    }

    pub(crate) fn observe(&self, state: &WorldState, agent: usize) -> Observation {
        let me = &state.agents[agent];
        let (ax, ay) = me.position.cell().unwrap();
        let grid = self.occupancy(state);
        let side = VIEW as usize;
        let mut window = vec![0.0; side * side * BATTLE_CHANNELS];
        for wy in 0..VIEW {
            for wx in 0..VIEW {
                let (x, y) = (ax + VIEW_LO + wx, ay + VIEW_LO + wy);
                let cell = &mut window[((wy * VIEW + wx) as usize) * BATTLE_CHANNELS..][..BATTLE_CHANNELS];
                if !self.in_bounds(x, y) {
                    cell[0] = 1.0;
                    continue;
                }
                if let Some(other) = grid[y as usize * self.width + x as usize] {
                    let o = &state.agents[other];
                    let frac = o.health as f64 / self.stats(o.team).health as f64;
                    if o.team == me.team {
                        cell[1] = 1.0;
                        cell[2] = frac;
                    } else {
                        cell[3] = 1.0;
                        cell[4] = frac;
                    }
                }
            }
        }
        let self_features = vec![
            me.health as f64 / self.stats(me.team).health as f64,
            ax as f64 / (self.width.max(2) - 1) as f64,
            ay as f64 / (self.height.max(2) - 1) as f64,
        ];
        Observation {
            window,
            relative: Vec::new(),
            self_features,
        }
    }

    pub(crate) fn step(&self, state: &mut WorldState, joint: &[usize]) -> Result<StepInfo, EnvError> {
        let mut decoded = Vec::with_capacity(joint.len());
        for (a, &act) in state.agents.iter().zip(joint) {
            let d = self.decode(a.team, act).ok_or(EnvError::InvalidAction {
                agent: a.id,
                action: act,
            })?;
            decoded.push(if a.alive { d } else { BattleAction::Noop });
        }
        let mut info = StepInfo::default();

        // Movement, sequential in a seeded random order; blocked moves are no-ops.
        let mut grid = self.occupancy(state);
        let mut order: Vec<usize> = state.agents.iter().filter(|a| a.alive).map(|a| a.id).collect();
        order.shuffle(&mut state.rng);
        for id in order {
            if let BattleAction::Move(dx, dy) = decoded[id] {
                let (x, y) = state.agents[id].position.cell().unwrap();
                let (nx, ny) = (x + dx, y + dy);
                if self.in_bounds(nx, ny) && grid[ny as usize * self.width + nx as usize].is_none() {
                    grid[y as usize * self.width + x as usize] = None;
                    grid[ny as usize * self.width + nx as usize] = Some(id);
                    state.agents[id].position = Position::Cell { x: nx, y: ny };
                }
            }
        }

        // Attacks read pre-attack health and resolve simultaneously.
        let mut damage = vec![0i32; state.agents.len()];
        for id in 0..state.agents.len() {
            let a = &state.agents[id];
            let BattleAction::Attack(dx, dy) = decoded[id] else { continue };
            if !a.alive {
                continue;
            }
            let (x, y) = a.position.cell().unwrap();
            let (tx, ty) = (x + dx, y + dy);
            let target = if self.in_bounds(tx, ty) {
                grid[ty as usize * self.width + tx as usize]
            } else {
                None
            };
            match target {
                None => {
                    info.blank_attacks += 1;
                    info.events.push(RewardEvent {
                        agent: id,
                        kind: RewardKind::BlankAttack,
                        value: self.rewards.blank_attack,
                    });
                }
                Some(t) if state.agents[t].team != a.team => {
                    damage[t] += self.stats(a.team).attack;
                    if a.team == Team::Ally {
                        info.hits += 1;
                    }
                    info.events.push(RewardEvent {
                        agent: id,
                        kind: RewardKind::Hit,
                        value: self.rewards.hit,
                    });
                }
                // Teammate in the cell: no effect.
                Some(_) => {}
            }
        }
        for (id, &dmg) in damage.iter().enumerate() {
            let a = &mut state.agents[id];
            if dmg == 0 || !a.alive {
                continue;
            }
            a.health = (a.health - dmg).max(0);
            if a.health == 0 {
                a.alive = false;
                match a.team {
                    Team::Ally => info.deaths += 1,
                    Team::Enemy => info.kills += 1,
                }
                info.events.push(RewardEvent {
                    agent: id,
                    kind: RewardKind::Death,
                    value: self.rewards.death,
                });
            }
        }
        Ok(info)
    }

    /// Attack an adjacent ally if any, else approach the nearest visible
    /// ally, else random-walk. Ties go to the lower ally id.
    pub(crate) fn enemy_policy(&self, state: &mut WorldState) -> Vec<usize> {
        let grid = self.occupancy(state);
        let moves = move_offsets(self.enemy.speed);
        let mut actions = vec![0; state.agents.len()];
        for id in 0..state.agents.len() {
            let me = &state.agents[id];
            if me.team != Team::Enemy || !me.alive {
                continue;
            }
            let (x, y) = me.position.cell().unwrap();
            let nearest = |pred: &dyn Fn(i32, i32) -> bool| -> Option<(i32, i32)> {
                state
                    .agents
                    .iter()
                    .filter(|o| o.alive && o.team == Team::Ally)
                    .filter_map(|o| {
                        let (ox, oy) = o.position.cell().unwrap();
                        pred(ox - x, oy - y).then_some(((ox - x) * (ox - x) + (oy - y) * (oy - y), o.id, ox, oy))
                    })
                    .min_by_key(|&(d, oid, _, _)| (d, oid))
                    .map(|(_, _, ox, oy)| (ox, oy))
            };
            if let Some((ox, oy)) = nearest(&|dx, dy| dx.abs() <= 1 && dy.abs() <= 1) {
                actions[id] = self.encode(Team::Enemy, BattleAction::Attack(ox - x, oy - y));
                continue;
            }
            let visible = |dx: i32, dy: i32| (VIEW_LO..VIEW_LO + VIEW).contains(&dx) && (VIEW_LO..VIEW_LO + VIEW).contains(&dy);
            if let Some((ox, oy)) = nearest(&visible) {
                let here = (ox - x) * (ox - x) + (oy - y) * (oy - y);
                let best = moves
                    .iter()
                    .filter(|&&(dx, dy)| {
                        let (nx, ny) = (x + dx, y + dy);
                        self.in_bounds(nx, ny) && grid[ny as usize * self.width + nx as usize].is_none()
                    })
                    .map(|&(dx, dy)| ((ox - x - dx) * (ox - x - dx) + (oy - y - dy) * (oy - y - dy), (dx, dy)))
                    .filter(|&(d, _)| d < here)
                    .min_by_key(|&(d, _)| d);
                if let Some((_, (dx, dy))) = best {
                    actions[id] = self.encode(Team::Enemy, BattleAction::Move(dx, dy));
                }
                continue;
            }
            actions[id] = state.enemy_rng.random_range(0..=moves.len());
        }
        actions
    }
}

/// Rows and columns of a rectangular formation for `n` agents.
fn formation(n: usize, height: usize) -> (usize, usize) {
    let mut rows = 1;
    while rows * rows < n {
        rows += 1;
    }
    let rows = rows.min(height.max(1));
    (rows, n.div_ceil(rows))
}

pub(crate) fn one_side_eliminated(state: &WorldState) -> bool {
    let alive = |t: Team| state.agents.iter().any(|a| a.alive && a.team == t);
    !alive(Team::Ally) || !alive(Team::Enemy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Scenario;

    fn place(cfg: &BattleConfig, cells: &[(Team, i32, i32)]) -> WorldState {
        let mut s = cfg.reset(0).unwrap();
        s.agents = cells
            .iter()
            .enumerate()
            .map(|(id, &(team, x, y))| AgentState {
                id,
                position: Position::Cell { x, y },
                health: cfg.stats(team).health,
                alive: true,
                team,
            })
            .collect();
        s
    }

    #[test]
    fn action_counts() {
        let c = BattleConfig::default();
        assert_eq!(c.action_count(Team::Ally), 13);
        assert_eq!(c.action_count(Team::Enemy), 21);
        for a in 0..13 {
            assert_eq!(c.encode(Team::Ally, c.decode(Team::Ally, a).unwrap()), a);
        }
        assert!(c.decode(Team::Ally, 13).is_none());
    }

    #[test]
    fn lone_agent_sees_only_itself() {
        let c = BattleConfig::default();
        let s = place(&c, &[(Team::Ally, 6, 6)]);
        let o = c.observe(&s, 0);
        let nonzero: Vec<usize> = o.window.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        // own cell sits at window offset (2, 2)
        let base = (2 * 6 + 2) * BATTLE_CHANNELS;
        assert_eq!(nonzero, vec![base + 1, base + 2]);
    }

    #[test]
    fn corner_agent_sees_walls() {
        let c = BattleConfig::default();
        let s = place(&c, &[(Team::Ally, 0, 0)]);
        let o = c.observe(&s, 0);
        for wy in 0..6i32 {
            for wx in 0..6i32 {
                let (x, y) = (wx - 2, wy - 2);
                let wall = o.window[((wy * 6 + wx) as usize) * BATTLE_CHANNELS];
                assert_eq!(wall == 1.0, x < 0 || y < 0, "cell ({x},{y})");
            }
        }
    }

    #[test]
    fn hit_and_blank_rewards() {
        let c = BattleConfig::default();
        let scen = Scenario::Battle(c.clone());
        let mut s = place(&c, &[(Team::Ally, 3, 3), (Team::Enemy, 4, 3), (Team::Ally, 8, 8)]);
        let hit = c.encode(Team::Ally, BattleAction::Attack(1, 0));
        let blank = c.encode(Team::Ally, BattleAction::Attack(-1, 0));
        let r = scen.step(&mut s, &[hit, 0, blank]).unwrap();
        assert_eq!(r.rewards[0], 5.0);
        assert_eq!(r.rewards[2], -0.01);
        assert_eq!(s.agents[1].health, 9);
    }

    #[test]
    fn simultaneous_kills_reward_every_attacker() {
        let c = BattleConfig::default();
        let scen = Scenario::Battle(c.clone());
        let mut s = place(&c, &[(Team::Ally, 3, 3), (Team::Ally, 5, 3), (Team::Enemy, 4, 3)]);
        s.agents[2].health = 2;
        let right = c.encode(Team::Ally, BattleAction::Attack(1, 0));
        let left = c.encode(Team::Ally, BattleAction::Attack(-1, 0));
        let r = scen.step(&mut s, &[right, left, 0]).unwrap();
        assert_eq!(r.rewards[0], 5.0);
        assert_eq!(r.rewards[1], 5.0);
        assert_eq!(r.rewards[2], -2.0);
        assert_eq!(r.info.kills, 1);
        assert!(r.done && r.terminal, "enemy team eliminated");
    }

    #[test]
    fn enemy_attacks_adjacent_ally_lowest_id_on_tie() {
        let c = BattleConfig::default();
        let scen = Scenario::Battle(c.clone());
        // Allies at equal distance left and right of the enemy.
        let mut s = place(&c, &[(Team::Ally, 5, 5), (Team::Ally, 3, 5), (Team::Enemy, 4, 5)]);
        let acts = scen.enemy_policy(&mut s).unwrap();
        assert_eq!(c.decode(Team::Enemy, acts[2]), Some(BattleAction::Attack(1, 0)));
        assert_eq!(acts[0], 0);
    }

    #[test]
    fn enemy_approaches_visible_ally() {
        let c = BattleConfig::default();
        let mut s = place(&c, &[(Team::Ally, 3, 5), (Team::Enemy, 5, 5)]);
        let acts = c.enemy_policy(&mut s);
        let Some(BattleAction::Move(dx, dy)) = c.decode(Team::Enemy, acts[1]) else { panic!() };
        assert_eq!((dx, dy), (-1, 0));
    }

    #[test]
    fn reset_rejects_overfull_arena() {
        let c = BattleConfig {
            width: 4,
            height: 4,
            allies: 20,
            ..BattleConfig::default()
        };
        assert!(c.validate().is_err());
        let c = BattleConfig {
            allies: 0,
            ..BattleConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
