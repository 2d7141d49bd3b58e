use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{CostSummary, EpisodeMetrics, EvalReport, StepTrace, TrialReport};
use super::{HarnessError, RunConfig};
use crate::env::{Observation, Scenario, WorldState};
use crate::hcomm::ObsBatch;
use crate::learner::{select_discrete, Learner, ReplayBuffer, Transition};
use crate::numcore::Tape;
use crate::topology::{account_cost, Topology, TopologyKind, WeightAssignment};

/// Independent, well-mixed seed for a (stream, index) pair of a run seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 0;
const STREAM_EXPLORE: u64 = 1;
const STREAM_REPLAY: u64 = 2;
const STREAM_EPISODE: u64 = 3;
pub(super) const STREAM_EVAL_EPISODE: u64 = 4;
pub(super) const STREAM_EVAL_ACT: u64 = 5;

/// Hooks for logging and checkpointing during [`train`].
pub trait TrainObserver {
    /// Whether [`TrainObserver::on_step`] should be called at all.
    fn wants_steps(&self) -> bool {
        false
    }

    fn on_step(&mut self, _trace: &StepTrace) -> Result<(), String> {
        Ok(())
    }

    fn on_episode(&mut self, _metrics: &EpisodeMetrics) -> Result<(), String> {
        Ok(())
    }

    /// Called every `eval_every` episodes with the evaluation just run.
    fn on_checkpoint(&mut self, _episode: usize, _learner: &Learner, _eval: &EvalReport) -> Result<(), String> {
        Ok(())
    }
}

pub struct NullObserver;

impl TrainObserver for NullObserver {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learner: Learner,
    pub metrics: Vec<EpisodeMetrics>,
    pub transitions: usize,
    pub updates: usize,
}

pub(super) struct Decision {
    pub(super) weights: Vec<u8>,
    pub(super) topology: Topology,
    pub(super) actions: Vec<usize>,
}

fn live_ids(state: &WorldState, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| state.is_alive(i)).collect()
}

/// Weight picks, election and action picks for one step.
pub(super) fn decide<R: Rng>(
    cfg: &RunConfig,
    learner: &Learner,
    state: &WorldState,
    obs: &[Observation],
    prev: &[usize],
    epsilon: f64,
    rng: &mut R,
) -> Result<Decision, HarnessError> {
    let n = obs.len();
    let live = live_ids(state, n);
    let live_obs: Vec<Observation> = live.iter().map(|&i| obs[i].clone()).collect();
    let mut weights = vec![cfg.fixed_weight.unwrap_or(0); n];
    if let Some(w) = &learner.weights {
        let mut tape = Tape::new();
        let q = w.net.forward(&mut tape, &w.params, &ObsBatch::from_observations(w.net.layout, &live_obs))?;
        let q = tape.value(q);
        for (r, &i) in live.iter().enumerate() {
            weights[i] = select_discrete(q.row(r), epsilon, rng) as u8;
        }
    }
    let positions: Vec<[f64; 2]> = (0..n).map(|i| state.position(i)).collect();
    let alive: Vec<bool> = (0..n).map(|i| state.is_alive(i)).collect();
    let topology = learner.structure.build(prev, &weights, &positions, &alive)?;
    let q = learner.policy.q_values(&learner.params, &live, &live_obs, &topology)?;
    let mut actions = vec![0; n];
    for (r, &i) in live.iter().enumerate() {
        actions[i] = select_discrete(&q[r], epsilon, rng);
    }
    Ok(Decision {
        weights,
        topology,
        actions,
    })
}

pub(super) fn joint_action(scenario: &Scenario, state: &mut WorldState, own: &[usize]) -> Result<Vec<usize>, HarnessError> {
    let mut joint = match scenario {
        Scenario::Battle(_) => scenario.enemy_policy(state)?,
        Scenario::Spread(_) => vec![0; state.agents.len()],
    };
    joint[..own.len()].copy_from_slice(own);
    Ok(joint)
}

fn flatten(obs: &[Observation]) -> Vec<f32> {
    let mut out = Vec::new();
    for o in obs {
        out.extend(o.window.iter().chain(&o.relative).chain(&o.self_features).map(|&v| v as f32));
    }
    out
}

fn check_invariants(cfg: &RunConfig, d: &Decision, state_before: (&[usize], &[[f64; 2]]), at: (usize, usize)) -> Result<(), HarnessError> {
    let (live, positions) = state_before;
    let w = WeightAssignment::new(d.weights.clone())?;
    let weights = (cfg.topology == TopologyKind::Hierarchical).then_some(&w);
    let v = d.topology.violations(live, positions, weights, cfg.cluster.radius);
    if let Some(first) = v.into_iter().next() {
        return Err(HarnessError::Invariant {
            episode: at.0,
            step: at.1,
            detail: first,
        });
    }
    Ok(())
}

/// Runs the full training loop for one seed.
///
/// Each step every live agent picks a weight (ε-greedy on the weight
/// generator, or the fixed weight), the graph is elected starting from the
/// previous step's leaders (none at episode start), agents act ε-greedily on
/// the communicating policy and the joint step is stored. After each
/// episode `update_rounds` sampled batches train both modules, each followed
/// by a soft target update.
pub fn train<O: TrainObserver>(cfg: &RunConfig, seed: u64, observer: &mut O) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let scen = &cfg.scenario;
    let n = scen.controlled();
    let mut init = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_INIT, 0));
    let mut explore = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_EXPLORE, 0));
    let mut replay_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_REPLAY, 0));
    let mut learner = Learner::new(
        scen.obs_layout(),
        scen.action_count(),
        cfg.net.clone(),
        cfg.learner.clone(),
        cfg.structure(),
        cfg.learns_weights(),
        &mut init,
    )?;
    let mut buffer = ReplayBuffer::new(cfg.learner.replay_capacity);
    let schedule = cfg.learner.epsilon(cfg.episodes);
    let mut metrics = Vec::with_capacity(cfg.episodes);
    let (mut transitions, mut updates) = (0, 0);

    for ep in 0..cfg.episodes {
        let epsilon = schedule.value(ep);
        let mut state = scen.reset(derive_seed(seed, STREAM_EPISODE, ep as u64))?;
        let mut obs = scen.observe_controlled(&state)?;
        let mut prev: Vec<usize> = Vec::new();
        let mut m = EpisodeMetrics {
            episode: ep,
            steps: 0,
            epsilon,
            episode_reward: 0.0,
            mean_step_reward: 0.0,
            weight_loss: None,
            policy_loss: None,
            buffer_size: 0,
            kills: 0,
            deaths: 0,
            hits: 0,
            blank_attacks: 0,
            successes: 0,
            overloads: 0,
            mean_leaders: 0.0,
            mean_messages: 0.0,
        };
        loop {
            let d = decide(cfg, &learner, &state, &obs, &prev, epsilon, &mut explore)?;
            let positions: Vec<[f64; 2]> = (0..n).map(|i| state.position(i)).collect();
            let alive: Vec<bool> = (0..n).map(|i| state.is_alive(i)).collect();
            if cfg!(debug_assertions) {
                check_invariants(cfg, &d, (&live_ids(&state, n), &positions), (ep, m.steps))?;
            }
            let joint = joint_action(scen, &mut state, &d.actions)?;
            let res = scen.step(&mut state, &joint)?;
            let next_obs: Vec<Observation> = res.next_observations[..n].to_vec();
            let rewards = res.rewards[..n].to_vec();
            let t = Transition {
                observations: flatten(&obs),
                next_observations: flatten(&next_obs),
                positions,
                next_positions: (0..n).map(|i| state.position(i)).collect(),
                alive,
                next_alive: (0..n).map(|i| state.is_alive(i)).collect(),
                weights: d.weights.clone(),
                prev_leaders: prev,
                actions: d.actions.clone(),
                rewards: rewards.clone(),
                terminal: res.terminal,
                state_digest: state.digest(),
            };
            if observer.wants_steps() {
                observer
                    .on_step(&StepTrace {
                        episode: ep,
                        step: m.steps,
                        weights: d.weights.clone(),
                        leaders: d.topology.high_level.iter().copied().collect(),
                        edges: d.topology.edges.iter().copied().collect(),
                        actions: d.actions.clone(),
                        rewards: rewards.clone(),
                        state_digest: t.state_digest,
                    })
                    .map_err(HarnessError::Observer)?;
            }
            buffer.push(t);
            transitions += 1;
            m.steps += 1;
            m.episode_reward += rewards.iter().sum::<f64>() / n as f64;
            m.kills += res.info.kills;
            m.deaths += res.info.deaths;
            m.hits += res.info.hits;
            m.blank_attacks += res.info.blank_attacks;
            m.successes += res.info.successes;
            m.overloads += res.info.overloads;
            m.mean_leaders += d.topology.high_level.len() as f64;
            m.mean_messages += d.topology.edges.len() as f64;
            prev = d.topology.high_level.iter().copied().collect();
            obs = next_obs;
            if res.done {
                break;
            }
        }
        let steps = m.steps as f64;
        m.mean_step_reward = m.episode_reward / steps;
        m.mean_leaders /= steps;
        m.mean_messages /= steps;

        if buffer.len() >= cfg.learner.batch_size {
            let (mut wl, mut pl) = (0.0, 0.0);
            for _ in 0..cfg.learner.update_rounds {
                let batch = buffer.sample(cfg.learner.batch_size, &mut replay_rng);
                let s = learner.update(&batch).map_err(|e| nonfinite_context(e, ep))?;
                learner.update_targets()?;
                wl += s.weight_loss.unwrap_or(0.0);
                pl += s.policy_loss;
                updates += 1;
            }
            let k = cfg.learner.update_rounds as f64;
            if cfg.learner.update_rounds > 0 {
                m.policy_loss = Some(pl / k);
                m.weight_loss = learner.weights.as_ref().map(|_| wl / k);
            }
        }
        m.buffer_size = buffer.len();
        observer.on_episode(&m).map_err(HarnessError::Observer)?;
        metrics.push(m);
        if cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0 {
            let report = evaluate(&learner, cfg, cfg.eval_trials, seed)?;
            observer.on_checkpoint(ep + 1, &learner, &report).map_err(HarnessError::Observer)?;
        }
    }
    Ok(TrainOutcome {
        learner,
        metrics,
        transitions,
        updates,
    })
}

fn nonfinite_context(e: crate::learner::LearnError, episode: usize) -> HarnessError {
    match e {
        crate::learner::LearnError::Num(crate::numcore::NumError::NonFinite { op }) => HarnessError::Diverged {
            episode,
            detail: alloc::format!("non-finite value in {op}"),
        },
        other => HarnessError::Learn(other),
    }
}

/// Greedy rollouts of `learner` on `trials` seeded episodes.
pub fn evaluate(learner: &Learner, cfg: &RunConfig, trials: usize, seed: u64) -> Result<EvalReport, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Config("trials must be positive".into()));
    }
    let scen = &cfg.scenario;
    if learner.policy.actions != scen.action_count() || learner.policy.layout != scen.obs_layout() {
        return Err(HarnessError::Checkpoint("policy does not match the scenario's action or observation space".into()));
    }
    let n = scen.controlled();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_EVAL_ACT, 0));
    let mut cost = CostSummary::default();
    let mut rows = Vec::with_capacity(trials);
    let (mut reward_sum, mut step_sum) = (0.0, 0usize);
    for trial in 0..trials {
        let env_seed = derive_seed(seed, STREAM_EVAL_EPISODE, trial as u64);
        let mut state = scen.reset(env_seed)?;
        let mut obs = scen.observe_controlled(&state)?;
        let mut prev: Vec<usize> = Vec::new();
        let mut row = TrialReport {
            trial,
            seed: env_seed,
            steps: 0,
            episode_reward: 0.0,
            kills: 0,
            deaths: 0,
            successes: 0,
            overloads: 0,
        };
        loop {
            let d = decide(cfg, learner, &state, &obs, &prev, 0.0, &mut rng)?;
            cost.add(&account_cost(&d.topology));
            let joint = joint_action(scen, &mut state, &d.actions)?;
            let res = scen.step(&mut state, &joint)?;
            row.steps += 1;
            row.episode_reward += res.rewards[..n].iter().sum::<f64>() / n as f64;
            row.kills += res.info.kills;
            row.deaths += res.info.deaths;
            row.successes += res.info.successes;
            row.overloads += res.info.overloads;
            prev = d.topology.high_level.iter().copied().collect();
            obs = res.next_observations[..n].to_vec();
            if res.done {
                break;
            }
        }
        reward_sum += row.episode_reward;
        step_sum += row.steps;
        rows.push(row);
    }
    let mean_reward = match scen {
        Scenario::Battle(_) => reward_sum / step_sum as f64,
        Scenario::Spread(_) => reward_sum / trials as f64,
    };
    let n_kills = rows.iter().map(|r| r.kills).sum();
    let n_deaths = rows.iter().map(|r| r.deaths).sum();
    Ok(EvalReport {
        mean_reward,
        n_kills,
        n_deaths,
        kd_ratio: EvalReport::kd(n_kills, n_deaths),
        n_success: rows.iter().map(|r| r.successes).sum(),
        n_overload: rows.iter().map(|r| r.overloads).sum(),
        cost,
        trials: rows,
    })
}
