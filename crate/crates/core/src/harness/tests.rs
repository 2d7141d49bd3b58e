use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::env::{BattleConfig, Scenario, SpreadConfig};

fn tiny_spread(episodes: usize, horizon: usize) -> RunConfig {
    let mut cfg = RunConfig::preset(Scenario::Spread(SpreadConfig {
        agents: 5,
        landmarks: 2,
        horizon,
        ..Default::default()
    }));
    cfg.episodes = episodes;
    cfg.learner.batch_size = 4;
    cfg.learner.update_rounds = 2;
    cfg.eval_trials = 2;
    cfg.net.q_hidden = vec![16];
    cfg
}

#[derive(Default)]
struct Recorder {
    traces: Vec<StepTrace>,
    episodes: usize,
    checkpoints: Vec<(usize, f64)>,
}

impl TrainObserver for Recorder {
    fn wants_steps(&self) -> bool {
        true
    }

    fn on_step(&mut self, t: &StepTrace) -> Result<(), String> {
        self.traces.push(t.clone());
        Ok(())
    }

    fn on_episode(&mut self, _m: &EpisodeMetrics) -> Result<(), String> {
        self.episodes += 1;
        Ok(())
    }

    fn on_checkpoint(&mut self, episode: usize, _l: &crate::learner::Learner, e: &EvalReport) -> Result<(), String> {
        self.checkpoints.push((episode, e.mean_reward));
        Ok(())
    }
}

#[test]
fn single_step_run_stores_one_transition() {
    let mut cfg = tiny_spread(1, 1);
    cfg.learner.batch_size = 1;
    let out = train(&cfg, 3, &mut NullObserver).unwrap();
    assert_eq!(out.transitions, 1);
    assert_eq!(out.updates, 2);
    assert_eq!(out.metrics.len(), 1);
    assert!(out.metrics[0].policy_loss.is_some());
}

#[test]
fn identical_seeds_give_identical_runs() {
    let cfg = tiny_spread(6, 8);
    let a = train(&cfg, 11, &mut NullObserver).unwrap();
    let b = train(&cfg, 11, &mut NullObserver).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(save_learner(&a.learner, &cfg), save_learner(&b.learner, &cfg));
    let c = train(&cfg, 12, &mut NullObserver).unwrap();
    assert_ne!(a.metrics, c.metrics);
}

#[test]
fn observer_sees_steps_episodes_and_checkpoints() {
    let mut cfg = tiny_spread(4, 5);
    cfg.eval_every = 2;
    let mut rec = Recorder::default();
    train(&cfg, 1, &mut rec).unwrap();
    assert_eq!(rec.traces.len(), 20);
    assert_eq!(rec.episodes, 4);
    assert_eq!(rec.checkpoints.iter().map(|c| c.0).collect::<Vec<_>>(), vec![2, 4]);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let cfg = tiny_spread(3, 5);
    let out = train(&cfg, 2, &mut NullObserver).unwrap();
    let bytes = save_learner(&out.learner, &cfg);
    let loaded = load_learner(&bytes, &cfg).unwrap();
    assert_eq!(save_learner(&loaded, &cfg), bytes);
    let a = evaluate(&out.learner, &cfg, 2, 9).unwrap();
    let b = evaluate(&loaded, &cfg, 2, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(CheckpointMeta::read(&bytes).unwrap(), CheckpointMeta::of(&cfg));

    let other = Variant::Idqn.apply(&cfg);
    assert!(matches!(load_learner(&bytes, &other), Err(HarnessError::Checkpoint(_))));
}

#[test]
fn evaluation_rejects_zero_trials_and_counts_battle_outcomes() {
    let cfg = tiny_spread(1, 2);
    let out = train(&cfg, 0, &mut NullObserver).unwrap();
    assert!(evaluate(&out.learner, &cfg, 0, 0).is_err());

    let mut battle = RunConfig::preset(Scenario::Battle(BattleConfig {
        horizon: 30,
        ..Default::default()
    }));
    battle.episodes = 1;
    battle.topology = crate::topology::TopologyKind::None;
    let out = train(&battle, 0, &mut NullObserver).unwrap();
    let r = evaluate(&out.learner, &battle, 3, 0).unwrap();
    assert_eq!(r.trials.len(), 3);
    assert_eq!(r.kd_ratio, EvalReport::kd(r.n_kills, r.n_deaths));
    assert_eq!(r.n_kills, r.trials.iter().map(|t| t.kills).sum::<usize>());
    assert_eq!(r.cost.mean_msg, 0.0);
}

#[test]
fn fixed_variant_routes_through_fixed_weights() {
    let cfg = Variant::LscFix.apply(&tiny_spread(2, 4));
    assert_eq!(cfg.fixed_weight, Some(1));
    let mut rec = Recorder::default();
    let out = train(&cfg, 5, &mut rec).unwrap();
    assert!(out.learner.weights.is_none());
    assert!(rec.traces.iter().all(|t| t.weights.iter().all(|&w| w == 1)));
    assert!(Variant::Lsc.apply(&cfg).learns_weights());
}

#[test]
fn sweep_accounting() {
    let base = tiny_spread(3, 3);
    let mut rows = Vec::new();
    for v in [Variant::Lsc, Variant::Idqn] {
        for seed in 0..3 {
            let cfg = v.apply(&base);
            let out = train(&cfg, seed, &mut NullObserver).unwrap();
            let e = evaluate(&out.learner, &cfg, 1, seed).unwrap();
            rows.push(summarize(v, seed, &out.metrics, Some(&e)));
        }
    }
    rows.push(RunSummary::failed(Variant::Idqn, 9, "boom".into()));
    let agg = aggregate(&rows);
    assert_eq!(rows.len(), 7);
    assert_eq!(agg.len(), 2);
    assert_eq!((agg[1].runs, agg[1].failed), (3, 1));
    let want = rows[..3].iter().map(|r| r.final_reward.unwrap()).sum::<f64>() / 3.0;
    assert!((agg[0].final_reward.unwrap() - want).abs() < 1e-12);
}

#[test]
fn config_validation() {
    let mut cfg = tiny_spread(1, 1);
    cfg.seeds.clear();
    assert!(cfg.validate().is_err());
    let mut cfg = tiny_spread(1, 1);
    cfg.fixed_weight = Some(3);
    assert!(cfg.validate().is_err());
    let mut cfg = tiny_spread(1, 1);
    cfg.topology = crate::topology::TopologyKind::Star;
    cfg.fixed_weight = Some(1);
    assert!(cfg.validate().is_err());
    assert!("lsc-nbor".parse::<Variant>().is_ok());
    assert!("dgn".parse::<Variant>().is_err());
}

#[test]
fn snapshot_messages_match_edge_count() {
    let cfg = tiny_spread(2, 6);
    let out = train(&cfg, 4, &mut NullObserver).unwrap();
    let snap = inspect(&out.learner, &cfg, 4, 3).unwrap();
    assert_eq!(snap.step, 3);
    assert_eq!(snap.q.rows(), snap.agents.len());
    let sent: usize = snap
        .messages
        .iter()
        .map(|m| {
            assert_eq!(m.payload.rows(), m.pairs.len());
            m.pairs.iter().filter(|(a, b)| a != b).count()
        })
        .sum();
    assert_eq!(sent, snap.cost.n_msg);
    let late = inspect(&out.learner, &cfg, 4, 99).unwrap();
    assert_eq!(late.step, 5);
}
