use lsc_core::env::{BattleConfig, RewardKind, Scenario, SpreadConfig, Team};
use lsc_core::learner::{bellman_target, select_discrete, Transition};
use lsc_core::numcore::{adam_step, segment_sum, AdamConfig, Mlp, ParamSet, Tape, Tensor};
use lsc_core::topology::{
    account_cost, build_baseline, cbrp, ClusterConfig, Topology, TopologyKind, WeightAssignment, WEIGHT_LEVELS,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_battle() -> Scenario {
    Scenario::Battle(BattleConfig {
        width: 10,
        height: 10,
        allies: 5,
        enemies: 5,
        horizon: 40,
        ..BattleConfig::default()
    })
}

fn spread() -> Scenario {
    Scenario::Spread(SpreadConfig {
        horizon: 20,
        ..SpreadConfig::default()
    })
}

/// Plays `actions` (indices folded into each agent's action range) and
/// returns the per-step digests and rewards.
fn play(scen: &Scenario, seed: u64, actions: &[Vec<usize>]) -> Vec<(u64, Vec<f64>)> {
    let mut s = scen.reset(seed).unwrap();
    let mut out = Vec::new();
    for a in actions {
        let mut joint = match scen {
            Scenario::Battle(_) => scen.enemy_policy(&mut s).unwrap(),
            Scenario::Spread(_) => vec![0; s.agents.len()],
        };
        for i in 0..scen.controlled() {
            joint[i] = if s.is_alive(i) { a[i] % scen.action_count() } else { 0 };
        }
        let r = scen.step(&mut s, &joint).unwrap();
        out.push((s.digest(), r.rewards));
        if r.done {
            break;
        }
    }
    out
}

fn action_seqs() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..64, 12), 1..25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trajectories_are_deterministic(seed in any::<u64>(), acts in action_seqs()) {
        for scen in [small_battle(), spread()] {
            prop_assert_eq!(play(&scen, seed, &acts), play(&scen, seed, &acts));
        }
    }

    #[test]
    fn rewards_are_the_sum_of_events(seed in any::<u64>(), acts in action_seqs()) {
        for scen in [small_battle(), spread()] {
            let mut s = scen.reset(seed).unwrap();
            for a in &acts {
                let mut joint = match &scen {
                    Scenario::Battle(_) => scen.enemy_policy(&mut s).unwrap(),
                    Scenario::Spread(_) => vec![0; s.agents.len()],
                };
                for i in 0..scen.controlled() {
                    joint[i] = if s.is_alive(i) { a[i] % scen.action_count() } else { 0 };
                }
                let r = scen.step(&mut s, &joint).unwrap();
                for (agent, &total) in r.rewards.iter().enumerate() {
                    let mut sum = 0.0;
                    for e in r.info.events.iter().filter(|e| e.agent == agent) {
                        sum += e.value;
                    }
                    prop_assert_eq!(total, sum);
                }
                if r.done {
                    break;
                }
            }
        }
    }

    #[test]
    fn battle_conserves_kills_and_health(seed in any::<u64>(), acts in action_seqs()) {
        let scen = small_battle();
        let mut s = scen.reset(seed).unwrap();
        let (mut kills, mut deaths) = (0, 0);
        for a in &acts {
            let before: Vec<i32> = s.agents.iter().map(|x| x.health).collect();
            let enemies_alive = s.agents.iter().filter(|x| x.team == Team::Enemy && x.alive).count();
            let allies_alive = s.agents.iter().filter(|x| x.team == Team::Ally && x.alive).count();
            let mut joint = scen.enemy_policy(&mut s).unwrap();
            for i in 0..scen.controlled() {
                joint[i] = if s.is_alive(i) { a[i] % scen.action_count() } else { 0 };
            }
            let r = scen.step(&mut s, &joint).unwrap();
            kills += r.info.kills;
            deaths += r.info.deaths;
            for (x, &h) in s.agents.iter().zip(&before) {
                prop_assert!(x.health <= h);
                prop_assert!(x.health >= 0);
                prop_assert_eq!(x.alive, x.health > 0);
            }
            let enemies_now = s.agents.iter().filter(|x| x.team == Team::Enemy && x.alive).count();
            let allies_now = s.agents.iter().filter(|x| x.team == Team::Ally && x.alive).count();
            prop_assert_eq!(r.info.kills, enemies_alive - enemies_now);
            prop_assert_eq!(r.info.deaths, allies_alive - allies_now);
            if r.done {
                break;
            }
        }
        let enemy_deaths = s.agents.iter().filter(|x| x.team == Team::Enemy && !x.alive).count();
        prop_assert_eq!(kills, enemy_deaths);
        let ally_deaths = s.agents.iter().filter(|x| x.team == Team::Ally && !x.alive).count();
        prop_assert_eq!(deaths, ally_deaths);
    }

    #[test]
    fn spread_shaping_is_never_positive(seed in any::<u64>(), acts in action_seqs()) {
        let cfg = SpreadConfig::default();
        let scen = Scenario::Spread(cfg.clone());
        let mut s = scen.reset(seed).unwrap();
        for a in &acts {
            let joint: Vec<usize> = a.iter().map(|x| x % 5).collect();
            let r = scen.step(&mut s, &joint).unwrap();
            for e in r.info.events.iter().filter(|e| e.kind == RewardKind::Shaping) {
                prop_assert!(e.value <= 0.0);
            }
            prop_assert!(cfg.shaping(&s).iter().all(|&v| v <= 0.0));
        }
    }

    #[test]
    fn battle_observation_ignores_far_cells(seed in any::<u64>(), who in 0usize..5, dx in 0i32..10, dy in 0i32..10) {
        let scen = small_battle();
        let mut s = scen.reset(seed).unwrap();
        let (ax, ay) = s.agents[who].position.cell().unwrap();
        let before = scen.observe(&s, who).unwrap();
        // Move some other agent to a free cell outside the 6x6 window, if there is one.
        let outside = |x: i32, y: i32| !(ax - 2..ax + 4).contains(&x) || !(ay - 2..ay + 4).contains(&y);
        let occupied: Vec<(i32, i32)> = s.agents.iter().filter(|a| a.alive).map(|a| a.position.cell().unwrap()).collect();
        let target = (dx, dy);
        let mover = s.agents.iter().position(|a| a.id != who && a.alive && outside(a.position.cell().unwrap().0, a.position.cell().unwrap().1));
        if let Some(m) = mover {
            if outside(target.0, target.1) && !occupied.contains(&target) {
                s.agents[m].position = lsc_core::env::Position::Cell { x: target.0, y: target.1 };
                s.agents[m].health = 1;
                prop_assert_eq!(scen.observe(&s, who).unwrap(), before);
            }
        }
    }
}

fn placement() -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<u8>)> {
    (2usize..=40).prop_flat_map(|n| {
        (
            prop::collection::vec((0.0f64..3.0, 0.0f64..3.0).prop_map(|(x, y)| [x, y]), n),
            prop::collection::vec(0u8..WEIGHT_LEVELS as u8, n),
        )
    })
}

fn elect(prev: &Topology, pos: &[[f64; 2]], w: &[u8], cfg: &ClusterConfig) -> Topology {
    let live: Vec<usize> = (0..pos.len()).collect();
    cbrp(prev, &WeightAssignment::new(w.to_vec()).unwrap(), pos, &live, cfg).unwrap().topology
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cbrp_output_is_sparse_covering_and_a_fixed_point((pos, w) in placement()) {
        let cfg = ClusterConfig::with_radius(0.6);
        let live: Vec<usize> = (0..pos.len()).collect();
        let t = elect(&Topology::empty(TopologyKind::Hierarchical), &pos, &w, &cfg);
        let wa = WeightAssignment::new(w.clone()).unwrap();
        prop_assert!(t.violations(&live, &pos, Some(&wa), cfg.radius).is_empty());
        prop_assert!(!t.high_level.is_empty());
        let again = elect(&t, &pos, &w, &cfg);
        prop_assert_eq!(again, t);
    }

    #[test]
    fn cbrp_ignores_distant_agents((pos, w) in placement(), far in prop::collection::vec((0.0f64..3.0, 0.0f64..3.0, 0u8..3), 1..10)) {
        let cfg = ClusterConfig::with_radius(0.6);
        let n = pos.len();
        let mut all = pos.clone();
        let mut wall = w.clone();
        for &(x, y, wt) in &far {
            all.push([x + 10.0, y]);
            wall.push(wt);
        }
        let alone = elect(&Topology::empty(TopologyKind::Hierarchical), &pos, &w, &cfg);
        let joint = elect(&Topology::empty(TopologyKind::Hierarchical), &all, &wall, &cfg);
        let near = |s: &std::collections::BTreeSet<usize>| s.iter().copied().filter(|&i| i < n).collect::<Vec<_>>();
        prop_assert_eq!(near(&joint.high_level), alone.high_level.iter().copied().collect::<Vec<_>>());
        let near_edges: Vec<_> = joint.edges.iter().copied().filter(|&(a, b)| a < n && b < n).collect();
        prop_assert_eq!(near_edges, alone.edges.iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn segment_sum_is_permutation_invariant(rows in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 3), 0usize..4), 1..20), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let data: Vec<f64> = rows.iter().flat_map(|(r, _)| r.clone()).collect();
        let seg: Vec<usize> = rows.iter().map(|(_, s)| *s).collect();
        let a = segment_sum(&Tensor::matrix(rows.len(), 3, data).unwrap(), &seg, 4).unwrap();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let data2: Vec<f64> = order.iter().flat_map(|&k| rows[k].0.clone()).collect();
        let seg2: Vec<usize> = order.iter().map(|&k| rows[k].1).collect();
        let b = segment_sum(&Tensor::matrix(rows.len(), 3, data2).unwrap(), &seg2, 4).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn backward_is_linear_in_output_grad(seed in any::<u64>(), k in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mlp = Mlp::build(&mut params, "m", &[4, 6, 3], &mut rng).unwrap();
        let x = Tensor::matrix(2, 4, (0..8).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let g1 = Tensor::matrix(2, 3, (0..6).map(|i| (i as f64 * 0.71).cos()).collect()).unwrap();
        let g2 = Tensor::matrix(2, 3, (0..6).map(|i| (i as f64 * 1.3).sin()).collect()).unwrap();
        let grads = |params: &mut ParamSet, g: &Tensor| {
            params.zero_grad();
            let mut tape = Tape::new();
            let xi = tape.input(x.clone()).unwrap();
            let y = mlp.apply(&mut tape, xi, params).unwrap();
            tape.backward(y, g, params).unwrap();
            params.ids().flat_map(|id| params.grad(id).data().to_vec()).collect::<Vec<f64>>()
        };
        let a = grads(&mut params, &g1);
        let b = grads(&mut params, &g2);
        let mut mix = g1.clone();
        mix.scale(k);
        mix.add_assign(&g2);
        let c = grads(&mut params, &mix);
        for ((a, b), c) in a.iter().zip(&b).zip(&c) {
            prop_assert!((k * a + b - c).abs() <= 1e-9 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn forward_leaves_inputs_and_params_untouched(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mlp = Mlp::build(&mut params, "m", &[3, 5, 2], &mut rng).unwrap();
        let snapshot = params.clone();
        let x = Tensor::matrix(4, 3, (0..12).map(|i| i as f64 - 6.0).collect()).unwrap();
        let mut tape = Tape::new();
        let xi = tape.input(x.clone()).unwrap();
        let y = mlp.apply(&mut tape, xi, &params).unwrap();
        let g = Tensor::filled(&[4, 2], 1.0);
        tape.backward(y, &g, &mut params).unwrap();
        prop_assert_eq!(tape.value(xi), &x);
        for ((_, a), (_, b)) in params.iter().zip(snapshot.iter()) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn adam_is_deterministic(seed in any::<u64>(), lr in 1e-5f64..1e-1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mlp = Mlp::build(&mut params, "m", &[3, 4, 1], &mut rng).unwrap();
        let x = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap();
        let step = |mut p: ParamSet| {
            for _ in 0..3 {
                let mut tape = Tape::new();
                let xi = tape.input(x.clone()).unwrap();
                let y = mlp.apply(&mut tape, xi, &p).unwrap();
                tape.backward(y, &Tensor::filled(&[2, 1], 1.0), &mut p).unwrap();
                adam_step(&mut p, &AdamConfig::with_lr(lr));
                p.zero_grad();
            }
            p
        };
        let a = step(params.clone());
        let b = step(params);
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn bellman_target_masks_terminal(r in -10.0f64..10.0, gamma in 0.01f64..0.99, next in -100.0f64..100.0) {
        prop_assert_eq!(bellman_target(r, gamma, None), r);
        prop_assert_eq!(bellman_target(r, gamma, Some(next)), r + gamma * next);
    }

    #[test]
    fn greedy_choice_is_first_maximum(q in prop::collection::vec(-3i32..3, 1..9), seed in any::<u64>()) {
        let qf: Vec<f64> = q.iter().map(|&v| v as f64).collect();
        let best = qf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = qf.iter().position(|&v| v == best).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(select_discrete(&qf, 0.0, &mut rng), first);
        prop_assert!(select_discrete(&qf, 1.0, &mut rng) < qf.len());
    }
}

#[test]
fn closed_form_costs_for_every_size() {
    for n in 1..=50usize {
        let pos: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 * 0.1, 0.0]).collect();
        let live: Vec<usize> = (0..n).collect();
        let fc = account_cost(&build_baseline(TopologyKind::FullyConnected, &pos, &live, 0.6).unwrap());
        assert_eq!(fc.n_msg, n * (n - 1), "fully connected n={n}");
        let star = account_cost(&build_baseline(TopologyKind::Star, &pos, &live, 0.6).unwrap());
        assert_eq!(star.n_msg, 2 * (n - 1), "star n={n}");
    }
}

#[test]
fn transitions_report_consistency() {
    let t = Transition {
        observations: vec![0.0; 4],
        next_observations: vec![0.0; 4],
        positions: vec![[0.0; 2]; 2],
        next_positions: vec![[0.0; 2]; 2],
        alive: vec![true; 2],
        next_alive: vec![true, false],
        weights: vec![0, 1],
        prev_leaders: Vec::new(),
        actions: vec![0, 1],
        rewards: vec![1.0, 2.0],
        terminal: false,
        state_digest: 0,
    };
    assert!(t.is_consistent());
    assert_eq!(t.next_live(), vec![0]);
    let mut bad = t.clone();
    bad.rewards.pop();
    assert!(!bad.is_consistent());
}
