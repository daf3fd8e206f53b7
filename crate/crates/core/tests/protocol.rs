use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;

use byrdie::baselines::{
    run_centralized_cd, run_dgd, run_local_cd, CdConfig, CdUpdate, CentralizedCdConfig, DgdConfig,
};
use byrdie::data::{partition, synth_two_class, Sample, Shard};
use byrdie::learning::{LossKind, LossModel};
use byrdie::metrics::consensus_stats;
use byrdie::protocol::{
    run_byrdie, screen, AttackBehavior, AttackSpec, Init, NoHooks, ProtocolConfig, Snapshot,
    StepSchedule,
};
use byrdie::rng;
use byrdie::topology::DirectedGraph;

fn synthetic_shards(nodes: &[usize], per_node: usize, dim: usize, seed: u64) -> BTreeMap<usize, Shard> {
    let data = synth_two_class(dim, 1.0, 0.5, nodes.len() * per_node + 10, &mut rng::stream(seed, &[0])).unwrap();
    partition(&data, nodes, per_node, true, &mut rng::stream(seed, &[1]))
        .unwrap()
        .shards
}

fn logistic() -> LossModel {
    LossModel::linear(LossKind::Logistic, 0.01).unwrap()
}

proptest! {
    #[test]
    fn kept_values_are_bracketed_by_honest_values(
        honest in prop::collection::vec(-10.0f64..10.0, 1..8),
        byzantine in prop::collection::vec(
            prop_oneof![
                -1e9f64..1e9,
                Just(f64::INFINITY),
                Just(f64::NEG_INFINITY),
                Just(f64::NAN),
            ],
            0..4,
        ),
        extra_b in 0usize..2,
        seed in any::<u64>(),
    ) {
        let b = byzantine.len() + extra_b;
        prop_assume!(honest.len() + byzantine.len() > 2 * b);
        let mut values: Vec<(usize, f64)> = honest.iter().copied().enumerate().collect();
        values.extend(byzantine.iter().enumerate().map(|(i, &v)| (100 + i, v)));
        // shuffle senders so the tie rule sees arbitrary ids
        let mut r = rng::stream(seed, &[]);
        for i in (1..values.len()).rev() {
            values.swap(i, r.random_range(0..=i));
        }
        let lo = honest.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = honest.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = screen(&values, b).unwrap();
        prop_assert_eq!(s.kept.len(), values.len() - 2 * b);
        prop_assert_eq!(s.removed_low.len(), b);
        prop_assert_eq!(s.removed_high.len(), b);
        for v in s.kept_values() {
            prop_assert!(v >= lo && v <= hi, "{} outside [{}, {}]", v, lo, hi);
        }
    }

    #[test]
    fn screening_ignores_input_order(
        values in prop::collection::vec(prop_oneof![Just(0.5f64), -1.0f64..1.0], 3..9),
        b in 0usize..2,
        seed in any::<u64>(),
    ) {
        prop_assume!(values.len() > 2 * b);
        let tagged: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
        let mut shuffled = tagged.clone();
        let mut r = rng::stream(seed, &[]);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r.random_range(0..=i));
        }
        prop_assert_eq!(screen(&tagged, b).unwrap(), screen(&shuffled, b).unwrap());
    }
}

#[test]
fn b_zero_complete_graph_reaches_consensus() {
    let nodes: Vec<usize> = (0..8).collect();
    let shards = synthetic_shards(&nodes, 20, 4, 11);
    let graph = DirectedGraph::complete(8);
    let cfg = ProtocolConfig::new(0, 1, 200, StepSchedule::harmonic(1.0).unwrap()).unwrap();
    let mut diameter = BTreeMap::new();
    let mut hook = |s: &Snapshot<'_>| {
        if s.end_of_round {
            diameter.insert(s.index.r, consensus_stats(s.states)?.diameter);
        }
        Ok(())
    };
    run_byrdie(&graph, &shards, &logistic(), &cfg, &AttackSpec::none(), &mut hook).unwrap();
    assert!(diameter[&200] < 1e-2, "diameter {}", diameter[&200]);
    assert!(diameter[&200] < diameter[&10]);
}

#[test]
fn runs_are_reproducible() {
    let graph = DirectedGraph::complete(7);
    let honest: Vec<usize> = (1..7).collect();
    let shards = synthetic_shards(&honest, 10, 3, 5);
    let attack = AttackSpec::new([0], AttackBehavior::ValueSpoof { lo: -5.0, hi: 5.0 }, 77).unwrap();
    let cfg = ProtocolConfig::new(1, 2, 20, StepSchedule::new(2.0, 1.0, 0.8).unwrap()).unwrap();
    let a = run_byrdie(&graph, &shards, &logistic(), &cfg, &attack, &mut NoHooks).unwrap();
    let b = run_byrdie(&graph, &shards, &logistic(), &cfg, &attack, &mut NoHooks).unwrap();
    assert_eq!(a, b);
}

/// Node 0 is Byzantine but sends to nobody, so no attack can reach the
/// honest nodes; its shard is garbage that must never be read.
#[test]
fn honest_nodes_never_see_unreceived_attacks_or_byzantine_shards() {
    let m = 6;
    let edges = (0..m).flat_map(|i| (1..m).filter(move |&j| j != i).map(move |j| (j, i)));
    let graph = DirectedGraph::from_edges(m, edges).unwrap();
    let honest: Vec<usize> = (1..m).collect();
    let mut shards = synthetic_shards(&honest, 10, 3, 9);
    let cfg = ProtocolConfig::new(1, 1, 30, StepSchedule::harmonic(1.0).unwrap()).unwrap();
    let behaviors = [
        AttackBehavior::UniformRandom { lo: 0.0, hi: 1.0 },
        AttackBehavior::Constant { value: 1e6 },
        AttackBehavior::SignFlip { scale: 3.0 },
        AttackBehavior::ValueSpoof { lo: -1e3, hi: 1e3 },
    ];
    let outcomes: Vec<_> = behaviors
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let attack = AttackSpec::new([0], b, i as u64).unwrap();
            run_byrdie(&graph, &shards, &logistic(), &cfg, &attack, &mut NoHooks).unwrap()
        })
        .collect();
    assert!(outcomes.windows(2).all(|w| w[0] == w[1]));

    shards.insert(
        0,
        Shard {
            owner: 0,
            samples: vec![Sample { id: 0, x: vec![f64::NAN; 3], y: 1.0 }],
        },
    );
    let attack = AttackSpec::new([0], behaviors[0], 0).unwrap();
    let with_garbage = run_byrdie(&graph, &shards, &logistic(), &cfg, &attack, &mut NoHooks).unwrap();
    assert_eq!(with_garbage, outcomes[0]);
}

/// Golden-section minimum of a unimodal scalar function on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    (lo + hi) / 2.0
}

/// With one coordinate, identical shards and no faults, a long inner loop
/// ends at the minimizer of the shared local risk whatever the starts.
#[test]
fn long_inner_loop_solves_the_coordinate_subproblem() {
    let model = LossModel::linear(LossKind::Logistic, 0.1).unwrap();
    let mut r = rng::stream(3, &[]);
    let samples: Vec<Sample> = (0..30)
        .map(|id| {
            let y = if id % 3 == 0 { -1.0 } else { 1.0 };
            Sample { id, x: vec![y * 0.5 + r.random_range(-0.5..0.5)], y }
        })
        .collect();
    let m = 5;
    let shards: BTreeMap<usize, Shard> = (0..m)
        .map(|n| (n, Shard { owner: n, samples: samples.clone() }))
        .collect();
    let init: BTreeMap<usize, Vec<f64>> = (0..m).map(|n| (n, vec![n as f64 - 2.0])).collect();
    let cfg = ProtocolConfig::new(0, 20_000, 1, StepSchedule::new(2.0, 0.0, 0.6).unwrap())
        .unwrap()
        .with_init(Init::PerNode(init));
    let out = run_byrdie(&DirectedGraph::complete(m), &shards, &model, &cfg, &AttackSpec::none(), &mut NoHooks).unwrap();
    let oracle = golden_min(|w| model.risk(&[w], &samples).unwrap(), -20.0, 20.0);
    for w in &out.states {
        assert!((w[0] - oracle).abs() < 1e-6, "{} vs {oracle}", w[0]);
    }
}

#[test]
fn fault_free_dgd_on_identical_shards_is_gradient_descent() {
    let data = synth_two_class(4, 1.0, 0.5, 40, &mut rng::stream(21, &[])).unwrap();
    let samples = data.samples().to_vec();
    let m = 5;
    let shards: BTreeMap<usize, Shard> = (0..m)
        .map(|n| (n, Shard { owner: n, samples: samples.clone() }))
        .collect();
    let model = logistic();
    let schedule = StepSchedule::harmonic(1.0).unwrap();
    let cfg = DgdConfig { rounds: 50, schedule, init: Init::Zero };
    let mut dgd_states = Vec::new();
    let mut hook = |s: &Snapshot<'_>| {
        dgd_states.push(s.states[0].clone());
        Ok(())
    };
    run_dgd(&DirectedGraph::complete(m), &shards, &model, &cfg, &AttackSpec::none(), &mut hook).unwrap();
    assert_eq!(dgd_states.len(), 50);
    let mut w = vec![0.0; 4];
    for (r, seen) in (1..=50).zip(&dgd_states) {
        let g = model.grad(&w, &samples).unwrap();
        let step = schedule.step(r).unwrap();
        w.iter_mut().zip(&g).for_each(|(wk, gk)| *wk -= step * gk);
        for (a, b) in w.iter().zip(seen) {
            assert!((a - b).abs() < 1e-6, "round {r}: {a} vs {b}");
        }
    }
}

#[test]
fn dgd_follows_a_constant_attacker_away_from_the_data() {
    let graph = DirectedGraph::complete(6);
    let honest: Vec<usize> = (1..6).collect();
    let shards = synthetic_shards(&honest, 20, 3, 4);
    let model = logistic();
    let attack = AttackSpec::new([0], AttackBehavior::Constant { value: 1e6 }, 0).unwrap();
    let cfg = DgdConfig { rounds: 30, schedule: StepSchedule::harmonic(1.0).unwrap(), init: Init::Zero };
    let out = run_dgd(&graph, &shards, &model, &cfg, &attack, &mut NoHooks).unwrap();
    let pooled: Vec<Sample> = shards.values().flat_map(|s| s.samples.clone()).collect();
    let clean = run_centralized_cd(&pooled, &model, &CentralizedCdConfig::oracle(1e-10), &mut NoHooks).unwrap();
    for w in &out.states {
        assert!(model.risk(w, &pooled).unwrap() > 100.0 * clean.risk);
    }
}

#[test]
fn local_cd_on_the_full_dataset_is_centralized_cd() {
    let data = synth_two_class(5, 1.0, 0.5, 60, &mut rng::stream(8, &[])).unwrap();
    let samples = data.samples().to_vec();
    let shards = BTreeMap::from([(0, Shard { owner: 0, samples: samples.clone() })]);
    let model = LossModel::linear(LossKind::SquareHinge, 0.01).unwrap();
    let local = run_local_cd(
        &shards,
        &model,
        &CdConfig { sweeps: 7, update: CdUpdate::ExactLineSearch, init: Init::Zero },
        &mut NoHooks,
    )
    .unwrap();
    let central = run_centralized_cd(
        &samples,
        &model,
        &CentralizedCdConfig {
            tolerance: None,
            max_sweeps: 7,
            update: CdUpdate::ExactLineSearch,
            init: Init::Zero,
        },
        &mut NoHooks,
    )
    .unwrap();
    assert_eq!(local.states[0], central.w);
}

#[test]
fn centralized_cd_never_increases_risk_per_sweep() {
    let data = synth_two_class(6, 1.0, 1.0, 200, &mut rng::stream(12, &[])).unwrap();
    let samples = data.samples().to_vec();
    for kind in [LossKind::Square, LossKind::SquareHinge, LossKind::Logistic] {
        let model = LossModel::linear(kind, 0.01).unwrap();
        let mut risks = Vec::new();
        let mut hook = |s: &Snapshot<'_>| {
            risks.push(model.risk(&s.states[0], &samples)?);
            Ok(())
        };
        run_centralized_cd(&samples, &model, &CentralizedCdConfig::oracle(1e-12), &mut hook).unwrap();
        assert!(risks.windows(2).all(|w| w[1] <= w[0]), "{kind:?}: {risks:?}");
    }
}

#[test]
fn fault_free_dgd_approaches_the_centralized_optimum() {
    let nodes: Vec<usize> = (0..6).collect();
    let shards = synthetic_shards(&nodes, 30, 3, 31);
    let model = LossModel::linear(LossKind::Logistic, 0.1).unwrap();
    let cfg = DgdConfig {
        rounds: 3000,
        schedule: StepSchedule::new(1.0, 0.0, 0.75).unwrap(),
        init: Init::Zero,
    };
    let out = run_dgd(&DirectedGraph::complete(6), &shards, &model, &cfg, &AttackSpec::none(), &mut NoHooks).unwrap();
    let pooled: Vec<Sample> = shards.values().flat_map(|s| s.samples.clone()).collect();
    let oracle = run_centralized_cd(&pooled, &model, &CentralizedCdConfig::oracle(1e-12), &mut NoHooks).unwrap();
    assert!(consensus_stats(&out.states).unwrap().diameter < 1e-3);
    let risk = model.risk(&out.states[0], &pooled).unwrap();
    assert!((risk - oracle.risk) / oracle.risk < 1e-2, "{risk} vs {}", oracle.risk);
}
