//! ByRDiE, DGD and local coordinate descent on the same network and data,
//! with 20% of the nodes sending uniform noise.
//!
//! Run with `cargo run --release --example byrdie_vs_baselines`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use byrdie::baselines::{run_dgd, run_local_cd, CdConfig, CdUpdate, DgdConfig};
use byrdie::data::{cap_per_class, partition, synth_two_class};
use byrdie::learning::{LossKind, LossModel};
use byrdie::protocol::{run_byrdie, AttackBehavior, AttackSpec, Init, NoHooks, ProtocolConfig, StepSchedule};
use byrdie::rng;
use byrdie::topology::{generate_erdos_renyi, validate_degrees};

const M: usize = 30;
const B: usize = 6;

fn main() -> byrdie::Result<()> {
    let graph = (0..)
        .map(|attempt| generate_erdos_renyi(M, 0.6, false, &mut rng::stream(1, &[attempt])))
        .find(|g| g.as_ref().map_or(true, |g| validate_degrees(g, B).is_ok()))
        .unwrap()?;
    let mut ids: Vec<usize> = (0..M).collect();
    ids.shuffle(&mut rng::stream(1, &[100]));
    let byzantine: BTreeSet<usize> = ids[..B].iter().copied().collect();
    let honest: Vec<usize> = (0..M).filter(|n| !byzantine.contains(n)).collect();

    let data = synth_two_class(20, 1.0, 1.0, 3000, &mut rng::stream(1, &[200]))?;
    let split = partition(&data, &honest, 10, true, &mut rng::stream(1, &[201]))?;
    let test = cap_per_class(split.test, 1000);

    let model = LossModel::linear(LossKind::SquareHinge, 0.01)?;
    let attack = AttackSpec::new(byzantine.iter().copied(), AttackBehavior::UniformRandom { lo: 0.0, hi: 1.0 }, 7)?;
    let schedule = StepSchedule::new(10.0, 0.0, 0.75)?;
    let rounds = 60;

    let by = run_byrdie(&graph, &split.shards, &model, &ProtocolConfig::new(B, 1, rounds, schedule)?, &attack, &mut NoHooks)?;
    // equal communication: one DGD round moves all P coordinates at once
    let dgd_cfg = DgdConfig { rounds: rounds * data.dim(), schedule, init: Init::Zero };
    let dgd = run_dgd(&graph, &split.shards, &model, &dgd_cfg, &attack, &mut NoHooks)?;
    let local_cfg = CdConfig { sweeps: rounds, update: CdUpdate::ExactLineSearch, init: Init::Zero };
    let local = run_local_cd(&split.shards, &model, &local_cfg, &mut NoHooks)?;

    for (name, states) in [("byrdie", &by.states), ("dgd", &dgd.states), ("local-cd", &local.states)] {
        let acc: f64 = states.iter().map(|w| model.accuracy(w, &test).unwrap()).sum::<f64>() / states.len() as f64;
        println!("{name:<9} mean honest test accuracy {acc:.3}");
    }
    Ok(())
}
