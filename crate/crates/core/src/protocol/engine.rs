use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::attack::AttackSpec;
use super::schedule::StepSchedule;
use super::screen::{screen, update_coordinate};
use crate::data::Shard;
use crate::learning::LossModel;
use crate::rng;
use crate::topology::{validate_degrees, DirectedGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateOrder {
    #[default]
    Natural,
    /// A fresh permutation of the coordinates every round, derived from
    /// `seed` and the round index.
    Permuted { seed: u64 },
}

impl CoordinateOrder {
    pub(crate) fn for_round(&self, round: usize, dim: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..dim).collect();
        if let CoordinateOrder::Permuted { seed } = *self {
            order.shuffle(&mut rng::stream(seed, &[rng::tag::ORDER, round as u64]));
        }
        order
    }
}

/// Starting point of the honest nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    Zero,
    /// Same vector at every honest node.
    Given(Vec<f64>),
    /// One vector per honest node, keyed by 0-based node id.
    PerNode(BTreeMap<usize, Vec<f64>>),
}

impl Init {
    pub(crate) fn states(&self, honest: &[usize], dim: usize) -> Result<Vec<Vec<f64>>> {
        let check = |w: &Vec<f64>| {
            if w.len() == dim {
                Ok(w.clone())
            } else {
                Err(Error::DimensionMismatch {
                    expected: dim,
                    got: w.len(),
                })
            }
        };
        match self {
            Init::Zero => Ok(vec![vec![0.0; dim]; honest.len()]),
            Init::Given(w) => Ok(vec![check(w)?; honest.len()]),
            Init::PerNode(map) => honest
                .iter()
                .map(|n| {
                    map.get(n)
                        .ok_or_else(|| Error::Config(format!("no initial state for node {}", n + 1)))
                        .and_then(check)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Trim parameter: values screened from each tail.
    pub b: usize,
    /// `T`, inner iterations per coordinate.
    pub inner_iterations: usize,
    /// `r_bar`, coordinate descent rounds.
    pub rounds: usize,
    pub schedule: StepSchedule,
    pub order: CoordinateOrder,
    pub init: Init,
}

impl ProtocolConfig {
    pub fn new(b: usize, inner_iterations: usize, rounds: usize, schedule: StepSchedule) -> Result<Self> {
        if inner_iterations == 0 {
            return Err(Error::Config("T must be at least 1".into()));
        }
        Ok(Self {
            b,
            inner_iterations,
            rounds,
            schedule,
            order: CoordinateOrder::Natural,
            init: Init::Zero,
        })
    }

    pub fn with_order(mut self, order: CoordinateOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// Position of an inner iteration. `k` is the 1-based coordinate being
/// updated, `position` its 1-based slot in the round's coordinate order,
/// and `t_c = (r-1)TP + (position-1)T + t` counts scalar broadcasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterIndex {
    pub r: usize,
    pub k: usize,
    pub position: usize,
    pub t: usize,
    pub t_c: u64,
}

/// Honest states after an iteration, in `honest` order.
#[derive(Debug)]
pub struct Snapshot<'a> {
    pub index: IterIndex,
    pub honest: &'a [usize],
    pub states: &'a [Vec<f64>],
    pub end_of_coordinate: bool,
    pub end_of_round: bool,
}

/// Observer called after every iteration of an engine.
pub trait Hooks {
    fn observe(&mut self, snapshot: &Snapshot<'_>) -> Result<()>;
}

impl<F> Hooks for F
where
    F: FnMut(&Snapshot<'_>) -> Result<()>,
{
    fn observe(&mut self, snapshot: &Snapshot<'_>) -> Result<()> {
        self(snapshot)
    }
}

pub struct NoHooks;

impl Hooks for NoHooks {
    fn observe(&mut self, _: &Snapshot<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub honest: Vec<usize>,
    pub states: Vec<Vec<f64>>,
}

impl RunOutcome {
    pub fn state_of(&self, node: usize) -> Option<&[f64]> {
        self.honest
            .iter()
            .position(|&n| n == node)
            .map(|i| self.states[i].as_slice())
    }
}

/// Where a received value comes from.
#[derive(Clone, Copy)]
enum Source {
    Honest(usize),
    Byzantine(usize),
}

pub(crate) struct Layout<'a> {
    pub honest: Vec<usize>,
    pub shards: Vec<&'a Shard>,
    pub dim: usize,
}

/// Checks attack ids and shard coverage, and resolves the parameter
/// dimension shared by every honest node.
pub(crate) fn layout<'a>(
    node_count: usize,
    shards: &'a BTreeMap<usize, Shard>,
    model: &LossModel,
    attack: &AttackSpec,
) -> Result<Layout<'a>> {
    attack.validate(node_count)?;
    let honest: Vec<usize> = (0..node_count).filter(|&n| !attack.is_byzantine(n)).collect();
    let mut feature_dim = None;
    let mut node_shards = Vec::with_capacity(honest.len());
    for &node in &honest {
        let shard = shards.get(&node).ok_or_else(|| {
            Error::Config(format!("honest node {} has no training shard", node + 1))
        })?;
        if let Some(s) = shard.samples.first() {
            match feature_dim {
                None => feature_dim = Some(s.x.len()),
                Some(d) if d != s.x.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: s.x.len(),
                    })
                }
                _ => {}
            }
        }
        node_shards.push(shard);
    }
    let dim = match (feature_dim, model.arch()) {
        (Some(d), _) => model.param_dim(d)?,
        (None, Some(arch)) => arch.param_count(),
        (None, None) => return Err(Error::Config("every shard is empty".into())),
    };
    Ok(Layout {
        honest,
        shards: node_shards,
        dim,
    })
}

/// Runs the protocol for `cfg.rounds` rounds and returns the final honest
/// states.
///
/// Iterations are bulk-synchronous: every honest node reads the values of
/// the previous iteration, then all nodes update at once. Byzantine nodes
/// send what `attack` dictates and hold no state of their own.
pub fn run_byrdie(
    graph: &DirectedGraph,
    shards: &BTreeMap<usize, Shard>,
    model: &LossModel,
    cfg: &ProtocolConfig,
    attack: &AttackSpec,
    hooks: &mut dyn Hooks,
) -> Result<RunOutcome> {
    let node_count = graph.node_count();
    let Layout {
        honest,
        shards: node_shards,
        dim,
    } = layout(node_count, shards, model, attack)?;
    validate_degrees(graph, cfg.b).into_result()?;

    let mut position = vec![usize::MAX; node_count];
    for (i, &node) in honest.iter().enumerate() {
        position[node] = i;
    }
    let source = |n: usize| {
        if attack.is_byzantine(n) {
            Source::Byzantine(n)
        } else {
            Source::Honest(position[n])
        }
    };
    let inbox: Vec<Vec<(usize, Source)>> = honest
        .iter()
        .map(|&j| graph.in_neighbors(j).iter().map(|&i| (i, source(i))).collect())
        .collect();
    // honest in-neighbors of each Byzantine node, for observation-based attacks
    let byz_view: BTreeMap<usize, Vec<usize>> = attack
        .byzantine()
        .iter()
        .map(|&z| {
            let seen = graph
                .in_neighbors(z)
                .iter()
                .filter(|&&i| !attack.is_byzantine(i))
                .map(|&i| position[i])
                .collect();
            (z, seen)
        })
        .collect();

    let mut states = cfg.init.states(&honest, dim)?;
    let mut current = vec![0.0; honest.len()];
    let mut next = vec![0.0; honest.len()];
    let mut received = Vec::new();
    let t_max = cfg.inner_iterations;

    for r in 1..=cfg.rounds {
        let order = cfg.order.for_round(r, dim);
        for (slot, &k) in order.iter().enumerate() {
            for t in 1..=t_max {
                let t_c = ((r - 1) * t_max * dim + slot * t_max + t) as u64;
                let step = cfg.schedule.step(r + t - 1)?;
                for (c, s) in current.iter_mut().zip(&states) {
                    *c = s[k];
                }
                let observed = |z: usize| {
                    let seen = &byz_view[&z];
                    if seen.is_empty() {
                        0.0
                    } else {
                        seen.iter().map(|&p| current[p]).sum::<f64>() / seen.len() as f64
                    }
                };
                for (j, &node) in honest.iter().enumerate() {
                    received.clear();
                    received.extend(inbox[j].iter().map(|&(sender, src)| {
                        let value = match src {
                            Source::Honest(p) => current[p],
                            Source::Byzantine(z) => attack.scalar(t_c, z, node, observed(z)),
                        };
                        (sender, value)
                    }));
                    let screened = screen(&received, cfg.b)?;
                    let grad = model.coord_grad(&states[j], &node_shards[j].samples, k)?;
                    let kept: Vec<f64> = screened.kept.iter().map(|&(_, v)| v).collect();
                    next[j] = update_coordinate(current[j], &kept, step, grad).map_err(|e| {
                        Error::NumericFault(format!(
                            "round {r}, coordinate {}, inner {t}, node {}: {e}",
                            k + 1,
                            node + 1
                        ))
                    })?;
                }
                for (s, v) in states.iter_mut().zip(&next) {
                    s[k] = *v;
                }
                hooks.observe(&Snapshot {
                    index: IterIndex {
                        r,
                        k: k + 1,
                        position: slot + 1,
                        t,
                        t_c,
                    },
                    honest: &honest,
                    states: &states,
                    end_of_coordinate: t == t_max,
                    end_of_round: t == t_max && slot + 1 == dim,
                })?;
            }
        }
    }
    Ok(RunOutcome { honest, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::learning::LossKind;
    use crate::protocol::AttackBehavior;

    fn shard(owner: usize, xs: &[([f64; 2], f64)]) -> Shard {
        Shard {
            owner,
            samples: xs
                .iter()
                .enumerate()
                .map(|(id, (x, y))| Sample { id, x: x.to_vec(), y: *y })
                .collect(),
        }
    }

    fn same_shards(n: usize) -> BTreeMap<usize, Shard> {
        let data = [([0.5, 0.1], 1.0), ([-0.3, 0.4], -1.0), ([0.2, -0.6], 1.0)];
        (0..n).map(|j| (j, shard(j, &data))).collect()
    }

    #[test]
    fn identical_nodes_stay_identical() {
        let g = DirectedGraph::complete(5);
        let model = LossModel::linear(LossKind::Logistic, 0.01).unwrap();
        let cfg = ProtocolConfig::new(1, 2, 20, StepSchedule::harmonic(0.5).unwrap()).unwrap();
        let mut check = |s: &Snapshot<'_>| {
            for w in s.states {
                assert_eq!(w, &s.states[0]);
            }
            Ok(())
        };
        let out = run_byrdie(&g, &same_shards(5), &model, &cfg, &AttackSpec::none(), &mut check).unwrap();
        assert_eq!(out.states.len(), 5);
    }

    #[test]
    fn t_c_counts_every_scalar_broadcast() {
        let g = DirectedGraph::complete(4);
        let model = LossModel::linear(LossKind::Square, 0.0).unwrap();
        let cfg = ProtocolConfig::new(1, 3, 2, StepSchedule::harmonic(0.1).unwrap()).unwrap();
        let mut seen = Vec::new();
        let mut record = |s: &Snapshot<'_>| {
            seen.push((s.index.r, s.index.k, s.index.t, s.index.t_c, s.end_of_round));
            Ok(())
        };
        run_byrdie(&g, &same_shards(4), &model, &cfg, &AttackSpec::none(), &mut record).unwrap();
        assert_eq!(seen.len(), 2 * 2 * 3);
        for (i, &(r, k, t, t_c, _)) in seen.iter().enumerate() {
            assert_eq!(t_c as usize, (r - 1) * 3 * 2 + (k - 1) * 3 + t);
            assert_eq!(t_c as usize, i + 1);
        }
        assert_eq!(seen.iter().filter(|s| s.4).count(), 2);
    }

    #[test]
    fn degree_violation_is_reported() {
        let g = DirectedGraph::ring(4);
        let model = LossModel::linear(LossKind::Square, 0.0).unwrap();
        let cfg = ProtocolConfig::new(1, 1, 1, StepSchedule::harmonic(0.1).unwrap()).unwrap();
        let err = run_byrdie(&g, &same_shards(4), &model, &cfg, &AttackSpec::none(), &mut NoHooks)
            .unwrap_err();
        match err {
            Error::DegreeViolation(report) => assert_eq!(report.offending_nodes(), vec![1, 2, 3, 4]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_attacker_and_missing_shard() {
        let g = DirectedGraph::complete(4);
        let model = LossModel::linear(LossKind::Square, 0.0).unwrap();
        let cfg = ProtocolConfig::new(1, 1, 1, StepSchedule::harmonic(0.1).unwrap()).unwrap();
        let attack = AttackSpec::new([7], AttackBehavior::Constant { value: 1.0 }, 0).unwrap();
        let err = run_byrdie(&g, &same_shards(4), &model, &cfg, &attack, &mut NoHooks).unwrap_err();
        assert!(matches!(err, Error::UnknownNode(8, 4)));
        let err = run_byrdie(&g, &same_shards(3), &model, &cfg, &AttackSpec::none(), &mut NoHooks)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unscreened_infinity_faults_with_context() {
        let g = DirectedGraph::complete(3);
        let model = LossModel::linear(LossKind::Square, 0.0).unwrap();
        let cfg = ProtocolConfig::new(0, 1, 1, StepSchedule::harmonic(0.1).unwrap()).unwrap();
        let attack = AttackSpec::new([2], AttackBehavior::Constant { value: f64::INFINITY }, 0).unwrap();
        let err = run_byrdie(&g, &same_shards(3), &model, &cfg, &attack, &mut NoHooks).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("round 1, coordinate 1, inner 1"), "{msg}");
    }

    #[test]
    fn permuted_order_is_a_permutation() {
        let order = CoordinateOrder::Permuted { seed: 3 };
        let mut a = order.for_round(2, 10);
        assert_eq!(a, order.for_round(2, 10));
        a.sort_unstable();
        assert_eq!(a, (0..10).collect::<Vec<_>>());
    }
}
