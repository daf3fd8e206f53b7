//! Reference algorithms: distributed gradient descent (DGD), coordinate
//! descent on local data only, and centralized coordinate descent.
//!
//! All three report through the same [`Hooks`] interface as the protocol
//! engine. DGD snapshots carry `t_c = r` (one vector broadcast per round)
//! and `k = P`; coordinate descent snapshots carry `t_c` = number of
//! per-coordinate updates so far.

use std::collections::BTreeMap;

use crate::data::{Sample, Shard};
use crate::learning::LossModel;
use crate::protocol::{AttackSpec, Hooks, Init, IterIndex, RunOutcome, Snapshot, StepSchedule};
use crate::protocol::layout;
use crate::topology::DirectedGraph;
use crate::{Error, Result};

/// How coordinate descent moves along one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CdUpdate {
    /// Golden-section minimization along the coordinate (convex linear
    /// models only).
    ExactLineSearch,
    /// `w_k -= rho(sweep) * g_k`; the only option for the MLP.
    GradientStep(StepSchedule),
}

/// Final width of the golden-section bracket.
pub const LINE_SEARCH_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DgdConfig {
    pub rounds: usize,
    pub schedule: StepSchedule,
    pub init: Init,
}

/// Distributed gradient descent: every round each honest node averages
/// its vector with all received vectors using equal weights
/// `1 / (|N_j| + 1)`, then steps along its local gradient with `rho(r)`.
/// No screening.
pub fn run_dgd(
    graph: &DirectedGraph,
    shards: &BTreeMap<usize, Shard>,
    model: &LossModel,
    cfg: &DgdConfig,
    attack: &AttackSpec,
    hooks: &mut dyn Hooks,
) -> Result<RunOutcome> {
    let node_count = graph.node_count();
    let layout = layout(node_count, shards, model, attack)?;
    let honest = layout.honest;
    let dim = layout.dim;
    let mut position = vec![usize::MAX; node_count];
    for (i, &node) in honest.iter().enumerate() {
        position[node] = i;
    }
    let mut states = cfg.init.states(&honest, dim)?;

    for r in 1..=cfg.rounds {
        let step = cfg.schedule.step(r)?;
        let mut observed: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut next = Vec::with_capacity(honest.len());
        for (j, &node) in honest.iter().enumerate() {
            let mut total = states[j].clone();
            for &i in graph.in_neighbors(node) {
                if attack.is_byzantine(i) {
                    let view = observed.entry(i).or_insert_with(|| {
                        honest_mean(graph, i, attack, &position, &states, dim)
                    });
                    let msg = attack.vector(r as u64, i, node, view);
                    total.iter_mut().zip(&msg).for_each(|(a, m)| *a += m);
                } else {
                    total
                        .iter_mut()
                        .zip(&states[position[i]])
                        .for_each(|(a, m)| *a += m);
                }
            }
            let weight = 1.0 / (graph.in_degree(node) + 1) as f64;
            let grad = model.grad(&states[j], &layout.shards[j].samples)?;
            let updated: Vec<f64> = total
                .iter()
                .zip(&grad)
                .map(|(s, g)| s * weight - step * g)
                .collect();
            if updated.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFault(format!(
                    "DGD round {r}, node {}: non-finite state",
                    node + 1
                )));
            }
            next.push(updated);
        }
        states = next;
        hooks.observe(&Snapshot {
            index: IterIndex {
                r,
                k: dim,
                position: dim,
                t: 1,
                t_c: r as u64,
            },
            honest: &honest,
            states: &states,
            end_of_coordinate: true,
            end_of_round: true,
        })?;
    }
    Ok(RunOutcome { honest, states })
}

fn honest_mean(
    graph: &DirectedGraph,
    node: usize,
    attack: &AttackSpec,
    position: &[usize],
    states: &[Vec<f64>],
    dim: usize,
) -> Vec<f64> {
    let seen: Vec<usize> = graph
        .in_neighbors(node)
        .iter()
        .filter(|&&i| !attack.is_byzantine(i))
        .map(|&i| position[i])
        .collect();
    let mut mean = vec![0.0; dim];
    for &p in &seen {
        mean.iter_mut().zip(&states[p]).for_each(|(m, v)| *m += v);
    }
    if !seen.is_empty() {
        mean.iter_mut().for_each(|m| *m /= seen.len() as f64);
    }
    mean
}

/// Per-coordinate line search state for a linear model: cached scores
/// `s_n = w^T x_n`.
struct Scores(Vec<f64>);

impl Scores {
    fn new(w: &[f64], samples: &[Sample]) -> Self {
        Scores(
            samples
                .iter()
                .map(|s| s.x.iter().zip(w).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }
}

/// Coordinate objective `phi(d) = risk(w + d e_k) - const` and its
/// derivative.
fn coordinate_objective(model: &LossModel, samples: &[Sample], scores: &Scores, wk: f64, k: usize, d: f64) -> (f64, f64) {
    let n = samples.len().max(1) as f64;
    let (mut value, mut slope) = (0.0, 0.0);
    for (s, score) in samples.iter().zip(&scores.0) {
        let (l, dl) = model.linear_loss(score + d * s.x[k], s.y);
        value += l;
        slope += dl * s.x[k];
    }
    let wk = wk + d;
    (
        value / n + 0.5 * model.lambda() * wk * wk,
        slope / n + model.lambda() * wk,
    )
}

fn line_search(model: &LossModel, samples: &[Sample], scores: &Scores, wk: f64, k: usize) -> f64 {
    let phi = |d: f64| coordinate_objective(model, samples, scores, wk, k, d);
    let (f0, slope0) = phi(0.0);
    if slope0 == 0.0 || !slope0.is_finite() {
        return 0.0;
    }
    let dir = -slope0.signum();
    let n = samples.len().max(1) as f64;
    let curvature = 2.0 * samples.iter().map(|s| s.x[k] * s.x[k]).sum::<f64>() / n + model.lambda();
    // the minimizer lies at least |slope| / curvature away
    let mut lo = 0.0;
    let mut hi = if curvature > 0.0 {
        slope0.abs() / curvature
    } else {
        1.0
    };
    for _ in 0..64 {
        if dir * phi(dir * hi).1 >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut e = a + ratio * (b - a);
    let mut fc = phi(dir * c).0;
    let mut fe = phi(dir * e).0;
    while b - a > LINE_SEARCH_TOLERANCE * b.abs().max(1.0) {
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - ratio * (b - a);
            fc = phi(dir * c).0;
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + ratio * (b - a);
            fe = phi(dir * e).0;
        }
    }
    let best = dir * 0.5 * (a + b);
    if phi(best).0 <= f0 {
        best
    } else {
        0.0
    }
}

/// One coordinate update in place. `sweep` is the 1-based step clock.
fn cd_step(
    model: &LossModel,
    samples: &[Sample],
    w: &mut [f64],
    k: usize,
    update: CdUpdate,
    sweep: usize,
) -> Result<()> {
    match update {
        CdUpdate::ExactLineSearch => {
            if !model.kind().is_convex() {
                return Err(Error::Unsupported(
                    "exact line search needs a convex linear model".into(),
                ));
            }
            let scores = Scores::new(w, samples);
            w[k] += line_search(model, samples, &scores, w[k], k);
        }
        CdUpdate::GradientStep(schedule) => {
            let g = model.coord_grad(w, samples, k)?;
            w[k] -= schedule.step(sweep)? * g;
        }
    }
    if w[k].is_finite() {
        Ok(())
    } else {
        Err(Error::NumericFault(format!(
            "coordinate descent sweep {sweep}, coordinate {}: non-finite value",
            k + 1
        )))
    }
}

/// One full cyclic sweep in natural order.
pub fn cd_sweep(model: &LossModel, samples: &[Sample], w: &mut [f64], update: CdUpdate, sweep: usize) -> Result<()> {
    model.risk(w, samples)?;
    for k in 0..w.len() {
        cd_step(model, samples, w, k, update, sweep)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdConfig {
    pub sweeps: usize,
    pub update: CdUpdate,
    pub init: Init,
}

/// Cyclic coordinate descent at every shard owner on its own data, no
/// communication. Snapshots follow every coordinate update.
pub fn run_local_cd(
    shards: &BTreeMap<usize, Shard>,
    model: &LossModel,
    cfg: &CdConfig,
    hooks: &mut dyn Hooks,
) -> Result<RunOutcome> {
    let nodes: Vec<usize> = shards.keys().copied().collect();
    let feature_dim = shards
        .values()
        .find_map(|s| s.samples.first().map(|x| x.x.len()))
        .ok_or_else(|| Error::Config("every shard is empty".into()))?;
    let dim = model.param_dim(feature_dim)?;
    let mut states = cfg.init.states(&nodes, dim)?;
    for (j, node) in nodes.iter().enumerate() {
        model.risk(&states[j], &shards[node].samples)?;
    }
    for r in 1..=cfg.sweeps {
        for k in 0..dim {
            for (j, node) in nodes.iter().enumerate() {
                cd_step(model, &shards[node].samples, &mut states[j], k, cfg.update, r)?;
            }
            hooks.observe(&Snapshot {
                index: IterIndex {
                    r,
                    k: k + 1,
                    position: k + 1,
                    t: 1,
                    t_c: ((r - 1) * dim + k + 1) as u64,
                },
                honest: &nodes,
                states: &states,
                end_of_coordinate: true,
                end_of_round: k + 1 == dim,
            })?;
        }
    }
    Ok(RunOutcome {
        honest: nodes,
        states,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedCdConfig {
    /// Stop once a sweep lowers the risk by less than this. `None` runs
    /// exactly `max_sweeps` sweeps.
    pub tolerance: Option<f64>,
    pub max_sweeps: usize,
    pub update: CdUpdate,
    pub init: Init,
}

impl CentralizedCdConfig {
    /// Exact line search from zero, stopping at `tolerance`.
    pub fn oracle(tolerance: f64) -> Self {
        Self {
            tolerance: Some(tolerance),
            max_sweeps: 100_000,
            update: CdUpdate::ExactLineSearch,
            init: Init::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdSolution {
    pub w: Vec<f64>,
    pub risk: f64,
    pub sweeps: usize,
}

/// Cyclic coordinate descent on pooled data. With a tolerance, fails with
/// [`Error::NonConvergence`] if the cap is reached first. Snapshots
/// (single pseudo-node `0`) follow every sweep.
pub fn run_centralized_cd(
    samples: &[Sample],
    model: &LossModel,
    cfg: &CentralizedCdConfig,
    hooks: &mut dyn Hooks,
) -> Result<CdSolution> {
    if let Some(tol) = cfg.tolerance {
        if !(tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
        }
    }
    let feature_dim = samples
        .first()
        .map(|s| s.x.len())
        .ok_or_else(|| Error::Config("no samples".into()))?;
    let dim = model.param_dim(feature_dim)?;
    let mut w = cfg.init.states(&[0], dim)?.remove(0);
    let mut risk = model.risk(&w, samples)?;
    let node = [0usize];
    let mut last_decrease = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        cd_sweep(model, samples, &mut w, cfg.update, sweep)?;
        let new_risk = model.risk(&w, samples)?;
        last_decrease = risk - new_risk;
        risk = new_risk;
        hooks.observe(&Snapshot {
            index: IterIndex {
                r: sweep,
                k: dim,
                position: dim,
                t: 1,
                t_c: (sweep * dim) as u64,
            },
            honest: &node,
            states: std::slice::from_ref(&w),
            end_of_coordinate: true,
            end_of_round: true,
        })?;
        if cfg.tolerance.is_some_and(|tol| last_decrease < tol) {
            return Ok(CdSolution { w, risk, sweeps: sweep });
        }
    }
    if cfg.tolerance.is_some() {
        return Err(Error::NonConvergence {
            sweeps: cfg.max_sweeps,
            last_decrease,
        });
    }
    Ok(CdSolution {
        w,
        risk,
        sweeps: cfg.max_sweeps,
    })
}
