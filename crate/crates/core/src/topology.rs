//! Directed communication graphs and the redundancy checks Byzantine
//! screening depends on.
//!
//! An edge `(from, to)` means `to` receives from `from`; the in-neighborhood
//! of a node is the set of nodes it receives from. Screening with parameter
//! `b` needs every in-neighborhood to hold at least `2b + 1` nodes, and the
//! stronger topological condition is that every reduced graph keeps a source
//! component of at least `b + 1` nodes.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use itertools::Itertools;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::rng;
use crate::{Error, Result};

/// Default cap on the number of reduced graphs exact certification visits.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1_000_000;

/// Static directed graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    in_nbrs: Vec<Vec<usize>>,
}

impl DirectedGraph {
    pub fn empty(node_count: usize) -> Self {
        Self {
            in_nbrs: vec![Vec::new(); node_count],
        }
    }

    /// Builds a graph from `(from, to)` pairs (0-based). Duplicate edges
    /// collapse; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut sets = vec![BTreeSet::new(); node_count];
        for (from, to) in edges {
            if from >= node_count {
                return Err(Error::UnknownNode(from + 1, node_count));
            }
            if to >= node_count {
                return Err(Error::UnknownNode(to + 1, node_count));
            }
            if from == to {
                return Err(Error::Config(format!("self-loop at node {}", from + 1)));
            }
            sets[to].insert(from);
        }
        Ok(Self {
            in_nbrs: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn complete(node_count: usize) -> Self {
        let in_nbrs = (0..node_count)
            .map(|j| (0..node_count).filter(|&i| i != j).collect())
            .collect();
        Self { in_nbrs }
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(node_count: usize) -> Self {
        let mut g = Self::empty(node_count);
        if node_count >= 2 {
            for j in 0..node_count {
                g.in_nbrs[j].push((j + node_count - 1) % node_count);
            }
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.in_nbrs.len()
    }

    /// Sorted in-neighborhood of `node`.
    pub fn in_neighbors(&self, node: usize) -> &[usize] {
        &self.in_nbrs[node]
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_nbrs[node].len()
    }

    pub fn edge_count(&self) -> usize {
        self.in_nbrs.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.in_nbrs
            .get(to)
            .is_some_and(|n| n.binary_search(&from).is_ok())
    }

    /// All edges as `(from, to)`, ordered by `(from, to)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .in_nbrs
            .iter()
            .enumerate()
            .flat_map(|(to, nbrs)| nbrs.iter().map(move |&from| (from, to)))
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn mean_in_degree(&self) -> f64 {
        if self.node_count() == 0 {
            return 0.0;
        }
        self.edge_count() as f64 / self.node_count() as f64
    }

    /// Parses the edge-list text format: first line `M`, then one `j i`
    /// pair per line (1-based, `i` receives from `j`). Blank lines and
    /// `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty edge list".into(),
        })?;
        let node_count: usize = first.parse().map_err(|_| Error::Parse {
            line,
            message: format!("expected node count, found {first:?}"),
        })?;
        if node_count == 0 {
            return Err(Error::Parse {
                line,
                message: "node count must be positive".into(),
            });
        }
        let mut edges = Vec::new();
        for (line, text) in lines {
            let ids: Vec<&str> = text.split_whitespace().collect();
            let parse = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if (1..=node_count).contains(&v) => Ok(v - 1),
                    _ => Err(Error::Parse {
                        line,
                        message: format!("invalid node id {s:?} (expected 1..={node_count})"),
                    }),
                }
            };
            if ids.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `j i`, found {text:?}"),
                });
            }
            let from = parse(ids[0])?;
            let to = parse(ids[1])?;
            if from == to {
                return Err(Error::Parse {
                    line,
                    message: format!("self-loop at node {}", from + 1),
                });
            }
            edges.push((from, to));
        }
        Self::from_edges(node_count, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.node_count());
        for (from, to) in self.edges() {
            out.push_str(&format!("{} {}\n", from + 1, to + 1));
        }
        out
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse_edge_list(&text)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_edge_list()).map_err(|e| Error::file(path, e))
    }

    /// Subgraph induced by `keep` (sorted, distinct), relabelled to
    /// `0..keep.len()` in the order given.
    fn induced(&self, keep: &[usize]) -> Self {
        let mut position = vec![usize::MAX; self.node_count()];
        for (pos, &node) in keep.iter().enumerate() {
            position[node] = pos;
        }
        let in_nbrs = keep
            .iter()
            .map(|&node| {
                self.in_nbrs[node]
                    .iter()
                    .filter(|&&i| position[i] != usize::MAX)
                    .map(|&i| position[i])
                    .collect()
            })
            .collect();
        Self { in_nbrs }
    }
}

/// Draws a directed Erdős–Rényi graph: each ordered pair `(j, i)`, `j != i`,
/// is an edge independently with probability `p`. With `symmetric`, each
/// unordered pair is drawn once and both directions are added together.
pub fn generate_erdos_renyi<R: Rng + ?Sized>(
    node_count: usize,
    p: f64,
    symmetric: bool,
    rng: &mut R,
) -> Result<DirectedGraph> {
    if node_count < 2 {
        return Err(Error::Config(format!(
            "Erdős–Rényi graph needs at least 2 nodes, got {node_count}"
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!(
            "edge probability must lie in (0, 1], got {p}"
        )));
    }
    let mut edges = Vec::new();
    for from in 0..node_count {
        for to in 0..node_count {
            if from == to || (symmetric && to < from) {
                continue;
            }
            if rng.random_bool(p) {
                edges.push((from, to));
                if symmetric {
                    edges.push((to, from));
                }
            }
        }
    }
    DirectedGraph::from_edges(node_count, edges)
}

/// Outcome of the `|N_j| >= 2b + 1` check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeReport {
    pub b: usize,
    /// `(node, in_degree)` for every node below the requirement, 0-based.
    pub violations: Vec<(usize, usize)>,
}

impl DegreeReport {
    pub fn required(&self) -> usize {
        2 * self.b + 1
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Offending node ids, 1-based.
    pub fn offending_nodes(&self) -> Vec<usize> {
        self.violations.iter().map(|&(n, _)| n + 1).collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::DegreeViolation(self))
        }
    }
}

impl fmt::Display for DegreeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "every in-neighborhood has at least {} nodes", self.required());
        }
        write!(
            f,
            "degree violation: b={} needs in-degree >= {}, offending nodes:",
            self.b,
            self.required()
        )?;
        for (node, deg) in &self.violations {
            write!(f, " {}(in-degree {deg})", node + 1)?;
        }
        Ok(())
    }
}

pub fn validate_degrees(graph: &DirectedGraph, b: usize) -> DegreeReport {
    let violations = (0..graph.node_count())
        .map(|j| (j, graph.in_degree(j)))
        .filter(|&(_, deg)| deg < 2 * b + 1)
        .collect();
    DegreeReport { b, violations }
}

/// Which nodes are Byzantine, plus the trim parameter `b` the protocol uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByzantineAssignment {
    nodes: BTreeSet<usize>,
    b: usize,
}

impl ByzantineAssignment {
    pub fn new(
        node_count: usize,
        nodes: impl IntoIterator<Item = usize>,
        b: usize,
    ) -> Result<Self> {
        let nodes: BTreeSet<usize> = nodes.into_iter().collect();
        if let Some(&bad) = nodes.iter().find(|&&n| n >= node_count) {
            return Err(Error::UnknownNode(bad + 1, node_count));
        }
        if nodes.len() >= node_count {
            return Err(Error::Config("no honest node left".into()));
        }
        Ok(Self { nodes, b })
    }

    pub fn byzantine(&self) -> &BTreeSet<usize> {
        &self.nodes
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn honest(&self, node_count: usize) -> Vec<usize> {
        (0..node_count).filter(|n| !self.nodes.contains(n)).collect()
    }
}

/// A reduced graph: Byzantine nodes removed, then up to `b` incoming edges
/// removed from each remaining node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedGraph {
    /// Original ids of the surviving nodes; position `p` here is node `p`
    /// of `graph`.
    pub kept: Vec<usize>,
    pub graph: DirectedGraph,
    /// Removed Byzantine nodes (original ids).
    pub byzantine: Vec<usize>,
    /// Edges removed in the second step, `(from, to)` in original ids.
    pub removed_edges: Vec<(usize, usize)>,
}

impl fmt::Display for ReducedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let byz: Vec<String> = self.byzantine.iter().map(|n| (n + 1).to_string()).collect();
        let removed: Vec<String> = self
            .removed_edges
            .iter()
            .map(|(a, b)| format!("{}->{}", a + 1, b + 1))
            .collect();
        write!(
            f,
            "byzantine={{{}}} removed_edges={{{}}}",
            byz.join(","),
            removed.join(",")
        )
    }
}

fn subsets_up_to(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    (0..=max.min(items.len()))
        .flat_map(|size| items.iter().copied().combinations(size))
        .collect()
}

/// Exhaustive iterator over the reduced graphs of one Byzantine placement.
pub struct ReducedGraphs<'g> {
    honest_graph: DirectedGraph,
    kept: Vec<usize>,
    byzantine: Vec<usize>,
    /// Per kept node: the admissible removal sets (positions in
    /// `honest_graph`).
    choices: Vec<Vec<Vec<usize>>>,
    odometer: Vec<usize>,
    done: bool,
    _source: std::marker::PhantomData<&'g DirectedGraph>,
}

impl ReducedGraphs<'_> {
    fn build(&self) -> ReducedGraph {
        let mut removed_edges = Vec::new();
        let in_nbrs = self
            .choices
            .iter()
            .zip(&self.odometer)
            .enumerate()
            .map(|(node, (opts, &pick))| {
                let removed = &opts[pick];
                for &from in removed {
                    removed_edges.push((self.kept[from], self.kept[node]));
                }
                self.honest_graph
                    .in_neighbors(node)
                    .iter()
                    .copied()
                    .filter(|i| !removed.contains(i))
                    .collect()
            })
            .collect();
        removed_edges.sort_unstable();
        ReducedGraph {
            kept: self.kept.clone(),
            graph: DirectedGraph { in_nbrs },
            byzantine: self.byzantine.clone(),
            removed_edges,
        }
    }
}

impl Iterator for ReducedGraphs<'_> {
    type Item = ReducedGraph;

    fn next(&mut self) -> Option<ReducedGraph> {
        if self.done {
            return None;
        }
        let item = self.build();
        // advance the mixed-radix counter, least significant digit last
        self.done = true;
        for digit in (0..self.odometer.len()).rev() {
            self.odometer[digit] += 1;
            if self.odometer[digit] < self.choices[digit].len() {
                self.done = false;
                break;
            }
            self.odometer[digit] = 0;
        }
        Some(item)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of reduced graphs a placement produces:
/// `prod_j sum_{i<=b} C(|N_j'|, i)` over the honest nodes, saturating.
pub fn reduced_graph_count(graph: &DirectedGraph, byzantine: &BTreeSet<usize>, b: usize) -> u128 {
    (0..graph.node_count())
        .filter(|j| !byzantine.contains(j))
        .map(|j| {
            let honest_in = graph
                .in_neighbors(j)
                .iter()
                .filter(|i| !byzantine.contains(i))
                .count();
            (0..=b).map(|i| binomial(honest_in, i)).sum::<u128>()
        })
        .fold(1u128, |acc, c| acc.saturating_mul(c))
}

/// Enumerates every reduced graph for a fixed Byzantine placement, failing
/// up front when the count exceeds `budget`.
pub fn enumerate_reduced_graphs<'g>(
    graph: &'g DirectedGraph,
    byzantine: &ByzantineAssignment,
    budget: u128,
) -> Result<ReducedGraphs<'g>> {
    let count = reduced_graph_count(graph, byzantine.byzantine(), byzantine.b());
    if count > budget {
        return Err(Error::TooLargeToEnumerate { count, budget });
    }
    let kept = byzantine.honest(graph.node_count());
    let honest_graph = graph.induced(&kept);
    let choices: Vec<_> = (0..kept.len())
        .map(|j| subsets_up_to(honest_graph.in_neighbors(j), byzantine.b()))
        .collect();
    Ok(ReducedGraphs {
        odometer: vec![0; choices.len()],
        done: false,
        choices,
        kept,
        byzantine: byzantine.byzantine().iter().copied().collect(),
        honest_graph,
        _source: std::marker::PhantomData,
    })
}

/// True iff some set of at least `min_size` nodes reaches every node of
/// `graph` along directed paths: the condensation must have a unique source
/// component of size `>= min_size`.
pub fn has_source_component(graph: &DirectedGraph, min_size: usize) -> bool {
    source_component(graph).is_some_and(|c| c.len() >= min_size)
}

/// The node set that reaches every node, when it exists (the unique source
/// strongly connected component).
pub fn source_component(graph: &DirectedGraph) -> Option<Vec<usize>> {
    let n = graph.node_count();
    if n == 0 {
        return None;
    }
    let mut pg = DiGraph::<(), ()>::with_capacity(n, graph.edge_count());
    let ids: Vec<_> = (0..n).map(|_| pg.add_node(())).collect();
    for (from, to) in graph.edges() {
        pg.add_edge(ids[from], ids[to], ());
    }
    let sccs = tarjan_scc(&pg);
    let mut component = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for m in members {
            component[m.index()] = c;
        }
    }
    let mut has_incoming = vec![false; sccs.len()];
    for (from, to) in graph.edges() {
        if component[from] != component[to] {
            has_incoming[component[to]] = true;
        }
    }
    let mut sources = (0..sccs.len()).filter(|&c| !has_incoming[c]);
    let source = sources.next()?;
    if sources.next().is_some() {
        return None;
    }
    let mut members: Vec<usize> = sccs[source].iter().map(|m| m.index()).collect();
    members.sort_unstable();
    Some(members)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertifyMode {
    /// Visit every placement of at most `b` Byzantine nodes and every
    /// reduced graph of each.
    Exact { budget: u128 },
    /// Random placements and edge removals; can refute, never certify.
    Sampled { trials: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Certification {
    Certified {
        placements: u128,
        reduced_graphs: u128,
    },
    Refuted {
        witness: ReducedGraph,
        /// Reduced graphs checked up to and including the witness.
        checked: u128,
    },
    Inconclusive {
        trials: usize,
    },
}

impl Certification {
    pub fn is_certified(&self) -> bool {
        matches!(self, Certification::Certified { .. })
    }

    pub fn is_refuted(&self) -> bool {
        matches!(self, Certification::Refuted { .. })
    }
}

impl fmt::Display for Certification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certification::Certified {
                placements,
                reduced_graphs,
            } => write!(
                f,
                "certified ({placements} placements, {reduced_graphs} reduced graphs)"
            ),
            Certification::Refuted { witness, checked } => {
                write!(f, "refuted after {checked} reduced graphs; witness: {witness}")
            }
            Certification::Inconclusive { trials } => {
                write!(f, "inconclusive ({trials} sampled reduced graphs, no counterexample)")
            }
        }
    }
}

fn placements(node_count: usize, b: usize) -> impl Iterator<Item = BTreeSet<usize>> {
    (0..=b.min(node_count)).flat_map(move |size| {
        (0..node_count)
            .combinations(size)
            .map(|c| c.into_iter().collect())
    })
}

/// Checks that every reduced graph, over every placement of at most `b`
/// Byzantine nodes, has a source component of at least `b + 1` nodes.
pub fn certify_assumption3(
    graph: &DirectedGraph,
    b: usize,
    mode: CertifyMode,
) -> Result<Certification> {
    match mode {
        CertifyMode::Exact { budget } => certify_exact(graph, b, budget),
        CertifyMode::Sampled { trials, seed } => certify_sampled(graph, b, trials, seed),
    }
}

fn certify_exact(graph: &DirectedGraph, b: usize, budget: u128) -> Result<Certification> {
    let n = graph.node_count();
    let mut total = 0u128;
    let mut placement_count = 0u128;
    for byz in placements(n, b) {
        placement_count += 1;
        total = total.saturating_add(reduced_graph_count(graph, &byz, b));
        if total > budget {
            // keep counting placements only for the error message
            let rest: u128 = placements(n, b)
                .skip(placement_count as usize)
                .map(|p| reduced_graph_count(graph, &p, b))
                .fold(0u128, |a, c| a.saturating_add(c));
            return Err(Error::TooLargeToEnumerate {
                count: total.saturating_add(rest),
                budget,
            });
        }
    }
    let mut checked = 0u128;
    for byz in placements(n, b) {
        if byz.len() >= n {
            continue;
        }
        let assignment = ByzantineAssignment { nodes: byz, b };
        for reduced in enumerate_reduced_graphs(graph, &assignment, u128::MAX)? {
            checked += 1;
            if !has_source_component(&reduced.graph, b + 1) {
                return Ok(Certification::Refuted {
                    witness: reduced,
                    checked,
                });
            }
        }
    }
    Ok(Certification::Certified {
        placements: placement_count,
        reduced_graphs: checked,
    })
}

fn sample_reduced_graph<R: Rng + ?Sized>(graph: &DirectedGraph, b: usize, rng: &mut R) -> ReducedGraph {
    let n = graph.node_count();
    let size = rng.random_range(0..=b.min(n - 1));
    let mut byzantine: Vec<usize> = index::sample(rng, n, size).into_vec();
    byzantine.sort_unstable();
    let kept: Vec<usize> = (0..n).filter(|i| byzantine.binary_search(i).is_err()).collect();
    let honest_graph = graph.induced(&kept);
    let mut removed_edges = Vec::new();
    let in_nbrs = (0..kept.len())
        .map(|j| {
            let nbrs = honest_graph.in_neighbors(j);
            let drop = rng.random_range(0..=b.min(nbrs.len()));
            let removed: Vec<usize> = index::sample(rng, nbrs.len(), drop)
                .into_iter()
                .map(|p| nbrs[p])
                .collect();
            for &from in &removed {
                removed_edges.push((kept[from], kept[j]));
            }
            nbrs.iter().copied().filter(|i| !removed.contains(i)).collect()
        })
        .collect();
    removed_edges.sort_unstable();
    ReducedGraph {
        kept,
        graph: DirectedGraph { in_nbrs },
        byzantine,
        removed_edges,
    }
}

fn certify_sampled(graph: &DirectedGraph, b: usize, trials: usize, seed: u64) -> Result<Certification> {
    if trials == 0 {
        return Err(Error::Config("sampled certification needs at least one trial".into()));
    }
    if graph.node_count() == 0 {
        return Err(Error::Config("empty graph".into()));
    }
    let failure = (0..trials).into_par_iter().find_map_first(|trial| {
        let mut rng = rng::stream(seed, &[rng::tag::CERTIFY, trial as u64]);
        let reduced = sample_reduced_graph(graph, b, &mut rng);
        (!has_source_component(&reduced.graph, b + 1)).then_some((trial, reduced))
    });
    Ok(match failure {
        Some((trial, witness)) => Certification::Refuted {
            witness,
            checked: trial as u128 + 1,
        },
        None => Certification::Inconclusive { trials },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn star(leaves: usize) -> DirectedGraph {
        DirectedGraph::from_edges(leaves + 1, (1..=leaves).map(|l| (0, l))).unwrap()
    }

    #[test]
    fn full_probability_gives_complete_digraph() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = generate_erdos_renyi(2, 1.0, false, &mut rng).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_erdos_renyi(50, 0.5, false, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = generate_erdos_renyi(50, 0.5, false, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_draws_are_symmetric() {
        let g = generate_erdos_renyi(20, 0.3, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for (from, to) in g.edges() {
            assert!(g.has_edge(to, from));
        }
    }

    #[test]
    fn generator_rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_erdos_renyi(1, 0.5, false, &mut rng).is_err());
        assert!(generate_erdos_renyi(5, 0.0, false, &mut rng).is_err());
        assert!(generate_erdos_renyi(5, 1.5, false, &mut rng).is_err());
    }

    #[test]
    fn mean_in_degree_is_binomial() {
        // (M - 1) p = 4.5, per-graph variance of the mean in-degree is
        // (M - 1) p (1 - p) / M because in-degrees are independent.
        let trials = 10_000;
        let mut total = 0.0;
        for seed in 0..trials {
            let g = generate_erdos_renyi(10, 0.5, false, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            total += g.mean_in_degree();
        }
        let mean = total / trials as f64;
        let sigma = (9.0 * 0.25 / 10.0 / trials as f64).sqrt();
        assert!((mean - 4.5).abs() < 3.0 * sigma, "mean in-degree {mean}");
    }

    #[test]
    fn degree_validation() {
        assert!(validate_degrees(&DirectedGraph::complete(4), 1).is_ok());
        let ring = validate_degrees(&DirectedGraph::ring(5), 1);
        assert_eq!(ring.offending_nodes(), vec![1, 2, 3, 4, 5]);

        let g = generate_erdos_renyi(20, 0.5, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let report = validate_degrees(&g, 4);
        let expected: Vec<usize> = (0..20).filter(|&j| g.in_degree(j) < 9).collect();
        let flagged: Vec<usize> = report.violations.iter().map(|v| v.0).collect();
        assert_eq!(flagged, expected);
    }

    #[test]
    fn edge_list_round_trip_and_errors() {
        let g = DirectedGraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let text = g.to_edge_list();
        assert_eq!(text, "3\n1 2\n2 3\n3 1\n");
        assert_eq!(DirectedGraph::parse_edge_list(&text).unwrap(), g);

        assert!(DirectedGraph::parse_edge_list("").is_err());
        let err = DirectedGraph::parse_edge_list("3\n1 2\n2 9\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(DirectedGraph::parse_edge_list("2\n1 1\n").is_err());
    }

    #[test]
    fn reduced_graph_counts() {
        let g = DirectedGraph::complete(3);
        let one = ByzantineAssignment::new(3, [2], 0).unwrap();
        let reduced: Vec<_> = enumerate_reduced_graphs(&g, &one, 100).unwrap().collect();
        assert_eq!(reduced.len(), 1);
        assert_eq!(reduced[0].kept, vec![0, 1]);
        assert_eq!(reduced[0].graph.edges(), vec![(0, 1), (1, 0)]);

        let none = ByzantineAssignment::new(3, [], 1).unwrap();
        let all: Vec<_> = enumerate_reduced_graphs(&g, &none, 100).unwrap().collect();
        assert_eq!(all.len(), 27);
        let distinct: BTreeSet<_> = all.iter().map(|r| r.graph.edges()).collect();
        assert_eq!(distinct.len(), 27);
    }

    #[test]
    fn reduced_graphs_of_a_path() {
        let path = DirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let byz = ByzantineAssignment::new(3, [0], 1).unwrap();
        let edge_sets: BTreeSet<_> = enumerate_reduced_graphs(&path, &byz, 100)
            .unwrap()
            .map(|r| {
                r.graph
                    .edges()
                    .into_iter()
                    .map(|(a, b)| (r.kept[a], r.kept[b]))
                    .collect::<Vec<_>>()
            })
            .collect();
        let expected: BTreeSet<Vec<(usize, usize)>> = [vec![(1, 2)], vec![]].into();
        assert_eq!(edge_sets, expected);
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let g = DirectedGraph::complete(8);
        let byz = ByzantineAssignment::new(8, [], 2).unwrap();
        let err = enumerate_reduced_graphs(&g, &byz, 1000).err().unwrap();
        assert!(matches!(err, Error::TooLargeToEnumerate { .. }));
    }

    #[test]
    fn source_components() {
        assert!(has_source_component(&DirectedGraph::complete(3), 2));
        assert!(!has_source_component(&DirectedGraph::empty(2), 1));
        assert!(has_source_component(&star(3), 1));
        assert!(!has_source_component(&star(3), 2));
        assert_eq!(source_component(&star(3)), Some(vec![0]));
    }

    #[test]
    fn exact_certification_examples() {
        let complete = certify_assumption3(
            &DirectedGraph::complete(4),
            1,
            CertifyMode::Exact { budget: DEFAULT_ENUMERATION_BUDGET },
        )
        .unwrap();
        assert!(complete.is_certified(), "{complete}");

        let ring = certify_assumption3(
            &DirectedGraph::ring(4),
            1,
            CertifyMode::Exact { budget: DEFAULT_ENUMERATION_BUDGET },
        )
        .unwrap();
        match ring {
            Certification::Refuted { witness, .. } => {
                assert!(!has_source_component(&witness.graph, 2));
            }
            other => panic!("expected refutation, got {other}"),
        }
    }

    #[test]
    fn exact_certification_budget() {
        let err = certify_assumption3(
            &DirectedGraph::complete(30),
            1,
            CertifyMode::Exact { budget: DEFAULT_ENUMERATION_BUDGET },
        )
        .unwrap_err();
        assert!(err.to_string().contains("too large to enumerate"));
    }

    #[test]
    fn sampled_certification_never_certifies() {
        let g = DirectedGraph::complete(6);
        let out = certify_assumption3(&g, 1, CertifyMode::Sampled { trials: 200, seed: 1 }).unwrap();
        assert_eq!(out, Certification::Inconclusive { trials: 200 });

        let ring = DirectedGraph::ring(6);
        let out = certify_assumption3(&ring, 1, CertifyMode::Sampled { trials: 200, seed: 1 }).unwrap();
        assert!(out.is_refuted());
        assert!(certify_assumption3(&g, 1, CertifyMode::Sampled { trials: 0, seed: 1 }).is_err());
    }

    #[test]
    fn sampled_certification_is_deterministic() {
        let g = generate_erdos_renyi(12, 0.3, false, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = certify_assumption3(&g, 2, CertifyMode::Sampled { trials: 500, seed: 4 }).unwrap();
        let b = certify_assumption3(&g, 2, CertifyMode::Sampled { trials: 500, seed: 4 }).unwrap();
        assert_eq!(a, b);
    }
}
