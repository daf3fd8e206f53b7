//! Config-driven experiment runner behind the `byrdie` binary.
//!
//! A config is a TOML document with one table per concern. Everything a
//! run produces is a function of the config alone: every trial derives its
//! graph, data, placement, attack and initialization streams from the
//! master seed and the trial index, and trials are collected in order no
//! matter how many worker threads run them.
//!
//! ```toml
//! [experiment]
//! name = "demo"
//! trials = 4
//! seed = 7
//! algorithms = ["byrdie", "dgd", "local-cd"]
//! cadence = { rounds = 5 }
//!
//! [topology]
//! kind = "erdos-renyi"
//! nodes = 20
//! p = 0.6
//! max_attempts = 1000
//!
//! [byzantine]
//! count = 2
//! attack = { kind = "uniform-random", lo = 0.0, hi = 1.0 }
//!
//! [data]
//! source = "synthetic"
//! dim = 5
//! margin = 1.0
//! noise = 0.5
//! count = 2000
//! per_node = 20
//!
//! [model]
//! loss = "logistic"
//!
//! [protocol]
//! inner_iterations = 1
//! rounds = 50
//! rho0 = 1.0
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    run_centralized_cd, run_dgd, run_local_cd, CdUpdate, CentralizedCdConfig, CdConfig, DgdConfig,
};
use crate::data::{self, CsvSchema, Dataset, FeatureScaling, Sample};
use crate::learning::{LossKind, LossModel, MlpArch, DEFAULT_LAMBDA};
use crate::metrics::{self, Cadence, Checkpoint, Evaluation, MetricsRecord, Recorder};
use crate::protocol::{
    run_byrdie, AttackBehavior, AttackSpec, CoordinateOrder, Init, NoHooks, ProtocolConfig,
    StepSchedule,
};
use crate::rng::{self, tag};
use crate::topology::{
    self, certify_assumption3, validate_degrees, CertifyMode, DirectedGraph,
    DEFAULT_ENUMERATION_BUDGET,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub topology: TopologySection,
    #[serde(default)]
    pub byzantine: ByzantineSection,
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub dgd: DgdSection,
    #[serde(default)]
    pub local_cd: LocalCdSection,
    #[serde(default)]
    pub centralized: CentralizedSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Byrdie,
    Dgd,
    LocalCd,
    CentralizedCd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Byrdie => "byrdie",
            Algorithm::Dgd => "dgd",
            Algorithm::LocalCd => "local-cd",
            Algorithm::CentralizedCd => "centralized-cd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyOn {
    #[default]
    Test,
    Train,
}

fn one() -> usize {
    1
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Byrdie]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub cadence: Cadence,
    /// Dump all honest states every this many rounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    /// Fill `wall_ms`; makes metrics files run-dependent.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Solve the pooled problem centrally to this per-sweep tolerance and
    /// report excess risk against it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tolerance: Option<f64>,
    #[serde(default)]
    pub accuracy_on: AccuracyOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    ErdosRenyi,
    Complete,
    EdgeList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertifyChoice {
    #[default]
    Off,
    Exact,
    Sampled,
}

fn thousand() -> usize {
    1000
}

fn default_budget() -> u64 {
    DEFAULT_ENUMERATION_BUDGET as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub kind: TopologyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Random graphs are redrawn until every in-degree is at least
    /// `2b + 1`, at most this many times.
    #[serde(default = "one")]
    pub max_attempts: usize,
    #[serde(default)]
    pub certify: CertifyChoice,
    #[serde(default = "thousand")]
    pub certify_trials: usize,
    #[serde(default = "default_budget")]
    pub certify_budget: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineSection {
    /// Number of Byzantine nodes; defaults to `b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Trim parameter; defaults to the number of Byzantine nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    /// Fixed 1-based ids. Without them each trial draws its own placement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackBehavior>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    /// Synthetic samples drawn per trial, train and test together.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<usize>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub scaling: FeatureScaling,
    pub per_node: usize,
    #[serde(default)]
    pub class_balanced: bool,
    /// Cap on held-out samples per class; 0 keeps them all.
    #[serde(default = "default_test_cap")]
    pub test_per_class: usize,
    /// Append a constant feature to linear models.
    #[serde(default = "yes")]
    pub bias: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossChoice {
    Square,
    SquareHinge,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitChoice {
    #[default]
    Zero,
    /// `N(0, init_scale^2)` entries shared by every node of a trial.
    Random,
}

fn default_test_cap() -> usize {
    1000
}

fn yes() -> bool {
    true
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_hidden() -> usize {
    3
}

fn default_init_scale() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub loss: LossChoice,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub init: InitChoice,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderChoice {
    #[default]
    Natural,
    Permuted,
}

fn hundred() -> usize {
    100
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default = "one", alias = "T")]
    pub inner_iterations: usize,
    #[serde(default = "hundred")]
    pub rounds: usize,
    #[serde(default = "unit")]
    pub rho0: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "unit")]
    pub exponent: f64,
    #[serde(default)]
    pub order: OrderChoice,
    /// Scalar broadcasts per node. When set, ByRDiE runs
    /// `ceil(comm_budget / (T * P))` rounds instead of `rounds`, so that
    /// different `T` spend the same communication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_budget: Option<usize>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            inner_iterations: 1,
            rounds: 100,
            rho0: 1.0,
            offset: 0.0,
            exponent: 1.0,
            order: OrderChoice::Natural,
            comm_budget: None,
        }
    }
}

/// Step schedule fields; unset ones fall back to `[protocol]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgdSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateChoice {
    LineSearch,
    Gradient,
}

/// Shared by `[local_cd]` and `[centralized]`. The update defaults to line
/// search for linear models and gradient steps for the network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<UpdateChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

pub type LocalCdSection = CdSection;
pub type CentralizedSection = CdSection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    PerNode,
    #[serde(alias = "T")]
    InnerIterations,
    B,
}

impl SweepParameter {
    fn key(self) -> &'static str {
        match self {
            SweepParameter::PerNode => "per_node",
            SweepParameter::InnerIterations => "T",
            SweepParameter::B => "b",
        }
    }
}

/// Reruns every trial once per value, with common random numbers: graphs,
/// data and placements depend on the trial only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<usize>,
}

/// Parameters of one sweep cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    /// `all` without a sweep, otherwise `<parameter>=<value>`.
    pub name: String,
    pub per_node: usize,
    pub inner_iterations: usize,
    pub b: usize,
    pub byzantine_count: usize,
}

/// Seeds and graph facts of one trial, for the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialInfo {
    pub cell: String,
    pub trial: usize,
    pub graph_seed: u64,
    pub data_seed: u64,
    pub attack_seed: u64,
    pub order_seed: u64,
    pub init_seed: u64,
    pub graph_attempts: usize,
    pub mean_in_degree: f64,
    /// 1-based.
    pub byzantine: Vec<usize>,
    pub oracle_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certification: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub cell: String,
    pub trial: usize,
    pub algo: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct CellOutput {
    pub cell: Option<Cell>,
    /// Records per algorithm, trials in order.
    pub records: BTreeMap<String, Vec<MetricsRecord>>,
    /// `(algo, trial, checkpoint)`.
    pub checkpoints: Vec<(String, usize, Checkpoint)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub cells: Vec<CellOutput>,
    pub trials: Vec<TrialInfo>,
    pub failures: Vec<Failure>,
    pub wall_ms: u64,
}

impl ExperimentOutput {
    /// Records of `algo` in the cell named `cell`.
    pub fn records(&self, cell: &str, algo: &str) -> &[MetricsRecord] {
        self.cells
            .iter()
            .find(|c| c.cell.as_ref().is_some_and(|c| c.name == cell))
            .and_then(|c| c.records.get(algo))
            .map_or(&[], Vec::as_slice)
    }
}

/// Resolved per-cell, per-trial inputs.
struct TrialSetup {
    graph: DirectedGraph,
    dim: usize,
    shards: BTreeMap<usize, data::Shard>,
    model: LossModel,
    init: Init,
    attack: AttackSpec,
    order: CoordinateOrder,
    eval: Evaluation,
    info: TrialInfo,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let absolute = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    let joined = base.join(&*p);
                    *p = fs::canonicalize(&joined).unwrap_or(joined);
                }
            }
        };
        absolute(&mut cfg.topology.path);
        absolute(&mut cfg.data.path);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.trials == 0 {
            return Err(Error::Config("experiment.trials must be at least 1".into()));
        }
        if e.algorithms.is_empty() {
            return Err(Error::Config("experiment.algorithms is empty".into()));
        }
        if let Some(tol) = e.oracle_tolerance {
            if !(tol > 0.0) {
                return Err(Error::Config("experiment.oracle_tolerance must be positive".into()));
            }
        }
        match self.topology.kind {
            TopologyKind::ErdosRenyi => {
                self.topology.nodes.ok_or_else(|| missing("topology.nodes"))?;
                self.topology.p.ok_or_else(|| missing("topology.p"))?;
                if self.topology.max_attempts == 0 {
                    return Err(Error::Config("topology.max_attempts must be at least 1".into()));
                }
            }
            TopologyKind::Complete => {
                self.topology.nodes.ok_or_else(|| missing("topology.nodes"))?;
            }
            TopologyKind::EdgeList => {
                self.topology.path.as_ref().ok_or_else(|| missing("topology.path"))?;
            }
        }
        match self.data.source {
            DataSource::Synthetic => {
                self.data.dim.ok_or_else(|| missing("data.dim"))?;
                self.data.count.ok_or_else(|| missing("data.count"))?;
            }
            DataSource::Csv => {
                self.data.path.as_ref().ok_or_else(|| missing("data.path"))?;
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep.values is empty".into()));
            }
        }
        for cell in self.cells()? {
            if cell.per_node == 0 {
                return Err(Error::Config("data.per_node must be at least 1".into()));
            }
            if cell.inner_iterations == 0 {
                return Err(Error::Config("protocol.inner_iterations must be at least 1".into()));
            }
            if cell.byzantine_count > 0 && self.byzantine.attack.is_none() {
                return Err(missing("byzantine.attack"));
            }
        }
        self.protocol_schedule()?;
        self.dgd_schedule()?;
        Ok(())
    }

    /// Sweep cells, or a single `all` cell.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let byz = &self.byzantine;
        let ids = byz.ids.as_ref().map(Vec::len);
        let base_b = byz.b.or(byz.count).or(ids).unwrap_or(0);
        let count_for = |b: usize| -> Result<usize> {
            let count = ids.or(byz.count).unwrap_or(b);
            if let (Some(n), Some(c)) = (ids, byz.count) {
                if n != c {
                    return Err(Error::Config(format!(
                        "byzantine.count = {c} but {n} ids are listed"
                    )));
                }
            }
            Ok(count)
        };
        let base = Cell {
            name: "all".into(),
            per_node: self.data.per_node,
            inner_iterations: self.protocol.inner_iterations,
            b: base_b,
            byzantine_count: count_for(base_b)?,
        };
        let Some(sweep) = &self.sweep else {
            return Ok(vec![base]);
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut cell = base.clone();
                cell.name = format!("{}={v}", sweep.parameter.key());
                match sweep.parameter {
                    SweepParameter::PerNode => cell.per_node = v,
                    SweepParameter::InnerIterations => cell.inner_iterations = v,
                    SweepParameter::B => {
                        cell.b = v;
                        cell.byzantine_count = count_for(v)?;
                    }
                }
                Ok(cell)
            })
            .collect()
    }

    fn protocol_schedule(&self) -> Result<StepSchedule> {
        let p = &self.protocol;
        StepSchedule::new(p.rho0, p.offset, p.exponent)
    }

    fn dgd_schedule(&self) -> Result<StepSchedule> {
        let p = &self.protocol;
        let d = &self.dgd;
        StepSchedule::new(
            d.rho0.unwrap_or(p.rho0),
            d.offset.unwrap_or(p.offset),
            d.exponent.unwrap_or(p.exponent),
        )
    }

    fn cd_update(&self, section: &CdSection, convex: bool) -> Result<CdUpdate> {
        let p = &self.protocol;
        let choice = section.update.unwrap_or(if convex {
            UpdateChoice::LineSearch
        } else {
            UpdateChoice::Gradient
        });
        Ok(match choice {
            UpdateChoice::LineSearch => CdUpdate::ExactLineSearch,
            UpdateChoice::Gradient => CdUpdate::GradientStep(StepSchedule::new(
                section.rho0.unwrap_or(p.rho0),
                section.offset.unwrap_or(p.offset),
                section.exponent.unwrap_or(p.exponent),
            )?),
        })
    }

    fn max_b(&self) -> Result<usize> {
        Ok(self.cells()?.iter().map(|c| c.b).max().unwrap_or(0))
    }
}

fn missing(key: &str) -> Error {
    Error::Config(format!("{key} is required"))
}

/// Loads the full dataset once; synthetic data is drawn per trial instead.
fn load_csv_dataset(cfg: &ExperimentConfig) -> Result<Option<Dataset>> {
    if cfg.data.source != DataSource::Csv {
        return Ok(None);
    }
    let path = cfg.data.path.as_ref().ok_or_else(|| missing("data.path"))?;
    let schema = CsvSchema {
        label_column: cfg.data.label_column.unwrap_or(0),
        has_header: cfg.data.has_header,
        scaling: cfg.data.scaling,
    };
    Ok(Some(data::load_csv(path, &schema)?))
}

fn trial_dataset(cfg: &ExperimentConfig, csv: Option<&Dataset>, trial: u64) -> Result<Dataset> {
    let mut dataset = match csv {
        Some(d) => d.clone(),
        None => data::synth_two_class(
            cfg.data.dim.ok_or_else(|| missing("data.dim"))?,
            cfg.data.margin.unwrap_or(1.0),
            cfg.data.noise.unwrap_or(0.0),
            cfg.data.count.ok_or_else(|| missing("data.count"))?,
            &mut rng::stream(cfg.experiment.seed, &[tag::DATA, trial, 0]),
        )?,
    };
    if cfg.model.loss != LossChoice::Mlp {
        if csv.is_some() {
            dataset = dataset.to_signed_binary()?;
        }
        if cfg.data.bias {
            dataset = dataset.with_bias();
        }
    }
    Ok(dataset)
}

fn trial_graph(cfg: &ExperimentConfig, trial: u64, b_max: usize) -> Result<(DirectedGraph, usize)> {
    let t = &cfg.topology;
    match t.kind {
        TopologyKind::ErdosRenyi => {
            let nodes = t.nodes.ok_or_else(|| missing("topology.nodes"))?;
            let p = t.p.ok_or_else(|| missing("topology.p"))?;
            let mut last = None;
            for attempt in 0..t.max_attempts {
                let mut stream = rng::stream(cfg.experiment.seed, &[tag::GRAPH, trial, attempt as u64]);
                let g = topology::generate_erdos_renyi(nodes, p, t.symmetric, &mut stream)?;
                let report = validate_degrees(&g, b_max);
                if report.is_ok() {
                    return Ok((g, attempt + 1));
                }
                last = Some(report);
            }
            Err(Error::DegreeViolation(last.expect("at least one attempt")))
        }
        TopologyKind::Complete => {
            let g = DirectedGraph::complete(t.nodes.ok_or_else(|| missing("topology.nodes"))?);
            validate_degrees(&g, b_max).into_result()?;
            Ok((g, 1))
        }
        TopologyKind::EdgeList => {
            let path = t.path.as_ref().ok_or_else(|| missing("topology.path"))?;
            let g = DirectedGraph::read_edge_list(path)?;
            validate_degrees(&g, b_max).into_result()?;
            Ok((g, 1))
        }
    }
}

fn class_count(samples: &[Sample]) -> usize {
    data::class_counts(samples).len()
}

fn setup_trial(
    cfg: &ExperimentConfig,
    csv: Option<&Dataset>,
    cell: &Cell,
    trial: usize,
    b_max: usize,
) -> Result<TrialSetup> {
    let seed = cfg.experiment.seed;
    let t = trial as u64;
    let (graph, graph_attempts) = trial_graph(cfg, t, b_max)?;
    let n = graph.node_count();
    if cell.byzantine_count >= n {
        return Err(Error::Config(format!(
            "{} Byzantine nodes leave no honest node among {n}",
            cell.byzantine_count
        )));
    }

    let byzantine: Vec<usize> = match &cfg.byzantine.ids {
        Some(ids) => ids
            .iter()
            .map(|&id| {
                if (1..=n).contains(&id) {
                    Ok(id - 1)
                } else {
                    Err(Error::UnknownNode(id, n))
                }
            })
            .collect::<Result<_>>()?,
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::stream(seed, &[tag::PLACEMENT, t]));
            order.truncate(cell.byzantine_count);
            order.sort_unstable();
            order
        }
    };

    let certification = match cfg.topology.certify {
        CertifyChoice::Off => None,
        mode => {
            let mode = if mode == CertifyChoice::Exact {
                CertifyMode::Exact {
                    budget: u128::from(cfg.topology.certify_budget),
                }
            } else {
                CertifyMode::Sampled {
                    trials: cfg.topology.certify_trials,
                    seed: rng::derive_seed(seed, &[tag::CERTIFY, t]),
                }
            };
            let result = certify_assumption3(&graph, cell.b, mode)?;
            if result.is_refuted() {
                return Err(Error::Config(format!("trial {trial}: graph {result}")));
            }
            Some(result.to_string())
        }
    };

    let dataset = trial_dataset(cfg, csv, t)?;
    let all_nodes: Vec<usize> = (0..n).collect();
    let mut split = data::partition(
        &dataset,
        &all_nodes,
        cell.per_node,
        cfg.data.class_balanced,
        &mut rng::stream(seed, &[tag::DATA, t, 1]),
    )?;
    for node in &byzantine {
        split.shards.remove(node);
    }
    let train = split.pooled_train();
    let test = match cfg.data.test_per_class {
        0 => split.test,
        cap => data::cap_per_class(split.test, cap),
    };

    let model = match cfg.model.loss {
        LossChoice::Mlp => LossModel::mlp(
            MlpArch {
                input: dataset.dim(),
                hidden: cfg.model.hidden,
                output: class_count(dataset.samples()),
            },
            cfg.model.lambda,
        )?,
        LossChoice::Square => LossModel::linear(LossKind::Square, cfg.model.lambda)?,
        LossChoice::SquareHinge => LossModel::linear(LossKind::SquareHinge, cfg.model.lambda)?,
        LossChoice::Logistic => LossModel::linear(LossKind::Logistic, cfg.model.lambda)?,
    };
    let dim = model.param_dim(dataset.dim())?;
    let init_seed = rng::derive_seed(seed, &[tag::INIT, t]);
    let init = match cfg.model.init {
        InitChoice::Zero => Init::Zero,
        InitChoice::Random => {
            let mut stream = rng::stream(init_seed, &[]);
            Init::Given(
                (0..dim)
                    .map(|_| cfg.model.init_scale * stream.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
        }
    };

    let oracle_risk = match cfg.experiment.oracle_tolerance {
        Some(tol) if model.kind().is_convex() => {
            Some(run_centralized_cd(&train, &model, &CentralizedCdConfig::oracle(tol), &mut NoHooks)?.risk)
        }
        Some(_) => {
            return Err(Error::Unsupported(
                "an oracle needs a convex loss".into(),
            ))
        }
        None => None,
    };

    let attack_seed = rng::derive_seed(seed, &[tag::ATTACK, t]);
    let attack = match cfg.byzantine.attack {
        Some(behavior) if !byzantine.is_empty() => {
            AttackSpec::new(byzantine.iter().copied(), behavior, attack_seed)?
        }
        _ => AttackSpec::none(),
    };
    attack.validate(n)?;
    let order_seed = rng::derive_seed(seed, &[tag::ORDER, t]);
    let order = match cfg.protocol.order {
        OrderChoice::Natural => CoordinateOrder::Natural,
        OrderChoice::Permuted => CoordinateOrder::Permuted { seed: order_seed },
    };

    let info = TrialInfo {
        cell: cell.name.clone(),
        trial,
        graph_seed: rng::derive_seed(seed, &[tag::GRAPH, t]),
        data_seed: rng::derive_seed(seed, &[tag::DATA, t]),
        attack_seed,
        order_seed,
        init_seed,
        graph_attempts,
        mean_in_degree: graph.mean_in_degree(),
        byzantine: byzantine.iter().map(|b| b + 1).collect(),
        oracle_risk,
        certification,
    };
    Ok(TrialSetup {
        graph,
        dim,
        shards: split.shards,
        model,
        init,
        attack,
        order,
        eval: Evaluation {
            train,
            test,
            oracle_risk,
            accuracy_on_train: cfg.experiment.accuracy_on == AccuracyOn::Train,
        },
        info,
    })
}

struct AlgoRun {
    algo: &'static str,
    records: Vec<MetricsRecord>,
    checkpoints: Vec<Checkpoint>,
    error: Option<String>,
}

fn run_algorithm(
    cfg: &ExperimentConfig,
    cell: &Cell,
    setup: &TrialSetup,
    algo: Algorithm,
) -> AlgoRun {
    let last_round = match algo {
        Algorithm::Byrdie => match cfg.protocol.comm_budget {
            Some(budget) => budget.div_ceil(cell.inner_iterations * setup.dim),
            None => cfg.protocol.rounds,
        },
        Algorithm::Dgd => cfg.dgd.rounds.unwrap_or(cfg.protocol.rounds),
        Algorithm::LocalCd => cfg.local_cd.sweeps.unwrap_or(cfg.protocol.rounds),
        Algorithm::CentralizedCd => cfg.centralized.sweeps.unwrap_or(cfg.protocol.rounds),
    };
    let mut recorder = Recorder::new(
        setup.info.trial,
        algo.name(),
        cfg.experiment.cadence,
        last_round,
        &setup.model,
        &setup.eval,
    );
    if cfg.experiment.record_wall_time {
        recorder = recorder.with_wall_clock();
    }
    if let Some(every) = cfg.experiment.checkpoint_every {
        recorder = recorder.with_checkpoints(every);
    }
    let convex = setup.model.kind().is_convex();
    let result: Result<()> = (|| {
        match algo {
            Algorithm::Byrdie => {
                let pcfg = ProtocolConfig::new(
                    cell.b,
                    cell.inner_iterations,
                    last_round,
                    cfg.protocol_schedule()?,
                )?
                .with_order(setup.order)
                .with_init(setup.init.clone());
                run_byrdie(&setup.graph, &setup.shards, &setup.model, &pcfg, &setup.attack, &mut recorder)?;
            }
            Algorithm::Dgd => {
                let dcfg = DgdConfig {
                    rounds: last_round,
                    schedule: cfg.dgd_schedule()?,
                    init: setup.init.clone(),
                };
                run_dgd(&setup.graph, &setup.shards, &setup.model, &dcfg, &setup.attack, &mut recorder)?;
            }
            Algorithm::LocalCd => {
                let ccfg = CdConfig {
                    sweeps: last_round,
                    update: cfg.cd_update(&cfg.local_cd, convex)?,
                    init: setup.init.clone(),
                };
                run_local_cd(&setup.shards, &setup.model, &ccfg, &mut recorder)?;
            }
            Algorithm::CentralizedCd => {
                let ccfg = CentralizedCdConfig {
                    tolerance: None,
                    max_sweeps: last_round,
                    update: cfg.cd_update(&cfg.centralized, convex)?,
                    init: setup.init.clone(),
                };
                run_centralized_cd(&setup.eval.train, &setup.model, &ccfg, &mut recorder)?;
            }
        }
        Ok(())
    })();
    let (records, checkpoints) = recorder.into_parts();
    AlgoRun {
        algo: algo.name(),
        records,
        checkpoints,
        error: result.err().map(|e| e.to_string()),
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every (cell, trial, algorithm) combination in memory.
///
/// Setup problems (degree violations, missing data, refuted graphs) fail
/// the whole call before anything runs. Faults inside an algorithm are
/// collected in [`ExperimentOutput::failures`] next to the records emitted
/// before the fault.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentOutput> {
    let started = Instant::now();
    cfg.validate()?;
    let cells = cfg.cells()?;
    let b_max = cfg.max_b()?;
    let csv = load_csv_dataset(cfg)?;
    let jobs_list: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.experiment.trials).map(move |t| (c, t)))
        .collect();

    let results = with_pool(jobs, || {
        let setups: Vec<TrialSetup> = jobs_list
            .par_iter()
            .map(|&(c, t)| setup_trial(cfg, csv.as_ref(), &cells[c], t, b_max))
            .collect::<Result<_>>()?;
        let runs: Vec<Vec<AlgoRun>> = jobs_list
            .par_iter()
            .zip(&setups)
            .map(|(&(c, _), setup)| {
                cfg.experiment
                    .algorithms
                    .iter()
                    .map(|&a| run_algorithm(cfg, &cells[c], setup, a))
                    .collect()
            })
            .collect();
        Ok::<_, Error>((setups, runs))
    })?;
    let (setups, runs) = results?;

    let mut outputs: Vec<CellOutput> = cells
        .iter()
        .map(|c| CellOutput {
            cell: Some(c.clone()),
            ..Default::default()
        })
        .collect();
    let mut failures = Vec::new();
    for (&(c, t), algo_runs) in jobs_list.iter().zip(runs) {
        for run in algo_runs {
            let out = &mut outputs[c];
            out.records.entry(run.algo.to_string()).or_default().extend(run.records);
            out.checkpoints
                .extend(run.checkpoints.into_iter().map(|cp| (run.algo.to_string(), t, cp)));
            if let Some(error) = run.error {
                failures.push(Failure {
                    cell: cells[c].name.clone(),
                    trial: t,
                    algo: run.algo.to_string(),
                    error,
                });
            }
        }
    }
    Ok(ExperimentOutput {
        config: cfg.clone(),
        cells: outputs,
        trials: setups.into_iter().map(|s| s.info).collect(),
        failures,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    version: &'a str,
    seed: u64,
    trials: usize,
    cells: Vec<&'a str>,
    algorithms: Vec<&'static str>,
    dgd_schedule: String,
    wall_ms: u64,
    trial_seeds: &'a [TrialInfo],
    failures: &'a [Failure],
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::file(path, e))
}

impl ExperimentOutput {
    /// Writes metrics CSVs, `summary.csv`, `config.cfg`, `manifest.json`
    /// and checkpoint dumps under `out`. Without a sweep the metrics files
    /// sit directly in `out`, otherwise in one directory per cell.
    pub fn write(&self, out: &Path) -> Result<()> {
        create_dir(out)?;
        let swept = self.config.sweep.is_some();
        let mut summary = String::from(metrics::SUMMARY_HEADER);
        summary.push('\n');
        for cell in &self.cells {
            let name = cell.cell.as_ref().map_or("all", |c| c.name.as_str());
            let dir = if swept { out.join(name) } else { out.to_path_buf() };
            create_dir(&dir)?;
            for (algo, records) in &cell.records {
                write_file(&dir.join(format!("{algo}.csv")), &metrics::records_to_csv(records))?;
                summary.push_str(&metrics::summary_row(name, algo, records));
                summary.push('\n');
            }
            if !cell.checkpoints.is_empty() {
                let cp_dir = dir.join("checkpoints");
                create_dir(&cp_dir)?;
                for (algo, trial, cp) in &cell.checkpoints {
                    write_file(
                        &cp_dir.join(format!("{algo}_trial{trial}_r{}.csv", cp.r)),
                        &cp.to_csv(),
                    )?;
                }
            }
        }
        write_file(&out.join("summary.csv"), &summary)?;
        write_file(&out.join("config.cfg"), &self.config.to_toml_string()?)?;
        let dgd = self.config.dgd_schedule()?;
        let manifest = Manifest {
            name: &self.config.experiment.name,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.config.experiment.seed,
            trials: self.config.experiment.trials,
            cells: self
                .cells
                .iter()
                .map(|c| c.cell.as_ref().map_or("all", |c| c.name.as_str()))
                .collect(),
            algorithms: self.config.experiment.algorithms.iter().map(|a| a.name()).collect(),
            dgd_schedule: format!(
                "rho0={} offset={} exponent={}{}",
                dgd.rho0(),
                dgd.offset(),
                dgd.exponent(),
                if self.config.dgd == DgdSection::default() {
                    " (reused from [protocol])"
                } else {
                    ""
                }
            ),
            wall_ms: self.wall_ms,
            trial_seeds: &self.trials,
            failures: &self.failures,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("manifest: {e}")))?;
        write_file(&out.join("manifest.json"), &(json + "\n"))
    }
}

/// Overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub jobs: Option<usize>,
}

/// Loads, runs and writes. Partial results are written before an
/// algorithm fault is reported.
pub fn cmd_run(config: &Path, out: &Path, overrides: &RunOverrides) -> Result<ExperimentOutput> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = overrides.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(trials) = overrides.trials {
        cfg.experiment.trials = trials;
    }
    let output = run_experiment(&cfg, overrides.jobs)?;
    output.write(out)?;
    if let Some(f) = output.failures.first() {
        return Err(Error::NumericFault(format!(
            "{} run(s) failed; first: {} trial {} {}: {}",
            output.failures.len(),
            f.cell,
            f.trial,
            f.algo,
            f.error
        )));
    }
    Ok(output)
}

/// Parameters of `gen-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataSpec {
    pub dim: usize,
    pub margin: f64,
    pub noise: f64,
    pub count: usize,
    #[serde(default)]
    pub test_count: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Writes `train.csv`, `test.csv` (when `test_count > 0`) and
/// `metadata.txt`. Returns the training set.
pub fn cmd_gen_data(spec: &GenDataSpec, out: &Path) -> Result<Dataset> {
    let all = data::synth_two_class(
        spec.dim,
        spec.margin,
        spec.noise,
        spec.count + spec.test_count,
        &mut rng::stream(spec.seed, &[tag::DATA]),
    )?;
    let mut samples = all.into_samples();
    let test: Vec<Sample> = samples
        .split_off(spec.count)
        .into_iter()
        .enumerate()
        .map(|(id, s)| Sample { id, ..s })
        .collect();
    let train = Dataset::new(samples)?;
    create_dir(out)?;
    train.write_csv(&out.join("train.csv"))?;
    let mut meta = train.metadata();
    meta.push_str(&format!(
        "seed={}\nmargin={}\nnoise={}\ntest_count={}\n",
        spec.seed, spec.margin, spec.noise, spec.test_count
    ));
    if !test.is_empty() {
        write_file(&out.join("test.csv"), &data::samples_to_csv(&test, spec.dim))?;
    }
    write_file(&out.join("metadata.txt"), &meta)?;
    Ok(train)
}

/// Certifies an edge-list file and renders the outcome with its degree
/// report.
pub fn cmd_certify_graph(path: &Path, b: usize, mode: CertifyMode) -> Result<String> {
    let graph = DirectedGraph::read_edge_list(path)?;
    let degrees = validate_degrees(&graph, b);
    let result = certify_assumption3(&graph, b, mode)?;
    Ok(format!(
        "nodes={} edges={} b={b}\n{degrees}\n{result}\n",
        graph.node_count(),
        graph.edge_count()
    ))
}
