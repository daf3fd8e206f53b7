//! Consensus and risk diagnostics, and the CSV record stream.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::learning::LossModel;
use crate::protocol::{Hooks, Snapshot};
use crate::{Error, Result};

pub const CSV_HEADER: &str = "trial,algo,r,k,t,t_c,consensus_diameter,mean_pairwise,pooled_train_risk,test_accuracy,excess_risk,wall_ms";

/// One row of experiment output.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub trial: usize,
    pub algo: String,
    pub r: usize,
    pub k: usize,
    pub t: usize,
    pub t_c: u64,
    pub consensus_diameter: f64,
    pub mean_pairwise: f64,
    pub pooled_train_risk: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub excess_risk: Option<f64>,
    pub wall_ms: Option<u64>,
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.algo,
            self.r,
            self.k,
            self.t,
            self.t_c,
            self.consensus_diameter,
            self.mean_pairwise,
            opt(&self.pooled_train_risk),
            opt(&self.test_accuracy),
            opt(&self.excess_risk),
            opt(&self.wall_ms),
        )
    }
}

pub fn records_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusStats {
    /// Largest pairwise distance.
    pub diameter: f64,
    /// Mean over unordered pairs.
    pub mean_pairwise: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise Euclidean distances between honest states.
pub fn consensus_stats(states: &[Vec<f64>]) -> Result<ConsensusStats> {
    if states.len() < 2 {
        return Err(Error::Config(format!(
            "consensus needs at least 2 honest nodes, got {}",
            states.len()
        )));
    }
    let mut diameter: f64 = 0.0;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            let d = distance(a, b);
            diameter = diameter.max(d);
            total += d;
            pairs += 1;
        }
    }
    Ok(ConsensusStats {
        diameter,
        mean_pairwise: total / pairs as f64,
    })
}

/// `risk(w, pooled) - oracle_risk`.
pub fn excess_risk(model: &LossModel, w: &[f64], pooled: &[Sample], oracle_risk: Option<f64>) -> Result<f64> {
    let oracle = oracle_risk.ok_or_else(|| Error::Config("excess risk needs an oracle risk".into()))?;
    Ok(model.risk(w, pooled)? - oracle)
}

/// When a [`Recorder`] emits a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cadence {
    /// Every inner iteration.
    Inner,
    /// Whenever a coordinate's inner loop completes.
    #[default]
    Coordinate,
    /// At the end of every `n`-th round (and the last round).
    Rounds(usize),
}

/// Data used to score honest states.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    /// Pooled honest training data; enables `pooled_train_risk`.
    pub train: Vec<Sample>,
    /// Held-out samples; enables `test_accuracy`.
    pub test: Vec<Sample>,
    /// Risk of the centralized oracle on `train`; enables `excess_risk`.
    pub oracle_risk: Option<f64>,
    /// Score accuracy on `train` instead of `test`.
    pub accuracy_on_train: bool,
}

/// A [`Hooks`] implementation that turns snapshots into records.
///
/// Risk and accuracy are averaged over honest nodes. Wall time is only
/// recorded when enabled, so the default stream is reproducible byte for
/// byte.
pub struct Recorder<'a> {
    trial: usize,
    algo: String,
    cadence: Cadence,
    last_round: usize,
    model: &'a LossModel,
    eval: &'a Evaluation,
    clock: Option<Instant>,
    checkpoint_every: Option<usize>,
    records: Vec<MetricsRecord>,
    checkpoints: Vec<Checkpoint>,
}

/// All honest parameter vectors at one point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub r: usize,
    pub t_c: u64,
    pub nodes: Vec<usize>,
    pub states: Vec<Vec<f64>>,
}

impl Checkpoint {
    /// `node,w1,...,wP`, node ids 1-based.
    pub fn to_csv(&self) -> String {
        let dim = self.states.first().map_or(0, Vec::len);
        let mut out = String::from("node");
        for p in 1..=dim {
            let _ = write!(out, ",w{p}");
        }
        out.push('\n');
        for (node, w) in self.nodes.iter().zip(&self.states) {
            let _ = write!(out, "{}", node + 1);
            for v in w {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

impl<'a> Recorder<'a> {
    pub fn new(
        trial: usize,
        algo: impl Into<String>,
        cadence: Cadence,
        last_round: usize,
        model: &'a LossModel,
        eval: &'a Evaluation,
    ) -> Self {
        Self {
            trial,
            algo: algo.into(),
            cadence,
            last_round,
            model,
            eval,
            clock: None,
            checkpoint_every: None,
            records: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    pub fn with_wall_clock(mut self) -> Self {
        self.clock = Some(Instant::now());
        self
    }

    /// Dumps all honest states at the end of every `rounds`-th round and
    /// of the last round.
    pub fn with_checkpoints(mut self, rounds: usize) -> Self {
        self.checkpoint_every = Some(rounds.max(1));
        self
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn into_parts(self) -> (Vec<MetricsRecord>, Vec<Checkpoint>) {
        (self.records, self.checkpoints)
    }

    fn round_due(&self, r: usize, every: usize) -> bool {
        r % every.max(1) == 0 || r == self.last_round
    }

    fn mean_over_nodes<F>(&self, states: &[Vec<f64>], f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> Result<f64>,
    {
        let mut total = 0.0;
        for w in states {
            total += f(w)?;
        }
        Ok(total / states.len() as f64)
    }
}

impl Hooks for Recorder<'_> {
    fn observe(&mut self, snap: &Snapshot<'_>) -> Result<()> {
        let due = match self.cadence {
            Cadence::Inner => true,
            Cadence::Coordinate => snap.end_of_coordinate,
            Cadence::Rounds(every) => snap.end_of_round && self.round_due(snap.index.r, every),
        };
        if let Some(every) = self.checkpoint_every {
            if snap.end_of_round && self.round_due(snap.index.r, every) {
                self.checkpoints.push(Checkpoint {
                    r: snap.index.r,
                    t_c: snap.index.t_c,
                    nodes: snap.honest.to_vec(),
                    states: snap.states.to_vec(),
                });
            }
        }
        if !due {
            return Ok(());
        }
        let consensus = if snap.states.len() >= 2 {
            consensus_stats(snap.states)?
        } else {
            ConsensusStats {
                diameter: 0.0,
                mean_pairwise: 0.0,
            }
        };
        let model = self.model;
        let pooled_train_risk = if self.eval.train.is_empty() {
            None
        } else {
            Some(self.mean_over_nodes(snap.states, |w| model.risk(w, &self.eval.train))?)
        };
        let scored = if self.eval.accuracy_on_train {
            &self.eval.train
        } else {
            &self.eval.test
        };
        let test_accuracy = if scored.is_empty() || !model.kind().is_classifier() {
            None
        } else {
            Some(self.mean_over_nodes(snap.states, |w| model.accuracy(w, scored))?)
        };
        let excess_risk = match (pooled_train_risk, self.eval.oracle_risk) {
            (Some(risk), Some(oracle)) => Some(risk - oracle),
            _ => None,
        };
        self.records.push(MetricsRecord {
            trial: self.trial,
            algo: self.algo.clone(),
            r: snap.index.r,
            k: snap.index.k,
            t: snap.index.t,
            t_c: snap.index.t_c,
            consensus_diameter: consensus.diameter,
            mean_pairwise: consensus.mean_pairwise,
            pooled_train_risk,
            test_accuracy,
            excess_risk,
            wall_ms: self.clock.map(|c| c.elapsed().as_millis() as u64),
        });
        Ok(())
    }
}

/// Linear-interpolation quantile of unsorted data; `None` when empty.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if sorted[lo] == sorted[hi] {
        return Some(sorted[lo]);
    }
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Interquartile range.
pub fn iqr(values: &[f64]) -> Option<f64> {
    Some(quantile(values, 0.75)? - quantile(values, 0.25)?)
}

pub const SUMMARY_HEADER: &str = "cell,algo,trials,t_c,median_consensus_diameter,iqr_consensus_diameter,median_mean_pairwise,iqr_mean_pairwise,median_pooled_train_risk,iqr_pooled_train_risk,median_test_accuracy,iqr_test_accuracy,median_excess_risk,iqr_excess_risk";

/// One `summary.csv` row from the last record of every trial of one
/// algorithm.
pub fn summary_row(cell: &str, algo: &str, records: &[MetricsRecord]) -> String {
    let mut last: std::collections::BTreeMap<usize, &MetricsRecord> = Default::default();
    for r in records.iter().filter(|r| r.algo == algo) {
        last.insert(r.trial, r);
    }
    let finals: Vec<&MetricsRecord> = last.into_values().collect();
    let t_c = finals.iter().map(|r| r.t_c).max().unwrap_or(0);
    let column = |f: &dyn Fn(&MetricsRecord) -> Option<f64>| -> String {
        let values: Vec<f64> = finals.iter().filter_map(|r| f(r)).collect();
        format!("{},{}", opt(&median(&values)), opt(&iqr(&values)))
    };
    format!(
        "{cell},{algo},{},{t_c},{},{},{},{},{}",
        finals.len(),
        column(&|r| Some(r.consensus_diameter)),
        column(&|r| Some(r.mean_pairwise)),
        column(&|r| r.pooled_train_risk),
        column(&|r| r.test_accuracy),
        column(&|r| r.excess_risk),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_states_have_zero_spread() {
        let s = consensus_stats(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!((s.diameter, s.mean_pairwise), (0.0, 0.0));
    }

    #[test]
    fn unit_pair() {
        let s = consensus_stats(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!((s.diameter, s.mean_pairwise), (1.0, 1.0));
    }

    #[test]
    fn brute_force_pairs() {
        let states: Vec<Vec<f64>> = vec![
            vec![0.3, -1.2, 0.5],
            vec![1.1, 0.4, -0.2],
            vec![-0.7, 0.9, 2.0],
            vec![0.0, 0.0, 0.1],
        ];
        let mut dists = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if i < j {
                    let d: f64 = (0..3).map(|c| (states[i][c] - states[j][c]).powi(2)).sum();
                    dists.push(d.sqrt());
                }
            }
        }
        let s = consensus_stats(&states).unwrap();
        let max = dists.iter().copied().fold(0.0, f64::max);
        let mean = dists.iter().sum::<f64>() / 6.0;
        assert!((s.diameter - max).abs() < 1e-15);
        assert!((s.mean_pairwise - mean).abs() < 1e-15);
    }

    #[test]
    fn single_node_is_an_error() {
        assert!(consensus_stats(&[vec![0.0]]).is_err());
    }

    #[test]
    fn excess_needs_oracle() {
        let model = LossModel::linear(crate::learning::LossKind::Logistic, 0.0).unwrap();
        let s = [Sample { id: 0, x: vec![1.0], y: 1.0 }];
        assert!(excess_risk(&model, &[0.0], &s, None).is_err());
        let e = excess_risk(&model, &[0.0], &s, Some(0.5)).unwrap();
        assert!((e - (2f64.ln() - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn csv_rows_leave_missing_values_empty() {
        let rec = MetricsRecord {
            trial: 1,
            algo: "byrdie".into(),
            r: 2,
            k: 3,
            t: 1,
            t_c: 13,
            consensus_diameter: 0.5,
            mean_pairwise: 0.25,
            pooled_train_risk: Some(0.7),
            test_accuracy: None,
            excess_risk: None,
            wall_ms: None,
        };
        assert_eq!(rec.to_csv_row(), "1,byrdie,2,3,1,13,0.5,0.25,0.7,,,");
        assert_eq!(CSV_HEADER.split(',').count(), rec.to_csv_row().split(',').count());
    }

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(iqr(&v), Some(1.5));
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[1.0, f64::INFINITY, f64::INFINITY]), Some(f64::INFINITY));
    }
}
