//! Datasets, shards and partitioning.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One labelled example. `id` is the sample's position in the dataset it
/// was drawn from and survives partitioning.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// An immutable collection of samples with a common feature dimension and
/// a recorded bound `B` on feature norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    norm_bound: f64,
    /// Original class names, indexed by label, when labels came from a file.
    class_names: Option<Vec<String>>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Labels are compared by bit pattern so `-0.0` and `0.0` never merge and
/// grouping stays total.
fn class_key(y: f64) -> i64 {
    let bits = y.to_bits() as i64;
    if bits < 0 {
        bits ^ i64::MAX
    } else {
        bits
    }
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.x.len());
        if let Some(bad) = samples.iter().find(|s| s.x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.x.len(),
            });
        }
        let norm_bound = samples.iter().map(|s| norm(&s.x)).fold(0.0, f64::max);
        Ok(Self {
            samples,
            dim,
            norm_bound,
            class_names: None,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `B`: the largest feature norm in the dataset.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Distinct labels with their counts, ordered by label.
    pub fn class_counts(&self) -> Vec<(f64, usize)> {
        class_counts(&self.samples)
    }

    /// Appends a constant 1 feature so a linear model carries a bias.
    pub fn with_bias(&self) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut x = s.x.clone();
                x.push(1.0);
                Sample { id: s.id, x, y: s.y }
            })
            .collect();
        let mut out = Self::new(samples).expect("uniform dimension is preserved");
        out.class_names = self.class_names.clone();
        out
    }

    /// Relabels a two-class dataset to `-1` / `+1` (lower label becomes -1).
    pub fn to_signed_binary(&self) -> Result<Self> {
        let classes = self.class_counts();
        if classes.len() != 2 {
            return Err(Error::Config(format!(
                "binary model needs exactly 2 classes, dataset has {}",
                classes.len()
            )));
        }
        let low = classes[0].0;
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                id: s.id,
                x: s.x.clone(),
                y: if s.y == low { -1.0 } else { 1.0 },
            })
            .collect();
        let mut out = Self::new(samples)?;
        out.class_names = self.class_names.clone();
        Ok(out)
    }

    /// CSV with header `y,x1,...,xP`; values use shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        samples_to_csv(&self.samples, self.dim)
    }

    /// Flat `key=value` metadata: bound, row count, dimension, class counts.
    pub fn metadata(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "B={}", self.norm_bound);
        let _ = writeln!(out, "N={}", self.samples.len());
        let _ = writeln!(out, "P={}", self.dim);
        for (label, count) in self.class_counts() {
            let _ = writeln!(out, "class.{label}={count}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::file(path, e))
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        fs::write(path, self.metadata()).map_err(|e| Error::file(path, e))
    }
}

pub fn class_counts(samples: &[Sample]) -> Vec<(f64, usize)> {
    let mut counts: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for s in samples {
        counts.entry(class_key(s.y)).or_insert((s.y, 0)).1 += 1;
    }
    counts.into_values().collect()
}

pub fn samples_to_csv(samples: &[Sample], dim: usize) -> String {
    let mut out = String::from("y");
    for p in 1..=dim {
        let _ = write!(out, ",x{p}");
    }
    out.push('\n');
    for s in samples {
        let _ = write!(out, "{}", s.y);
        for v in &s.x {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// The fixed class direction used by [`synth_two_class`]: alternating
/// signs, unit norm.
pub fn class_direction(dim: usize) -> Vec<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|i| if i % 2 == 0 { scale } else { -scale })
        .collect()
}

/// Two Gaussian classes `x = y * margin * u + noise * g` with balanced
/// labels, then scaled by the largest norm so that `B = 1`.
pub fn synth_two_class<R: Rng + ?Sized>(
    dim: usize,
    margin: f64,
    noise: f64,
    count: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    if count < 2 {
        return Err(Error::Config("need at least 2 samples".into()));
    }
    if !(margin > 0.0) {
        return Err(Error::Config(format!("margin must be positive, got {margin}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::Config(format!("noise must be non-negative, got {noise}")));
    }
    let u = class_direction(dim);
    let mut labels: Vec<f64> = (0..count)
        .map(|i| if i < count.div_ceil(2) { 1.0 } else { -1.0 })
        .collect();
    labels.shuffle(rng);
    let mut samples: Vec<Sample> = labels
        .into_iter()
        .enumerate()
        .map(|(id, y)| {
            let x = u
                .iter()
                .map(|&ui| {
                    let g: f64 = rng.sample(StandardNormal);
                    y * margin * ui + noise * g
                })
                .collect();
            Sample { id, x, y }
        })
        .collect();
    let scale = samples.iter().map(|s| norm(&s.x)).fold(0.0, f64::max);
    if scale > 0.0 {
        for s in &mut samples {
            s.x.iter_mut().for_each(|v| *v /= scale);
        }
    }
    Dataset::new(samples)
}

/// Per-feature rescaling applied after parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureScaling {
    #[default]
    None,
    /// Onto `[0, 1]`.
    MinMax,
    /// Zero mean, unit population variance.
    Standardize,
}

/// Column layout of a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    /// 0-based index of the label column; all other columns are features.
    pub label_column: usize,
    pub has_header: bool,
    pub scaling: FeatureScaling,
}

/// Parses comma-separated rows. Labels may be any token; distinct labels are
/// mapped to contiguous class indices (numeric order when every label is a
/// number, lexicographic otherwise).
pub fn parse_csv(text: &str, schema: &CsvSchema) -> Result<Dataset> {
    let mut rows: Vec<(usize, Vec<f64>, String)> = Vec::new();
    let mut width = None;
    let mut skip_header = schema.has_header;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        if skip_header {
            skip_header = false;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {w} columns, found {}", fields.len()),
                })
            }
            _ => {}
        }
        if schema.label_column >= fields.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "label column {} out of range for {} columns",
                    schema.label_column,
                    fields.len()
                ),
            });
        }
        let mut x = Vec::with_capacity(fields.len() - 1);
        for (c, field) in fields.iter().enumerate() {
            if c == schema.label_column {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric feature {field:?} in column {}", c + 1),
            })?;
            x.push(v);
        }
        rows.push((line_no, x, fields[schema.label_column].to_string()));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }

    let mut names: Vec<String> = rows.iter().map(|r| r.2.clone()).collect();
    names.sort();
    names.dedup();
    let numeric: Option<Vec<f64>> = names.iter().map(|n| n.parse().ok()).collect();
    if let Some(values) = numeric {
        let mut pairs: Vec<(f64, String)> = values.into_iter().zip(names).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = pairs.into_iter().map(|p| p.1).collect();
    }
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let dim = rows[0].1.len();
    let count = rows.len() as f64;
    for c in 0..dim {
        let (shift, scale) = match schema.scaling {
            FeatureScaling::None => continue,
            FeatureScaling::MinMax => {
                let (lo, hi) = rows
                    .iter()
                    .map(|r| r.1[c])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (lo, hi - lo)
            }
            FeatureScaling::Standardize => {
                let mean = rows.iter().map(|r| r.1[c]).sum::<f64>() / count;
                let var = rows.iter().map(|r| (r.1[c] - mean).powi(2)).sum::<f64>() / count;
                (mean, var.sqrt())
            }
        };
        for r in &mut rows {
            r.1[c] = if scale > 0.0 { (r.1[c] - shift) / scale } else { 0.0 };
        }
    }

    let samples = rows
        .iter()
        .enumerate()
        .map(|(id, (_, x, label))| Sample {
            id,
            x: x.clone(),
            y: index[label.as_str()] as f64,
        })
        .collect();
    let mut dataset = Dataset::new(samples)?;
    dataset.class_names = Some(names);
    Ok(dataset)
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_csv(&text, schema)
}

/// One honest node's local training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub owner: usize,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub shards: BTreeMap<usize, Shard>,
    /// Samples not allocated to any shard, ordered by sample id.
    pub test: Vec<Sample>,
}

impl Partition {
    /// All shard samples concatenated in node order.
    pub fn pooled_train(&self) -> Vec<Sample> {
        self.shards
            .values()
            .flat_map(|s| s.samples.iter().cloned())
            .collect()
    }
}

/// Deals `per_node` samples to each listed node, disjointly. With
/// `class_balanced`, every shard holds `floor(N/C)` or `ceil(N/C)` samples
/// of each class; the extra samples rotate across classes by node position.
pub fn partition<R: Rng + ?Sized>(
    dataset: &Dataset,
    nodes: &[usize],
    per_node: usize,
    class_balanced: bool,
    rng: &mut R,
) -> Result<Partition> {
    let needed = nodes.len() * per_node;
    if needed > dataset.len() {
        return Err(Error::InsufficientSamples(format!(
            "{} nodes x {per_node} samples = {needed} > {} available",
            nodes.len(),
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let all = dataset.samples();
    let mut used = vec![false; all.len()];
    let mut shards = BTreeMap::new();

    if class_balanced {
        let mut pools: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for &i in &order {
            pools.entry(class_key(all[i].y)).or_default().push(i);
        }
        let mut pools: Vec<std::collections::VecDeque<usize>> =
            pools.into_values().map(Into::into).collect();
        let classes = pools.len();
        for (pos, &node) in nodes.iter().enumerate() {
            let mut samples = Vec::with_capacity(per_node);
            for c in 0..classes {
                let extra = usize::from((c + classes - pos % classes) % classes < per_node % classes);
                let take = per_node / classes + extra;
                for _ in 0..take {
                    let i = pools[c].pop_front().ok_or_else(|| {
                        Error::InsufficientSamples(format!(
                            "class {} ran out while filling node {}",
                            c,
                            node + 1
                        ))
                    })?;
                    used[i] = true;
                    samples.push(all[i].clone());
                }
            }
            shards.insert(node, Shard { owner: node, samples });
        }
    } else {
        for (pos, &node) in nodes.iter().enumerate() {
            let samples = order[pos * per_node..(pos + 1) * per_node]
                .iter()
                .map(|&i| {
                    used[i] = true;
                    all[i].clone()
                })
                .collect();
            shards.insert(node, Shard { owner: node, samples });
        }
    }

    let test = all
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(s, _)| s.clone())
        .collect();
    Ok(Partition { shards, test })
}

/// Keeps at most `cap` samples per class, preserving order.
pub fn cap_per_class(samples: Vec<Sample>, cap: usize) -> Vec<Sample> {
    let mut seen: BTreeMap<i64, usize> = BTreeMap::new();
    samples
        .into_iter()
        .filter(|s| {
            let n = seen.entry(class_key(s.y)).or_insert(0);
            *n += 1;
            *n <= cap
        })
        .collect()
}
