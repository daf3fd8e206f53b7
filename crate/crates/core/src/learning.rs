//! Regularized empirical risk models.
//!
//! `risk(w) = (1/n) sum_n loss(w, x_n, y_n) + (lambda/2) ||w||^2`.
//!
//! Linear kinds score `s = w^T x` and expect labels in `{-1, +1}` (square
//! loss accepts any real label). The MLP kind is a one-hidden-layer ReLU
//! network with a softmax output and cross-entropy loss; labels are class
//! indices. Its parameters are flattened layer by layer, each layer as its
//! row-major weight matrix followed by its bias:
//! `[W1 (hidden x input), b1, W2 (output x hidden), b2]`.

use crate::data::{Dataset, Sample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `(y - s)^2`
    Square,
    /// `max(0, 1 - y s)^2`
    SquareHinge,
    /// `ln(1 + exp(-y s))`
    Logistic,
    MlpSoftmaxCrossEntropy,
}

impl LossKind {
    pub fn is_convex(self) -> bool {
        !matches!(self, LossKind::MlpSoftmaxCrossEntropy)
    }

    /// Whether `predict` is defined.
    pub fn is_classifier(self) -> bool {
        !matches!(self, LossKind::Square)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Square => "square",
            LossKind::SquareHinge => "square-hinge",
            LossKind::Logistic => "logistic",
            LossKind::MlpSoftmaxCrossEntropy => "mlp",
        }
    }
}

/// Layer sizes of the ReLU/softmax network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpArch {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpArch {
    /// 4 inputs, 3 ReLU hidden units, 3 softmax outputs.
    pub const IRIS: MlpArch = MlpArch {
        input: 4,
        hidden: 3,
        output: 3,
    };

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        (b1, w2, b2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    kind: LossKind,
    lambda: f64,
    arch: Option<MlpArch>,
}

/// Regularization weight used when a config does not set one.
pub const DEFAULT_LAMBDA: f64 = 0.01;

fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LossModel {
    pub fn linear(kind: LossKind, lambda: f64) -> Result<Self> {
        if !kind.is_convex() {
            return Err(Error::Config("use LossModel::mlp for the network".into()));
        }
        Self::check_lambda(lambda)?;
        Ok(Self {
            kind,
            lambda,
            arch: None,
        })
    }

    pub fn mlp(arch: MlpArch, lambda: f64) -> Result<Self> {
        Self::check_lambda(lambda)?;
        if arch.input == 0 || arch.hidden == 0 || arch.output < 2 {
            return Err(Error::Config(format!("degenerate architecture {arch:?}")));
        }
        Ok(Self {
            kind: LossKind::MlpSoftmaxCrossEntropy,
            lambda,
            arch: Some(arch),
        })
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if lambda >= 0.0 && lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")))
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn arch(&self) -> Option<MlpArch> {
        self.arch
    }

    /// Parameter dimension `P` for features of dimension `feature_dim`.
    pub fn param_dim(&self, feature_dim: usize) -> Result<usize> {
        match self.arch {
            None => Ok(feature_dim),
            Some(arch) if arch.input == feature_dim => Ok(arch.param_count()),
            Some(arch) => Err(Error::DimensionMismatch {
                expected: arch.input,
                got: feature_dim,
            }),
        }
    }

    fn check(&self, w: &[f64], samples: &[Sample]) -> Result<()> {
        if let Some(s) = samples.first() {
            let p = self.param_dim(s.x.len())?;
            if p != w.len() {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: w.len(),
                });
            }
        } else if let Some(arch) = self.arch {
            if w.len() != arch.param_count() {
                return Err(Error::DimensionMismatch {
                    expected: arch.param_count(),
                    got: w.len(),
                });
            }
        }
        Ok(())
    }

    fn regularizer(&self, w: &[f64]) -> f64 {
        0.5 * self.lambda * dot(w, w)
    }

    /// Linear loss and its derivative with respect to the score.
    pub(crate) fn linear_loss(&self, score: f64, y: f64) -> (f64, f64) {
        match self.kind {
            LossKind::Square => {
                let r = y - score;
                (r * r, -2.0 * r)
            }
            LossKind::SquareHinge => {
                // the inactive side's derivative (0) is used at the kink
                let m = (1.0 - y * score).max(0.0);
                (m * m, -2.0 * y * m)
            }
            LossKind::Logistic => {
                let z = y * score;
                (softplus(-z), -y * sigmoid(-z))
            }
            LossKind::MlpSoftmaxCrossEntropy => unreachable!("linear_loss on mlp"),
        }
    }

    /// Empirical risk of `w` on `samples`. An empty sample set contributes
    /// only the regularizer.
    pub fn risk(&self, w: &[f64], samples: &[Sample]) -> Result<f64> {
        self.check(w, samples)?;
        let loss_sum: f64 = match self.arch {
            None => samples
                .iter()
                .map(|s| self.linear_loss(dot(w, &s.x), s.y).0)
                .sum(),
            Some(arch) => samples
                .iter()
                .map(|s| mlp_loss(&arch, w, s, None))
                .sum::<Result<f64>>()?,
        };
        let n = samples.len().max(1) as f64;
        Ok(loss_sum / n + self.regularizer(w))
    }

    /// Exact gradient of [`LossModel::risk`].
    pub fn grad(&self, w: &[f64], samples: &[Sample]) -> Result<Vec<f64>> {
        self.check(w, samples)?;
        let mut g = vec![0.0; w.len()];
        match self.arch {
            None => {
                for s in samples {
                    let d = self.linear_loss(dot(w, &s.x), s.y).1;
                    for (gk, xk) in g.iter_mut().zip(&s.x) {
                        *gk += d * xk;
                    }
                }
            }
            Some(arch) => {
                for s in samples {
                    mlp_loss(&arch, w, s, Some(&mut g))?;
                }
            }
        }
        let n = samples.len().max(1) as f64;
        for (gk, wk) in g.iter_mut().zip(w) {
            *gk = *gk / n + self.lambda * wk;
        }
        Ok(g)
    }

    /// Coordinate `k` (0-based) of [`LossModel::grad`]. For linear kinds
    /// this skips the other coordinates but accumulates in the same order,
    /// so the result is bit-identical to `grad(..)[k]`.
    pub fn coord_grad(&self, w: &[f64], samples: &[Sample], k: usize) -> Result<f64> {
        if k >= w.len() {
            return Err(Error::CoordinateOutOfRange {
                index: k,
                dim: w.len(),
            });
        }
        if self.arch.is_some() {
            return Ok(self.grad(w, samples)?[k]);
        }
        self.check(w, samples)?;
        let mut acc = 0.0;
        for s in samples {
            let d = self.linear_loss(dot(w, &s.x), s.y).1;
            acc += d * s.x[k];
        }
        let n = samples.len().max(1) as f64;
        Ok(acc / n + self.lambda * w[k])
    }

    /// Upper bound on the gradient's Lipschitz constant from the dataset's
    /// norm bound `B`: `2B^2 + lambda` for square and square hinge,
    /// `B^2/4 + lambda` for logistic.
    pub fn estimate_lipschitz(&self, dataset: &Dataset) -> Result<f64> {
        let b2 = dataset.norm_bound().powi(2);
        match self.kind {
            LossKind::Square | LossKind::SquareHinge => Ok(2.0 * b2 + self.lambda),
            LossKind::Logistic => Ok(b2 / 4.0 + self.lambda),
            LossKind::MlpSoftmaxCrossEntropy => Err(Error::Unsupported(
                "Lipschitz estimate is only defined for convex kinds".into(),
            )),
        }
    }

    /// Predicted label: `+1`/`-1` for binary kinds (a zero score counts as
    /// `+1`), the argmax class index (lowest index on ties) for the MLP.
    pub fn predict(&self, w: &[f64], x: &[f64]) -> Result<f64> {
        match self.kind {
            LossKind::Square => Err(Error::Unsupported(
                "square loss is a regression model; accuracy is undefined".into(),
            )),
            LossKind::SquareHinge | LossKind::Logistic => {
                if w.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: w.len(),
                        got: x.len(),
                    });
                }
                Ok(if dot(w, x) >= 0.0 { 1.0 } else { -1.0 })
            }
            LossKind::MlpSoftmaxCrossEntropy => {
                let arch = self.arch.expect("mlp has an architecture");
                let logits = mlp_forward(&arch, w, x)?.logits;
                let best = logits
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &v)| if v > logits[best] { i } else { best });
                Ok(best as f64)
            }
        }
    }

    /// Fraction of `samples` whose predicted label equals `y`.
    pub fn accuracy(&self, w: &[f64], samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Config("accuracy of an empty sample set".into()));
        }
        let mut correct = 0usize;
        for s in samples {
            if self.predict(w, &s.x)? == s.y {
                correct += 1;
            }
        }
        Ok(correct as f64 / samples.len() as f64)
    }

    /// Class probabilities of the MLP at `x`.
    pub fn softmax(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let arch = self
            .arch
            .ok_or_else(|| Error::Unsupported("softmax is only defined for the mlp".into()))?;
        let logits = mlp_forward(&arch, w, x)?.logits;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / total).collect())
    }
}

struct Forward {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn mlp_forward(arch: &MlpArch, w: &[f64], x: &[f64]) -> Result<Forward> {
    if x.len() != arch.input {
        return Err(Error::DimensionMismatch {
            expected: arch.input,
            got: x.len(),
        });
    }
    if w.len() != arch.param_count() {
        return Err(Error::DimensionMismatch {
            expected: arch.param_count(),
            got: w.len(),
        });
    }
    let (b1, w2, b2) = arch.offsets();
    let pre: Vec<f64> = (0..arch.hidden)
        .map(|h| dot(&w[h * arch.input..(h + 1) * arch.input], x) + w[b1 + h])
        .collect();
    let hidden: Vec<f64> = pre.iter().map(|&a| a.max(0.0)).collect();
    let logits = (0..arch.output)
        .map(|o| dot(&w[w2 + o * arch.hidden..w2 + (o + 1) * arch.hidden], &hidden) + w[b2 + o])
        .collect();
    Ok(Forward { pre, hidden, logits })
}

/// Cross-entropy of one sample; accumulates the unnormalized gradient into
/// `grad` when given.
fn mlp_loss(arch: &MlpArch, w: &[f64], s: &Sample, grad: Option<&mut [f64]>) -> Result<f64> {
    let label = s.y as usize;
    if s.y < 0.0 || s.y.fract() != 0.0 || label >= arch.output {
        return Err(Error::Config(format!(
            "mlp label {} is not a class index below {}",
            s.y, arch.output
        )));
    }
    let f = mlp_forward(arch, w, &s.x)?;
    let max = f.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = f.logits.iter().map(|l| (l - max).exp()).sum();
    let log_norm = max + sum_exp.ln();
    let loss = log_norm - f.logits[label];

    if let Some(g) = grad {
        let (b1, w2, b2) = arch.offsets();
        let delta_out: Vec<f64> = f
            .logits
            .iter()
            .enumerate()
            .map(|(o, l)| (l - log_norm).exp() - if o == label { 1.0 } else { 0.0 })
            .collect();
        for (o, d) in delta_out.iter().enumerate() {
            for h in 0..arch.hidden {
                g[w2 + o * arch.hidden + h] += d * f.hidden[h];
            }
            g[b2 + o] += d;
        }
        for h in 0..arch.hidden {
            // ReLU derivative at 0 is taken as 0
            if f.pre[h] <= 0.0 {
                continue;
            }
            let back: f64 = delta_out
                .iter()
                .enumerate()
                .map(|(o, d)| d * w[w2 + o * arch.hidden + h])
                .sum();
            for i in 0..arch.input {
                g[h * arch.input + i] += back * s.x[i];
            }
            g[b1 + h] += back;
        }
    }
    Ok(loss)
}
