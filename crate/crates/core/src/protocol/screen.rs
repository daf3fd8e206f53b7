use std::cmp::Ordering;

use crate::{Error, Result};

/// Result of trimming one node's received values.
#[derive(Debug, Clone, PartialEq)]
pub struct Screened {
    /// Surviving `(sender, value)` pairs in ascending screening order.
    pub kept: Vec<(usize, f64)>,
    /// Senders of the `b` smallest values.
    pub removed_low: Vec<usize>,
    /// Senders of the `b` largest values.
    pub removed_high: Vec<usize>,
}

impl Screened {
    pub fn kept_values(&self) -> Vec<f64> {
        self.kept.iter().map(|&(_, v)| v).collect()
    }
}

/// NaN sorts as +inf.
fn sort_key(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn screening_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    sort_key(a.1)
        .total_cmp(&sort_key(b.1))
        .then(a.0.cmp(&b.0))
}

/// Removes the `b` smallest and `b` largest received values. Ties are
/// broken by `(value, sender)` order, so among equal values the lowest
/// sender ids are dropped as "small" and the highest as "large". The
/// receiver's own value never takes part.
pub fn screen(values: &[(usize, f64)], b: usize) -> Result<Screened> {
    if values.len() < 2 * b + 1 {
        return Err(Error::ProtocolViolation(format!(
            "screening with b={b} needs at least {} values, received {}",
            2 * b + 1,
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(screening_order);
    let n = sorted.len();
    let removed_low = sorted[..b].iter().map(|&(s, _)| s).collect();
    let removed_high = sorted[n - b..].iter().map(|&(s, _)| s).collect();
    let kept = sorted[b..n - b].to_vec();
    Ok(Screened {
        kept,
        removed_low,
        removed_high,
    })
}

/// `(own + sum(kept)) / (|kept| + 1) - step * grad`.
///
/// With `|kept| = |N_j| - 2b` the divisor is `|N_j| - 2b + 1`.
pub fn update_coordinate(own: f64, kept: &[f64], step: f64, grad: f64) -> Result<f64> {
    let total = kept.iter().fold(own, |acc, v| acc + v);
    let next = total / (kept.len() + 1) as f64 - step * grad;
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NumericFault(format!(
            "non-finite update: own={own}, kept={kept:?}, step={step}, grad={grad}"
        )))
    }
}
