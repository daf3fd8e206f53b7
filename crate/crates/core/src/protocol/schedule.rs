use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Diminishing step sizes `rho(tau) = rho0 / (tau + offset)^exponent`.
///
/// Only exponents in `(0.5, 1]` are admitted, so every schedule is
/// non-increasing, not summable and square-summable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    rho0: f64,
    offset: f64,
    exponent: f64,
}

impl StepSchedule {
    pub fn new(rho0: f64, offset: f64, exponent: f64) -> Result<Self> {
        if !(rho0 > 0.0 && rho0.is_finite()) {
            return Err(Error::Config(format!("rho0 must be positive, got {rho0}")));
        }
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(Error::Config(format!("step offset must be >= 0, got {offset}")));
        }
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(Error::Config(format!(
                "step exponent must lie in (0.5, 1], got {exponent}"
            )));
        }
        Ok(Self {
            rho0,
            offset,
            exponent,
        })
    }

    /// `rho0 / tau`.
    pub fn harmonic(rho0: f64) -> Result<Self> {
        Self::new(rho0, 0.0, 1.0)
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Step for the 1-based clock `tau`.
    pub fn step(&self, tau: usize) -> Result<f64> {
        if tau == 0 {
            return Err(Error::Config("step clock starts at 1".into()));
        }
        Ok(self.rho0 / (tau as f64 + self.offset).powf(self.exponent))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_values() {
        let s = StepSchedule::harmonic(1.0).unwrap();
        assert_eq!(s.step(1).unwrap(), 1.0);
        assert_eq!(s.step(4).unwrap(), 0.25);
        assert!(s.step(0).is_err());
    }

    #[test]
    fn harmonic_partial_sums() {
        let s = StepSchedule::harmonic(1.0).unwrap();
        let (mut sum, mut sq) = (0.0, 0.0);
        for tau in 1..=1_000_000 {
            let r = s.step(tau).unwrap();
            sum += r;
            sq += r * r;
        }
        assert!(sum >= 13.8, "{sum}");
        assert!(sq <= std::f64::consts::PI.powi(2) / 6.0, "{sq}");
    }

    #[test]
    fn rejects_summable_or_non_diminishing_forms() {
        assert!(StepSchedule::new(1.0, 0.0, 0.5).is_err());
        assert!(StepSchedule::new(1.0, 0.0, 1.5).is_err());
        assert!(StepSchedule::new(0.0, 0.0, 1.0).is_err());
        assert!(StepSchedule::new(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn non_increasing() {
        let s = StepSchedule::new(2.0, 3.0, 0.6).unwrap();
        for tau in 1..1000 {
            assert!(s.step(tau + 1).unwrap() <= s.step(tau).unwrap());
        }
    }
}
