//! Robust losses on squared residual norms.

use super::SolverError;
use serde::{Deserialize, Serialize};

/// Huber loss on `s = ‖r‖²` with threshold `δ` (same units as `r`):
/// `ρ(s) = s` for `s ≤ δ²`, `2δ√s − δ²` beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberLoss {
    delta: f64,
}

impl HuberLoss {
    pub fn new(delta: f64) -> Result<Self, SolverError> {
        if !(delta > 0.0) {
            return Err(SolverError::InvalidArgument(format!(
                "Huber threshold must be positive, got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `(ρ(s), ρ'(s))` without argument checks.
    #[inline]
    pub fn evaluate(&self, s: f64) -> (f64, f64) {
        let d2 = self.delta * self.delta;
        if s <= d2 {
            (s, 1.0)
        } else {
            let r = s.sqrt();
            (2.0 * self.delta * r - d2, self.delta / r)
        }
    }
}

/// Value and first derivative of the Huber loss at squared norm `s`.
pub fn huber_loss(s: f64, delta: f64) -> Result<(f64, f64), SolverError> {
    if !(s >= 0.0) {
        return Err(SolverError::InvalidArgument(format!(
            "squared norm must be nonnegative, got {s}"
        )));
    }
    Ok(HuberLoss::new(delta)?.evaluate(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_examples() {
        assert_eq!(huber_loss(0.0, 1.5).unwrap(), (0.0, 1.0));
        let d = 1.5;
        assert_eq!(huber_loss(d * d, d).unwrap(), (d * d, 1.0));
        let (v, g) = huber_loss(4.0 * d * d, d).unwrap();
        assert!((v - 3.0 * d * d).abs() < 1e-15);
        assert!((g - 0.5).abs() < 1e-15);
    }

    #[test]
    fn huber_knee_is_continuous() {
        for &d in &[0.1, 1.0, 3.7] {
            let knee = d * d;
            let (v0, g0) = huber_loss(knee, d).unwrap();
            // The outer branch evaluated exactly at the knee gives the same
            // value and slope.
            let outer_v = 2.0 * d * knee.sqrt() - d * d;
            let outer_g = d / knee.sqrt();
            assert_eq!(v0, outer_v);
            assert_eq!(g0, outer_g);
            let above = f64::from_bits(knee.to_bits() + 1);
            let (v1, g1) = huber_loss(above, d).unwrap();
            assert!((v1 - v0).abs() <= 4.0 * f64::EPSILON * knee);
            assert!((g1 - g0).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn huber_rejects_bad_arguments() {
        assert!(huber_loss(-1e-9, 1.0).is_err());
        assert!(huber_loss(f64::NAN, 1.0).is_err());
        assert!(huber_loss(1.0, 0.0).is_err());
        assert!(HuberLoss::new(-2.0).is_err());
    }
}
