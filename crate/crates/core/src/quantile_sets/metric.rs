use serde::{Deserialize, Serialize};

use crate::data::IntervalObs;
use crate::error::{Error, Result};

/// Anything with a lower and an upper bound.
pub trait Bounds {
    fn bounds(&self) -> (f64, f64);
}

impl Bounds for (f64, f64) {
    fn bounds(&self) -> (f64, f64) {
        *self
    }
}

impl Bounds for IntervalObs {
    fn bounds(&self) -> (f64, f64) {
        (self.lower(), self.upper())
    }
}

fn finite<B: Bounds>(b: &B) -> Result<(f64, f64)> {
    let (lo, hi) = b.bounds();
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InfiniteEndpoint("Hausdorff argument".into()));
    }
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Hausdorff distance between two intervals: the larger endpoint gap.
pub fn hausdorff<A: Bounds, B: Bounds>(a: &A, b: &B) -> Result<f64> {
    let (a1, b1) = finite(a)?;
    let (a2, b2) = finite(b)?;
    Ok((a1 - a2).abs().max((b1 - b2).abs()))
}

/// Directed Hausdorff distance `sup_{x in A} d(x, B)`.
pub fn directed_hausdorff<A: Bounds, B: Bounds>(a: &A, b: &B) -> Result<f64> {
    let (a1, b1) = finite(a)?;
    let (a2, b2) = finite(b)?;
    Ok(pos(a2 - a1).max(pos(b1 - b2)))
}

/// Test metric and the matching limit functional of `(z_L, z_U)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "h")]
    Hausdorff,
    #[serde(rename = "dh")]
    DirectedHausdorff,
    #[serde(rename = "dh2")]
    SquaredDirected,
}

impl MetricKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "h" | "hausdorff" => Ok(Self::Hausdorff),
            "dh" | "directed-hausdorff" => Ok(Self::DirectedHausdorff),
            "dh2" | "squared-directed" => Ok(Self::SquaredDirected),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }

    /// Sample distance between the estimate and the hypothesized set.
    pub fn distance<A: Bounds, B: Bounds>(self, estimate: &A, hypothesis: &B) -> Result<f64> {
        match self {
            Self::Hausdorff => hausdorff(estimate, hypothesis),
            Self::DirectedHausdorff | Self::SquaredDirected => {
                directed_hausdorff(estimate, hypothesis)
            }
        }
    }

    /// `sqrt(n) * d` for the two unsquared metrics, `n * d^2` for the squared one.
    pub fn scaled_statistic(self, distance: f64, n: f64) -> (f64, f64) {
        match self {
            Self::SquaredDirected => (n * distance * distance, n),
            _ => (n.sqrt() * distance, n.sqrt()),
        }
    }

    /// Limit functional of a draw `(z_L, z_U)`.
    pub fn limit(self, z_lower: f64, z_upper: f64) -> f64 {
        match self {
            Self::Hausdorff => z_lower.abs().max(z_upper.abs()),
            Self::DirectedHausdorff => pos(z_lower).max(pos(-z_upper)),
            Self::SquaredDirected => {
                let d = pos(z_lower).max(pos(-z_upper));
                d * d
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(hausdorff(&(0.0, 1.0), &(0.5, 2.0)).unwrap(), 1.0);
        assert_eq!(directed_hausdorff(&(0.0, 1.0), &(-1.0, 3.0)).unwrap(), 0.0);
        assert_eq!(hausdorff(&(0.3, 0.7), &(0.3, 0.7)).unwrap(), 0.0);
        assert_eq!(directed_hausdorff(&(-1.0, 3.0), &(0.0, 1.0)).unwrap(), 2.0);
    }

    #[test]
    fn infinite_rejected() {
        assert!(hausdorff(&(f64::NEG_INFINITY, 1.0), &(0.0, 1.0)).is_err());
    }

    #[test]
    fn limit_functionals() {
        assert_eq!(MetricKind::Hausdorff.limit(-2.0, 1.0), 2.0);
        assert_eq!(MetricKind::DirectedHausdorff.limit(-2.0, 1.0), 0.0);
        assert_eq!(MetricKind::DirectedHausdorff.limit(0.5, -1.5), 1.5);
        assert_eq!(MetricKind::SquaredDirected.limit(0.5, -1.5), 2.25);
    }
}
