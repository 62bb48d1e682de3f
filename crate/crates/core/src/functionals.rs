//! Empirical cumulative containment and capacity functionals.
//!
//! For a sample of intervals `Y_i = [a_i, b_i]`:
//!
//! * containment `C_n(t) = #{i : Y_i ⊂ (-inf, t]} / n = #{b_i <= t} / n`
//! * capacity    `T_n(t) = #{i : Y_i ∩ (-inf, t] ≠ ∅} / n = #{a_i <= t} / n`
//!
//! Both are right-continuous step functions with jumps at data endpoints, and
//! `T_n >= C_n` pointwise.

use serde::{Deserialize, Serialize};

use crate::data::IntervalDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Functional {
    Containment,
    Capacity,
}

fn fraction_at_most(values: impl Iterator<Item = f64>, t: f64, n: usize) -> f64 {
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    values.filter(|&v| v <= t).count() as f64 / n as f64
}

pub fn containment_ecdf(ds: &IntervalDataset, t: f64) -> f64 {
    if t == f64::INFINITY {
        return 1.0;
    }
    fraction_at_most(ds.intervals().iter().map(|o| o.upper()), t, ds.len())
}

pub fn capacity_ecdf(ds: &IntervalDataset, t: f64) -> f64 {
    if t == f64::INFINITY {
        return 1.0;
    }
    fraction_at_most(ds.intervals().iter().map(|o| o.lower()), t, ds.len())
}

/// Both functionals tabulated on a sorted grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCurve {
    pub points: Vec<f64>,
    pub containment: Vec<f64>,
    pub capacity: Vec<f64>,
}

impl FunctionalCurve {
    /// Evaluates on `grid` (sorted ascending, duplicates allowed) in
    /// `O((n + m) log n)`.
    pub fn evaluate(ds: &IntervalDataset, grid: &[f64]) -> Result<Self> {
        if grid.windows(2).any(|w| w[0] > w[1]) || grid.iter().any(|t| t.is_nan()) {
            return Err(Error::InvalidArgument("grid must be sorted ascending".into()));
        }
        let n = ds.len() as f64;
        let mut lows = ds.lowers();
        let mut ups = ds.uppers();
        lows.sort_by(f64::total_cmp);
        ups.sort_by(f64::total_cmp);
        let count = |sorted: &[f64], t: f64| {
            if t == f64::INFINITY {
                1.0
            } else {
                sorted.partition_point(|&v| v <= t) as f64 / n
            }
        };
        Ok(Self {
            points: grid.to_vec(),
            containment: grid.iter().map(|&t| count(&ups, t)).collect(),
            capacity: grid.iter().map(|&t| count(&lows, t)).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,containment,capacity\n");
        for ((t, c), k) in self.points.iter().zip(&self.containment).zip(&self.capacity) {
            s.push_str(&format!("{t},{c},{k}\n"));
        }
        s
    }
}

/// Exact `sup_t |empirical(t) - reference(t)|`.
///
/// Between consecutive finite endpoints the empirical functional is constant
/// and the reference is monotone, so the supremum is attained at a breakpoint
/// or as a left limit at one, or in the tails (`reference(-inf)` and
/// `reference(+inf)`).
pub fn sup_deviation<F>(ds: &IntervalDataset, reference: F, which: Functional) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut pts: Vec<f64> = ds
        .intervals()
        .iter()
        .map(|o| match which {
            Functional::Containment => o.upper(),
            Functional::Capacity => o.lower(),
        })
        .filter(|v| v.is_finite())
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let n = ds.len() as f64;

    let mut lows = ds.lowers();
    let mut ups = ds.uppers();
    lows.sort_by(f64::total_cmp);
    ups.sort_by(f64::total_cmp);
    let sorted = match which {
        Functional::Containment => &ups,
        Functional::Capacity => &lows,
    };
    let emp = |t: f64| sorted.partition_point(|&v| v <= t) as f64 / n;
    let emp_left = |t: f64| sorted.partition_point(|&v| v < t) as f64 / n;

    // Left tail: empirical mass at -inf (infinite lower endpoints).
    let at_neg_inf = sorted.partition_point(|&v| v == f64::NEG_INFINITY) as f64 / n;
    let mut sup = (at_neg_inf - reference(f64::NEG_INFINITY)).abs();
    for &t in &pts {
        sup = sup.max((emp(t) - reference(t)).abs());
        sup = sup.max((emp_left(t) - reference(t.next_down())).abs());
    }
    let last = pts.last().map_or(at_neg_inf, |&t| emp(t));
    sup.max((last - reference(f64::INFINITY)).abs())
}
