//! The end-to-end delay tradeoff between the source and relay queues.
//!
//! With delay exponents `j1`, `j2` the probability that the sum of the two
//! queueing delays exceeds the horizon `D` is
//!
//! ```text
//! P(j1, j2) = (j1 e^{-j2 D} - j2 e^{-j1 D}) / (j1 - j2)
//! ```
//!
//! and the constraint `P = ε` defines a decreasing convex curve
//! `j2 = Φ(j1)` that meets the diagonal at `J_th` and approaches the
//! single-queue exponent `J0 = -ln(ε)/D` on both axes.
//!
//! ```
//! use relay_effcap::tradeoff::{phi, DelayConstraint, TimeUnit};
//!
//! let c = DelayConstraint::new(0.05, 1.0, TimeUnit::Block, 1.0).unwrap();
//! assert!((c.j_th() - 4.743864518).abs() < 1e-8);
//! assert!((phi(c.j_th(), &c).unwrap() - c.j_th()).abs() < 1e-10);
//! assert!((phi(4.0, &c).unwrap() - 5.999).abs() < 1e-3);
//! ```

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effcap::QosPair;
use crate::error::{Error, Result};
use crate::lmgf::{theta_of_j_raw, ServiceLaw};
use crate::numerics::{expand_upward, lambert_w_m1, try_find_root, Bracket, SolverConfig};

/// How the delay bound `Dmax` (seconds) is compared with per-block exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// `Dmax` is converted to `Dmax / T` blocks.
    #[default]
    Block,
    /// `Dmax` in seconds is used directly as the horizon.
    Second,
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeUnit::Block => "block",
            TimeUnit::Second => "second",
        })
    }
}

impl FromStr for TimeUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<TimeUnit> {
        match s {
            "block" => Ok(TimeUnit::Block),
            "second" => Ok(TimeUnit::Second),
            other => Err(Error::Config(format!(
                "unknown time unit `{other}` (expected block or second)"
            ))),
        }
    }
}

/// An end-to-end constraint `Pr{D1 + D2 > Dmax} <= ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayConstraint {
    pub epsilon: f64,
    /// Seconds.
    pub dmax: f64,
    pub time_unit: TimeUnit,
    /// Block length `T` in seconds.
    pub block_time: f64,
    horizon: f64,
    j0: f64,
    j_th: f64,
}

impl DelayConstraint {
    pub fn new(
        epsilon: f64,
        dmax: f64,
        time_unit: TimeUnit,
        block_time: f64,
    ) -> Result<DelayConstraint> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Domain(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if !(dmax > 0.0 && dmax.is_finite()) {
            return Err(Error::Domain(format!("Dmax must be positive, got {dmax}")));
        }
        if !(block_time > 0.0 && block_time.is_finite()) {
            return Err(Error::Domain(format!(
                "block time must be positive, got {block_time}"
            )));
        }
        let horizon = match time_unit {
            TimeUnit::Block => dmax / block_time,
            TimeUnit::Second => dmax,
        };
        let j0 = -epsilon.ln() / horizon;
        let j_th = if epsilon == 1.0 {
            0.0
        } else {
            -(1.0 + lambert_w_m1(-epsilon / std::f64::consts::E)?) / horizon
        };
        Ok(DelayConstraint {
            epsilon,
            dmax,
            time_unit,
            block_time,
            horizon,
            j0,
            j_th,
        })
    }

    /// The horizon `D` against which per-block exponents are compared.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn j0(&self) -> f64 {
        self.j0
    }

    pub fn j_th(&self) -> f64 {
        self.j_th
    }

    pub fn is_unconstrained(&self) -> bool {
        self.epsilon == 1.0
    }
}

/// A point `(j1, j2)` on the tradeoff curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub j1: f64,
    pub j2: f64,
}

/// Below this value of `|j1 - j2| D` the second-order expansion is used.
const SERIES_SWITCH: f64 = 1e-6;

/// `ln P(j1, j2)` over horizon `d`; either exponent may be `+inf`.
pub fn ln_joint_violation(j1: f64, j2: f64, d: f64) -> Result<f64> {
    if !(j1 > 0.0) || !(j2 > 0.0) || !(d > 0.0) {
        return Err(Error::Domain(format!(
            "exponents and horizon must be positive (j1 = {j1}, j2 = {j2}, D = {d})"
        )));
    }
    let a = j1.min(j2) * d;
    if a.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let delta = (j1 - j2).abs() * d;
    let s = if delta.is_infinite() {
        0.0
    } else if delta < SERIES_SWITCH {
        1.0 - delta / 2.0 + delta * delta / 6.0
    } else {
        -(-delta).exp_m1() / delta
    };
    Ok(-a + (a * s).ln_1p())
}

/// Probability that the end-to-end delay exceeds the horizon `d`.
pub fn joint_violation(j1: f64, j2: f64, d: f64) -> Result<f64> {
    ln_joint_violation(j1, j2, d).map(f64::exp)
}

/// `J_th`, the diagonal point of the tradeoff curve.
pub fn j_threshold(c: &DelayConstraint) -> Result<f64> {
    if !(c.epsilon > 0.0 && c.epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "J_th needs epsilon in (0, 1), got {}",
            c.epsilon
        )));
    }
    Ok(c.j_th)
}

/// `Φ(j1)`: the relay exponent that meets the constraint with equality.
///
/// Returns `+inf` at `j1 = J0`.
pub fn phi(j1: f64, c: &DelayConstraint) -> Result<f64> {
    let (j0, j_th, d) = (c.j0, c.j_th, c.horizon);
    if c.is_unconstrained() {
        return Err(Error::Domain(
            "the tradeoff curve is degenerate at epsilon = 1".into(),
        ));
    }
    if j1.is_nan() || j1 < j0 {
        return Err(Error::Infeasible(format!("j1 = {j1} is below J0 = {j0}")));
    }
    if j1 == j0 {
        return Ok(f64::INFINITY);
    }
    if j1.is_infinite() {
        return Ok(j0);
    }
    if j1 == j_th {
        return Ok(j_th);
    }
    let ln_eps = c.epsilon.ln();
    let f = |j2: f64| ln_joint_violation(j1, j2, d).map(|l| l - ln_eps);
    let bracket = if j1 > j_th {
        Bracket::from_values(j0, j_th, f(j0)?, f(j_th)?)?
    } else {
        expand_upward(f, j_th, 2.0 * j_th)?
    };
    try_find_root(f, bracket, &SolverConfig::tight())
}

/// `dΦ/dj1` by implicit differentiation of `P(j1, Φ(j1)) = ε`.
pub fn phi_slope(j1: f64, c: &DelayConstraint) -> Result<f64> {
    let j2 = phi(j1, c)?;
    let d = c.horizon;
    if (j1 - j2).abs() * d < 1e-4 {
        return Ok(-1.0);
    }
    // P = (j1 e^{-j2 D} - j2 e^{-j1 D}) / (j1 - j2)
    let (e1, e2) = ((-j1 * d).exp(), (-j2 * d).exp());
    let den = j1 - j2;
    let p = (j1 * e2 - j2 * e1) / den;
    let dp1 = (e2 + j2 * d * e1 - p) / den;
    let dp2 = (-j1 * d * e2 - e1 + p) / den;
    Ok(-dp1 / dp2)
}

/// `ν(x) = (x + e^{-x} - 1) / (x + 1 - e^{x})`.
pub fn nu(x: f64) -> f64 {
    if x.abs() < 1.0 {
        // Both numerator and denominator start at x^2/2; divide it out.
        let (mut num, mut den) = (0.0f64, 0.0f64);
        let mut term = 0.5f64;
        let mut k = 2.0;
        while term.abs() > 1e-18 {
            num += if (k as i64) % 2 == 0 { term } else { -term };
            den -= term;
            k += 1.0;
            term *= x / k;
        }
        num / den
    } else {
        (x + (-x).exp_m1()) / (x - x.exp_m1())
    }
}

/// `η(x) = e^x ν(x)`.
pub fn eta(x: f64) -> f64 {
    if x > 700.0 {
        // ν(x) ~ -(x - 1) e^{-x}
        return -(x - 1.0) / (1.0 - (x + 1.0) * (-x).exp());
    }
    x.exp() * nu(x)
}

/// Grid of source exponents used by [`sample_boundary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryGrid {
    /// `j1 - J0` log-spaced from `J0 * offset` up to `50 J_th - J0`.
    Default { offset: f64 },
    /// As `Default`, with upper end `j_cap`.
    Cap { offset: f64, j_cap: f64 },
    /// Upper end `Φ(J0 (1 + offset))`, so both ends sit equally close to `J0`.
    Symmetric { offset: f64 },
    /// Explicit `j1` values.
    Points(Vec<f64>),
}

impl Default for BoundaryGrid {
    fn default() -> Self {
        BoundaryGrid::Default { offset: 1e-4 }
    }
}

impl BoundaryGrid {
    pub fn values(&self, c: &DelayConstraint, n: usize) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(Error::Domain(format!(
                "a boundary needs at least 2 points, got {n}"
            )));
        }
        let j0 = c.j0;
        let (offset, cap) = match self {
            BoundaryGrid::Points(p) => return Ok(p.clone()),
            BoundaryGrid::Default { offset } => (*offset, 50.0 * c.j_th),
            BoundaryGrid::Cap { offset, j_cap } => (*offset, *j_cap),
            BoundaryGrid::Symmetric { offset } => (*offset, phi(j0 * (1.0 + offset), c)?),
        };
        if !(offset > 0.0) || !(cap > j0 * (1.0 + offset)) {
            return Err(Error::Domain(format!(
                "boundary grid needs offset > 0 and j_cap above J0 (offset = {offset}, j_cap = {cap})"
            )));
        }
        let (lo, hi) = ((j0 * offset).ln(), (cap - j0).ln());
        Ok((0..n)
            .map(|i| {
                if i == n - 1 {
                    cap
                } else {
                    j0 + (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()
                }
            })
            .collect())
    }
}

/// Points of the feasible boundary, each mapped to its `(θ1, θ2)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Boundary {
    pub points: Vec<(TradeoffPoint, QosPair)>,
    /// Points where a target exponent exceeds what its link can reach.
    pub unreachable: Vec<TradeoffPoint>,
}

/// Samples the constraint boundary on the given grid.
pub fn sample_boundary<L1, L2>(
    c: &DelayConstraint,
    law1: &L1,
    law2: &L2,
    n: usize,
    grid: &BoundaryGrid,
) -> Result<Boundary>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    let j1s = grid.values(c, n)?;
    let solved: Vec<Result<(TradeoffPoint, Option<QosPair>)>> = j1s
        .par_iter()
        .map(|&j1| {
            let j2 = phi(j1, c)?;
            let point = TradeoffPoint { j1, j2 };
            let t1 = theta_of_j_raw(law1, j1);
            let t2 = theta_of_j_raw(law2, j2);
            match (t1, t2) {
                (Ok(t1), Ok(t2)) => Ok((point, Some(QosPair::from_parts(t1, t2, j1, j2)))),
                (Err(Error::Unreachable { .. }), _) | (_, Err(Error::Unreachable { .. })) => {
                    Ok((point, None))
                }
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        })
        .collect();
    let mut boundary = Boundary {
        points: Vec::with_capacity(j1s.len()),
        unreachable: Vec::new(),
    };
    for r in solved {
        match r? {
            (p, Some(q)) => boundary.points.push((p, q)),
            (p, None) => boundary.unreachable.push(p),
        }
    }
    if boundary.points.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    Ok(boundary)
}
