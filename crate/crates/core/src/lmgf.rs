//! Log-moment generating functions of per-block service processes and the
//! delay exponent `J(θ) = -ln E[exp(-θ C)]`.
//!
//! `J` is measured per block. It is increasing and concave, starts at
//! `J(0) = 0` with slope `E[C]`, and saturates at `-ln Pr{C = 0}`.
//!
//! ```
//! use relay_effcap::channel::{CapacityLaw, FadingKind, FadingModel};
//! use relay_effcap::lmgf::{j_of_theta, theta_of_j, JValue, ThetaExponent};
//!
//! let model = FadingModel::new(
//!     FadingKind::Discrete { atoms: vec![(1.0, 0.5), (3.0, 0.5)] },
//!     1.0, 1.0, 100.0,
//! ).unwrap();
//! let law = CapacityLaw::new(model).unwrap();
//! // C is 100 or 200 bits with equal probability.
//! let j = j_of_theta(&law, ThetaExponent::new(0.01).unwrap()).unwrap();
//! let exact = -(0.5 * ((-1.0f64).exp() + (-2.0f64).exp())).ln();
//! assert!((j.get() - exact).abs() < 1e-12);
//! let back = theta_of_j(&law, j).unwrap();
//! assert!((back.get() - 0.01).abs() < 1e-12);
//! ```

use serde::{Deserialize, Serialize};

use crate::channel::CapacityLaw;
use crate::error::{Error, Result};
use crate::numerics::{expand_upward, try_find_root, Bracket, SolverConfig};

/// A per-bit QoS exponent `θ >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ThetaExponent(f64);

impl ThetaExponent {
    pub fn new(theta: f64) -> Result<ThetaExponent> {
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!(
                "theta must be finite and >= 0, got {theta}"
            )));
        }
        Ok(ThetaExponent(theta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A per-block delay exponent `J >= 0`. The per-second value is `J / T`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct JValue(f64);

impl JValue {
    pub fn new(j: f64) -> Result<JValue> {
        if !(j >= 0.0) || j.is_nan() {
            return Err(Error::Domain(format!(
                "delay exponent must be >= 0, got {j}"
            )));
        }
        Ok(JValue(j))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn per_second(self, block_time: f64) -> f64 {
        self.0 / block_time
    }
}

/// A nonnegative per-block service process with i.i.d. blocks.
pub trait ServiceLaw: Send + Sync {
    /// `ln E[exp(h(C))]`; `h` may return `-inf`.
    fn ln_expect_exp(&self, h: &dyn Fn(f64) -> f64) -> Result<f64>;

    fn mean_capacity(&self) -> f64;

    fn prob_zero_capacity(&self) -> f64;

    /// Smallest and largest capacity values (`+inf` when unbounded).
    fn capacity_range(&self) -> (f64, f64);

    /// `lim J(θ)` as `θ -> inf`.
    fn j_limit(&self) -> f64 {
        let p = self.prob_zero_capacity();
        if p > 0.0 {
            -p.ln()
        } else {
            f64::INFINITY
        }
    }
}

impl ServiceLaw for CapacityLaw {
    fn ln_expect_exp(&self, h: &dyn Fn(f64) -> f64) -> Result<f64> {
        CapacityLaw::ln_expect_exp(self, h)
    }

    fn mean_capacity(&self) -> f64 {
        self.mean_capacity
    }

    fn prob_zero_capacity(&self) -> f64 {
        self.prob_zero_capacity
    }

    fn capacity_range(&self) -> (f64, f64) {
        (self.c_min(), self.c_max())
    }
}

pub(crate) fn j_raw<L: ServiceLaw + ?Sized>(law: &L, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    let l = law.ln_expect_exp(&|c| -theta * c)?;
    Ok((-l).max(0.0))
}

pub(crate) fn j_slope_raw<L: ServiceLaw + ?Sized>(law: &L, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(law.mean_capacity());
    }
    let num = law.ln_expect_exp(&|c| c.ln() - theta * c)?;
    let den = law.ln_expect_exp(&|c| -theta * c)?;
    Ok((num - den).exp())
}

pub(crate) fn lmgf_raw<L: ServiceLaw + ?Sized>(law: &L, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    law.ln_expect_exp(&|c| theta * c).map_err(|e| match e {
        Error::DivergentMoment { .. } => Error::DivergentMoment { theta },
        other => other,
    })
}

pub(crate) fn theta_of_j_raw<L: ServiceLaw + ?Sized>(law: &L, target: f64) -> Result<f64> {
    if !(target >= 0.0) || !target.is_finite() {
        return Err(Error::Domain(format!(
            "target delay exponent must be finite and >= 0, got {target}"
        )));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let limit = law.j_limit();
    if target >= limit {
        return Err(Error::Unreachable { target, limit });
    }
    let mean = law.mean_capacity();
    if !(mean > 0.0) {
        return Err(Error::Unreachable { target, limit: 0.0 });
    }
    // Jensen: J(θ) <= θ E[C], so J(target / E[C]) <= target.
    let lo = target / mean;
    let f = |t: f64| j_raw(law, t).map(|j| j - target);
    let bracket = expand_upward(f, lo, 2.0 * lo).map_err(|e| match e {
        Error::NoSignChange { .. } => Error::Unreachable { target, limit },
        other => other,
    })?;
    try_find_root(f, bracket, &SolverConfig::tight())
}

/// The delay exponent `J(θ) = -ln E[exp(-θ C)]` per block.
pub fn j_of_theta<L: ServiceLaw + ?Sized>(law: &L, theta: ThetaExponent) -> Result<JValue> {
    j_raw(law, theta.0).map(JValue)
}

/// `dJ/dθ = E[C exp(-θC)] / E[exp(-θC)]`.
pub fn j_derivative<L: ServiceLaw + ?Sized>(law: &L, theta: ThetaExponent) -> Result<f64> {
    j_slope_raw(law, theta.0)
}

/// Inverse of [`j_of_theta`].
pub fn theta_of_j<L: ServiceLaw + ?Sized>(law: &L, target: JValue) -> Result<ThetaExponent> {
    theta_of_j_raw(law, target.0).map(ThetaExponent)
}

/// `ln E[exp(θ C)]` for any real `θ`.
pub fn lmgf_service<L: ServiceLaw + ?Sized>(law: &L, theta: f64) -> Result<f64> {
    if theta.is_nan() {
        return Err(Error::Domain("theta is NaN".into()));
    }
    lmgf_raw(law, theta)
}

/// LMGF of the departures of a source queue fed at constant rate `rate`,
/// which form the arrival process of the relay queue.
pub fn lmgf_relay_arrival<L: ServiceLaw + ?Sized>(
    law1: &L,
    rate: f64,
    theta_tilde: ThetaExponent,
    theta: f64,
) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("theta must be >= 0, got {theta}")));
    }
    let tt = theta_tilde.0;
    if theta <= tt {
        Ok(rate * theta)
    } else {
        Ok(rate * theta + lmgf_raw(law1, theta - tt)?)
    }
}

/// The exponent `θ > 0` at which a constant arrival rate `rate` is the
/// effective capacity, i.e. `J(θ) = rate * θ`.
///
/// Returns `+inf` when `rate` does not exceed the limit of `J(θ)/θ`, and
/// `0` when `rate >= E[C]`.
pub fn theta_for_rate<L: ServiceLaw + ?Sized>(law: &L, rate: f64) -> Result<f64> {
    let mean = law.mean_capacity();
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("rate must be positive, got {rate}")));
    }
    if rate >= mean {
        return Ok(0.0);
    }
    let g = |t: f64| j_raw(law, t).map(|j| j / t - rate);
    let mut hi = 1.0 / mean;
    let mut g_hi = g(hi)?;
    let mut lo = hi;
    let mut g_lo = g_hi;
    let mut steps = 0;
    while g_lo <= 0.0 {
        hi = lo;
        g_hi = g_lo;
        lo *= 0.25;
        g_lo = g(lo)?;
        steps += 1;
        if steps > 200 {
            return Err(Error::NoSignChange {
                lo,
                hi,
                f_lo: g_lo,
                f_hi: g_hi,
            });
        }
    }
    steps = 0;
    while g_hi > 0.0 {
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        g_hi = g(hi)?;
        steps += 1;
        if steps > 200 || !hi.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    let bracket = Bracket::from_values(lo, hi, g_lo, g_hi)?;
    try_find_root(g, bracket, &SolverConfig::tight())
}
