//! Reference schemes: equal delay budgets at both queues, and a relay
//! without a buffer.

use serde::{Deserialize, Serialize};

use crate::channel::{CapacityLaw, FadingModel};
use crate::effcap::{effcap_fixed, symmetric_pair};
use crate::error::{Error, Result};
use crate::lmgf::{theta_of_j_raw, ServiceLaw};
use crate::numerics::log_sum_exp;
use crate::tradeoff::DelayConstraint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Symmetric,
    NoBuffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub scheme: Scheme,
    /// Bits per block.
    pub rate: f64,
    pub theta_used: Vec<f64>,
}

/// Both queues held to the symmetric exponent `J_th`.
pub fn symmetric_rate<L1, L2>(law1: &L1, law2: &L2, c: &DelayConstraint) -> Result<BaselineResult>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    if c.is_unconstrained() {
        return Ok(BaselineResult {
            scheme: Scheme::Symmetric,
            rate: law1.mean_capacity().min(law2.mean_capacity()),
            theta_used: vec![0.0, 0.0],
        });
    }
    let q = symmetric_pair(law1, law2, c)?;
    let fixed = effcap_fixed(law1, law2, q.theta1, q.theta2)?;
    Ok(BaselineResult {
        scheme: Scheme::Symmetric,
        rate: fixed.rate,
        theta_used: vec![q.theta1, q.theta2],
    })
}

/// Service of a source whose bits must cross both hops in the same block:
/// `(TB/2) min(log2(1 + 2 snr1 z1), log2(1 + 2 snr2 z2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoBufferLaw {
    first: CapacityLaw,
    second: CapacityLaw,
    mean: f64,
}

impl NoBufferLaw {
    pub fn new(hop1: &FadingModel, hop2: &FadingModel) -> Result<NoBufferLaw> {
        let half = |m: &FadingModel| {
            let mut h = m.clone();
            h.snr *= 2.0;
            h.bandwidth /= 2.0;
            CapacityLaw::new(h)
        };
        let mut law = NoBufferLaw {
            first: half(hop1)?,
            second: half(hop2)?,
            mean: 0.0,
        };
        law.mean = law.ln_expect_exp(&|c: f64| c.ln())?.exp();
        Ok(law)
    }

    /// Per-hop laws of the two halves of the block.
    pub fn hops(&self) -> (&CapacityLaw, &CapacityLaw) {
        (&self.first, &self.second)
    }
}

impl ServiceLaw for NoBufferLaw {
    fn ln_expect_exp(&self, h: &dyn Fn(f64) -> f64) -> Result<f64> {
        let (x, y) = (&self.first, &self.second);
        // min(X, Y) = X when X < Y, and Y when Y <= X.
        let a = x.ln_expect_exp(|cx| {
            let s = y.ln_survival(cx, false);
            if s == f64::NEG_INFINITY {
                s
            } else {
                h(cx) + s
            }
        })?;
        let b = y.ln_expect_exp(|cy| {
            let s = x.ln_survival(cy, true);
            if s == f64::NEG_INFINITY {
                s
            } else {
                h(cy) + s
            }
        })?;
        Ok(log_sum_exp(&[a, b]))
    }

    fn mean_capacity(&self) -> f64 {
        self.mean
    }

    fn prob_zero_capacity(&self) -> f64 {
        let (p, q) = (
            self.first.prob_zero_capacity,
            self.second.prob_zero_capacity,
        );
        1.0 - (1.0 - p) * (1.0 - q)
    }

    fn capacity_range(&self) -> (f64, f64) {
        let (a, b) = (self.first.capacity_range(), self.second.capacity_range());
        (a.0.min(b.0), a.1.min(b.1))
    }
}

/// Single queue at the source meeting `Pr{D > Dmax} <= ε` with exponent `J0`.
pub fn nobuffer_rate(
    hop1: &FadingModel,
    hop2: &FadingModel,
    c: &DelayConstraint,
) -> Result<BaselineResult> {
    let law = NoBufferLaw::new(hop1, hop2)?;
    nobuffer_rate_for(&law, c)
}

pub fn nobuffer_rate_for(law: &NoBufferLaw, c: &DelayConstraint) -> Result<BaselineResult> {
    if c.is_unconstrained() {
        return Ok(BaselineResult {
            scheme: Scheme::NoBuffer,
            rate: law.mean_capacity(),
            theta_used: vec![0.0],
        });
    }
    let j0 = c.j0();
    let theta = theta_of_j_raw(law, j0).map_err(|e| match e {
        Error::Unreachable { .. } => {
            Error::Infeasible(format!("no-buffer link cannot reach J0 = {j0}: {e}"))
        }
        other => other,
    })?;
    Ok(BaselineResult {
        scheme: Scheme::NoBuffer,
        rate: j0 / theta,
        theta_used: vec![theta],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FadingKind;
    use crate::effcap::effcap_delay_constrained;
    use crate::lmgf::j_raw;
    use crate::tradeoff::TimeUnit;

    fn model(kind: FadingKind, snr: f64) -> FadingModel {
        FadingModel::new(kind, snr, 1.0, 100.0).unwrap()
    }

    #[test]
    fn deterministic_no_buffer() {
        let (a, b) = (
            model(FadingKind::Deterministic { z: 2.0 }, 1.0),
            model(FadingKind::Deterministic { z: 2.0 }, 3.0),
        );
        let c = DelayConstraint::new(0.05, 1.0, TimeUnit::Second, 1.0).unwrap();
        let r = nobuffer_rate(&a, &b, &c).unwrap();
        let cnb = 50.0 * (1.0f64 + 2.0 * 2.0).log2();
        assert!((r.rate - cnb).abs() < 1e-9 * cnb, "{} vs {cnb}", r.rate);
    }

    #[test]
    fn discrete_no_buffer_matches_enumeration() {
        let a1 = vec![(0.5, 0.3), (2.0, 0.7)];
        let a2 = vec![(0.25, 0.6), (4.0, 0.4)];
        let (m1, m2) = (
            model(FadingKind::Discrete { atoms: a1.clone() }, 1.0),
            model(FadingKind::Discrete { atoms: a2.clone() }, 2.0),
        );
        let law = NoBufferLaw::new(&m1, &m2).unwrap();
        let theta = 0.03;
        let mut e = 0.0;
        let mut mean = 0.0;
        for &(z1, p1) in &a1 {
            for &(z2, p2) in &a2 {
                let c = 50.0 * (1.0f64 + 2.0 * z1).log2().min((1.0f64 + 4.0 * z2).log2());
                e += p1 * p2 * (-theta * c).exp();
                mean += p1 * p2 * c;
            }
        }
        assert!((j_raw(&law, theta).unwrap() + e.ln()).abs() < 1e-12);
        assert!((law.mean_capacity() - mean).abs() < 1e-10);
    }

    #[test]
    fn ties_counted_once() {
        // Equal half-block capacities on both hops.
        let m = model(
            FadingKind::Discrete {
                atoms: vec![(1.0, 0.5), (3.0, 0.5)],
            },
            1.0,
        );
        let law = NoBufferLaw::new(&m, &m).unwrap();
        let total = law.ln_expect_exp(&|_| 0.0).unwrap();
        assert!(total.abs() < 1e-14);
    }

    #[test]
    fn rayleigh_no_buffer_normalised() {
        let m1 = model(FadingKind::Rayleigh { mean: 4.0 }, 1.0);
        let m2 = model(FadingKind::Rayleigh { mean: 9.0 }, 2.0);
        let law = NoBufferLaw::new(&m1, &m2).unwrap();
        assert!(law.ln_expect_exp(&|_| 0.0).unwrap().abs() < 1e-10);
        let (x, y) = law.hops();
        assert!(law.mean_capacity() < x.mean_capacity.min(y.mean_capacity));
    }

    #[test]
    fn symmetric_below_asymmetric() {
        let m1 = FadingModel::new(FadingKind::Rayleigh { mean: 16.0 }, 1.0, 1e-3, 180e3).unwrap();
        let m2 = FadingModel::new(FadingKind::Rayleigh { mean: 16.0 }, 2.0, 1e-3, 180e3).unwrap();
        let (a, b) = (CapacityLaw::new(m1).unwrap(), CapacityLaw::new(m2).unwrap());
        let c = DelayConstraint::new(0.05, 1.0, TimeUnit::Second, 1e-3).unwrap();
        let s = symmetric_rate(&a, &b, &c).unwrap();
        let r = effcap_delay_constrained(&a, &b, &c).unwrap();
        assert!(s.rate <= r.rate);
        let (t1, t2) = (s.theta_used[0], s.theta_used[1]);
        assert!(t1 > t2);
        assert!((s.rate - c.j_th() / t1).abs() < 1e-9 * s.rate);
    }

    #[test]
    fn unconstrained_limits() {
        let m1 = model(FadingKind::Rayleigh { mean: 4.0 }, 1.0);
        let m2 = model(FadingKind::Rayleigh { mean: 9.0 }, 2.0);
        let c = DelayConstraint::new(1.0, 1.0, TimeUnit::Second, 1.0).unwrap();
        let law = NoBufferLaw::new(&m1, &m2).unwrap();
        assert_eq!(
            nobuffer_rate_for(&law, &c).unwrap().rate,
            law.mean_capacity()
        );
    }
}
