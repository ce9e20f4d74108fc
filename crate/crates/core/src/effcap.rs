//! Effective capacity of the two-hop link, for fixed QoS exponents and
//! under an end-to-end delay constraint.
//!
//! ```
//! use relay_effcap::channel::{CapacityLaw, FadingKind, FadingModel};
//! use relay_effcap::effcap::{effcap_fixed, FixedCase};
//!
//! let law = |c: f64| {
//!     let m = FadingModel::new(FadingKind::Deterministic { z: 1.0 }, 1.0, 1.0, c).unwrap();
//!     CapacityLaw::new(m).unwrap()
//! };
//! let fixed = effcap_fixed(&law(1.0), &law(2.0), 1.0, 1.0).unwrap();
//! assert_eq!(fixed.case, FixedCase::I);
//! assert!((fixed.rate - 1.0).abs() < 1e-12);
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmgf::{j_raw, j_slope_raw, lmgf_raw, theta_of_j_raw, ServiceLaw};
use crate::numerics::{try_find_root, Bracket, SolverConfig};
use crate::tradeoff::{phi, DelayConstraint};

/// Exponents `(θ1, θ2)` with their delay exponents and per-queue rates
/// `r_i = J_i(θ_i) / θ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosPair {
    pub theta1: f64,
    pub theta2: f64,
    pub j1: f64,
    pub j2: f64,
    pub r1: f64,
    pub r2: f64,
}

impl QosPair {
    pub fn from_parts(theta1: f64, theta2: f64, j1: f64, j2: f64) -> QosPair {
        QosPair {
            theta1,
            theta2,
            j1,
            j2,
            r1: j1 / theta1,
            r2: j2 / theta2,
        }
    }

    pub fn from_thetas<L1, L2>(law1: &L1, law2: &L2, theta1: f64, theta2: f64) -> Result<QosPair>
    where
        L1: ServiceLaw + ?Sized,
        L2: ServiceLaw + ?Sized,
    {
        if !(theta1 > 0.0 && theta2 > 0.0) {
            return Err(Error::Domain(format!(
                "QoS exponents must be positive (got {theta1}, {theta2})"
            )));
        }
        Ok(QosPair::from_parts(
            theta1,
            theta2,
            j_raw(law1, theta1)?,
            j_raw(law2, theta2)?,
        ))
    }
}

/// `min(r1, r2)`: no arrival rate above this meets both queue constraints.
pub fn upper_bound(qos: &QosPair) -> f64 {
    qos.r1.min(qos.r2)
}

/// Strict stability of the relay queue, `E[C1] < E[C2]`.
pub fn check_stability<L1, L2>(law1: &L1, law2: &L2) -> bool
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    law1.mean_capacity() < law2.mean_capacity()
}

fn require_stable<L1, L2>(law1: &L1, law2: &L2) -> Result<()>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    if check_stability(law1, law2) {
        Ok(())
    } else {
        Err(Error::Unstable {
            mean1: law1.mean_capacity(),
            mean2: law2.mean_capacity(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedCase {
    /// `θ1 >= θ2`.
    I,
    /// `θ1 < θ2` and the source queue alone limits the rate.
    II,
    /// `θ1 < θ2`, relay limited, rate set by an intermediate exponent.
    IIIa,
    /// `θ1 < θ2`, relay limited, rate set by the relay's own exponent.
    IIIb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedResult {
    pub rate: f64,
    pub case: FixedCase,
    /// The intermediate exponent of case III.a.
    pub theta_tilde: Option<f64>,
}

/// `J2(θ2) - J1(θ1) - ln E[exp((θ2 - θ1) C1)]`.
///
/// Nonnegative exactly when the relay queue does not constrain the rate at
/// `(θ1, θ2)`; its zero on the boundary gives the optimum when the relay is
/// the tighter constraint.
pub fn case2_fixed_point_residual<L1, L2>(
    law1: &L1,
    law2: &L2,
    theta1: f64,
    theta2: f64,
) -> Result<f64>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    Ok(j_raw(law2, theta2)? - j_raw(law1, theta1)? - lmgf_raw(law1, theta2 - theta1)?)
}

/// Effective capacity for given exponents `θ1, θ2 > 0`.
pub fn effcap_fixed<L1, L2>(law1: &L1, law2: &L2, theta1: f64, theta2: f64) -> Result<FixedResult>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    require_stable(law1, law2)?;
    let q = QosPair::from_thetas(law1, law2, theta1, theta2)?;
    if theta1 >= theta2 {
        return Ok(FixedResult {
            rate: q.r1.min(q.r2),
            case: FixedCase::I,
            theta_tilde: None,
        });
    }
    let g2 = q.j2 - q.j1 - lmgf_raw(law1, theta2 - theta1)?;
    if g2 >= 0.0 {
        return Ok(FixedResult {
            rate: q.r1,
            case: FixedCase::II,
            theta_tilde: None,
        });
    }
    let j1_at_2 = j_raw(law1, theta2)?;
    if q.j2 < j1_at_2 {
        return Ok(FixedResult {
            rate: q.r2,
            case: FixedCase::IIIb,
            theta_tilde: None,
        });
    }
    // Smallest root of h on (θ1, θ2]; h(θ1) = g2 < 0 <= h(θ2).
    let h = |t: f64| -> Result<f64> { Ok(q.j2 - j_raw(law1, t)? - lmgf_raw(law1, theta2 - t)?) };
    const SCAN: usize = 64;
    let mut a = theta1;
    let mut fa = g2;
    let mut bracket = None;
    for k in 1..=SCAN {
        let b = theta1 + (theta2 - theta1) * k as f64 / SCAN as f64;
        let fb = if k == SCAN { q.j2 - j1_at_2 } else { h(b)? };
        if fb >= 0.0 {
            bracket = Some(Bracket::from_values(a, b, fa, fb)?);
            break;
        }
        a = b;
        fa = fb;
    }
    let bracket = bracket.ok_or(Error::NoSignChange {
        lo: theta1,
        hi: theta2,
        f_lo: g2,
        f_hi: q.j2 - j1_at_2,
    })?;
    let tt = try_find_root(h, bracket, &SolverConfig::tight())
        .map_err(|e| e.at("intermediate exponent"))?;
    Ok(FixedResult {
        rate: j_raw(law1, tt)? / tt,
        case: FixedCase::IIIa,
        theta_tilde: Some(tt),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    /// Equal exponents at the symmetric point; symmetric constraints optimal.
    I,
    /// The relay takes the tighter delay budget.
    II,
    /// Relay capacity always exceeds source capacity.
    IIDegenerate,
    /// The source takes the tighter delay budget.
    III,
    /// The source's worst block already supports the single-queue rate.
    IIIDegenerate,
    /// `ε = 1`: no delay constraint, only stability.
    Unconstrained,
}

impl std::fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CaseLabel::I => "I",
            CaseLabel::II => "II",
            CaseLabel::IIDegenerate => "II_degenerate",
            CaseLabel::III => "III",
            CaseLabel::IIIDegenerate => "III_degenerate",
            CaseLabel::Unconstrained => "unconstrained",
        })
    }
}

/// Named exponents found while solving; absent when not needed or not
/// defined for the instance. Unreachable thresholds are `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Auxiliary {
    pub theta1_th: Option<f64>,
    pub theta2_th: Option<f64>,
    pub theta1_0: Option<f64>,
    pub theta2_0: Option<f64>,
    pub bb_theta1: Option<f64>,
    pub vv_theta1: Option<f64>,
    pub vv_theta2: Option<f64>,
    pub uu_theta1: Option<f64>,
    pub uu_theta2: Option<f64>,
    /// Sign changes of the fixed-point residual seen on the scan.
    pub vv_roots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffCapResult {
    /// Bits per block.
    pub rate: f64,
    pub case_label: CaseLabel,
    pub optimizer: QosPair,
    pub auxiliary: Auxiliary,
    /// Whether the residual is known to have a single zero (case II only).
    pub uniqueness_condition_holds: Option<bool>,
}

/// Relative gap below which the two threshold exponents count as equal.
const CASE_TOL: f64 = 1e-9;

/// Number of geometric steps used when walking the boundary.
const WALK_STEPS: usize = 160;

/// Ratio between successive gaps `j - j_lo` on the walk.
const WALK_RATIO: f64 = 0.8;

fn theta_or_inf<L: ServiceLaw + ?Sized>(law: &L, j: f64) -> Result<f64> {
    match theta_of_j_raw(law, j) {
        Ok(t) => Ok(t),
        Err(Error::Unreachable { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Which queue's exponent parametrises a walk along the boundary.
#[derive(Clone, Copy, PartialEq)]
enum Side {
    Source,
    Relay,
}

struct Walk<'a, L1: ?Sized, L2: ?Sized> {
    law1: &'a L1,
    law2: &'a L2,
    c: &'a DelayConstraint,
    side: Side,
    /// Exclusive lower end of the parameter.
    lo: f64,
    /// Upper end of the parameter.
    hi: f64,
}

impl<L1, L2> Walk<'_, L1, L2>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    /// The boundary point with the walking exponent equal to `j`, or `None`
    /// if the partner exponent cannot be reached.
    fn at(&self, j: f64) -> Result<Option<QosPair>> {
        let other = phi(j, self.c)?;
        let (j1, j2) = match self.side {
            Side::Source => (j, other),
            Side::Relay => (other, j),
        };
        let t1 = theta_or_inf(self.law1, j1)?;
        let t2 = theta_or_inf(self.law2, j2)?;
        if t1.is_infinite() || t2.is_infinite() {
            return Ok(None);
        }
        Ok(Some(QosPair::from_parts(t1, t2, j1, j2)))
    }

    fn grid_from(&self, top: f64) -> impl Iterator<Item = f64> + '_ {
        let span = top - self.lo;
        (0..WALK_STEPS).map(move |k| self.lo + span * WALK_RATIO.powi(k as i32))
    }

    /// Walks down from `top`, evaluating `obj` until it changes sign or the
    /// boundary becomes unreachable. Returns every bracketing pair seen when
    /// `all` is set, otherwise the first.
    fn scan(
        &self,
        top: f64,
        obj: &dyn Fn(&QosPair) -> Result<f64>,
        all: bool,
    ) -> Result<Vec<(f64, f64, f64, f64)>> {
        let mut out = Vec::new();
        let mut prev: Option<(f64, f64)> = None;
        for j in self.grid_from(top) {
            let Some(q) = self.at(j)? else { break };
            let v = obj(&q)?;
            if let Some((pj, pv)) = prev {
                if (pv > 0.0) != (v > 0.0) {
                    out.push((j, pj, v, pv));
                    if !all {
                        break;
                    }
                }
            }
            prev = Some((j, v));
        }
        Ok(out)
    }

    fn refine(
        &self,
        br: (f64, f64, f64, f64),
        obj: &dyn Fn(&QosPair) -> Result<f64>,
    ) -> Result<f64> {
        let (lo, hi, flo, fhi) = br;
        let f = |j: f64| -> Result<f64> {
            match self.at(j)? {
                Some(q) => obj(&q),
                None => Err(Error::Unreachable {
                    target: j,
                    limit: f64::NAN,
                }),
            }
        };
        let cfg = SolverConfig {
            abs_tol: 1e-300,
            rel_tol: 1e-13,
            max_iters: 300,
        };
        try_find_root(f, Bracket::from_values(lo, hi, flo, fhi)?, &cfg)
    }
}

/// Lower end of the usable slice of a walk: the walking exponent must stay
/// above `J0` and keep the partner exponent below its law's ceiling.
fn walk_lower_end(c: &DelayConstraint, partner_limit: f64) -> Result<f64> {
    if partner_limit.is_infinite() {
        Ok(c.j0())
    } else {
        // Φ is an involution, so the walking exponent must exceed Φ(limit).
        Ok(phi(partner_limit, c)?.max(c.j0()))
    }
}

/// Effective capacity under the delay constraint `c`.
pub fn effcap_delay_constrained<L1, L2>(
    law1: &L1,
    law2: &L2,
    c: &DelayConstraint,
) -> Result<EffCapResult>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    require_stable(law1, law2)?;
    let mut aux = Auxiliary::default();

    if c.is_unconstrained() {
        let (m1, m2) = (law1.mean_capacity(), law2.mean_capacity());
        return Ok(EffCapResult {
            rate: m1.min(m2),
            case_label: CaseLabel::Unconstrained,
            optimizer: QosPair {
                theta1: 0.0,
                theta2: 0.0,
                j1: 0.0,
                j2: 0.0,
                r1: m1,
                r2: m2,
            },
            auxiliary: aux,
            uniqueness_condition_holds: None,
        });
    }

    let (j0, j_th) = (c.j0(), c.j_th());
    let (lim1, lim2) = (law1.j_limit(), law2.j_limit());
    if j0 >= lim1 || j0 >= lim2 {
        return Err(Error::Infeasible(format!(
            "J0 = {j0} exceeds the reachable delay exponent of a link ({lim1}, {lim2})"
        )));
    }
    let t1_th = theta_or_inf(law1, j_th).map_err(|e| e.at("theta1_th"))?;
    let t2_th = theta_or_inf(law2, j_th).map_err(|e| e.at("theta2_th"))?;
    if t1_th.is_infinite() && t2_th.is_infinite() {
        return Err(Error::Infeasible(
            "neither link reaches the symmetric delay exponent".into(),
        ));
    }
    aux.theta1_th = Some(t1_th);
    aux.theta2_th = Some(t2_th);
    let t1_0 = theta_of_j_raw(law1, j0).map_err(|e| e.at("theta1_0"))?;
    let t2_0 = theta_of_j_raw(law2, j0).map_err(|e| e.at("theta2_0"))?;
    aux.theta1_0 = Some(t1_0);
    aux.theta2_0 = Some(t2_0);

    let scale = t1_th.min(t2_th);
    if t1_th.is_finite() && t2_th.is_finite() && (t1_th - t2_th).abs() < CASE_TOL * scale {
        let t = t1_th.max(t2_th);
        return Ok(EffCapResult {
            rate: j_th / t,
            case_label: CaseLabel::I,
            optimizer: QosPair::from_parts(t1_th, t2_th, j_th, j_th),
            auxiliary: aux,
            uniqueness_condition_holds: None,
        });
    }

    let c1_min = c_min(law1)?;
    let c2_min = c_min(law2)?;

    if t1_th > t2_th {
        // The relay takes the tighter budget.
        let c1_max = c_max(law1)?;
        if c2_min >= c1_max {
            return Ok(EffCapResult {
                rate: j0 / t1_0,
                case_label: CaseLabel::IIDegenerate,
                optimizer: QosPair {
                    theta1: t1_0,
                    theta2: f64::INFINITY,
                    j1: j0,
                    j2: f64::INFINITY,
                    r1: j0 / t1_0,
                    r2: c2_min,
                },
                auxiliary: aux,
                uniqueness_condition_holds: None,
            });
        }
        let walk = Walk {
            law1,
            law2,
            c,
            side: Side::Source,
            lo: walk_lower_end(c, lim2)?,
            hi: if t1_th.is_finite() {
                j_th
            } else {
                lim1 * (1.0 - 1e-12)
            },
        };
        let bb = crossing(&walk, walk.hi)
            .map_err(|e| e.at("equal-exponent point"))?
            .ok_or(Error::SolverFailure {
                stage: "equal-exponent point",
                source: Box::new(Error::EmptyBoundary),
            })?;
        aux.bb_theta1 = Some(bb.theta1);
        let unique = j_slope_raw(law2, bb.theta1)? <= j_slope_raw(law1, bb.theta1)?;

        let residual =
            |q: &QosPair| -> Result<f64> { Ok(q.j2 - q.j1 - lmgf_raw(law1, q.theta2 - q.theta1)?) };
        let roots = walk
            .scan(bb.j1, &residual, true)
            .map_err(|e| e.at("fixed-point scan"))?;
        aux.vv_roots = roots.len();
        let smallest = *roots.last().ok_or(Error::SolverFailure {
            stage: "fixed-point scan",
            source: Box::new(Error::NoSignChange {
                lo: walk.lo,
                hi: bb.j1,
                f_lo: f64::NAN,
                f_hi: f64::NAN,
            }),
        })?;
        let vv_j1 = walk
            .refine(smallest, &residual)
            .map_err(|e| e.at("fixed point"))?;
        let vv = walk.at(vv_j1)?.ok_or(Error::EmptyBoundary)?;
        aux.vv_theta1 = Some(vv.theta1);
        aux.vv_theta2 = Some(vv.theta2);

        let balance = |q: &QosPair| -> Result<f64> { Ok(q.r1 - q.r2) };
        if let Some(&br) = walk.scan(bb.j1, &balance, false)?.first() {
            let uj = walk
                .refine(br, &balance)
                .map_err(|e| e.at("balanced point"))?;
            if let Some(u) = walk.at(uj)? {
                aux.uu_theta1 = Some(u.theta1);
                aux.uu_theta2 = Some(u.theta2);
            }
        }
        Ok(EffCapResult {
            rate: vv.r1,
            case_label: CaseLabel::II,
            optimizer: vv,
            auxiliary: aux,
            uniqueness_condition_holds: Some(unique),
        })
    } else {
        // The source takes the tighter budget.
        let single = j0 / t2_0;
        if c1_min >= single {
            return Ok(EffCapResult {
                rate: single,
                case_label: CaseLabel::IIIDegenerate,
                optimizer: QosPair {
                    theta1: f64::INFINITY,
                    theta2: t2_0,
                    j1: f64::INFINITY,
                    j2: j0,
                    r1: c1_min,
                    r2: single,
                },
                auxiliary: aux,
                uniqueness_condition_holds: None,
            });
        }
        let walk = Walk {
            law1,
            law2,
            c,
            side: Side::Relay,
            lo: walk_lower_end(c, lim1)?,
            hi: if t2_th.is_finite() {
                j_th
            } else {
                lim2 * (1.0 - 1e-12)
            },
        };
        if let Some(bb) = crossing(&walk, walk.hi)? {
            aux.bb_theta1 = Some(bb.theta1);
        }
        let balance = |q: &QosPair| -> Result<f64> { Ok(q.r2 - q.r1) };
        let br = *walk
            .scan(walk.hi, &balance, false)?
            .first()
            .ok_or(Error::SolverFailure {
                stage: "balanced point",
                source: Box::new(Error::NoSignChange {
                    lo: walk.lo,
                    hi: walk.hi,
                    f_lo: f64::NAN,
                    f_hi: f64::NAN,
                }),
            })?;
        let uj = walk
            .refine(br, &balance)
            .map_err(|e| e.at("balanced point"))?;
        let uu = walk.at(uj)?.ok_or(Error::EmptyBoundary)?;
        aux.uu_theta1 = Some(uu.theta1);
        aux.uu_theta2 = Some(uu.theta2);
        Ok(EffCapResult {
            rate: uu.r1.min(uu.r2),
            case_label: CaseLabel::III,
            optimizer: uu,
            auxiliary: aux,
            uniqueness_condition_holds: None,
        })
    }
}

/// The boundary point where `θ1 = θ2`, walking down from `top`.
fn crossing<L1, L2>(walk: &Walk<'_, L1, L2>, top: f64) -> Result<Option<QosPair>>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    let diff = |q: &QosPair| -> Result<f64> {
        // Compare in log space so that an infinite partner still orders.
        Ok(match walk.side {
            Side::Source => q.theta1.ln() - q.theta2.ln(),
            Side::Relay => q.theta2.ln() - q.theta1.ln(),
        })
    };
    let top_q = walk.at(top)?;
    if let Some(q) = top_q {
        if diff(&q)? == 0.0 {
            return Ok(Some(q));
        }
    }
    match walk.scan(top, &diff, false)?.first() {
        Some(&br) => {
            let j = walk.refine(br, &diff)?;
            walk.at(j)
        }
        None => Ok(None),
    }
}

fn c_min<L: ServiceLaw + ?Sized>(law: &L) -> Result<f64> {
    Ok(law.capacity_range().0)
}

fn c_max<L: ServiceLaw + ?Sized>(law: &L) -> Result<f64> {
    Ok(law.capacity_range().1)
}

/// Whether the residual is guaranteed to have a single zero on the
/// boundary: the relay's exponent grows no faster than the source's where
/// the two exponents coincide.
pub fn uniqueness_condition<L1, L2>(law1: &L1, law2: &L2, c: &DelayConstraint) -> Result<bool>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    let bb = equal_exponent_point(law1, law2, c)?;
    Ok(j_slope_raw(law2, bb.theta1)? <= j_slope_raw(law1, bb.theta1)?)
}

/// The boundary point with `θ1 = θ2`.
pub fn equal_exponent_point<L1, L2>(law1: &L1, law2: &L2, c: &DelayConstraint) -> Result<QosPair>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    if c.is_unconstrained() {
        return Err(Error::Domain("no boundary at epsilon = 1".into()));
    }
    let j_th = c.j_th();
    let t1_th = theta_or_inf(law1, j_th)?;
    let t2_th = theta_or_inf(law2, j_th)?;
    let (side, lim_self, lim_partner) = if t1_th >= t2_th {
        (Side::Source, law1.j_limit(), law2.j_limit())
    } else {
        (Side::Relay, law2.j_limit(), law1.j_limit())
    };
    let hi = if j_th < lim_self {
        j_th
    } else {
        lim_self * (1.0 - 1e-12)
    };
    let walk = Walk {
        law1,
        law2,
        c,
        side,
        lo: walk_lower_end(c, lim_partner)?,
        hi,
    };
    crossing(&walk, hi)?.ok_or(Error::EmptyBoundary)
}

/// Rate achieved with both queues at the symmetric exponent `J_th`.
pub fn symmetric_pair<L1, L2>(law1: &L1, law2: &L2, c: &DelayConstraint) -> Result<QosPair>
where
    L1: ServiceLaw + ?Sized,
    L2: ServiceLaw + ?Sized,
{
    let j = c.j_th();
    let t1 = theta_of_j_raw(law1, j).map_err(|e| Error::Infeasible(format!("source link: {e}")))?;
    let t2 = theta_of_j_raw(law2, j).map_err(|e| Error::Infeasible(format!("relay link: {e}")))?;
    Ok(QosPair::from_parts(t1, t2, j, j))
}
