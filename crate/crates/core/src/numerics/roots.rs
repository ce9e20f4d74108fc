//! Bracketing scalar root finder (Brent's method) and bracket expansion.

use crate::error::{Error, Result};

/// An interval known to enclose a sign change of some function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    /// Builds a bracket from precomputed endpoint values.
    pub fn from_values(lo: f64, hi: f64, f_lo: f64, f_hi: f64) -> Result<Bracket> {
        if !(lo < hi) || f_lo.is_nan() || f_hi.is_nan() || f_lo * f_hi > 0.0 {
            return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
        }
        Ok(Bracket { lo, hi, f_lo, f_hi })
    }

    /// Evaluates `f` at both ends and validates the sign change.
    pub fn new(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> Result<Bracket> {
        let (f_lo, f_hi) = (f(lo), f(hi));
        Bracket::from_values(lo, hi, f_lo, f_hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Termination controls for [`find_root`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_iters: 200,
        }
    }
}

impl SolverConfig {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iters: usize) -> Result<SolverConfig> {
        if !(abs_tol > 0.0) || !(rel_tol > 0.0) || max_iters == 0 {
            return Err(Error::Domain(format!(
                "solver tolerances must be positive and max_iters >= 1 (got {abs_tol}, {rel_tol}, {max_iters})"
            )));
        }
        Ok(SolverConfig {
            abs_tol,
            rel_tol,
            max_iters,
        })
    }

    /// Tight settings used by the inner solvers, where roots feed further
    /// root-finds and finite differences.
    pub fn tight() -> SolverConfig {
        SolverConfig {
            abs_tol: 1e-15,
            rel_tol: 1e-14,
            max_iters: 300,
        }
    }
}

/// Finds a root of `f` inside `bracket` with Brent's inverse-quadratic /
/// secant / bisection hybrid.
///
/// Returns `x` with `|f(x)| <= abs_tol` or with the enclosing interval
/// narrower than roughly `rel_tol * |x|`.
pub fn find_root(
    mut f: impl FnMut(f64) -> f64,
    bracket: Bracket,
    cfg: &SolverConfig,
) -> Result<f64> {
    try_find_root(|x| Ok(f(x)), bracket, cfg)
}

/// Like [`find_root`] for objectives that can fail (quadrature, nested solves).
pub fn try_find_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    bracket: Bracket,
    cfg: &SolverConfig,
) -> Result<f64> {
    let Bracket {
        lo: mut a,
        hi: mut b,
        f_lo: mut fa,
        f_hi: mut fb,
    } = Bracket::from_values(bracket.lo, bracket.hi, bracket.f_lo, bracket.f_hi)?;

    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..cfg.max_iters {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }

        let tol =
            (2.0 * f64::EPSILON * b.abs() + 0.5 * cfg.rel_tol * b.abs()).max(f64::MIN_POSITIVE);
        let xm = 0.5 * (c - b);
        if fb.abs() <= cfg.abs_tol || xm.abs() <= tol {
            return Ok(b);
        }

        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * xm * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }

        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(xm) };
        fb = f(b)?;
        if fb.is_nan() {
            return Err(Error::Domain(format!("objective is NaN at x = {b}")));
        }
    }

    Err(Error::MaxItersExceeded {
        iters: cfg.max_iters,
        lo: b.min(c),
        hi: b.max(c),
    })
}

/// Maximum number of doublings performed by [`expand_upward`].
pub const MAX_DOUBLINGS: usize = 60;

/// Grows `hi` geometrically (doubling the distance from `lo`) until `f`
/// changes sign between the current pair of points.
///
/// The lower end is moved up to the previous upper end at each step, so the
/// returned bracket is as tight as the growth sequence allows.
pub fn expand_upward(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<Bracket> {
    if !(hi > lo) {
        return Err(Error::Domain(format!(
            "expand_upward needs hi > lo (got {lo}, {hi})"
        )));
    }
    let mut a = lo;
    let mut fa = f(a)?;
    let step0 = hi - lo;
    let mut b = hi;
    let mut fb = f(b)?;
    for k in 0..=MAX_DOUBLINGS {
        if fa.is_nan() || fb.is_nan() {
            break;
        }
        if fa * fb <= 0.0 {
            return Bracket::from_values(a, b, fa, fb);
        }
        if k == MAX_DOUBLINGS {
            break;
        }
        a = b;
        fa = fb;
        b = lo + step0 * 2f64.powi(k as i32 + 1);
        if !b.is_finite() {
            break;
        }
        fb = f(b)?;
    }
    Err(Error::NoSignChange {
        lo,
        hi: b,
        f_lo: fa,
        f_hi: fb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_root() {
        let f = |x: f64| x - 2.0;
        let r = find_root(
            f,
            Bracket::new(f, 0.0, 5.0).unwrap(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn delay_violation_root() {
        // (1+J)e^{-J} = 0.05; bisection oracle gives 4.743864518...
        let f = |j: f64| (1.0 + j) * (-j).exp() - 0.05;
        let (mut lo, mut hi) = (1.0f64, 20.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = find_root(
            f,
            Bracket::new(f, 1.0, 20.0).unwrap(),
            &SolverConfig::tight(),
        )
        .unwrap();
        assert!((r - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!((r - 4.7439).abs() < 1e-4);
    }

    #[test]
    fn no_sign_change() {
        let f = |x: f64| x * x;
        match Bracket::new(f, -1.0, 1.0) {
            Err(Error::NoSignChange { .. }) => {}
            other => panic!("expected NoSignChange, got {other:?}"),
        }
        let forged = Bracket {
            lo: -1.0,
            hi: 1.0,
            f_lo: 1.0,
            f_hi: 1.0,
        };
        assert!(matches!(
            find_root(f, forged, &SolverConfig::default()),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn max_iters_reported() {
        let f = |x: f64| x.powi(3) - 1e-3;
        let cfg = SolverConfig {
            abs_tol: 1e-300,
            rel_tol: 1e-300,
            max_iters: 3,
        };
        assert!(matches!(
            find_root(f, Bracket::new(f, -10.0, 10.0).unwrap(), &cfg),
            Err(Error::MaxItersExceeded { iters: 3, .. })
        ));
    }

    #[test]
    fn deterministic_output() {
        let f = |x: f64| x.exp() - 3.0 * x;
        let b = Bracket::new(f, 0.0, 1.0).unwrap();
        let cfg = SolverConfig::default();
        let r1 = find_root(f, b, &cfg).unwrap();
        let r2 = find_root(f, b, &cfg).unwrap();
        assert_eq!(r1.to_bits(), r2.to_bits());
    }

    #[test]
    fn expansion_finds_distant_root() {
        let br = expand_upward(|x| Ok(x - 1.0e6), 0.0, 1.0).unwrap();
        assert!(br.lo <= 1.0e6 && br.hi >= 1.0e6);
        assert!(expand_upward(|x| Ok(-1.0 - x), 0.0, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 1e-10, 10).is_err());
        assert!(SolverConfig::new(1e-12, 1e-10, 0).is_err());
        assert!(SolverConfig::new(1e-12, 1e-10, 1).is_ok());
    }
}
