//! Lower real branch of the Lambert W function.

use std::f64::consts::E;

use crate::error::{Error, Result};

const BRANCH_POINT: f64 = -1.0 / E;

/// Distance `1 + e*x` below which the branch-point series is used directly.
const SERIES_SWITCH: f64 = 1e-6;

/// `W_{-1}(x)`: the solution `w <= -1` of `w * e^w = x` for `x` in `[-1/e, 0)`.
pub fn lambert_w_m1(x: f64) -> Result<f64> {
    if x.is_nan() || x >= 0.0 || x < BRANCH_POINT - 4.0 * f64::EPSILON {
        return Err(Error::Domain(format!(
            "lambert_w_m1 is defined on [-1/e, 0), got {x}"
        )));
    }
    let offset = (1.0 + E * x).max(0.0);
    if offset == 0.0 {
        return Ok(-1.0);
    }
    if offset < SERIES_SWITCH {
        return Ok(branch_series(offset));
    }

    let mut w = if offset < 0.5 {
        branch_series(offset)
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };

    // Halley refinement.
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = (w - step).min(-1.0);
        if (next - w).abs() <= 4.0 * f64::EPSILON * w.abs() {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

/// Expansion of `W_{-1}` around the branch point in `p = -sqrt(2(1 + e x))`.
fn branch_series(offset: f64) -> f64 {
    let p = -(2.0 * offset).sqrt();
    const COEFFS: [f64; 7] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17280.0,
        -221.0 / 8505.0,
    ];
    COEFFS.iter().rev().fold(0.0, |acc, &c| acc * p + c)
}
