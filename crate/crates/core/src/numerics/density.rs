//! Fading-gain distributions and expectations over them.
//!
//! Continuous densities are integrated with the adaptive Gauss–Kronrod rule
//! after locating the region where the integrand carries its mass; discrete
//! laws are summed exactly. Expectations of exponentials are evaluated in
//! log space so that `E[exp(h(Z))]` never under- or overflows.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::quadrature::{integrate_partition, QuadConfig};
use crate::error::{Error, Result};

/// Mass below `exp(-TAIL_NATS)` relative to the peak is dropped.
const TAIL_NATS: f64 = 60.0;

/// Grid points per decade used when scanning for the integrand's mass.
const SCAN_PER_DECADE: i32 = 8;

/// Distribution of a nonnegative fading power gain `z`.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    /// Exponential law (Rayleigh amplitude) with the given mean.
    Exponential { mean: f64 },
    /// Noncentral chi-square law with two degrees of freedom (Rician
    /// amplitude), parameterised by the K-factor and the mean power.
    Rician { k_factor: f64, mean: f64 },
    /// Finite mass function as `(z, probability)` pairs.
    Discrete(Vec<(f64, f64)>),
    /// All mass at a single point.
    PointMass(f64),
}

impl Density {
    pub fn validate(&self) -> Result<()> {
        match self {
            Density::Exponential { mean } => {
                if !(*mean > 0.0 && mean.is_finite()) {
                    return Err(Error::Domain(format!(
                        "exponential mean must be positive, got {mean}"
                    )));
                }
            }
            Density::Rician { k_factor, mean } => {
                if !(*mean > 0.0 && mean.is_finite()) {
                    return Err(Error::Domain(format!(
                        "Rician mean must be positive, got {mean}"
                    )));
                }
                if !(*k_factor >= 0.0 && k_factor.is_finite()) {
                    return Err(Error::Domain(format!(
                        "Rician K-factor must be >= 0, got {k_factor}"
                    )));
                }
            }
            Density::Discrete(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::Domain("discrete law needs at least one atom".into()));
                }
                let mut total = 0.0;
                for &(z, p) in atoms {
                    if !(z >= 0.0 && z.is_finite()) {
                        return Err(Error::Domain(format!(
                            "discrete atom z = {z} must be finite and >= 0"
                        )));
                    }
                    if !(p >= 0.0 && p <= 1.0) {
                        return Err(Error::Domain(format!(
                            "discrete probability {p} outside [0, 1]"
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Domain(format!(
                        "discrete probabilities sum to {total}, not 1"
                    )));
                }
            }
            Density::PointMass(z) => {
                if !(*z >= 0.0 && z.is_finite()) {
                    return Err(Error::Domain(format!(
                        "point mass at {z} must be finite and >= 0"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Density::Exponential { .. } | Density::Rician { .. })
    }

    pub fn mean(&self) -> f64 {
        match self {
            Density::Exponential { mean } | Density::Rician { mean, .. } => *mean,
            Density::Discrete(atoms) => atoms.iter().map(|&(z, p)| z * p).sum(),
            Density::PointMass(z) => *z,
        }
    }

    /// Smallest and largest points of the support (`+inf` when unbounded).
    pub fn support(&self) -> (f64, f64) {
        match self {
            Density::Exponential { .. } | Density::Rician { .. } => (0.0, f64::INFINITY),
            Density::Discrete(atoms) => atoms
                .iter()
                .filter(|a| a.1 > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(z, _)| {
                    (lo.min(z), hi.max(z))
                }),
            Density::PointMass(z) => (*z, *z),
        }
    }

    /// `Pr{Z = 0}`.
    pub fn mass_at_zero(&self) -> f64 {
        match self {
            Density::Exponential { .. } | Density::Rician { .. } => 0.0,
            Density::Discrete(atoms) => atoms.iter().filter(|a| a.0 == 0.0).map(|a| a.1).sum(),
            Density::PointMass(z) => {
                if *z == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Natural log of the density at `z` (continuous laws only).
    pub fn ln_pdf(&self, z: f64) -> f64 {
        if z < 0.0 {
            return f64::NEG_INFINITY;
        }
        match self {
            Density::Exponential { mean } => -z / mean - mean.ln(),
            Density::Rician { k_factor, mean } => {
                let k = *k_factor;
                let scale = (k + 1.0) / mean;
                scale.ln() - k - scale * z + ln_bessel_i0(2.0 * (k * scale * z).sqrt())
            }
            Density::Discrete(_) | Density::PointMass(_) => f64::NEG_INFINITY,
        }
    }

    /// `Pr{Z > z}`.
    pub fn survival(&self, z: f64) -> f64 {
        match self {
            Density::Discrete(atoms) => atoms.iter().filter(|a| a.0 > z).map(|a| a.1).sum(),
            Density::PointMass(p) => {
                if *p > z {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.continuous_survival(z),
        }
    }

    /// `Pr{Z >= z}`.
    pub fn survival_inclusive(&self, z: f64) -> f64 {
        match self {
            Density::Discrete(atoms) => atoms.iter().filter(|a| a.0 >= z).map(|a| a.1).sum(),
            Density::PointMass(p) => {
                if *p >= z {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.continuous_survival(z),
        }
    }

    /// `ln Pr{Z > z}`, accurate deep into the tail.
    pub fn ln_survival(&self, z: f64) -> f64 {
        match self {
            Density::Exponential { mean } if z > 0.0 => -z / mean,
            Density::Rician { k_factor, mean } if z > 0.0 => {
                ln_rician_survival(*k_factor, (k_factor + 1.0) * z / mean)
            }
            _ => self.survival(z).ln(),
        }
    }

    /// `ln Pr{Z >= z}`.
    pub fn ln_survival_inclusive(&self, z: f64) -> f64 {
        if self.is_continuous() {
            self.ln_survival(z)
        } else {
            self.survival_inclusive(z).ln()
        }
    }

    fn continuous_survival(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 1.0;
        }
        match self {
            Density::Exponential { mean } => (-z / mean).exp(),
            Density::Rician { k_factor, mean } => {
                ln_rician_survival(*k_factor, (k_factor + 1.0) * z / mean)
                    .exp()
                    .min(1.0)
            }
            _ => unreachable!(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Exponential { mean } => {
                let e: f64 = Exp::new(1.0).expect("unit rate").sample(rng);
                e * mean
            }
            Density::Rician { k_factor, mean } => {
                let los = (mean * k_factor / (k_factor + 1.0)).sqrt();
                let sigma = (mean / (2.0 * (k_factor + 1.0))).sqrt();
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                let (re, im) = (los + sigma * re, sigma * im);
                re * re + im * im
            }
            Density::Discrete(atoms) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(z, p) in atoms {
                    acc += p;
                    if u < acc {
                        return z;
                    }
                }
                atoms
                    .iter()
                    .rev()
                    .find(|a| a.1 > 0.0)
                    .map_or(atoms[0].0, |a| a.0)
            }
            Density::PointMass(z) => *z,
        }
    }
}

/// `E[g(Z)]`.
///
/// Discrete laws are summed exactly; continuous laws are integrated over the
/// range where `|g| * pdf` is within `exp(-60)` of its largest value.
pub fn expectation(g: impl Fn(f64) -> f64, density: &Density) -> Result<f64> {
    match density {
        Density::Discrete(atoms) => {
            let mut total = 0.0;
            for &(z, p) in atoms {
                if p == 0.0 {
                    continue;
                }
                let v = g(z);
                if !v.is_finite() {
                    return Err(Error::NonFiniteIntegrand { at: z });
                }
                total += p * v;
            }
            Ok(total)
        }
        Density::PointMass(z) => {
            let v = g(*z);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteIntegrand { at: *z })
            }
        }
        _ => {
            let ln_mag = |z: f64| {
                let v = g(z);
                if v.is_nan() {
                    f64::NAN
                } else if v == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    v.abs().ln() + density.ln_pdf(z)
                }
            };
            let Some(range) = mass_range(&ln_mag, density)? else {
                return Ok(0.0);
            };
            let peak = range.peak_ln;
            let est = integrate_partition(
                |z| {
                    let v = g(z);
                    v.signum() * (v.abs().ln() + density.ln_pdf(z) - peak).exp()
                },
                &range.partition,
                &QuadConfig::default(),
            )?;
            Ok(est.value * peak.exp())
        }
    }
}

/// `ln E[exp(h(Z))]`, with `h` allowed to return `-inf`.
pub fn log_expectation_exp(h: impl Fn(f64) -> f64, density: &Density) -> Result<f64> {
    match density {
        Density::Discrete(atoms) => {
            let terms: Vec<f64> = atoms
                .iter()
                .filter(|a| a.1 > 0.0)
                .map(|&(z, p)| h(z) + p.ln())
                .collect();
            if let Some(pos) = terms.iter().position(|t| t.is_nan() || *t == f64::INFINITY) {
                return Err(Error::NonFiniteIntegrand { at: atoms[pos].0 });
            }
            Ok(log_sum_exp(&terms))
        }
        Density::PointMass(z) => {
            let v = h(*z);
            if v.is_nan() || v == f64::INFINITY {
                Err(Error::NonFiniteIntegrand { at: *z })
            } else {
                Ok(v)
            }
        }
        _ => {
            let ln_integrand = |z: f64| h(z) + density.ln_pdf(z);
            let Some(range) = mass_range(&ln_integrand, density)? else {
                return Ok(f64::NEG_INFINITY);
            };
            let peak = range.peak_ln;
            // Rounding in large exponents limits the attainable relative
            // accuracy of the scaled integral, though not of its logarithm.
            let zp = range.peak_at;
            let magnitude = h(zp).abs() + density.ln_pdf(zp).abs();
            let base = QuadConfig::default();
            let cfg = QuadConfig {
                rel_tol: base.rel_tol.max(8.0 * f64::EPSILON * magnitude),
                fail_tol: base.fail_tol.max(128.0 * f64::EPSILON * magnitude),
                ..base
            };
            // Excess over the peak within this band is rounding noise.
            let noise = 64.0 * f64::EPSILON * magnitude;
            let scaled = |z: f64| {
                let d = ln_integrand(z) - peak;
                if d > 0.0 && d <= noise {
                    1.0
                } else {
                    d.exp()
                }
            };
            let est = integrate_partition(scaled, &range.partition, &cfg)?;
            if !(est.value > 0.0) {
                if noise > 1.0 {
                    return Ok(peak);
                }
                return Err(Error::QuadratureFailure(format!(
                    "scaled integral {} is not positive",
                    est.value
                )));
            }
            Ok(peak + est.value.ln())
        }
    }
}

/// Numerically stable `ln(sum(exp(terms)))`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

struct MassRange {
    peak_ln: f64,
    peak_at: f64,
    partition: Vec<f64>,
}

/// Scans `ln_f` on a logarithmic grid over `(0, inf)` and returns the largest
/// value seen together with an initial partition covering every point where
/// `ln_f` is within `TAIL_NATS` of it. Returns `None` when `f` vanishes.
fn mass_range(ln_f: &impl Fn(f64) -> f64, density: &Density) -> Result<Option<MassRange>> {
    let scale = density.mean();
    let step = 10f64.powf(1.0 / SCAN_PER_DECADE as f64);
    let mut grid = vec![0.0];
    let mut vals = vec![ln_f(0.0)];
    let mut z = scale * 1e-40;
    loop {
        let v = ln_f(z);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteIntegrand { at: z });
        }
        grid.push(z);
        vals.push(v);
        let peak = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = vals.len();
        let past_scale = z > 100.0 * scale;
        if past_scale && peak > f64::NEG_INFINITY && n >= 3 {
            let falling = vals[n - 1] < vals[n - 2] && vals[n - 2] < vals[n - 3];
            if v == f64::NEG_INFINITY || (falling && v < peak - TAIL_NATS) {
                break;
            }
        }
        z *= step;
        if !z.is_finite() || z > 1e300 {
            return Err(Error::DivergentMoment { theta: f64::NAN });
        }
    }
    if vals[0].is_nan() || vals[0] == f64::INFINITY {
        vals[0] = f64::NEG_INFINITY;
    }
    let (peak_idx, peak) =
        vals.iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
    if peak == f64::NEG_INFINITY {
        return Ok(None);
    }
    let cut = peak - TAIL_NATS;
    let first = vals.iter().position(|&v| v >= cut).unwrap_or(peak_idx);
    let last = vals.iter().rposition(|&v| v >= cut).unwrap_or(peak_idx);
    let lo_idx = first.saturating_sub(1);
    let hi_idx = (last + 1).min(grid.len() - 1);
    let lo = if lo_idx <= 1 { 0.0 } else { grid[lo_idx] };
    let hi = grid[hi_idx];

    let mut partition = Vec::with_capacity(80);
    partition.push(lo);
    if lo == 0.0 {
        // Geometric panels towards the origin resolve integrands that decay
        // on scales much shorter than the range itself.
        let mut p = hi * 0.5f64.powi(48);
        while p < hi * 0.5 {
            partition.push(p);
            p *= 2.0;
        }
        partition.push(hi * 0.5);
    }
    let span = hi - lo;
    let base = *partition.last().expect("non-empty");
    for i in 1..16 {
        let p = lo + span * i as f64 / 16.0;
        if p > base {
            partition.push(p);
        }
    }
    // The grid is coarse; locate the peak itself so that the scaled
    // integrand cannot overflow, and resolve its width.
    let (zp, peak) = refine_peak(ln_f, &grid, peak_idx, peak);
    if zp > lo && zp < hi {
        partition.push(zp);
        let h = 1e-4 * zp;
        let curv = (ln_f(zp + h) - 2.0 * peak + ln_f((zp - h).max(0.0))) / (h * h);
        if curv < 0.0 && curv.is_finite() {
            let sigma = (-curv).sqrt().recip();
            for k in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
                for p in [zp - k * sigma, zp + k * sigma] {
                    if p > lo && p < hi {
                        partition.push(p);
                    }
                }
            }
        }
    }
    partition.push(hi);
    partition.sort_by(f64::total_cmp);
    partition.dedup();
    Ok(Some(MassRange {
        peak_ln: peak,
        peak_at: zp,
        partition,
    }))
}

fn refine_peak(ln_f: &impl Fn(f64) -> f64, grid: &[f64], idx: usize, peak: f64) -> (f64, f64) {
    if idx == 0 || idx + 1 >= grid.len() {
        return (grid[idx], peak);
    }
    let (mut a, mut b) = (grid[idx - 1], grid[idx + 1]);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (ln_f(x1), ln_f(x2));
    while b - a > 1e-14 * b {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = ln_f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = ln_f(x1);
        }
    }
    let (z, v) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    if v > peak && v.is_finite() {
        (z, v)
    } else {
        (grid[idx], peak)
    }
}

/// `ln I0(x)` for `x >= 0`.
pub fn ln_bessel_i0(x: f64) -> f64 {
    if x < 25.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum.ln()
    } else {
        let inv8x = 1.0 / (8.0 * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        loop {
            let next = term * (2.0 * n - 1.0) * (2.0 * n - 1.0) * inv8x / n;
            if next.abs() < 1e-17 * sum || next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
            n += 1.0;
        }
        x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
    }
}

/// Log survival function of the Rician power law at normalised level
/// `y = (K+1) z / mean`, via its Poisson mixture of Erlang laws.
fn ln_rician_survival(k: f64, y: f64) -> f64 {
    if k == 0.0 {
        return -y;
    }
    let ln_k = k.ln();
    let ln_y = y.ln();
    // ln Q(j+1, y) accumulated as a log partial sum of the Poisson(y) pmf.
    let mut ln_q = -y;
    let mut ln_fact = 0.0;
    let mut total = f64::NEG_INFINITY;
    let mut j = 0usize;
    loop {
        let jf = j as f64;
        if j > 0 {
            ln_fact += jf.ln();
            ln_q = log_add_exp(ln_q, -y + jf * ln_y - ln_fact);
        }
        let term = -k + jf * ln_k - ln_fact + ln_q;
        total = log_add_exp(total, term);
        if (jf > k && term < total - 40.0) || j > 100_000 {
            break;
        }
        j += 1;
    }
    total.min(0.0)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
