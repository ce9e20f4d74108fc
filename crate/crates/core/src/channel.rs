//! Block-fading channel models and the per-block capacity law
//! `C = T B log2(1 + snr z)`.
//!
//! ```
//! use relay_effcap::channel::{capacity, FadingKind, FadingModel};
//!
//! let model = FadingModel::new(FadingKind::Rayleigh { mean: 16.0 }, 1.0, 1e-3, 180e3).unwrap();
//! assert!((capacity(&model, 1.0).unwrap() - 180.0).abs() < 1e-9);
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{expectation, log_expectation_exp, Density};

/// Distribution of the fading power gain `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FadingKind {
    Rayleigh { mean: f64 },
    Rician { k_factor: f64, mean: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
    Deterministic { z: f64 },
}

impl FadingKind {
    pub fn density(&self) -> Density {
        match self {
            FadingKind::Rayleigh { mean } => Density::Exponential { mean: *mean },
            FadingKind::Rician { k_factor, mean } => Density::Rician {
                k_factor: *k_factor,
                mean: *mean,
            },
            FadingKind::Discrete { atoms } => Density::Discrete(atoms.clone()),
            FadingKind::Deterministic { z } => Density::PointMass(*z),
        }
    }
}

/// A fading law together with the link's SNR, block length `T` (seconds)
/// and bandwidth `B` (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingModel {
    pub kind: FadingKind,
    /// Linear power ratio.
    pub snr: f64,
    pub block_time: f64,
    pub bandwidth: f64,
}

impl FadingModel {
    pub fn new(kind: FadingKind, snr: f64, block_time: f64, bandwidth: f64) -> Result<FadingModel> {
        let model = FadingModel {
            kind,
            snr,
            block_time,
            bandwidth,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("snr", self.snr),
            ("block time", self.block_time),
            ("bandwidth", self.bandwidth),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        self.kind.density().validate()
    }

    /// `T * B`, the number of channel uses per block.
    pub fn time_bandwidth(&self) -> f64 {
        self.block_time * self.bandwidth
    }

    pub(crate) fn capacity_unchecked(&self, z: f64) -> f64 {
        self.time_bandwidth() * (self.snr * z).ln_1p() / std::f64::consts::LN_2
    }
}

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Bits delivered in one block with power gain `z`.
pub fn capacity(model: &FadingModel, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("fading gain must be >= 0, got {z}")));
    }
    Ok(model.capacity_unchecked(z))
}

/// `E[C]` in bits per block.
pub fn mean_capacity(model: &FadingModel) -> Result<f64> {
    expectation(|z| model.capacity_unchecked(z), &model.kind.density())
}

/// Mean gains of the two hops when the relay sits at normalised distance
/// `d` from the source and the path-loss exponent is `alpha`.
pub fn geometry_means(d: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!(
            "relay position must lie in (0, 1), got {d}"
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!(
            "path-loss exponent must be >= 0, got {alpha}"
        )));
    }
    Ok((d.powf(-alpha), (1.0 - d).powf(-alpha)))
}

/// The per-block service law of one hop, with the distribution summaries
/// the optimum depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityLaw {
    pub model: FadingModel,
    density: Density,
    pub mean_capacity: f64,
    pub z_min: f64,
    /// `+inf` for unbounded fading.
    pub z_max: f64,
    pub prob_zero_capacity: f64,
}

impl CapacityLaw {
    pub fn new(model: FadingModel) -> Result<CapacityLaw> {
        model.validate()?;
        let density = model.kind.density();
        let mean_capacity = expectation(|z| model.capacity_unchecked(z), &density)?;
        let (z_min, z_max) = density.support();
        let prob_zero_capacity = density.mass_at_zero();
        Ok(CapacityLaw {
            model,
            density,
            mean_capacity,
            z_min,
            z_max,
            prob_zero_capacity,
        })
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn capacity(&self, z: f64) -> f64 {
        self.model.capacity_unchecked(z)
    }

    /// Gain needed to carry `c` bits in one block.
    pub fn inverse_capacity(&self, c: f64) -> f64 {
        let tb = self.model.time_bandwidth();
        (c / tb * std::f64::consts::LN_2).exp_m1() / self.model.snr
    }

    pub fn c_min(&self) -> f64 {
        self.capacity(self.z_min)
    }

    pub fn c_max(&self) -> f64 {
        if self.z_max.is_infinite() {
            f64::INFINITY
        } else {
            self.capacity(self.z_max)
        }
    }

    /// `ln E[exp(h(C))]`.
    pub fn ln_expect_exp(&self, h: impl Fn(f64) -> f64) -> Result<f64> {
        log_expectation_exp(|z| h(self.capacity(z)), &self.density)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z = self.density.sample(rng);
        (z, self.capacity(z))
    }

    /// `ln Pr{C > c}` (or `>=` when `inclusive`).
    pub fn ln_survival(&self, c: f64, inclusive: bool) -> f64 {
        if c <= 0.0 && inclusive {
            return 0.0;
        }
        let z = self.inverse_capacity(c);
        let z = if self.density.is_continuous() {
            z
        } else {
            // Snap to atoms so that ties in capacity are detected exactly.
            self.atom_near(z).unwrap_or(z)
        };
        if inclusive {
            self.density.ln_survival_inclusive(z)
        } else {
            self.density.ln_survival(z)
        }
    }

    fn atom_near(&self, z: f64) -> Option<f64> {
        let atoms: Vec<f64> = match &self.density {
            Density::Discrete(a) => a.iter().map(|x| x.0).collect(),
            Density::PointMass(p) => vec![*p],
            _ => return None,
        };
        atoms
            .into_iter()
            .find(|&a| (a - z).abs() <= 1e-12 * a.abs().max(z.abs()).max(1e-300))
    }
}
