//! Monte Carlo simulation of the two fluid FIFO queues in tandem under
//! i.i.d. block fading.
//!
//! Each block the source receives `R` bits, sends `s1 = min(Q1 + R, C1)` to
//! the relay, and the relay forwards `min(Q2 + s1, C2)`. End-to-end delays
//! are read off the cumulative arrival curve `A(t) = R t` and the relay's
//! cumulative departure curve, interpolated linearly within each block.

use std::collections::VecDeque;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::CapacityLaw;
use crate::error::{Error, Result};

/// Probe bits needed after warmup for a report.
pub const MIN_PROBES: usize = 100;

/// Samples above the lower fitting level needed for a tail exponent.
pub const MIN_TAIL_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Bits per block.
    pub arrival_rate: f64,
    pub n_blocks: usize,
    pub n_replications: usize,
    pub seed: u64,
    /// Defaults to 10% of `n_blocks`.
    pub warmup_blocks: Option<usize>,
    /// Spacing of probe bits in the arrival stream; defaults to one per block.
    pub delay_probe_bits: Option<f64>,
}

impl SimConfig {
    pub fn new(arrival_rate: f64, n_blocks: usize, n_replications: usize, seed: u64) -> SimConfig {
        SimConfig {
            arrival_rate,
            n_blocks,
            n_replications,
            seed,
            warmup_blocks: None,
            delay_probe_bits: None,
        }
    }

    pub fn warmup(&self) -> usize {
        self.warmup_blocks.unwrap_or(self.n_blocks / 10)
    }

    pub fn probe_stride(&self) -> f64 {
        self.delay_probe_bits.unwrap_or(self.arrival_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return Err(Error::Config(format!(
                "arrival rate must be positive, got {}",
                self.arrival_rate
            )));
        }
        if self.n_replications == 0 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        if self.warmup() >= self.n_blocks {
            return Err(Error::Config(format!(
                "warmup ({}) must be shorter than the run ({} blocks)",
                self.warmup(),
                self.n_blocks
            )));
        }
        if !(self.probe_stride() > 0.0) {
            return Err(Error::Config("probe spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Mean over replications with its standard error (`NaN` for one run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            f64::NAN
        };
        Estimate { mean, stderr }
    }
}

/// Quantiles of a queue's backlog in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub p999: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Fraction of probe bits whose delay exceeds the bound.
    pub p_violation: Estimate,
    /// Blocks.
    pub mean_delay: Estimate,
    /// Fitted tail exponents per bit, `None` when too few tail samples.
    pub theta_hat_1: Option<Estimate>,
    pub theta_hat_2: Option<Estimate>,
    /// Summaries from the first replication.
    pub queue_tail_samples: [TailSummary; 2],
    pub probes: usize,
    /// Largest `|A - S2 - Q1 - Q2|` seen at the horizon.
    pub conservation_error: f64,
}

struct Replication {
    violations: usize,
    probes: usize,
    delay_sum: f64,
    theta1: Option<f64>,
    theta2: Option<f64>,
    tails: [TailSummary; 2],
    conservation: f64,
}

/// One block of the queue recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockState {
    pub block: usize,
    pub z1: f64,
    pub z2: f64,
    pub c1: f64,
    pub c2: f64,
    pub q1: f64,
    pub q2: f64,
}

struct Tandem<'a> {
    law1: &'a CapacityLaw,
    law2: &'a CapacityLaw,
    rng: ChaCha8Rng,
    rate: f64,
    q1: f64,
    q2: f64,
    departed: f64,
    block: usize,
}

impl<'a> Tandem<'a> {
    fn new(
        law1: &'a CapacityLaw,
        law2: &'a CapacityLaw,
        rate: f64,
        seed: u64,
        stream: u64,
    ) -> Tandem<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Tandem {
            law1,
            law2,
            rng,
            rate,
            q1: 0.0,
            q2: 0.0,
            departed: 0.0,
            block: 0,
        }
    }

    fn step(&mut self) -> BlockState {
        let (z1, c1) = self.law1.sample(&mut self.rng);
        let (z2, c2) = self.law2.sample(&mut self.rng);
        let avail1 = self.q1 + self.rate;
        let s1 = avail1.min(c1);
        self.q1 = avail1 - s1;
        let avail2 = self.q2 + s1;
        let s2 = avail2.min(c2);
        self.q2 = avail2 - s2;
        self.departed += s2;
        let state = BlockState {
            block: self.block,
            z1,
            z2,
            c1,
            c2,
            q1: self.q1,
            q2: self.q2,
        };
        self.block += 1;
        state
    }
}

fn run_replication(
    law1: &CapacityLaw,
    law2: &CapacityLaw,
    cfg: &SimConfig,
    dmax_blocks: f64,
    stream: u64,
) -> Replication {
    let rate = cfg.arrival_rate;
    let warmup = cfg.warmup();
    let stride = cfg.probe_stride();
    let mut sys = Tandem::new(law1, law2, rate, cfg.seed, stream);

    let kept = cfg.n_blocks - warmup;
    let mut q1s = Vec::with_capacity(kept);
    let mut q2s = Vec::with_capacity(kept);
    let mut pending: VecDeque<f64> = VecDeque::new();
    let first_probe = warmup as f64 * rate;
    let mut next_probe = first_probe;
    let (mut violations, mut probes, mut delay_sum) = (0usize, 0usize, 0.0);

    for k in 0..cfg.n_blocks {
        // Probes are bit positions in the arrival stream; those entering
        // during block k arrive at time position / rate.
        let arrived_after = (k + 1) as f64 * rate;
        if k >= warmup {
            while next_probe < arrived_after {
                pending.push_back(next_probe);
                next_probe += stride;
            }
        }
        let before = sys.departed;
        let st = sys.step();
        let after = sys.departed;
        while let Some(&x) = pending.front() {
            if x >= after || after <= before {
                break;
            }
            pending.pop_front();
            let frac = ((x - before) / (after - before)).clamp(0.0, 1.0);
            let delay = (k as f64 + frac - x / rate).max(0.0);
            probes += 1;
            delay_sum += delay;
            if delay > dmax_blocks {
                violations += 1;
            }
        }
        if k >= warmup {
            q1s.push(st.q1);
            q2s.push(st.q2);
        }
    }
    // Probes still queued at the horizon are counted only when their
    // waiting time already decides the outcome.
    let end = cfg.n_blocks as f64;
    for &x in &pending {
        if end - x / rate > dmax_blocks {
            probes += 1;
            violations += 1;
            delay_sum += end - x / rate;
        }
    }
    let conservation = (end * rate - sys.departed - sys.q1 - sys.q2).abs();
    let (theta1, tail1) = tail_fit(&mut q1s);
    let (theta2, tail2) = tail_fit(&mut q2s);
    Replication {
        violations,
        probes,
        delay_sum,
        theta1,
        theta2,
        tails: [tail1, tail2],
        conservation,
    }
}

fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    let i = ((xs.len() - 1) as f64 * p).round() as usize;
    xs[i]
}

/// Least-squares slope of the log empirical survival function between the
/// 90th and 99.9th percentiles.
fn tail_fit(samples: &mut [f64]) -> (Option<f64>, TailSummary) {
    if samples.is_empty() {
        let nan = f64::NAN;
        return (
            None,
            TailSummary {
                p50: nan,
                p90: nan,
                p99: nan,
                p999: nan,
                max: nan,
            },
        );
    }
    samples.sort_unstable_by(f64::total_cmp);
    let summary = TailSummary {
        p50: quantile_sorted(samples, 0.5),
        p90: quantile_sorted(samples, 0.9),
        p99: quantile_sorted(samples, 0.99),
        p999: quantile_sorted(samples, 0.999),
        max: *samples.last().expect("non-empty"),
    };
    let (lo, hi) = (summary.p90, summary.p999);
    let n = samples.len() as f64;
    let above = |q: f64| samples.len() - samples.partition_point(|&x| x <= q);
    if !(hi > lo) || above(lo) < MIN_TAIL_SAMPLES {
        return (None, summary);
    }
    const LEVELS: usize = 32;
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..LEVELS {
        let q = lo + (hi - lo) * i as f64 / (LEVELS - 1) as f64;
        let count = above(q);
        if count == 0 {
            continue;
        }
        let y = (count as f64 / n).ln();
        sx += q;
        sy += y;
        sxx += q * q;
        sxy += q * y;
        m += 1.0;
    }
    let den = m * sxx - sx * sx;
    if m < 3.0 || den <= 0.0 {
        return (None, summary);
    }
    let slope = (m * sxy - sx * sy) / den;
    (Some(-slope), summary)
}

/// Simulates `cfg.n_replications` independent runs and aggregates them in
/// replication order.
pub fn simulate(
    law1: &CapacityLaw,
    law2: &CapacityLaw,
    cfg: &SimConfig,
    dmax_blocks: f64,
) -> Result<SimReport> {
    cfg.validate()?;
    if !(cfg.arrival_rate < law1.mean_capacity && law1.mean_capacity < law2.mean_capacity) {
        return Err(Error::Unstable {
            mean1: law1.mean_capacity,
            mean2: law2.mean_capacity,
        });
    }
    if !(dmax_blocks > 0.0) {
        return Err(Error::Config(format!(
            "delay bound must be positive, got {dmax_blocks}"
        )));
    }
    let reps: Vec<Replication> = (0..cfg.n_replications as u64)
        .into_par_iter()
        .map(|r| run_replication(law1, law2, cfg, dmax_blocks, r))
        .collect();
    let probes: usize = reps.iter().map(|r| r.probes).sum();
    let min_probes = reps.iter().map(|r| r.probes).min().unwrap_or(0);
    if min_probes < MIN_PROBES {
        return Err(Error::InsufficientSamples {
            got: min_probes,
            needed: MIN_PROBES,
        });
    }
    let p: Vec<f64> = reps
        .iter()
        .map(|r| r.violations as f64 / r.probes as f64)
        .collect();
    let d: Vec<f64> = reps.iter().map(|r| r.delay_sum / r.probes as f64).collect();
    let theta = |f: fn(&Replication) -> Option<f64>| -> Option<Estimate> {
        let xs: Option<Vec<f64>> = reps.iter().map(f).collect();
        xs.map(|xs| Estimate::from_samples(&xs))
    };
    Ok(SimReport {
        p_violation: Estimate::from_samples(&p),
        mean_delay: Estimate::from_samples(&d),
        theta_hat_1: theta(|r| r.theta1),
        theta_hat_2: theta(|r| r.theta2),
        queue_tail_samples: reps[0].tails,
        probes,
        conservation_error: reps.iter().map(|r| r.conservation).fold(0.0, f64::max),
    })
}

/// Writes one CSV row per block of replication `stream`:
/// `block,z1,z2,c1,c2,q1,q2`.
pub fn write_trace<W: Write>(
    law1: &CapacityLaw,
    law2: &CapacityLaw,
    cfg: &SimConfig,
    stream: u64,
    out: &mut W,
) -> Result<()> {
    cfg.validate()?;
    let io = |e: std::io::Error| Error::Config(format!("writing trace: {e}"));
    writeln!(out, "block,z1,z2,c1,c2,q1,q2").map_err(io)?;
    let mut sys = Tandem::new(law1, law2, cfg.arrival_rate, cfg.seed, stream);
    for _ in 0..cfg.n_blocks {
        let s = sys.step();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.block, s.z1, s.z2, s.c1, s.c2, s.q1, s.q2
        )
        .map_err(io)?;
    }
    Ok(())
}
