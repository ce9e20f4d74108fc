//! Config-driven parameter sweeps writing long-format CSV plus a JSON
//! sidecar with run metadata.
//!
//! A config is a flat TOML table; every key is optional except
//! `experiment`. See the README for the full schema.
//!
//! ```
//! use relay_effcap::experiment::{ExperimentKind, ExperimentSpec};
//!
//! let spec = ExperimentSpec::from_toml_str(
//!     "experiment = \"ec_vs_snr2\"\nsnr2_db_grid = [3.0, 6.0]\n",
//! )
//! .unwrap();
//! assert_eq!(spec.experiment, ExperimentKind::EcVsSnr2);
//! assert_eq!(spec.epsilon, 0.05);
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{nobuffer_rate, symmetric_rate};
use crate::channel::{db_to_linear, geometry_means, CapacityLaw, FadingKind, FadingModel};
use crate::effcap::{effcap_delay_constrained, uniqueness_condition, EffCapResult};
use crate::error::{Error, Result};
use crate::lmgf::theta_for_rate;
use crate::queuesim::{simulate, write_trace, SimConfig};
use crate::tradeoff::{sample_boundary, BoundaryGrid, DelayConstraint, TimeUnit};

/// Version of the JSON sidecar layout.
pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

/// Published worked-example values of
/// `(θ1,th, θ2,th, bbθ1, vvθ1, uuθ1)` for Rayleigh means (16, 16),
/// `snr = (0, 3) dB`, `T = 1 ms`, `B = 180 kHz`, `(ε, Dmax) = (0.05, 1 s)`.
pub const REFERENCE_CONSTANTS: [f64; 5] = [0.0178, 0.011, 0.0142, 0.0131, 0.0109];

/// Relative tolerance for matching [`REFERENCE_CONSTANTS`].
pub const REFERENCE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BoundaryCurve,
    EcVsSnr2,
    EcVsEpsilon,
    EcVsD,
    EcSurfaceDEps,
    ValidateSim,
    #[serde(rename = "appendix_d_constants", alias = "worked_example_constants")]
    WorkedExampleConstants,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::BoundaryCurve => "boundary_curve",
            ExperimentKind::EcVsSnr2 => "ec_vs_snr2",
            ExperimentKind::EcVsEpsilon => "ec_vs_epsilon",
            ExperimentKind::EcVsD => "ec_vs_d",
            ExperimentKind::EcSurfaceDEps => "ec_surface_d_eps",
            ExperimentKind::ValidateSim => "validate_sim",
            ExperimentKind::WorkedExampleConstants => "appendix_d_constants",
        }
    }

    /// Which of the `(snr2, d, ε)` grids the sweep walks.
    fn axes(self) -> (bool, bool, bool) {
        match self {
            ExperimentKind::EcVsSnr2 => (true, false, false),
            ExperimentKind::EcVsEpsilon => (true, false, true),
            ExperimentKind::EcVsD => (true, true, false),
            ExperimentKind::EcSurfaceDEps => (false, true, true),
            _ => (false, false, false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    Rayleigh,
    Rician,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    pub time_unit: TimeUnit,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub seed: u64,

    pub fading: Fading,
    pub k_factor: f64,
    pub snr1_db: f64,
    pub snr2_db: f64,
    /// Seconds.
    pub block_time: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Source-relay distance, with source-destination distance 1.
    pub d: f64,
    pub alpha: f64,
    /// Override the path-loss means.
    pub mean1: Option<f64>,
    pub mean2: Option<f64>,

    pub epsilon: f64,
    /// Seconds.
    pub dmax: f64,

    pub snr2_db_grid: Vec<f64>,
    pub d_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub boundary_points: usize,

    pub sim_blocks: usize,
    pub sim_replications: usize,
    pub sim_rate_fraction: f64,
    pub sim_warmup: Option<usize>,
    pub sim_probe_bits: Option<f64>,
    /// Blocks of replication 0 dumped to `<name>.trace.csv`; 0 disables.
    pub trace_blocks: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            experiment: ExperimentKind::EcVsSnr2,
            time_unit: TimeUnit::Block,
            out: PathBuf::from("results"),
            threads: None,
            seed: 1,
            fading: Fading::Rayleigh,
            k_factor: 3.0,
            snr1_db: 0.0,
            snr2_db: 3.0,
            block_time: 1e-3,
            bandwidth: 180e3,
            d: 0.5,
            alpha: 4.0,
            mean1: None,
            mean2: None,
            epsilon: 0.05,
            dmax: 1.0,
            snr2_db_grid: Vec::new(),
            d_grid: Vec::new(),
            epsilon_grid: Vec::new(),
            boundary_points: 200,
            sim_blocks: 2_000_000,
            sim_replications: 20,
            sim_rate_fraction: 0.95,
            sim_warmup: None,
            sim_probe_bits: None,
            trace_blocks: 0,
        }
    }
}

impl ExperimentSpec {
    /// Parses and validates a config; parse errors carry line and column.
    pub fn from_toml_str(text: &str) -> Result<ExperimentSpec> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentSpec> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("key `{key}`: {msg}")));
        let (snr2, d, eps) = self.experiment.axes();
        for (on, key, grid) in [
            (snr2, "snr2_db_grid", &self.snr2_db_grid),
            (d, "d_grid", &self.d_grid),
            (eps, "epsilon_grid", &self.epsilon_grid),
        ] {
            if on && grid.is_empty() {
                return bad(
                    key,
                    format!(
                        "must be nonempty for experiment `{}`",
                        self.experiment.name()
                    ),
                );
            }
            if let Some(i) = grid.iter().position(|x| !x.is_finite()) {
                return bad(key, format!("entry {i} is not finite"));
            }
        }
        if let Some(i) = self
            .epsilon_grid
            .iter()
            .position(|&e| !(e > 0.0 && e <= 1.0))
        {
            return bad("epsilon_grid", format!("entry {i} must lie in (0, 1]"));
        }
        if let Some(i) = self.d_grid.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
            return bad("d_grid", format!("entry {i} must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(
                "epsilon",
                format!("must lie in (0, 1], got {}", self.epsilon),
            );
        }
        if !(self.d > 0.0 && self.d < 1.0) {
            return bad("d", format!("must lie in (0, 1), got {}", self.d));
        }
        for (key, v) in [
            ("dmax", self.dmax),
            ("block_time", self.block_time),
            ("bandwidth", self.bandwidth),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be positive, got {v}"));
            }
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1".into());
        }
        if self.boundary_points < 2 {
            return bad("boundary_points", "must be at least 2".into());
        }
        if !(self.sim_rate_fraction > 0.0 && self.sim_rate_fraction < 1.0) {
            return bad(
                "sim_rate_fraction",
                format!("must lie in (0, 1), got {}", self.sim_rate_fraction),
            );
        }
        if self.sim_replications == 0 {
            return bad("sim_replications", "must be at least 1".into());
        }
        Ok(())
    }

    /// Channel models of both hops at relay position `d` and relay SNR.
    pub fn models(&self, snr2_db: f64, d: f64) -> Result<(FadingModel, FadingModel)> {
        let (g1, g2) = geometry_means(d, self.alpha)?;
        let (m1, m2) = (self.mean1.unwrap_or(g1), self.mean2.unwrap_or(g2));
        let kind = |mean| match self.fading {
            Fading::Rayleigh => FadingKind::Rayleigh { mean },
            Fading::Rician => FadingKind::Rician {
                k_factor: self.k_factor,
                mean,
            },
        };
        let hop = |mean, snr_db| {
            FadingModel::new(
                kind(mean),
                db_to_linear(snr_db),
                self.block_time,
                self.bandwidth,
            )
        };
        Ok((hop(m1, self.snr1_db)?, hop(m2, snr2_db)?))
    }

    pub fn constraint(&self, epsilon: f64) -> Result<DelayConstraint> {
        DelayConstraint::new(epsilon, self.dmax, self.time_unit, self.block_time)
    }
}

/// One grid point of a rate sweep. Rates are bits per block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub experiment: &'static str,
    pub time_unit: TimeUnit,
    pub snr1_db: f64,
    pub snr2_db: f64,
    pub d: f64,
    pub mean1: f64,
    pub mean2: f64,
    pub epsilon: f64,
    pub dmax: f64,
    pub rate_asym: Option<f64>,
    pub rate_sym: Option<f64>,
    pub rate_nobuf: Option<f64>,
    pub rate_asym_bps: Option<f64>,
    pub case: Option<String>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub j1: Option<f64>,
    pub j2: Option<f64>,
    pub theta1_th: Option<f64>,
    pub theta2_th: Option<f64>,
    pub bb_theta1: Option<f64>,
    pub vv_theta1: Option<f64>,
    pub uu_theta1: Option<f64>,
    pub status: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryRow {
    pub j1: f64,
    pub j2: f64,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub reachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    /// `tandem` or `single_queue`.
    pub system: &'static str,
    pub epsilon: f64,
    pub dmax_blocks: f64,
    pub rate_eps: f64,
    pub rate: f64,
    pub p_violation: f64,
    pub p_violation_stderr: f64,
    pub mean_delay_blocks: f64,
    pub theta_hat_1: Option<f64>,
    pub theta_hat_1_stderr: Option<f64>,
    pub theta_analytic_1: f64,
    pub theta_hat_2: Option<f64>,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsRow {
    pub convention: TimeUnit,
    pub theta1_th: f64,
    pub theta2_th: f64,
    pub bb_theta1: f64,
    pub vv_theta1: f64,
    pub uu_theta1: f64,
    pub rate: f64,
    pub case: String,
    pub uniqueness_condition: Option<bool>,
    pub max_rel_err: f64,
    pub within_tolerance: bool,
    pub ordering_holds: bool,
}

impl ConstantsRow {
    pub fn values(&self) -> [f64; 5] {
        [
            self.theta1_th,
            self.theta2_th,
            self.bb_theta1,
            self.vv_theta1,
            self.uu_theta1,
        ]
    }
}

/// A grid point that failed, as reported in the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub row: usize,
    pub point: serde_json::Value,
    pub solver: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub rows: usize,
    pub failures: Vec<Failure>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    time_unit: TimeUnit,
    started_unix_s: u64,
    elapsed_s: f64,
    rows: usize,
    failures: &'a [Failure],
    extra: serde_json::Value,
    spec: &'a ExperimentSpec,
}

fn solver_name(e: &Error, op: &'static str) -> String {
    match e {
        Error::SolverFailure { stage, .. } => format!("{op}/{stage}"),
        _ => op.to_string(),
    }
}

fn sweep_point(
    spec: &ExperimentSpec,
    snr2_db: f64,
    d: f64,
    epsilon: f64,
) -> (SweepRow, Vec<(String, Error)>) {
    let mut errors = Vec::new();
    let mut row = SweepRow {
        experiment: spec.experiment.name(),
        time_unit: spec.time_unit,
        snr1_db: spec.snr1_db,
        snr2_db,
        d,
        mean1: f64::NAN,
        mean2: f64::NAN,
        epsilon,
        dmax: spec.dmax,
        rate_asym: None,
        rate_sym: None,
        rate_nobuf: None,
        rate_asym_bps: None,
        case: None,
        theta1: None,
        theta2: None,
        j1: None,
        j2: None,
        theta1_th: None,
        theta2_th: None,
        bb_theta1: None,
        vv_theta1: None,
        uu_theta1: None,
        status: "ok",
        error: String::new(),
    };
    let setup = spec.models(snr2_db, d).and_then(|(m1, m2)| {
        let c = spec.constraint(epsilon)?;
        let l1 = CapacityLaw::new(m1.clone())?;
        let l2 = CapacityLaw::new(m2.clone())?;
        Ok((m1, m2, l1, l2, c))
    });
    let (m1, m2, l1, l2, c) = match setup {
        Ok(s) => s,
        Err(e) => {
            errors.push((solver_name(&e, "setup"), e));
            return finish(row, errors);
        }
    };
    row.mean1 = l1.model.kind.density().mean();
    row.mean2 = l2.model.kind.density().mean();
    match effcap_delay_constrained(&l1, &l2, &c) {
        Ok(r) => fill_asym(&mut row, &r, spec.block_time),
        Err(e) => errors.push((solver_name(&e, "effcap_delay_constrained"), e)),
    }
    match symmetric_rate(&l1, &l2, &c) {
        Ok(r) => row.rate_sym = Some(r.rate),
        Err(e) => errors.push((solver_name(&e, "symmetric_rate"), e)),
    }
    match nobuffer_rate(&m1, &m2, &c) {
        Ok(r) => row.rate_nobuf = Some(r.rate),
        Err(e) => errors.push((solver_name(&e, "nobuffer_rate"), e)),
    }
    finish(row, errors)
}

fn finish(mut row: SweepRow, errors: Vec<(String, Error)>) -> (SweepRow, Vec<(String, Error)>) {
    if !errors.is_empty() {
        row.status = "error";
        row.error = errors
            .iter()
            .map(|(s, e)| format!("{s}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
    }
    (row, errors)
}

fn fill_asym(row: &mut SweepRow, r: &EffCapResult, block_time: f64) {
    let a = &r.auxiliary;
    row.rate_asym = Some(r.rate);
    row.rate_asym_bps = Some(r.rate / block_time);
    row.case = Some(r.case_label.to_string());
    row.theta1 = Some(r.optimizer.theta1);
    row.theta2 = Some(r.optimizer.theta2);
    row.j1 = Some(r.optimizer.j1);
    row.j2 = Some(r.optimizer.j2);
    row.theta1_th = a.theta1_th;
    row.theta2_th = a.theta2_th;
    row.bb_theta1 = a.bb_theta1;
    row.vv_theta1 = a.vv_theta1;
    row.uu_theta1 = a.uu_theta1;
}

/// The `(snr2, d, ε)` points of a sweep in output order.
pub fn sweep_points(spec: &ExperimentSpec) -> Vec<(f64, f64, f64)> {
    let (s_on, d_on, e_on) = spec.experiment.axes();
    let pick = |on: bool, grid: &[f64], base: f64| if on { grid.to_vec() } else { vec![base] };
    let snr2s = pick(s_on, &spec.snr2_db_grid, spec.snr2_db);
    let ds = pick(d_on, &spec.d_grid, spec.d);
    let eps = pick(e_on, &spec.epsilon_grid, spec.epsilon);
    let mut pts = Vec::with_capacity(snr2s.len() * ds.len() * eps.len());
    for &s in &snr2s {
        for &d in &ds {
            for &e in &eps {
                pts.push((s, d, e));
            }
        }
    }
    pts
}

/// Evaluates every sweep point in grid order.
pub fn run_sweep(spec: &ExperimentSpec) -> (Vec<SweepRow>, Vec<Failure>) {
    let pts = sweep_points(spec);
    let results: Vec<_> = pts
        .par_iter()
        .map(|&(s, d, e)| sweep_point(spec, s, d, e))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, ((row, errs), &(s, d, e))) in results.into_iter().zip(&pts).enumerate() {
        for (solver, err) in errs {
            failures.push(Failure {
                row: i,
                point: serde_json::json!({ "snr2_db": s, "d": d, "epsilon": e }),
                solver,
                error: err.to_string(),
            });
        }
        rows.push(row);
    }
    (rows, failures)
}

pub fn run_boundary(spec: &ExperimentSpec) -> Result<Vec<BoundaryRow>> {
    let (m1, m2) = spec.models(spec.snr2_db, spec.d)?;
    let (l1, l2) = (CapacityLaw::new(m1)?, CapacityLaw::new(m2)?);
    let c = spec.constraint(spec.epsilon)?;
    let b = sample_boundary(&c, &l1, &l2, spec.boundary_points, &BoundaryGrid::default())?;
    let mut rows: Vec<BoundaryRow> = b
        .points
        .iter()
        .map(|(p, q)| BoundaryRow {
            j1: p.j1,
            j2: p.j2,
            theta1: Some(q.theta1),
            theta2: Some(q.theta2),
            r1: Some(q.r1),
            r2: Some(q.r2),
            reachable: true,
        })
        .chain(b.unreachable.iter().map(|p| BoundaryRow {
            j1: p.j1,
            j2: p.j2,
            theta1: None,
            theta2: None,
            r1: None,
            r2: None,
            reachable: false,
        }))
        .collect();
    rows.sort_by(|a, b| a.j1.total_cmp(&b.j1));
    Ok(rows)
}

/// The named exponents of the worked example under one time convention.
pub fn worked_example_constants(
    spec: &ExperimentSpec,
    convention: TimeUnit,
) -> Result<ConstantsRow> {
    let (m1, m2) = spec.models(spec.snr2_db, spec.d)?;
    let (l1, l2) = (CapacityLaw::new(m1)?, CapacityLaw::new(m2)?);
    let c = DelayConstraint::new(spec.epsilon, spec.dmax, convention, spec.block_time)?;
    let r = effcap_delay_constrained(&l1, &l2, &c)?;
    let a = &r.auxiliary;
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| {
            Error::Infeasible(format!("{name} is not defined in case {}", r.case_label))
        })
    };
    let vals = [
        need(a.theta1_th, "theta1_th")?,
        need(a.theta2_th, "theta2_th")?,
        need(a.bb_theta1, "bb_theta1")?,
        need(a.vv_theta1, "vv_theta1")?,
        need(a.uu_theta1, "uu_theta1")?,
    ];
    let max_rel_err = vals
        .iter()
        .zip(REFERENCE_CONSTANTS)
        .map(|(v, p)| ((v - p) / p).abs())
        .fold(0.0, f64::max);
    let unique = uniqueness_condition(&l1, &l2, &c).ok();
    Ok(ConstantsRow {
        convention,
        theta1_th: vals[0],
        theta2_th: vals[1],
        bb_theta1: vals[2],
        vv_theta1: vals[3],
        uu_theta1: vals[4],
        rate: r.rate,
        case: r.case_label.to_string(),
        uniqueness_condition: unique,
        max_rel_err,
        within_tolerance: max_rel_err <= REFERENCE_TOLERANCE,
        ordering_holds: vals[4] < vals[3] && vals[3] < vals[2] && vals[2] < vals[0],
    })
}

/// Simulates the tandem at `sim_rate_fraction · R_ε`, plus the source
/// queue alone against an effectively infinite relay.
pub fn run_validation(spec: &ExperimentSpec) -> Result<Vec<SimRow>> {
    let (m1, m2) = spec.models(spec.snr2_db, spec.d)?;
    let (l1, l2) = (CapacityLaw::new(m1.clone())?, CapacityLaw::new(m2)?);
    let c = spec.constraint(spec.epsilon)?;
    let r_eps = effcap_delay_constrained(&l1, &l2, &c)
        .map_err(|e| e.at("effcap_delay_constrained"))?
        .rate;
    let rate = spec.sim_rate_fraction * r_eps;
    let cfg = SimConfig {
        arrival_rate: rate,
        n_blocks: spec.sim_blocks,
        n_replications: spec.sim_replications,
        seed: spec.seed,
        warmup_blocks: spec.sim_warmup,
        delay_probe_bits: spec.sim_probe_bits,
    };
    let dmax_blocks = c.horizon();
    let theta1 = theta_for_rate(&l1, rate)?;
    let wide = CapacityLaw::new(FadingModel::new(
        FadingKind::Deterministic { z: 1.0 },
        1.0,
        spec.block_time,
        1e6 * l1.mean_capacity / spec.block_time,
    )?)?;
    let mut rows = Vec::with_capacity(2);
    for (system, relay) in [("tandem", &l2), ("single_queue", &wide)] {
        let rep = simulate(&l1, relay, &cfg, dmax_blocks).map_err(|e| e.at("simulate"))?;
        rows.push(SimRow {
            system,
            epsilon: spec.epsilon,
            dmax_blocks,
            rate_eps: r_eps,
            rate,
            p_violation: rep.p_violation.mean,
            p_violation_stderr: rep.p_violation.stderr,
            mean_delay_blocks: rep.mean_delay.mean,
            theta_hat_1: rep.theta_hat_1.map(|e| e.mean),
            theta_hat_1_stderr: rep.theta_hat_1.map(|e| e.stderr),
            theta_analytic_1: theta1,
            theta_hat_2: rep.theta_hat_2.map(|e| e.mean),
            probes: rep.probes,
        });
    }
    Ok(rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Config(format!("writing {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Config(format!("writing {}: {e}", path.display())))
}

/// Runs the experiment and writes `<out>/<name>.csv` and `<out>/<name>.json`.
///
/// Failing grid points are kept as rows with `status = error` and listed in
/// the sidecar; the caller decides the exit code from
/// [`RunSummary::failures`].
pub fn run(spec: &ExperimentSpec) -> Result<RunSummary> {
    spec.validate()?;
    let started = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::create_dir_all(&spec.out)
        .map_err(|e| Error::Config(format!("creating {}: {e}", spec.out.display())))?;
    let name = spec.experiment.name();
    let csv_path = spec.out.join(format!("{name}.csv"));
    let json_path = spec.out.join(format!("{name}.json"));

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = spec.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let (rows, failures, extra) = pool.install(|| -> Result<_> {
        match spec.experiment {
            ExperimentKind::BoundaryCurve => {
                let rows = run_boundary(spec)?;
                write_csv(&csv_path, &rows)?;
                let c = spec.constraint(spec.epsilon)?;
                Ok((
                    rows.len(),
                    Vec::new(),
                    serde_json::json!({ "j0": c.j0(), "j_th": c.j_th() }),
                ))
            }
            ExperimentKind::WorkedExampleConstants => {
                let mut rows = Vec::new();
                let mut failures = Vec::new();
                for conv in [TimeUnit::Block, TimeUnit::Second] {
                    match worked_example_constants(spec, conv) {
                        Ok(r) => rows.push(r),
                        Err(e) => failures.push(Failure {
                            row: rows.len() + failures.len(),
                            point: serde_json::json!({ "convention": conv }),
                            solver: solver_name(&e, "effcap_delay_constrained"),
                            error: e.to_string(),
                        }),
                    }
                }
                write_csv(&csv_path, &rows)?;
                let matched: Vec<String> = rows
                    .iter()
                    .filter(|r| r.within_tolerance)
                    .map(|r| r.convention.to_string())
                    .collect();
                Ok((
                    rows.len(),
                    failures,
                    serde_json::json!({
                        "reference": REFERENCE_CONSTANTS,
                        "tolerance": REFERENCE_TOLERANCE,
                        "matched_conventions": matched,
                    }),
                ))
            }
            ExperimentKind::ValidateSim => {
                let rows = run_validation(spec)?;
                write_csv(&csv_path, &rows)?;
                if spec.trace_blocks > 0 {
                    let (m1, m2) = spec.models(spec.snr2_db, spec.d)?;
                    let (l1, l2) = (CapacityLaw::new(m1)?, CapacityLaw::new(m2)?);
                    let cfg = SimConfig::new(rows[0].rate, spec.trace_blocks, 1, spec.seed);
                    let mut buf = Vec::new();
                    write_trace(&l1, &l2, &cfg, 0, &mut buf)?;
                    write_text(
                        &spec.out.join(format!("{name}.trace.csv")),
                        &String::from_utf8_lossy(&buf),
                    )?;
                }
                Ok((rows.len(), Vec::new(), serde_json::Value::Null))
            }
            _ => {
                let (rows, failures) = run_sweep(spec);
                write_csv(&csv_path, &rows)?;
                Ok((rows.len(), failures, serde_json::Value::Null))
            }
        }
    })?;

    let sidecar = Sidecar {
        schema_version: SIDECAR_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: name,
        time_unit: spec.time_unit,
        started_unix_s,
        elapsed_s: started.elapsed().as_secs_f64(),
        rows,
        failures: &failures,
        extra,
        spec,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Config(format!("sidecar: {e}")))?;
    write_text(&json_path, &json)?;
    Ok(RunSummary {
        csv: csv_path,
        sidecar: json_path,
        rows,
        failures,
    })
}
