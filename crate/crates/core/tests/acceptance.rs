//! Acceptance criteria, one PASS/FAIL line each.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use relay_effcap::baselines::symmetric_rate;
use relay_effcap::channel::{CapacityLaw, FadingKind, FadingModel};
use relay_effcap::effcap::{check_stability, effcap_delay_constrained, upper_bound};
use relay_effcap::experiment::{
    run_sweep, run_validation, worked_example_constants, ExperimentKind, ExperimentSpec, SweepRow,
    REFERENCE_CONSTANTS,
};
use relay_effcap::lmgf::{j_derivative, j_of_theta, lmgf_service, ServiceLaw, ThetaExponent};
use relay_effcap::tradeoff::{joint_violation, phi, BoundaryGrid, DelayConstraint, TimeUnit};

type Check = Result<String, String>;

struct Report {
    failed: usize,
}

impl Report {
    fn run(&mut self, id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Check) {
        let t = Instant::now();
        let out = f();
        let dt = t.elapsed();
        let (ok, detail) = match out {
            Ok(d) if dt <= limit => (true, d),
            Ok(d) => (false, format!("{d}; took {dt:.2?}, limit {limit:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            self.failed += 1;
        }
        println!(
            "{} criterion {id} ({name}) [{dt:.2?}]: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn law(kind: FadingKind, snr: f64) -> CapacityLaw {
    CapacityLaw::new(FadingModel::new(kind, snr, 1e-3, 180e3).unwrap()).unwrap()
}

fn worked_example() -> Check {
    let spec = ExperimentSpec::default();
    let mut lines = Vec::new();
    let mut matched = false;
    let mut ordered = true;
    for conv in [TimeUnit::Block, TimeUnit::Second] {
        let r = worked_example_constants(&spec, conv).map_err(|e| format!("{conv}: {e}"))?;
        let errs: Vec<String> = r
            .values()
            .iter()
            .zip(REFERENCE_CONSTANTS)
            .map(|(v, p)| format!("{v:.5} ({:+.0}%)", 100.0 * (v - p) / p))
            .collect();
        lines.push(format!(
            "{conv}: [{}] ordering {}",
            errs.join(", "),
            if r.ordering_holds {
                "holds"
            } else {
                "violated"
            }
        ));
        matched |= r.within_tolerance;
        ordered &= r.ordering_holds;
    }
    let detail = format!("reference {REFERENCE_CONSTANTS:?}; {}", lines.join("; "));
    if matched && ordered {
        Ok(detail)
    } else {
        Err(format!(
            "{}; {detail}",
            if matched {
                "ordering violated"
            } else {
                "no convention within 5% of every constant"
            }
        ))
    }
}

fn tradeoff_curve() -> Check {
    let mut worst = [0.0f64; 4];
    for eps in [0.01, 0.05, 0.2] {
        for dmax in [0.5, 1.0, 2.0] {
            let tag = format!("(eps {eps}, Dmax {dmax})");
            let c = DelayConstraint::new(eps, dmax, TimeUnit::Second, 1e-3)
                .map_err(|e| e.to_string())?;
            let j1s = BoundaryGrid::Symmetric { offset: 1e-4 }
                .values(&c, 200)
                .map_err(|e| e.to_string())?;
            let j2s: Vec<f64> = j1s
                .iter()
                .map(|&j| phi(j, &c))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let j0 = c.j0();
            ensure(j2s.windows(2).all(|w| w[1] < w[0]), || {
                format!("{tag}: not strictly decreasing")
            })?;
            for i in 1..j1s.len() - 1 {
                let s0 = (j2s[i] - j2s[i - 1]) / (j1s[i] - j1s[i - 1]);
                let s1 = (j2s[i + 1] - j2s[i]) / (j1s[i + 1] - j1s[i]);
                let dd = (s1 - s0) / (j1s[i + 1] - j1s[i - 1]);
                ensure(dd >= -1e-9, || {
                    format!("{tag}: second divided difference {dd:e} at j1 = {}", j1s[i])
                })?;
            }
            let jt = c.j_th();
            let fix = rel(phi(jt, &c).map_err(|e| e.to_string())?, jt);
            ensure(fix <= 1e-9, || format!("{tag}: Φ(J_th) off by {fix:e}"))?;
            let ends = rel(j1s[0], j0).max(rel(*j2s.last().unwrap(), j0));
            ensure(ends <= 1e-3, || {
                format!("{tag}: endpoints {ends:e} from J0")
            })?;
            let mut inv: f64 = 0.0;
            let mut viol: f64 = 0.0;
            for (&a, &b) in j1s.iter().zip(&j2s) {
                inv = inv.max(rel(phi(b, &c).map_err(|e| e.to_string())?, a));
                viol = viol.max(rel(
                    joint_violation(a, b, c.horizon()).map_err(|e| e.to_string())?,
                    eps,
                ));
            }
            ensure(inv <= 1e-8, || format!("{tag}: involution error {inv:e}"))?;
            ensure(viol <= 1e-8, || format!("{tag}: violation error {viol:e}"))?;
            worst = [
                worst[0].max(fix),
                worst[1].max(ends),
                worst[2].max(inv),
                worst[3].max(viol),
            ];
        }
    }
    Ok(format!(
        "9 boundaries x 200 points; max |Φ(J_th)-J_th| {:.1e}, endpoint gap {:.1e}, involution {:.1e}, violation {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn exponent_laws() -> Vec<(&'static str, CapacityLaw)> {
    vec![
        ("rayleigh", law(FadingKind::Rayleigh { mean: 16.0 }, 1.0)),
        (
            "rician3",
            law(
                FadingKind::Rician {
                    k_factor: 3.0,
                    mean: 16.0,
                },
                1.0,
            ),
        ),
        (
            "discrete_a",
            law(
                FadingKind::Discrete {
                    atoms: vec![(0.0, 0.1), (1.0, 0.4), (4.0, 0.5)],
                },
                1.0,
            ),
        ),
        (
            "discrete_b",
            law(
                FadingKind::Discrete {
                    atoms: vec![(0.0, 0.3), (0.5, 0.2), (2.0, 0.3), (8.0, 0.2)],
                },
                2.0,
            ),
        ),
        (
            "discrete_c",
            law(
                FadingKind::Discrete {
                    atoms: vec![(0.0, 0.05), (10.0, 0.95)],
                },
                1.0,
            ),
        ),
    ]
}

/// Richardson-extrapolated central differences with step shrinking by 1.4,
/// keeping the estimate with the smallest error bound.
fn ridders(f: impl Fn(f64) -> Result<f64, String>, x: f64, h0: f64) -> Result<f64, String> {
    const N: usize = 12;
    let mut a = [[0.0f64; N]; N];
    let mut h = h0;
    a[0][0] = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let (mut best, mut err) = (a[0][0], f64::INFINITY);
    for i in 1..N {
        h /= 1.4;
        a[0][i] = (f(x + h)? - f(x - h)?) / (2.0 * h);
        let mut fac = 1.96;
        for k in 1..=i {
            a[k][i] = (a[k - 1][i] * fac - a[k - 1][i - 1]) / (fac - 1.0);
            fac *= 1.96;
            let e = (a[k][i] - a[k - 1][i])
                .abs()
                .max((a[k][i] - a[k - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[k][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    Ok(best)
}

fn delay_exponent_properties() -> Check {
    let j = |l: &CapacityLaw, t: f64| {
        j_of_theta(l, ThetaExponent::new(t).unwrap())
            .map(|v| v.get())
            .map_err(|e| e.to_string())
    };
    let mut worst_deriv: f64 = 0.0;
    let mut worst_limit: f64 = 0.0;
    for (name, l) in exponent_laws() {
        ensure(j(&l, 0.0)? == 0.0, || format!("{name}: J(0) != 0"))?;
        let tmax = 20.0 / l.mean_capacity;
        let grid: Vec<f64> = (0..100).map(|k| tmax * k as f64 / 99.0).collect();
        let js: Vec<f64> = grid.iter().map(|&t| j(&l, t)).collect::<Result<_, _>>()?;
        for k in 1..99 {
            let d2 = js[k + 1] - 2.0 * js[k] + js[k - 1];
            ensure(d2 <= 1e-12 * js[k].abs().max(1.0), || {
                format!("{name}: convexity at θ = {} ({d2:e})", grid[k])
            })?;
        }
        for &t in &grid[1..] {
            let central = ridders(|x| j(&l, x), t, 0.1 * t)?;
            let exact =
                j_derivative(&l, ThetaExponent::new(t).unwrap()).map_err(|e| e.to_string())?;
            let err = rel(central, exact);
            worst_deriv = worst_deriv.max(err);
            ensure(err <= 1e-6, || {
                format!("{name}: derivative at θ = {t}: {exact} vs {central}")
            })?;
        }
        if let FadingKind::Discrete { atoms } = &l.model.kind {
            let p0: f64 = atoms.iter().filter(|a| a.0 == 0.0).map(|a| a.1).sum();
            let cpos = atoms
                .iter()
                .filter(|a| a.0 > 0.0)
                .map(|a| l.capacity(a.0))
                .fold(f64::INFINITY, f64::min);
            let far = j(&l, 100.0 / cpos)?;
            let err = (far + p0.ln()).abs();
            worst_limit = worst_limit.max(err).max((l.j_limit() + p0.ln()).abs());
            ensure(err <= 1e-8, || {
                format!("{name}: J(θ→∞) = {far} vs {}", -p0.ln())
            })?;
        }
    }
    Ok(format!(
        "5 laws; max derivative error {worst_deriv:.1e}, max limit error {worst_limit:.1e}"
    ))
}

fn oracle_equivalence() -> Check {
    let mut worst: f64 = 0.0;
    let cases = [
        (vec![(0.0, 0.1), (1.0, 0.4), (4.0, 0.5)], 1.0),
        (vec![(0.25, 0.6), (4.0, 0.4)], 2.0),
        (vec![(0.0, 0.3), (0.5, 0.2), (2.0, 0.3), (8.0, 0.2)], 0.5),
    ];
    for (atoms, snr) in cases {
        let l = law(
            FadingKind::Discrete {
                atoms: atoms.clone(),
            },
            snr,
        );
        let cap = |z: f64| 180.0 * (1.0 + snr * z).log2();
        let mean: f64 = atoms.iter().map(|&(z, p)| p * cap(z)).sum();
        worst = worst.max(rel(l.mean_capacity, mean));
        for k in -20..=40 {
            let theta = k as f64 * 2.5e-3;
            let mgf: f64 = atoms.iter().map(|&(z, p)| p * (theta * cap(z)).exp()).sum();
            let lmgf = lmgf_service(&l, theta).map_err(|e| e.to_string())?;
            worst = worst.max((lmgf - mgf.ln()).abs() / mgf.ln().abs().max(1.0));
            if theta >= 0.0 {
                let jv = j_of_theta(&l, ThetaExponent::new(theta).unwrap())
                    .map_err(|e| e.to_string())?
                    .get();
                let exact: f64 = -atoms
                    .iter()
                    .map(|&(z, p)| p * (-theta * cap(z)).exp())
                    .sum::<f64>()
                    .ln();
                worst = worst.max((jv - exact).abs() / exact.abs().max(1.0));
            }
        }
    }
    ensure(worst <= 1e-10, || format!("discrete mismatch {worst:e}"))?;

    // Rayleigh against Monte Carlo with independent sampling.
    let (mean_z, snr) = (16.0, 1.0);
    let l = law(FadingKind::Rayleigh { mean: mean_z }, snr);
    let thetas: [f64; 3] = [1e-4, 1e-3, 5e-3];
    let n = 10_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let exp = Exp::new(1.0 / mean_z).unwrap();
    let mut sums = [[0.0f64; 2]; 4];
    for _ in 0..n {
        let c = 180.0 * (1.0 + snr * exp.sample(&mut rng)).log2();
        let mut upd = |i: usize, v: f64| {
            sums[i][0] += v;
            sums[i][1] += v * v;
        };
        upd(0, c);
        for (i, t) in thetas.iter().enumerate() {
            upd(i + 1, (-t * c).exp());
        }
    }
    let mut worst_z: f64 = 0.0;
    let quad = std::iter::once(Ok(l.mean_capacity))
        .chain(thetas.iter().map(|&t| lmgf_service(&l, -t).map(f64::exp)))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| e.to_string())?;
    for (i, q) in quad.iter().enumerate() {
        let m = sums[i][0] / n as f64;
        let var = sums[i][1] / n as f64 - m * m;
        let se = (var / n as f64).sqrt();
        let z = (q - m).abs() / se;
        worst_z = worst_z.max(z);
        ensure(z <= 3.0, || {
            format!("Rayleigh moment {i}: quadrature {q} vs MC {m} ± {se}")
        })?;
    }
    Ok(format!(
        "discrete max error {worst:.1e}; Rayleigh vs 1e7 samples max |z| = {worst_z:.2}"
    ))
}

fn optimum_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = std::collections::BTreeMap::new();
    for i in 0..50 {
        let unit = if i % 2 == 0 {
            TimeUnit::Block
        } else {
            TimeUnit::Second
        };
        let rician = i % 5 == 4;
        let (l1, l2) = loop {
            let snr1_db: f64 = rng.random_range(-3.0..6.0);
            let snr2_db = snr1_db + rng.random_range(0.5..8.0);
            let m1: f64 = 2f64.powf(rng.random_range(1.0..6.0));
            let m2: f64 = 2f64.powf(rng.random_range(1.0..6.0));
            let kind = |mean| {
                if rician {
                    FadingKind::Rician {
                        k_factor: 3.0,
                        mean,
                    }
                } else {
                    FadingKind::Rayleigh { mean }
                }
            };
            let a = law(kind(m1), 10f64.powf(snr1_db / 10.0));
            let b = law(kind(m2), 10f64.powf(snr2_db / 10.0));
            if check_stability(&a, &b) && b.mean_capacity > 1.01 * a.mean_capacity {
                break (a, b);
            }
        };
        let eps = 10f64.powf(rng.random_range(-3.0..-0.3));
        let tag = format!("instance {i} ({unit}, eps {eps:.4})");
        let c = DelayConstraint::new(eps, 1.0, unit, 1e-3).map_err(|e| e.to_string())?;
        let r = effcap_delay_constrained(&l1, &l2, &c).map_err(|e| format!("{tag}: {e}"))?;
        *cases.entry(r.case_label.to_string()).or_insert(0) += 1;
        let ub = upper_bound(&r.optimizer);
        ensure(r.rate <= ub * (1.0 + 1e-9), || {
            format!("{tag}: rate {} above bound {ub}", r.rate)
        })?;
        let s = symmetric_rate(&l1, &l2, &c).map_err(|e| format!("{tag}: {e}"))?;
        ensure(r.rate >= s.rate * (1.0 - 1e-9), || {
            format!("{tag}: rate {} below symmetric {}", r.rate, s.rate)
        })?;
        let near = DelayConstraint::new(0.999, 1.0, unit, 1e-3).map_err(|e| e.to_string())?;
        let rn = effcap_delay_constrained(&l1, &l2, &near)
            .map_err(|e| format!("{tag} at 0.999: {e}"))?;
        let target = l1.mean_capacity.min(l2.mean_capacity);
        ensure(rel(rn.rate, target) <= 0.01, || {
            format!("{tag}: rate {} at 0.999 vs {target}", rn.rate)
        })?;
    }
    Ok(format!("50 instances; cases {cases:?}"))
}

fn simulation_validation() -> Check {
    let spec = ExperimentSpec {
        experiment: ExperimentKind::ValidateSim,
        seed: 2024,
        ..Default::default()
    };
    let rows = run_validation(&spec).map_err(|e| e.to_string())?;
    let (tandem, single) = (&rows[0], &rows[1]);
    let bound = spec.epsilon + 3.0 * tandem.p_violation_stderr;
    ensure(tandem.p_violation <= bound, || {
        format!("violation {} above {bound}", tandem.p_violation)
    })?;
    let th = single
        .theta_hat_1
        .ok_or("single-queue tail exponent unavailable")?;
    let err = rel(th, single.theta_analytic_1);
    ensure(err <= 0.1, || {
        format!(
            "tail exponent {th} vs {} ({:.1}%)",
            single.theta_analytic_1,
            100.0 * err
        )
    })?;
    Ok(format!(
        "R = {:.2} bits/block (0.95 R_eps), Dmax = {} blocks: violation {:.2e} ± {:.1e}, mean delay {:.2} blocks; tail exponent {th:.4e} vs {:.4e} ({:.1}%)",
        tandem.rate,
        tandem.dmax_blocks,
        tandem.p_violation,
        tandem.p_violation_stderr,
        tandem.mean_delay_blocks,
        single.theta_analytic_1,
        100.0 * err
    ))
}

fn config(name: &str) -> Result<ExperimentSpec, String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.toml"));
    ExperimentSpec::from_file(&path).map_err(|e| e.to_string())
}

fn sweep(name: &str, unit: TimeUnit) -> Result<Vec<SweepRow>, String> {
    let mut spec = config(name)?;
    spec.time_unit = unit;
    let t = Instant::now();
    let (rows, failures) = run_sweep(&spec);
    ensure(failures.is_empty(), || {
        format!(
            "{name}/{unit}: {} failed points, first {:?}",
            failures.len(),
            failures[0]
        )
    })?;
    ensure(t.elapsed() < Duration::from_secs(120), || {
        format!("{name}/{unit} took {:?}", t.elapsed())
    })?;
    ensure(
        rows.iter()
            .any(|r| r.rate_asym.unwrap() > r.rate_sym.unwrap()),
        || format!("{name}/{unit}: asymmetric never beats symmetric"),
    )?;
    Ok(rows)
}

fn curves<'a>(rows: &'a [SweepRow], key: impl Fn(&SweepRow) -> f64) -> Vec<Vec<&'a SweepRow>> {
    let mut out: Vec<Vec<&SweepRow>> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(c) if key(c[0]) == key(r) => c.push(r),
            _ => out.push(vec![r]),
        }
    }
    out
}

fn sweep_trends() -> Check {
    let mut notes = Vec::new();
    for unit in [TimeUnit::Block, TimeUnit::Second] {
        let rows = sweep("ec_vs_snr2", unit)?;
        let rates: Vec<f64> = rows.iter().map(|r| r.rate_asym.unwrap()).collect();
        ensure(
            rates.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)),
            || format!("ec_vs_snr2/{unit}: not nondecreasing {rates:?}"),
        )?;

        let rows = sweep("ec_vs_epsilon", unit)?;
        let mut at_one = Vec::new();
        for c in curves(&rows, |r| r.snr2_db) {
            let rates: Vec<f64> = c.iter().map(|r| r.rate_asym.unwrap()).collect();
            ensure(rates.windows(2).all(|w| w[1] >= w[0]), || {
                format!(
                    "ec_vs_epsilon/{unit}: rate grows as eps decreases at snr2 {}",
                    c[0].snr2_db
                )
            })?;
            let last = c.last().unwrap();
            ensure(last.epsilon == 1.0, || "epsilon grid must end at 1".into())?;
            at_one.push(last.rate_asym.unwrap());
        }
        let spread = at_one.iter().fold(0.0f64, |m, &r| m.max(rel(r, at_one[0])));
        ensure(spread <= 1e-9, || {
            format!("ec_vs_epsilon/{unit}: curves differ at eps = 1 ({spread:e})")
        })?;

        let rows = sweep("ec_vs_d", unit)?;
        for c in curves(&rows, |r| r.snr2_db) {
            let tail: Vec<f64> = c[c.len() - 4..]
                .iter()
                .map(|r| r.rate_asym.unwrap())
                .collect();
            ensure(tail.windows(2).all(|w| w[1] < w[0]), || {
                format!(
                    "ec_vs_d/{unit}: not decreasing near d = 1 at snr2 {}: {tail:?}",
                    c[0].snr2_db
                )
            })?;
        }
        sweep("ec_surface_d_eps", unit)?;
        notes.push(format!("{unit}: all trends hold"));
    }
    Ok(notes.join("; "))
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    r.run(
        1,
        "worked-example constants",
        Duration::from_secs(10),
        worked_example,
    );
    r.run(2, "tradeoff curve", Duration::from_secs(5), tradeoff_curve);
    r.run(
        3,
        "delay exponent",
        Duration::from_secs(5),
        delay_exponent_properties,
    );
    r.run(
        4,
        "oracle equivalence",
        Duration::from_secs(60),
        oracle_equivalence,
    );
    r.run(
        5,
        "optimum consistency",
        Duration::from_secs(60),
        optimum_consistency,
    );
    r.run(
        6,
        "simulation",
        Duration::from_secs(600),
        simulation_validation,
    );
    r.run(
        7,
        "sweep trends",
        Duration::from_secs(4 * 2 * 120),
        sweep_trends,
    );
    println!("{} of 7 criteria failed", r.failed);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
