//! Acceptance suite. Runs every criterion in order, prints one line per
//! criterion and exits non-zero if any of them fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::dvector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sliding_cli::output::TrajectoryTable;
use sliding_core::audit::{run_check, Check, Sampler, SamplerConfig};
use sliding_core::integrator::{integrate, EventKind, IntegratorOptions, Mode};
use sliding_core::sliding_laws::filippov_direct;
use sliding_core::{
    CharacteristicMap, GeneratingMap, PiecewiseField, RegionKind, SurfaceChart, Vector,
};

const SEED: u64 = 20240601;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn sliding(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sliding"))
        .args(args)
        .output()
        .expect("run sliding");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Surfaces drawn from {flat, tilt, paraboloid}.
fn basic_surface(s: &mut Sampler<'_, ChaCha8Rng>, n: usize, nontrivial: bool) -> SurfaceChart {
    let pick = if nontrivial {
        1 + (s.uniform(0.0, 2.0) as usize)
    } else {
        s.uniform(0.0, 3.0) as usize
    };
    match pick {
        0 => SurfaceChart::flat(n),
        1 => SurfaceChart::tilt((0..n - 1).map(|_| s.uniform(-2.0, 2.0)).collect()),
        _ => SurfaceChart::paraboloid(n, s.uniform(-1.0, 1.0)),
    }
}

/// Constant fields and a point of Σ where they are strictly sliding.
fn sliding_sample(s: &mut Sampler<'_, ChaCha8Rng>, nontrivial: bool) -> (PiecewiseField, Vector) {
    loop {
        let n = 2 + (s.uniform(0.0, 3.0) as usize);
        let surface = basic_surface(s, n, nontrivial);
        let x = surface.lift(&Vector::from_fn(n - 1, |_, _| s.uniform(-2.0, 2.0)));
        let pf = PiecewiseField::constant(surface, s.vector(n), s.vector(n));
        if matches!(
            pf.classify(&x, 1e-9),
            Ok(RegionKind::AttractingSliding | RegionKind::RepellingSliding)
        ) {
            return (pf, x);
        }
    }
}

fn criterion_1() -> Outcome {
    let cfg = SamplerConfig::new(SEED, 1, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut s = Sampler::new(&mut rng, &cfg);
    let mut worst: f64 = 0.0;
    let samples = 10_000;
    for _ in 0..samples {
        let (pf, x) = sliding_sample(&mut s, false);
        let f = match filippov_direct(&pf, &x) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("evaluation failed: {e}")),
        };
        let n = pf.surface().normal_at(&pf.surface().split(&x).0).unwrap();
        let norm = f.vec.norm();
        if norm > 0.0 {
            worst = worst.max(n.dot(&f.vec).abs() / norm);
        }
    }
    Outcome::new(
        worst <= 1e-9,
        format!("{samples} samples, worst |n·F|/|F| = {worst:.2e} (limit 1e-9)"),
    )
}

fn criterion_2() -> Outcome {
    let cfg = SamplerConfig::new(SEED + 1, 1, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut s = Sampler::new(&mut rng, &cfg);
    let gm = GeneratingMap::filippov();
    let mut worst: f64 = 0.0;
    let samples = 1_000;
    for _ in 0..samples {
        let (pf, x) = sliding_sample(&mut s, true);
        match (gm.generate(&pf, &x), filippov_direct(&pf, &x)) {
            (Ok(a), Ok(b)) => {
                let scale = a.vec.norm().max(b.vec.norm()).max(f64::MIN_POSITIVE);
                worst = worst.max((a.vec - b.vec).norm() / scale);
            }
            (Err(e), _) | (_, Err(e)) => {
                return Outcome::new(false, format!("evaluation failed: {e}"))
            }
        }
    }
    Outcome::new(
        worst <= 1e-8,
        format!("{samples} samples, worst relative gap = {worst:.2e} (limit 1e-8)"),
    )
}

fn audit_to(dir: &Path, law: &str, name: &str) -> Result<(i32, Vec<Value>), String> {
    let out = dir.join(name);
    let (code, stderr) = sliding(&[
        "audit",
        "--law",
        law,
        "--check",
        "all",
        "--trials",
        "1000",
        "--seed",
        &SEED.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    if code == 2 || code == 3 {
        return Err(format!("audit exited {code}: {stderr}"));
    }
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    Ok((code, v.as_array().cloned().unwrap_or_default()))
}

fn report<'a>(reports: &'a [Value], check: &str) -> &'a Value {
    reports
        .iter()
        .find(|r| r["check"] == check)
        .unwrap_or(&Value::Null)
}

fn failures(r: &Value) -> u64 {
    r["failures"].as_u64().unwrap_or(u64::MAX)
}

fn criterion_3(dir: &Path) -> Outcome {
    match audit_to(dir, "filippov", "filippov.json") {
        Ok((code, reports)) => {
            let names: Vec<&str> = Check::LAW_CHECKS.iter().map(|c| c.name()).collect();
            let all_present = names.iter().all(|n| !report(&reports, n).is_null());
            let clean = reports.iter().all(|r| failures(r) == 0);
            let worst = reports
                .iter()
                .filter_map(|r| r["worst_violation"].as_f64())
                .fold(0.0, f64::max);
            Outcome::new(
                code == 0 && all_present && clean && reports.len() == 6,
                format!(
                    "exit {code}, {} reports, worst violation {worst:.2e}",
                    reports.len()
                ),
            )
        }
        Err(e) => Outcome::new(false, e),
    }
}

fn criterion_4(dir: &Path) -> Outcome {
    let (mean, scaled) = match (
        audit_to(dir, "mean", "mean.json"),
        audit_to(dir, "scaled_filippov(2)", "scaled.json"),
    ) {
        (Ok(m), Ok(s)) => (m.1, s.1),
        (Err(e), _) | (_, Err(e)) => return Outcome::new(false, e),
    };
    let mut problems = Vec::new();

    let eq = report(&mean, "matrix-equivariance");
    let eq_worst = eq["worst_violation"].as_f64().unwrap_or(0.0);
    if failures(eq) == 0 || eq_worst < 0.1 {
        problems.push(format!("mean matrix-equivariance worst {eq_worst}"));
    }

    let dep = report(&mean, "linear-dependence");
    let w = &dep["witnesses"][0];
    let expect = |k: &str, v: &[f64]| {
        w["inputs"][k]
            .as_array()
            .map(|a| a.iter().map(|x| x.as_f64().unwrap()).collect::<Vec<_>>())
            == Some(v.to_vec())
    };
    let alpha: f64 = w["lhs"]
        .as_array()
        .map(|a| {
            a.iter()
                .map(|x| x.as_f64().unwrap().powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .unwrap_or(0.0);
    if !(failures(dep) > 0
        && expect("p", &[1.0, 0.0])
        && expect("q", &[2.0])
        && expect("r", &[-0.5, 0.0])
        && expect("s", &[-1.0])
        && (alpha - 0.25).abs() < 1e-15)
    {
        problems.push(format!("mean linear-dependence witness {w}"));
    }

    let lim = report(&scaled, "continuous-limit");
    let non_shrinking = lim["witnesses"].as_array().is_some_and(|ws| {
        !ws.is_empty()
            && ws.iter().all(|w| {
                let p: f64 = w["inputs"]["p"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|x| x.as_f64().unwrap().powi(2))
                    .sum::<f64>()
                    .sqrt();
                let first = w["inputs"]["deviation_first"][0].as_f64().unwrap();
                let last = w["inputs"]["deviation_last"][0].as_f64().unwrap();
                (first - p).abs() <= 1e-12 * p && (last - p).abs() <= 1e-12 * p
            })
    });
    if failures(lim) != 1000 || !non_shrinking {
        problems.push("scaled_filippov(2) continuous-limit deviation is not |p|".into());
    }

    // Pass/fail pattern. Parametrization consistency is equivalent to matrix
    // equivariance for pointwise laws, so the mean law fails both.
    let mean_fails = [
        "matrix-equivariance",
        "linear-dependence",
        "parametrization-consistency",
    ];
    for c in Check::LAW_CHECKS {
        let m_fail = failures(report(&mean, c.name())) > 0;
        if m_fail != mean_fails.contains(&c.name()) {
            problems.push(format!(
                "mean {}: failures = {}",
                c,
                failures(report(&mean, c.name()))
            ));
        }
        let s_fail = failures(report(&scaled, c.name())) > 0;
        if s_fail != (c == Check::ContinuousLimit) {
            problems.push(format!(
                "scaled_filippov(2) {}: failures = {}",
                c,
                failures(report(&scaled, c.name()))
            ));
        }
    }
    Outcome::new(
        problems.is_empty(),
        if problems.is_empty() {
            format!("mean equivariance worst {eq_worst:.3}, dependence |α| = {alpha}, scaled limit deviation = |p|")
        } else {
            problems.join("; ")
        },
    )
}

fn criterion_5(dir: &Path) -> Outcome {
    let cfg = SamplerConfig::new(SEED, 1000, 3).unwrap();
    match run_check(
        Check::SlidingRegionInvariance,
        &CharacteristicMap::filippov(),
        &cfg,
    ) {
        Ok(r) => {
            fs::write(
                dir.join("region.json"),
                serde_json::to_string_pretty(&r).unwrap(),
            )
            .unwrap();
            Outcome::new(
                r.failures == 0,
                format!("{} samples, {} failures", r.trials, r.failures),
            )
        }
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn simulate(
    dir: &Path,
    name: &str,
    config: &str,
) -> Result<(TrajectoryTable, Value, PathBuf), String> {
    let cfg_path = dir.join(format!("{name}.config.json"));
    fs::write(&cfg_path, config).unwrap();
    let prefix = dir.join(name);
    let (code, stderr) = sliding(&[
        "simulate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out-prefix",
        prefix.to_str().unwrap(),
    ]);
    if code != 0 {
        return Err(format!("simulate exited {code}: {stderr}"));
    }
    let table =
        TrajectoryTable::read(&dir.join(format!("{name}.csv"))).map_err(|e| e.to_string())?;
    let events: Value =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.events.json"))).unwrap())
            .unwrap();
    Ok((table, events, prefix))
}

const TRAJECTORY_A: &str = r#"{"schema_version": 1, "scenario": "flat",
  "params": {"lower_x": 1.0, "lower_y": 1.5, "upper_x": 1.0, "upper_y": -0.5},
  "x0": [0.0, -1.0], "t_end": 2.0, "step": 0.01, "seed": 20240601}"#;

const TRAJECTORY_B: &str = r#"{"schema_version": 1, "scenario": "friction",
  "params": {"f": 1.0, "A": 2.0, "omega": 1.0},
  "x0": [1.5707963267948966, 0.0], "t_end": 1.0, "step": 0.001, "seed": 20240601}"#;

fn event_time(events: &Value, kind: &str) -> Option<f64> {
    events["events"]
        .as_array()?
        .iter()
        .find(|e| e["kind"] == kind)?["time"]
        .as_f64()
}

fn criterion_6(dir: &Path) -> Outcome {
    let (table, events, _) = match simulate(dir, "trajectory_a", TRAJECTORY_A) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, e),
    };
    let hit = event_time(&events, "SurfaceHit").unwrap_or(f64::NAN);
    let last = table.rows.last().unwrap();
    let end_err = ((last.values[1] - 2.0).powi(2) + last.values[2].powi(2)).sqrt();
    let pass = (hit - 2.0 / 3.0).abs() <= 1e-8
        && last.values[0] == 2.0
        && end_err <= 1e-6
        && last.mode == "S";
    Outcome::new(
        pass,
        format!(
            "hit at t = {hit:.12}, |x(2) − (2,0)| = {end_err:.1e}, final mode {}",
            last.mode
        ),
    )
}

fn criterion_7(dir: &Path) -> Outcome {
    let (table, events, _) = match simulate(dir, "trajectory_b", TRAJECTORY_B) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, e),
    };
    let entry = event_time(&events, "SlidingEntry").unwrap_or(f64::NAN);
    let exit = event_time(&events, "SlidingExit").unwrap_or(f64::NAN);
    let after: Vec<_> = table.rows.iter().filter(|r| r.values[0] > exit).collect();
    let v = table.column("x2").unwrap();
    let decreasing = after.windows(2).all(|w| w[1].values[v] < w[0].values[v]);
    let free_g1 = !after.is_empty() && after.iter().all(|r| r.mode == "1");
    let pass =
        entry == 0.0 && (exit - std::f64::consts::FRAC_PI_6).abs() <= 1e-6 && free_g1 && decreasing;
    Outcome::new(
        pass,
        format!(
            "entry t = {entry}, exit t = {exit:.12} (|Δ| = {:.1e}), post-exit mode {}, v decreasing: {decreasing}",
            (exit - std::f64::consts::FRAC_PI_6).abs(),
            after.first().map_or("-", |r| r.mode.as_str())
        ),
    )
}

fn criterion_8() -> Outcome {
    let pf = PiecewiseField::constant(
        SurfaceChart::flat(2),
        dvector![1.0, 1.5],
        dvector![1.0, -0.5],
    );
    let exact = dvector![2.0, 0.0];
    let floor = 1e-9;
    let mut errors = Vec::new();
    let mut h = 1e-2;
    while h >= 1e-3 * 0.999 {
        let traj = integrate(
            &pf,
            &GeneratingMap::filippov(),
            &dvector![0.0, -1.0],
            0.0,
            &IntegratorOptions::new(h, 2.0),
        );
        match traj {
            Ok(t)
                if t.final_mode() == Some(Mode::Sliding)
                    && t.events_of(EventKind::SurfaceHit).count() == 1 =>
            {
                errors.push((h, (t.final_state().unwrap().1 - &exact).norm()));
            }
            _ => return Outcome::new(false, format!("integration with h = {h} failed")),
        }
        h /= 2.0;
    }
    let ok = errors
        .windows(2)
        .all(|w| w[1].1 <= floor || w[0].1 >= 8.0 * w[1].1);
    let list: Vec<String> = errors.iter().map(|(_, e)| format!("{e:.1e}")).collect();

    // Trajectory A has constant fields, for which the scheme is exact. A
    // rotation in free flight shows the order away from that floor.
    let rotation = PiecewiseField::from_fns(
        SurfaceChart::new(2, |_| -100.0, |_| dvector![0.0]),
        |x: &Vector| dvector![-x[1], x[0]],
        |x: &Vector| dvector![-x[1], x[0]],
    );
    let exact = dvector![2f64.cos(), 2f64.sin()];
    let mut ratios = Vec::new();
    let mut prev: Option<f64> = None;
    for h in [1e-1, 5e-2, 2.5e-2, 1.25e-2] {
        let t = integrate(
            &rotation,
            &GeneratingMap::filippov(),
            &dvector![1.0, 0.0],
            0.0,
            &IntegratorOptions::new(h, 2.0),
        )
        .unwrap();
        let e = (t.final_state().unwrap().1 - &exact).norm();
        if let Some(p) = prev {
            ratios.push(p / e);
        }
        prev = Some(e);
    }
    let order_ok = ratios.iter().all(|&r| r >= 8.0);
    let rlist: Vec<String> = ratios.iter().map(|r| format!("{r:.1}")).collect();
    Outcome::new(
        ok && order_ok,
        format!(
            "trajectory A errors [{}] for h = 1e-2 … 1.25e-3 (exact, at floor); rotation halving ratios [{}]",
            list.join(", "),
            rlist.join(", ")
        ),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".config.json"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn criterion_9(first: &Path) -> Outcome {
    let second = tempfile::tempdir().unwrap();
    let _ = (
        criterion_3(second.path()),
        criterion_4(second.path()),
        criterion_5(second.path()),
    );
    let _ = (criterion_6(second.path()), criterion_7(second.path()));
    let (a, b) = (snapshot(first), snapshot(second.path()));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x == y);
    Outcome::new(
        same && a.len() >= 8,
        format!("{} files compared: {}", a.len(), names.join(", ")),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    type Run<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(u32, &str, Duration, Run)> = vec![
        (
            1,
            "Filippov tangency",
            Duration::from_secs(5),
            Box::new(criterion_1),
        ),
        (
            2,
            "representation equivalence",
            Duration::from_secs(5),
            Box::new(criterion_2),
        ),
        (
            3,
            "Filippov passes every audit",
            Duration::from_secs(30),
            Box::new(|| criterion_3(d)),
        ),
        (
            4,
            "falsification matrix",
            Duration::from_secs(30),
            Box::new(|| criterion_4(d)),
        ),
        (
            5,
            "sliding-region invariance",
            Duration::from_secs(10),
            Box::new(|| criterion_5(d)),
        ),
        (
            6,
            "closed-form trajectory A",
            Duration::from_secs(1),
            Box::new(|| criterion_6(d)),
        ),
        (
            7,
            "friction stick-slip",
            Duration::from_secs(1),
            Box::new(|| criterion_7(d)),
        ),
        (
            8,
            "convergence order",
            Duration::from_secs(5),
            Box::new(criterion_8),
        ),
        (
            9,
            "determinism",
            Duration::from_secs(120),
            Box::new(|| criterion_9(d)),
        ),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            String::new()
        } else {
            format!(" [over time limit {limit:?}]")
        };
        println!(
            "criterion {id} {}: {name} ({:.2} s) {}{timing}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            out.detail
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
