//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! status 1 when any criterion fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use kl_core::cylinder::{build_chart, choose_c_sequence, extract_h, verification_trajectories, verify_cylinder};
use kl_core::desing::{
    build_psi_from_a, classify_profile, fit_lojasiewicz_exponent, integrability_verdict, oracle_1d, verify_certificate,
    Integrability, Verdict,
};
use kl_core::envelope::{build_envelope, EnvelopeKind, SemicontinuousProfile};
use kl_core::field::{make_distance_power_field, zoo, zoo_entry, DomainSpec, Primitive, ProfileFn};
use kl_core::flow::{flow_to_level, integrate, retract, safe_set_test, trajectory_length, Clock, FlowControls};
use kl_core::levelset::build_profile;
use kl_core::{linalg, quad, BoxRegion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> String + '_ {
    move |e| format!("{what}: {e}")
}

fn length_bound() -> Outcome {
    let start = Instant::now();
    let controls = FlowControls::default();
    let mut fields = 0;
    let mut checked = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for e in zoo::<f64>() {
        let Some(cert) = e.known_certificate.clone() else { continue };
        fields += 1;
        let region = cert.region.intersect(e.field.domain().bounds()).unwrap_or_else(|| cert.region.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(fields);
        let mut n = 0;
        let mut tries = 0;
        while n < 100 {
            tries += 1;
            if tries > 1_000_000 {
                return Err(format!("{}: not enough starts in V", e.name));
            }
            let x = region.sample(&mut rng);
            if !safe_set_test(&e.field, &x, &cert).in_v || e.field.value(&x) <= 1e-9 {
                continue;
            }
            n += 1;
            let t = integrate(&e.field, &x, Clock::Time, &controls).map_err(fail(&e.name))?;
            let excess = trajectory_length(&t) - cert.psi.value(t.f0);
            worst = worst.max(excess);
            if excess > 1e-6 {
                violations += 1;
            }
            checked += 1;
        }
    }
    let took = start.elapsed();
    check(
        violations == 0 && took < Duration::from_secs(30) && fields > 0,
        format!("{fields} fields, {checked} starts, {violations} violations, max excess {worst:.2e}, {took:.1?}"),
    )
}

fn theta_formula() -> Outcome {
    let dom = DomainSpec::new(&[-2.0], &[2.0]).map_err(fail("domain"))?;
    let e = make_distance_power_field(2.0, Primitive::Point(vec![0.0]), dom).map_err(fail("field"))?;
    let traj = integrate(&e.field, &[1.0], Clock::Level, &FlowControls::default()).map_err(fail("flow"))?;
    let mut worst = 0f64;
    for i in 0..50 {
        let t = 0.99 * i as f64 / 49.0;
        let s = traj.convert_param(Clock::Level, t, Clock::Arclength).ok_or(format!("t = {t} outside the run"))?;
        worst = worst.max((s - (1.0 - (1.0 - t).sqrt())).abs());
    }
    check(worst <= 1e-6, format!("max error {worst:.2e} at 50 values"))
}

fn level_clock() -> Outcome {
    let entries = zoo::<f64>();
    let controls = FlowControls::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0f64;
    let mut count = 0;
    while count < 50 {
        let e = &entries[count % entries.len()];
        let x = e.field.domain().bounds().sample(&mut rng);
        if e.field.value(&x) <= 1e-3 || e.field.grad_norm(&x) <= 1e-6 {
            continue;
        }
        let t = integrate(&e.field, &x, Clock::Level, &controls).map_err(fail(&e.name))?;
        worst = worst.max(t.level_defect());
        count += 1;
    }
    check(worst <= 1e-8, format!("{count} trajectories over {} fields, max defect {worst:.2e}", entries.len()))
}

fn retraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let disk = zoo_entry::<f64>("disk").map_err(fail("disk"))?;
    let cert = disk.known_certificate.clone().ok_or("disk has no certificate")?;
    let mut disk_err = 0f64;
    for _ in 0..100 {
        let (r, a) = (rng.gen_range(1.0..2.0), rng.gen_range(0.0..std::f64::consts::TAU));
        let x = [r * a.cos(), r * a.sin()];
        let y = retract(&disk.field, &x, &cert).map_err(fail("disk"))?;
        disk_err = disk_err.max(linalg::dist(&y, &linalg::scale(&x, 1.0 / r)));
    }
    let strip = zoo_entry::<f64>("strip").map_err(fail("strip"))?;
    let cert = strip.known_certificate.clone().ok_or("strip has no certificate")?;
    let region = cert.region.intersect(strip.field.domain().bounds()).unwrap_or_else(|| cert.region.clone());
    let mut strip_err = 0f64;
    let mut n = 0;
    while n < 100 {
        let x = region.sample(&mut rng);
        if !safe_set_test(&strip.field, &x, &cert).in_v || x[1] <= 1e-4 {
            continue;
        }
        let y = retract(&strip.field, &x, &cert).map_err(fail("strip"))?;
        strip_err = strip_err.max(linalg::dist(&y, &[x[0], 0.0]));
        n += 1;
    }
    check(disk_err <= 1e-6 && strip_err <= 1e-6, format!("disk max error {disk_err:.2e}, strip max error {strip_err:.2e}"))
}

fn equivalence_loop() -> Outcome {
    let e = zoo_entry::<f64>("quadratic").map_err(fail("quadratic"))?;
    let field = &e.field;
    let fit = fit_lojasiewicz_exponent(field, field.domain().bounds(), 1.0, 4000, 0, 1e-10).map_err(fail("fit"))?;
    let (theta, c) = (fit.theta, fit.c);
    let a = move |t: f64| c * t.powf(theta);
    let cert = build_psi_from_a(&a, 1.0, BoxRegion::cube(&[0.0, 0.0], 1.0)).map_err(fail("build"))?;
    let report = verify_certificate(field, &cert, 4000, 1, 1e-10);
    let profile = build_profile(field, &BoxRegion::cube(&[0.0, 0.0], 1.0), 0.5, 40, 256);
    let (t, alpha) = profile.alpha_curve();
    let v = integrability_verdict(&t, &alpha, 0.5);
    let target = 0.5f64.sqrt();
    let rel = (v.integral - target).abs() / target;
    check(
        (theta - 0.5).abs() <= 0.02
            && report.worst_margin >= -1e-3
            && v.verdict == Integrability::Integrable
            && rel <= 0.05,
        format!(
            "theta {theta:.4}, C {c:.4}, worst margin {:.2e}, alpha {:?} with integral {:.5} vs {target:.5}",
            report.worst_margin, v.verdict, v.integral
        ),
    )
}

fn trichotomy() -> Outcome {
    let t: Vec<f64> = (0..=64).rev().map(|j| 0.5 * 2f64.powf(-(j as f64) / 4.0)).collect();
    let mut detail = Vec::new();
    let mut ok = true;
    for (p, q, want) in [(0.5, 0.5, Verdict::Good), (1.0, 0.5, Verdict::Bad), (1.0, 1.0, Verdict::Ugly)] {
        let alpha: Vec<f64> = t.iter().map(|s| s.powf(-p)).collect();
        let beta: Vec<f64> = t.iter().map(|s| s.powf(-q)).collect();
        let (verdict, a, b) = classify_profile(&t, &alpha, &beta, 0.5);
        let good = verdict == want && (a.tail_exponent - p).abs() <= 0.02 && (b.tail_exponent - q).abs() <= 0.02;
        ok &= good;
        detail.push(format!("(t^-{p}, t^-{q}) -> {verdict:?} [q {:.3}/{:.3}]", a.tail_exponent, b.tail_exponent));
    }
    check(ok, detail.join("; "))
}

fn random_comb(kind: EnvelopeKind, seed: u64) -> Result<SemicontinuousProfile<f64>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (rng.gen_range(1.0..30.0), rng.gen_range(0.0..6.0));
    let n = rng.gen_range(3..12);
    let marks: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let t = 2f64.powf(-rng.gen_range(0.0..11.0));
            let s = match kind {
                EnvelopeKind::Lower => rng.gen_range(0.2..0.9),
                EnvelopeKind::Upper => rng.gen_range(1.5..3.0),
            };
            (t, s)
        })
        .collect();
    let pts: Vec<f64> = marks.iter().map(|m| m.0).collect();
    let u: ProfileFn<f64> = Arc::new(move |t: f64| {
        let base = 1.0 + 0.5 * (a * t + b).sin().powi(2);
        marks.iter().filter(|m| m.0 == t).fold(base, |acc, m| acc * m.1)
    });
    Ok(SemicontinuousProfile::geometric(1.0, kind, u, 12, 32).map_err(fail("comb"))?.with_points(&pts))
}

fn envelope_suite() -> Outcome {
    let bound = std::f64::consts::PI.powi(2) / 3.0 + 0.01;
    let (mut side, mut gap, mut last_modulus) = (0f64, 0f64, 0f64);
    let mut bad = Vec::new();
    for kind in [EnvelopeKind::Lower, EnvelopeKind::Upper] {
        for seed in 0..50 {
            let u = random_comb(kind, seed)?;
            let mut gaps = Vec::new();
            for budget in [4, 8, 16, 32] {
                let r = build_envelope(&u, budget).map_err(fail("envelope"))?;
                side = side.max(r.side_violation);
                gap = gap.max(r.l1_gap);
                gaps.push(r.l1_gap);
            }
            let r = build_envelope(&u, 12).map_err(fail("envelope"))?;
            let moduli: Vec<f64> = [8, 64, 512, 4096].iter().map(|&s| r.continuity_modulus(s)).collect();
            last_modulus = last_modulus.max(moduli[3]);
            let shrinking = moduli.windows(2).all(|m| m[1] < m[0]) && moduli[3] < 0.05;
            let decreasing = gaps.windows(2).all(|g| g[1] <= g[0] * (1.0 + 1e-12));
            if !shrinking || !decreasing {
                bad.push(format!("{kind:?}/{seed}"));
            }
        }
    }
    check(
        side <= 1e-9 && gap <= bound && bad.is_empty(),
        format!(
            "100 combs, max side violation {side:.1e}, max l1 gap {gap:.3} (bound {bound:.3}), modulus at 4096 subdivisions ≤ {last_modulus:.1e}, failing {bad:?}"
        ),
    )
}

fn cylinder() -> Outcome {
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, c_ref) in [("disk", 0.5), ("strip", 0.25)] {
        let e = zoo_entry::<f64>(name).map_err(fail(name))?;
        let cert = e.known_certificate.clone().ok_or("no certificate")?;
        let chart = build_chart(&e.field, &cert, c_ref, 600, &FlowControls::default()).map_err(fail(name))?;
        let seq = choose_c_sequence(&e.field, &chart).map_err(fail(name))?;
        let trajs = verification_trajectories(&e.field, &chart, 200).map_err(fail(name))?;
        let c = extract_h(&e.field, &chart, &seq, &trajs).map_err(fail(name))?;
        let r = verify_cylinder(&c, 20, 20).map_err(fail(name))?;
        let one_each = c.crossings.len() == 200 && c.crossings.iter().all(|x| x.crossings == 1);
        ok &= one_each && r.single_crossing == 200 && r.level_identity_max_err <= 1e-8 && r.target_gap < r.charted_extent / 100.0;
        detail.push(format!(
            "{name}: {}/200 single crossings, level error {:.1e}, gap {:.4} of extent {:.3}",
            r.single_crossing, r.level_identity_max_err, r.target_gap, r.charted_extent
        ));
    }
    let took = start.elapsed();
    ok &= took < Duration::from_secs(120);
    detail.push(format!("{took:.1?}"));
    check(ok, detail.join("; "))
}

fn oracle() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for p in [2, 3] {
        let f = move |x: f64| x.powi(p);
        let o = oracle_1d(&f, 1.0).map_err(fail("oracle"))?;
        let t_max = o.t[o.t.len() - 1];
        let exact = t_max.powf(1.0 / p as f64);
        let rel = (o.integral() - exact).abs() / exact;
        ok &= rel <= 0.01;
        detail.push(format!("x^{p}: relative error {rel:.1e}"));
    }
    check(ok, detail.join("; "))
}

fn transnormal() -> Outcome {
    let e = zoo_entry::<f64>("transnormal").map_err(fail("transnormal"))?;
    let field = &e.field;
    let radius_at = |dir: &[f64], level: f64| {
        let (mut lo, mut hi) = (0.0, 1.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if field.value(&linalg::scale(dir, mid)) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let inv = |t: f64| (4.0 * t).sqrt().recip();
    let mut worst = 0f64;
    for (c, d) in [(0.01, 0.5), (0.1, 1.0), (1e-4, 0.04), (0.3, 1.9)] {
        let want = quad::adaptive(&inv, c, d, 1e-300, 1e-13);
        for k in 0..8 {
            let a = 0.3 + k as f64 * std::f64::consts::TAU / 8.0;
            let dir = [a.cos(), a.sin()];
            let radial = radius_at(&dir, d) - radius_at(&dir, c);
            let top = linalg::scale(&dir, radius_at(&dir, d));
            let run = flow_to_level(field, &top, c, &FlowControls::default()).map_err(fail("flow"))?;
            worst = worst.max((radial - want).abs()).max((trajectory_length(&run) - want).abs());
        }
    }
    check(worst <= 1e-4, format!("4 level pairs x 8 directions, max distance error {worst:.2e}"))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(Result::ok)
                .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(fail("tempdir"))?;
    let runs: [&[&str]; 6] = [
        &["flow", "--field", "disk"],
        &["retract", "--field", "strip"],
        &["levelset", "--field", "quadratic"],
        &["classify", "--field", "quadratic"],
        &["envelope"],
        &["cylinder", "--field", "disk"],
    ];
    let mut detail = Vec::new();
    let mut ok = true;
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (rep, workers) in ["1", "4"].iter().enumerate() {
            let dir = tmp.path().join(format!("{i}-{rep}"));
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_klcyl"));
            cmd.args(*args).args(["--seed", "7", "--workers", workers, "--out"]).arg(&dir);
            if args[0] == "envelope" {
                cmd.args(["--field", "quadratic"]);
            }
            let status = cmd.output().map_err(fail("spawn"))?.status;
            outputs.push((status.code(), files(&dir)));
        }
        let same = outputs[0] == outputs[1] && !outputs[0].1.is_empty();
        ok &= same;
        detail.push(format!("{} {}", args[0], if same { "identical" } else { "differs" }));
    }
    check(ok, format!("{} (workers 1 vs 4)", detail.join(", ")))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("length bound", length_bound),
        ("clock conversion oracle", theta_formula),
        ("level clock exactness", level_clock),
        ("retraction oracle", retraction),
        ("exponent fit and certificate loop", equivalence_loop),
        ("trichotomy", trichotomy),
        ("envelope suite", envelope_suite),
        ("cylinder single crossing", cylinder),
        ("one-dimensional oracle", oracle),
        ("transnormal distance", transnormal),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({d})", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({d})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
