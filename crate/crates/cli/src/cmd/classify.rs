use std::io::Write;

use kl_core::desing::{classify_point, classify_profile, ClassifyOptions, Verdict};
use kl_core::BoxRegion;
use serde_json::json;

use crate::context::Context;
use crate::output::{fmt, Manifest, OutDir};
use crate::Failure;

fn exit_code(v: Verdict) -> u8 {
    match v {
        Verdict::Good => 0,
        Verdict::Bad => 3,
        Verdict::Ugly => 4,
        Verdict::Inconclusive => 5,
    }
}

/// First lattice zero with a positive lattice neighbour.
fn locate_boundary_point(ctx: &Context) -> anyhow::Result<Vec<f64>> {
    let field = &ctx.entry.field;
    let per = 33usize;
    let nodes = field.domain().bounds().lattice(per);
    let n = ctx.dim();
    let zero = |x: &[f64]| field.value(x) <= ctx.controls.f_stop;
    for (idx, x) in nodes.iter().enumerate() {
        if !zero(x) {
            continue;
        }
        let mut stride = 1;
        for _ in 0..n {
            let i = idx / stride % per;
            let nb = [i.checked_sub(1), (i + 1 < per).then_some(i + 1)];
            if nb.iter().flatten().any(|&j| !zero(&nodes[idx - i * stride + j * stride])) {
                return Ok(x.clone());
            }
            stride *= per;
        }
    }
    Err(Failure::usage("no boundary point of the zero locus found on the lattice; set classify.point").into())
}

pub fn run(ctx: &Context) -> anyhow::Result<u8> {
    let cfg = &ctx.cfg.classify;
    let rho = cfg.rho.unwrap_or(0.5);
    let mut out = OutDir::create(&ctx.out)?;
    let mut m = Manifest::new("classify", "good, bad and ugly boundary points", ctx.name(), ctx.seed);
    if let Some(s) = &cfg.synthetic {
        let t: Vec<f64> = (0..s.levels).rev().map(|j| rho * 2f64.powf(-(j as f64) / 4.0)).collect();
        let alpha: Vec<f64> = t.iter().map(|x| s.alpha_scale * x.powf(s.alpha_power)).collect();
        let beta: Vec<f64> = t.iter().map(|x| s.beta_scale * x.powf(s.beta_power)).collect();
        let (verdict, a, b) = classify_profile(&t, &alpha, &beta, rho);
        out.with_file("profile.csv", |w| {
            writeln!(w, "t,alpha,beta")?;
            for i in 0..t.len() {
                writeln!(w, "{},{},{}", fmt(t[i]), fmt(alpha[i]), fmt(beta[i]))?;
            }
            Ok(())
        })?;
        let report = json!({ "verdict": verdict, "alpha": a, "beta": b });
        out.json("point_class.json", &report)?;
        m.parameters = json!({ "synthetic": { "alpha_power": s.alpha_power, "beta_power": s.beta_power, "levels": s.levels }, "rho": rho });
        m.summary = json!({ "verdict": verdict });
        out.manifest(m)?;
        println!("{verdict:?}");
        return Ok(exit_code(verdict));
    }
    let p = match &cfg.point {
        Some(p) => p.clone(),
        None => locate_boundary_point(ctx)?,
    };
    let half = cfg.half_width.unwrap_or_else(|| {
        let b = ctx.entry.field.domain().bounds();
        b.half_widths.iter().cloned().fold(f64::INFINITY, f64::min) * 0.5
    });
    let k = BoxRegion::cube(&p, half);
    let d = ClassifyOptions::<f64>::default();
    let opts = ClassifyOptions {
        levels: cfg.levels.unwrap_or(d.levels),
        budget: ctx.budget.unwrap_or(d.budget),
        scan_samples: cfg.scan_samples.unwrap_or(d.scan_samples),
        fit_samples: cfg.fit_samples.unwrap_or(d.fit_samples),
        seed: ctx.seed,
        f_stop: ctx.controls.f_stop,
        gradient_floor: ctx.controls.gradient_floor,
    };
    let mut pc = if opts.budget == 0 {
        None
    } else {
        Some(classify_point(&ctx.entry.field, &p, &k, rho, &opts).map_err(|e| Failure::usage(e.to_string()))?)
    };
    let verdict = pc.as_ref().map_or(Verdict::Inconclusive, |c| c.verdict);
    if let Some(c) = pc.as_mut() {
        if let Some(profile) = c.profile.take() {
            out.with_file("profile.csv", |w| profile.write_csv(w))?;
        }
        out.json("point_class.json", c)?;
    } else {
        out.json("point_class.json", &json!({ "point": p, "verdict": verdict, "note": "budget is zero" }))?;
    }
    m.parameters = json!({
        "point": p, "half_width": half, "rho": rho, "levels": opts.levels, "budget": opts.budget,
        "scan_samples": opts.scan_samples, "fit_samples": opts.fit_samples,
    });
    m.summary = json!({ "verdict": verdict });
    out.manifest(m)?;
    println!("{verdict:?}");
    Ok(exit_code(verdict))
}
