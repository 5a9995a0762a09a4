use std::io::Write;

use kl_core::flow::integrate_batch;
use serde::Serialize;
use serde_json::json;

use super::{check_points, optional_certificate, parse_clock};
use crate::context::Context;
use crate::output::{Manifest, OutDir};
use crate::Failure;

#[derive(Serialize)]
struct Row {
    file: String,
    #[serde(flatten)]
    trajectory: kl_core::flow::TrajectoryManifest,
    psi_bound: Option<f64>,
    within_bound: Option<bool>,
}

pub fn run(ctx: &Context) -> anyhow::Result<u8> {
    let cfg = &ctx.cfg.flow;
    let clock = parse_clock(cfg.clock.as_deref())?;
    let cert = optional_certificate(ctx)?;
    let mut starts = cfg.starts.clone();
    check_points(ctx, &starts, "start")?;
    let random = cfg.random_starts.unwrap_or(if starts.is_empty() { 5 } else { 0 });
    starts.extend(ctx.random_points(cert.as_ref(), random)?);
    let field = &ctx.entry.field;
    let mut out = OutDir::create(&ctx.out)?;
    let mut rows = Vec::with_capacity(starts.len());
    println!("{:>4} {:>14} {:>14} {:>14}  termination", "i", "f(x0)", "length", "psi(f(x0))");
    for (i, r) in integrate_batch(field, &starts, clock, &ctx.controls).into_iter().enumerate() {
        let t = r.map_err(|e| Failure::usage(format!("start {i}: {e}")))?;
        let file = format!("traj_{i:03}.csv");
        out.with_file(&file, |w| t.write_csv(w))?;
        let m = t.manifest();
        let bound = cert.as_ref().map(|c| c.g(m.f0));
        println!(
            "{i:>4} {:>14.6e} {:>14.6e} {:>14}  {:?}",
            m.f0,
            m.length,
            bound.map_or("-".to_string(), |b| format!("{b:.6e}")),
            m.termination
        );
        rows.push(Row { file, within_bound: bound.map(|b| m.length <= b + 1e-6), psi_bound: bound, trajectory: m });
    }
    out.with_file("lengths.csv", |w| {
        writeln!(w, "file,f0,length,psi_bound")?;
        for r in &rows {
            writeln!(w, "{},{:.17e},{:.17e},{}", r.file, r.trajectory.f0, r.trajectory.length, r.psi_bound.map_or(String::new(), |b| format!("{b:.17e}")))?;
        }
        Ok(())
    })?;
    let violations = rows.iter().filter(|r| r.within_bound == Some(false)).count();
    let mut m = Manifest::new("flow", "length of integral curves bounded by the desingularized value", ctx.name(), ctx.seed);
    m.parameters = json!({ "clock": clock, "starts": starts, "controls": ctx.controls });
    m.summary = json!({ "trajectories": rows, "bound_violations": violations });
    out.manifest(m)?;
    Ok(0)
}
