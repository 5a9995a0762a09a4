use std::io::Write;

use kl_core::flow::{limit_curve, safe_set_test};
use serde_json::json;

use super::check_points;
use crate::context::Context;
use crate::output::{axis_names, fmt, row, Manifest, OutDir};
use crate::Failure;

pub fn run(ctx: &Context) -> anyhow::Result<u8> {
    use rayon::prelude::*;
    let cfg = &ctx.cfg.retract;
    let cert = ctx.certificate()?;
    let mut points = cfg.points.clone();
    check_points(ctx, &points, "point")?;
    let random = cfg.random_points.unwrap_or(if points.is_empty() { 20 } else { 0 });
    points.extend(ctx.random_points(Some(&cert), random)?);
    let field = &ctx.entry.field;
    let results: Vec<_> = points.par_iter().map(|p| limit_curve(field, p, &cert, &ctx.controls)).collect();
    let n = ctx.dim();
    let mut rows = Vec::with_capacity(points.len());
    for (i, (p, r)) in points.iter().zip(results).enumerate() {
        let t = r.map_err(|e| {
            let q = safe_set_test(field, p, &cert);
            Failure::usage(format!("point {i} ({p:?}, in V: {}): {e}", q.in_v))
        })?;
        let limit = t.limit_point.clone().unwrap_or_else(|| t.end().to_vec());
        rows.push((p.clone(), limit, t.length(), cert.g(field.value(p))));
    }
    let mut out = OutDir::create(&ctx.out)?;
    out.with_file("retract.csv", |w| {
        let mut h = axis_names("x", n);
        h.extend(axis_names("r", n));
        h.push("length".into());
        h.push("psi_bound".into());
        writeln!(w, "{}", h.join(","))?;
        for (p, r, l, b) in &rows {
            writeln!(w, "{},{},{},{}", row(p), row(r), fmt(*l), fmt(*b))?;
        }
        Ok(())
    })?;
    let violations = rows.iter().filter(|r| r.2 > r.3 + 1e-6).count();
    let mut m = Manifest::new("retract", "limit retraction of the safe set onto the zero locus", ctx.name(), ctx.seed);
    m.parameters = json!({ "points": points.len(), "rho": cert.rho, "controls": ctx.controls });
    m.summary = json!({ "retracted": rows.len(), "length_bound_violations": violations });
    out.manifest(m)?;
    Ok(0)
}
