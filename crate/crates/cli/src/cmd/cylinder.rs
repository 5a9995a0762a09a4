use kl_core::cylinder::{
    build_chart, choose_c_sequence, extract_h, verification_trajectories, verify_cylinder, write_grid_csv, write_h_csv,
    write_obj, CylinderError,
};
use serde_json::json;

use crate::context::Context;
use crate::output::{Manifest, OutDir};
use crate::Failure;

fn failure(e: CylinderError) -> Failure {
    match e {
        CylinderError::CrossingViolation { trajectory, crossings } => Failure {
            code: 6,
            message: format!("single-crossing violation on trajectory {trajectory} ({crossings} sign changes)"),
        },
        other => Failure::usage(other.to_string()),
    }
}

pub fn run(ctx: &Context) -> anyhow::Result<u8> {
    let cfg = &ctx.cfg.cylinder;
    let n = ctx.dim();
    if !(n == 2 || n == 3) {
        return Err(failure(CylinderError::Unsupported(n)).into());
    }
    let field = &ctx.entry.field;
    let cert = ctx.certificate()?;
    let c_ref = cfg.c_ref.unwrap_or(if cert.rho > 1.0 { 0.5 } else { cert.rho / 2.0 });
    let budget = ctx.budget.unwrap_or(600);
    let count = cfg.trajectories.unwrap_or(200);
    let (nq, nt) = (cfg.grid_q.unwrap_or(20), cfg.grid_t.unwrap_or(20));
    let chart = build_chart(field, &cert, c_ref, budget, &ctx.controls).map_err(failure)?;
    let seq = choose_c_sequence(field, &chart).map_err(failure)?;
    let trajs = verification_trajectories(field, &chart, count).map_err(failure)?;
    let cyl = extract_h(field, &chart, &seq, &trajs).map_err(failure)?;
    let report = verify_cylinder(&cyl, nq, nt).map_err(failure)?;

    let mut out = OutDir::create(&ctx.out)?;
    out.with_file("h.csv", |w| write_h_csv(&cyl, w))?;
    out.with_file("grid.csv", |w| write_grid_csv(&report, w))?;
    if n == 3 {
        out.with_file("h.obj", |w| write_obj(&cyl, None, w))?;
        out.with_file("grid.obj", |w| write_obj(&cyl, Some(&report), w))?;
    }
    out.json("chart.json", &cyl.manifest())?;
    out.json("report.json", &report)?;
    let mut m = Manifest::new("cylinder", "transversal hypersurface and mapping cylinder coordinates", ctx.name(), ctx.seed);
    m.parameters = json!({
        "c_ref": c_ref, "budget": budget, "trajectories": count, "grid_q": nq, "grid_t": nt,
        "rho": cert.rho, "controls": ctx.controls,
    });
    m.summary = json!({
        "c_sequence": cyl.c_sequence,
        "buckets": chart.buckets.len(),
        "components": chart.components.len(),
        "h_points": cyl.h_points.len(),
        "single_crossing": report.single_crossing,
        "level_identity_max_err": report.level_identity_max_err,
        "retract_max_err": report.retract_max_err,
        "injective": report.injective,
        "covered": report.covered,
    });
    out.manifest(m)?;
    println!(
        "{} trajectories, {} single crossings, level identity {:.2e}, retract {:.2e}, target gap {:.3e} of extent {:.3e}",
        report.trajectories,
        report.single_crossing,
        report.level_identity_max_err,
        report.retract_max_err,
        report.target_gap,
        report.charted_extent
    );
    Ok(0)
}
