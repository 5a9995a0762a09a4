use std::sync::Arc;

use kl_core::envelope::{build_envelope, integrable_majorant_for_alpha, EnvelopeKind, EnvelopeResult, SemicontinuousProfile};
use kl_core::field::ProfileFn;
use kl_core::levelset::build_profile;
use rand::Rng;
use serde_json::json;

use super::levelset::region_from;
use crate::context::Context;
use crate::output::{Manifest, OutDir};
use crate::Failure;

/// Smooth base `1 + sin²/2` with multiplicative dips or spikes at dyadic-ish marks.
fn comb(ctx: &Context, kind: EnvelopeKind) -> anyhow::Result<SemicontinuousProfile<f64>> {
    let cfg = &ctx.cfg.envelope;
    let mut rng = ctx.rng();
    let (a, b) = (rng.gen_range(1.0..30.0), rng.gen_range(0.0..6.0));
    let octaves = cfg.octaves.unwrap_or(12);
    let r0 = cfg.r0.unwrap_or(1.0);
    let marks: Vec<(f64, f64)> = (0..cfg.marks.unwrap_or(8))
        .map(|_| {
            let t = r0 * 2f64.powf(-rng.gen_range(0.0..(octaves as f64 - 1.0)));
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
    Ok(SemicontinuousProfile::geometric(r0, kind, u, octaves, cfg.per_octave.unwrap_or(32))?.with_points(&pts))
}

fn read_samples(ctx: &Context) -> anyhow::Result<SemicontinuousProfile<f64>> {
    let cfg = &ctx.cfg.envelope;
    let path = cfg.input.as_ref().ok_or_else(|| Failure::usage("envelope.input is required for the csv profile"))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let (mut t, mut u) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        match (cols.first().and_then(|c| c.parse::<f64>().ok()), cols.get(1).and_then(|c| c.parse::<f64>().ok())) {
            (Some(a), Some(b)) => {
                t.push(a);
                u.push(b);
            }
            _ if i == 0 => continue,
            _ => return Err(Failure::usage(format!("{}:{}: expected `t,u`", path.display(), i + 1)).into()),
        }
    }
    let kind = match cfg.kind.as_deref().unwrap_or("lower") {
        "lower" => EnvelopeKind::Lower,
        "upper" => EnvelopeKind::Upper,
        other => return Err(Failure::usage(format!("envelope kind '{other}' is not lower or upper")).into()),
    };
    Ok(SemicontinuousProfile::interpolated(kind, &t, &u, 8)?)
}

pub fn run(ctx: &Context) -> anyhow::Result<u8> {
    let cfg = &ctx.cfg.envelope;
    let budget = ctx.budget.unwrap_or(12);
    let which = cfg.profile.as_deref().unwrap_or("dip-comb");
    let result: EnvelopeResult<f64> = match which {
        "dip-comb" => build_envelope(&comb(ctx, EnvelopeKind::Lower)?, budget)?,
        "spike-comb" => build_envelope(&comb(ctx, EnvelopeKind::Upper)?, budget)?,
        "csv" => build_envelope(&read_samples(ctx)?, budget)?,
        "alpha" => {
            let k = region_from(ctx, ctx.cfg.levelset.region.as_ref())?;
            let rho = ctx.cfg.levelset.rho.unwrap_or(0.5);
            let profile = build_profile(&ctx.entry.field, &k, rho, cfg.levels.unwrap_or(40), 256);
            integrable_majorant_for_alpha(&profile, budget).map_err(|e| Failure::usage(e.to_string()))?.envelope
        }
        other => {
            return Err(Failure::usage(format!("envelope profile '{other}' is not dip-comb, spike-comb, csv or alpha")).into())
        }
    };
    let mut out = OutDir::create(&ctx.out)?;
    out.with_file("envelope.csv", |w| result.write_csv(w))?;
    out.json("trace.json", &result.trace())?;
    let mut m = Manifest::new("envelope", "continuous one-sided envelope of a semicontinuous profile", ctx.name(), ctx.seed);
    m.parameters = json!({ "profile": which, "budget": budget, "kind": result.kind, "r0": result.r0 });
    m.summary = json!({
        "side_violation": result.side_violation,
        "l1_gap": result.l1_gap,
        "stitch_jump": result.stitch_jump,
        "partial": result.partial,
    });
    out.manifest(m)?;
    println!("side violation {:.3e}, l1 gap {:.6e}, stitch jump {:.3e}", result.side_violation, result.l1_gap, result.stitch_jump);
    Ok(0)
}
