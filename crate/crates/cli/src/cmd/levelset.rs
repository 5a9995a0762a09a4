use kl_core::levelset::build_profile;
use kl_core::BoxRegion;
use serde_json::json;

use crate::context::Context;
use crate::output::{Manifest, OutDir};
use crate::Failure;

pub fn region_from(ctx: &Context, cfg: Option<&crate::config::BoxConfig>) -> anyhow::Result<BoxRegion<f64>> {
    match cfg {
        Some(b) => {
            if b.center.len() != ctx.dim() || b.half_widths.len() != ctx.dim() {
                return Err(Failure::usage(format!("box must have {} coordinates", ctx.dim())).into());
            }
            Ok(BoxRegion::new(b.center.clone(), b.half_widths.clone()))
        }
        None => Ok(ctx.entry.field.domain().bounds().clone()),
    }
}

pub fn run(ctx: &Context) -> anyhow::Result<u8> {
    let cfg = &ctx.cfg.levelset;
    let k = region_from(ctx, cfg.region.as_ref())?;
    let rho = cfg.rho.unwrap_or(0.5);
    let levels = cfg.levels.unwrap_or(40);
    let budget = ctx.budget.unwrap_or(256);
    let profile = build_profile(&ctx.entry.field, &k, rho, levels, budget);
    let mut out = OutDir::create(&ctx.out)?;
    out.with_file("profile.csv", |w| profile.write_csv(w))?;
    let mut m = Manifest::new("levelset", "gradient extrema on the level sets", ctx.name(), ctx.seed);
    m.parameters = json!({ "box": k, "rho": rho, "levels": levels, "budget": budget });
    m.summary = json!({
        "unreliable": profile.unreliable,
        "empty_fraction": profile.empty_fraction(),
        "nonempty_levels": profile.levels.iter().filter(|l| !l.empty).count(),
    });
    out.manifest(m)?;
    println!("{} levels, {:.0}% empty{}", levels, 100.0 * profile.empty_fraction(), if profile.unreliable { ", unreliable" } else { "" });
    Ok(0)
}
