pub mod classify;
pub mod cylinder;
pub mod desing;
pub mod envelope;
pub mod flow;
pub mod levelset;
pub mod retract;

use kl_core::desing::KLCertificate;
use kl_core::flow::Clock;

use crate::context::Context;
use crate::Failure;

pub fn parse_clock(s: Option<&str>) -> anyhow::Result<Clock> {
    match s.unwrap_or("level") {
        "time" => Ok(Clock::Time),
        "arclength" => Ok(Clock::Arclength),
        "level" => Ok(Clock::Level),
        other => Err(Failure::usage(format!("clock '{other}' is not time, arclength or level")).into()),
    }
}

pub fn check_points(ctx: &Context, pts: &[Vec<f64>], what: &str) -> anyhow::Result<()> {
    for (i, p) in pts.iter().enumerate() {
        if p.len() != ctx.dim() {
            return Err(Failure::usage(format!("{what} {i} has {} coordinates, field has {}", p.len(), ctx.dim())).into());
        }
    }
    Ok(())
}

/// Certificate when one is known or explicitly requested.
pub fn optional_certificate(ctx: &Context) -> anyhow::Result<Option<KLCertificate<f64>>> {
    if ctx.cfg.certificate.source.is_some() || ctx.entry.known_certificate.is_some() {
        ctx.certificate().map(Some)
    } else {
        Ok(None)
    }
}
