use std::io::Write;

use kl_core::desing::{build_psi_from_a, fit_lojasiewicz_exponent, verify_certificate, KLCertificate};
use kl_core::field::expr;
use serde_json::json;

use crate::context::Context;
use crate::output::{fmt, Manifest, OutDir};
use crate::Failure;

fn write_psi(out: &mut OutDir, cert: &KLCertificate<f64>, nodes: usize) -> anyhow::Result<()> {
    let table = cert.psi.table(cert.rho, nodes);
    out.with_file("psi.csv", |w| {
        writeln!(w, "t,psi,dpsi")?;
        for (t, v, d) in &table {
            writeln!(w, "{},{},{}", fmt(*t), fmt(*v), fmt(*d))?;
        }
        Ok(())
    })
}

pub fn run(ctx: &Context) -> anyhow::Result<u8> {
    let cfg = &ctx.cfg.desing;
    let mode = cfg.mode.as_deref().unwrap_or("fit");
    let field = &ctx.entry.field;
    let samples = cfg.samples.unwrap_or(4000);
    let nodes = cfg.nodes.unwrap_or(64);
    let mut out = OutDir::create(&ctx.out)?;
    let mut m = Manifest::new("desing", "desingularizing function of the gradient inequality", ctx.name(), ctx.seed);
    let cert = match mode {
        "fit" => {
            let rho = cfg.rho.unwrap_or(0.5);
            let region = field.domain().bounds();
            let fit = fit_lojasiewicz_exponent(field, region, rho, samples, ctx.seed, ctx.controls.f_stop)
                .map_err(|e| Failure::usage(e.to_string()))?;
            out.json("fit.json", &fit)?;
            println!("theta = {:.6}, c = {:.6e}, r2 = {:.4}", fit.theta, fit.c, fit.r2);
            m.parameters = json!({ "mode": mode, "rho": rho, "samples": samples });
            fit.certificate
        }
        "build-psi" => {
            let src = cfg.a.as_deref().ok_or_else(|| Failure::usage("desing.a is required for build-psi"))?;
            let a = expr::parse(src, &["t"]).map_err(|e| Failure::usage(format!("desing.a: {e}")))?;
            let rho = cfg.rho.unwrap_or(0.5);
            let region = ctx
                .entry
                .known_certificate
                .as_ref()
                .map_or_else(|| field.domain().bounds().clone(), |c| c.region.clone());
            let cert = build_psi_from_a(&|t: f64| a.eval(&[t]), rho, region).map_err(|e| Failure::usage(e.to_string()))?;
            m.parameters = json!({ "mode": mode, "a": src, "rho": rho, "samples": samples });
            Some(cert)
        }
        "verify" => {
            m.parameters = json!({ "mode": mode, "samples": samples });
            Some(ctx.certificate()?)
        }
        other => return Err(Failure::usage(format!("desing mode '{other}' is not fit, build-psi or verify")).into()),
    };
    let mut summary = json!({ "certificate": cert.is_some() });
    if let Some(cert) = cert {
        write_psi(&mut out, &cert, nodes)?;
        let report = verify_certificate(field, &cert, samples, ctx.seed, ctx.controls.f_stop);
        out.json("verify.json", &report)?;
        println!("worst margin {:.6e} over {} samples: {}", report.worst_margin, report.samples_checked, if report.passed { "pass" } else { "fail" });
        summary = json!({ "certificate": true, "rho": cert.rho, "source": cert.source, "worst_margin": report.worst_margin, "passed": report.passed });
    }
    m.summary = summary;
    out.manifest(m)?;
    Ok(0)
}
