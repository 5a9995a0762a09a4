use std::path::PathBuf;

use anyhow::anyhow;
use kl_core::desing::{fit_lojasiewicz_exponent, KLCertificate};
use kl_core::field::{load_definition, zoo_entry, zoo_names, FieldZooEntry};
use kl_core::flow::{safe_set_test, FlowControls};
use kl_core::BoxRegion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::Failure;

/// Everything a command needs after flags and config are merged.
pub struct Context {
    pub entry: FieldZooEntry<f64>,
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub budget: Option<usize>,
    pub controls: FlowControls<f64>,
}

pub fn load_field(spec: &str) -> anyhow::Result<FieldZooEntry<f64>> {
    let path = std::path::Path::new(spec);
    if spec.ends_with(".toml") || path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{spec}: {e}")))?;
        return load_definition::<f64>(&text).map_err(|e| Failure::usage(format!("{spec}: {e}")).into());
    }
    zoo_entry::<f64>(spec)
        .map_err(|_| Failure::usage(format!("unknown field '{spec}' (zoo: {})", zoo_names().join(", "))).into())
}

impl Context {
    pub fn name(&self) -> &str {
        &self.entry.name
    }

    pub fn dim(&self) -> usize {
        self.entry.field.dim()
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Known certificate unless `certificate.source = "fit"` or none is known.
    pub fn certificate(&self) -> anyhow::Result<KLCertificate<f64>> {
        let c = &self.cfg.certificate;
        let fit = match c.source.as_deref() {
            None => self.entry.known_certificate.is_none(),
            Some("known") => false,
            Some("fit") => true,
            Some(other) => return Err(Failure::usage(format!("certificate source '{other}' is not known or fit")).into()),
        };
        let field = &self.entry.field;
        if fit {
            let rho = c.rho.unwrap_or(1.0);
            let f = fit_lojasiewicz_exponent(
                field,
                field.domain().bounds(),
                rho,
                c.fit_samples.unwrap_or(4000),
                self.seed,
                self.controls.f_stop,
            )?;
            return f.certificate.ok_or_else(|| anyhow!("fitted exponent {} gives no certificate", f.theta));
        }
        let known = self
            .entry
            .known_certificate
            .clone()
            .ok_or_else(|| Failure::usage(format!("field '{}' has no known certificate", self.name())))?;
        match c.rho {
            Some(rho) => Ok(KLCertificate::new(rho, known.region, known.psi, known.source)?),
            None => Ok(known),
        }
    }

    pub fn region(&self, cert: &KLCertificate<f64>) -> BoxRegion<f64> {
        cert.region.intersect(self.entry.field.domain().bounds()).unwrap_or_else(|| cert.region.clone())
    }

    /// Seeded uniform points of `V`, or of `{f > f_stop}` without a certificate.
    pub fn random_points(&self, cert: Option<&KLCertificate<f64>>, count: usize) -> anyhow::Result<Vec<Vec<f64>>> {
        let field = &self.entry.field;
        let region = match cert {
            Some(c) => self.region(c),
            None => field.domain().bounds().clone(),
        };
        let mut rng = self.rng();
        let mut out = Vec::with_capacity(count);
        let mut tries = 0usize;
        while out.len() < count {
            tries += 1;
            if tries > 10_000 * count.max(1) {
                return Err(anyhow!("found only {} of {count} admissible random points", out.len()));
            }
            let x = region.sample(&mut rng);
            let ok = match cert {
                Some(c) => safe_set_test(field, &x, c).in_v,
                None => field.domain().contains(&x),
            };
            if ok && field.value(&x) > self.controls.f_stop * 10.0 {
                out.push(x);
            }
        }
        Ok(out)
    }
}
