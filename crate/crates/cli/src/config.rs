use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use kl_core::flow::FlowControls;
use serde::Deserialize;

/// Run configuration read from TOML. Command-line flags override the
/// top-level keys.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Zoo name or path to a field definition file.
    pub field: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub budget: Option<usize>,
    #[serde(default)]
    pub controls: ControlsConfig,
    #[serde(default)]
    pub certificate: CertificateConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub retract: RetractConfig,
    #[serde(default)]
    pub levelset: LevelsetConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub desing: DesingConfig,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub cylinder: CylinderConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub f_stop: Option<f64>,
    pub gradient_floor: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: Option<usize>,
}

impl ControlsConfig {
    pub fn resolve(&self) -> FlowControls<f64> {
        let d = FlowControls::<f64>::default();
        FlowControls {
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            f_stop: self.f_stop.unwrap_or(d.f_stop),
            gradient_floor: self.gradient_floor.unwrap_or(d.gradient_floor),
            max_step: self.max_step.unwrap_or(d.max_step),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
        }
    }
}

/// Overrides or replaces the field's known certificate.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    /// `known` (default when available) or `fit`.
    pub source: Option<String>,
    pub rho: Option<f64>,
    pub fit_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    pub random_starts: Option<usize>,
    /// `time`, `arclength` or `level`.
    pub clock: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetractConfig {
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    pub random_points: Option<usize>,
}

/// Box `K` as center and half-widths; defaults to the certificate region.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsetConfig {
    #[serde(rename = "box")]
    pub region: Option<BoxConfig>,
    pub rho: Option<f64>,
    pub levels: Option<usize>,
}

/// Synthetic `(alpha, beta) = (a t^p, b t^q)` on a geometric grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub alpha_power: f64,
    pub beta_power: f64,
    #[serde(default = "one")]
    pub alpha_scale: f64,
    #[serde(default = "one")]
    pub beta_scale: f64,
    #[serde(default = "default_synthetic_levels")]
    pub levels: usize,
}

fn one() -> f64 {
    1.0
}

fn default_synthetic_levels() -> usize {
    64
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub point: Option<Vec<f64>>,
    pub half_width: Option<f64>,
    pub rho: Option<f64>,
    pub levels: Option<usize>,
    pub scan_samples: Option<usize>,
    pub fit_samples: Option<usize>,
    pub synthetic: Option<SyntheticProfile>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesingConfig {
    /// `fit`, `build-psi` or `verify`.
    pub mode: Option<String>,
    /// Expression in `t` for `build-psi`.
    pub a: Option<String>,
    pub rho: Option<f64>,
    pub samples: Option<usize>,
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    /// `dip-comb`, `spike-comb`, `csv` or `alpha`.
    pub profile: Option<String>,
    /// `(t, u)` samples for the `csv` profile.
    pub input: Option<PathBuf>,
    /// `lower` or `upper` for the `csv` profile.
    pub kind: Option<String>,
    pub r0: Option<f64>,
    pub marks: Option<usize>,
    pub octaves: Option<usize>,
    pub per_octave: Option<usize>,
    pub levels: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderConfig {
    pub c_ref: Option<f64>,
    pub trajectories: Option<usize>,
    pub grid_q: Option<usize>,
    pub grid_t: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}
