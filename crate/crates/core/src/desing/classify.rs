use serde::Serialize;

use super::{
    fit_lojasiewicz_exponent, integrability_verdict, sample_sublevel, DesingError, ExponentFit, Integrability,
    IntegrabilityResult,
};
use crate::field::ScalarField;
use crate::levelset::{build_profile, LevelSetProfile};
use crate::region::BoxRegion;
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `alpha` integrable.
    Good,
    /// `alpha` divergent, `beta` integrable.
    Bad,
    /// `beta` divergent.
    Ugly,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointClass<T> {
    pub point: Vec<T>,
    pub simple_nondegenerate: bool,
    /// Smallest sampled `|∇f|` on `K ∖ {f ≤ f_stop}`.
    pub witness_margin: T,
    pub verdict: Verdict,
    pub alpha: IntegrabilityResult<T>,
    pub beta: IntegrabilityResult<T>,
    pub fitted_exponent: Option<ExponentFit<T>>,
    #[serde(skip)]
    pub profile: Option<LevelSetProfile<T>>,
    pub note: String,
}

impl<T: Real> PointClass<T> {
    pub fn alpha_integral(&self) -> T {
        self.alpha.integral
    }

    pub fn beta_integral(&self) -> T {
        self.beta.integral
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions<T> {
    pub levels: usize,
    pub budget: usize,
    pub scan_samples: usize,
    pub fit_samples: usize,
    pub seed: u64,
    pub f_stop: T,
    /// Relative to the domain diameter.
    pub gradient_floor: T,
}

impl<T: Real> Default for ClassifyOptions<T> {
    fn default() -> Self {
        ClassifyOptions {
            levels: 40,
            budget: 256,
            scan_samples: 2000,
            fit_samples: 2000,
            seed: 0,
            f_stop: lit(1e-10),
            gradient_floor: lit(1e-12),
        }
    }
}

/// Trichotomy from the alpha and beta curves (ascending `t`).
pub fn classify_profile<T: Real>(
    t: &[T],
    alpha: &[T],
    beta: &[T],
    rho: T,
) -> (Verdict, IntegrabilityResult<T>, IntegrabilityResult<T>) {
    let a = integrability_verdict(t, alpha, rho);
    let b = integrability_verdict(t, beta, rho);
    let verdict = match (a.verdict, b.verdict) {
        (Integrability::Integrable, _) => Verdict::Good,
        (_, Integrability::Divergent) => Verdict::Ugly,
        (Integrability::Divergent, Integrability::Integrable) => Verdict::Bad,
        _ => Verdict::Inconclusive,
    };
    (verdict, a, b)
}

/// Classifies a zero-locus point `p` from the level-set profile on `K`.
pub fn classify_point<T: Real>(
    field: &ScalarField<T>,
    p: &[T],
    k: &BoxRegion<T>,
    rho: T,
    opts: &ClassifyOptions<T>,
) -> Result<PointClass<T>, DesingError> {
    if p.len() != field.dim() || k.dim() != field.dim() {
        return Err(DesingError::InvalidInput("dimension mismatch".into()));
    }
    let fp = field.value(p);
    if fp > opts.f_stop {
        return Err(DesingError::InvalidInput(format!("f(p) = {fp} is above f_stop; p is not on the zero locus")));
    }
    let k = k
        .intersect(field.domain().bounds())
        .ok_or_else(|| DesingError::InvalidInput("K does not meet the domain".into()))?;
    let scan = sample_sublevel(field, &k, T::infinity(), opts.f_stop, opts.scan_samples, opts.seed);
    let witness = scan.iter().map(|x| field.grad_norm(x)).fold(T::infinity(), T::min);
    let floor = opts.gradient_floor * field.domain().diameter();
    let simple = !scan.is_empty() && witness > floor;

    let profile = build_profile(field, &k, rho, opts.levels, opts.budget);
    let (t, alpha) = profile.alpha_curve();
    let (_, beta) = profile.beta_curve();
    let (mut verdict, a, b) = classify_profile(&t, &alpha, &beta, rho);
    let mut note = String::new();
    if profile.unreliable {
        verdict = Verdict::Inconclusive;
        note = format!("profile unreliable: {:.0}% of levels empty", 100.0 * profile.empty_fraction());
    } else if !simple {
        verdict = Verdict::Inconclusive;
        note = "gradient vanishes near p off the zero locus: not simple nondegenerate".into();
    }
    let fitted_exponent = if simple && opts.fit_samples > 0 {
        fit_lojasiewicz_exponent(field, &k, rho, opts.fit_samples, opts.seed.wrapping_add(1), opts.f_stop).ok()
    } else {
        None
    };
    Ok(PointClass {
        point: p.to_vec(),
        simple_nondegenerate: simple,
        witness_margin: witness,
        verdict,
        alpha: a,
        beta: b,
        fitted_exponent,
        profile: Some(profile),
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(qa: f64, qb: f64) -> (Verdict, IntegrabilityResult<f64>, IntegrabilityResult<f64>) {
        let t: Vec<f64> = (0..40).rev().map(|j| 0.5 * 0.5f64.powi(j)).collect();
        let a: Vec<f64> = t.iter().map(|x| x.powf(-qa)).collect();
        let b: Vec<f64> = t.iter().map(|x| x.powf(-qb)).collect();
        classify_profile(&t, &a, &b, 0.5)
    }

    #[test]
    fn trichotomy() {
        assert_eq!(synthetic(0.5, 0.5).0, Verdict::Good);
        assert_eq!(synthetic(1.0, 0.5).0, Verdict::Bad);
        let (v, a, b) = synthetic(1.0, 1.0);
        assert_eq!(v, Verdict::Ugly);
        assert!(a.integral.is_infinite() && b.integral.is_infinite());
    }
}
