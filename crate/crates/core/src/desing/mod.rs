//! Desingularizing functions, integrability of level-set profiles and the
//! good/bad/ugly classification of zero-locus points.

mod certificate;
mod classify;
mod fit;
mod verdict;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::field::ScalarField;
use crate::levelset::project_to_level;
use crate::quad::{self, TailIntegral};
use crate::region::BoxRegion;
use crate::scalar::{lit, Real};

pub use certificate::{CertificateSource, KLCertificate, PsiProfile, PsiTable};
pub use classify::{classify_point, classify_profile, ClassifyOptions, PointClass, Verdict};
pub use fit::{fit_lojasiewicz_exponent, ExponentFit};
pub use verdict::{integrability_verdict, Integrability, IntegrabilityResult};

#[derive(Debug, Error)]
pub enum DesingError {
    #[error("malformed desingularizing function: {0}")]
    MalformedPsi(String),
    #[error("1/a is not integrable near 0; no desingularizing function")]
    Divergent,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no sample with f in (f_stop, rho) was found in U")]
    NoSamples,
}

/// Draws points of `U ∩ box` with `f ∈ (f_stop, rho)`: half uniformly, half by
/// projecting uniform points onto log-uniformly chosen levels.
pub(crate) fn sample_sublevel<T: Real>(
    field: &ScalarField<T>,
    region: &BoxRegion<T>,
    rho: T,
    f_stop: T,
    count: usize,
    seed: u64,
) -> Vec<Vec<T>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Some(u) = region.intersect(field.domain().bounds()) else {
        return Vec::new();
    };
    let top = rho.min(
        u.lattice(if u.dim() <= 2 { 33 } else { 9 }).iter().map(|x| field.value(x)).fold(T::zero(), T::max),
    );
    let decades = (top / f_stop.max(T::min_positive_value())).log10().min(lit(10.0)).max(T::zero());
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 200 * count.max(1) {
        attempts += 1;
        let x = u.sample(&mut rng);
        let candidate = if attempts % 2 == 0 {
            Some(x)
        } else {
            let e: f64 = rng.gen_range(0.0..1.0);
            let t = top * lit::<T>(10.0).powf(-decades * lit(e));
            project_to_level(field, &x, t, &u)
        };
        if let Some(x) = candidate {
            let fx = field.value(&x);
            if fx > f_stop && fx < rho && field.domain().contains(&x) {
                out.push(x);
            }
        }
    }
    out
}

/// Result of checking `Psi'(f) |∇f| ≥ 1` on sampled points.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport<T> {
    pub samples_checked: usize,
    /// `min (Psi'(f(x)) |∇f(x)| - 1)` over the samples.
    pub worst_margin: T,
    pub worst_point: Option<Vec<T>>,
    /// Up to 20 points where the margin is below `-tolerance`.
    pub failures: Vec<(Vec<T>, T)>,
    pub tolerance: T,
    pub passed: bool,
}

pub fn verify_certificate<T: Real>(
    field: &ScalarField<T>,
    cert: &KLCertificate<T>,
    samples: usize,
    seed: u64,
    f_stop: T,
) -> VerificationReport<T> {
    let points = sample_sublevel(field, &cert.region, cert.rho, f_stop, samples, seed);
    let tolerance = lit::<T>(1e-6);
    let mut worst = T::infinity();
    let mut worst_point = None;
    let mut failures = Vec::new();
    for x in &points {
        let fx = field.value(x);
        let m = cert.psi.derivative(fx) * field.grad_norm(x) - T::one();
        if m < worst {
            worst = m;
            worst_point = Some(x.clone());
        }
        if m < -tolerance && failures.len() < 20 {
            failures.push((x.clone(), m));
        }
    }
    VerificationReport {
        samples_checked: points.len(),
        worst_margin: worst,
        worst_point,
        passed: !points.is_empty() && worst >= -tolerance,
        failures,
        tolerance,
    }
}

/// `Psi(t) = ∫_0^t 1/a` tabulated on `rho 2^{-j/8}` over 60 octaves.
pub fn build_psi_from_a<T: Real>(
    a: &(dyn Fn(T) -> T + Sync),
    rho: T,
    region: BoxRegion<T>,
) -> Result<KLCertificate<T>, DesingError> {
    if !(rho > T::zero()) {
        return Err(DesingError::InvalidInput("rho must be positive".into()));
    }
    let inv = |t: T| a(t).recip();
    if let TailIntegral::Divergent = quad::integrate_to_zero(&inv, rho, lit(1e-12)) {
        return Err(DesingError::Divergent);
    }
    let nodes = 480;
    let grid: Vec<T> = (0..=nodes).rev().map(|j| rho * lit::<T>(2.0).powf(lit(-(j as f64) / 8.0))).collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut acc = match quad::integrate_to_zero(&inv, grid[0], lit(1e-14)) {
        TailIntegral::Converged(v) => v,
        TailIntegral::Divergent => return Err(DesingError::Divergent),
    };
    values.push(acc);
    for w in grid.windows(2) {
        acc = acc + quad::adaptive(&inv, w[0], w[1], T::min_positive_value(), lit(1e-13));
        values.push(acc);
    }
    let derivatives: Vec<T> = grid.iter().map(|&t| inv(t)).collect();
    let table = PsiTable::new(grid, values, derivatives)?;
    KLCertificate::new(rho, region, PsiProfile::Tabulated(table), CertificateSource::BuiltFromA)
}

/// Outcome of the obstruction check for a curve approaching the zero locus.
#[derive(Debug, Clone, Serialize)]
pub struct NoCurveReport<T> {
    /// `∫_0^rho 1/b` diverges, so the obstruction applies.
    pub obstruction_applicable: bool,
    pub b_integrability: IntegrabilityResult<T>,
    pub speed_ok: bool,
    /// `|∇f| ≤ b(f)` at every sample.
    pub hypotheses_met: bool,
    /// `min_t (B(f(γ(t))) + (t - t0))`, nonnegative when the chain holds.
    pub worst_chain_slack: T,
    pub chain_holds: bool,
    pub approaches_zero: bool,
    /// The recorded curve contradicts the chain inequality.
    pub contradiction: bool,
    pub message: String,
}

/// Checks `B(f(γ(t))) ≥ -(t - t0)` with `B(u) = ∫_{u0}^u 1/b`, along the recorded
/// `f` column of a curve parametrized by `s`.
pub fn no_curve_diagnostic<T: Real>(
    field: &ScalarField<T>,
    b: &(dyn Fn(T) -> T + Sync),
    curve: &crate::flow::Trajectory<T>,
    rho: T,
) -> NoCurveReport<T> {
    let grid: Vec<T> = (0..=160).rev().map(|j| rho * lit::<T>(2.0).powf(lit(-(j as f64) / 4.0))).collect();
    let inv: Vec<T> = grid.iter().map(|&t| b(t).recip()).collect();
    let b_integrability = integrability_verdict(&grid, &inv, rho);
    let obstruction_applicable = b_integrability.verdict == Integrability::Divergent;
    let tol = lit::<T>(1e-9);
    let speed_ok = curve.samples.windows(2).all(|w| {
        let d = field.tangent_norm(&w[0].point, &crate::linalg::sub(&w[1].point, &w[0].point));
        d <= (w[1].s - w[0].s) * (T::one() + lit(1e-6)) + tol
    });
    let hypotheses_met = curve
        .samples
        .iter()
        .filter(|smp| smp.f > T::zero())
        .all(|smp| field.grad_norm(&smp.point) <= b(smp.f) * (T::one() + lit(1e-9)) + tol);
    let s0 = curve.samples[0].s;
    let u0 = curve.samples[0].f;
    let inv_b = |u: T| b(u).recip();
    let mut worst = T::infinity();
    let mut prev_u = u0;
    let mut big_b = T::zero();
    let mut min_f = u0;
    for smp in &curve.samples {
        let u = smp.f;
        min_f = min_f.min(u);
        if u <= T::zero() {
            worst = T::neg_infinity();
            break;
        }
        big_b = big_b + quad::adaptive(&inv_b, prev_u, u, lit(1e-300), lit(1e-12));
        prev_u = u;
        worst = worst.min(big_b + (smp.s - s0));
    }
    let chain_holds = worst >= -lit::<T>(1e-6);
    let approaches_zero = min_f <= u0 * lit(1e-8);
    let message = if !obstruction_applicable {
        "integral of 1/b is finite near 0: obstruction inapplicable".to_string()
    } else if !speed_ok {
        "curve speed exceeds 1: obstruction hypotheses not met".to_string()
    } else if !hypotheses_met {
        "|grad f| exceeds b(f) on the curve: obstruction hypotheses not met".to_string()
    } else if !chain_holds {
        "B(f(curve)) falls below -(t - t0): contradiction".to_string()
    } else {
        "chain inequality holds".to_string()
    };
    NoCurveReport {
        obstruction_applicable,
        b_integrability,
        speed_ok,
        hypotheses_met,
        worst_chain_slack: worst,
        chain_holds,
        approaches_zero,
        contradiction: obstruction_applicable && !chain_holds,
        message,
    }
}

/// `alpha = (f1d⁻¹)'` on a geometric grid below `f1d(eps)`.
#[derive(Debug, Clone, Serialize)]
pub struct Oracle1d<T> {
    pub t: Vec<T>,
    pub alpha: Vec<T>,
    pub inverse: Vec<T>,
}

impl<T: Real> Oracle1d<T> {
    /// `∫_0^{t_max} alpha` using a power-law tail below the grid.
    pub fn integral(&self) -> T {
        let r = integrability_verdict(&self.t, &self.alpha, self.t[self.t.len() - 1]);
        r.integral
    }
}

pub fn oracle_1d<T: Real>(f1d: &(dyn Fn(T) -> T + Sync), eps: T) -> Result<Oracle1d<T>, DesingError> {
    if !(eps > T::zero()) {
        return Err(DesingError::InvalidInput("eps must be positive".into()));
    }
    if f1d(T::zero()) != T::zero() {
        return Err(DesingError::InvalidInput("f(0) must vanish".into()));
    }
    let probe = 2000;
    let mut prev = T::zero();
    for i in 1..=probe {
        let x = eps * lit(i as f64 / probe as f64);
        let v = f1d(x);
        if !(v > prev) {
            return Err(DesingError::InvalidInput(format!("f is not strictly increasing near x = {x}")));
        }
        prev = v;
    }
    let top = f1d(eps);
    let inverse = |t: T| {
        let (mut lo, mut hi) = (T::zero(), eps);
        for _ in 0..200 {
            let mid = (lo + hi) * lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if f1d(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * lit(0.5)
    };
    let delta = lit::<T>(1e-5);
    let mut t = Vec::new();
    let mut alpha = Vec::new();
    let mut inv = Vec::new();
    for j in (0..=120).rev() {
        let tj = top * lit::<T>(0.99) * lit::<T>(2.0).powf(lit(-(j as f64) / 4.0));
        let d = (inverse(tj * (T::one() + delta)) - inverse(tj * (T::one() - delta))) / (lit::<T>(2.0) * delta * tj);
        t.push(tj);
        alpha.push(d);
        inv.push(inverse(tj));
    }
    Ok(Oracle1d { t, alpha, inverse: inv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::zoo_entry;

    #[test]
    fn verification_examples() {
        let e = zoo_entry::<f64>("quadratic").unwrap();
        let region = e.field.domain().bounds().clone();
        let tight = KLCertificate::new(1.0, region.clone(), PsiProfile::power_law(1.0, 0.5).unwrap(), CertificateSource::User)
            .unwrap();
        let r = verify_certificate(&e.field, &tight, 300, 1, 1e-10);
        assert!(r.passed && r.worst_margin.abs() < 1e-9, "{}", r.worst_margin);
        let sqrt2 = KLCertificate::new(1.0, region.clone(), PsiProfile::power_law(2f64.sqrt(), 0.5).unwrap(), CertificateSource::User)
            .unwrap();
        let r = verify_certificate(&e.field, &sqrt2, 300, 1, 1e-10);
        assert!((r.worst_margin - (2f64.sqrt() - 1.0)).abs() < 1e-9);
        let linear = KLCertificate::new(1.0, region, PsiProfile::identity(), CertificateSource::User).unwrap();
        assert!(!verify_certificate(&e.field, &linear, 300, 1, 1e-10).passed);
    }

    #[test]
    fn psi_from_a_examples() {
        let region = BoxRegion::cube(&[0.0], 1.0);
        let c = build_psi_from_a(&|t: f64| 2.0 * t.sqrt(), 1.0, region.clone()).unwrap();
        for t in [1e-12, 1e-5, 0.3, 0.9] {
            assert!((c.psi.value(t) - t.sqrt()).abs() < 1e-9 * t.sqrt().max(1e-3));
        }
        let c = build_psi_from_a(&|_| 1.0, 0.5, region.clone()).unwrap();
        assert!((c.psi.value(0.25) - 0.25).abs() < 1e-12);
        let p = 3.0;
        let c = build_psi_from_a(&|t: f64| p * t.powf((p - 1.0) / p), 1.0, region.clone()).unwrap();
        assert!((c.psi.value(0.125) - 0.5).abs() < 1e-9);
        assert!(matches!(build_psi_from_a(&|t: f64| t, 1.0, region), Err(DesingError::Divergent)));
    }

    #[test]
    fn oracle_examples() {
        let sq = oracle_1d(&|x: f64| x * x, 0.5).unwrap();
        for (t, a) in sq.t.iter().zip(&sq.alpha) {
            assert!((a - 0.5 / t.sqrt()).abs() < 1e-6 * a);
        }
        let lin = oracle_1d(&|x: f64| x, 1.0).unwrap();
        assert!(lin.alpha.iter().all(|a| (a - 1.0).abs() < 1e-6));
        assert!(oracle_1d(&|x: f64| x * (0.5 - x), 1.0).is_err());
    }
}
