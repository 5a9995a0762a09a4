use serde::Serialize;

use super::{sample_sublevel, CertificateSource, DesingError, KLCertificate, PsiProfile};
use crate::field::ScalarField;
use crate::region::BoxRegion;
use crate::scalar::{lit, Real};

/// Supporting line `log |∇f| ≥ theta log f + log c` of the sampled cloud.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit<T> {
    pub theta: T,
    pub c: T,
    /// Coefficient of determination of the ordinary least-squares line.
    pub r2: T,
    pub samples: usize,
    /// `Psi(t) = t^{1-theta} / (c (1-theta))`, present when `theta < 1`.
    #[serde(skip)]
    pub certificate: Option<KLCertificate<T>>,
}

const TAU: f64 = 0.01;

fn check_loss<T: Real>(r: &[T], tau: T) -> T {
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite residual"));
    let k = ((tau * lit(sorted.len() as f64)).ceil().to_usize().unwrap_or(1)).clamp(1, sorted.len()) - 1;
    let q = sorted[k];
    r.iter()
        .map(|&v| {
            let e = v - q;
            if e >= T::zero() {
                tau * e
            } else {
                (tau - T::one()) * e
            }
        })
        .sum()
}

/// Low-quantile regression slope by golden-section search on the profiled
/// check loss, which is convex in the slope.
fn quantile_slope<T: Real>(xs: &[T], ys: &[T], tau: T) -> T {
    let loss = |theta: T| {
        let r: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| y - theta * x).collect();
        check_loss(&r, tau)
    };
    let g = lit::<T>((5f64.sqrt() - 1.0) / 2.0);
    let (mut a, mut b) = (lit::<T>(-2.0), lit::<T>(3.0));
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (loss(c), loss(d));
    for _ in 0..120 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = loss(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = loss(d);
        }
        if b - a < lit(1e-12) {
            break;
        }
    }
    (a + b) * lit(0.5)
}

pub fn fit_lojasiewicz_exponent<T: Real>(
    field: &ScalarField<T>,
    k: &BoxRegion<T>,
    rho: T,
    samples: usize,
    seed: u64,
    f_stop: T,
) -> Result<ExponentFit<T>, DesingError> {
    let pts = sample_sublevel(field, k, rho, f_stop, samples, seed);
    let mut xs = Vec::with_capacity(pts.len());
    let mut ys = Vec::with_capacity(pts.len());
    for p in &pts {
        let g = field.grad_norm(p);
        if g > T::zero() && g.is_finite() {
            xs.push(field.value(p).ln());
            ys.push(g.ln());
        }
    }
    if xs.len() < 2 {
        return Err(DesingError::NoSamples);
    }
    let theta = quantile_slope(&xs, &ys, lit(TAU));
    let log_c = xs.iter().zip(&ys).map(|(&x, &y)| y - theta * x).fold(T::infinity(), T::min);
    let c = log_c.exp();

    let n = lit::<T>(xs.len() as f64);
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let syy: T = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let r2 = if sxx > T::zero() && syy > T::zero() { sxy * sxy / (sxx * syy) } else { T::one() };

    let certificate = if theta < T::one() {
        let one = T::one() - theta;
        PsiProfile::power_law((c * one).recip(), one)
            .and_then(|psi| KLCertificate::new(rho, k.clone(), psi, CertificateSource::PowerLawFit))
            .ok()
    } else {
        None
    };
    Ok(ExponentFit { theta, c, r2, samples: xs.len(), certificate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_cloud() {
        let xs: Vec<f64> = (0..50).map(|i| -(i as f64) * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.75 * x + 1.0).collect();
        assert!((quantile_slope(&xs, &ys, 0.01) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn lower_envelope_ignores_cloud_above() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..400 {
            let x = -(i as f64) * 0.05;
            xs.push(x);
            ys.push(0.5 * x + ((i * 7919) % 13) as f64 * 0.1);
        }
        let theta = quantile_slope(&xs, &ys, 0.01);
        assert!((theta - 0.5).abs() < 0.02, "{theta}");
    }
}
