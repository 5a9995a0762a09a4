use serde::Serialize;

use super::{integrate, Clock, FlowControls, FlowError, Sample, Termination, Trajectory};
use crate::desing::KLCertificate;
use crate::field::ScalarField;
use crate::linalg;
use crate::scalar::{lit, to_f64, Real};

/// Membership test for `V = {f < rho, d(x, ∂M) > Psi(f(x))}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafeSetQuery<T> {
    pub point: Vec<T>,
    pub f_value: T,
    pub g_value: T,
    pub boundary_margin: T,
    pub in_v: bool,
}

pub fn safe_set_test<T: Real>(field: &ScalarField<T>, x0: &[T], cert: &KLCertificate<T>) -> SafeSetQuery<T> {
    let f_value = field.value(x0);
    let g_value = cert.g(f_value);
    let boundary_margin = if field.domain().contains(x0) { field.domain().boundary_distance(x0) } else { T::zero() };
    let in_v = f_value < cert.rho && boundary_margin > g_value;
    SafeSetQuery { point: x0.to_vec(), f_value, g_value, boundary_margin, in_v }
}

/// Total (metric) arc length of a trajectory.
pub fn trajectory_length<T: Real>(traj: &Trajectory<T>) -> T {
    traj.length()
}

struct Limit<T> {
    point: Vec<T>,
    /// Arc length up to the last integrated sample.
    arclen: T,
    last: Vec<T>,
}

fn limit_detail<T: Real>(
    field: &ScalarField<T>,
    x0: &[T],
    cert: &KLCertificate<T>,
    c: &FlowControls<T>,
) -> Result<Limit<T>, FlowError> {
    let f0 = field.value(x0);
    if f0 <= c.f_stop {
        return Ok(Limit { point: x0.to_vec(), arclen: T::zero(), last: x0.to_vec() });
    }
    let q = safe_set_test(field, x0, cert);
    if !q.in_v {
        return Err(FlowError::NotInSafeSet {
            g: to_f64(q.g_value),
            margin: to_f64(q.boundary_margin),
            f: to_f64(q.f_value),
        });
    }
    let last = c.f_stop.min(f0 * lit(1e-5));
    let stops = [last * lit(1e4), last * lit(1e2), last];
    let mut x = x0.to_vec();
    let mut arclen = T::zero();
    let mut ends: Vec<Vec<T>> = Vec::new();
    for &fs in &stops {
        if field.value(&x) <= fs {
            continue;
        }
        let t = integrate(field, &x, Clock::Level, &c.with_f_stop(fs))?;
        match t.termination {
            Termination::ReachedZeroLocus => {}
            Termination::GradientVanished => return Err(FlowError::NotSimpleNondegenerate),
            other => return Err(FlowError::Incomplete(other)),
        }
        arclen = arclen + t.length();
        x = t.end().to_vec();
        ends.push(x.clone());
    }
    let point = match ends.as_slice() {
        [.., a, b, c3] => {
            let d1 = linalg::sub(b, a);
            let d2 = linalg::sub(c3, b);
            let (n1, n2) = (linalg::norm(&d1), linalg::norm(&d2));
            let r = n2 / n1;
            if n1 > T::zero() && r < lit(0.9) && r.is_finite() {
                linalg::axpy(c3, r / (T::one() - r), &d2)
            } else {
                c3.clone()
            }
        }
        _ => x.clone(),
    };
    Ok(Limit { point, arclen, last: x })
}

/// Limit point `lim α_x(t)` of the descending trajectory from `x0`, obtained by
/// stopping at `m · {1e4, 1e2, 1}`, `m = min(f_stop, 1e-5 f(x0))`, and
/// extrapolating the endpoints.
pub fn retract<T: Real>(field: &ScalarField<T>, x0: &[T], cert: &KLCertificate<T>) -> Result<Vec<T>, FlowError> {
    retract_with(field, x0, cert, &FlowControls::default())
}

pub fn retract_with<T: Real>(
    field: &ScalarField<T>,
    x0: &[T],
    cert: &KLCertificate<T>,
    controls: &FlowControls<T>,
) -> Result<Vec<T>, FlowError> {
    limit_detail(field, x0, cert, controls).map(|l| l.point)
}

/// Total forward length `∫_0^{f(x)} dr / |∇f|` along the level clock, including
/// the short chord from the last sample to the extrapolated limit.
pub fn length_function<T: Real>(
    field: &ScalarField<T>,
    points: &[Vec<T>],
    cert: &KLCertificate<T>,
    controls: &FlowControls<T>,
) -> Result<Vec<T>, FlowError> {
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|x| {
            let l = limit_detail(field, x, cert, controls)?;
            Ok(l.arclen + field.tangent_norm(&l.last, &linalg::sub(&l.point, &l.last)))
        })
        .collect()
}

/// Arc-length parametrized trajectory from `x0` with its limit point appended.
pub fn limit_curve<T: Real>(
    field: &ScalarField<T>,
    x0: &[T],
    cert: &KLCertificate<T>,
    controls: &FlowControls<T>,
) -> Result<Trajectory<T>, FlowError> {
    let limit = retract_with(field, x0, cert, controls)?;
    let mut t = integrate(field, x0, Clock::Arclength, controls)?;
    if t.termination != Termination::ReachedZeroLocus {
        return Err(FlowError::Incomplete(t.termination));
    }
    let last = t.last().clone();
    let chord = field.tangent_norm(&last.point, &linalg::sub(&limit, &last.point));
    t.samples.push(Sample {
        s: last.s + chord,
        point: limit.clone(),
        f: field.value(&limit),
        arclen: last.arclen + chord,
        time: last.time,
        level: t.f0,
        grad_norm: T::zero(),
    });
    t.limit_point = Some(limit);
    Ok(t)
}
