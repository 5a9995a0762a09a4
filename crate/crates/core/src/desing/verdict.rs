use serde::Serialize;

use crate::quad;
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrability {
    Integrable,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityResult<T> {
    pub verdict: Integrability,
    /// Estimate of `∫_0^rho u`; infinite when divergent, NaN without a fit.
    pub integral: T,
    /// `q` in the tail fit `u ≈ c t^{-q}`.
    pub tail_exponent: T,
    pub tail_coefficient: T,
    pub tail_points: usize,
}

const INTEGRABLE_BELOW: f64 = 0.95;
const DIVERGENT_FROM: f64 = 0.98;
const MIN_TAIL: usize = 8;

fn body_integral<T: Real>(t: &[T], u: &[T], rho: T) -> T {
    let mut body = quad::piecewise_power_law(t, u);
    let (tl, ul) = (t[t.len() - 1], u[u.len() - 1]);
    if rho > tl {
        body = body + ul * (rho - tl);
    }
    body
}

/// Decides whether `∫_0^rho u` is finite from samples on a geometric grid.
///
/// The tail `u ≈ c t^{-q}` is fit by least squares in log–log coordinates over
/// the points within one decade of the smallest `t` (at least 8 of them). The
/// verdict is `Integrable` when `q < 0.95` and the integral changes by at most
/// 5% when every other grid point is dropped, `Divergent` when `q ≥ 0.98`, and
/// `Inconclusive` otherwise.
pub fn integrability_verdict<T: Real>(t: &[T], u: &[T], rho: T) -> IntegrabilityResult<T> {
    let mut pts: Vec<(T, T)> = t
        .iter()
        .zip(u)
        .filter(|(&ti, &ui)| ti > T::zero() && ui > T::zero() && ti.is_finite() && ui.is_finite())
        .filter(|(&ti, _)| ti <= rho * (T::one() + lit(1e-12)))
        .map(|(&a, &b)| (a, b))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let none = IntegrabilityResult {
        verdict: Integrability::Inconclusive,
        integral: T::nan(),
        tail_exponent: T::nan(),
        tail_coefficient: T::nan(),
        tail_points: pts.len(),
    };
    if pts.len() < MIN_TAIL {
        return none;
    }
    let t_min = pts[0].0;
    let k = pts.iter().filter(|p| p.0 <= t_min * lit(10.0)).count().max(MIN_TAIL);
    let (xs, ys): (Vec<T>, Vec<T>) = pts[..k].iter().map(|p| (p.0.ln(), p.1.ln())).unzip();
    let kf = lit::<T>(k as f64);
    let mx = xs.iter().copied().sum::<T>() / kf;
    let my = ys.iter().copied().sum::<T>() / kf;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    if !(sxx > T::zero()) {
        return none;
    }
    let slope = sxy / sxx;
    let q = -slope;
    let c = (my - slope * mx).exp();
    let ts: Vec<T> = pts.iter().map(|p| p.0).collect();
    let us: Vec<T> = pts.iter().map(|p| p.1).collect();
    let mut out = IntegrabilityResult {
        verdict: Integrability::Inconclusive,
        integral: T::nan(),
        tail_exponent: q,
        tail_coefficient: c,
        tail_points: k,
    };
    if q >= lit(DIVERGENT_FROM) {
        out.verdict = Integrability::Divergent;
        out.integral = T::infinity();
        return out;
    }
    let one_q = T::one() - q;
    let tail = c * t_min.powf(one_q) / one_q;
    let full = tail + body_integral(&ts, &us, rho);
    out.integral = full;
    if q < lit(INTEGRABLE_BELOW) {
        let mut idx: Vec<usize> = (0..ts.len()).step_by(2).collect();
        if *idx.last().expect("nonempty") != ts.len() - 1 {
            idx.push(ts.len() - 1);
        }
        let tc: Vec<T> = idx.iter().map(|&i| ts[i]).collect();
        let uc: Vec<T> = idx.iter().map(|&i| us[i]).collect();
        let coarse = tail + body_integral(&tc, &uc, rho);
        if (full - coarse).abs() <= lit::<T>(0.05) * full.abs() {
            out.verdict = Integrability::Integrable;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rho: f64, m: usize) -> Vec<f64> {
        (0..m).map(|j| rho * 0.5f64.powi(j as i32)).collect()
    }

    #[test]
    fn power_law_examples() {
        let t = grid(1.0, 40);
        let half: Vec<f64> = t.iter().map(|x| x.powf(-0.5)).collect();
        let r = integrability_verdict(&t, &half, 1.0);
        assert_eq!(r.verdict, Integrability::Integrable);
        assert!((r.integral - 2.0).abs() < 0.02 * 2.0);
        let inv: Vec<f64> = t.iter().map(|x| 1.0 / x).collect();
        let r = integrability_verdict(&t, &inv, 1.0);
        assert_eq!(r.verdict, Integrability::Divergent);
        assert!((r.tail_exponent - 1.0).abs() < 0.02);
        let ones = vec![1.0; t.len()];
        let r = integrability_verdict(&grid(0.3, 40), &ones, 0.3);
        assert_eq!(r.verdict, Integrability::Integrable);
        assert!((r.integral - 0.3).abs() < 1e-12);
    }

    #[test]
    fn short_grids_are_inconclusive() {
        let t = grid(1.0, 7);
        let u: Vec<f64> = t.iter().map(|x| x.powf(-0.5)).collect();
        assert_eq!(integrability_verdict(&t, &u, 1.0).verdict, Integrability::Inconclusive);
    }

    #[test]
    fn dead_zone_is_inconclusive() {
        let t = grid(1.0, 40);
        let u: Vec<f64> = t.iter().map(|x| x.powf(-0.965)).collect();
        assert_eq!(integrability_verdict(&t, &u, 1.0).verdict, Integrability::Inconclusive);
    }
}
