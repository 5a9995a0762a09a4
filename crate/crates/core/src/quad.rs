//! One-dimensional quadrature: Gauss–Kronrod panels, dyadic refinement toward an
//! integrable endpoint singularity at 0, and exact integration of piecewise
//! power-law interpolants of sampled profiles.

use crate::scalar::{lit, Real};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Single 15-point Kronrod panel; returns `(estimate, |K15 - G7|)`.
pub fn gauss_kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = (b - a) * lit(0.5);
    let mid = (a + b) * lit(0.5);
    let fc = f(mid);
    let mut k = fc * lit(WGK[7]);
    let mut g = fc * lit(WG[3]);
    for i in 0..7 {
        let dx = half * lit(XGK[i]);
        let s = f(mid - dx) + f(mid + dx);
        k = k + s * lit(WGK[i]);
        if i % 2 == 1 {
            g = g + s * lit(WG[i / 2]);
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Adaptive bisection on Gauss–Kronrod panels until the error estimate is below
/// `abs_tol + rel_tol * |I|` or the depth limit is hit.
pub fn adaptive<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, abs_tol: T, rel_tol: T) -> T {
    fn rec<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T, whole: T, depth: u32) -> T {
        let (v, e) = gauss_kronrod(f, a, b);
        if depth == 0 || e <= tol || !e.is_finite() {
            return v;
        }
        let m = (a + b) * lit(0.5);
        let h = lit::<T>(0.5);
        rec(f, a, m, tol * h, whole, depth - 1) + rec(f, m, b, tol * h, whole, depth - 1)
    }
    if a == b {
        return T::zero();
    }
    let (first, _) = gauss_kronrod(f, a, b);
    let tol = abs_tol.max(rel_tol * first.abs());
    rec(f, a, b, tol, first, 40)
}

/// Outcome of integrating toward a possibly singular endpoint at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailIntegral<T> {
    Converged(T),
    Divergent,
}

/// Integrates `f` over `(0, t]` by summing dyadic panels `[t 2^{-j-1}, t 2^{-j}]`.
/// Panels of an integrable power-law singularity decay geometrically; if they
/// stop decaying the integral is reported divergent.
pub fn integrate_to_zero<T: Real, F: Fn(T) -> T>(f: &F, t: T, rel_tol: T) -> TailIntegral<T> {
    if t <= T::zero() {
        return TailIntegral::Converged(T::zero());
    }
    let half = lit::<T>(0.5);
    let mut hi = t;
    let mut total = T::zero();
    let mut quiet = 0;
    let mut prev = T::infinity();
    let mut non_decay = 0;
    for _ in 0..1500 {
        let lo = hi * half;
        if lo <= T::min_positive_value() {
            break;
        }
        let (piece, _) = gauss_kronrod(f, lo, hi);
        if !piece.is_finite() {
            return TailIntegral::Divergent;
        }
        total = total + piece;
        if piece.abs() <= rel_tol * total.abs() {
            quiet += 1;
            if quiet >= 3 {
                return TailIntegral::Converged(total);
            }
        } else {
            quiet = 0;
        }
        // panels of a divergent tail (q >= 1) never shrink
        if piece.abs() >= prev.abs() * lit(0.999) {
            non_decay += 1;
            if non_decay >= 200 {
                return TailIntegral::Divergent;
            }
        } else {
            non_decay = 0;
        }
        prev = piece;
        hi = lo;
    }
    TailIntegral::Converged(total)
}

/// Integral over `[t0, t1]` of the power law through `(t0, u0)` and `(t1, u1)`.
/// Both samples must be positive.
pub fn power_law_segment<T: Real>(t0: T, u0: T, t1: T, u1: T) -> T {
    let ratio = t1 / t0;
    let lr = ratio.ln();
    if lr.abs() < lit(1e-14) {
        return (t1 - t0) * (u0 + u1) * lit(0.5);
    }
    let s = (u1 / u0).ln() / lr;
    let sp1 = s + T::one();
    if sp1.abs() < lit(1e-12) {
        u0 * t0 * lr
    } else {
        u0 * t0 / sp1 * (ratio.powf(sp1) - T::one())
    }
}

/// Integral of the piecewise power-law interpolant of positive samples
/// `(t_i, u_i)` with ascending `t`. Exact for pure power laws.
pub fn piecewise_power_law<T: Real>(t: &[T], u: &[T]) -> T {
    t.windows(2)
        .zip(u.windows(2))
        .map(|(tw, uw)| power_law_segment(tw[0], uw[0], tw[1], uw[1]))
        .sum()
}

/// Composite trapezoid rule on an arbitrary ascending grid.
pub fn trapezoid<T: Real>(x: &[T], y: &[T]) -> T {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| (xw[1] - xw[0]) * (yw[0] + yw[1]) * lit(0.5))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_is_exact_on_polynomials() {
        let (v, e) = gauss_kronrod(&|x: f64| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0);
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
        assert!(e < 1e-10);
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let v = adaptive(&|x: f64| (10.0 * x).sin(), 0.0, 3.0, 1e-13, 1e-12);
        let exact = (1.0 - (30.0f64).cos()) / 10.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn integrable_singularity_at_zero() {
        match integrate_to_zero(&|r: f64| 1.0 / (2.0 * r.sqrt()), 0.25, 1e-15) {
            TailIntegral::Converged(v) => assert!((v - 0.5).abs() < 1e-12, "{v}"),
            TailIntegral::Divergent => panic!("reported divergent"),
        }
    }

    #[test]
    fn harmonic_tail_is_divergent() {
        assert_eq!(integrate_to_zero(&|r: f64| 1.0 / r, 1.0, 1e-14), TailIntegral::Divergent);
    }

    #[test]
    fn power_law_segments_are_exact() {
        let t: Vec<f64> = (0..12).map(|j| 0.5 * 0.5f64.powi(11 - j)).collect();
        let u: Vec<f64> = t.iter().map(|x| x.powf(-0.5)).collect();
        let exact = 2.0 * (t[11].sqrt() - t[0].sqrt());
        assert!((piecewise_power_law(&t, &u) - exact).abs() < 1e-12);
    }
}
