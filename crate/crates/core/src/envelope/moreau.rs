use serde::Serialize;

use crate::scalar::{lit, Real};

/// Moreau envelope `e(x) = min_j u_j + (x - t_j)^2 / (2 lambda)` of samples
/// `(t_j, u_j)`, or the mirrored `max_j u_j - (x - t_j)^2 / (2 lambda)` when
/// `sign` is negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoreauEnvelope<T> {
    pub lambda: T,
    sign: T,
    t: Vec<T>,
    g: Vec<T>,
    /// Indices of the parabolas on the lower hull, left to right.
    active: Vec<usize>,
    /// `breaks[i]` is where `active[i]` hands over to `active[i + 1]`.
    breaks: Vec<T>,
}

impl<T: Real> MoreauEnvelope<T> {
    /// `t` strictly ascending, `lambda > 0`.
    pub(crate) fn from_samples(t: &[T], u: &[T], lambda: T, upper: bool) -> Self {
        let sign = if upper { -T::one() } else { T::one() };
        let g: Vec<T> = u.iter().map(|&v| sign * v).collect();
        let meet = |p: usize, q: usize| (t[p] + t[q]) * lit(0.5) + lambda * (g[q] - g[p]) / (t[q] - t[p]);
        let mut active: Vec<usize> = Vec::with_capacity(t.len());
        let mut breaks: Vec<T> = Vec::with_capacity(t.len());
        for q in 0..t.len() {
            while let Some(&p) = active.last() {
                let s = meet(p, q);
                if breaks.last().is_some_and(|&z| s <= z) {
                    active.pop();
                    breaks.pop();
                } else {
                    breaks.push(s);
                    break;
                }
            }
            active.push(q);
        }
        MoreauEnvelope { lambda, sign, t: t.to_vec(), g, active, breaks }
    }

    pub fn value(&self, x: T) -> T {
        if self.active.is_empty() {
            return T::nan();
        }
        let i = self.breaks.partition_point(|&z| z <= x);
        let j = self.active[i];
        let d = x - self.t[j];
        self.sign * (self.g[j] + d * d / (self.lambda * lit(2.0)))
    }

    /// Direct minimization over all samples.
    pub fn brute_force(&self, x: T) -> T {
        let best = self
            .t
            .iter()
            .zip(&self.g)
            .map(|(&tj, &gj)| gj + (x - tj) * (x - tj) / (self.lambda * lit(2.0)))
            .fold(T::infinity(), T::min);
        self.sign * best
    }

    pub fn nodes(&self) -> &[T] {
        &self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_matches_brute_force() {
        let t: Vec<f64> = (0..200).map(|i| 0.5 + i as f64 * 0.0025).collect();
        let u: Vec<f64> = t.iter().map(|&x| 1.0 + 0.3 * (37.0 * x).sin() + if (x * 400.0).round() as i64 % 7 == 0 { -0.6 } else { 0.0 }).collect();
        for &lam in &[1e-7, 1e-5, 1e-3, 1.0] {
            for upper in [false, true] {
                let e = MoreauEnvelope::from_samples(&t, &u, lam, upper);
                for i in 0..1000 {
                    let x = 0.49 + i as f64 * 0.0005;
                    let (a, b) = (e.value(x), e.brute_force(x));
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "lam={lam} x={x} {a} {b}");
                }
            }
        }
    }
}
