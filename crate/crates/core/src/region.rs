use rand::Rng;
use serde::Serialize;

use crate::scalar::{lit, Real};

/// Axis-aligned compact box given by center and per-axis half-widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxRegion<T> {
    pub center: Vec<T>,
    pub half_widths: Vec<T>,
}

impl<T: Real> BoxRegion<T> {
    pub fn new(center: Vec<T>, half_widths: Vec<T>) -> Self {
        assert_eq!(center.len(), half_widths.len(), "box dimension mismatch");
        BoxRegion { center, half_widths }
    }

    pub fn from_bounds(lo: &[T], hi: &[T]) -> Self {
        let two = lit::<T>(2.0);
        BoxRegion {
            center: lo.iter().zip(hi).map(|(&a, &b)| (a + b) / two).collect(),
            half_widths: lo.iter().zip(hi).map(|(&a, &b)| (b - a) / two).collect(),
        }
    }

    /// Cube of half-width `r` centered at `c`.
    pub fn cube(c: &[T], r: T) -> Self {
        BoxRegion { center: c.to_vec(), half_widths: vec![r; c.len()] }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lo(&self) -> Vec<T> {
        self.center.iter().zip(&self.half_widths).map(|(&c, &h)| c - h).collect()
    }

    pub fn hi(&self) -> Vec<T> {
        self.center.iter().zip(&self.half_widths).map(|(&c, &h)| c + h).collect()
    }

    pub fn diameter(&self) -> T {
        (self.half_widths.iter().map(|&h| h * h).sum::<T>()).sqrt() * lit(2.0)
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.contains_with_slack(x, T::zero())
    }

    pub fn contains_with_slack(&self, x: &[T], slack: T) -> bool {
        x.iter()
            .zip(&self.center)
            .zip(&self.half_widths)
            .all(|((&xi, &c), &h)| (xi - c).abs() <= h + slack)
    }

    /// Euclidean distance from an interior point to the box frontier.
    pub fn frontier_distance(&self, x: &[T]) -> T {
        x.iter()
            .zip(&self.center)
            .zip(&self.half_widths)
            .map(|((&xi, &c), &h)| h - (xi - c).abs())
            .fold(T::infinity(), T::min)
    }

    pub fn intersect(&self, other: &BoxRegion<T>) -> Option<BoxRegion<T>> {
        let lo: Vec<T> = self.lo().iter().zip(other.lo()).map(|(&a, b)| a.max(b)).collect();
        let hi: Vec<T> = self.hi().iter().zip(other.hi()).map(|(&a, b)| a.min(b)).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a < b) {
            Some(BoxRegion::from_bounds(&lo, &hi))
        } else {
            None
        }
    }

    /// Uniform random point in the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<T> {
        self.center
            .iter()
            .zip(&self.half_widths)
            .map(|(&c, &h)| c + h * lit(rng.gen_range(-1.0..=1.0)))
            .collect()
    }

    /// Lattice with `per_axis` points per axis including the box corners, in
    /// row-major order (last axis fastest).
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<T>> {
        let n = self.dim();
        let per_axis = per_axis.max(2);
        let (lo, hi) = (self.lo(), self.hi());
        let total = per_axis.pow(n as u32);
        let denom = lit::<T>((per_axis - 1) as f64);
        (0..total)
            .map(|mut k| {
                let mut p = vec![T::zero(); n];
                for ax in (0..n).rev() {
                    let i = k % per_axis;
                    k /= per_axis;
                    p[ax] = lo[ax] + (hi[ax] - lo[ax]) * lit::<T>(i as f64) / denom;
                }
                p
            })
            .collect()
    }

    /// Node of a uniform grid with `per_axis` nodes per axis, corners included.
    pub fn grid_node(&self, cell: &[usize], per_axis: usize) -> Vec<T> {
        let lo = self.lo();
        let steps = per_axis.max(2) - 1;
        cell.iter()
            .zip(lo)
            .zip(&self.half_widths)
            .map(|((&i, l), &h)| l + h * lit::<T>(2.0) * lit::<T>(i as f64) / lit(steps as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontier_distance_is_min_slack() {
        let b = BoxRegion::from_bounds(&[0.0, -1.0], &[4.0, 1.0]);
        assert_eq!(b.frontier_distance(&[1.0, 0.5]), 0.5);
        assert_eq!(b.frontier_distance(&[3.5, 0.0]), 0.5);
        assert!(b.contains(&[4.0, 1.0]));
        assert!(!b.contains(&[4.1, 0.0]));
    }
}
