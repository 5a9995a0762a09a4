//! Sampling of `f⁻¹(t) ∩ K` and per-level gradient extrema.
//!
//! Seeds come from a `32ⁿ` cell grid on `K` visited in bit-reversed Morton
//! order, are Newton-projected onto the level, and are then spread by
//! tangential predictor–corrector steps. The point sequence does not depend on
//! the budget, so a larger budget always yields a superset of samples.

use std::collections::HashSet;
use std::io::{self, Write};

use serde::Serialize;

use crate::field::ScalarField;
use crate::linalg;
use crate::region::BoxRegion;
use crate::scalar::{achievable, lit, Real};

/// Points found on one level, with seed statistics.
#[derive(Debug, Clone)]
pub struct LevelSample<T> {
    pub points: Vec<Vec<T>>,
    pub seeds_tried: usize,
    pub seeds_converged: usize,
    pub diagnostic: Option<String>,
}

impl<T> LevelSample<T> {
    pub fn coverage(&self) -> f64 {
        if self.seeds_tried == 0 {
            0.0
        } else {
            self.seeds_converged as f64 / self.seeds_tried as f64
        }
    }
}

fn seed_bits(n: usize) -> usize {
    if n <= 3 {
        5
    } else {
        (15 / n).max(2)
    }
}

/// Cell of the `k`-th seed in bit-reversed Morton order.
fn seed_cell(k: usize, n: usize, bits: usize) -> Vec<usize> {
    let total = bits * n;
    let mut code = 0usize;
    for b in 0..total {
        if k >> b & 1 == 1 {
            code |= 1 << (total - 1 - b);
        }
    }
    let mut cell = vec![0usize; n];
    for b in 0..total {
        if code >> b & 1 == 1 {
            cell[b % n] |= 1 << (b / n);
        }
    }
    cell
}

/// Newton projection of `x` onto `f = t` along the differential.
pub fn project_to_level<T: Real>(field: &ScalarField<T>, x: &[T], t: T, k: &BoxRegion<T>) -> Option<Vec<T>> {
    let tol = achievable(lit::<T>(1e-9)) * t;
    let cap = k.diameter() * lit(0.25);
    let mut x = x.to_vec();
    for _ in 0..200 {
        let r = field.value(&x) - t;
        if !r.is_finite() {
            return None;
        }
        if r.abs() <= tol {
            return k.contains(&x).then_some(x);
        }
        let d = field.differential(&x);
        let d2 = linalg::dot(&d, &d);
        if !(d2 > T::zero()) || !d2.is_finite() {
            return None;
        }
        let mut step = linalg::scale(&d, -r / d2);
        let len = linalg::norm(&step);
        if len > cap {
            step = linalg::scale(&step, cap / len);
        }
        x = linalg::axpy(&x, T::one(), &step);
        if !k.contains_with_slack(&x, cap) {
            return None;
        }
    }
    None
}

fn tangent_directions<T: Real>(d: &[T]) -> Vec<Vec<T>> {
    let n = d.len();
    let dn = linalg::norm(d);
    if !(dn > T::zero()) {
        return Vec::new();
    }
    let u = linalg::scale(d, dn.recip());
    let mut basis: Vec<Vec<T>> = Vec::new();
    for axis in 0..n {
        let mut e = vec![T::zero(); n];
        e[axis] = T::one();
        let mut v = linalg::axpy(&e, -u[axis], &u);
        for b in &basis {
            let c = linalg::dot(&v, b);
            v = linalg::axpy(&v, -c, b);
        }
        let vn = linalg::norm(&v);
        if vn > lit(1e-6) {
            basis.push(linalg::scale(&v, vn.recip()));
        }
        if basis.len() == n - 1 {
            break;
        }
    }
    let mut dirs = Vec::with_capacity(2 * basis.len());
    for b in basis {
        dirs.push(linalg::scale(&b, -T::one()));
        dirs.push(b);
    }
    dirs
}

struct Dedup<T> {
    res: T,
    seen: HashSet<Vec<i64>>,
}

impl<T: Real> Dedup<T> {
    fn insert(&mut self, x: &[T]) -> bool {
        let key = x.iter().map(|&v| (v / self.res).floor().to_i64().unwrap_or(i64::MAX)).collect();
        self.seen.insert(key)
    }
}

/// Up to `budget` points with `|f - t| ≤ 1e-9 t` inside `K`.
pub fn sample_level<T: Real>(field: &ScalarField<T>, t: T, k: &BoxRegion<T>, budget: usize) -> LevelSample<T> {
    let n = k.dim();
    let mut out = LevelSample { points: Vec::new(), seeds_tried: 0, seeds_converged: 0, diagnostic: None };
    if budget == 0 {
        out.diagnostic = Some("budget is zero".into());
        return out;
    }
    let coarse = k.lattice(if n <= 2 { 33 } else { 9 }).iter().map(|x| field.value(x)).fold(T::zero(), T::max);
    if t >= coarse {
        out.diagnostic = Some(format!("level {t} is not below the estimated max {coarse} of f on K"));
        return out;
    }
    let bits = seed_bits(n);
    let per_axis = 1usize << bits;
    let seeds = per_axis.pow(n as u32);
    let mut dedup = Dedup { res: k.diameter() * lit(1e-4), seen: HashSet::new() };
    for s in 0..seeds {
        if out.points.len() >= budget {
            break;
        }
        out.seeds_tried += 1;
        let x = k.grid_node(&seed_cell(s, n, bits), per_axis);
        if let Some(p) = project_to_level(field, &x, t, k) {
            out.seeds_converged += 1;
            if dedup.insert(&p) {
                out.points.push(p);
            }
        }
    }
    if out.points.is_empty() {
        out.diagnostic = Some(format!("no seed converged to level {t}"));
        return out;
    }
    let delta = k.diameter() * lit(1e-3);
    let mut idx = 0;
    while out.points.len() < budget && idx < out.points.len() {
        let base = out.points[idx].clone();
        idx += 1;
        for dir in tangent_directions(&field.differential(&base)) {
            if out.points.len() >= budget {
                break;
            }
            let pred = linalg::axpy(&base, delta, &dir);
            if let Some(p) = project_to_level(field, &pred, t, k) {
                if dedup.insert(&p) {
                    out.points.push(p);
                }
            }
        }
    }
    out
}

/// `(min |∇f|, max |∇f|)` over the points. The sampled minimum bounds the true
/// infimum from above and the sampled maximum bounds the supremum from below.
pub fn gradient_extrema<T: Real>(field: &ScalarField<T>, points: &[Vec<T>]) -> Option<(T, T)> {
    if points.is_empty() {
        return None;
    }
    let mut lo = T::infinity();
    let mut hi = T::zero();
    for p in points {
        let g = field.grad_norm(p);
        lo = lo.min(g);
        hi = hi.max(g);
    }
    Some((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats<T> {
    pub t: T,
    pub n_samples: usize,
    pub min_grad: T,
    pub max_grad: T,
    /// `1 / min |∇f|`
    pub alpha: T,
    /// `1 / max |∇f|`
    pub beta: T,
    pub coverage: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSetProfile<T> {
    pub k: BoxRegion<T>,
    pub rho: T,
    /// Decreasing levels `rho 2^{-j}`.
    pub levels: Vec<LevelStats<T>>,
    pub unreliable: bool,
}

impl<T: Real> LevelSetProfile<T> {
    /// Nonempty levels as ascending `(t, alpha)` pairs.
    pub fn alpha_curve(&self) -> (Vec<T>, Vec<T>) {
        self.curve(|l| l.alpha)
    }

    pub fn beta_curve(&self) -> (Vec<T>, Vec<T>) {
        self.curve(|l| l.beta)
    }

    fn curve(&self, pick: impl Fn(&LevelStats<T>) -> T) -> (Vec<T>, Vec<T>) {
        let mut t = Vec::new();
        let mut u = Vec::new();
        for l in self.levels.iter().rev().filter(|l| !l.empty) {
            t.push(l.t);
            u.push(pick(l));
        }
        (t, u)
    }

    pub fn empty_fraction(&self) -> f64 {
        if self.levels.is_empty() {
            return 1.0;
        }
        self.levels.iter().filter(|l| l.empty).count() as f64 / self.levels.len() as f64
    }

    /// CSV with columns `t, n_samples, min_grad, max_grad, alpha, beta, coverage`.
    /// Empty levels are written with `nan` entries.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,n_samples,min_grad,max_grad,alpha,beta,coverage")?;
        for l in &self.levels {
            if l.empty {
                writeln!(w, "{},0,nan,nan,nan,nan,{}", l.t, l.coverage)?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    l.t, l.n_samples, l.min_grad, l.max_grad, l.alpha, l.beta, l.coverage
                )?;
            }
        }
        Ok(())
    }
}

/// Per-level statistics on `t_j = rho 2^{-j}`, `j = 0..m`. Flagged unreliable
/// when more than 20% of the levels are empty.
pub fn build_profile<T: Real>(
    field: &ScalarField<T>,
    k: &BoxRegion<T>,
    rho: T,
    m: usize,
    budget: usize,
) -> LevelSetProfile<T> {
    use rayon::prelude::*;
    let levels: Vec<LevelStats<T>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let t = rho * lit::<T>(0.5).powi(j as i32);
            let s = sample_level(field, t, k, budget);
            match gradient_extrema(field, &s.points) {
                Some((lo, hi)) if lo > T::zero() => LevelStats {
                    t,
                    n_samples: s.points.len(),
                    min_grad: lo,
                    max_grad: hi,
                    alpha: lo.recip(),
                    beta: hi.recip(),
                    coverage: s.coverage(),
                    empty: false,
                },
                _ => LevelStats {
                    t,
                    n_samples: 0,
                    min_grad: T::nan(),
                    max_grad: T::nan(),
                    alpha: T::nan(),
                    beta: T::nan(),
                    coverage: s.coverage(),
                    empty: true,
                },
            }
        })
        .collect();
    let mut p = LevelSetProfile { k: k.clone(), rho, levels, unreliable: false };
    p.unreliable = m == 0 || p.empty_fraction() > 0.2;
    p
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{zoo_entry, DomainSpec, PointFn, VectorFn};
    use std::sync::Arc;

    #[test]
    fn seed_order_is_a_permutation() {
        let mut seen = HashSet::new();
        for k in 0..1024 {
            assert!(seen.insert(seed_cell(k, 2, 5)));
        }
        assert_eq!(seed_cell(0, 2, 5), vec![0, 0]);
    }

    #[test]
    fn circle_level() {
        let q = zoo_entry::<f64>("quadratic").unwrap().field;
        let k = BoxRegion::cube(&[0.0, 0.0], 1.0);
        let s = sample_level(&q, 0.25, &k, 300);
        assert_eq!(s.points.len(), 300);
        for p in &s.points {
            assert!((linalg::norm(p) - 0.5).abs() < 1e-8);
        }
        let (lo, hi) = gradient_extrema(&q, &s.points).unwrap();
        assert!((lo - 1.0).abs() < 1e-8 && (hi - 1.0).abs() < 1e-8);
        assert!(sample_level(&q, 5.0, &k, 10).points.is_empty());
    }

    #[test]
    fn two_components_are_found() {
        let f: PointFn<f64> = Arc::new(|x: &[f64]| x[0] * x[0]);
        let g: VectorFn<f64> = Arc::new(|x: &[f64]| vec![2.0 * x[0], 0.0]);
        let field = ScalarField::new("x1^2", DomainSpec::new(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(), f, g);
        let s = sample_level(&field, 0.04, &BoxRegion::cube(&[0.0, 0.0], 1.0), 50);
        assert!(s.points.iter().any(|p| (p[0] - 0.2).abs() < 1e-6));
        assert!(s.points.iter().any(|p| (p[0] + 0.2).abs() < 1e-6));
    }

    #[test]
    fn product_field_extrema() {
        let e = zoo_entry::<f64>("product").unwrap();
        let k = BoxRegion::cube(&[0.0, 0.0], 1.0);
        let t: f64 = 0.01;
        let s = sample_level(&e.field, t, &k, 4000);
        let (lo, hi) = gradient_extrema(&e.field, &s.points).unwrap();
        let e1 = std::f64::consts::E;
        assert!((lo * lo - (4.0 * t / e1 + t * t)).abs() < 1e-2 * lo * lo, "{lo}");
        assert!((hi * hi - (4.0 * t * e1 + t * t)).abs() < 1e-2 * hi * hi, "{hi}");
    }

    #[test]
    fn quadratic_profile() {
        let q = zoo_entry::<f64>("quadratic").unwrap().field;
        let p = build_profile(&q, &BoxRegion::cube(&[0.0, 0.0], 1.0), 0.5, 10, 64);
        assert!(!p.unreliable);
        for l in &p.levels {
            let exact = 1.0 / (2.0 * l.t.sqrt());
            assert!((l.alpha - exact).abs() < 1e-6 * exact && (l.beta - exact).abs() < 1e-6 * exact);
        }
        let none = build_profile(&q, &BoxRegion::cube(&[0.0, 0.0], 1.0), 0.5, 10, 0);
        assert!(none.unreliable);
    }
}
