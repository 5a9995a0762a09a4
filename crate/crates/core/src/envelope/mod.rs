//! Continuous one-sided approximations of semicontinuous profiles on `(0, r0]`
//! built from Moreau envelopes on dyadic intervals and stitched with affine
//! ramps.

mod moreau;

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

pub use moreau::MoreauEnvelope;

use crate::desing::{integrability_verdict, Integrability};
use crate::field::ProfileFn;
use crate::levelset::LevelSetProfile;
use crate::quad;
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// Lower semicontinuous input, `w ≤ u`.
    Lower,
    /// Upper semicontinuous input, `w ≥ u`.
    Upper,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile value {value} at t = {t} is not positive and finite")]
    NonPositive { t: f64, value: f64 },
    #[error("profile is not integrable near 0 (verdict: {0})")]
    NotIntegrable(String),
}

/// Positive function on `(0, r0]` sampled on a refinable grid.
#[derive(Clone)]
pub struct SemicontinuousProfile<T> {
    pub r0: T,
    pub kind: EnvelopeKind,
    evaluator: ProfileFn<T>,
    grid: Vec<T>,
}

impl<T: Real> std::fmt::Debug for SemicontinuousProfile<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemicontinuousProfile")
            .field("r0", &self.r0)
            .field("kind", &self.kind)
            .field("grid_len", &self.grid.len())
            .finish()
    }
}

fn sorted_unique<T: Real>(mut v: Vec<T>) -> Vec<T> {
    v.retain(|x| x.is_finite());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() <= *b * lit(1e-13));
    v
}

impl<T: Real> SemicontinuousProfile<T> {
    pub fn new(r0: T, kind: EnvelopeKind, evaluator: ProfileFn<T>, grid: Vec<T>) -> Result<Self, EnvelopeError> {
        if !(r0 > T::zero()) || !r0.is_finite() {
            return Err(EnvelopeError::InvalidProfile(format!("r0 must be positive, got {r0}")));
        }
        let mut grid = sorted_unique(grid);
        grid.retain(|&t| t > T::zero() && t <= r0);
        if grid.last() != Some(&r0) {
            grid.push(r0);
        }
        if grid.len() < 2 {
            return Err(EnvelopeError::InvalidProfile("grid needs at least two points in (0, r0]".into()));
        }
        Ok(SemicontinuousProfile { r0, kind, evaluator, grid })
    }

    /// Grid `r0 2^{-k-1} (1 + i/per_octave)` for `k < octaves`, uniform inside
    /// each dyadic octave.
    pub fn geometric(
        r0: T,
        kind: EnvelopeKind,
        evaluator: ProfileFn<T>,
        octaves: usize,
        per_octave: usize,
    ) -> Result<Self, EnvelopeError> {
        let per = per_octave.max(1);
        let mut grid = Vec::with_capacity(octaves * per + 1);
        for k in 0..octaves {
            let base = dyadic(r0, k + 1);
            for i in 0..per {
                grid.push(base + base * lit::<T>(i as f64) / lit(per as f64));
            }
        }
        grid.push(r0);
        Self::new(r0, kind, evaluator, grid)
    }

    /// Log-log interpolant of positive samples `(t_i, u_i)`, ascending `t`,
    /// with `subdivisions - 1` geometric points inserted per interval.
    pub fn interpolated(kind: EnvelopeKind, t: &[T], u: &[T], subdivisions: usize) -> Result<Self, EnvelopeError> {
        if t.len() != u.len() || t.len() < 2 {
            return Err(EnvelopeError::InvalidProfile("need at least two samples of equal length".into()));
        }
        for (&ti, &ui) in t.iter().zip(u) {
            if !(ti > T::zero() && ui > T::zero() && ui.is_finite()) {
                return Err(EnvelopeError::NonPositive { t: crate::scalar::to_f64(ti), value: crate::scalar::to_f64(ui) });
            }
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(EnvelopeError::InvalidProfile("sample abscissae must be strictly ascending".into()));
        }
        let lt: Vec<T> = t.iter().map(|x| x.ln()).collect();
        let lu: Vec<T> = u.iter().map(|x| x.ln()).collect();
        let evaluator: ProfileFn<T> = std::sync::Arc::new(move |x: T| {
            let lx = x.ln();
            let i = lt.partition_point(|&v| v <= lx).clamp(1, lt.len() - 1);
            let s = (lu[i] - lu[i - 1]) / (lt[i] - lt[i - 1]);
            (lu[i - 1] + s * (lx - lt[i - 1])).exp()
        });
        let sub = subdivisions.max(1);
        let mut grid = Vec::with_capacity(t.len() * sub);
        for w in t.windows(2) {
            let r = w[1] / w[0];
            for i in 0..sub {
                grid.push(w[0] * r.powf(lit::<T>(i as f64) / lit(sub as f64)));
            }
        }
        grid.push(t[t.len() - 1]);
        Self::new(t[t.len() - 1], kind, evaluator, grid)
    }

    /// Adds feature points (spikes, dips) to the grid.
    pub fn with_points(mut self, points: &[T]) -> Self {
        let r0 = self.r0;
        let mut g = self.grid;
        g.extend(points.iter().copied().filter(|&t| t > T::zero() && t <= r0));
        self.grid = sorted_unique(g);
        self
    }

    /// Inserts every midpoint.
    pub fn refined(&self) -> Self {
        let mut g = self.grid.clone();
        g.extend(self.grid.windows(2).map(|w| (w[0] + w[1]) * lit(0.5)));
        SemicontinuousProfile { grid: sorted_unique(g), ..self.clone() }
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn value(&self, t: T) -> T {
        (self.evaluator)(t)
    }
}

fn dyadic<T: Real>(r0: T, k: usize) -> T {
    r0 * lit::<T>(0.5).powi(k as i32)
}

/// Moreau envelope of `u` on `[a, b]` from the grid points there (plus the
/// endpoints). Upper-kind profiles get the mirrored envelope, which lies above.
pub fn moreau_envelope<T: Real>(
    u: &SemicontinuousProfile<T>,
    lambda: T,
    a: T,
    b: T,
) -> Result<MoreauEnvelope<T>, EnvelopeError> {
    if !(lambda > T::zero()) {
        return Err(EnvelopeError::InvalidProfile(format!("lambda must be positive, got {lambda}")));
    }
    if !(a > T::zero() && a < b && b <= u.r0) {
        return Err(EnvelopeError::InvalidProfile(format!("[{a}, {b}] is not inside (0, r0]")));
    }
    let mut t: Vec<T> = u.grid.iter().copied().filter(|&x| x >= a && x <= b).collect();
    t.push(a);
    t.push(b);
    let t = sorted_unique(t);
    let v = evaluate(u, &t)?;
    Ok(MoreauEnvelope::from_samples(&t, &v, lambda, u.kind == EnvelopeKind::Upper))
}

fn evaluate<T: Real>(u: &SemicontinuousProfile<T>, t: &[T]) -> Result<Vec<T>, EnvelopeError> {
    use rayon::prelude::*;
    let v: Vec<T> = t.par_iter().map(|&x| u.value(x)).collect();
    for (&x, &y) in t.iter().zip(&v) {
        if !(y > T::zero() && y.is_finite()) {
            return Err(EnvelopeError::NonPositive { t: crate::scalar::to_f64(x), value: crate::scalar::to_f64(y) });
        }
    }
    Ok(v)
}

/// Affine factor going from 1 at `start` to `m` at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Ramp<T> {
    start: T,
    end: T,
    m: T,
}

impl<T: Real> Ramp<T> {
    fn factor(&self, x: T) -> T {
        let (lo, hi) = if self.start < self.end { (self.start, self.end) } else { (self.end, self.start) };
        if x < lo || x > hi {
            return T::one();
        }
        T::one() + (self.m - T::one()) * (x - self.start) / (self.end - self.start)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Piece<T> {
    lo: T,
    hi: T,
    env: MoreauEnvelope<T>,
    ramps: Vec<Ramp<T>>,
}

/// Continuous piecewise profile `w` on `(0, r0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeProfile<T> {
    pub kind: EnvelopeKind,
    /// Reflection constant `M` for the upper kind, 0 for the lower kind.
    pub ceiling: T,
    pieces: Vec<Piece<T>>,
    /// `(t0, w0, q)`: `w = w0 (t / t0)^q` below the last piece.
    tail: (T, T, T),
}

impl<T: Real> EnvelopeProfile<T> {
    /// Distance from the reflection constant (lower kind: the envelope itself).
    fn raw(&self, p: &Piece<T>, x: T) -> T {
        (p.env.value(x) - self.ceiling).abs()
    }

    fn piece_value(&self, p: &Piece<T>, x: T) -> T {
        let f = p.ramps.iter().fold(T::one(), |acc, r| acc * r.factor(x));
        let v = f * self.raw(p, x);
        match self.kind {
            EnvelopeKind::Lower => v,
            EnvelopeKind::Upper => self.ceiling - v,
        }
    }

    pub fn value(&self, x: T) -> T {
        let i = self.pieces.partition_point(|p| p.lo > x);
        if i < self.pieces.len() {
            self.piece_value(&self.pieces[i], x)
        } else {
            let (t0, w0, q) = self.tail;
            w0 * (x / t0).powf(q)
        }
    }

    /// Smallest `t` covered by the stitched pieces.
    pub fn floor(&self) -> T {
        self.tail.0
    }
}

/// Per-interval construction record on `[a_{k+1}, a_k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieceRecord<T> {
    pub k: usize,
    pub a_lo: T,
    pub a_hi: T,
    pub lambda: T,
    pub halvings: usize,
    /// Trapezoid `∫|u - e_lambda|` over the interval's grid points.
    pub defect: T,
    /// `(k + 1)^{-2}`
    pub target: T,
    /// First halving count at which the defect met the target.
    pub met_at: Option<usize>,
    /// Matching factor at `a_k` (1 when no ramp was needed).
    pub m: T,
    pub epsilon: T,
    /// `∫(1 - ramp) w_k` over the ramp.
    pub correction: T,
    /// Which side of `a_k` carries the ramp: "left", "right" or "none".
    pub ramp_side: &'static str,
}

#[derive(Debug, Clone)]
pub struct EnvelopeResult<T> {
    pub kind: EnvelopeKind,
    pub r0: T,
    pub budget: usize,
    pub w: EnvelopeProfile<T>,
    /// Working grid (input grid plus the dyadic points `a_k`).
    pub grid: Vec<T>,
    pub u: Vec<T>,
    pub w_grid: Vec<T>,
    /// Largest wrong-side excess at grid points.
    pub side_violation: T,
    /// Trapezoid `∫|u - w|` on the grid.
    pub l1_gap: T,
    /// Largest mismatch of the one-sided limits at the `a_k`.
    pub stitch_jump: T,
    pub pieces: Vec<PieceRecord<T>>,
    /// Some defect target was not met within the budget.
    pub partial: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeTrace<'a, T> {
    pub kind: EnvelopeKind,
    pub r0: T,
    pub budget: usize,
    pub side_violation: T,
    pub l1_gap: T,
    pub stitch_jump: T,
    pub partial: bool,
    pub pieces: &'a [PieceRecord<T>],
}

impl<T: Real> EnvelopeResult<T> {
    /// Largest `|w(x) - w(x')|` over adjacent points of the grid with every
    /// interval split into `subdivisions` parts.
    pub fn continuity_modulus(&self, subdivisions: usize) -> T {
        let n = subdivisions.max(1);
        let lo = self.w.floor();
        let mut worst = T::zero();
        for win in self.grid.windows(2).filter(|w| w[0] >= lo) {
            let mut prev = self.w.value(win[0]);
            for i in 1..=n {
                let x = win[0] + (win[1] - win[0]) * lit::<T>(i as f64) / lit(n as f64);
                let cur = self.w.value(x);
                worst = worst.max((cur - prev).abs());
                prev = cur;
            }
        }
        worst
    }

    pub fn trace(&self) -> EnvelopeTrace<'_, T> {
        EnvelopeTrace {
            kind: self.kind,
            r0: self.r0,
            budget: self.budget,
            side_violation: self.side_violation,
            l1_gap: self.l1_gap,
            stitch_jump: self.stitch_jump,
            partial: self.partial,
            pieces: &self.pieces,
        }
    }

    /// CSV with columns `t, u, w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,u,w")?;
        for ((t, u), w) in self.grid.iter().zip(&self.u).zip(&self.w_grid) {
            writeln!(out, "{t},{u},{w}")?;
        }
        Ok(())
    }
}

struct Fitted<T> {
    env: MoreauEnvelope<T>,
    halvings: usize,
    defect: T,
    met_at: Option<usize>,
}

fn fit_piece<T: Real>(t: &[T], u: &[T], sign: T, target: T, budget: usize) -> Fitted<T> {
    let width = t[t.len() - 1] - t[0];
    let upper = sign < T::zero();
    let mut met_at = None;
    let mut j = 0;
    loop {
        let lambda = width * width * lit::<T>(0.5).powi(j as i32);
        let env = MoreauEnvelope::from_samples(t, u, lambda, upper);
        let gap: Vec<T> = t.iter().zip(u).map(|(&x, &y)| (sign * (y - env.value(x))).max(T::zero())).collect();
        let defect = quad::trapezoid(t, &gap);
        if met_at.is_none() && defect <= target {
            met_at = Some(j);
        }
        if defect == T::zero() || j >= budget {
            return Fitted { env, halvings: j, defect, met_at };
        }
        j += 1;
    }
}

/// Continuous `w` on the correct side of `u` with `a_k = r0 2^{-k}`. On each
/// `[a_{k+1}, a_k]` the envelope parameter is halved (at most `budget` times)
/// until the defect vanishes; pieces are matched at the `a_k` by an affine ramp
/// on the larger side, shortened until its correction is below `(k + 1)^{-2}`.
pub fn build_envelope<T: Real>(u: &SemicontinuousProfile<T>, budget: usize) -> Result<EnvelopeResult<T>, EnvelopeError> {
    use rayon::prelude::*;

    let floor = u.grid[0];
    let mut n_pieces = 0;
    while dyadic(u.r0, n_pieces + 1) >= floor * (T::one() - lit(1e-12)) && n_pieces < 1000 {
        n_pieces += 1;
    }
    if n_pieces == 0 {
        return Err(EnvelopeError::InvalidProfile("grid does not span a dyadic interval below r0".into()));
    }
    let knots: Vec<T> = (0..=n_pieces).map(|k| dyadic(u.r0, k)).collect();
    let mut grid = u.grid.clone();
    grid.extend_from_slice(&knots);
    let grid: Vec<T> = sorted_unique(grid)
        .into_iter()
        .map(|g| knots.iter().copied().find(|&a| (g - a).abs() <= a * lit(1e-12)).unwrap_or(g))
        .collect();
    let vals = evaluate(u, &grid)?;
    let (sign, ceiling) = match u.kind {
        EnvelopeKind::Lower => (T::one(), T::zero()),
        EnvelopeKind::Upper => (-T::one(), lit::<T>(2.0) * vals.iter().copied().fold(T::zero(), T::max)),
    };

    let ranges: Vec<(usize, usize)> = (0..n_pieces)
        .map(|k| {
            let (lo, hi) = (knots[k + 1], knots[k]);
            (grid.partition_point(|&g| g < lo), grid.partition_point(|&g| g <= hi))
        })
        .collect();
    let fitted: Vec<Fitted<T>> = ranges
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let target = T::one() / lit::<T>(((k + 1) * (k + 1)) as f64);
            fit_piece(&grid[i..j], &vals[i..j], sign, target, budget)
        })
        .collect();

    let mut profile = EnvelopeProfile {
        kind: u.kind,
        ceiling,
        pieces: Vec::with_capacity(n_pieces),
        tail: (knots[n_pieces], T::zero(), T::zero()),
    };
    let mut records = Vec::with_capacity(n_pieces);
    let mut partial = false;
    for (k, fit) in fitted.into_iter().enumerate() {
        partial |= fit.met_at.is_none();
        records.push(PieceRecord {
            k,
            a_lo: knots[k + 1],
            a_hi: knots[k],
            lambda: fit.env.lambda,
            halvings: fit.halvings,
            defect: fit.defect,
            target: T::one() / lit::<T>(((k + 1) * (k + 1)) as f64),
            met_at: fit.met_at,
            m: T::one(),
            epsilon: T::zero(),
            correction: T::zero(),
            ramp_side: "none",
        });
        profile.pieces.push(Piece { lo: knots[k + 1], hi: knots[k], env: fit.env, ramps: Vec::new() });
    }

    for k in 1..n_pieces {
        let s = knots[k];
        let vl = profile.raw(&profile.pieces[k], s);
        let vr = profile.raw(&profile.pieces[k - 1], s);
        if vl == vr {
            continue;
        }
        let (idx, m, dir, side) = if vl > vr {
            (k, vr / vl, -T::one(), "left")
        } else {
            (k - 1, vl / vr, T::one(), "right")
        };
        let target = records[k].target;
        let piece = &profile.pieces[idx];
        let mut eps = (piece.hi - piece.lo) * lit(0.25);
        let mut correction = T::zero();
        for _ in 0..60 {
            let ramp = Ramp { start: s + dir * eps, end: s, m };
            let g = |x: T| (T::one() - ramp.factor(x)) * profile.raw(piece, x);
            let (a, b) = if dir < T::zero() { (s - eps, s) } else { (s, s + eps) };
            correction = quad::adaptive(&g, a, b, T::min_positive_value(), lit(1e-10));
            if correction <= target {
                break;
            }
            eps = eps * lit(0.5);
        }
        profile.pieces[idx].ramps.push(Ramp { start: s + dir * eps, end: s, m });
        let rec = &mut records[k];
        rec.m = m;
        rec.epsilon = eps;
        rec.correction = correction;
        rec.ramp_side = side;
    }

    let t0 = knots[n_pieces];
    let last = &profile.pieces[n_pieces - 1];
    let w0 = profile.piece_value(last, t0);
    let i0 = grid.partition_point(|&g| g <= t0);
    let t1 = grid[i0.min(grid.len() - 1)];
    let q = if t1 > t0 {
        let w1 = profile.piece_value(last, t1);
        let q = (w1 / w0).ln() / (t1 / t0).ln();
        if q.is_finite() { q } else { T::zero() }
    } else {
        T::zero()
    };
    profile.tail = (t0, w0, q);

    let start = grid.partition_point(|&g| g < t0);
    let grid = grid[start..].to_vec();
    let vals = vals[start..].to_vec();
    let w_grid: Vec<T> = grid.iter().map(|&x| profile.value(x)).collect();
    let side_violation = grid
        .iter()
        .zip(&vals)
        .zip(&w_grid)
        .map(|((_, &uu), &ww)| (sign * (ww - uu)).max(T::zero()))
        .fold(T::zero(), T::max);
    let gap: Vec<T> = vals.iter().zip(&w_grid).map(|(&a, &b)| (a - b).abs()).collect();
    let l1_gap = quad::trapezoid(&grid, &gap);
    let stitch_jump = (1..n_pieces)
        .map(|k| {
            let s = knots[k];
            (profile.piece_value(&profile.pieces[k], s) - profile.piece_value(&profile.pieces[k - 1], s)).abs()
        })
        .fold(T::zero(), T::max);

    Ok(EnvelopeResult {
        kind: u.kind,
        r0: u.r0,
        budget,
        w: profile,
        grid,
        u: vals,
        w_grid,
        side_violation,
        l1_gap,
        stitch_jump,
        pieces: records,
        partial,
    })
}

/// Continuous `a ≤ 1/alpha` with `∫ 1/a < ∞`, from the upper envelope of the
/// measured alpha curve.
#[derive(Debug, Clone)]
pub struct AlphaMajorant<T> {
    pub envelope: EnvelopeResult<T>,
    pub t: Vec<T>,
    pub alpha: Vec<T>,
}

impl<T: Real> AlphaMajorant<T> {
    pub fn a(&self, t: T) -> T {
        self.envelope.w.value(t).recip()
    }
}

pub fn integrable_majorant_for_alpha<T: Real>(
    profile: &LevelSetProfile<T>,
    budget: usize,
) -> Result<AlphaMajorant<T>, EnvelopeError> {
    let (t, alpha) = profile.alpha_curve();
    let verdict = integrability_verdict(&t, &alpha, profile.rho);
    if verdict.verdict != Integrability::Integrable {
        return Err(EnvelopeError::NotIntegrable(format!("{:?}", verdict.verdict).to_lowercase()));
    }
    let u = SemicontinuousProfile::interpolated(EnvelopeKind::Upper, &t, &alpha, 8)?;
    let envelope = build_envelope(&u, budget)?;
    Ok(AlphaMajorant { envelope, t, alpha })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn comb(kind: EnvelopeKind, at: Vec<f64>, level: f64) -> SemicontinuousProfile<f64> {
        let pts = at.clone();
        let f: ProfileFn<f64> =
            Arc::new(move |t: f64| if pts.iter().any(|&p| (t - p).abs() <= 1e-15 * p) { level } else { 1.0 });
        SemicontinuousProfile::geometric(1.0, kind, f, 12, 32).unwrap().with_points(&at)
    }

    #[test]
    fn constant_profile_is_its_own_envelope() {
        let one: ProfileFn<f64> = Arc::new(|_| 1.0);
        let u = SemicontinuousProfile::geometric(1.0, EnvelopeKind::Lower, one, 8, 16).unwrap();
        let e = moreau_envelope(&u, 0.3, 0.5, 1.0).unwrap();
        assert!(e.nodes().iter().all(|&x| e.value(x) == 1.0));
        let r = build_envelope(&u, 20).unwrap();
        assert_eq!(r.l1_gap, 0.0);
        assert!(r.w_grid.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn single_dip_cup() {
        let f: ProfileFn<f64> = Arc::new(|t: f64| if (t - 0.75).abs() < 1e-12 { 0.5 } else { 1.0 });
        let grid: Vec<f64> = (0..=1000).map(|i| 0.5 + i as f64 * 0.0005).collect();
        let u = SemicontinuousProfile::new(1.0, EnvelopeKind::Lower, f, grid.clone()).unwrap();
        let lam = 1e-4;
        let e = moreau_envelope(&u, lam, 0.5, 1.0).unwrap();
        for &x in &grid {
            let want = (0.5 + (x - 0.75f64).powi(2) / (2.0 * lam)).min(1.0);
            assert!((e.value(x) - want).abs() < 1e-12, "x={x}");
        }
        assert!((e.value(0.76) - 1.0).abs() < 1e-12 && e.value(0.7595) < 1.0);
    }

    #[test]
    fn large_lambda_approaches_minimum() {
        let f: ProfileFn<f64> = Arc::new(|t: f64| 1.0 + t * t);
        let u = SemicontinuousProfile::geometric(1.0, EnvelopeKind::Lower, f, 4, 64).unwrap();
        let lam = 100.0;
        let e = moreau_envelope(&u, lam, 0.5, 1.0).unwrap();
        for i in 0..=10 {
            let x = 0.5 + 0.05 * i as f64;
            assert!((e.value(x) - 1.25).abs() <= 0.25 / (2.0 * lam) + 1e-12);
        }
    }

    #[test]
    fn dip_comb() {
        let dips: Vec<f64> = (1..=5).map(|j| 0.5f64.powi(j)).collect();
        let r = build_envelope(&comb(EnvelopeKind::Lower, dips.clone(), 0.5), 30).unwrap();
        assert!(r.side_violation <= 1e-9);
        for &d in &dips {
            assert!(r.w.value(d) <= 0.5);
        }
        assert!(r.l1_gap <= 0.01, "{}", r.l1_gap);
        assert!(r.stitch_jump <= 1e-9);
    }

    #[test]
    fn spike_comb_upper() {
        let spikes: Vec<f64> = (1..=5).map(|j| 0.5f64.powi(j)).collect();
        let r = build_envelope(&comb(EnvelopeKind::Upper, spikes.clone(), 2.0), 30).unwrap();
        assert!(r.side_violation <= 1e-9);
        for &s in &spikes {
            assert!(r.w.value(s) >= 2.0);
        }
        assert!(r.l1_gap <= std::f64::consts::PI.powi(2) / 3.0);
        assert!(r.stitch_jump <= 1e-9);
    }

    #[test]
    fn stitching_matches_one_sided_limits() {
        let f: ProfileFn<f64> = Arc::new(|t: f64| 1.0 + (40.0 * t).sin().abs() + if t > 0.3 { 0.4 } else { 0.0 });
        for kind in [EnvelopeKind::Lower, EnvelopeKind::Upper] {
            let u = SemicontinuousProfile::geometric(1.0, kind, f.clone(), 10, 8).unwrap();
            let r = build_envelope(&u, 3).unwrap();
            assert!(r.stitch_jump <= 1e-9, "{kind:?} {}", r.stitch_jump);
            assert!(r.side_violation <= 1e-9);
        }
    }

    fn synthetic_profile(alpha: impl Fn(f64) -> f64) -> LevelSetProfile<f64> {
        use crate::levelset::LevelStats;
        let levels = (0..40)
            .map(|j| {
                let t = 0.5 * 0.5f64.powi(j);
                let a = alpha(t);
                LevelStats { t, n_samples: 64, min_grad: 1.0 / a, max_grad: 1.0 / a, alpha: a, beta: a, coverage: 1.0, empty: false }
            })
            .collect();
        LevelSetProfile { k: crate::BoxRegion::cube(&[0.0], 1.0), rho: 0.5, levels, unreliable: false }
    }

    #[test]
    fn majorant_of_continuous_alpha_recovers_it() {
        let p = synthetic_profile(|t| 0.5 / t.sqrt());
        let m = integrable_majorant_for_alpha(&p, 60).unwrap();
        for (&t, _) in m.t.iter().zip(&m.alpha) {
            assert!((m.a(t) - 2.0 * t.sqrt()).abs() < 1e-6, "t={t}");
        }
        assert!(m.envelope.side_violation <= 1e-9);
    }

    #[test]
    fn majorant_of_constant_alpha_is_constant() {
        let m = integrable_majorant_for_alpha(&synthetic_profile(|_| 3.0), 20).unwrap();
        assert!(m.envelope.w_grid.iter().all(|&w| (w - 3.0).abs() < 1e-12));
    }

    #[test]
    fn majorant_spike_is_local() {
        let p = synthetic_profile(|t| if (t - 0.5 * 0.5f64.powi(20)).abs() < 1e-21 { 8.0 / t.sqrt() } else { 0.5 / t.sqrt() });
        let m = integrable_majorant_for_alpha(&p, 60).unwrap();
        let spike = 0.5 * 0.5f64.powi(20);
        assert!(m.a(spike) <= spike.sqrt() / 8.0 + 1e-12);
        for &t in m.t.iter().filter(|&&t| (t / spike).ln().abs() > 1.0) {
            assert!((m.a(t) - 2.0 * t.sqrt()).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn divergent_alpha_is_rejected() {
        let e = integrable_majorant_for_alpha(&synthetic_profile(|t| 1.0 / t), 20).unwrap_err();
        assert!(matches!(e, EnvelopeError::NotIntegrable(_)));
    }
}
