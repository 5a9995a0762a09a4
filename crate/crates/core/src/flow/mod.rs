//! Negative-gradient flows under three clocks.
//!
//! * `Time`: `x' = -∇f`
//! * `Arclength`: `x' = -∇f / |∇f|`
//! * `Level`: `x' = -∇f / |∇f|²`, so `f` drops at unit rate
//!
//! Integration uses the Dormand–Prince 5(4) pair with PI step control. Each
//! sample records all three clock values so a trajectory can be re-indexed by
//! any of them without re-integrating.

mod export;
mod retract;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::ScalarField;
use crate::linalg;
use crate::scalar::{lit, to_f64, Real};

pub use export::TrajectoryManifest;
pub use retract::{
    length_function, limit_curve, retract, retract_with, safe_set_test, trajectory_length, SafeSetQuery,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    Time,
    Arclength,
    Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedZeroLocus,
    /// Target level of [`flow_to_level`] reached.
    ReachedLevel,
    LeftDomain,
    StepLimit,
    GradientVanished,
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid start: {0}")]
    InvalidStart(String),
    #[error("clock conversion is not monotone at sample {0}")]
    NonMonotone(usize),
    #[error("point is outside the safe set (g = {g}, margin = {margin}, f = {f})")]
    NotInSafeSet { g: f64, margin: f64, f: f64 },
    #[error("gradient vanished before the zero locus: not simple nondegenerate along the trajectory")]
    NotSimpleNondegenerate,
    #[error("trajectory ended without reaching the zero locus ({0:?})")]
    Incomplete(Termination),
}

/// Integrator settings. `gradient_floor` is relative to the domain diameter.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FlowControls<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub f_stop: T,
    pub gradient_floor: T,
    /// Largest displacement of `x` in one step.
    pub max_step: T,
    pub max_steps: usize,
}

impl<T: Real> Default for FlowControls<T> {
    fn default() -> Self {
        FlowControls {
            abs_tol: crate::scalar::achievable(lit(1e-10)),
            rel_tol: crate::scalar::achievable(lit(1e-8)),
            f_stop: lit(1e-10),
            gradient_floor: lit(1e-12),
            max_step: lit(0.05),
            max_steps: 200_000,
        }
    }
}

impl<T: Real> FlowControls<T> {
    pub fn with_f_stop(mut self, f_stop: T) -> Self {
        self.f_stop = f_stop;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample<T> {
    /// Parameter in the trajectory's clock.
    pub s: T,
    pub point: Vec<T>,
    pub f: T,
    pub arclen: T,
    pub time: T,
    /// Level clock value `f(x0) - f` (signed by flow direction).
    pub level: T,
    pub grad_norm: T,
}

impl<T: Real> Sample<T> {
    fn column(&self, clock: Clock) -> T {
        match clock {
            Clock::Time => self.time,
            Clock::Arclength => self.arclen,
            Clock::Level => self.level,
        }
    }

    /// Rate of `clock` with respect to physical time.
    fn rate(&self, clock: Clock) -> T {
        match clock {
            Clock::Time => T::one(),
            Clock::Arclength => self.grad_norm,
            Clock::Level => self.grad_norm * self.grad_norm,
        }
    }
}

/// Discretized integral curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<T> {
    pub clock: Clock,
    pub samples: Vec<Sample<T>>,
    pub termination: Termination,
    pub limit_point: Option<Vec<T>>,
    pub f0: T,
    /// `false` for ascending runs of [`flow_to_level`].
    pub descending: bool,
}

impl<T: Real> Trajectory<T> {
    pub fn start(&self) -> &[T] {
        &self.samples[0].point
    }

    pub fn end(&self) -> &[T] {
        &self.samples[self.samples.len() - 1].point
    }

    pub fn last(&self) -> &Sample<T> {
        &self.samples[self.samples.len() - 1]
    }

    /// Achieved forward parameter extent.
    pub fn omega_plus(&self) -> T {
        self.last().s
    }

    pub fn length(&self) -> T {
        self.last().arclen
    }

    /// Converts a `from`-clock value to the `to`-clock value along the curve by
    /// cubic Hermite interpolation with exact clock-rate slopes.
    pub fn convert_param(&self, from: Clock, value: T, to: Clock) -> Option<T> {
        let n = self.samples.len();
        let first = self.samples[0].column(from);
        let last = self.samples[n - 1].column(from);
        if value < first || value > last {
            return None;
        }
        if n == 1 || from == to {
            return Some(if from == to { value } else { self.samples[0].column(to) });
        }
        let i = self.samples.partition_point(|s| s.column(from) <= value).clamp(1, n - 1) - 1;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let (ta, tb) = (a.column(from), b.column(from));
        let dt = tb - ta;
        if dt <= T::zero() {
            return Some(a.column(to));
        }
        let slope = |smp: &Sample<T>| smp.rate(to) / smp.rate(from);
        let (ma, mb) = (slope(a), slope(b));
        let s = (value - ta) / dt;
        let (s2, s3) = (s * s, s * s * s);
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let v = (two * s3 - three * s2 + T::one()) * a.column(to)
            + (s3 - two * s2 + s) * dt * ma
            + (three * s2 - two * s3) * b.column(to)
            + (s3 - s2) * dt * mb;
        if v.is_finite() {
            Some(v)
        } else {
            // infinite slope at a singular endpoint
            Some(a.column(to) + (b.column(to) - a.column(to)) * s)
        }
    }

    /// Largest `|f(x(s)) - (f(x0) - s)|` over the samples of a level-clock run.
    pub fn level_defect(&self) -> T {
        let sign = if self.descending { T::one() } else { -T::one() };
        self.samples.iter().map(|smp| (smp.f - (self.f0 - sign * smp.s)).abs()).fold(T::zero(), T::max)
    }
}

/// Re-indexes a trajectory by another clock. The geometric samples are kept and
/// only the parameter column changes.
pub fn reparametrize_clock<T: Real>(traj: &Trajectory<T>, target: Clock) -> Result<Trajectory<T>, FlowError> {
    let mut out = traj.clone();
    out.clock = target;
    for (i, smp) in out.samples.iter_mut().enumerate() {
        smp.s = smp.column(target);
        if i > 0 && !smp.s.is_finite() {
            return Err(FlowError::NonMonotone(i));
        }
    }
    for (i, w) in out.samples.windows(2).enumerate() {
        if !(w[1].s > w[0].s) {
            return Err(FlowError::NonMonotone(i + 1));
        }
    }
    Ok(out)
}

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct System<'a, T> {
    field: &'a ScalarField<T>,
    clock: Clock,
    /// `+1` descends, `-1` ascends.
    sign: T,
    n: usize,
}

struct Eval<T> {
    dy: Vec<T>,
    grad_norm: T,
}

impl<T: Real> System<'_, T> {
    /// State layout: `[x_1..x_n, arclen, time]`.
    fn rhs(&self, y: &[T]) -> Option<Eval<T>> {
        let x = &y[..self.n];
        let g = self.field.gradient(x);
        let gn = self.field.tangent_norm(x, &g);
        if !(gn > T::zero()) || !gn.is_finite() {
            return None;
        }
        let sigma = match self.clock {
            Clock::Time => T::one(),
            Clock::Arclength => gn.recip(),
            Clock::Level => (gn * gn).recip(),
        };
        let mut dy: Vec<T> = g.iter().map(|&v| -self.sign * sigma * v).collect();
        dy.push(sigma * gn);
        dy.push(sigma);
        if dy.iter().all(|v| v.is_finite()) {
            Some(Eval { dy, grad_norm: gn })
        } else {
            None
        }
    }

    /// One Dormand–Prince step; returns the new state, its FSAL derivative and
    /// the scaled error norm.
    fn step(&self, y: &[T], k1: &Eval<T>, h: T, c: &FlowControls<T>) -> Option<(Vec<T>, Eval<T>, T)> {
        let mut ks: Vec<Vec<T>> = Vec::with_capacity(7);
        ks.push(k1.dy.clone());
        let mut last = None;
        for stage in 1..7 {
            let mut yi = y.to_vec();
            for (j, kj) in ks.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    let ah = h * lit(a);
                    for (v, &k) in yi.iter_mut().zip(kj) {
                        *v = *v + ah * k;
                    }
                }
            }
            let e = self.rhs(&yi)?;
            ks.push(e.dy.clone());
            if stage == 6 {
                last = Some((yi, e));
            }
        }
        let (y_new, k7) = last?;
        let mut err = T::zero();
        for i in 0..y.len() {
            let mut ei = T::zero();
            for (j, kj) in ks.iter().enumerate() {
                ei = ei + lit::<T>(E[j]) * kj[i];
            }
            let sc = c.abs_tol + c.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((ei * h).abs() / sc);
        }
        Some((y_new, k7, err))
    }
}

struct Run<T> {
    clock: Clock,
    /// Stop when the parameter reaches this value.
    s_end: Option<T>,
    /// Stop when `f` drops below this value (descending only).
    f_stop: Option<T>,
    sign: T,
}

fn project_to_level<T: Real>(field: &ScalarField<T>, x: &mut Vec<T>, target: T) {
    for _ in 0..3 {
        let fx = field.value(x);
        let r = fx - target;
        if r == T::zero() {
            return;
        }
        let g = field.gradient(x);
        let gn2 = {
            let n = field.tangent_norm(x, &g);
            n * n
        };
        if !(gn2 > T::zero()) || !gn2.is_finite() {
            return;
        }
        let cand = linalg::axpy(x, -r / gn2, &g);
        let fc = field.value(&cand);
        if (fc - target).abs() < r.abs() {
            *x = cand;
        } else {
            return;
        }
    }
}

fn make_sample<T: Real>(s: T, y: &[T], n: usize, f: T, f0: T, sign: T, gn: T) -> Sample<T> {
    Sample {
        s,
        point: y[..n].to_vec(),
        f,
        arclen: y[n],
        time: y[n + 1],
        level: sign * (f0 - f),
        grad_norm: gn,
    }
}

fn run<T: Real>(field: &ScalarField<T>, x0: &[T], run: Run<T>, c: &FlowControls<T>) -> Result<Trajectory<T>, FlowError> {
    let n = field.dim();
    if x0.len() != n {
        return Err(FlowError::InvalidStart(format!("start has dimension {}, field has {n}", x0.len())));
    }
    if !field.domain().contains(x0) {
        return Err(FlowError::InvalidStart("start lies outside the domain box".into()));
    }
    let f0 = field.value(x0);
    if !f0.is_finite() {
        return Err(FlowError::InvalidStart("f is not finite at the start".into()));
    }
    let sys = System { field, clock: run.clock, sign: run.sign, n };
    let floor = c.gradient_floor * field.domain().diameter();
    let mut y: Vec<T> = x0.to_vec();
    y.push(T::zero());
    y.push(T::zero());
    let g0 = field.tangent_norm(x0, &field.gradient(x0));
    let mut samples = vec![make_sample(T::zero(), &y, n, f0, f0, run.sign, g0)];
    let finish = |samples: Vec<Sample<T>>, termination: Termination| {
        let limit_point = (termination == Termination::ReachedZeroLocus).then(|| samples[samples.len() - 1].point.clone());
        Ok(Trajectory { clock: run.clock, samples, termination, limit_point, f0, descending: run.sign > T::zero() })
    };
    if let Some(fs) = run.f_stop {
        if f0 <= fs {
            return finish(samples, Termination::ReachedZeroLocus);
        }
    }
    if run.s_end.is_some_and(|e| e <= T::zero()) {
        return finish(samples, Termination::ReachedLevel);
    }
    if !(g0 > floor) {
        return finish(samples, Termination::GradientVanished);
    }
    let mut k1 = match sys.rhs(&y) {
        Some(k) => k,
        None => return finish(samples, Termination::GradientVanished),
    };
    let speed = linalg::norm(&k1.dy[..n]);
    let mut h = (field.domain().diameter() * lit(1e-3)).min(c.max_step) / speed;
    if run.clock == Clock::Level {
        h = h.min(f0.abs().max(run.s_end.unwrap_or(T::zero())) * lit(1e-2));
    }
    if !(h > T::zero()) {
        h = c.max_step;
    }
    let mut s = T::zero();
    let mut err_prev = T::one();
    let mut steps = 0usize;
    let level_target = |s: T| f0 - run.sign * s;
    while steps < c.max_steps {
        steps += 1;
        let mut clipped = false;
        if let Some(e) = run.s_end {
            if e - s <= h {
                h = e - s;
                clipped = true;
            }
        }
        let tiny = lit::<T>(1e-15) * (T::one() + s.abs());
        if h <= tiny {
            if clipped {
                let term = if run.f_stop.is_some() { Termination::ReachedZeroLocus } else { Termination::ReachedLevel };
                return finish(samples, term);
            }
            return finish(samples, Termination::StepLimit);
        }
        let attempt = sys.step(&y, &k1, h, c);
        let (mut y_new, mut k_new, err) = match attempt {
            Some(t) if t.2.is_finite() => t,
            _ => {
                h = h * lit(0.25);
                continue;
            }
        };
        if err > T::one() {
            let fac = (lit::<T>(0.9) * err.powf(lit(-0.2))).max(lit(0.2));
            h = h * fac;
            continue;
        }
        let f_cur = samples[samples.len() - 1].f;
        if run.sign * (field.value(&y_new[..n]) - f_cur) > T::zero() {
            // overshoot across a kink
            h = h * lit(0.5);
            continue;
        }
        let mut h_used = h;
        let mut termination = None;
        if !field.domain().contains(&y_new[..n]) {
            // largest sub-step that stays inside
            let (mut lo, mut hi) = (T::zero(), h);
            let mut best: Option<(Vec<T>, Eval<T>)> = None;
            for _ in 0..40 {
                let mid = (lo + hi) * lit(0.5);
                match sys.step(&y, &k1, mid, c) {
                    Some((ym, km, _)) if field.domain().contains(&ym[..n]) => {
                        lo = mid;
                        best = Some((ym, km));
                    }
                    _ => hi = mid,
                }
            }
            match best {
                Some((ym, km)) => {
                    y_new = ym;
                    k_new = km;
                    h_used = lo;
                }
                None => return finish(samples, Termination::LeftDomain),
            }
            termination = Some(Termination::LeftDomain);
        }
        let s_new = s + h_used;
        if run.clock == Clock::Level {
            let mut x = y_new[..n].to_vec();
            project_to_level(field, &mut x, level_target(s_new));
            if x[..] != y_new[..n] {
                y_new[..n].copy_from_slice(&x);
                match sys.rhs(&y_new) {
                    Some(k) => k_new = k,
                    None => {
                        let f_new = field.value(&y_new[..n]);
                        samples.push(make_sample(s_new, &y_new, n, f_new, f0, run.sign, T::zero()));
                        return finish(samples, Termination::GradientVanished);
                    }
                }
            }
        }
        let mut f_new = field.value(&y_new[..n]);
        if let Some(fs) = run.f_stop {
            if f_new < fs && !(run.clock == Clock::Level && clipped) {
                // locate the crossing of f_stop by bisecting the step size
                let (mut lo, mut hi) = (T::zero(), h_used);
                let mut found = (y_new.clone(), f_new, h_used, None);
                for _ in 0..80 {
                    let mid = (lo + hi) * lit(0.5);
                    if let Some((ym, km, _)) = sys.step(&y, &k1, mid, c) {
                        let fm = field.value(&ym[..n]);
                        if fm < fs {
                            hi = mid;
                            found = (ym, fm, mid, Some(km));
                        } else {
                            lo = mid;
                        }
                        if (fm - fs).abs() <= fs * lit(1e-6) && fm <= fs {
                            break;
                        }
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= tiny {
                        break;
                    }
                }
                let (ym, fm, hm, km) = found;
                y_new = ym;
                f_new = fm;
                let gn = km.map(|k| k.grad_norm).unwrap_or(T::zero());
                samples.push(make_sample(s + hm, &y_new, n, f_new, f0, run.sign, gn));
                return finish(samples, Termination::ReachedZeroLocus);
            }
        }
        s = s_new;
        y = y_new;
        k1 = k_new;
        samples.push(make_sample(s, &y, n, f_new, f0, run.sign, k1.grad_norm));
        if let Some(t) = termination {
            return finish(samples, t);
        }
        if clipped {
            let term = if run.f_stop.is_some() { Termination::ReachedZeroLocus } else { Termination::ReachedLevel };
            return finish(samples, term);
        }
        if run.f_stop.is_some_and(|fs| f_new <= fs) {
            return finish(samples, Termination::ReachedZeroLocus);
        }
        if !(k1.grad_norm > floor) {
            return finish(samples, Termination::GradientVanished);
        }
        // PI controller
        let e = err.max(lit(1e-10));
        let fac = lit::<T>(0.9) * e.powf(lit(-0.7 / 5.0)) * err_prev.powf(lit(0.4 / 5.0));
        err_prev = e;
        h = (h * fac.max(lit(0.2)).min(lit(5.0))).min(c.max_step / linalg::norm(&k1.dy[..n]));
    }
    finish(samples, Termination::StepLimit)
}

/// Integrates the descending flow from `x0` until `f < f_stop`, the box is
/// left, the gradient falls below the floor, or the step budget runs out.
pub fn integrate<T: Real>(
    field: &ScalarField<T>,
    x0: &[T],
    clock: Clock,
    controls: &FlowControls<T>,
) -> Result<Trajectory<T>, FlowError> {
    let f0 = field.value(x0);
    let s_end = (clock == Clock::Level).then(|| f0 - controls.f_stop);
    run(field, x0, Run { clock, s_end, f_stop: Some(controls.f_stop), sign: T::one() }, controls)
}

/// Follows the level clock from `x0` to the level `target`, descending or
/// ascending as needed. Ends with `ReachedLevel` on success.
pub fn flow_to_level<T: Real>(
    field: &ScalarField<T>,
    x0: &[T],
    target: T,
    controls: &FlowControls<T>,
) -> Result<Trajectory<T>, FlowError> {
    let f0 = field.value(x0);
    let sign = if target <= f0 { T::one() } else { -T::one() };
    let s_end = (f0 - target).abs();
    run(field, x0, Run { clock: Clock::Level, s_end: Some(s_end), f_stop: None, sign }, controls)
}

/// Integrates many starts in parallel; output order matches `starts`.
pub fn integrate_batch<T: Real>(
    field: &ScalarField<T>,
    starts: &[Vec<T>],
    clock: Clock,
    controls: &FlowControls<T>,
) -> Vec<Result<Trajectory<T>, FlowError>> {
    use rayon::prelude::*;
    starts.par_iter().map(|x0| integrate(field, x0, clock, controls)).collect()
}

pub(crate) fn point_f64<T: Real>(x: &[T]) -> Vec<f64> {
    x.iter().map(|&v| to_f64(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{zoo_entry, DomainSpec, PointFn, VectorFn};
    use std::sync::Arc;

    fn square_1d() -> ScalarField<f64> {
        let f: PointFn<f64> = Arc::new(|x: &[f64]| x[0] * x[0]);
        let g: VectorFn<f64> = Arc::new(|x: &[f64]| vec![2.0 * x[0]]);
        ScalarField::new("x^2", DomainSpec::new(&[-2.0], &[2.0]).unwrap(), f, g)
    }

    #[test]
    fn time_clock_matches_exponential_decay() {
        let field = square_1d();
        let t = integrate(&field, &[1.0], Clock::Time, &FlowControls::default()).unwrap();
        assert_eq!(t.termination, Termination::ReachedZeroLocus);
        let x1 = t.convert_param(Clock::Time, 1.0, Clock::Time).unwrap();
        assert_eq!(x1, 1.0);
        // interpolate position at time 1 through the level column: f = x^2
        let lvl = t.convert_param(Clock::Time, 1.0, Clock::Level).unwrap();
        let x = (1.0 - lvl).sqrt();
        assert!((x - (-2.0f64).exp()).abs() < 1e-6, "{x}");
    }

    #[test]
    fn level_clock_is_exact() {
        let field = square_1d();
        let c = FlowControls::default();
        let t = integrate(&field, &[1.0], Clock::Level, &c).unwrap();
        assert_eq!(t.termination, Termination::ReachedZeroLocus);
        assert!((t.omega_plus() - (1.0 - c.f_stop)).abs() < 1e-14);
        assert!((t.last().f - c.f_stop).abs() < 1e-15);
        assert!(t.level_defect() <= 1e-8);
    }

    #[test]
    fn disk_flow_lands_on_circle() {
        let e = zoo_entry::<f64>("disk").unwrap();
        let t = integrate(&e.field, &[2.0, 0.0], Clock::Level, &FlowControls::default()).unwrap();
        let lp = t.limit_point.unwrap();
        assert!((lp[0] - 1.0).abs() < 2e-5 && lp[1].abs() < 1e-12);
    }

    #[test]
    fn ascending_to_a_level() {
        let e = zoo_entry::<f64>("disk").unwrap();
        let t = flow_to_level(&e.field, &[1.1, 0.0], 0.25, &FlowControls::default()).unwrap();
        assert_eq!(t.termination, Termination::ReachedLevel);
        assert!((t.end()[0] - 1.5).abs() < 1e-9);
        assert!(t.level_defect() < 1e-12);
    }

    #[test]
    fn round_trip_reparametrization() {
        let field = square_1d();
        let t = integrate(&field, &[1.0], Clock::Time, &FlowControls::default()).unwrap();
        let back = reparametrize_clock(&reparametrize_clock(&t, Clock::Level).unwrap(), Clock::Time).unwrap();
        for (a, b) in t.samples.iter().zip(&back.samples) {
            assert!((a.s - b.s).abs() <= 1e-12);
        }
    }
}
